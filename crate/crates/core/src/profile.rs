//! Load and generation time series.

use std::f64::consts::PI;
use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::GridError;
use crate::grid::Scenario;
use crate::lattice;

pub const BUNDLED_PROFILE_CSV: &str = include_str!("../data/profile_8h.csv");

/// Steps per compressed day: 15-minute resolution.
const STEPS_PER_DAY: usize = 96;

/// Scaling factors per time step, already rounded down to the 5% lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSeries {
    pub timestep_s: f64,
    pub load: Vec<f64>,
    pub pv: Vec<f64>,
    pub wind: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    t: f64,
    load: f64,
    pv: f64,
    wind: f64,
}

impl ProfileSeries {
    /// Build from raw factors in [0, 1], rounding each down to the lattice.
    pub fn from_raw(timestep_s: f64, load: &[f64], pv: &[f64], wind: &[f64]) -> Result<Self, GridError> {
        if load.is_empty() {
            return Err(GridError::Profile("profile has no rows".into()));
        }
        if pv.len() != load.len() || wind.len() != load.len() {
            return Err(GridError::Profile("columns differ in length".into()));
        }
        if !(timestep_s > 0.0) {
            return Err(GridError::Profile(format!("timestep {timestep_s} s is not positive")));
        }
        let quantize = |name: &str, xs: &[f64]| -> Result<Vec<f64>, GridError> {
            xs.iter()
                .enumerate()
                .map(|(i, &x)| {
                    if (0.0..=1.0).contains(&x) {
                        Ok(lattice::floor_fraction(x))
                    } else {
                        Err(GridError::Profile(format!("{name} value {x} at row {} outside [0, 1]", i + 1)))
                    }
                })
                .collect()
        };
        Ok(Self {
            timestep_s,
            load: quantize("load", load)?,
            pv: quantize("pv", pv)?,
            wind: quantize("wind", wind)?,
        })
    }

    pub fn len(&self) -> usize {
        self.load.len()
    }

    pub fn is_empty(&self) -> bool {
        self.load.is_empty()
    }

    pub fn scenario(&self, step: usize) -> Scenario {
        Scenario::new(self.load[step], self.pv[step], self.wind[step]).expect("profile values lie on the lattice")
    }

    pub fn parse_csv(reader: impl Read) -> Result<Self, GridError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| GridError::Profile(e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t", "load", "pv", "wind"] {
            return Err(GridError::Profile(format!("expected header t,load,pv,wind, got {}", headers.iter().collect::<Vec<_>>().join(","))));
        }
        let mut t = Vec::new();
        let (mut load, mut pv, mut wind) = (Vec::new(), Vec::new(), Vec::new());
        for (i, rec) in rdr.deserialize::<Row>().enumerate() {
            let row = rec.map_err(|e| GridError::Profile(format!("row {}: {e}", i + 1)))?;
            t.push(row.t);
            load.push(row.load);
            pv.push(row.pv);
            wind.push(row.wind);
        }
        if t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GridError::Profile("time column is not strictly increasing".into()));
        }
        let timestep = if t.len() > 1 { t[1] - t[0] } else { 30.0 };
        Self::from_raw(timestep, &load, &pv, &wind)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for i in 0..self.len() {
            w.serialize(Row {
                t: i as f64 * self.timestep_s,
                load: self.load[i],
                pv: self.pv[i],
                wind: self.wind[i],
            })
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }

    /// Take the first `steps` rows.
    pub fn truncated(&self, steps: usize) -> Self {
        let n = steps.min(self.len());
        Self {
            timestep_s: self.timestep_s,
            load: self.load[..n].to_vec(),
            pv: self.pv[..n].to_vec(),
            wind: self.wind[..n].to_vec(),
        }
    }
}

/// Read a `t,load,pv,wind` CSV. Values are rounded down to the 5% lattice.
pub fn load_profiles(path: impl AsRef<Path>) -> Result<ProfileSeries, GridError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| GridError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ProfileSeries::parse_csv(file)
}

/// The bundled eight-hour profile.
pub fn bundled_profile() -> ProfileSeries {
    ProfileSeries::parse_csv(BUNDLED_PROFILE_CSV.as_bytes()).expect("bundled profile is valid")
}

/// Ten days at 15-minute resolution replayed at `timestep_s` per step:
/// a sinusoidal PV envelope under slowly drifting cloud cover, wind that
/// ramps between levels held for a few hours, and a load with morning and
/// evening peaks. Sunny, windy, lightly loaded middays push voltages up;
/// calm evenings with peak load pull them down.
pub fn synthetic_profile(seed: u64, timestep_s: f64) -> ProfileSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let days = 10;
    let n = days * STEPS_PER_DAY;
    let mut load = Vec::with_capacity(n);
    let mut pv = Vec::with_capacity(n);
    let mut wind = Vec::with_capacity(n);

    // AR(1) cloud attenuation around a per-day clear-sky level
    let mut cloud: f64 = 0.9;
    let mut wind_now: f64 = 0.5;
    let mut wind_target: f64 = 0.5;
    let mut plateau_left = 0;
    for day in 0..days {
        let clear_sky: f64 = rng.gen_range(0.55..1.0);
        let load_scale: f64 = rng.gen_range(0.75..1.0);
        for s in 0..STEPS_PER_DAY {
            let hour = s as f64 * 24.0 / STEPS_PER_DAY as f64;

            let sun = if (6.0..20.0).contains(&hour) { (PI * (hour - 6.0) / 14.0).sin() } else { 0.0 };
            cloud = (0.9 + 0.85 * (cloud - 0.9) + rng.gen_range(-0.04..0.04f64)).clamp(0.6, 1.0);
            pv.push((sun * clear_sky * cloud).clamp(0.0, 1.0));

            if plateau_left == 0 {
                wind_target = rng.gen_range(0.0..1.0f64).powf(0.8);
                plateau_left = rng.gen_range(8..28);
            }
            plateau_left -= 1;
            wind_now += (wind_target - wind_now).clamp(-0.04, 0.04);
            let gust: f64 = rng.gen_range(-0.02..0.02);
            wind.push((wind_now + gust).clamp(0.0, 1.0));

            let morning = (-(hour - 8.0).powi(2) / 4.0).exp();
            let evening = (-(hour - 19.0).powi(2) / 5.0).exp();
            let night_dip = if day % 7 >= 5 { 0.85 } else { 1.0 };
            let base = 0.25 + 0.45 * morning + 0.75 * evening;
            let noise: f64 = rng.gen_range(-0.015..0.015);
            load.push((base * load_scale * night_dip + noise).clamp(0.0, 1.0));
        }
    }
    ProfileSeries::from_raw(timestep_s, &load, &pv, &wind).expect("generated factors lie in [0, 1]")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds_down_to_lattice() {
        let p = ProfileSeries::parse_csv("t,load,pv,wind\n0,0.47,0.82,0.13\n30,1,0,0.15\n".as_bytes()).unwrap();
        assert_eq!((p.load[0], p.pv[0], p.wind[0]), (0.45, 0.80, 0.10));
        assert_eq!((p.load[1], p.pv[1], p.wind[1]), (1.0, 0.0, 0.15));
        assert_eq!(p.timestep_s, 30.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ProfileSeries::parse_csv("t,load,pv,wind\n".as_bytes()).is_err());
        assert!(ProfileSeries::parse_csv("".as_bytes()).is_err());
        assert!(ProfileSeries::parse_csv("t,load,pv,wind\n0,1.2,0,0\n".as_bytes()).is_err());
        assert!(ProfileSeries::parse_csv("t,load,pv,wind\n0,-0.1,0,0\n".as_bytes()).is_err());
        assert!(ProfileSeries::parse_csv("t,load,pv,wind\n0,0.1,0\n".as_bytes()).is_err());
        assert!(ProfileSeries::parse_csv("t,load,pv\n0,0.1,0\n".as_bytes()).is_err());
    }

    #[test]
    fn bundled_profile_is_eight_hours_at_thirty_seconds() {
        let p = bundled_profile();
        assert_eq!(p.len(), 960);
        assert_eq!(p.timestep_s, 30.0);
        assert_eq!(p.len() as f64 * p.timestep_s, 8.0 * 3600.0);
    }

    #[test]
    fn bundled_profile_matches_generator() {
        assert_eq!(bundled_profile(), synthetic_profile(42, 30.0));
    }

    #[test]
    fn csv_round_trip() {
        let p = synthetic_profile(7, 30.0).truncated(50);
        assert_eq!(ProfileSeries::parse_csv(p.to_csv().as_bytes()).unwrap(), p);
    }
}
