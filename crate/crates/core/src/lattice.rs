//! The 5% scaling lattice shared by scenarios, profiles and operating points.

/// Number of admissible values per scaling factor (0%, 5%, …, 100%).
pub const LATTICE_POINTS: usize = 21;

const STEPS: f64 = 20.0;
const EPS: f64 = 1e-9;

/// Lattice value for index `i` (0..=20) as a fraction in [0, 1].
pub fn value(i: usize) -> f64 {
    i as f64 / STEPS
}

/// Lattice value for index `i` in percent.
pub fn percent(i: usize) -> f64 {
    (i * 5) as f64
}

/// Index of a fraction that lies on the lattice, `None` otherwise.
pub fn index_of(fraction: f64) -> Option<usize> {
    if !fraction.is_finite() || !(-EPS..=1.0 + EPS).contains(&fraction) {
        return None;
    }
    let scaled = fraction * STEPS;
    let rounded = scaled.round();
    ((scaled - rounded).abs() <= 1e-6).then_some(rounded as usize)
}

/// Index of a percentage on the lattice, `None` otherwise.
pub fn index_of_percent(pct: f64) -> Option<usize> {
    index_of(pct / 100.0)
}

/// Round a fraction in [0, 1] down to the lattice.
pub fn floor_fraction(fraction: f64) -> f64 {
    value(floor_index(fraction))
}

/// Lattice index of `fraction` rounded down, clamped to 0..=20.
pub fn floor_index(fraction: f64) -> usize {
    let scaled = (fraction * STEPS + EPS).floor();
    scaled.clamp(0.0, STEPS) as usize
}

/// Round a percentage down to the nearest 5% step.
pub fn floor_percent(pct: f64) -> f64 {
    let steps = (pct / 5.0 + EPS).floor().max(0.0);
    steps * 5.0
}

/// Round a percentage to the nearest 5% step.
pub fn round_percent(pct: f64) -> f64 {
    (pct / 5.0).round() * 5.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_examples() {
        assert_eq!(floor_fraction(0.47), 0.45);
        assert_eq!(floor_fraction(0.82), 0.80);
        assert_eq!(floor_fraction(0.13), 0.10);
        assert_eq!(floor_fraction(0.15), 0.15);
        assert_eq!(floor_fraction(1.0), 1.0);
        assert_eq!(floor_percent(73.0), 70.0);
        assert_eq!(floor_percent(49.5), 45.0);
        assert_eq!(floor_percent(0.0), 0.0);
    }

    #[test]
    fn index_round_trip() {
        for i in 0..LATTICE_POINTS {
            assert_eq!(index_of(value(i)), Some(i));
            assert_eq!(index_of_percent(percent(i)), Some(i));
        }
        assert_eq!(index_of(0.33), None);
        assert_eq!(index_of(1.05), None);
        assert_eq!(index_of(-0.05), None);
    }
}
