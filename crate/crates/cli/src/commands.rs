use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use log::info;
use serde_json::Value;

use gridfall::grid::{apply_scenario, benchmark_grid, load_grid, GridModel, Scenario};
use gridfall::opf::{run_sweep, CostParams, OpfOptions};
use gridfall::powerflow::{solve_pf, Dispatch};
use gridfall::regression::{train_from_sweep, LearnerKind, RegressionModel, RegressionModelSet};
use gridfall::sim::{
    compare_cases, decisions_csv, model_file_name, retraining_experiment, run_simulation, steps_csv, ControlCase, RunOutput,
    SimConfig, SimSetup,
};

use crate::failure::{config_err, Failure};
use crate::{GlobalOpts, LearnerArg};

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| anyhow!("override `{key}`: `{}` is not an object", parts[..i].join(".")))?;
        let slot = obj.get_mut(*part).ok_or_else(|| anyhow!("override `{key}`: unknown key `{part}`"))?;
        if i + 1 == parts.len() {
            *slot = value;
            return Ok(());
        }
        node = slot;
    }
    unreachable!("split yields at least one part")
}

fn apply_overrides(cfg: SimConfig, overrides: &[String]) -> Result<SimConfig> {
    if overrides.is_empty() {
        return Ok(cfg);
    }
    let mut root = serde_json::to_value(&cfg)?;
    for ov in overrides {
        let (key, raw) = ov.split_once('=').ok_or_else(|| anyhow!("override `{ov}` is not key=value"))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(&mut root, key.trim(), value)?;
    }
    serde_json::from_value(root).map_err(|e| anyhow!("overrides do not form a valid config: {e}"))
}

/// Config file (or defaults) with every command-line override applied.
pub fn load_config(g: &GlobalOpts) -> Result<SimConfig> {
    let cfg = match &g.config {
        Some(path) => SimConfig::load(path).map_err(config_err)?,
        None => SimConfig::default(),
    };
    let mut cfg = apply_overrides(cfg, &g.overrides).context(Failure::Config)?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(l) = g.learner {
        cfg.learner.kind = match l {
            LearnerArg::Linear => LearnerKind::Linear,
            LearnerArg::Piecewise => LearnerKind::Piecewise,
            LearnerArg::Auto => LearnerKind::Auto,
            LearnerArg::Nnr => LearnerKind::Nnr,
        };
    }
    if let Some(db) = g.deadband_eval {
        cfg.eval_cost.deadband_pu = db;
    }
    cfg.validate().map_err(config_err)?;
    Ok(cfg)
}

fn grid_of(cfg: &SimConfig) -> Result<GridModel> {
    match &cfg.grid {
        Some(p) => load_grid(p).map_err(config_err),
        None => Ok(benchmark_grid()),
    }
}

fn setup_of(cfg: SimConfig) -> Result<SimSetup> {
    SimSetup::from_config(cfg).map_err(config_err)
}

fn parse_case(s: &str) -> Result<ControlCase> {
    if let Ok(n) = s.parse::<usize>() {
        return ControlCase::from_number(n).ok_or_else(|| anyhow!("no case {n}; cases are 1-4").context(Failure::Config));
    }
    serde_json::from_value(Value::String(s.replace('-', "_")))
        .map_err(|_| anyhow!("unknown case `{s}`").context(Failure::Config))
}

fn require_models(setup: &SimSetup, case: ControlCase) -> Result<()> {
    if case.uses_models() && setup.models.is_empty() {
        return Err(anyhow!(
            "case {} needs model files: run `gridfall train` first and pass `--models <out>/models` (or set models_dir)",
            case.number()
        )
        .context(Failure::Config));
    }
    Ok(())
}

fn write_run(dir: &Path, setup: &SimSetup, run: &RunOutput) -> Result<()> {
    let bus_ids: Vec<usize> = setup.grid.buses.iter().map(|b| b.id).collect();
    let der_ids = setup.grid.controllable();
    let mut report = run.report.clone();
    report.step_records = Some("steps.csv".into());
    write(&dir.join("report.json"), report.to_json())?;
    write(&dir.join("steps.csv"), steps_csv(&run.steps, &bus_ids, &der_ids)?)?;
    write(&dir.join("decisions.csv"), decisions_csv(&run.decisions)?)?;
    Ok(())
}

fn write_models(dir: &Path, sets: &[RegressionModelSet]) -> Result<()> {
    for set in sets {
        write(&dir.join(model_file_name(set.der_id)), set.to_json())?;
    }
    Ok(())
}

pub fn train(g: &GlobalOpts, max_failed_fraction: f64) -> Result<()> {
    let cfg = load_config(g)?;
    let grid = grid_of(&cfg)?;
    if grid.controllable().is_empty() {
        bail!(anyhow!("grid has no controllable DER").context(Failure::Config));
    }
    let started = Instant::now();
    let sweep = run_sweep(&grid, &cfg.opf_cost, &OpfOptions::default());
    let report = sweep.report();
    eprintln!("sweep: {} OPF solves in {:.1} s", report.scenarios, started.elapsed().as_secs_f64());
    write(&g.out.join("sweep_report.json"), serde_json::to_string_pretty(&report)?)?;
    let failed_fraction = report.failed as f64 / report.scenarios as f64;
    if failed_fraction > max_failed_fraction {
        return Err(anyhow!(
            "{} of {} scenarios did not converge ({:.2}% > {:.2}%)",
            report.failed,
            report.scenarios,
            100.0 * failed_fraction,
            100.0 * max_failed_fraction
        )
        .context(Failure::Sweep));
    }

    let trained = train_from_sweep(&grid, &sweep, &cfg.learner, cfg.bucket_capacity)?;
    let sets: Vec<RegressionModelSet> = trained.into_iter().map(|(s, _)| s).collect();
    write_models(&g.out.join("models"), &sets)?;
    for der in grid.controllable() {
        let path = g.out.join("training").join(format!("der_{der}.csv"));
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        sweep.write_training_csv(&grid, der, &path)?;
    }
    println!(
        "{} scenarios, {} converged, {} failed; {} model files with {} models each in {}",
        report.scenarios,
        report.converged,
        report.failed,
        sets.len(),
        sets.first().map_or(0, |s| s.models.len()),
        g.out.join("models").display()
    );
    Ok(())
}

pub fn simulate(g: &GlobalOpts, case: Option<&str>, models: Option<PathBuf>) -> Result<()> {
    let mut cfg = load_config(g)?;
    if let Some(c) = case {
        cfg.case = parse_case(c)?;
    }
    if models.is_some() {
        cfg.models_dir = models;
    }
    let case = cfg.case;
    let setup = setup_of(cfg)?;
    require_models(&setup, case)?;
    let run = run_simulation(&setup, case)?;
    write_run(&g.out, &setup, &run)?;
    println!("case {} ({}): mean cost {:.6}", case.number(), case.label(), run.report.mean_cost);
    Ok(())
}

pub fn compare(g: &GlobalOpts, cases: &[usize], models: Option<PathBuf>) -> Result<()> {
    let mut cfg = load_config(g)?;
    if models.is_some() {
        cfg.models_dir = models;
    }
    let cases: Vec<ControlCase> = cases
        .iter()
        .map(|&n| ControlCase::from_number(n).ok_or_else(|| anyhow!("no case {n}; cases are 1-4").context(Failure::Config)))
        .collect::<Result<_>>()?;
    if cfg.failure_windows.is_empty() && cases.iter().any(|c| c.sees_failures()) {
        eprintln!("warning: no failure windows configured, the fallback controllers are never exercised");
    }
    let setup = setup_of(cfg)?;
    for &c in &cases {
        require_models(&setup, c)?;
    }
    let (table, outs) = compare_cases(&setup, &cases)?;
    for out in &outs {
        write_run(&g.out.join(format!("case_{}", out.report.case_number)), &setup, out)?;
    }
    write(&g.out.join("comparison.csv"), table.to_csv()?)?;
    let text = table.to_text();
    write(&g.out.join("comparison.txt"), &text)?;
    print!("{text}");
    Ok(())
}

pub fn retrain_experiment(g: &GlobalOpts, c_p: f64, c_q: f64) -> Result<()> {
    let cfg = load_config(g)?;
    let new_params = CostParams { c_p, c_q, ..cfg.opf_cost };
    if !(c_p > 0.0 && c_q > 0.0) {
        bail!(anyhow!("cost weights must be positive").context(Failure::Config));
    }
    let setup = setup_of(SimConfig {
        models_dir: None,
        ..cfg.clone()
    })?;
    let started = Instant::now();
    let sweep = run_sweep(&setup.grid, &cfg.opf_cost, &OpfOptions::default());
    info!("initial sweep in {:.1} s", started.elapsed().as_secs_f64());
    let (models, buckets): (Vec<_>, Vec<_>) = train_from_sweep(&setup.grid, &sweep, &cfg.learner, cfg.bucket_capacity)?.into_iter().unzip();
    write_models(&g.out.join("initial_models"), &models)?;
    let setup = setup.with_models(models).with_buckets(buckets);

    let outcome = retraining_experiment(&setup, new_params)?;
    write_models(&g.out.join("retrained_models"), &outcome.retrained)?;
    for (name, run) in ["a", "b", "c"].iter().zip(&outcome.runs) {
        write_run(&g.out.join(format!("run_{name}")), &setup, run)?;
    }
    write(&g.out.join("retraining.csv"), outcome.table.to_csv()?)?;
    let text = outcome.table.to_text();
    write(&g.out.join("retraining.txt"), &text)?;
    print!("{text}");
    let (gb, gc) = outcome.gaps_pct();
    println!("gap to central OPF: stale {gb:.2}%, retrained {gc:.2}%");
    Ok(())
}

fn curve(model: &RegressionModel) -> Vec<(f64, f64)> {
    match model {
        RegressionModel::Nnr(table) => table.iter().map(|c| (c[0], c[1])).collect(),
        _ => (0..=40)
            .map(|i| {
                let v = 0.9 + 0.005 * i as f64;
                (v, model.evaluate(v))
            })
            .collect(),
    }
}

pub fn export_models(g: &GlobalOpts, models: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(g)?;
    let dir = models.or(cfg.models_dir.clone()).unwrap_or_else(|| g.out.join("models"));
    let grid = grid_of(&cfg)?;
    for der in grid.controllable() {
        let path = dir.join(model_file_name(der));
        let set = RegressionModelSet::load(&path).map_err(config_err)?;
        let mut text = String::from("channel,op_pct,kind,v_pu,value\n");
        for m in &set.models {
            for (v, y) in curve(&m.model) {
                text.push_str(&format!("{},{},{},{v},{y}\n", m.channel.as_char(), m.op_pct, m.model.kind_name()));
            }
        }
        let out = g.out.join("export").join(format!("der_{der}_models.csv"));
        write(&out, text)?;
        println!("DER {der}: {} models (version {}) -> {}", set.models.len(), set.version, out.display());
    }
    Ok(())
}

pub fn validate_grid(g: &GlobalOpts, grid: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(g)?;
    let grid = match grid {
        Some(p) => load_grid(&p).map_err(config_err)?,
        None => grid_of(&cfg)?,
    };
    grid.validate().map_err(config_err)?;
    println!(
        "{} buses, {} branches, {} DERs ({} controllable), base {} MVA",
        grid.buses.len(),
        grid.branches.len(),
        grid.ders.len(),
        grid.controllable().len(),
        grid.s_base_mva
    );
    for (label, s) in [
        ("full load, no generation", Scenario::from_indices(20, 0, 0)),
        ("no load, full generation", Scenario::from_indices(0, 20, 20)),
    ] {
        let scaled = apply_scenario(&grid, s);
        let pf = solve_pf(&scaled, &Dispatch::unity_pf(&scaled), 1e-10, 30);
        let lo = pf.v_pu.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = pf.v_pu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        println!(
            "{label}: {} in {} iterations, V in [{lo:.4}, {hi:.4}] pu",
            if pf.converged { "converged" } else { "NOT converged" },
            pf.iterations
        );
    }
    Ok(())
}
