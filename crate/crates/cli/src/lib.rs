//! Workflows behind the `photonfb` binary.
//!
//! Exit codes: 0 success, 2 configuration or I/O error, 3 invalidated
//! trajectory (or an ensemble with no valid trajectory).

pub mod config;
pub mod output;
pub mod units;

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Result};
use photonfb::cavity::feasibility;
use photonfb::ensemble::{kappa_sweep, monotonicity_report, run_ensemble, with_pool, EnsembleSpec, EnsembleStats};
use photonfb::fock::{DensityMatrix, HilbertConfig};
use photonfb::qfunc::{q_function, DistanceWeights, GridSpec};
use photonfb::sme::{simulate_trajectory, TrajectoryRecord};
use serde_json::json;

use config::ScenarioConfig;
use output::{num, print_key_values, write_atomic, write_csv, write_json, write_key_values};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INVALID: i32 = 3;

/// Environment variable selecting the ensemble worker count.
pub const WORKERS_ENV: &str = "PHOTONFB_WORKERS";

pub const TRAJECTORY_HEADER: [&str; 6] = ["t", "dy", "n_est", "n_var", "distance", "drive"];

/// A workflow failure carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn config(error: impl Into<anyhow::Error>) -> Self {
        Self { code: EXIT_CONFIG, error: error.into() }
    }

    pub fn invalid(error: impl Into<anyhow::Error>) -> Self {
        Self { code: EXIT_INVALID, error: error.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Self::config(error)
    }
}

fn library_failure(e: photonfb::Error) -> Failure {
    match e {
        photonfb::Error::AllTrajectoriesInvalid(_) => Failure::invalid(e),
        other => Failure::config(other),
    }
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub n_traj: Option<usize>,
}

fn load(path: &Path) -> Result<ScenarioConfig, Failure> {
    ScenarioConfig::load(path).map_err(|e| Failure::config(anyhow!(e)))
}

fn out_dir(cfg: &ScenarioConfig, o: &Overrides) -> PathBuf {
    o.output_dir.clone().unwrap_or_else(|| cfg.output_dir())
}

fn grid_spec(cfg: &ScenarioConfig, n_max: usize) -> GridSpec {
    let spec = GridSpec::for_truncation(n_max);
    match cfg.output.q_grid_points {
        Some(p) => spec.with_points(p),
        None => spec,
    }
}

pub fn trajectory_rows(rec: &TrajectoryRecord<f64>) -> impl Iterator<Item = Vec<String>> + '_ {
    (0..rec.len()).map(|k| {
        vec![
            num(rec.times[k]),
            num(rec.dy[k]),
            num(rec.n_est[k]),
            num(rec.n_var[k]),
            num(rec.distance[k]),
            num(rec.drive[k]),
        ]
    })
}

fn write_q(path: &Path, rho: &DensityMatrix<f64>, spec: GridSpec) -> Result<()> {
    let grid = q_function(rho, spec)?;
    write_atomic(path, |w| Ok(grid.write_text(w)?))
}

/// Single trajectory: `trajectory.csv`, `summary.txt`, `summary.json` and
/// one Q-function file per snapshot time.
pub fn cmd_simulate(config: &Path, o: &Overrides) -> Result<(), Failure> {
    let cfg = load(config)?;
    let mut params = cfg.sim_params().map_err(|e| Failure::config(anyhow!(e)))?;
    if let Some(seed) = o.seed {
        params.seed = seed;
    }
    let dir = out_dir(&cfg, o);
    let rec = simulate_trajectory(&params).map_err(library_failure)?;
    write_csv(&dir.join("trajectory.csv"), &TRAJECTORY_HEADER, trajectory_rows(&rec))?;

    let spec = grid_spec(&cfg, params.hilbert.n_max());
    let mut snapshot_files = Vec::new();
    for (i, (t, rho)) in rec.snapshots.iter().enumerate() {
        let name = format!("q_snapshot_{i}_t{t:.4}.txt");
        write_q(&dir.join(&name), rho, spec)?;
        snapshot_files.push(name);
    }
    output::write_atomic(&dir.join("plot.py"), |w| {
        use std::io::Write;
        Ok(w.write_all(output::PLOT_SCRIPT.as_bytes())?)
    })?;

    let fidelity = rec.final_fidelity(params.n_star).map_err(Failure::config)?;
    let distance = *rec.distance.last().expect("record has a first row");
    let mut pairs = vec![
        ("valid".to_string(), rec.valid.to_string()),
        ("seed".to_string(), params.seed.to_string()),
        ("n_star".to_string(), params.n_star.to_string()),
        ("final_time".to_string(), num(rec.final_time)),
        ("final_fidelity".to_string(), num(fidelity)),
        ("final_distance".to_string(), num(distance)),
        ("final_mean_n".to_string(), num(rec.final_mean())),
        ("final_var_n".to_string(), num(rec.final_variance())),
        ("snapshots".to_string(), snapshot_files.len().to_string()),
    ];
    if let Some(f) = &rec.failure {
        pairs.push(("failure".to_string(), format!("step {} (t = {}): {}", f.step, f.time, f.reason)));
    }
    write_key_values(&dir.join("summary.txt"), &pairs)?;
    write_json(
        &dir.join("summary.json"),
        &json!({
            "valid": rec.valid,
            "seed": params.seed,
            "n_star": params.n_star,
            "final_time": rec.final_time,
            "final_fidelity": fidelity,
            "final_distance": distance,
            "final_mean_n": rec.final_mean(),
            "final_var_n": rec.final_variance(),
            "snapshots": snapshot_files,
            "failure": rec.failure,
            "params": params,
        }),
    )?;
    print_key_values(&pairs);
    if !rec.valid {
        let f = rec.failure.expect("invalid records carry a failure");
        return Err(Failure::invalid(anyhow!("trajectory invalidated at step {}: {}", f.step, f.reason)));
    }
    Ok(())
}

fn workers() -> Result<usize, Failure> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::config(anyhow!("{WORKERS_ENV} must be a non-negative integer, got \"{v}\""))),
        Err(_) => Ok(0),
    }
}

fn write_ensemble(dir: &Path, stats: &EnsembleStats<f64>) -> Result<Vec<(String, String)>> {
    let rows = (0..stats.times.len()).map(|k| {
        vec![
            num(stats.times[k]),
            num(stats.mean_distance[k]),
            num(stats.se_distance[k]),
            num(stats.mean_n[k]),
            num(stats.se_n[k]),
        ]
    });
    write_csv(
        &dir.join("mean_distance.csv"),
        &["t", "mean_distance", "se_distance", "mean_n", "se_n"],
        rows,
    )?;
    let outcome_rows = stats.outcomes.iter().map(|o| {
        vec![
            o.index.to_string(),
            o.valid.to_string(),
            num(o.final_mean),
            num(o.final_variance),
            num(o.final_fidelity),
            num(o.final_distance),
            o.collapsed_to.map(|m| m.to_string()).unwrap_or_default(),
        ]
    });
    write_csv(
        &dir.join("outcomes.csv"),
        &["index", "valid", "final_mean", "final_variance", "final_fidelity", "final_distance", "collapsed_to"],
        outcome_rows,
    )?;
    let hist_rows = stats
        .outcome_counts
        .iter()
        .map(|(m, c)| vec![m.to_string(), c.to_string(), num(stats.outcome_histogram[m])]);
    write_csv(&dir.join("histogram.csv"), &["n", "count", "frequency"], hist_rows)?;

    let mono = monotonicity_report(stats);
    let (d, se) = stats.terminal_distance();
    let pairs = vec![
        ("n_traj".to_string(), stats.n_traj.to_string()),
        ("n_invalid".to_string(), stats.n_invalid.to_string()),
        ("success_rate".to_string(), num(stats.success_rate)),
        ("terminal_mean_distance".to_string(), num(d)),
        ("terminal_se_distance".to_string(), num(se)),
        ("monotone".to_string(), mono.passed.to_string()),
        ("monotonicity_violations".to_string(), mono.violations.len().to_string()),
        ("monotonicity_adequate_sample".to_string(), mono.adequate_sample.to_string()),
    ];
    write_key_values(&dir.join("summary.txt"), &pairs)?;
    write_json(
        &dir.join("summary.json"),
        &json!({
            "n_traj": stats.n_traj,
            "n_invalid": stats.n_invalid,
            "success_rate": stats.success_rate,
            "terminal_mean_distance": d,
            "terminal_se_distance": se,
            "outcome_histogram": stats.outcome_histogram,
            "monotonicity": mono,
        }),
    )?;
    Ok(pairs)
}

/// Ensemble statistics, or one set per `kappa` when the scenario has a sweep.
pub fn cmd_ensemble(config: &Path, o: &Overrides) -> Result<(), Failure> {
    let cfg = load(config)?;
    let mut spec: EnsembleSpec<f64> = cfg.ensemble_spec().map_err(|e| Failure::config(anyhow!(e)))?;
    if let Some(seed) = o.seed {
        spec.master_seed = seed;
    }
    if let Some(n) = o.n_traj {
        spec.n_traj = n;
    }
    let dir = out_dir(&cfg, o);
    let workers = workers()?;
    match spec.kappa_sweep.clone() {
        Some(_) => {
            let sweep = with_pool(workers, || kappa_sweep(&spec)).map_err(library_failure)?;
            let mut rows = Vec::new();
            for (i, (kappa, stats)) in sweep.iter().enumerate() {
                let sub = dir.join(format!("kappa_{i}"));
                println!("[kappa = {kappa}]");
                print_key_values(&write_ensemble(&sub, stats)?);
                let (d, se) = stats.terminal_distance();
                rows.push(vec![
                    num(*kappa),
                    num(d),
                    num(se),
                    num(stats.success_rate),
                    stats.n_invalid.to_string(),
                ]);
            }
            write_csv(
                &dir.join("sweep.csv"),
                &["kappa", "terminal_mean_distance", "terminal_se_distance", "success_rate", "n_invalid"],
                rows,
            )?;
        }
        None => {
            let stats = with_pool(workers, || run_ensemble(&spec)).map_err(library_failure)?;
            print_key_values(&write_ensemble(&dir, &stats)?);
        }
    }
    output::write_atomic(&dir.join("plot.py"), |w| {
        use std::io::Write;
        Ok(w.write_all(output::PLOT_SCRIPT.as_bytes())?)
    })?;
    Ok(())
}

/// Measurement strength and feasibility figures from the `[qed]` section.
pub fn cmd_feasibility(config: &Path, o: &Overrides) -> Result<(), Failure> {
    let cfg = load(config)?;
    let qed = cfg.qed_params().map_err(|e| Failure::config(anyhow!(e)))?;
    let report = feasibility(&qed).map_err(Failure::config)?;
    let pairs = report.to_key_values();
    print_key_values(&pairs);
    let dir = out_dir(&cfg, o);
    write_key_values(&dir.join("feasibility.txt"), &pairs)?;
    write_json(&dir.join("feasibility.json"), &serde_json::to_value(&report).map_err(anyhow::Error::from)?)?;
    Ok(())
}

/// Q-function grid of a named state.
pub fn cmd_qfunc(
    state: &str,
    n_max: Option<usize>,
    points: Option<usize>,
    n_star: Option<usize>,
    out: &Path,
) -> Result<(), Failure> {
    let initial = config::parse_state(state).map_err(|e| Failure::config(anyhow!(e)))?;
    let n_max = n_max.unwrap_or(20);
    let cfg = HilbertConfig::new(n_max).map_err(Failure::config)?;
    let rho = initial.build(cfg).map_err(Failure::config)?;
    let mut spec = GridSpec::for_truncation(n_max);
    if let Some(p) = points {
        spec = spec.with_points(p);
    }
    let grid = q_function(&rho, spec).map_err(Failure::config)?;
    write_atomic(out, |w| Ok(grid.write_text(w)?))?;
    let (x, y) = grid.argmax();
    let mut pairs = vec![
        ("file".to_string(), out.display().to_string()),
        ("normalization".to_string(), num(grid.normalization())),
        ("q_origin".to_string(), num(photonfb::qfunc::q_value(&rho, num_complex::Complex::new(0.0, 0.0)))),
        ("argmax".to_string(), format!("{},{}", num(x), num(y))),
    ];
    if let Some(n) = n_star {
        let d = DistanceWeights::<f64>::new(n, rho.dim()).distance(&rho);
        pairs.push(("distance".to_string(), num(d)));
    }
    print_key_values(&pairs);
    Ok(())
}
