//! Monte Carlo ensembles of conditioned trajectories.
//!
//! Trajectory `i` draws its noise from stream `i` of the master seed, the
//! per-trajectory results are collected in index order and every reduction
//! runs in that fixed order, so statistics are bit-identical for any number
//! of worker threads.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::Operators;
use crate::scalar::{lit, to_f64, Real};
use crate::sme::{Engine, FailureReason, SimParams, TrajectoryRecord};

/// Final fidelity to `|n*>` counted as a success.
pub const SUCCESS_FIDELITY: f64 = 0.99;
/// Final photon-number variance below which a trajectory counts as collapsed.
pub const COLLAPSE_VARIANCE: f64 = 1e-3;
/// Sample size below which monotonicity reports are flagged as underpowered.
pub const MONOTONICITY_MIN_SAMPLE: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec<T> {
    pub base: SimParams<T>,
    pub n_traj: usize,
    pub master_seed: u64,
    pub kappa_sweep: Option<Vec<T>>,
    /// Recording stride; overrides `base.record_stride`.
    pub decimation: usize,
}

impl<T: Real> EnsembleSpec<T> {
    /// `n_traj` trajectories of `base`, seeded by `base.seed`.
    pub fn new(base: SimParams<T>, n_traj: usize) -> Self {
        Self {
            master_seed: base.seed,
            decimation: base.record_stride,
            base,
            n_traj,
            kappa_sweep: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_traj == 0 {
            return Err(Error::InvalidEnsemble("n_traj must be >= 1".into()));
        }
        if self.decimation == 0 {
            return Err(Error::InvalidEnsemble("decimation must be >= 1".into()));
        }
        if let Some(sweep) = &self.kappa_sweep {
            if sweep.iter().any(|&k| !(k >= T::zero()) || !to_f64(k).is_finite()) {
                return Err(Error::InvalidEnsemble("kappa sweep values must be finite and >= 0".into()));
            }
        }
        self.params().validate()
    }

    fn params(&self) -> SimParams<T> {
        let mut p = self.base.clone();
        p.record_stride = self.decimation;
        p.seed = self.master_seed;
        p
    }
}

/// End state of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryOutcome {
    pub index: usize,
    pub valid: bool,
    pub final_mean: f64,
    pub final_variance: f64,
    pub final_fidelity: f64,
    pub final_distance: f64,
    /// Nearest number state when the trajectory collapsed.
    pub collapsed_to: Option<usize>,
    pub failure: Option<FailureReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats<T> {
    pub times: Vec<T>,
    /// Mean distance over valid trajectories.
    pub mean_distance: Vec<T>,
    pub se_distance: Vec<T>,
    pub mean_n: Vec<T>,
    pub se_n: Vec<T>,
    /// Fraction of all trajectories collapsed onto each number state.
    pub outcome_histogram: BTreeMap<usize, f64>,
    pub outcome_counts: BTreeMap<usize, usize>,
    /// Fraction of all trajectories (invalid ones count as failures) ending
    /// with fidelity to `|n*>` of at least [`SUCCESS_FIDELITY`].
    pub success_rate: f64,
    pub n_traj: usize,
    pub n_invalid: usize,
    pub outcomes: Vec<TrajectoryOutcome>,
}

impl<T: Real> EnsembleStats<T> {
    pub fn n_valid(&self) -> usize {
        self.n_traj - self.n_invalid
    }

    pub fn terminal_distance(&self) -> (T, T) {
        let k = self.times.len() - 1;
        (self.mean_distance[k], self.se_distance[k])
    }

    /// Mean final photon-number variance over valid trajectories.
    pub fn mean_final_variance(&self) -> f64 {
        let v: Vec<f64> = self.outcomes.iter().filter(|o| o.valid).map(|o| o.final_variance).collect();
        pairwise_sum(&v) / v.len() as f64
    }
}

struct Summary<T: Real> {
    outcome: TrajectoryOutcome,
    times: Vec<T>,
    distance: Vec<T>,
    n_est: Vec<T>,
}

fn summarize<T: Real>(index: usize, n_star: usize, rec: TrajectoryRecord<T>) -> Summary<T> {
    let variance = to_f64(rec.final_variance());
    let mean = to_f64(rec.final_mean());
    let collapsed_to = (rec.valid && variance < COLLAPSE_VARIANCE).then(|| mean.round().max(0.0) as usize);
    Summary {
        outcome: TrajectoryOutcome {
            index,
            valid: rec.valid,
            final_mean: mean,
            final_variance: variance,
            final_fidelity: rec.final_fidelity(n_star).map(to_f64).unwrap_or(0.0),
            final_distance: rec.distance.last().copied().map(to_f64).unwrap_or(f64::NAN),
            collapsed_to,
            failure: rec.failure.map(|f| f.reason),
        },
        times: rec.times,
        distance: rec.distance,
        n_est: rec.n_est,
    }
}

/// Sum in a fixed binary tree, independent of how the inputs were produced.
pub fn pairwise_sum<T: Real>(xs: &[T]) -> T {
    match xs.len() {
        0 => T::zero(),
        1 => xs[0],
        n if n <= 8 => xs.iter().fold(T::zero(), |a, &b| a + b),
        n => {
            let (l, r) = xs.split_at(n / 2);
            pairwise_sum(l) + pairwise_sum(r)
        }
    }
}

fn mean_and_se<T: Real>(xs: &[T]) -> (T, T) {
    let n = xs.len();
    let mean = pairwise_sum(xs) / lit(n as f64);
    if n < 2 {
        return (mean, T::zero());
    }
    let dev: Vec<T> = xs.iter().map(|&x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / lit((n - 1) as f64);
    (mean, (var / lit(n as f64)).sqrt())
}

fn simulate_all<T: Real>(engine: &Engine<T>, spec: &EnsembleSpec<T>) -> Result<Vec<Summary<T>>> {
    let n_star = spec.base.n_star;
    (0..spec.n_traj)
        .into_par_iter()
        .map(|i| engine.run_seeded(spec.master_seed, i as u64).map(|rec| summarize(i, n_star, rec)))
        .collect()
}

fn aggregate<T: Real>(spec: &EnsembleSpec<T>, summaries: Vec<Summary<T>>) -> Result<EnsembleStats<T>> {
    let n_traj = summaries.len();
    let valid: Vec<&Summary<T>> = summaries.iter().filter(|s| s.outcome.valid).collect();
    if valid.is_empty() {
        return Err(Error::AllTrajectoriesInvalid(n_traj));
    }
    let times = valid[0].times.clone();
    let steps = times.len();
    let mut mean_distance = Vec::with_capacity(steps);
    let mut se_distance = Vec::with_capacity(steps);
    let mut mean_n = Vec::with_capacity(steps);
    let mut se_n = Vec::with_capacity(steps);
    let mut column = Vec::with_capacity(valid.len());
    for k in 0..steps {
        column.clear();
        column.extend(valid.iter().map(|s| s.distance[k]));
        let (m, se) = mean_and_se(&column);
        mean_distance.push(m);
        se_distance.push(se);
        column.clear();
        column.extend(valid.iter().map(|s| s.n_est[k]));
        let (m, se) = mean_and_se(&column);
        mean_n.push(m);
        se_n.push(se);
    }
    let mut outcome_counts = BTreeMap::new();
    for s in &summaries {
        if let Some(m) = s.outcome.collapsed_to {
            *outcome_counts.entry(m).or_insert(0usize) += 1;
        }
    }
    let outcome_histogram = outcome_counts
        .iter()
        .map(|(&m, &c)| (m, c as f64 / n_traj as f64))
        .collect();
    let successes = summaries
        .iter()
        .filter(|s| s.outcome.valid && s.outcome.final_fidelity >= SUCCESS_FIDELITY)
        .count();
    let n_invalid = n_traj - valid.len();
    if n_invalid > 0 {
        log::warn!("{n_invalid} of {n_traj} trajectories invalidated (kappa = {})", spec.base.kappa);
    }
    Ok(EnsembleStats {
        times,
        mean_distance,
        se_distance,
        mean_n,
        se_n,
        outcome_histogram,
        outcome_counts,
        success_rate: successes as f64 / n_traj as f64,
        n_traj,
        n_invalid,
        outcomes: summaries.into_iter().map(|s| s.outcome).collect(),
    })
}

fn run_with_operators<T: Real>(spec: &EnsembleSpec<T>, ops: Option<Arc<Operators<T>>>) -> Result<EnsembleStats<T>> {
    spec.validate()?;
    let params = spec.params();
    let engine = match ops {
        Some(ops) => Engine::with_operators(params, ops)?,
        None => Engine::new(params)?,
    };
    let summaries = simulate_all(&engine, spec)?;
    aggregate(spec, summaries)
}

/// Runs `spec.n_traj` trajectories on the current rayon pool.
pub fn run_ensemble<T: Real>(spec: &EnsembleSpec<T>) -> Result<EnsembleStats<T>> {
    run_with_operators(spec, None)
}

/// Runs the ensemble on a dedicated pool of `workers` threads.
pub fn run_ensemble_with_workers<T: Real>(spec: &EnsembleSpec<T>, workers: usize) -> Result<EnsembleStats<T>> {
    with_pool(workers, || run_ensemble(spec))
}

/// Runs `f` inside a rayon pool of `workers` threads (`0` = rayon default).
pub fn with_pool<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool construction");
    pool.install(f)
}

/// One ensemble per entry of `spec.kappa_sweep`, all with the same master
/// seed so that each trajectory index sees the same noise at every `kappa`.
pub fn kappa_sweep<T: Real>(spec: &EnsembleSpec<T>) -> Result<Vec<(T, EnsembleStats<T>)>> {
    let sweep = match &spec.kappa_sweep {
        Some(s) if !s.is_empty() => s.clone(),
        _ => return Err(Error::InvalidEnsemble("kappa sweep is empty".into())),
    };
    let ops = Arc::new(Operators::new(spec.base.hilbert));
    sweep
        .into_iter()
        .map(|kappa| {
            let mut single = spec.clone();
            single.kappa_sweep = None;
            single.base.kappa = kappa;
            run_with_operators(&single, Some(ops.clone())).map(|s| (kappa, s))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub passed: bool,
    /// Recorded steps `k` where `E[D](t_k) - E[D](t_{k-1}) > 2 se(t_k)`.
    pub violations: Vec<usize>,
    /// Largest increase in units of the standard error.
    pub max_excess: f64,
    /// Whether the ensemble had at least [`MONOTONICITY_MIN_SAMPLE`] valid
    /// trajectories; smaller samples are reported, not rejected.
    pub adequate_sample: bool,
}

/// Flags each recorded step where the mean distance rises by more than two
/// standard errors.
pub fn monotonicity_report<T: Real>(stats: &EnsembleStats<T>) -> MonotonicityReport {
    monotonicity_of(&stats.mean_distance, &stats.se_distance, stats.n_valid())
}

/// [`monotonicity_report`] on bare series.
pub fn monotonicity_of<T: Real>(mean: &[T], se: &[T], sample_size: usize) -> MonotonicityReport {
    let mut violations = Vec::new();
    let mut max_excess = f64::NEG_INFINITY;
    for k in 1..mean.len() {
        let rise = to_f64(mean[k] - mean[k - 1]);
        let band = 2.0 * to_f64(se[k]);
        if rise > band {
            violations.push(k);
        }
        let s = to_f64(se[k]);
        let excess = if s > 0.0 { rise / s } else if rise > 0.0 { f64::INFINITY } else { 0.0 };
        max_excess = max_excess.max(excess);
    }
    if mean.len() < 2 {
        max_excess = 0.0;
    }
    MonotonicityReport {
        passed: violations.is_empty(),
        violations,
        max_excess,
        adequate_sample: sample_size >= MONOTONICITY_MIN_SAMPLE,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sme::simulate_trajectory;

    fn short(n_traj: usize) -> EnsembleSpec<f64> {
        let mut p = SimParams::new(1.0, 20.0, 2);
        p.t_final = 0.3;
        p.seed = 9;
        let mut spec = EnsembleSpec::new(p, n_traj);
        spec.decimation = 10;
        spec
    }

    #[test]
    fn single_trajectory_matches_direct_run() {
        let spec = short(1);
        let stats = run_ensemble(&spec).unwrap();
        let mut p = spec.base.clone();
        p.record_stride = spec.decimation;
        let rec = simulate_trajectory(&p).unwrap();
        assert_eq!(stats.mean_distance, rec.distance);
        assert_eq!(stats.mean_n, rec.n_est);
        assert_eq!(stats.times, rec.times);
        assert!(stats.se_distance.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let spec = short(12);
        let one = run_ensemble_with_workers(&spec, 1).unwrap();
        let three = run_ensemble_with_workers(&spec, 3).unwrap();
        assert_eq!(one, three);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = short(0);
        assert!(run_ensemble(&spec).is_err());
        spec.n_traj = 2;
        spec.kappa_sweep = Some(vec![]);
        assert!(kappa_sweep(&spec).is_err());
        spec.kappa_sweep = Some(vec![-1.0]);
        assert!(kappa_sweep(&spec).is_err());
    }

    #[test]
    fn single_kappa_sweep_is_a_plain_run() {
        let mut spec = short(3);
        spec.kappa_sweep = Some(vec![0.0]);
        let sweep = kappa_sweep(&spec).unwrap();
        spec.kappa_sweep = None;
        assert_eq!(sweep.len(), 1);
        assert_eq!(sweep[0].1, run_ensemble(&spec).unwrap());
    }

    #[test]
    fn monotonicity_examples() {
        let zeros = vec![0.0f64; 20];
        assert!(monotonicity_of(&zeros, &zeros, 1000).passed);
        let rising: Vec<f64> = (0..20).map(|k| k as f64).collect();
        let se = vec![0.01f64; 20];
        let r = monotonicity_of(&rising, &se, 1000);
        assert!(!r.passed);
        assert_eq!(r.violations, (1..20).collect::<Vec<_>>());
        assert!(!monotonicity_of(&zeros, &zeros, 10).adequate_sample);
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let xs: Vec<f64> = (0..1000).map(|k| k as f64).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
    }
}
