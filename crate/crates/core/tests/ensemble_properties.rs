use photonfb::ensemble::*;
use photonfb::sme::*;

fn spec(n_traj: usize, t_final: f64) -> EnsembleSpec<f64> {
    let mut p = SimParams::new(1.0, 20.0, 2);
    p.t_final = t_final;
    p.seed = 17;
    let mut s = EnsembleSpec::new(p, n_traj);
    s.decimation = 20;
    s
}

#[test]
fn results_are_bit_identical_across_worker_counts() {
    let s = spec(24, 1.0);
    let one = run_ensemble_with_workers(&s, 1).unwrap();
    let two = run_ensemble_with_workers(&s, 2).unwrap();
    let five = run_ensemble_with_workers(&s, 5).unwrap();
    assert_eq!(one, two);
    assert_eq!(one, five);
}

#[test]
fn trajectory_i_uses_stream_i() {
    let s = spec(4, 0.5);
    let stats = run_ensemble(&s).unwrap();
    let mut p = s.base.clone();
    p.record_stride = s.decimation;
    let engine = Engine::new(p).unwrap();
    for i in 0..4 {
        let rec = engine.run_stream(i).unwrap();
        let o = &stats.outcomes[i as usize];
        assert_eq!(o.final_mean, rec.final_mean());
        assert_eq!(o.final_variance, rec.final_variance());
    }
}

#[test]
fn summary_statistics_are_consistent() {
    let s = spec(16, 2.0);
    let stats = run_ensemble(&s).unwrap();
    let total: f64 = stats.outcome_histogram.values().sum();
    assert!(total <= 1.0 + 1e-12);
    assert!(stats.mean_distance.iter().all(|&d| (0.0..=1.0).contains(&d)));
    assert!(stats.se_distance.iter().all(|&s| s >= 0.0));
    assert_eq!(stats.times.len(), stats.mean_n.len());
    let succ = stats.outcomes.iter().filter(|o| o.valid && o.final_fidelity >= SUCCESS_FIDELITY).count();
    assert_eq!(stats.success_rate, succ as f64 / 16.0);
    assert_eq!(stats.n_traj, 16);
}

#[test]
fn open_loop_mean_photon_number_stays_put() {
    let mut p = SimParams::new(1.0, 0.0, 2);
    p.feedback_enabled = false;
    p.initial_state = InitialState::coherent(2f64.sqrt(), 0.0);
    p.hilbert = photonfb::fock::HilbertConfig::new(20).unwrap();
    p.t_final = 2.0;
    let mut s = EnsembleSpec::new(p, 200);
    s.decimation = 100;
    let stats = run_ensemble(&s).unwrap();
    assert_eq!(stats.n_invalid, 0);
    for (m, se) in stats.mean_n.iter().zip(&stats.se_n) {
        assert!((m - 2.0).abs() <= 3.0 * se.max(1e-9), "{m} +- {se}");
    }
}

#[test]
fn all_invalid_is_an_error() {
    let mut p = SimParams::new(1.0, 0.0, 0);
    p.feedback_enabled = false;
    p.hilbert = photonfb::fock::HilbertConfig::new(10).unwrap();
    p.initial_state = InitialState::coherent(2.5, 0.0);
    p.t_final = 0.01;
    let s = EnsembleSpec::new(p, 3);
    assert!(matches!(run_ensemble(&s), Err(photonfb::Error::AllTrajectoriesInvalid(3))));
}
