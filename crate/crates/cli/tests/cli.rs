use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use photonfb::qfunc::QGrid;
use photonfb_cli::config::ScenarioConfig;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn photonfb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_photonfb"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn key_values(stdout: &[u8]) -> Vec<(String, String)> {
    String::from_utf8_lossy(stdout)
        .lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

fn lookup(pairs: &[(String, String)], key: &str) -> f64 {
    pairs
        .iter()
        .find(|(k, _)| k == key)
        .unwrap_or_else(|| panic!("missing {key}"))
        .1
        .parse()
        .unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn column(rows: &[Vec<String>], k: usize) -> Vec<f64> {
    rows.iter().map(|r| r[k].parse().unwrap()).collect()
}

fn assert_no_partials(dir: &Path) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let name = entry.unwrap().file_name();
        assert!(!name.to_string_lossy().ends_with(".partial"), "{name:?}");
    }
}

#[test]
fn bundled_scenarios_parse() {
    for name in ["fig2.scenario", "table1.scenario", "kappa_sweep.scenario", "born_rule.scenario", "decay.scenario"] {
        ScenarioConfig::load(&scenario(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn simulate_writes_trajectory_summary_and_five_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let out = photonfb(&["simulate", scenario("fig2.scenario").to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("trajectory.csv"));
    assert_eq!(header.join(","), "t,dy,n_est,n_var,distance,drive");
    assert_eq!(rows.len(), 1001);
    let snaps: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("q_snapshot_"))
        .collect();
    assert_eq!(snaps.len(), 5);
    let kv = key_values(&out.stdout);
    assert!(lookup(&kv, "final_fidelity") >= 0.0);
    assert!(dir.path().join("summary.json").exists());
    assert!(dir.path().join("plot.py").exists());
    assert_no_partials(dir.path());

    // the written values parse back to the library's numbers exactly
    let cfg = ScenarioConfig::load(&scenario("fig2.scenario")).unwrap();
    let rec = photonfb::sme::simulate_trajectory(&cfg.sim_params().unwrap()).unwrap();
    assert_eq!(column(&rows, 0), rec.times);
    assert_eq!(column(&rows, 1), rec.dy);
    assert_eq!(column(&rows, 2), rec.n_est);
    assert_eq!(column(&rows, 4), rec.distance);
    assert_eq!(column(&rows, 5), rec.drive);
    let first = std::fs::read_to_string(dir.path().join(snaps.iter().min().unwrap())).unwrap();
    let grid = QGrid::<f64>::parse_text(&first).unwrap();
    assert_eq!(grid.values.nrows(), 201);
}

#[test]
fn seed_override_changes_the_photocurrent_not_the_header() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = scenario("fig2.scenario");
    for (dir, seed) in [(&a, "1"), (&b, "2")] {
        let out = photonfb(&["simulate", cfg.to_str().unwrap(), "--seed", seed, "-o", dir.path().to_str().unwrap()]);
        assert!(out.status.code() == Some(0) || out.status.code() == Some(3));
    }
    let (ha, ra) = read_csv(&a.path().join("trajectory.csv"));
    let (hb, rb) = read_csv(&b.path().join("trajectory.csv"));
    assert_eq!(ha, hb);
    assert_ne!(column(&ra[..50], 1), column(&rb[..50], 1));
}

#[test]
fn decay_scenario_follows_the_exponential() {
    let dir = tempfile::tempdir().unwrap();
    let out = photonfb(&["simulate", scenario("decay.scenario").to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let (_, rows) = read_csv(&dir.path().join("trajectory.csv"));
    for (t, n) in column(&rows, 0).into_iter().zip(column(&rows, 2)) {
        let exact = 4.0 * (-t).exp();
        assert!((n - exact).abs() <= 0.01 * exact, "t = {t}: {n} vs {exact}");
    }
}

#[test]
fn feasibility_reports_table_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = photonfb(&["feasibility", scenario("table1.scenario").to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let kv = key_values(&out.stdout);
    let m = lookup(&kv, "M");
    let ratio = lookup(&kv, "M_over_kappa");
    assert!(m > 1.25e6 && m < 5e6, "{m}");
    assert!(ratio > 100.0 && ratio < 400.0, "{ratio}");
    assert!(lookup(&kv, "M[all_ordinary]") > 0.0);
    assert!(lookup(&kv, "M[all_angular]") > 0.0);
    assert!(dir.path().join("feasibility.json").exists());
}

#[test]
fn vacuum_q_function_peaks_at_one_over_pi() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("vac.txt");
    let out = photonfb(&["qfunc", "--state", "vacuum", "--n-max", "10", "-o", file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let kv = key_values(&out.stdout);
    assert!((lookup(&kv, "q_origin") - std::f64::consts::FRAC_1_PI).abs() < 1e-15);
    let grid = QGrid::<f64>::parse_text(&std::fs::read_to_string(&file).unwrap()).unwrap();
    let c = grid.values.nrows() / 2;
    assert_eq!(grid.x_axis[c], 0.0);
    assert!((grid.values[(c, c)] - std::f64::consts::FRAC_1_PI).abs() < 1e-15);
}

#[test]
fn single_trajectory_ensemble_matches_simulate() {
    let sim = tempfile::tempdir().unwrap();
    let ens = tempfile::tempdir().unwrap();
    let cfg = scenario("fig2.scenario");
    let a = photonfb(&["simulate", cfg.to_str().unwrap(), "-o", sim.path().to_str().unwrap()]);
    assert_eq!(a.status.code(), Some(0));
    let b = photonfb(&["ensemble", cfg.to_str().unwrap(), "--n-traj", "1", "-o", ens.path().to_str().unwrap()]);
    assert_eq!(b.status.code(), Some(0), "{}", String::from_utf8_lossy(&b.stderr));
    let (_, traj) = read_csv(&sim.path().join("trajectory.csv"));
    let (header, mean) = read_csv(&ens.path().join("mean_distance.csv"));
    assert_eq!(header, ["t", "mean_distance", "se_distance", "mean_n", "se_n"]);
    let pick = |rows: &[Vec<String>], k: usize| rows.iter().map(|r| r[k].clone()).collect::<Vec<_>>();
    assert_eq!(pick(&traj, 0), pick(&mean, 0));
    assert_eq!(pick(&traj, 4), pick(&mean, 1));
    assert_eq!(pick(&traj, 2), pick(&mean, 3));
    assert_no_partials(ens.path());
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.scenario");
    let text = std::fs::read_to_string(scenario("decay.scenario")).unwrap();
    std::fs::write(&bad, format!("{text}\nunknown_key = 1\n")).unwrap();
    assert_eq!(photonfb(&["simulate", bad.to_str().unwrap()]).status.code(), Some(2));
    std::fs::write(&bad, text.replace("\"1 /t\"", "\"1\"")).unwrap();
    assert_eq!(photonfb(&["simulate", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(photonfb(&["simulate", "/nonexistent.scenario"]).status.code(), Some(2));
    assert_eq!(photonfb(&["qfunc", "--state", "squeezed"]).status.code(), Some(2));
}

#[test]
fn invalidated_trajectories_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("overflow.scenario");
    std::fs::write(
        &path,
        r#"
[simulation]
measurement_strength = "1 /t"
gain = 0.0
feedback = false
n_star = 0
n_max = 10
dt = "1e-3 t"
t_final = "0.01 t"
initial_state = "coherent:2.5"
"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = photonfb(&["simulate", path.to_str().unwrap(), "-o", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let kv = key_values(&out.stdout);
    assert!(kv.iter().any(|(k, v)| k == "valid" && v == "false"));
    // the partial record is still written in full
    assert!(out_dir.join("trajectory.csv").exists());
}
