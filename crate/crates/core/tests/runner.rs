use std::fs;
use std::path::Path;

use dimer_floquet::meanfield::{stroboscopic_map, ClassicalState};
use dimer_floquet::model::ModelParams;
use dimer_floquet::propagation::fingerprint;
use dimer_floquet::runner::{
    calibrate_omega, execute, run_command, scan_executor, sha256_hex, CalibrationSettings, Command, RunConfig,
};
use serde_json::Value;
use tempfile::TempDir;

fn config(dir: &Path, n: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.model.n = n;
    cfg.output_dir = dir.join("out");
    cfg.cache_dir = Some(dir.join("cache"));
    cfg
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap()
}

fn manifest(dir: &Path, command: &str) -> Value {
    serde_json::from_str(&read(&dir.join(format!("{command}.manifest.json")))).unwrap()
}

#[test]
fn spectrum_has_one_row_per_rapidity_and_a_consistent_manifest() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), 10);
    execute(Command::Spectrum, &cfg).unwrap();
    let csv = read(&cfg.output_dir.join("spectrum.csv"));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("re,im,abs"));
    assert_eq!(lines.count(), 121);

    let m = manifest(&cfg.output_dir, "spectrum");
    assert_eq!(m["cache"]["misses"], 1);
    assert_eq!(m["cache"]["hits"], 0);
    assert!(m["wall_seconds"].as_f64().unwrap() > 0.0);
    for a in m["artifacts"].as_array().unwrap() {
        let bytes = fs::read(cfg.output_dir.join(a["path"].as_str().unwrap())).unwrap();
        assert_eq!(a["sha256"].as_str().unwrap(), sha256_hex(&bytes));
    }

    // The echoed config alone reproduces the run, now from the cache.
    let mut echo: RunConfig = serde_json::from_value(m["config"].clone()).unwrap();
    echo.output_dir = tmp.path().join("rerun");
    execute(Command::Spectrum, &echo).unwrap();
    assert_eq!(read(&echo.output_dir.join("spectrum.csv")), csv);
    assert_eq!(manifest(&echo.output_dir, "spectrum")["cache"]["hits"], 1);
}

#[test]
fn correlate_writes_one_row_per_lag() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = config(tmp.path(), 4);
    cfg.scan.m_max = 200;
    execute(Command::Correlate, &cfg).unwrap();
    let csv = read(&cfg.output_dir.join("correlation.csv"));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("m,re,im,asymptote"));
    let lags: Vec<usize> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(lags, (0..=200).collect::<Vec<_>>());
}

#[test]
fn quantum_bifurcation_populations_sum_to_one() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = config(tmp.path(), 6);
    cfg.scan.un_grid = vec![0.0, 0.2, 0.4];
    execute(Command::BifurcationQuantum, &cfg).unwrap();
    let csv = read(&cfg.output_dir.join("bifurcation_quantum.csv"));
    let mut sums = std::collections::BTreeMap::<String, (f64, usize)>::new();
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let e = sums.entry(f[0].to_string()).or_default();
        e.0 += f[2].parse::<f64>().unwrap();
        e.1 += 1;
    }
    assert_eq!(sums.len(), 3);
    for (un, (total, rows)) in sums {
        assert_eq!(rows, 7, "U = {un}");
        assert!((total - 1.0).abs() < 1e-8, "U = {un}: {total}");
    }
}

#[test]
fn classical_scan_bytes_do_not_depend_on_parallelism() {
    let tmp = TempDir::new().unwrap();
    let run = |parallelism: usize| {
        let mut cfg = config(tmp.path(), 10);
        cfg.output_dir = tmp.path().join(format!("p{parallelism}"));
        cfg.parallelism = parallelism;
        cfg.scan.un_grid = vec![0.0, 0.2, 0.35];
        cfg.scan.ic_grid = (3, 2);
        cfg.scan.m_transient = 100;
        cfg.scan.m_record = 10;
        execute(Command::BifurcationClassical, &cfg).unwrap();
        ["bifurcation_classical.csv", "clusters.csv"].map(|f| fs::read(cfg.output_dir.join(f)).unwrap())
    };
    let a = run(1);
    assert_eq!(a, run(4));
    assert_eq!(a, run(1));
    let clusters = String::from_utf8(a[1].clone()).unwrap();
    assert_eq!(clusters.lines().next(), Some("U,n_clusters,center_1,center_2,max_diameter"));
    assert_eq!(clusters.lines().count(), 1 + 3 * 6);
}

#[test]
fn poisoned_item_is_isolated() {
    let base = ModelParams::<f64>::reference(1);
    let items = [0.1, f64::NAN, 0.2, 0.3];
    let outcome = scan_executor(&items, 2, |&un| {
        let p = base.with_un(un)?;
        stroboscopic_map(ClassicalState::new(2.0, -3.0), &p, 20, 4)
    })
    .unwrap();
    assert_eq!(outcome.failures.len(), 1);
    assert_eq!(outcome.failures[0].index, 1);
    assert!(outcome.failures[0].message.contains("finite"));
    assert_eq!(outcome.successes().map(|(i, _)| i).collect::<Vec<_>>(), vec![0, 2, 3]);

    let empty: [f64; 0] = [];
    let outcome = scan_executor(&empty, 2, |&un| base.with_un(un)).unwrap();
    assert!(outcome.results.is_empty() && outcome.failures.is_empty());
}

#[test]
fn stale_or_corrupt_cache_entries_are_rebuilt() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), 3);
    execute(Command::Spectrum, &cfg).unwrap();
    let entry = cfg.cache_dir.as_ref().unwrap().join(format!("{}.flqm", fingerprint(&cfg.params().unwrap(), &cfg.step)));
    assert!(entry.exists());
    let good = fs::read(&entry).unwrap();

    execute(Command::Spectrum, &cfg).unwrap();
    assert_eq!(manifest(&cfg.output_dir, "spectrum")["cache"]["hits"], 1);

    let mut bad = good.clone();
    bad.truncate(bad.len() / 2);
    fs::write(&entry, &bad).unwrap();
    execute(Command::Spectrum, &cfg).unwrap();
    let m = manifest(&cfg.output_dir, "spectrum");
    assert_eq!(m["cache"]["misses"], 1);
    assert_eq!(m["cache_rejected"].as_array().unwrap().len(), 1);
    assert_eq!(fs::read(&entry).unwrap(), good);
}

#[test]
fn calibration_reports_the_period_two_window() {
    let base = ModelParams::<f64>::reference(1);
    let settings = CalibrationSettings {
        seeds: vec![ClassicalState::new(2.0, -3.0), ClassicalState::new(1.0, 1.0)],
        m_transient: 300,
        m_record: 16,
        steps_per_period: 2000,
        tol_diameter: 1e-3,
        tol_separation: 1e-1,
        parallelism: 2,
    };
    let result = calibrate_omega(&base, &[0.9, 0.95, 1.0, 1.05], &settings).unwrap();
    assert_eq!(result.omega_windows, vec![(1.0, 1.0)]);
    assert_eq!(result.omega_chosen, 1.0);
    let again = calibrate_omega(&base, &[0.9, 0.95, 1.0, 1.05], &settings).unwrap();
    assert_eq!(again, result);

    let err = calibrate_omega(&base, &[0.9, 0.95], &settings).unwrap_err().to_string();
    let rows: Vec<&str> = err.lines().filter(|l| l.starts_with('9')).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.contains(",FixedPoint,1,")), "{err}");
}

#[test]
fn invalid_configurations_are_rejected() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = config(tmp.path(), 2);
    cfg.parallelism = 0;
    assert!(execute(Command::Spectrum, &cfg).is_err());
    let mut cfg = config(tmp.path(), 2);
    cfg.scan.un_grid.clear();
    assert!(execute(Command::Spectrum, &cfg).is_err());
    let mut cfg = config(tmp.path(), 2);
    fs::write(tmp.path().join("file"), b"").unwrap();
    cfg.output_dir = tmp.path().join("file").join("out");
    assert!(execute(Command::Spectrum, &cfg).is_err());
}

#[test]
fn command_line_entry_point() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("cli");
    let cache = tmp.path().join("env-cache");
    let args = |extra: &[&str]| {
        let mut v = vec!["dimer".to_string()];
        v.extend(extra.iter().map(|s| s.to_string()));
        v
    };
    std::env::set_var("DIMER_CACHE_DIR", &cache);
    let status = run_command(args(&[
        "spectrum",
        "--set",
        "model.n=2",
        "--set",
        &format!("output_dir={}", out.display()),
    ]));
    std::env::remove_var("DIMER_CACHE_DIR");
    assert_eq!(status, 0);
    assert_eq!(read(&out.join("spectrum.csv")).lines().count(), 10);
    assert_eq!(fs::read_dir(&cache).unwrap().count(), 1);

    let cfg_path = tmp.path().join("cfg.json");
    fs::write(&cfg_path, format!(r#"{{"model": {{"n": 2}}, "output_dir": "{}"}}"#, out.display())).unwrap();
    assert_eq!(run_command(args(&["steady-state", "--config", cfg_path.to_str().unwrap()])), 0);
    assert!(out.join("steady-state.manifest.json").exists());

    assert_ne!(run_command(args(&["no-such-command"])), 0);
    assert_ne!(run_command(args(&["spectrum", "--set", "model.nope=1"])), 0);
    fs::write(&cfg_path, "{ not json").unwrap();
    assert_ne!(run_command(args(&["spectrum", "--config", cfg_path.to_str().unwrap()])), 0);
}
