//! Subcommands and the CLI entry point.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use super::calibrate::{calibrate_omega, CalibrationSettings};
use super::executor::{scan_executor, ItemFailure};
use super::{ArtifactWriter, Manifest, MapCache, RunConfig, RunnerError};
use crate::correlations::{doubling_diagnostics, two_time_sz, MIN_SERIES_LAGS};
use crate::meanfield::{
    classify_attractor, default_ic_grid, locate_period_two, stroboscopic_map_steps, write_clusters_csv,
    write_samples_csv, ClassicalState,
};
use crate::model::build_operators;
use crate::phase_space::{
    alternation_length, husimi, quantum_classical_trace, stroboscopic_coherent_evolution, time_crystal_checklist,
    write_sz_csv, CoherentState, NEIGHBOURHOOD_RADIUS,
};
use crate::spectral::{
    eig_floquet, slice_from_map, steady_state_checked, subdominant_mode, write_bifurcation_csv, write_spectrum_csv,
};

/// Exit status when some scan items failed but the rest were written.
pub const EXIT_PARTIAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "dimer", version, about = "Driven-dissipative Bose-Hubbard dimer simulator")]
pub struct Cli {
    /// JSON configuration file; missing keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set model.un=0.25`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Floquet rapidities of the one-period map.
    Spectrum,
    /// Periodic steady state and its Sz populations.
    SteadyState,
    /// Steady-state two-time Sz correlation.
    Correlate,
    /// Classical stroboscopic bifurcation scan over U·N.
    BifurcationClassical,
    /// Steady-state Sz populations over U·N.
    BifurcationQuantum,
    /// Husimi function of the periodic steady state.
    Husimi,
    /// Stroboscopic evolution of a coherent state with Husimi snapshots.
    EvolveCoherent,
    /// Period-doubling robustness checklist over seeds and U·N.
    Timecrystal,
    /// Search the drive-frequency grid for period-2 windows.
    CalibrateOmega,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::SteadyState => "steady-state",
            Command::Correlate => "correlate",
            Command::BifurcationClassical => "bifurcation-classical",
            Command::BifurcationQuantum => "bifurcation-quantum",
            Command::Husimi => "husimi",
            Command::EvolveCoherent => "evolve-coherent",
            Command::Timecrystal => "timecrystal",
            Command::CalibrateOmega => "calibrate-omega",
        }
    }
}

struct Session<'a> {
    cfg: &'a RunConfig,
    cache: MapCache,
    out: ArtifactWriter,
    failures: Vec<ItemFailure>,
}

impl Session<'_> {
    /// Runs `f` on a pool sized by the configured parallelism.
    fn pooled<R: Send>(&self, f: impl FnOnce() -> R + Send) -> Result<R, RunnerError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.parallelism)
            .build()
            .map_err(|e| RunnerError::Config(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }
}

fn ensure_writable(dir: &std::path::Path) -> Result<(), RunnerError> {
    std::fs::create_dir_all(dir)?;
    let probe = dir.join(format!(".write-probe-{}", std::process::id()));
    std::fs::write(&probe, b"")
        .and_then(|_| std::fs::remove_file(&probe))
        .map_err(|e| RunnerError::Config(format!("directory {} is not writable: {e}", dir.display())))
}

/// Executes `command` under `cfg`, writes its artifacts and manifest, and
/// returns the manifest. Item failures in scans are recorded in the manifest
/// rather than returned as errors.
pub fn execute(command: Command, cfg: &RunConfig) -> Result<Manifest, RunnerError> {
    let started = Instant::now();
    cfg.validate()?;
    ensure_writable(&cfg.output_dir)?;
    if let Some(dir) = &cfg.cache_dir {
        ensure_writable(dir)?;
    }
    let mut s = Session {
        cfg,
        cache: MapCache::new(cfg.cache_dir.as_deref())?,
        out: ArtifactWriter::new(&cfg.output_dir)?,
        failures: Vec::new(),
    };
    let summary = match command {
        Command::Spectrum => spectrum(&mut s)?,
        Command::SteadyState => steady_state_cmd(&mut s)?,
        Command::Correlate => correlate(&mut s)?,
        Command::BifurcationClassical => bifurcation_classical(&mut s)?,
        Command::BifurcationQuantum => bifurcation_quantum(&mut s)?,
        Command::Husimi => husimi_cmd(&mut s)?,
        Command::EvolveCoherent => evolve_coherent(&mut s)?,
        Command::Timecrystal => timecrystal(&mut s)?,
        Command::CalibrateOmega => calibrate(&mut s)?,
    };
    let manifest = Manifest {
        command: command.name().to_string(),
        config: cfg.clone(),
        wall_seconds: started.elapsed().as_secs_f64(),
        artifacts: std::mem::replace(&mut s.out, ArtifactWriter::new(&cfg.output_dir)?).into_artifacts(),
        cache: s.cache.stats(),
        cache_rejected: s.cache.rejected(),
        failures: s.failures,
        summary,
    };
    let path = cfg.output_dir.join(Manifest::file_name(command.name()));
    std::fs::write(path, serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Parses the configuration named by `cli` and executes its command.
pub fn run(cli: &Cli) -> Result<Manifest, RunnerError> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    execute(cli.command, &cfg)
}

/// Full CLI: parse `argv`, run, print diagnostics, and return the exit status.
pub fn run_command<I, A>(argv: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(m) if m.failures.is_empty() => 0,
        Ok(m) => {
            let err = RunnerError::PartialFailure { failed: m.failures.len(), total: m.failures.len() + count_ok(&m) };
            eprintln!("dimer {}: {err}", m.command);
            for f in &m.failures {
                eprintln!("  item {}: {}", f.index, f.message);
            }
            EXIT_PARTIAL
        }
        Err(e) => {
            eprintln!("dimer {}: {e}", cli.command.name());
            1
        }
    }
}

fn count_ok(m: &Manifest) -> usize {
    m.summary.get("completed").and_then(Value::as_u64).unwrap_or(0) as usize
}

fn spectrum(s: &mut Session) -> Result<Value, RunnerError> {
    let p = s.cfg.params()?;
    let map = s.pooled(|| s.cache.get_or_build(&p, &s.cfg.step))??;
    let spec = eig_floquet(&map)?;
    s.out.write("spectrum.csv", |w| write_spectrum_csv(&spec, w))?;
    let sub = subdominant_mode(&spec)?;
    Ok(json!({
        "n": p.n,
        "rapidities": spec.len(),
        "lambda2": [sub.lambda.re, sub.lambda.im],
        "lambda2_abs": sub.lambda.norm(),
        "gap_to_minus_one": sub.gap_to_minus_one,
        "invariant_violations": spec.invariant_violations(),
    }))
}

fn steady_state_cmd(s: &mut Session) -> Result<Value, RunnerError> {
    let p = s.cfg.params()?;
    let map = s.pooled(|| s.cache.get_or_build(&p, &s.cfg.step))??;
    let spec = eig_floquet(&map)?;
    let rho = steady_state_checked::<f64>(&map, &spec)?;
    s.out.write("steady_state.csv", |w| {
        writeln!(w, "row,col,re,im")?;
        for ((i, j), z) in rho.entries.indexed_iter() {
            writeln!(w, "{i},{j},{:.16e},{:.16e}", z.re, z.im)?;
        }
        Ok(())
    })?;
    let slice = slice_from_map(&map)?;
    s.out.write("populations.csv", |w| write_bifurcation_csv(std::slice::from_ref(&slice), w))?;
    let ops = build_operators(&p)?;
    Ok(json!({
        "n": p.n,
        "purity": rho.purity(),
        "min_eigenvalue": rho.min_eigenvalue(),
        "sz_mean": rho.expectation(ops.band(crate::model::OpKind::Sz)).re,
    }))
}

fn correlate(s: &mut Session) -> Result<Value, RunnerError> {
    let p = s.cfg.params()?;
    let map = s.pooled(|| s.cache.get_or_build(&p, &s.cfg.step))??;
    let spec = eig_floquet(&map)?;
    let rho = steady_state_checked::<f64>(&map, &spec)?;
    let ops = build_operators(&p)?;
    let series = two_time_sz(&map, &rho, &ops, s.cfg.scan.m_max)?;
    s.out.write("correlation.csv", |w| series.write_csv(w))?;
    let diagnostics = if series.m_max() >= MIN_SERIES_LAGS {
        serde_json::to_value(doubling_diagnostics(&series, &spec)?)?
    } else {
        Value::Null
    };
    Ok(json!({ "n": p.n, "m_max": series.m_max(), "sz_mean": series.sz_mean, "doubling": diagnostics }))
}

fn bifurcation_classical(s: &mut Session) -> Result<Value, RunnerError> {
    let cfg = s.cfg;
    let base = cfg.params()?;
    let ics = default_ic_grid(cfg.scan.ic_grid.0, cfg.scan.ic_grid.1);
    let items: Vec<(f64, ClassicalState<f64>)> =
        cfg.scan.un_grid.iter().flat_map(|&un| ics.iter().map(move |&ic| (un, ic))).collect();
    let outcome = scan_executor(&items, cfg.parallelism, |&(un, ic)| -> Result<_, RunnerError> {
        let p = base.with_un(un)?;
        let rec = stroboscopic_map_steps(ic, &p, cfg.scan.m_transient, cfg.scan.m_record, cfg.step.steps_per_period)?;
        let report = classify_attractor(&rec, cfg.scan.tol_diameter, cfg.scan.tol_separation)?;
        Ok((rec, report))
    })?;
    let (records, rows): (Vec<_>, Vec<_>) =
        outcome.successes().map(|(_, (rec, rep))| (rec.clone(), (rec.un, rep.clone()))).unzip();
    s.out.write("bifurcation_classical.csv", |w| write_samples_csv(&records, w))?;
    s.out.write("clusters.csv", |w| write_clusters_csv(&rows, w))?;
    s.failures = outcome.failures;
    let period_two: Vec<f64> = rows.iter().filter(|(_, r)| r.is_period_two()).map(|(u, _)| *u).collect();
    Ok(json!({ "completed": records.len(), "period_two_un": period_two }))
}

fn bifurcation_quantum(s: &mut Session) -> Result<Value, RunnerError> {
    let cfg = s.cfg;
    let base = cfg.params()?;
    let cache = &s.cache;
    let outcome = scan_executor(&cfg.scan.un_grid, cfg.parallelism, |&un| -> Result<_, RunnerError> {
        let p = base.with_un(un)?;
        let map = cache.get_or_build(&p, &cfg.step)?;
        Ok(slice_from_map(&map)?)
    })?;
    let slices: Vec<_> = outcome.successes().map(|(_, sl)| sl.clone()).collect();
    s.out.write("bifurcation_quantum.csv", |w| write_bifurcation_csv(&slices, w))?;
    s.failures = outcome.failures;
    let trace_defect = slices.iter().map(|sl| (sl.total() - 1.0).abs()).fold(0.0, f64::max);
    Ok(json!({ "n": base.n, "completed": slices.len(), "max_trace_defect": trace_defect }))
}

fn husimi_cmd(s: &mut Session) -> Result<Value, RunnerError> {
    let p = s.cfg.params()?;
    let map = s.pooled(|| s.cache.get_or_build(&p, &s.cfg.step))??;
    let spec = eig_floquet(&map)?;
    let rho = steady_state_checked::<f64>(&map, &spec)?;
    let grid = s.pooled(|| husimi(&rho, s.cfg.scan.husimi_grid))??;
    s.out.write("husimi.csv", |w| grid.write_csv(w))?;
    let (theta, phi, q) = grid.argmax();
    Ok(json!({ "n": p.n, "normalization": grid.normalization(), "argmax": [theta, phi, q] }))
}

fn evolve_coherent(s: &mut Session) -> Result<Value, RunnerError> {
    let cfg = s.cfg;
    let p = cfg.params()?;
    let seed = cfg.scan.seed_state();
    let cs = CoherentState::from_classical(&seed, p.n)?;
    let ev = s.pooled(|| {
        stroboscopic_coherent_evolution(
            &cs,
            &p,
            cfg.step,
            cfg.scan.evolve_periods,
            &cfg.scan.snapshot_times,
            cfg.scan.husimi_grid,
        )
    })??;
    s.out.write("sz_series.csv", |w| write_sz_csv(&ev.sz_series, w))?;
    for (m, grid) in &ev.snapshots {
        s.out.write(&format!("husimi_m{m:03}.csv"), |w| grid.write_csv(w))?;
    }
    let trace = s.pooled(|| quantum_classical_trace(&seed, &p, cfg.step, 2, 40))??;
    s.out.write("correspondence.csv", |w| {
        writeln!(w, "t,quantum,classical")?;
        for ((t, q), c) in trace.times.iter().zip(&trace.quantum).zip(&trace.classical) {
            writeln!(w, "{t:.16e},{q:.16e},{c:.16e}")?;
        }
        Ok(())
    })?;
    let orbit = locate_period_two(seed, &p, cfg.scan.m_transient).ok();
    let masses: Vec<Value> = ev
        .snapshots
        .iter()
        .map(|(m, grid)| match &orbit {
            Some(o) => json!({
                "m": m,
                "mass_near": [
                    grid.mass_fraction_near(&o.points[0], NEIGHBOURHOOD_RADIUS),
                    grid.mass_fraction_near(&o.points[1], NEIGHBOURHOOD_RADIUS),
                ],
            }),
            None => json!({ "m": m, "mass_near": Value::Null }),
        })
        .collect();
    Ok(json!({
        "n": p.n,
        "alternation_length": alternation_length(&ev.sz_series),
        "orbit_sz": orbit.as_ref().map(|o| o.sz()),
        "snapshots": masses,
        "correspondence_max_deviation": trace.max_deviation(),
    }))
}

fn timecrystal(s: &mut Session) -> Result<Value, RunnerError> {
    let cfg = s.cfg;
    let p = cfg.params()?;
    let report = s.pooled(|| {
        time_crystal_checklist(
            cfg.scan.seed_state(),
            &cfg.scan.ic_offsets,
            &cfg.scan.un_perturbations,
            &p,
            cfg.step,
            cfg.scan.evolve_periods,
        )
    })??;
    s.out.write("checklist.csv", |w| report.write_csv(w))?;
    for run in &report.runs {
        s.out.write(&format!("sz_run{}.csv", run.run_id), |w| write_sz_csv(&run.sz_series, w))?;
    }
    Ok(json!({ "n": p.n, "min_alternation": report.min_alternation(), "locked": report.locked }))
}

fn calibrate(s: &mut Session) -> Result<Value, RunnerError> {
    let cfg = s.cfg;
    let settings = CalibrationSettings {
        seeds: cfg.scan.calibration_seeds.iter().map(|&(t, p)| ClassicalState::new(t, p)).collect(),
        m_transient: cfg.scan.m_transient,
        m_record: cfg.scan.m_record,
        steps_per_period: cfg.step.steps_per_period,
        tol_diameter: cfg.scan.tol_diameter,
        tol_separation: cfg.scan.tol_separation,
        parallelism: cfg.parallelism,
    };
    let result = calibrate_omega(&cfg.params()?, &cfg.scan.omega_grid.values(), &settings)?;
    s.out.write("calibration.csv", |w| result.write_classifications_csv(w))?;
    s.out.write("omega_windows.csv", |w| result.write_windows_csv(w))?;
    Ok(json!({ "omega_windows": result.omega_windows, "omega_chosen": result.omega_chosen }))
}
