//! Drive-frequency calibration: locate ω windows where the classical
//! stroboscopic map settles on a period-2 orbit.

use std::io::Write;

use serde::Serialize;

use super::executor::scan_executor;
use super::RunnerError;
use crate::meanfield::{classify_attractor, stroboscopic_map_steps, AttractorKind, ClassicalState};
use crate::model::ModelParams;

/// Settings for one calibration scan.
#[derive(Clone, Debug)]
pub struct CalibrationSettings {
    pub seeds: Vec<ClassicalState<f64>>,
    pub m_transient: usize,
    pub m_record: usize,
    pub steps_per_period: usize,
    pub tol_diameter: f64,
    pub tol_separation: f64,
    pub parallelism: usize,
}

/// Classification of one (ω, seed) run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedClassification {
    pub omega: f64,
    pub seed: ClassicalState<f64>,
    pub kind: AttractorKind,
    pub n_clusters: usize,
    pub max_diameter: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationResult {
    /// Closed ω intervals, ascending, each verified period-2 at both ends and
    /// the midpoint.
    pub omega_windows: Vec<(f64, f64)>,
    /// Midpoint of the widest window; ties go to the lowest ω.
    pub omega_chosen: f64,
    pub classifications: Vec<SeedClassification>,
}

impl CalibrationResult {
    /// CSV with header `omega,seed_theta,seed_phi,kind,n_clusters,max_diameter`.
    pub fn write_classifications_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        write_classifications(&self.classifications, w)
    }

    /// CSV with header `low,high,chosen`.
    pub fn write_windows_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "low,high,chosen")?;
        for &(lo, hi) in &self.omega_windows {
            let chosen = 0.5 * (lo + hi) == self.omega_chosen;
            writeln!(w, "{lo:.16e},{hi:.16e},{chosen}")?;
        }
        Ok(())
    }
}

fn write_classifications<W: Write>(rows: &[SeedClassification], mut w: W) -> std::io::Result<()> {
    writeln!(w, "omega,seed_theta,seed_phi,kind,n_clusters,max_diameter")?;
    for c in rows {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:?},{},{:.16e}",
            c.omega, c.seed.theta, c.seed.phi, c.kind, c.n_clusters, c.max_diameter
        )?;
    }
    Ok(())
}

fn classify_omegas(
    base: &ModelParams<f64>,
    omegas: &[f64],
    s: &CalibrationSettings,
) -> Result<Vec<SeedClassification>, RunnerError> {
    let items: Vec<(f64, ClassicalState<f64>)> =
        omegas.iter().flat_map(|&w| s.seeds.iter().map(move |&seed| (w, seed))).collect();
    let outcome = scan_executor(&items, s.parallelism, |&(omega, seed)| -> Result<_, RunnerError> {
        let p = ModelParams { omega, ..*base };
        p.validate()?;
        let rec = stroboscopic_map_steps(seed, &p, s.m_transient, s.m_record, s.steps_per_period)?;
        let r = classify_attractor(&rec, s.tol_diameter, s.tol_separation)?;
        Ok(SeedClassification { omega, seed, kind: r.kind, n_clusters: r.n_clusters, max_diameter: r.max_diameter })
    })?;
    if let Some(f) = outcome.failures.first() {
        let (omega, seed) = items[f.index];
        return Err(RunnerError::Calibration(format!(
            "run at omega = {omega}, seed ({}, {}) failed: {}",
            seed.theta, seed.phi, f.message
        )));
    }
    Ok(outcome.results.into_iter().flatten().collect())
}

fn all_period_two(rows: &[SeedClassification], omega: f64) -> bool {
    rows.iter().filter(|c| c.omega == omega).all(|c| c.kind == AttractorKind::PeriodTwo)
}

/// Scans `omega_grid` (ascending) at `base` with every seed. An ω counts as
/// period-2 when all seeds classify as [`AttractorKind::PeriodTwo`].
/// Contiguous period-2 runs of the grid become candidate windows; a window is
/// reported once its midpoint also passes.
pub fn calibrate_omega(
    base: &ModelParams<f64>,
    omega_grid: &[f64],
    settings: &CalibrationSettings,
) -> Result<CalibrationResult, RunnerError> {
    if omega_grid.is_empty() || settings.seeds.is_empty() {
        return Err(RunnerError::Config("calibration needs a non-empty omega grid and seed list".into()));
    }
    let classifications = classify_omegas(base, omega_grid, settings)?;
    let flags: Vec<bool> = omega_grid.iter().map(|&w| all_period_two(&classifications, w)).collect();

    let mut candidates = Vec::new();
    let mut k = 0;
    while k < flags.len() {
        if flags[k] {
            let start = k;
            while k + 1 < flags.len() && flags[k + 1] {
                k += 1;
            }
            candidates.push((omega_grid[start], omega_grid[k]));
        }
        k += 1;
    }
    let midpoints: Vec<f64> = candidates
        .iter()
        .map(|&(lo, hi)| 0.5 * (lo + hi))
        .filter(|m| !omega_grid.contains(m))
        .collect();
    let mid_rows = classify_omegas(base, &midpoints, settings)?;
    let omega_windows: Vec<(f64, f64)> = candidates
        .into_iter()
        .filter(|&(lo, hi)| {
            let m = 0.5 * (lo + hi);
            if omega_grid.contains(&m) {
                all_period_two(&classifications, m)
            } else {
                all_period_two(&mid_rows, m)
            }
        })
        .collect();

    let widest = omega_windows.iter().copied().fold(None::<(f64, f64)>, |best, w| match best {
        Some(b) if b.1 - b.0 >= w.1 - w.0 => Some(b),
        _ => Some(w),
    });
    match widest {
        Some((lo, hi)) => Ok(CalibrationResult { omega_windows, omega_chosen: 0.5 * (lo + hi), classifications }),
        None => {
            let mut listing = Vec::new();
            write_classifications(&classifications, &mut listing)?;
            Err(RunnerError::Calibration(format!(
                "no period-2 window over the omega grid; per-omega classifications:\n{}",
                String::from_utf8_lossy(&listing)
            )))
        }
    }
}
