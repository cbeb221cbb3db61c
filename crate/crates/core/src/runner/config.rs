//! JSON run configuration with dotted-key overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::RunnerError;
use crate::meanfield::ClassicalState;
use crate::model::ModelParams;
use crate::propagation::StepControl;

/// Environment variable that overrides `cache_dir`.
pub const CACHE_DIR_ENV: &str = "DIMER_CACHE_DIR";

/// Model inputs, with γ and U given as the composites γN and UN.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n: usize,
    pub j: f64,
    pub un: f64,
    pub mu0: f64,
    pub mu1: f64,
    pub omega: f64,
    pub gamma_n: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { n: 10, j: 1.0, un: 0.2, mu0: 1.0, mu1: 3.4, omega: 1.0, gamma_n: 0.1 }
    }
}

impl ModelConfig {
    pub fn params(&self) -> Result<ModelParams<f64>, RunnerError> {
        Ok(ModelParams::from_composite(self.n, self.j, self.un, self.mu0, self.mu1, self.omega, self.gamma_n)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeConfig {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl RangeConfig {
    /// `start + k·step` for every `k` with the value at most `stop`, rounded
    /// to 12 decimals so that grids print cleanly.
    pub fn values(&self) -> Vec<f64> {
        if !(self.step > 0.0) || self.stop < self.start {
            return Vec::new();
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| ((self.start + k as f64 * self.step) * 1e12).round() / 1e12).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    /// UN values for bifurcation scans.
    pub un_grid: Vec<f64>,
    /// Particle numbers for multi-N runs.
    pub n_list: Vec<usize>,
    pub m_max: usize,
    pub m_transient: usize,
    pub m_record: usize,
    pub ic_grid: (usize, usize),
    pub husimi_grid: (usize, usize),
    pub omega_grid: RangeConfig,
    pub calibration_seeds: Vec<(f64, f64)>,
    pub seed: (f64, f64),
    pub ic_offsets: Vec<(f64, f64)>,
    /// Additive UN perturbations for the time-crystal checklist.
    pub un_perturbations: Vec<f64>,
    pub snapshot_times: Vec<usize>,
    pub evolve_periods: usize,
    pub tol_diameter: f64,
    pub tol_separation: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            un_grid: RangeConfig { start: 0.0, stop: 0.5, step: 0.025 }.values(),
            n_list: vec![10, 25, 50],
            m_max: 200,
            m_transient: 800,
            m_record: 200,
            ic_grid: (16, 16),
            husimi_grid: (181, 181),
            omega_grid: RangeConfig { start: 0.5, stop: 5.0, step: 0.05 },
            calibration_seeds: vec![(2.0, -3.0), (1.0, 1.0), (2.5, 2.0), (0.5, 4.0)],
            seed: (2.0, -3.0),
            ic_offsets: vec![(0.0, 0.0), (-0.05, -0.05), (0.05, 0.05)],
            un_perturbations: vec![-0.01, 0.0, 0.01],
            snapshot_times: vec![0, 1, 2, 6, 7, 8],
            evolve_periods: 30,
            tol_diameter: 1e-3,
            tol_separation: 1e-1,
        }
    }
}

impl ScanConfig {
    pub fn seed_state(&self) -> ClassicalState<f64> {
        ClassicalState::new(self.seed.0, self.seed.1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub step: StepControl,
    pub scan: ScanConfig,
    pub output_dir: PathBuf,
    /// `None` disables the Floquet-map cache.
    pub cache_dir: Option<PathBuf>,
    pub parallelism: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            step: StepControl::default(),
            scan: ScanConfig::default(),
            output_dir: PathBuf::from("out"),
            cache_dir: None,
            parallelism: 1,
        }
    }
}

impl RunConfig {
    /// Loads `path` (or the defaults), applies `key=value` overrides and the
    /// cache-directory environment variable, then validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, RunnerError> {
        let mut value = match path {
            Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
            None => serde_json::to_value(Self::default())?,
        };
        if path.is_some() {
            // Missing keys take their defaults.
            let mut base = serde_json::to_value(Self::default())?;
            merge(&mut base, value);
            value = base;
        }
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let mut cfg: Self = serde_json::from_value(value)?;
        if let Some(dir) = std::env::var_os(CACHE_DIR_ENV) {
            cfg.cache_dir = Some(PathBuf::from(dir));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn params(&self) -> Result<ModelParams<f64>, RunnerError> {
        self.model.params()
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        let bad = |msg: String| Err(RunnerError::Config(msg));
        self.params()?;
        self.step.validate()?;
        if self.parallelism == 0 {
            return bad("parallelism must be >= 1".into());
        }
        let s = &self.scan;
        if s.un_grid.is_empty() || s.n_list.is_empty() || s.calibration_seeds.is_empty() {
            return bad("scan ranges must be non-empty".into());
        }
        if s.omega_grid.values().is_empty() {
            return bad(format!("empty omega grid {:?}", s.omega_grid));
        }
        if s.m_transient == 0 || s.m_record == 0 || s.evolve_periods == 0 {
            return bad("m_transient, m_record and evolve_periods must be >= 1".into());
        }
        if s.ic_grid.0 == 0 || s.ic_grid.1 == 0 || s.husimi_grid.0 < 2 || s.husimi_grid.1 < 2 {
            return bad("grid sizes too small".into());
        }
        if s.n_list.contains(&0) {
            return bad("n_list entries must be >= 1".into());
        }
        Ok(())
    }
}

/// Recursively overlays `patch` onto `base`.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Applies `a.b.c=value`; the value is parsed as JSON, or taken as a string
/// if that fails.
pub fn apply_override(value: &mut Value, spec: &str) -> Result<(), RunnerError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| RunnerError::Config(format!("override `{spec}` is not of the form key=value")))?;
    let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = value;
    for part in key.split('.') {
        slot = slot
            .as_object_mut()
            .and_then(|o| o.get_mut(part))
            .ok_or_else(|| RunnerError::Config(format!("unknown config key `{key}`")))?;
    }
    *slot = parsed;
    Ok(())
}
