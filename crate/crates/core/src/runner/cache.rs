//! On-disk cache of Floquet maps keyed by parameter fingerprint.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::Serialize;

use super::RunnerError;
use crate::model::ModelParams;
use crate::propagation::{
    build_floquet_map, fingerprint, read_cache, write_cache, FloquetMap, PropagationContext, PropagationError,
    StepControl,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
}

/// Floquet-map cache. With no directory every request is a miss and nothing
/// is written.
#[derive(Debug, Default)]
pub struct MapCache {
    dir: Option<PathBuf>,
    hits: AtomicUsize,
    misses: AtomicUsize,
    /// Diagnostics for entries that were present but unusable.
    rejected: std::sync::Mutex<Vec<String>>,
}

impl MapCache {
    pub fn new(dir: Option<&Path>) -> Result<Self, RunnerError> {
        if let Some(d) = dir {
            std::fs::create_dir_all(d)?;
        }
        Ok(Self { dir: dir.map(Path::to_path_buf), ..Self::default() })
    }

    pub fn path_for(&self, params: &ModelParams<f64>, step: &StepControl) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{}.flqm", fingerprint(params, step))))
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats { hits: self.hits.load(Ordering::SeqCst), misses: self.misses.load(Ordering::SeqCst) }
    }

    pub fn rejected(&self) -> Vec<String> {
        self.rejected.lock().expect("cache diagnostics lock").clone()
    }

    /// Returns the cached map for `(params, step)`, building and storing it on
    /// a miss. A present but unreadable or mismatched entry is reported in
    /// [`Self::rejected`] and rebuilt.
    pub fn get_or_build(&self, params: &ModelParams<f64>, step: &StepControl) -> Result<FloquetMap<f64>, RunnerError> {
        let path = self.path_for(params, step);
        if let Some(p) = path.as_ref().filter(|p| p.exists()) {
            match File::open(p).map_err(PropagationError::from).and_then(|f| read_cache(BufReader::new(f), Some((params, step)))) {
                Ok(map) => {
                    self.hits.fetch_add(1, Ordering::SeqCst);
                    return Ok(map);
                }
                Err(e) => self.rejected.lock().expect("cache diagnostics lock").push(format!("{}: {e}", p.display())),
            }
        }
        self.misses.fetch_add(1, Ordering::SeqCst);
        let ctx = PropagationContext::new(*params, *step)?;
        let map = build_floquet_map(&ctx)?;
        if let Some(p) = path {
            let tmp = p.with_extension(format!("tmp{}", std::process::id()));
            write_cache(&map, BufWriter::new(File::create(&tmp)?))?;
            std::fs::rename(&tmp, &p)?;
        }
        Ok(map)
    }
}
