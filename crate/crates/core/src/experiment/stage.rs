use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MARKER: &str = ".complete";

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Corpus,
    Tree,
    Components,
    Decoder,
    Enhance,
    Metrics,
    Tables,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Corpus => "corpus",
            Stage::Tree => "tree",
            Stage::Components => "components",
            Stage::Decoder => "decoder",
            Stage::Enhance => "enhance",
            Stage::Metrics => "metrics",
            Stage::Tables => "tables",
            Stage::Report => "report",
        }
    }
}

/// Runs stages into private `.tmp` directories and renames them into place.
/// With `resume`, a finished stage whose key matches is reused; once any
/// stage reruns, every later stage reruns too.
pub(crate) struct StageRunner {
    resume: bool,
    dirty: bool,
    label: String,
    pub timings: BTreeMap<String, f64>,
}

impl StageRunner {
    pub fn new(resume: bool, label: impl Into<String>) -> Self {
        StageRunner { resume, dirty: false, label: label.into(), timings: BTreeMap::new() }
    }

    pub fn child(&self, label: &str) -> Self {
        StageRunner {
            resume: self.resume,
            dirty: self.dirty,
            label: if self.label.is_empty() { label.to_string() } else { format!("{}/{label}", self.label) },
            timings: BTreeMap::new(),
        }
    }

    pub fn absorb(&mut self, other: StageRunner) {
        self.timings.extend(other.timings);
    }

    pub fn run(
        &mut self,
        root: &Path,
        stage: Stage,
        key: &str,
        valid: impl FnOnce(&Path) -> bool,
        produce: impl FnOnce(&Path) -> Result<()>,
    ) -> Result<PathBuf> {
        let name = stage.name();
        let done = root.join(name);
        if self.resume && !self.dirty && fs::read_to_string(done.join(MARKER)).is_ok_and(|k| k == key) && valid(&done) {
            log::info!("{}: reusing {}", self.label, done.display());
            return Ok(done);
        }
        self.dirty = true;
        let started = Instant::now();
        let tmp = root.join(format!("{name}.tmp"));
        let wrap = |e: Error| e.in_stage(name);
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(|e| wrap(Error::io(&tmp, e)))?;
        }
        fs::create_dir_all(&tmp).map_err(|e| wrap(Error::io(&tmp, e)))?;
        produce(&tmp).map_err(wrap)?;
        fs::write(tmp.join(MARKER), key).map_err(|e| wrap(Error::io(&tmp, e)))?;
        if done.exists() {
            fs::remove_dir_all(&done).map_err(|e| wrap(Error::io(&done, e)))?;
        }
        fs::rename(&tmp, &done).map_err(|e| wrap(Error::io(&done, e)))?;
        let label = if self.label.is_empty() { name.to_string() } else { format!("{}/{name}", self.label) };
        self.timings.insert(label, started.elapsed().as_secs_f64());
        Ok(done)
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(value)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}
