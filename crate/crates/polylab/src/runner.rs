//! Preset dispatch, output directory handling and the JSON manifest.

use crate::config::Config;
use crate::presets;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug)]
pub enum RunError {
    Config(String),
    Io(std::io::Error),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "config error: {m}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

impl From<crate::config::ConfigError> for RunError {
    fn from(e: crate::config::ConfigError) -> Self {
        RunError::Config(e.to_string())
    }
}

impl From<polylab_core::PolyError> for RunError {
    fn from(e: polylab_core::PolyError) -> Self {
        RunError::Config(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    CheckFailed,
}

/// Shared context handed to each preset.
pub struct RunContext {
    pub cfg: Config,
    pub dir: PathBuf,
    pub seed: u64,
    outputs: std::cell::RefCell<Vec<String>>,
    started: Instant,
}

impl RunContext {
    pub fn write_file(&self, name: &str, contents: &str) -> Result<(), RunError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, contents)?;
        self.outputs.borrow_mut().push(name.to_string());
        Ok(())
    }

    pub fn finish_manifest(&self, preset: &str) -> Result<(), RunError> {
        let mut cfg_map = serde_json::Map::new();
        for (k, v) in self.cfg.entries() {
            cfg_map.insert(k.clone(), serde_json::Value::String(v.clone()));
        }
        let manifest = serde_json::json!({
            "preset": preset,
            "seed": self.seed,
            "version": env!("CARGO_PKG_VERSION"),
            "config": cfg_map,
            "outputs": &*self.outputs.borrow(),
            "wall_time_secs": self.started.elapsed().as_secs_f64(),
        });
        let path = self.dir.join("manifest.json");
        std::fs::create_dir_all(&self.dir)?;
        std::fs::write(path, serde_json::to_string_pretty(&manifest).unwrap())?;
        Ok(())
    }
}

pub const PRESETS: [&str; 6] = [
    "verify",
    "scan",
    "crossover",
    "localization",
    "exponents",
    "doob",
];

/// Run one preset under `out_dir/<preset>/`.
pub fn run_preset(
    preset: &str,
    cfg: Config,
    out_dir: &Path,
    seed: u64,
) -> Result<Outcome, RunError> {
    let ctx = RunContext {
        cfg,
        dir: out_dir.join(preset),
        seed,
        outputs: std::cell::RefCell::new(Vec::new()),
        started: Instant::now(),
    };
    std::fs::create_dir_all(&ctx.dir)?;
    let outcome = match preset {
        "verify" => presets::verify::run(&ctx)?,
        "scan" => presets::scan::run(&ctx)?,
        "crossover" => presets::crossover::run(&ctx)?,
        "localization" => presets::localization::run(&ctx)?,
        "exponents" => presets::exponents::run(&ctx)?,
        "doob" => presets::doob::run(&ctx)?,
        other => {
            return Err(RunError::Config(format!(
                "unknown preset `{other}`; expected one of {}",
                PRESETS.join(", ")
            )))
        }
    };
    ctx.finish_manifest(preset)?;
    Ok(outcome)
}
