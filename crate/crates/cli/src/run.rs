//! Content-addressed run directories and their manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the run directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    pub command: String,
    pub config_hash: String,
    pub config: Value,
    pub seeds: Vec<u64>,
    pub results: Value,
    pub artifacts: Vec<Artifact>,
    /// Wall-clock seconds per step; the only nondeterministic field.
    pub timings: BTreeMap<String, f64>,
}

impl Manifest {
    /// The manifest as JSON with `timings` removed, for comparing runs.
    pub fn without_timings(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("manifest serializes");
        v.as_object_mut().expect("object").remove("timings");
        v
    }

    pub fn load(dir: &Path) -> Result<Manifest> {
        Ok(serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)?)
    }
}

#[derive(Debug, Default)]
pub struct Timings {
    steps: BTreeMap<String, f64>,
    prefix: String,
}

impl Timings {
    fn record(&mut self, step: &str, start: Instant) {
        let key = format!("{}{step}", self.prefix);
        let secs = start.elapsed().as_secs_f64();
        log::info!("{key}: {secs:.2} s");
        self.steps.insert(key, secs);
    }

    pub fn time<T>(&mut self, step: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f();
        self.record(step, start);
        out
    }

    /// Like [`Timings::time`], with steps inside `f` keyed `name/step`.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Timings) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let inner = format!("{}{name}/", self.prefix);
        let outer = std::mem::replace(&mut self.prefix, inner);
        let out = f(self);
        self.prefix = outer;
        self.record(name, start);
        out
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 over the command name, tool version and canonical config JSON.
pub fn config_hash(command: &str, config: &Value) -> String {
    let key = serde_json::json!({
        "command": command,
        "config": config,
        "version": env!("CARGO_PKG_VERSION"),
    });
    sha256_hex(&serde_json::to_vec(&key).expect("json serializes"))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if path != root.join(MANIFEST) {
            out.push(path);
        }
    }
    Ok(())
}

fn artifacts(dir: &Path) -> Result<Vec<Artifact>> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    let mut out: Vec<Artifact> = files
        .iter()
        .map(|p| {
            let bytes = fs::read(p)?;
            let rel = p.strip_prefix(dir).expect("inside run dir");
            Ok(Artifact {
                path: rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"),
                bytes: bytes.len() as u64,
                sha256: sha256_hex(&bytes),
            })
        })
        .collect::<Result<_>>()?;
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

/// Runs `body` in `<out>/<command>-<hash prefix>`, then writes the manifest.
///
/// Rerunning an identical config replaces the earlier run of that config;
/// a directory holding a different config is never touched.
pub fn execute<C: Serialize>(
    out: &Path,
    command: &str,
    config: &C,
    seeds: Vec<u64>,
    body: impl FnOnce(&Path, &mut Timings) -> Result<Value>,
) -> Result<RunOutcome> {
    let config = serde_json::to_value(config)?;
    let hash = config_hash(command, &config);
    let dir = out.join(format!("{command}-{}", &hash[..16]));
    if dir.exists() {
        match Manifest::load(&dir) {
            Ok(m) if m.config_hash == hash => fs::remove_dir_all(&dir)?,
            _ => {
                return Err(CliError::Usage(format!(
                    "{} exists and is not a run of this config",
                    dir.display()
                )))
            }
        }
    }
    fs::create_dir_all(&dir)?;
    log::info!("{command} -> {}", dir.display());

    let mut timings = Timings::default();
    let results = timings.stage("total", |t| body(&dir, t))?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        core_version: tubalsr::VERSION.to_string(),
        command: command.to_string(),
        config_hash: hash,
        config,
        seeds,
        results,
        artifacts: artifacts(&dir)?,
        timings: timings.steps,
    };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(RunOutcome { dir, manifest })
}
