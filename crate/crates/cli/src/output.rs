//! Output directory handling: atomic file writes and the run manifest.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use ddvar_core::{DdvarError, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

/// Environment variable that overrides `output.directory`.
pub const OUTPUT_DIR_ENV: &str = "DDVAR_OUTPUT_DIR";

/// Manifest file name; like `timings.json` it carries wall-clock data and
/// is the only output that differs between identical runs.
pub const MANIFEST: &str = "manifest.json";

/// Writes `bytes` to `dir/name` through a temporary file and a rename, so
/// a failure never leaves a partial file behind.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let path = dir.join(name);
    let io = |e: std::io::Error| DdvarError::Io(format!("{}: {e}", path.display()));
    let mut tmp = NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(&path).map_err(|e| io(e.error))?;
    Ok(path)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputEntry {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct HostInfo {
    pub hostname: String,
    pub os: &'static str,
    pub arch: &'static str,
    pub cpus: usize,
}

impl HostInfo {
    fn current() -> Self {
        let hostname = std::env::var("HOSTNAME")
            .ok()
            .or_else(|| {
                std::fs::read_to_string("/etc/hostname")
                    .ok()
                    .map(|s| s.trim().to_string())
            })
            .unwrap_or_else(|| "unknown".into());
        HostInfo {
            hostname,
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    pub seed: u64,
    /// The resolved configuration, defaults included.
    pub config: String,
    pub status: RunStatus,
    pub exit_code: Option<i32>,
    pub error: Option<String>,
    pub started_unix_s: f64,
    pub wall_clock_s: Option<f64>,
    pub host: HostInfo,
    pub outputs: Vec<OutputEntry>,
}

/// An output directory for one command: tracks written files and keeps
/// the manifest current.
pub struct RunDir {
    dir: PathBuf,
    manifest: RunManifest,
    started: Instant,
}

impl RunDir {
    /// Creates the directory and writes the initial manifest.
    pub fn create(dir: &Path, command: &str, seed: u64, config: String) -> Result<Self> {
        std::fs::create_dir_all(dir)
            .map_err(|e| DdvarError::Io(format!("{}: {e}", dir.display())))?;
        let started_unix_s = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0.0, |d| d.as_secs_f64());
        let run = RunDir {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                command: command.to_string(),
                version: env!("CARGO_PKG_VERSION"),
                seed,
                config,
                status: RunStatus::Running,
                exit_code: None,
                error: None,
                started_unix_s,
                wall_clock_s: None,
                host: HostInfo::current(),
                outputs: Vec::new(),
            },
            started: Instant::now(),
        };
        run.write_manifest()?;
        Ok(run)
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir, name, bytes)?;
        self.manifest.outputs.retain(|o| o.file != name);
        self.manifest.outputs.push(OutputEntry {
            file: name.to_string(),
            bytes: bytes.len(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn write_str(&mut self, name: &str, text: &str) -> Result<()> {
        self.write(name, text.as_bytes())
    }

    fn write_manifest(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.manifest)?;
        write_atomic(&self.dir, MANIFEST, text.as_bytes())?;
        Ok(())
    }

    /// Records the outcome and rewrites the manifest.
    pub fn finish(mut self, exit_code: i32, error: Option<String>) -> Result<()> {
        self.manifest.status = if error.is_none() && exit_code == 0 {
            RunStatus::Complete
        } else {
            RunStatus::Failed
        };
        self.manifest.exit_code = Some(exit_code);
        self.manifest.error = error;
        self.manifest.wall_clock_s = Some(self.started.elapsed().as_secs_f64());
        self.write_manifest()
    }
}
