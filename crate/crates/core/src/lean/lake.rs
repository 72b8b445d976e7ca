//! Subprocess backend: runs `lake env lean <file>` inside a pinned Lean
//! project and parses its diagnostics.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Duration;

use wait_timeout::ChildExt;

use super::{parse_diagnostics, CompileReport, Diagnostic, RunnerError, Toolchain};

#[derive(Debug, Clone)]
pub struct LakeToolchain {
    /// The `lake` executable (or a compatible wrapper).
    pub lake: PathBuf,
    /// Lean project whose dependencies (mathlib) the checked files import.
    pub project_dir: PathBuf,
    /// Prepended to files that carry no imports of their own.
    pub header: String,
}

pub const DEFAULT_HEADER: &str = "import Mathlib\n";

impl LakeToolchain {
    pub fn new(lake: impl Into<PathBuf>, project_dir: impl Into<PathBuf>) -> Self {
        Self {
            lake: lake.into(),
            project_dir: project_dir.into(),
            header: DEFAULT_HEADER.to_string(),
        }
    }

    pub fn with_header(mut self, header: impl Into<String>) -> Self {
        self.header = header.into();
        self
    }

    /// File handed to Lean and the number of header lines it gained.
    fn with_imports(&self, path: &Path) -> Result<(PathBuf, usize), RunnerError> {
        let io = |e| RunnerError::Io {
            path: path.to_path_buf(),
            source: e,
        };
        let text = std::fs::read_to_string(path).map_err(io)?;
        if self.header.is_empty() || text.trim_start().starts_with("import ") {
            return Ok((path.to_path_buf(), 0));
        }
        let wrapped = path.with_extension("lake.lean");
        std::fs::write(&wrapped, format!("{}{text}", self.header)).map_err(io)?;
        Ok((wrapped, self.header.lines().count()))
    }

    /// Reads `EXPLORABLE_LAKE` and `EXPLORABLE_LEAN_PROJECT`.
    pub fn from_env() -> Option<Self> {
        let lake = std::env::var_os("EXPLORABLE_LAKE")?;
        let project = std::env::var_os("EXPLORABLE_LEAN_PROJECT").unwrap_or_else(|| ".".into());
        Some(Self::new(lake, project))
    }

    fn command(&self) -> Command {
        let mut cmd = Command::new(&self.lake);
        cmd.current_dir(&self.project_dir)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        cmd
    }
}

impl Toolchain for LakeToolchain {
    fn version(&self) -> String {
        let out = self
            .command()
            .args(["env", "lean", "--version"])
            .output()
            .ok()
            .filter(|o| o.status.success());
        match out {
            Some(o) => String::from_utf8_lossy(&o.stdout).trim().to_string(),
            None => format!("lake at {}", self.lake.display()),
        }
    }

    fn check_file(&self, path: &Path, timeout: Duration) -> Result<CompileReport, RunnerError> {
        let path = std::path::absolute(path).map_err(|e| RunnerError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let (target, shift) = self.with_imports(&path)?;
        let mut child = self
            .command()
            .args(["env", "lean"])
            .arg(&target)
            .spawn()
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied => {
                    RunnerError::ToolchainMissing(self.lake.clone())
                }
                _ => RunnerError::Io {
                    path: self.lake.clone(),
                    source: e,
                },
            })?;
        // Drain pipes on threads so a chatty process cannot block on a full pipe.
        let mut stdout = child.stdout.take().expect("piped stdout");
        let mut stderr = child.stderr.take().expect("piped stderr");
        let out_thread = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = stdout.read_to_string(&mut s);
            s
        });
        let err_thread = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = stderr.read_to_string(&mut s);
            s
        });
        let io_err = |e| RunnerError::Io {
            path: self.lake.clone(),
            source: e,
        };
        let status = match child.wait_timeout(timeout).map_err(io_err)? {
            Some(status) => status,
            None => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(RunnerError::Timeout(timeout.as_secs()));
            }
        };
        let stdout = out_thread.join().unwrap_or_default();
        let stderr = err_thread.join().unwrap_or_default();
        let mut diagnostics = parse_diagnostics(&stdout);
        diagnostics.extend(parse_diagnostics(&stderr));
        for d in &mut diagnostics {
            d.line = d.line.saturating_sub(shift).max(1);
        }
        if !status.success() && !diagnostics.iter().any(|d| d.severity == super::Severity::Error) {
            let message = if stderr.trim().is_empty() {
                format!("toolchain exited with {status}")
            } else {
                stderr.trim().to_string()
            };
            diagnostics.push(Diagnostic::error(1, 0, message));
        }
        tracing::debug!(file = %path.display(), n = diagnostics.len(), "lean check finished");
        Ok(CompileReport::from_diagnostics(diagnostics))
    }
}
