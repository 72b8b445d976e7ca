//! Access to the Lean toolchain: compiling sources, extracting goal states
//! at tactic positions, and running probe files.
//!
//! Two [`Toolchain`] backends exist. [`LakeToolchain`] invokes a pinned Lean
//! project as a subprocess; [`ReferenceToolchain`] checks the arithmetic
//! fragment in-process. Both report through the same diagnostic format, and
//! goal states are always obtained by inserting `trace_state` and parsing the
//! resulting info messages, so the runner logic above them is shared.

pub mod expr;
pub mod goal;
pub mod lake;
pub mod reference;
pub mod source;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LeanSource, Position, ProofState, StepIndex};

pub use goal::{parse_goal_text, render_goal, GoalParseError};
pub use lake::LakeToolchain;
pub use reference::ReferenceToolchain;
pub use source::{ParsedProof, SourceError, Tactic, TacticSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
    Info,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl Diagnostic {
    pub fn error(line: usize, column: usize, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            line,
            column,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompileReport {
    pub success: bool,
    pub diagnostics: Vec<Diagnostic>,
}

impl CompileReport {
    pub fn from_diagnostics(diagnostics: Vec<Diagnostic>) -> Self {
        let success = !diagnostics.iter().any(|d| d.severity == Severity::Error);
        Self { success, diagnostics }
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.severity == Severity::Error)
    }

    pub fn infos(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.severity == Severity::Info)
    }

    /// Diagnostics in the toolchain's `file:line:col: severity: message` form.
    pub fn render(&self, file: &str) -> String {
        let mut out = String::new();
        for d in &self.diagnostics {
            let sev = match d.severity {
                Severity::Error => "error",
                Severity::Warning => "warning",
                Severity::Info => "info",
            };
            out.push_str(&format!("{file}:{}:{}: {sev}: {}\n", d.line, d.column, d.message));
        }
        out
    }
}

/// Parses `file:line:col: severity: message` output. Lines that do not start
/// a diagnostic continue the previous message.
pub fn parse_diagnostics(output: &str) -> Vec<Diagnostic> {
    let mut out: Vec<Diagnostic> = Vec::new();
    for line in output.lines() {
        if let Some(d) = parse_diagnostic_line(line) {
            out.push(d);
        } else if let Some(last) = out.last_mut() {
            last.message.push('\n');
            last.message.push_str(line);
        }
    }
    for d in &mut out {
        let trimmed = d.message.trim_end().len();
        d.message.truncate(trimmed);
    }
    out
}

fn parse_diagnostic_line(line: &str) -> Option<Diagnostic> {
    for (tag, severity) in [
        (": error: ", Severity::Error),
        (": warning: ", Severity::Warning),
        (": info: ", Severity::Info),
    ] {
        if let Some(idx) = line.find(tag) {
            let head = &line[..idx];
            let mut parts = head.rsplitn(3, ':');
            let col = parts.next()?.trim().parse().ok()?;
            let ln = parts.next()?.trim().parse().ok()?;
            parts.next()?;
            return Some(Diagnostic {
                severity,
                line: ln,
                column: col,
                message: line[idx + tag.len()..].to_string(),
            });
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub step_index: StepIndex,
    pub closed: bool,
    pub raw_states: Vec<ProofState>,
    pub stderr_text: String,
}

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("lean toolchain not found at {0}")]
    ToolchainMissing(PathBuf),
    #[error("toolchain timed out after {0} s")]
    Timeout(u64),
    #[error("position {line}:{column} is outside the proof", line = .0.line, column = .0.column)]
    PositionOutsideProof(Position),
    #[error("goal query failed: {0}")]
    QueryFailed(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunnerError {
    /// Environment faults, as opposed to findings about the proof.
    pub fn is_environment_fault(&self) -> bool {
        matches!(
            self,
            RunnerError::ToolchainMissing(_) | RunnerError::Timeout(_) | RunnerError::Io { .. }
        )
    }
}

/// A Lean checker that reports diagnostics for a file.
pub trait Toolchain: Send + Sync {
    fn version(&self) -> String;
    fn check_file(&self, path: &Path, timeout: Duration) -> Result<CompileReport, RunnerError>;
}

#[derive(Debug, Clone)]
pub struct RunnerConfig {
    pub timeout: Duration,
    /// Upper bound on concurrently running toolchain processes.
    pub max_parallel: usize,
}

impl Default for RunnerConfig {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(60),
            max_parallel: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(4),
        }
    }
}

impl RunnerConfig {
    /// Defaults overridden by `EXPLORABLE_LEAN_TIMEOUT` (seconds).
    pub fn from_env() -> Self {
        let mut cfg = Self::default();
        if let Some(secs) = std::env::var("EXPLORABLE_LEAN_TIMEOUT")
            .ok()
            .and_then(|s| s.parse().ok())
        {
            cfg.timeout = Duration::from_secs(secs);
        }
        cfg
    }
}

/// Drives a [`Toolchain`] with a bounded worker pool and counts invocations.
pub struct LeanRunner {
    toolchain: Arc<dyn Toolchain>,
    config: RunnerConfig,
    pool: rayon::ThreadPool,
    invocations: AtomicUsize,
    probe_runs: AtomicUsize,
}

impl std::fmt::Debug for LeanRunner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LeanRunner")
            .field("toolchain", &self.toolchain.version())
            .field("config", &self.config)
            .finish()
    }
}

impl LeanRunner {
    pub fn new(toolchain: Arc<dyn Toolchain>, config: RunnerConfig) -> Self {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.max_parallel.max(1))
            .thread_name(|i| format!("lean-worker-{i}"))
            .build()
            .expect("failed to build lean worker pool");
        Self {
            toolchain,
            config,
            pool,
            invocations: AtomicUsize::new(0),
            probe_runs: AtomicUsize::new(0),
        }
    }

    pub fn reference() -> Self {
        Self::new(Arc::new(ReferenceToolchain::new()), RunnerConfig::default())
    }

    /// Lake backend when `EXPLORABLE_LAKE` is set, the reference
    /// interpreter otherwise.
    pub fn from_env() -> Self {
        let config = RunnerConfig::from_env();
        match LakeToolchain::from_env() {
            Some(lake) => Self::new(Arc::new(lake), config),
            None => Self::new(Arc::new(ReferenceToolchain::new()), config),
        }
    }

    pub fn toolchain_version(&self) -> String {
        self.toolchain.version()
    }

    pub fn config(&self) -> &RunnerConfig {
        &self.config
    }

    /// Total toolchain invocations so far.
    pub fn invocations(&self) -> usize {
        self.invocations.load(Ordering::Relaxed)
    }

    pub fn probe_runs(&self) -> usize {
        self.probe_runs.load(Ordering::Relaxed)
    }

    /// Runs jobs on the worker pool; results come back in input order.
    pub fn run_parallel<T, R, F>(&self, jobs: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Send + Sync,
    {
        use rayon::prelude::*;
        self.pool.install(|| jobs.into_par_iter().map(&f).collect())
    }

    fn check_text(&self, text: &str, path: &Path) -> Result<CompileReport, RunnerError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| RunnerError::Io {
                path: dir.to_path_buf(),
                source: e,
            })?;
        }
        std::fs::write(path, text).map_err(|e| RunnerError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        self.invocations.fetch_add(1, Ordering::Relaxed);
        self.toolchain.check_file(path, self.config.timeout)
    }

    pub fn compile(&self, source: &LeanSource, workdir: &Path) -> Result<CompileReport, RunnerError> {
        let name = if source.theorem_name.is_empty() {
            "Main".to_string()
        } else {
            sanitize(&source.theorem_name)
        };
        self.check_text(&source.full_text, &workdir.join(format!("{name}.lean")))
    }

    /// One state per requested position, in request order. A position maps
    /// to the state after every tactic that ends at or before it.
    pub fn goal_states(
        &self,
        source: &LeanSource,
        positions: &[Position],
        workdir: &Path,
    ) -> Result<Vec<ProofState>, RunnerError> {
        let proof =
            ParsedProof::parse(&source.full_text).map_err(|e| RunnerError::QueryFailed(e.to_string()))?;
        let Some(proof) = proof else {
            return match positions.first() {
                Some(p) => Err(RunnerError::PositionOutsideProof(*p)),
                None => Ok(Vec::new()),
            };
        };
        let mut boundaries = Vec::with_capacity(positions.len());
        for p in positions {
            if *p < proof.body_start {
                return Err(RunnerError::PositionOutsideProof(*p));
            }
            boundaries.push(proof.tactics.iter().filter(|t| t.end <= *p).count());
        }
        let mut wanted: Vec<usize> = boundaries.clone();
        wanted.sort_unstable();
        wanted.dedup();
        let instrumented = insert_traces(&source.full_text, &proof, &wanted);
        let name = format!("{}_goals", sanitize(&source.theorem_name));
        let report = self.check_text(&instrumented, &workdir.join(format!("{name}.lean")))?;
        let infos: Vec<&Diagnostic> = report
            .infos()
            .filter(|d| {
                d.message.contains('⊢') || d.message.contains("|-") || d.message.trim() == goal::NO_GOALS
            })
            .collect();
        if infos.len() != wanted.len() {
            return Err(RunnerError::QueryFailed(format!(
                "expected {} goal displays, toolchain produced {}:\n{}",
                wanted.len(),
                infos.len(),
                report.render(&name)
            )));
        }
        let mut states = Vec::with_capacity(positions.len());
        for (p, boundary) in positions.iter().zip(&boundaries) {
            let i = wanted.binary_search(boundary).expect("boundary present");
            let mut state =
                parse_goal_text(&infos[i].message).map_err(|e| RunnerError::QueryFailed(e.to_string()))?;
            state.position = *p;
            states.push(state);
        }
        Ok(states)
    }

    /// Checks a probe file written at `path`.
    pub fn run_probe(
        &self,
        probe_source: &str,
        step_index: StepIndex,
        path: &Path,
    ) -> Result<ProbeOutcome, RunnerError> {
        self.probe_runs.fetch_add(1, Ordering::Relaxed);
        let report = self.check_text(probe_source, path)?;
        let mut raw_states = Vec::new();
        for d in report.infos() {
            if let Ok(mut s) = parse_goal_text(&d.message) {
                s.position = Position::new(d.line, d.column);
                raw_states.push(s);
            }
        }
        let file = path
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(ProbeOutcome {
            step_index,
            closed: report.success,
            raw_states,
            stderr_text: CompileReport::from_diagnostics(report.errors().cloned().collect()).render(&file),
        })
    }
}

fn sanitize(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() {
        "Main".into()
    } else {
        s
    }
}

/// Inserts a `trace_state` line after the given number of tactics for each
/// boundary (0 = before the first tactic).
fn insert_traces(text: &str, proof: &ParsedProof, boundaries: &[usize]) -> String {
    let lines: Vec<&str> = text.lines().collect();
    let indent = proof.tactics.first().map(|t| t.start.column).unwrap_or(2);
    let pad = " ".repeat(indent);
    // Insert after line index (0-based) `after`.
    let mut inserts: Vec<usize> = boundaries
        .iter()
        .map(|&b| {
            if b == 0 {
                proof.body_start.line - 1
            } else {
                proof.tactics[b - 1].end.line - 1
            }
        })
        .collect();
    inserts.sort_unstable();
    let mut out = String::with_capacity(text.len() + inserts.len() * 16);
    let mut next = 0;
    for (i, line) in lines.iter().enumerate() {
        out.push_str(line);
        out.push('\n');
        while next < inserts.len() && inserts[next] == i {
            out.push_str(&pad);
            out.push_str("trace_state\n");
            next += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagnostic_lines() {
        let out =
            "Main.lean:3:2: error: unknown identifier 'y'\nMain.lean:5:2: info: x : ℤ\n⊢ x = x\nother noise";
        let d = parse_diagnostics(out);
        assert_eq!(d.len(), 2);
        assert_eq!(d[0], Diagnostic::error(3, 2, "unknown identifier 'y'"));
        assert_eq!(d[1].severity, Severity::Info);
        assert_eq!(d[1].message, "x : ℤ\n⊢ x = x\nother noise");
    }

    #[test]
    fn windows_paths_parse() {
        let d = parse_diagnostic_line("C:\\work\\Main.lean:10:4: warning: unused").unwrap();
        assert_eq!((d.line, d.column), (10, 4));
    }

    #[test]
    fn render_roundtrip() {
        let r = CompileReport::from_diagnostics(vec![Diagnostic::error(2, 0, "boom")]);
        assert_eq!(parse_diagnostics(&r.render("f.lean")), r.diagnostics);
    }
}
