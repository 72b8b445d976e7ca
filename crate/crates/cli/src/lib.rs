//! Command-line front end and HTTP service for explorable proof documents.

pub mod args;
pub mod commands;
pub mod service;

use std::sync::Arc;
use std::time::Duration;

use explorable_core::lean::LeanRunner;
use explorable_core::prober::ProbeContext;

use args::{Cli, Command};
use commands::{CliError, Paths};

impl Cli {
    pub fn paths(&self) -> Paths {
        Paths {
            corpus: self.corpus.clone(),
            bundles: self.bundles.clone(),
            fixtures: self.fixtures.clone(),
            workdir: self
                .workdir
                .clone()
                .unwrap_or_else(|| std::env::temp_dir().join("explorable")),
        }
    }
}

/// Runs one command, printing its report to stdout.
pub async fn run(cli: Cli) -> Result<(), CliError> {
    let paths = cli.paths();
    let runner = Arc::new(LeanRunner::from_env());
    match cli.command {
        Command::Formalize { doc, provider } => {
            let path = blocking(move || commands::formalize(&paths, &doc, provider, &runner)).await?;
            println!("wrote {}", path.display());
        }
        Command::Analyze { doc, provider } => {
            let warnings = blocking(move || commands::analyze(&paths, &doc, provider, &runner)).await?;
            for w in &warnings {
                println!("warning: {w}");
            }
            println!("analyzed ({} warnings)", warnings.len());
        }
        Command::Precompute { doc, range } => {
            let out = blocking(move || commands::precompute(&paths, &doc, &range, &runner)).await?;
            println!("computed: {}", out.computed.join(", "));
            println!("cached: {}", out.cached.join(", "));
        }
        Command::OracleCheck { doc, range } => {
            let report = blocking(move || commands::oracle_check_cmd(&paths, &doc, &range, &runner)).await?;
            for d in &report.disagreements {
                let step = d
                    .break_step
                    .map(|s| format!(" (break at step {s})"))
                    .unwrap_or_default();
                println!("disagreement at {}: {:?}{step}", d.binding, d.kind);
            }
            println!(
                "checked {} bindings, {} disagreements",
                report.checked,
                report.disagreements.len()
            );
            if !report.is_clean() {
                return Err(CliError::Findings(format!(
                    "{} disagreements",
                    report.disagreements.len()
                )));
            }
        }
        Command::SeedFixtures { doc, clean } => {
            let ids = blocking(move || commands::seed_fixtures(&paths, &doc, clean, &runner)).await?;
            println!("seeded fixtures for {}", ids.join(", "));
        }
        Command::Serve {
            port,
            host,
            deadline,
            max_uncached,
        } => {
            let docs = service::load_documents(&paths.bundles).map_err(CliError::Config)?;
            tracing::info!(count = docs.len(), "loaded bundles");
            let state = service::AppState::new(
                docs,
                runner,
                ProbeContext::new(&paths.workdir),
                service::ServiceConfig {
                    deadline: Duration::from_secs(deadline),
                    max_uncached,
                },
            );
            let listener = tokio::net::TcpListener::bind((host.as_str(), port))
                .await
                .map_err(|e| CliError::Config(format!("bind {host}:{port}: {e}")))?;
            println!(
                "listening on http://{}",
                listener
                    .local_addr()
                    .map_err(|e| CliError::Failure(e.to_string()))?
            );
            axum::serve(listener, service::router(Arc::new(state)))
                .with_graceful_shutdown(async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await
                .map_err(|e| CliError::Failure(e.to_string()))?;
        }
    }
    Ok(())
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, CliError> + Send + 'static,
) -> Result<T, CliError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| CliError::Failure(e.to_string()))?
}
