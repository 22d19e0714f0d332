mod args;
mod commands;
mod manifest;

use std::io::IsTerminal;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use chrono::Utc;
use clap::Parser;
use langscale::augment::write_json_atomic;
use tracing::error;
use tracing_subscriber::EnvFilter;

use crate::args::{Cli, Command};
use crate::commands::{manifest_path, Failure, Outcome};
use crate::manifest::RunManifest;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    let cli = Cli::parse();
    let started_at = Utc::now();
    let clock = Instant::now();
    let config = cli.config.as_deref();

    let (mut manifest, default_out, result): (RunManifest, _, Outcome) = match cli.command {
        Command::Analyze(a) => {
            let mut m = RunManifest::new("analyze", started_at);
            match a.with_config(config) {
                Ok(a) => {
                    let r = commands::analyze(&a, &mut m);
                    (m, a.out.unwrap_or_else(|| "report.json".into()), r)
                }
                Err(e) => (m, "report.json".into(), Err(Failure::Input(e))),
            }
        }
        Command::Compare(a) => {
            let mut m = RunManifest::new("compare", started_at);
            match a.with_config(config) {
                Ok(a) => {
                    let r = commands::compare(&a, &mut m);
                    (m, a.out.unwrap_or_else(|| "comparison.json".into()), r)
                }
                Err(e) => (m, "comparison.json".into(), Err(Failure::Input(e))),
            }
        }
        Command::Augment(a) => {
            let mut m = RunManifest::new("augment", started_at);
            match a.with_config(config) {
                Ok(a) => {
                    let r = commands::augment(&a, &mut m);
                    (m, a.out.unwrap_or_else(|| "augmented.jsonl".into()), r)
                }
                Err(e) => (m, "augmented.jsonl".into(), Err(Failure::Input(e))),
            }
        }
    };
    if let Some(path) = config {
        manifest.add_input(path);
    }

    let code = match &result {
        Ok(()) => 0,
        Err(f) => {
            let msg = describe(f.error());
            error!("{msg}");
            manifest.error = Some(msg);
            f.exit_code()
        }
    };
    manifest.exit_code = code;
    manifest.finished_at = Utc::now();
    manifest.wall_clock_secs = clock.elapsed().as_secs_f64();
    let path = cli.manifest.unwrap_or_else(|| manifest_path(Some(&default_out)));
    if let Err(e) = write_json_atomic(&path, &manifest).with_context(|| format!("cannot write manifest {}", path.display())) {
        error!("{e:#}");
        return ExitCode::from(if code == 0 { 1 } else { code as u8 });
    }
    ExitCode::from(code as u8)
}

/// The error chain joined by ": ", skipping causes already quoted by the
/// message above them.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if out.is_empty() {
            out = msg;
        } else if !out.contains(&msg) {
            out = format!("{out}: {msg}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn describe_skips_repeated_causes() {
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        let e = anyhow::Error::new(io).context("cannot read x: gone").context("cannot load x");
        assert_eq!(describe(&e), "cannot load x: cannot read x: gone");
    }
}
