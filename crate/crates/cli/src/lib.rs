//! Command-line harness: configuration, the experiment commands and report output.
//!
//! Exit codes: 0 success, 1 failed check, 2 usage error, 3 I/O error.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod svg;
pub mod verify;

use std::ffi::OsString;
use std::time::Instant;

use clap::Parser;

pub use config::{Command, ConfigOverlay, ExperimentConfig, Format};
pub use error::{CliError, EXIT_CHECK_FAILED, EXIT_IO, EXIT_OK, EXIT_USAGE};
pub use report::{Check, ExperimentReport};

/// Resolves the configuration and runs the command on `jobs` worker threads.
pub fn run_config(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<ExperimentReport, CliError> {
    let start = Instant::now();
    let mut report = match jobs {
        Some(0) => return Err(CliError::Usage("--jobs must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Io(e.to_string()))?
            .install(|| commands::execute(cfg))?,
        None => commands::execute(cfg)?,
    };
    report.wall_clock_s = start.elapsed().as_secs_f64();
    Ok(report)
}

fn run_parsed(cli: config::Cli) -> Result<(), CliError> {
    let (command, args) = cli.command.split();
    let overlay = match &args.config {
        Some(path) => args.overlay.over(ConfigOverlay::from_file(path)?),
        None => args.overlay,
    };
    let cfg = ExperimentConfig::resolve(command, overlay)?;
    let report = run_config(&cfg, args.jobs)?;
    for (k, v) in &report.summary {
        eprintln!("{k} = {v:?}");
    }
    for c in &report.checks {
        eprintln!("{}", c.line());
    }
    report.emit(cfg.format, cfg.out.as_deref())?;
    match report.failed_checks() {
        failed if failed.is_empty() => Ok(()),
        failed => Err(CliError::Check(failed)),
    }
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match config::Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run_parsed(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> i32 {
        run_cli(std::iter::once("mixedness").chain(args.iter().copied()))
    }

    #[test]
    fn exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("p.csv");
        let out = out.to_str().unwrap();
        assert_eq!(run(&["paninski", "--d", "4", "--n", "2", "--out", out]), EXIT_OK);
        assert!(std::fs::read_to_string(out).unwrap().starts_with("d,eps,t,"));
        assert_eq!(run(&["certify", "--state", "nonsense", "--out", out]), EXIT_USAGE);
        assert_eq!(run(&["frobnicate"]), EXIT_USAGE);
        assert_eq!(run(&["certify", "--jobs", "0", "--out", out]), EXIT_USAGE);
        assert_eq!(run(&["--help"]), EXIT_OK);
        let missing = dir.path().join("no/such/dir/x.csv");
        assert_eq!(run(&["paninski", "--d", "4", "--n", "2", "--out", missing.to_str().unwrap()]), EXIT_IO);
        let config = dir.path().join("missing.json");
        assert_eq!(run(&["certify", "--config", config.to_str().unwrap()]), EXIT_IO);
    }

    #[test]
    fn config_file_and_flags_merge() {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("c.json");
        std::fs::write(&config, r#"{"d": [8], "trials": 5, "seed": 3, "format": "json"}"#).unwrap();
        let out = dir.path().join("r.json");
        let args = ["certify", "--config", config.to_str().unwrap(), "--trials", "7", "--out", out.to_str().unwrap()];
        assert_eq!(run(&args), EXIT_OK);
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(v["config"]["trials"], 7);
        assert_eq!(v["config"]["seed"], 3);
        assert_eq!(v["rows"].as_array().unwrap().len(), 7);
        std::fs::write(&config, r#"{"dimension": 8}"#).unwrap();
        assert_eq!(run(&["certify", "--config", config.to_str().unwrap()]), EXIT_USAGE);
    }

    #[test]
    fn svg_output_parses() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("t.svg");
        let args = ["tails", "--d", "8", "--trials", "1000", "--format", "svg", "--out", out.to_str().unwrap()];
        assert_eq!(run(&args), EXIT_OK);
        roxmltree::Document::parse(&std::fs::read_to_string(&out).unwrap()).unwrap();
    }
}
