//! Experiment configuration: CLI flags override the config file, which overrides defaults.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use mixedness::states::ScheduleKind;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Certify,
    Sweep,
    Paninski,
    Verify,
    Tails,
    Simulate,
}

impl Command {
    pub fn label(self) -> &'static str {
        match self {
            Command::Certify => "certify",
            Command::Sweep => "sweep",
            Command::Paninski => "paninski",
            Command::Verify => "verify",
            Command::Tails => "tails",
            Command::Simulate => "simulate",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
    /// One JSON object per line; `simulate` only.
    Jsonl,
    Svg,
}

/// Every flag is optional so that unset flags fall through to the config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverlay {
    /// Dimension, or a comma-separated grid for `sweep` and `verify`.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Vec<usize>>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Copy count or transcript length; overrides the command's default.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Outer Monte-Carlo samples.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer: Option<usize>,
    /// Haar pairs per estimate.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<usize>,
    /// Inner Haar draws per estimate.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner: Option<usize>,
    /// `fixed`, `fresh-haar` or `greedy-realign`.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<String>,
    /// `mixed`, `hard`, `pure` or `file:<path>`.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<String>,
    /// `diag_norm`, `phi` or `k_stat`.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statistic: Option<String>,
    /// Multiples of the calibrated copy count for `sweep`.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multipliers: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

impl ConfigOverlay {
    /// Fields set in `self` win over those in `lower`.
    pub fn over(self, lower: ConfigOverlay) -> ConfigOverlay {
        ConfigOverlay {
            d: self.d.or(lower.d),
            eps: self.eps.or(lower.eps),
            n: self.n.or(lower.n),
            trials: self.trials.or(lower.trials),
            seed: self.seed.or(lower.seed),
            outer: self.outer.or(lower.outer),
            pairs: self.pairs.or(lower.pairs),
            inner: self.inner.or(lower.inner),
            schedule: self.schedule.or(lower.schedule),
            state: self.state.or(lower.state),
            statistic: self.statistic.or(lower.statistic),
            multipliers: self.multipliers.or(lower.multipliers),
            out: self.out.or(lower.out),
            format: self.format.or(lower.format),
        }
    }

    pub fn from_file(path: &Path) -> Result<ConfigOverlay, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))
    }
}

#[derive(Debug, Parser)]
#[command(name = "mixedness", version, about = "Seeded experiments for testing the maximally mixed state")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Run independent certifications and report acceptance rates.
    Certify(RunArgs),
    /// Success rate against copy count over a grid of dimensions.
    Sweep(RunArgs),
    /// Exact classical tables for the paired-perturbation instance.
    Paninski(RunArgs),
    /// Moment identities, tail shapes and scaling fits.
    Verify(RunArgs),
    /// Empirical tail curve of one statistic.
    Tails(RunArgs),
    /// Dump measurement transcripts.
    Simulate(RunArgs),
}

impl CliCommand {
    pub fn split(self) -> (Command, RunArgs) {
        match self {
            CliCommand::Certify(a) => (Command::Certify, a),
            CliCommand::Sweep(a) => (Command::Sweep, a),
            CliCommand::Paninski(a) => (Command::Paninski, a),
            CliCommand::Verify(a) => (Command::Verify, a),
            CliCommand::Tails(a) => (Command::Tails, a),
            CliCommand::Simulate(a) => (Command::Simulate, a),
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub overlay: ConfigOverlay,
    /// JSON file with any subset of the configuration fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// Fully resolved configuration, echoed in every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub d: Vec<usize>,
    pub eps: f64,
    pub n: Option<usize>,
    pub trials: usize,
    pub seed: u64,
    pub outer: usize,
    pub pairs: usize,
    pub inner: usize,
    pub schedule: ScheduleKind,
    pub state: String,
    pub statistic: String,
    pub multipliers: Vec<f64>,
    pub out: Option<PathBuf>,
    pub format: Format,
}

/// Default Monte-Carlo budget of `verify`.
pub const VERIFY_PAIRS: usize = 20_000;

/// Default dimension list per command.
fn default_d(command: Command) -> Vec<usize> {
    match command {
        Command::Sweep => vec![8, 16, 32],
        Command::Verify => vec![8, 16],
        Command::Paninski => vec![4],
        _ => vec![16],
    }
}

impl ExperimentConfig {
    pub fn resolve(command: Command, o: ConfigOverlay) -> Result<ExperimentConfig, CliError> {
        let schedule = match &o.schedule {
            Some(s) => ScheduleKind::parse(s).map_err(|e| CliError::Usage(e.to_string()))?,
            None => ScheduleKind::Fixed,
        };
        let cfg = ExperimentConfig {
            command,
            d: o.d.unwrap_or_else(|| default_d(command)),
            eps: o.eps.unwrap_or(0.5),
            n: o.n,
            trials: o.trials.unwrap_or(match command {
                Command::Tails => 10_000,
                Command::Simulate => 4,
                _ => 200,
            }),
            seed: o.seed.unwrap_or(0),
            outer: o.outer.unwrap_or(mixedness::likelihood::DEFAULT_OUTER),
            pairs: o.pairs.unwrap_or(match command {
                Command::Verify => VERIFY_PAIRS,
                _ => mixedness::likelihood::DEFAULT_PAIRS,
            }),
            inner: o.inner.unwrap_or(mixedness::likelihood::DEFAULT_INNER),
            schedule,
            state: o.state.unwrap_or_else(|| "mixed".into()),
            statistic: o.statistic.unwrap_or_else(|| "phi".into()),
            multipliers: o.multipliers.unwrap_or_else(|| vec![0.0, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0]),
            out: o.out,
            format: o.format.unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        if self.d.is_empty() || self.d.contains(&0) {
            return usage("--d needs positive dimensions".into());
        }
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return usage(format!("--eps must lie in (0, 1], got {}", self.eps));
        }
        if self.outer == 0 || self.pairs == 0 || self.inner == 0 {
            return usage("Monte-Carlo budgets must be positive".into());
        }
        if self.multipliers.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return usage("--multipliers must be nonnegative".into());
        }
        Ok(())
    }

    /// The single dimension of commands that take one.
    pub fn single_d(&self) -> Result<usize, CliError> {
        match self.d.as_slice() {
            [d] => Ok(*d),
            _ => Err(CliError::Usage(format!("{} takes a single --d", self.command.label()))),
        }
    }

    /// File form: every field explicit, loadable with `--config`.
    pub fn to_overlay(&self) -> ConfigOverlay {
        ConfigOverlay {
            d: Some(self.d.clone()),
            eps: Some(self.eps),
            n: self.n,
            trials: Some(self.trials),
            seed: Some(self.seed),
            outer: Some(self.outer),
            pairs: Some(self.pairs),
            inner: Some(self.inner),
            schedule: Some(self.schedule.label().into()),
            state: Some(self.state.clone()),
            statistic: Some(self.statistic.clone()),
            multipliers: Some(self.multipliers.clone()),
            out: self.out.clone(),
            format: Some(self.format),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_cli_over_file_over_defaults() {
        let file = ConfigOverlay { eps: Some(0.25), seed: Some(9), trials: Some(7), ..Default::default() };
        let cli = ConfigOverlay { seed: Some(3), ..Default::default() };
        let cfg = ExperimentConfig::resolve(Command::Certify, cli.over(file)).unwrap();
        assert_eq!((cfg.seed, cfg.eps, cfg.trials, cfg.d.clone()), (3, 0.25, 7, vec![16]));
        assert_eq!(ExperimentConfig::resolve(Command::Certify, ConfigOverlay::default()).unwrap().seed, 0);
    }

    #[test]
    fn file_form_round_trips() {
        let o = ConfigOverlay {
            d: Some(vec![8, 32]),
            eps: Some(0.1 + 0.2),
            n: Some(11),
            schedule: Some("greedy-realign".into()),
            multipliers: Some(vec![0.5, 1.0 / 3.0]),
            format: Some(Format::Json),
            ..Default::default()
        };
        let cfg = ExperimentConfig::resolve(Command::Sweep, o).unwrap();
        let text = serde_json::to_string(&cfg.to_overlay()).unwrap();
        let back: ConfigOverlay = serde_json::from_str(&text).unwrap();
        assert_eq!(ExperimentConfig::resolve(Command::Sweep, back).unwrap(), cfg);
    }

    #[test]
    fn invalid_values_are_usage_errors() {
        for o in [
            ConfigOverlay { eps: Some(0.0), ..Default::default() },
            ConfigOverlay { d: Some(vec![]), ..Default::default() },
            ConfigOverlay { schedule: Some("zigzag".into()), ..Default::default() },
            ConfigOverlay { pairs: Some(0), ..Default::default() },
        ] {
            assert!(matches!(ExperimentConfig::resolve(Command::Certify, o), Err(CliError::Usage(_))));
        }
        assert!(serde_json::from_str::<ConfigOverlay>(r#"{"bogus": 1}"#).is_err());
    }
}
