//! The six experiment commands. Each returns a report; none writes output itself.

use std::path::Path;

use serde_json::json;

use mixedness::certifier::{copies_needed, test_mixed_with_copies, CertifyVerdict, C1};
use mixedness::mc;
use mixedness::moments::{tail_experiment, TailCurve, TailStatistic};
use mixedness::paninski::{delta_closed_form, enumeration_oracle, histogram, transcript_from_index, PaninskiRow};
use mixedness::states::{run_schedule, DensityMatrix, Povm, StateSource};
use mixedness::stats::{fmt_f64, wilson_interval};
use mixedness::{Hermitian, Matrix, MatrixFile, RngSeed};

use crate::config::{Command, ExperimentConfig};
use crate::error::CliError;
use crate::report::{Check, ExperimentReport};
use crate::svg::{Plot, Series};
use crate::verify;

/// Normal quantile for the 95% Wilson intervals.
const WILSON_Z: f64 = 1.96;

pub fn execute(cfg: &ExperimentConfig) -> Result<ExperimentReport, CliError> {
    match cfg.command {
        Command::Certify => certify(cfg),
        Command::Sweep => sweep(cfg),
        Command::Paninski => paninski(cfg),
        Command::Verify => verify::run(cfg),
        Command::Tails => tails(cfg),
        Command::Simulate => simulate(cfg),
    }
}

/// `mixed`, `hard`, `pure` (the first basis vector) or `file:<path>` (matrix JSON).
pub fn parse_state(spec: &str, d: usize, eps: f64) -> Result<StateSource<f64>, CliError> {
    match spec {
        "mixed" => Ok(StateSource::Fixed(DensityMatrix::maximally_mixed(d))),
        "hard" => {
            if d % 2 != 0 {
                return Err(CliError::Usage(format!("the hard instance needs even d, got {d}")));
            }
            Ok(StateSource::HardInstance { d, eps })
        }
        "pure" => {
            let mut v = vec![num_complex::Complex::new(0.0, 0.0); d];
            v[0] = num_complex::Complex::new(1.0, 0.0);
            Ok(StateSource::Fixed(DensityMatrix::pure(&v)?))
        }
        other => match other.strip_prefix("file:") {
            Some(path) => {
                let rho = load_state(Path::new(path))?;
                if rho.dim() != d {
                    return Err(CliError::Usage(format!("state file has dimension {}, expected {d}", rho.dim())));
                }
                Ok(StateSource::Fixed(rho))
            }
            None => Err(CliError::Usage(format!("unknown state '{other}'; expected mixed, hard, pure or file:<path>"))),
        },
    }
}

fn load_state(path: &Path) -> Result<DensityMatrix<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let file: MatrixFile =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(DensityMatrix::new(Hermitian::new(Matrix::from_file(&file)?)?)?)
}

fn rate_summary(report: &mut ExperimentReport, name: &str, hits: usize, trials: usize) {
    let (lo, hi) = wilson_interval(hits as u64, trials as u64, WILSON_Z);
    let rate = if trials == 0 { 0.0 } else { hits as f64 / trials as f64 };
    report.summary.push((format!("{name}_rate"), rate));
    report.summary.push((format!("{name}_wilson_lo"), lo));
    report.summary.push((format!("{name}_wilson_hi"), hi));
}

fn certify(cfg: &ExperimentConfig) -> Result<ExperimentReport, CliError> {
    let d = cfg.single_d()?;
    let source = parse_state(&cfg.state, d, cfg.eps)?;
    let n = match cfg.n {
        Some(n) => n,
        None => copies_needed(d, cfg.eps)?,
    };
    let results = mc::per_trial(RngSeed(cfg.seed), cfg.trials, |s, _| test_mixed_with_copies(&source, d, cfg.eps, n, s))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let mut report =
        ExperimentReport::new(cfg, &["trial", "verdict", "d", "eps", "N", "S", "threshold", "seed"]);
    for (i, r) in results.iter().enumerate() {
        report.rows.push(vec![
            i.to_string(),
            serde_json::to_value(r.verdict).expect("enum").as_str().expect("string").to_string(),
            r.d.to_string(),
            fmt_f64(r.eps),
            r.n.to_string(),
            r.s.to_string(),
            fmt_f64(r.threshold),
            r.seed.to_string(),
        ]);
    }
    let yes = results.iter().filter(|r| r.verdict == CertifyVerdict::Yes).count();
    report.summary.push(("trials".into(), cfg.trials as f64));
    report.summary.push(("N".into(), n as f64));
    rate_summary(&mut report, "yes", yes, cfg.trials);
    rate_summary(&mut report, "no", cfg.trials - yes, cfg.trials);
    Ok(report)
}

/// `⌈m · C₁ d^{3/2}/ε²⌉`.
pub fn sweep_copies(d: usize, eps: f64, multiplier: f64) -> usize {
    (multiplier * C1 * (d as f64).powf(1.5) / (eps * eps)).ceil() as usize
}

fn sweep(cfg: &ExperimentConfig) -> Result<ExperimentReport, CliError> {
    if cfg.d.len() < 2 {
        return Err(CliError::Usage("sweep needs at least two dimensions in --d".into()));
    }
    if cfg.multipliers.is_empty() {
        return Err(CliError::Usage("sweep needs at least one multiplier".into()));
    }
    let mut report = ExperimentReport::new(
        cfg,
        &["d", "eps", "multiplier", "N", "n_ratio", "yes_rate_mixed", "no_rate_hard", "success", "trials", "seed"],
    );
    let mut plot = Plot {
        title: format!("certifier success, eps = {}", cfg.eps),
        x_label: "N / (d^1.5 / eps^2)".into(),
        y_label: "success rate".into(),
        log_x: false,
        log_y: false,
        series: Vec::new(),
    };
    let root = RngSeed(cfg.seed);
    for &d in &cfg.d {
        let mixed = parse_state("mixed", d, cfg.eps)?;
        let hard = parse_state("hard", d, cfg.eps)?;
        let scale = (d as f64).powf(1.5) / (cfg.eps * cfg.eps);
        let mut points = Vec::new();
        for (k, &m) in cfg.multipliers.iter().enumerate() {
            let n = sweep_copies(d, cfg.eps, m);
            let cell = root.derive(d as u64).derive(k as u64);
            let count = |source: &StateSource<f64>, stream: u64, want: CertifyVerdict| -> Result<usize, CliError> {
                let hits = mc::per_trial(cell.derive(stream), cfg.trials, |s, _| {
                    test_mixed_with_copies(source, d, cfg.eps, n, s).map(|r| r.verdict == want)
                });
                Ok(hits.into_iter().collect::<Result<Vec<_>, _>>()?.into_iter().filter(|&h| h).count())
            };
            let yes = count(&mixed, 0, CertifyVerdict::Yes)?;
            let no = count(&hard, 1, CertifyVerdict::No)?;
            let t = cfg.trials.max(1) as f64;
            let success = (yes + no) as f64 / (2.0 * t);
            points.push((n as f64 / scale, success));
            report.rows.push(vec![
                d.to_string(),
                fmt_f64(cfg.eps),
                fmt_f64(m),
                n.to_string(),
                fmt_f64(n as f64 / scale),
                fmt_f64(yes as f64 / t),
                fmt_f64(no as f64 / t),
                fmt_f64(success),
                cfg.trials.to_string(),
                cell.0.to_string(),
            ]);
        }
        plot.series.push(Series { label: format!("d = {d}"), points, dashed: false });
    }
    report.plot = Some(plot);
    Ok(report)
}

/// Largest deviation between closed forms and the enumeration oracle at length `t`.
fn oracle_deviation(oracle: &mixedness::paninski::OracleTables, row: &PaninskiRow) -> f64 {
    let (d, t) = (oracle.d, row.t);
    let mut dev = (row.zt_exact - oracle.zt[t]).abs().max((row.chisq_exact - oracle.chisq[t]).abs());
    for (k, &delta) in oracle.delta[t].iter().enumerate() {
        let h = histogram(d, &transcript_from_index(d, t, k)).expect("symbols in range");
        dev = dev.max((delta_closed_form(&h, &oracle.eps) - delta).abs());
    }
    dev
}

/// Tolerance on closed-form against enumeration.
pub const ORACLE_TOL: f64 = 1e-12;

fn paninski(cfg: &ExperimentConfig) -> Result<ExperimentReport, CliError> {
    let d = cfg.single_d()?;
    let t_max = cfg.n.unwrap_or(3);
    if t_max == 0 {
        return Err(CliError::Usage("paninski needs --n >= 1".into()));
    }
    let oracle = enumeration_oracle(d, cfg.eps, t_max).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut header: Vec<&str> = PaninskiRow::CSV_HEADER.to_vec();
    header.extend(["chain_rule_rhs", "max_abs_dev"]);
    let mut report = ExperimentReport::new(cfg, &header);
    let mut chain = 0.0;
    for t in 1..=t_max {
        let row = PaninskiRow {
            d,
            eps: cfg.eps,
            t,
            zt_exact: mixedness::paninski::zt_exact_f64(d, cfg.eps, t as u64)?,
            delta_min_over_transcripts: Some(oracle.delta_min(t - 1)),
            chisq_exact: mixedness::paninski::chisq_exact_f64(d, t as u64, cfg.eps)?,
            kl_exact: Some(oracle.kl[t]),
        };
        chain += row.zt_exact;
        let dev = oracle_deviation(&oracle, &row);
        let floor = (1.0 - cfg.eps * cfg.eps).powf((t as f64 - 1.0) / 2.0);
        report.checks.push(Check::within(format!("kl_le_chain_rule_t{t}"), oracle.kl[t] - chain, f64::NEG_INFINITY, 0.0));
        report.checks.push(Check::within(format!("closed_form_vs_oracle_t{t}"), dev, 0.0, ORACLE_TOL));
        report.checks.push(Check::within(
            format!("delta_lower_bound_t{t}"),
            oracle.delta_min(t - 1),
            floor * (1.0 - 1e-12),
            f64::INFINITY,
        ));
        let mut rec = row.csv_record();
        rec.push(fmt_f64(chain));
        rec.push(fmt_f64(dev));
        report.rows.push(rec);
    }
    Ok(report)
}

fn tails(cfg: &ExperimentConfig) -> Result<ExperimentReport, CliError> {
    let d = cfg.single_d()?;
    let stat = TailStatistic::parse(&cfg.statistic)?;
    let curve = tail_experiment(stat, d, cfg.eps, &Povm::standard_basis(d), cfg.trials, None, RngSeed(cfg.seed))?;
    let mut report = ExperimentReport::new(cfg, &TailCurve::CSV_HEADER);
    report.rows = curve.csv_records();
    for (name, value) in &curve.bound_constants {
        report.summary.push((format!("bound_{name}"), *value));
    }
    let pts = |v: &[f64]| curve.thresholds.iter().copied().zip(v.iter().copied()).collect::<Vec<_>>();
    report.plot = Some(Plot {
        title: format!("{} tail, d = {d}, eps = {}", stat.label(), cfg.eps),
        x_label: "threshold".into(),
        y_label: "P[statistic > threshold]".into(),
        log_x: false,
        log_y: true,
        series: vec![
            Series { label: "empirical".into(), points: pts(&curve.empirical_exceed_prob), dashed: false },
            Series { label: "bound".into(), points: pts(&curve.bound_value), dashed: true },
        ],
    });
    Ok(report)
}

fn simulate(cfg: &ExperimentConfig) -> Result<ExperimentReport, CliError> {
    let d = cfg.single_d()?;
    let n = cfg.n.unwrap_or(16);
    let source = parse_state(&cfg.state, d, cfg.eps)?;
    let schedule = cfg.schedule.build::<f64>(d);
    let runs = mc::per_trial(RngSeed(cfg.seed), cfg.trials, |s, _| run_schedule(&source, &schedule, n, s))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let mut report = ExperimentReport::new(cfg, &["trial", "povm", "outcomes"]);
    let label = cfg.schedule.label();
    let mut records = Vec::with_capacity(runs.len());
    for (i, tr) in runs.iter().enumerate() {
        let outcomes: Vec<String> = tr.outcomes.iter().map(|x| x.to_string()).collect();
        report.rows.push(vec![i.to_string(), label.to_string(), outcomes.join(" ")]);
        records.push(json!({ "trial": i, "outcomes": tr.outcomes, "povm": label }));
    }
    report.records = Some(records);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ConfigOverlay;

    fn cfg(command: Command, o: ConfigOverlay) -> ExperimentConfig {
        ExperimentConfig::resolve(command, o).unwrap()
    }

    #[test]
    fn state_specs() {
        assert!(parse_state("mixed", 5, 0.5).is_ok());
        assert!(matches!(parse_state("hard", 5, 0.5), Err(CliError::Usage(_))));
        assert!(matches!(parse_state("bogus", 4, 0.5), Err(CliError::Usage(_))));
        assert!(matches!(parse_state("file:/nonexistent/rho.json", 4, 0.5), Err(CliError::Io(_))));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rho.json");
        std::fs::write(&path, Matrix::<f64>::identity(4).scale(0.25).to_json()).unwrap();
        assert!(parse_state(&format!("file:{}", path.display()), 4, 0.5).is_ok());
        assert!(matches!(parse_state(&format!("file:{}", path.display()), 8, 0.5), Err(CliError::Usage(_))));
    }

    #[test]
    fn zero_trials_give_an_empty_report() {
        let r = execute(&cfg(Command::Certify, ConfigOverlay { trials: Some(0), ..Default::default() })).unwrap();
        assert!(r.rows.is_empty());
        assert_eq!(r.to_csv().unwrap().lines().count(), 1);
    }

    #[test]
    fn paninski_small_table() {
        let r = execute(&cfg(
            Command::Paninski,
            ConfigOverlay { d: Some(vec![4]), eps: Some(0.5), n: Some(3), ..Default::default() },
        ))
        .unwrap();
        assert_eq!(r.rows.len(), 3);
        assert!(r.failed_checks().is_empty(), "{:?}", r.failed_checks());
        assert_eq!(r.rows[0][5], "0.0");
        let over = execute(&cfg(Command::Paninski, ConfigOverlay { d: Some(vec![16]), n: Some(9), ..Default::default() }));
        assert!(matches!(over, Err(CliError::Usage(_))));
    }

    #[test]
    fn sweep_guards_and_degenerate_row() {
        let one = cfg(Command::Sweep, ConfigOverlay { d: Some(vec![8]), ..Default::default() });
        assert!(matches!(execute(&one), Err(CliError::Usage(_))));
        let r = execute(&cfg(
            Command::Sweep,
            ConfigOverlay { d: Some(vec![4, 8]), multipliers: Some(vec![0.0]), trials: Some(10), ..Default::default() },
        ))
        .unwrap();
        for row in &r.rows {
            assert_eq!(row[7], "0.5");
        }
    }

    #[test]
    fn simulate_records_match_rows() {
        let r = execute(&cfg(
            Command::Simulate,
            ConfigOverlay { d: Some(vec![4]), n: Some(5), trials: Some(3), state: Some("hard".into()), ..Default::default() },
        ))
        .unwrap();
        let text = r.to_jsonl();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        let first: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(first["povm"], "fixed");
        assert_eq!(first["outcomes"].as_array().unwrap().len(), 5);
    }
}
