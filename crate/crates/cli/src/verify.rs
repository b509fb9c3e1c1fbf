//! The `verify` suite: exact Weingarten identities, their Monte-Carlo counterparts,
//! tail shapes, moment growth and the fluctuation scaling fit.

use num_rational::BigRational;

use mixedness::haar::{ginibre, random_unit_vector};
use mixedness::likelihood::{delta_mc, psi, LikelihoodContext};
use mixedness::mc;
use mixedness::moments::{
    expected_g_squared, fluctuation_scaling, k_statistic_mean_mc, moment_growth_experiment,
    psi_second_moment_experiment, second_moment_from_traces, second_moment_trace, second_moment_trace_mc,
    tail_experiment, wg2, PermS2, PovmFamily, TailStatistic, REGIME_FRACTION,
};
use mixedness::states::{run_schedule, DensityMatrix, Povm, ScheduleKind, StateSource};
use mixedness::stats::fmt_f64;
use mixedness::{Field, Hermitian, RngSeed};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::report::{Check, ExperimentReport};
use crate::svg::{Plot, Series};

/// Width of the Monte-Carlo acceptance band in standard errors.
pub const SIGMA_BAND: f64 = 3.0;
/// Dimensions of the fluctuation fit.
pub const SCALING_DIMS: [usize; 4] = [8, 16, 32, 64];
/// Haar pairs per dimension in the fluctuation fit, at most.
pub const SCALING_PAIRS: usize = 10_000;
/// Transcript length for the `Δ² = E[Ψ]` check.
pub const TRANSCRIPT_LEN: usize = 6;

fn exact_checks(d: usize, checks: &mut Vec<Check>) -> Result<(), CliError> {
    let df = BigRational::from_u64(d as u64);
    let row = wg2::<BigRational>(PermS2::E, d)? + wg2::<BigRational>(PermS2::TauStar, d)? * df.clone();
    checks.push(Check::within(format!("weingarten_row_sum_d{d}"), row.to_f64(), 0.0, 0.0));
    let zero = BigRational::from_u64(0);
    let one = BigRational::from_u64(1);
    let pi_xprime = second_moment_from_traces(one.clone(), one.clone(), zero, df.clone(), d)?;
    let want = one / (df + BigRational::from_u64(1));
    checks.push(Check::within(format!("projector_vs_xprime_exact_d{d}"), (pi_xprime - want).to_f64(), 0.0, 0.0));
    Ok(())
}

fn mc_checks(d: usize, eps: f64, pairs: usize, seed: RngSeed, checks: &mut Vec<Check>) -> Result<(), CliError> {
    let ctx = LikelihoodContext::new(d, eps)?;
    let mut rng = seed.derive(0).rng();

    let g = ginibre::<f64, _>(d, &mut rng);
    let a = Hermitian::new(&g + &g.adjoint())?;
    let g = ginibre::<f64, _>(d, &mut rng);
    let b = Hermitian::new(&g + &g.adjoint())?;
    let exact = second_moment_trace(&a, &b)?;
    let est = second_moment_trace_mc(&a, &b, pairs, seed.derive(1))?;
    checks.push(Check::sigma(format!("second_moment_mc_d{d}"), est.mean, exact, est.stderr, SIGMA_BAND));

    let v = mixedness::haar::haar_unitary::<f64, _>(d, &mut rng);
    let rotated = second_moment_trace(&a.conjugate_by(&v)?, &b)?;
    checks.push(Check::within(
        format!("unitary_invariance_d{d}"),
        (rotated - exact).abs() / exact.abs().max(1.0),
        0.0,
        1e-10,
    ));

    let m_hat = Hermitian::outer(&random_unit_vector::<f64, _>(d, &mut rng));
    let closed = expected_g_squared(&m_hat, eps)?;
    let target = eps * eps / (d + 1) as f64;
    checks.push(Check::within(format!("g_squared_rank_one_exact_d{d}"), (closed - target).abs(), 0.0, 1e-12));
    let est = second_moment_trace_mc(&m_hat, &ctx.x_matrix(), pairs, seed.derive(2))?;
    checks.push(Check::sigma(format!("g_squared_mc_d{d}"), est.mean, closed, est.stderr, SIGMA_BAND));

    // E[K] = 2·E[g²]: two squared terms, cross term of mean zero.
    let est = k_statistic_mean_mc(&Povm::standard_basis(d), eps, pairs, seed.derive(3))?;
    checks.push(Check::sigma(format!("k_mean_mc_d{d}"), est.mean, 2.0 * target, est.stderr, SIGMA_BAND));

    let null = StateSource::Fixed(DensityMatrix::maximally_mixed(d));
    let tr = run_schedule(&null, &ScheduleKind::Fixed.build(d), TRANSCRIPT_LEN, seed.derive(4))?;
    let delta = delta_mc(&tr, 2 * pairs, seed.derive(5), &ctx)?;
    let psi_est = mc::summarize(seed.derive(6), pairs, |rng| {
        let u = mixedness::haar::haar_unitary::<f64, _>(d, rng);
        let w = mixedness::haar::haar_unitary::<f64, _>(d, rng);
        psi(&tr, &u, &w, &ctx).expect("dimensions fixed by ctx")
    });
    let sigma = ((2.0 * delta.mean * delta.stderr).powi(2) + psi_est.stderr().powi(2)).sqrt();
    checks.push(Check::sigma(format!("delta_squared_vs_psi_d{d}"), delta.mean * delta.mean, psi_est.mean(), sigma, SIGMA_BAND));
    Ok(())
}

fn tail_checks(eps: f64, samples: usize, seed: RngSeed, checks: &mut Vec<Check>) -> Result<(), CliError> {
    let d = 32;
    let t = 1.0 + 10.0 / (d as f64).sqrt();
    let c = tail_experiment(TailStatistic::DiagNorm, d, eps, &Povm::standard_basis(d), samples, Some(&[t]), seed.derive(0))?;
    checks.push(Check::within("diag_norm_tail_d32", c.empirical_exceed_prob[0], 0.0, 0.01));

    let d = 16;
    let t = 5.0 * eps * eps / (d as f64).powf(1.5);
    let povm = Povm::standard_basis(d);
    let c = tail_experiment(TailStatistic::Phi, d, eps, &povm, samples, Some(&[t]), seed.derive(1))?;
    checks.push(Check::within("phi_tail_d16", c.empirical_exceed_prob[0], 0.0, 0.02));

    for (k, stat) in [TailStatistic::DiagNorm, TailStatistic::Phi, TailStatistic::KStat].into_iter().enumerate() {
        let c = tail_experiment(stat, d, eps, &povm, samples, None, seed.derive(2 + k as u64))?;
        let excess = (0..c.thresholds.len())
            .map(|i| c.empirical_exceed_prob[i] - c.bound_value[i] - SIGMA_BAND * c.stderr[i])
            .fold(f64::NEG_INFINITY, f64::max);
        checks.push(Check::within(format!("{}_bound_dominates_d16", stat.label()), excess, f64::NEG_INFINITY, 0.0));
    }
    Ok(())
}

fn growth_checks(eps: f64, pairs: usize, seed: RngSeed, checks: &mut Vec<Check>) -> Result<(), CliError> {
    let d = 16;
    let cap = (REGIME_FRACTION * (d * d) as f64 / (eps * eps)).floor() as usize;
    let povm = Povm::standard_basis(d);
    let m = moment_growth_experiment(d, eps, 64.min(cap), 1.0, &povm, pairs, seed.derive(0))?;
    checks.push(Check::within("moment_growth_d16", m.estimate.mean / m.bound, 0.0, 1.0));
    let m = psi_second_moment_experiment(d, eps, 50.min(cap), &ScheduleKind::Fixed.build(d), pairs, seed.derive(1))?;
    checks.push(Check::within("psi_second_moment_d16", m.estimate.mean / m.bound, 0.0, 1.0));
    Ok(())
}

pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport, CliError> {
    let root = RngSeed(cfg.seed);
    let pairs = cfg.pairs.max(2);
    let mut checks = Vec::new();
    for &d in &cfg.d {
        if d < 2 {
            return Err(CliError::Usage(format!("verify needs d >= 2, got {d}")));
        }
        exact_checks(d, &mut checks)?;
        mc_checks(d, cfg.eps, pairs, root.derive(d as u64), &mut checks)?;
    }
    tail_checks(cfg.eps, pairs.max(mixedness::moments::MIN_TAIL_SAMPLES), root.derive(1000), &mut checks)?;
    growth_checks(cfg.eps, pairs, root.derive(1001), &mut checks)?;

    let scaling_pairs = pairs.min(SCALING_PAIRS);
    let fit = fluctuation_scaling(&SCALING_DIMS, cfg.eps, PovmFamily::StandardBasis, scaling_pairs, root.derive(1002))?;
    checks.push(Check::within("phi_fluctuation_slope", fit.slope, -1.7, -1.3));
    let (other_eps, factor) = if 2.0 * cfg.eps <= 1.0 { (2.0 * cfg.eps, 4.0) } else { (cfg.eps / 2.0, 0.25) };
    let small = (scaling_pairs / 10).max(2);
    let a = fluctuation_scaling(&SCALING_DIMS, cfg.eps, PovmFamily::StandardBasis, small, root.derive(1003))?;
    let b = fluctuation_scaling(&SCALING_DIMS, other_eps, PovmFamily::StandardBasis, small, root.derive(1003))?;
    let worst = a.std.iter().zip(&b.std).map(|(x, y)| (y / x / factor - 1.0).abs()).fold(0.0, f64::max);
    checks.push(Check::within("phi_std_eps_scaling", worst, 0.0, 1e-9));

    let mut report = ExperimentReport::new(cfg, &["check", "value", "lower", "upper", "pass"]);
    for c in &checks {
        report.rows.push(vec![c.name.clone(), fmt_f64(c.value), fmt_f64(c.lower), fmt_f64(c.upper), c.pass.to_string()]);
    }
    report.summary.push(("phi_fluctuation_slope".into(), fit.slope));
    report.summary.push(("phi_fluctuation_intercept".into(), fit.intercept));
    let pts: Vec<(f64, f64)> = fit.d_list.iter().map(|&d| d as f64).zip(fit.std.iter().copied()).collect();
    let line: Vec<(f64, f64)> =
        fit.d_list.iter().map(|&d| (d as f64, (fit.intercept + fit.slope * (d as f64).ln()).exp())).collect();
    report.plot = Some(Plot {
        title: format!("std(phi) against d, eps = {}", cfg.eps),
        x_label: "d".into(),
        y_label: "std(phi)".into(),
        log_x: true,
        log_y: true,
        series: vec![
            Series { label: "empirical".into(), points: pts, dashed: false },
            Series { label: format!("fit, slope {:.3}", fit.slope), points: line, dashed: true },
        ],
    });
    report.checks = checks;
    Ok(report)
}
