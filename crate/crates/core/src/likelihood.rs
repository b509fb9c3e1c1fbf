//! Likelihood-ratio quantities for the Haar-rotated hard instance.
//!
//! For a POVM `M`, outcome `x` and rotation `U`, the factor
//! `g^U(x) = ⟨M̂_x, U†XU⟩` satisfies `p₁(x) = p₀(x)(1 + g^U(x))` with
//! `p₀(x) = Tr(M_x)/d`. Everything else is built from these factors:
//!
//! * `φ(U,U') = E_{x∼p₀}[g^U g^{U'}]`
//! * `Ψ(U,U') = ∏_i (1 + g^U_i)(1 + g^{U'}_i)` along a transcript
//! * `Δ = E_U ∏_i (1 + g^U_i)`, the mixture likelihood ratio
//! * `K(U,U') = E_{x∼p₀}[(g^U + g^{U'})²]`
//!
//! All divergences are in nats.

use std::sync::Arc;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_arg, Error, Result};
use crate::haar::{haar_unitary, signed_half_sum};
use crate::matrix::{Hermitian, Matrix};
use crate::mc;
use crate::rng::{RngSeed, StreamRng};
use crate::states::{run_schedule, signed_diagonal, DensityMatrix, MeasurementSchedule, Povm, StateSource, Transcript};
use crate::stats::{DivergenceEstimate, Summary};

/// Default outer (transcript) sample count for nested estimators.
pub const DEFAULT_OUTER: usize = 200;
/// Default Haar pair count per outer sample.
pub const DEFAULT_PAIRS: usize = 2000;
/// Default Haar draws per inner likelihood-ratio estimate.
pub const DEFAULT_INNER: usize = 2000;

/// Constant `C` in `Δ(x_{<t}) ≥ (1 − C ε²/d)^{t−1}`.
///
/// `Δ ≥ ∏_i (1 − E_U[g_i²])` and `E_U[g²] ≤ ε²/(d+1)` for every trace-one `M̂`,
/// so `C = 1` holds for every transcript. The calibration grid
/// (`d ∈ {4, 8, 16}`, `ε ∈ {0.25, 0.5}`) never needed more.
pub const DELTA_LOWER_BOUND_C: f64 = 1.0;

/// Dimension, distance and the `±ε` diagonal `X`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodContext {
    pub d: usize,
    pub eps: f64,
    x: Vec<f64>,
}

impl LikelihoodContext {
    /// `d` even and at least 2, `ε ∈ [0, 1]`.
    pub fn new(d: usize, eps: f64) -> Result<Self> {
        ensure_arg!((0.0..=1.0).contains(&eps), "eps must lie in [0, 1], got {eps}");
        let x = signed_diagonal(d, eps)?;
        Ok(LikelihoodContext { d, eps, x })
    }

    /// Diagonal of `X`.
    pub fn x_diagonal(&self) -> &[f64] {
        &self.x
    }

    pub fn x_matrix(&self) -> Hermitian<f64> {
        Hermitian::from_real_diagonal(&self.x)
    }

    /// `Δ(x_{<t})` lower bound `(1 − C ε²/d)^{t−1}` with the frozen constant.
    pub fn delta_lower_bound(&self, t: usize) -> f64 {
        (1.0 - DELTA_LOWER_BOUND_C * self.eps * self.eps / self.d as f64).powi(t.saturating_sub(1) as i32)
    }

    fn check(&self, povm: &Povm<f64>) -> Result<()> {
        ensure_arg!(povm.dim() == self.d, "POVM has dimension {}, context has {}", povm.dim(), self.d);
        Ok(())
    }

    fn check_unitary(&self, u: &Matrix<f64>) -> Result<()> {
        ensure_arg!(u.dim() == self.d, "unitary has dimension {}, context has {}", u.dim(), self.d);
        Ok(())
    }
}

/// Evaluates `g^U` for one fixed `U`, sharing per-`U` work across POVMs.
pub struct FactorEvaluator<'a> {
    ctx: &'a LikelihoodContext,
    u: &'a Matrix<f64>,
    column_weights: Option<Vec<f64>>,
    rotated_x: Option<Hermitian<f64>>,
}

impl<'a> FactorEvaluator<'a> {
    pub fn new(ctx: &'a LikelihoodContext, u: &'a Matrix<f64>) -> Result<Self> {
        ctx.check_unitary(u)?;
        Ok(FactorEvaluator { ctx, u, column_weights: None, rotated_x: None })
    }

    /// `(U†XU)_jj = Σ_i X_i |U_ij|²`.
    fn column_weights(&mut self) -> &[f64] {
        let (ctx, u) = (self.ctx, self.u);
        self.column_weights.get_or_insert_with(|| {
            let d = ctx.d;
            let mut w = vec![0.0; d];
            for i in 0..d {
                let xi = ctx.x[i];
                for (j, wj) in w.iter_mut().enumerate() {
                    *wj += xi * u[(i, j)].norm_sqr();
                }
            }
            w
        })
    }

    fn rotated_x(&mut self) -> &Hermitian<f64> {
        let (ctx, u) = (self.ctx, self.u);
        self.rotated_x
            .get_or_insert_with(|| ctx.x_matrix().conjugate_by(u).expect("dimensions checked"))
    }

    /// `g^U(x)` for one outcome.
    pub fn g(&mut self, povm: &Povm<f64>, x: usize) -> f64 {
        if povm.is_diagonal() {
            let m = povm.normalized(x).matrix();
            let w = self.column_weights();
            return (0..w.len()).map(|j| m[(j, j)].re * w[j]).sum();
        }
        if let Some(vs) = povm.rank_one_vectors() {
            return self.ctx.eps * signed_half_sum(&apply(self.u, &vs[x]));
        }
        let a = self.rotated_x();
        povm.normalized(x).inner_product(a).expect("dimensions checked")
    }

    /// `g^U(x)` for every outcome.
    pub fn g_all(&mut self, povm: &Povm<f64>) -> Vec<f64> {
        (0..povm.num_outcomes()).map(|x| self.g(povm, x)).collect()
    }
}

fn apply(u: &Matrix<f64>, v: &[Complex<f64>]) -> Vec<Complex<f64>> {
    let d = u.dim();
    (0..d)
        .map(|i| (0..d).fold(Complex::new(0.0, 0.0), |acc, k| acc + u[(i, k)] * v[k]))
        .collect()
}

/// `g^U_M(x) = ⟨M̂_x, U†XU⟩`.
pub fn g_factor(povm: &Povm<f64>, x: usize, u: &Matrix<f64>, ctx: &LikelihoodContext) -> Result<f64> {
    ctx.check(povm)?;
    ensure_arg!(x < povm.num_outcomes(), "outcome {x} out of range");
    Ok(FactorEvaluator::new(ctx, u)?.g(povm, x))
}

/// `g^U_M(x)` for every outcome `x`.
pub fn g_factors(povm: &Povm<f64>, u: &Matrix<f64>, ctx: &LikelihoodContext) -> Result<Vec<f64>> {
    ctx.check(povm)?;
    Ok(FactorEvaluator::new(ctx, u)?.g_all(povm))
}

fn weighted_dot(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    p.iter().zip(a).zip(b).map(|((p, a), b)| p * a * b).sum()
}

/// `φ(U,U') = Σ_x p₀(x) g^U(x) g^{U'}(x)`.
pub fn phi(povm: &Povm<f64>, u: &Matrix<f64>, u2: &Matrix<f64>, ctx: &LikelihoodContext) -> Result<f64> {
    let a = g_factors(povm, u, ctx)?;
    let b = g_factors(povm, u2, ctx)?;
    Ok(weighted_dot(&povm.null_distribution(), &a, &b))
}

/// `K(U,U') = Σ_x p₀(x) (g^U(x) + g^{U'}(x))²`.
pub fn k_statistic(povm: &Povm<f64>, u: &Matrix<f64>, u2: &Matrix<f64>, ctx: &LikelihoodContext) -> Result<f64> {
    let a = g_factors(povm, u, ctx)?;
    let b = g_factors(povm, u2, ctx)?;
    Ok(povm
        .null_distribution()
        .iter()
        .zip(a.iter().zip(&b))
        .map(|(p, (a, b))| p * (a + b).powi(2))
        .sum())
}

/// `g^U` at each observed step of a transcript.
pub fn transcript_factors(tr: &Transcript<f64>, u: &Matrix<f64>, ctx: &LikelihoodContext) -> Result<Vec<f64>> {
    for p in &tr.povms {
        ctx.check(p)?;
    }
    let mut ev = FactorEvaluator::new(ctx, u)?;
    Ok((0..tr.len()).map(|i| ev.g(tr.povm_at(i), tr.outcomes[i])).collect())
}

/// `∏_i (1 + g_i)`.
pub fn likelihood_product(factors: &[f64]) -> f64 {
    factors.iter().map(|g| 1.0 + g).product()
}

/// `Ψ(U,U') = ∏_i (1 + g^U_i)(1 + g^{U'}_i)` along the transcript.
pub fn psi(tr: &Transcript<f64>, u: &Matrix<f64>, u2: &Matrix<f64>, ctx: &LikelihoodContext) -> Result<f64> {
    Ok(likelihood_product(&transcript_factors(tr, u, ctx)?) * likelihood_product(&transcript_factors(tr, u2, ctx)?))
}

/// Monte-Carlo `Δ(x) = E_U ∏_i (1 + g^U_i)` over `num_u` Haar draws.
pub fn delta_mc(
    tr: &Transcript<f64>,
    num_u: usize,
    seed: RngSeed,
    ctx: &LikelihoodContext,
) -> Result<DivergenceEstimate> {
    ensure_arg!(num_u >= 2, "delta_mc needs at least two Haar draws");
    for p in &tr.povms {
        ctx.check(p)?;
    }
    if tr.is_empty() || ctx.eps == 0.0 {
        return Ok(DivergenceEstimate { estimator: "delta".into(), mean: 1.0, stderr: 0.0, samples: num_u as u64 });
    }
    let values = mc::sample_chunked(seed, num_u, |rng, _| {
        let u = haar_unitary::<f64, _>(ctx.d, rng);
        likelihood_product(&transcript_factors(tr, &u, ctx).expect("dimensions checked"))
    });
    Ok(DivergenceEstimate::from_summary("delta", &Summary::from_values(&values)))
}

/// `max_M E_{U,U'}[(1 + φ_M)^N] − 1` over the POVMs of a nonadaptive schedule.
///
/// Upper bound on the χ² divergence between the `N`-copy outcome laws when the
/// schedule repeats a single POVM, and the per-POVM Hölder bound otherwise.
/// Every POVM is evaluated on the same Haar pairs.
pub fn chisq_bound_mc(
    schedule: &MeasurementSchedule<f64>,
    n: usize,
    num_pairs: usize,
    seed: RngSeed,
    ctx: &LikelihoodContext,
) -> Result<DivergenceEstimate> {
    let povms = match schedule {
        MeasurementSchedule::Nonadaptive(p) => p,
        MeasurementSchedule::Adaptive(_) => {
            return Err(Error::Argument("the chi-square bound needs a nonadaptive schedule".into()))
        }
    };
    ensure_arg!(!povms.is_empty(), "empty schedule");
    ensure_arg!(num_pairs >= 2, "need at least two Haar pairs");
    let mut distinct: Vec<&Arc<Povm<f64>>> = Vec::new();
    for p in povms {
        ctx.check(p)?;
        if !distinct.iter().any(|q| Arc::ptr_eq(q, p)) {
            distinct.push(p);
        }
    }
    if n == 0 || ctx.eps == 0.0 {
        return Ok(DivergenceEstimate { estimator: "chisq".into(), mean: 0.0, stderr: 0.0, samples: num_pairs as u64 });
    }
    let nulls: Vec<Vec<f64>> = distinct.iter().map(|p| p.null_distribution()).collect();
    let rows = mc::sample_chunked(seed, num_pairs, |rng, _| {
        let u = haar_unitary::<f64, _>(ctx.d, rng);
        let v = haar_unitary::<f64, _>(ctx.d, rng);
        let mut eu = FactorEvaluator::new(ctx, &u).expect("dimensions checked");
        let mut ev = FactorEvaluator::new(ctx, &v).expect("dimensions checked");
        distinct
            .iter()
            .zip(&nulls)
            .map(|(p, null)| {
                let f = weighted_dot(null, &eu.g_all(p), &ev.g_all(p));
                (1.0 + f).powi(n as i32) - 1.0
            })
            .collect::<Vec<f64>>()
    });
    let best = (0..distinct.len())
        .map(|k| Summary::from_values(&rows.iter().map(|r| r[k]).collect::<Vec<_>>()))
        .max_by(|a, b| a.mean().total_cmp(&b.mean()))
        .expect("nonempty schedule");
    Ok(DivergenceEstimate::from_summary("chisq", &best))
}

/// Nested Monte-Carlo estimate of `Σ_{t ≤ N} Z_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainRuleEstimate {
    /// Estimate of the sum, with the standard error across outer samples.
    pub total: DivergenceEstimate,
    /// Per-step estimates of `Z_t`, `t = 1..N`.
    pub terms: Vec<DivergenceEstimate>,
    pub num_outer: usize,
    pub num_pairs: usize,
}

/// `Σ_{t=1}^N Z_t` with `Z_t = E_{x_{<t}∼p₀}[E_{U,U'}[φ_t Ψ_{<t}] / Δ(x_{<t})]`.
///
/// Each outer sample draws one null transcript of length `N` (its prefixes give
/// `x_{<t}` for every `t`) and `num_pairs` Haar pairs. The same `2·num_pairs`
/// rotations estimate `Δ`. The ratio of inner means is a plug-in estimator,
/// biased at order `1/num_pairs`; the reported standard error covers the outer
/// sampling only.
pub fn chain_rule_bound_mc(
    schedule: &MeasurementSchedule<f64>,
    n: usize,
    num_outer: usize,
    num_pairs: usize,
    seed: RngSeed,
    ctx: &LikelihoodContext,
) -> Result<ChainRuleEstimate> {
    ensure_arg!(num_outer >= 2, "need at least two outer samples");
    ensure_arg!(num_pairs >= 1, "need at least one Haar pair");
    let zero = |name: String| DivergenceEstimate { estimator: name, mean: 0.0, stderr: 0.0, samples: num_outer as u64 };
    if n == 0 || ctx.eps == 0.0 {
        return Ok(ChainRuleEstimate {
            total: zero("chain_rule".into()),
            terms: (1..=n).map(|t| zero(format!("Z_{t}"))).collect(),
            num_outer,
            num_pairs,
        });
    }
    let null = StateSource::Fixed(DensityMatrix::maximally_mixed(ctx.d));
    let per_outer: Vec<Result<Vec<f64>>> = mc::per_trial(seed, num_outer, |s, _| {
        let tr = run_schedule(&null, schedule, n, s.derive(0))?;
        chain_terms(&tr, num_pairs, &mut s.derive(1).rng(), ctx)
    });
    let per_outer = per_outer.into_iter().collect::<Result<Vec<_>>>()?;
    let terms = (0..n)
        .map(|t| {
            let s = Summary::from_values(&per_outer.iter().map(|r| r[t]).collect::<Vec<_>>());
            DivergenceEstimate::from_summary(format!("Z_{}", t + 1), &s)
        })
        .collect();
    let totals: Vec<f64> = per_outer.iter().map(|r| r.iter().sum()).collect();
    Ok(ChainRuleEstimate {
        total: DivergenceEstimate::from_summary("chain_rule", &Summary::from_values(&totals)),
        terms,
        num_outer,
        num_pairs,
    })
}

/// Per-step ratio estimates `Ê[φ_t Ψ_{<t}] / Δ̂(x_{<t})` for one transcript.
fn chain_terms(
    tr: &Transcript<f64>,
    num_pairs: usize,
    rng: &mut StreamRng,
    ctx: &LikelihoodContext,
) -> Result<Vec<f64>> {
    let n = tr.len();
    let nulls: Vec<Vec<f64>> = tr.povms.iter().map(|p| p.null_distribution()).collect();
    let mut num = vec![0.0; n];
    let mut den = vec![0.0; n];
    for _ in 0..num_pairs {
        let u = haar_unitary::<f64, _>(ctx.d, rng);
        let v = haar_unitary::<f64, _>(ctx.d, rng);
        let gu = step_factors(tr, &u, ctx)?;
        let gv = step_factors(tr, &v, ctx)?;
        let (mut pu, mut pv) = (1.0, 1.0);
        for t in 0..n {
            let id = tr.povm_ids[t];
            let f = weighted_dot(&nulls[id], &gu[id], &gv[id]);
            num[t] += f * pu * pv;
            den[t] += pu + pv;
            let x = tr.outcomes[t];
            pu *= 1.0 + gu[id][x];
            pv *= 1.0 + gv[id][x];
        }
    }
    Ok(num
        .iter()
        .zip(&den)
        .map(|(a, b)| (a / num_pairs as f64) / (b / (2 * num_pairs) as f64))
        .collect())
}

/// Full factor vectors for every distinct POVM in the transcript, indexed by POVM id.
fn step_factors(tr: &Transcript<f64>, u: &Matrix<f64>, ctx: &LikelihoodContext) -> Result<Vec<Vec<f64>>> {
    let mut ev = FactorEvaluator::new(ctx, u)?;
    tr.povms
        .iter()
        .map(|p| {
            ctx.check(p)?;
            Ok(ev.g_all(p))
        })
        .collect()
}

/// Plug-in estimate of `KL(p₁^{≤N} ‖ p₀^{≤N}) = E_{x∼p₁}[ln Δ(x)]`.
///
/// Outer transcripts come from the alternative (fresh `U` per transcript);
/// `Δ(x)` is estimated from `num_inner` independent Haar draws. By Jensen the
/// plug-in `ln Δ̂` is biased downward by about `Var/(2·num_inner·Δ²)`.
pub fn kl_plugin_mc(
    schedule: &MeasurementSchedule<f64>,
    n: usize,
    num_outer: usize,
    num_inner: usize,
    seed: RngSeed,
    ctx: &LikelihoodContext,
) -> Result<DivergenceEstimate> {
    ensure_arg!(num_outer >= 2, "need at least two outer samples");
    ensure_arg!(num_inner >= 1, "need at least one inner sample");
    if n == 0 || ctx.eps == 0.0 {
        return Ok(DivergenceEstimate { estimator: "kl_plugin".into(), mean: 0.0, stderr: 0.0, samples: num_outer as u64 });
    }
    let alt = StateSource::HardInstance { d: ctx.d, eps: ctx.eps };
    let values: Vec<Result<f64>> = mc::per_trial(seed, num_outer, |s, _| {
        let tr = run_schedule(&alt, schedule, n, s.derive(0))?;
        let mut rng = s.derive(1).rng();
        let mut acc = 0.0;
        for _ in 0..num_inner {
            let u = haar_unitary::<f64, _>(ctx.d, &mut rng);
            acc += likelihood_product(&transcript_factors(&tr, &u, ctx)?);
        }
        let delta = acc / num_inner as f64;
        if delta <= 0.0 || !delta.is_finite() {
            return Err(Error::Numerical {
                message: "inner likelihood-ratio estimate is not positive; raise the inner sample count".into(),
                residual: delta,
            });
        }
        Ok(delta.ln())
    });
    let values = values.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(DivergenceEstimate::from_summary("kl_plugin", &Summary::from_values(&values)))
}

/// The half-swap `T` with `T†XT = −X`, so `g^{TU} = −g^U`.
pub fn half_swap(d: usize) -> Result<Matrix<f64>> {
    ensure_arg!(d >= 2 && d % 2 == 0, "half swap needs an even dimension");
    let h = d / 2;
    Ok(Matrix::from_fn(d, |i, j| {
        if (i + h) % d == j {
            Complex::new(1.0, 0.0)
        } else {
            Complex::new(0.0, 0.0)
        }
    }))
}
