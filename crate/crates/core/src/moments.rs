//! Degree-2 Weingarten calculus and Monte-Carlo checks of Haar moment and tail behaviour.
//!
//! The central identity is, for Hermitian `A`, `B` and Haar `U`,
//!
//! ```text
//! E_U[(Tr(A U†BU))²] = Σ_{σ,τ ∈ S₂} ⟨A⟩_σ ⟨B⟩_τ Wg(στ⁻¹, d)
//! ```
//!
//! with `⟨A⟩_e = Tr(A)²`, `⟨A⟩_τ* = Tr(A²)`, `Wg(e,d) = 1/(d²−1)` and
//! `Wg(τ*,d) = −1/(d(d²−1))`.
//!
//! The left side is the square of the linear statistic `Tr(A U†BU)`. Reading it
//! as `Tr((A U†BU)²)` instead fails the `A = B = I` case, where the statistic
//! is the constant `d` and the right side evaluates to `d²`.
//!
//! Tail curves pair empirical exceedance probabilities with a concrete bound
//! shape. The shapes carry unspecified absolute constants, so each constant is
//! frozen here from a single calibration run and reported with the curve.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_arg, Result};
use crate::haar::haar_unitary;
use crate::likelihood::{psi, FactorEvaluator, LikelihoodContext};
use crate::matrix::{Hermitian, Matrix};
use crate::mc;
use crate::rng::RngSeed;
use crate::scalar::{Field, Real};
use crate::states::{random_povm, run_schedule, DensityMatrix, MeasurementSchedule, Povm, StateSource};
use crate::stats::{fmt_f64, least_squares, proportion_stderr, DivergenceEstimate, Summary};

/// Element of the symmetric group on two letters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermS2 {
    E,
    TauStar,
}

impl PermS2 {
    pub const ALL: [PermS2; 2] = [PermS2::E, PermS2::TauStar];

    /// Group product.
    pub fn compose(self, other: PermS2) -> PermS2 {
        if self == other {
            PermS2::E
        } else {
            PermS2::TauStar
        }
    }

    /// Every element is an involution.
    pub fn inverse(self) -> PermS2 {
        self
    }
}

/// `Wg(π, d)`: `1/(d²−1)` at the identity, `−1/(d(d²−1))` at the transposition.
pub fn wg2<F: Field>(pi: PermS2, d: usize) -> Result<F> {
    ensure_arg!(d >= 2, "degree-2 Weingarten function needs d >= 2, got {d}");
    let d = F::from_u64(d as u64);
    let denom = d.clone() * d.clone() - F::one();
    Ok(match pi {
        PermS2::E => F::one() / denom,
        PermS2::TauStar => F::zero() - F::one() / (d * denom),
    })
}

/// `⟨A⟩_π`: `Tr(A)²` for `e`, `Tr(A²)` for `τ*`.
pub fn power_trace_product<T: Real>(a: &Matrix<T>, pi: PermS2) -> Complex<T> {
    match pi {
        PermS2::E => {
            let t = a.trace();
            t * t
        }
        PermS2::TauStar => {
            let d = a.dim();
            let mut acc = Complex::new(T::zero(), T::zero());
            for i in 0..d {
                for j in 0..d {
                    acc += a[(i, j)] * a[(j, i)];
                }
            }
            acc
        }
    }
}

/// `Σ_{σ,τ} ⟨A⟩_σ ⟨B⟩_τ Wg(στ⁻¹, d)` from the four power traces.
pub fn second_moment_from_traces<F: Field>(tr_a: F, tr_a2: F, tr_b: F, tr_b2: F, d: usize) -> Result<F> {
    let a = |p: PermS2| if p == PermS2::E { tr_a.clone() * tr_a.clone() } else { tr_a2.clone() };
    let b = |p: PermS2| if p == PermS2::E { tr_b.clone() * tr_b.clone() } else { tr_b2.clone() };
    let mut acc = F::zero();
    for s in PermS2::ALL {
        for t in PermS2::ALL {
            acc = acc + a(s) * b(t) * wg2::<F>(s.compose(t.inverse()), d)?;
        }
    }
    Ok(acc)
}

/// `E_U[(Tr(A U†BU))²]` in closed form.
pub fn second_moment_trace(a: &Hermitian<f64>, b: &Hermitian<f64>) -> Result<f64> {
    let d = a.dim();
    ensure_arg!(b.dim() == d, "dimension mismatch: {d} vs {}", b.dim());
    second_moment_from_traces(
        a.trace(),
        power_trace_product(a.matrix(), PermS2::TauStar).re,
        b.trace(),
        power_trace_product(b.matrix(), PermS2::TauStar).re,
        d,
    )
}

/// Monte-Carlo estimate of `E_U[(Tr(A U†BU))²]`.
pub fn second_moment_trace_mc(
    a: &Hermitian<f64>,
    b: &Hermitian<f64>,
    num_samples: usize,
    seed: RngSeed,
) -> Result<DivergenceEstimate> {
    let d = a.dim();
    ensure_arg!(b.dim() == d, "dimension mismatch: {d} vs {}", b.dim());
    ensure_arg!(num_samples >= 2, "need at least two samples");
    let s = mc::summarize(seed, num_samples, |rng| {
        let u = haar_unitary::<f64, _>(d, rng);
        let rotated = b.conjugate_by(&u).expect("dimensions checked");
        a.inner_product(&rotated).expect("dimensions checked").powi(2)
    });
    Ok(DivergenceEstimate::from_summary("second_moment_trace", &s))
}

/// Trace tolerance for [`expected_g_squared`].
pub const NORMALIZED_TRACE_TOL: f64 = 1e-9;

/// `E_U[g^U(x)²] = ε² d (Tr(M̂²)/(d²−1) − 1/(d(d²−1)))`; at most `ε²/(d+1)`.
pub fn expected_g_squared(m_hat: &Hermitian<f64>, eps: f64) -> Result<f64> {
    let d = m_hat.dim();
    ensure_arg!(d >= 2, "need d >= 2, got {d}");
    let tr = m_hat.trace();
    ensure_arg!((tr - 1.0).abs() <= NORMALIZED_TRACE_TOL, "normalized element has trace {tr}, expected 1");
    let purity = power_trace_product(m_hat.matrix(), PermS2::TauStar).re;
    let df = d as f64;
    Ok(eps * eps * df * (purity / (df * df - 1.0) - 1.0 / (df * (df * df - 1.0))))
}

/// Monte-Carlo mean of `K(U,U')` over independent Haar pairs.
pub fn k_statistic_mean_mc(povm: &Povm<f64>, eps: f64, num_pairs: usize, seed: RngSeed) -> Result<DivergenceEstimate> {
    let ctx = LikelihoodContext::new(povm.dim(), eps)?;
    ensure_arg!(num_pairs >= 2, "need at least two Haar pairs");
    let null = povm.null_distribution();
    let s = mc::summarize(seed, num_pairs, |rng| {
        let (ga, gb) = pair_factors(&ctx, povm, rng);
        null.iter().zip(ga.iter().zip(&gb)).map(|(p, (a, b))| p * (a + b).powi(2)).sum()
    });
    Ok(DivergenceEstimate::from_summary("k_statistic", &s))
}

fn pair_factors(ctx: &LikelihoodContext, povm: &Povm<f64>, rng: &mut crate::rng::StreamRng) -> (Vec<f64>, Vec<f64>) {
    let u = haar_unitary::<f64, _>(ctx.d, rng);
    let v = haar_unitary::<f64, _>(ctx.d, rng);
    let ga = FactorEvaluator::new(ctx, &u).expect("dimension fixed by ctx").g_all(povm);
    let gb = FactorEvaluator::new(ctx, &v).expect("dimension fixed by ctx").g_all(povm);
    (ga, gb)
}

/// Random statistic whose tail is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailStatistic {
    /// `‖diag(U†X'U)‖_HS` with `X' = diag(±1)`; the POVM is unused.
    DiagNorm,
    /// `|φ(U,U')|`.
    Phi,
    /// `K(U,U')`.
    KStat,
}

impl TailStatistic {
    pub fn label(self) -> &'static str {
        match self {
            TailStatistic::DiagNorm => "diag_norm",
            TailStatistic::Phi => "phi",
            TailStatistic::KStat => "k_stat",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "diag_norm" => Ok(TailStatistic::DiagNorm),
            "phi" => Ok(TailStatistic::Phi),
            "k_stat" => Ok(TailStatistic::KStat),
            _ => Err(crate::Error::Argument(format!("unknown statistic {s:?}; expected diag_norm, phi or k_stat"))),
        }
    }

    /// Natural fluctuation scale: `1`, `ε²/d^{3/2}`, `ε²/d`.
    pub fn scale(self, d: usize, eps: f64) -> f64 {
        let df = d as f64;
        match self {
            TailStatistic::DiagNorm => 1.0,
            TailStatistic::Phi => eps * eps / df.powf(1.5),
            TailStatistic::KStat => eps * eps / df,
        }
    }
}

/// Frozen constant in `P[‖diag‖ ≥ 1 + t] ≤ exp(−c d t²)`.
pub const DIAG_NORM_RATE: f64 = 0.5;
/// Frozen constant in `P[|φ| > t] ≤ 2 exp(−c min(d³t²/ε⁴, d²t/ε²))`.
pub const PHI_RATE: f64 = 0.25;
/// Offset `c` in `P[K > cε²/d + t] ≤ exp(−c' t d²/ε²)`.
pub const K_OFFSET: f64 = 4.0;
/// Rate `c'` in the same bound.
pub const K_RATE: f64 = 0.25;

/// Bound shape with the frozen constants, clipped to `[0, 1]`.
pub fn tail_bound(stat: TailStatistic, d: usize, eps: f64, threshold: f64) -> f64 {
    let df = d as f64;
    let e2 = eps * eps;
    let raw = match stat {
        TailStatistic::DiagNorm => {
            let t = threshold - 1.0;
            if t <= 0.0 {
                1.0
            } else {
                (-DIAG_NORM_RATE * df * t * t).exp()
            }
        }
        TailStatistic::Phi => {
            if threshold <= 0.0 || e2 == 0.0 {
                1.0
            } else {
                let quad = df.powi(3) * threshold * threshold / (e2 * e2);
                let lin = df * df * threshold / e2;
                2.0 * (-PHI_RATE * quad.min(lin)).exp()
            }
        }
        TailStatistic::KStat => {
            let t = threshold - K_OFFSET * e2 / df;
            if t <= 0.0 || e2 == 0.0 {
                1.0
            } else {
                (-K_RATE * t * df * df / e2).exp()
            }
        }
    };
    raw.clamp(0.0, 1.0)
}

/// Minimum sample count for a tail curve.
pub const MIN_TAIL_SAMPLES: usize = 1000;
/// Points in the default threshold grid.
pub const DEFAULT_GRID_POINTS: usize = 20;

/// Empirical exceedance curve with the bound evaluated at each threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailCurve {
    pub statistic: TailStatistic,
    pub d: usize,
    pub eps: f64,
    /// Ascending.
    pub thresholds: Vec<f64>,
    /// `P̂[stat > threshold]`, nonincreasing.
    pub empirical_exceed_prob: Vec<f64>,
    pub stderr: Vec<f64>,
    pub bound_value: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    /// Frozen constants used by `bound_value`.
    pub bound_constants: Vec<(String, f64)>,
}

impl TailCurve {
    pub const CSV_HEADER: [&'static str; 9] =
        ["statistic", "d", "eps", "threshold", "empirical_p", "stderr", "bound_p", "samples", "seed"];

    pub fn csv_records(&self) -> Vec<Vec<String>> {
        (0..self.thresholds.len())
            .map(|k| {
                vec![
                    self.statistic.label().to_string(),
                    self.d.to_string(),
                    fmt_f64(self.eps),
                    fmt_f64(self.thresholds[k]),
                    fmt_f64(self.empirical_exceed_prob[k]),
                    fmt_f64(self.stderr[k]),
                    fmt_f64(self.bound_value[k]),
                    self.samples.to_string(),
                    self.seed.to_string(),
                ]
            })
            .collect()
    }

    /// Empirical probability at the first threshold `≥ t`.
    pub fn exceedance_at(&self, t: f64) -> Option<f64> {
        self.thresholds.iter().position(|&x| x >= t).map(|k| self.empirical_exceed_prob[k])
    }
}

fn bound_constants(stat: TailStatistic) -> Vec<(String, f64)> {
    match stat {
        TailStatistic::DiagNorm => vec![("rate".into(), DIAG_NORM_RATE)],
        TailStatistic::Phi => vec![("rate".into(), PHI_RATE)],
        TailStatistic::KStat => vec![("offset".into(), K_OFFSET), ("rate".into(), K_RATE)],
    }
}

/// Draws of the statistic, one per Haar pair (or single `U` for `DiagNorm`).
pub fn sample_statistic(
    stat: TailStatistic,
    d: usize,
    eps: f64,
    povm: &Povm<f64>,
    num_samples: usize,
    seed: RngSeed,
) -> Result<Vec<f64>> {
    ensure_arg!(povm.dim() == d, "POVM has dimension {}, expected {d}", povm.dim());
    let ctx = LikelihoodContext::new(d, eps)?;
    let unit = LikelihoodContext::new(d, 1.0)?;
    let null = povm.null_distribution();
    Ok(mc::sample_chunked(seed, num_samples, |rng, _| match stat {
        TailStatistic::DiagNorm => {
            let u = haar_unitary::<f64, _>(d, rng);
            diag_norm(&u, unit.x_diagonal())
        }
        TailStatistic::Phi => {
            let (a, b) = pair_factors(&ctx, povm, rng);
            null.iter().zip(a.iter().zip(&b)).map(|(p, (a, b))| p * a * b).sum::<f64>().abs()
        }
        TailStatistic::KStat => {
            let (a, b) = pair_factors(&ctx, povm, rng);
            null.iter().zip(a.iter().zip(&b)).map(|(p, (a, b))| p * (a + b).powi(2)).sum()
        }
    }))
}

/// `‖diag(U† diag(x) U)‖_HS`.
pub fn diag_norm(u: &Matrix<f64>, x: &[f64]) -> f64 {
    let d = u.dim();
    (0..d)
        .map(|j| (0..d).map(|i| x[i] * u[(i, j)].norm_sqr()).sum::<f64>().powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Geometric grid of [`DEFAULT_GRID_POINTS`] from `scale/10` to the largest sample.
pub fn default_thresholds(stat: TailStatistic, d: usize, eps: f64, samples: &[f64]) -> Vec<f64> {
    let lo = stat.scale(d, eps) / 10.0;
    let hi = samples.iter().copied().fold(lo, f64::max);
    if hi <= lo || lo <= 0.0 {
        return vec![lo.max(0.0)];
    }
    let n = DEFAULT_GRID_POINTS;
    (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect()
}

/// Empirical tail curve of `stat`; `thresholds = None` selects [`default_thresholds`].
pub fn tail_experiment(
    stat: TailStatistic,
    d: usize,
    eps: f64,
    povm: &Povm<f64>,
    num_samples: usize,
    thresholds: Option<&[f64]>,
    seed: RngSeed,
) -> Result<TailCurve> {
    ensure_arg!(num_samples >= MIN_TAIL_SAMPLES, "tail curves need at least {MIN_TAIL_SAMPLES} samples");
    let mut values = sample_statistic(stat, d, eps, povm, num_samples, seed)?;
    values.sort_by(f64::total_cmp);
    let mut grid = match thresholds {
        Some(t) => {
            ensure_arg!(t.iter().all(|x| x.is_finite()), "thresholds must be finite");
            t.to_vec()
        }
        None => default_thresholds(stat, d, eps, &values),
    };
    grid.sort_by(f64::total_cmp);
    let n = values.len() as u64;
    let probs: Vec<f64> = grid
        .iter()
        .map(|&t| (values.len() - values.partition_point(|&v| v <= t)) as f64 / n as f64)
        .collect();
    Ok(TailCurve {
        statistic: stat,
        d,
        eps,
        stderr: probs.iter().map(|&p| proportion_stderr(p, n)).collect(),
        bound_value: grid.iter().map(|&t| tail_bound(stat, d, eps, t)).collect(),
        empirical_exceed_prob: probs,
        thresholds: grid,
        samples: num_samples,
        seed: seed.0,
        bound_constants: bound_constants(stat),
    })
}

/// Frozen `c₂` in `E[(1+γK)^n] ≤ exp(c₂ γ n ε²/d)`.
pub const MOMENT_GROWTH_C: f64 = 4.0;
/// Frozen `c₃` in `E[Ψ²] ≤ exp(c₃ t ε²/d)`.
pub const PSI_SQUARED_C: f64 = 6.0;
/// Regime guard: `n ≤ REGIME_FRACTION · d²/ε²`.
pub const REGIME_FRACTION: f64 = 0.1;

/// Monte-Carlo moment with its reference bound `exp(c·x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub estimate: DivergenceEstimate,
    /// Exponent scale `x` (`γnε²/d` or `tε²/d`).
    pub exponent_scale: f64,
    pub constant: f64,
    /// `exp(constant · exponent_scale)`.
    pub bound: f64,
    /// `ln(mean)/exponent_scale`; zero when the scale vanishes.
    pub implied_constant: f64,
}

impl MomentEstimate {
    fn new(estimate: DivergenceEstimate, exponent_scale: f64, constant: f64) -> Self {
        let implied_constant = if exponent_scale > 0.0 { estimate.mean.ln() / exponent_scale } else { 0.0 };
        MomentEstimate { bound: (constant * exponent_scale).exp(), estimate, exponent_scale, constant, implied_constant }
    }

    pub fn within_bound(&self) -> bool {
        self.estimate.mean <= self.bound
    }
}

fn regime_guard(n: usize, d: usize, eps: f64) -> Result<()> {
    let cap = REGIME_FRACTION * (d * d) as f64 / (eps * eps);
    ensure_arg!((n as f64) <= cap, "n = {n} exceeds the regime cap {cap:.1} = 0.1·d²/ε²");
    Ok(())
}

/// `E_{U,U'}[(1 + γK)^n]`.
pub fn moment_growth_experiment(
    d: usize,
    eps: f64,
    n: usize,
    gamma: f64,
    povm: &Povm<f64>,
    num_pairs: usize,
    seed: RngSeed,
) -> Result<MomentEstimate> {
    ensure_arg!(povm.dim() == d, "POVM has dimension {}, expected {d}", povm.dim());
    ensure_arg!(gamma >= 0.0 && gamma.is_finite(), "gamma must be a nonnegative real");
    ensure_arg!(num_pairs >= 2, "need at least two Haar pairs");
    let ctx = LikelihoodContext::new(d, eps)?;
    regime_guard(n, d, eps)?;
    let scale = gamma * n as f64 * eps * eps / d as f64;
    if n == 0 || gamma == 0.0 || eps == 0.0 {
        return Ok(MomentEstimate::new(
            DivergenceEstimate { estimator: "moment_growth".into(), mean: 1.0, stderr: 0.0, samples: num_pairs as u64 },
            scale,
            MOMENT_GROWTH_C,
        ));
    }
    let null = povm.null_distribution();
    let s = mc::summarize(seed, num_pairs, |rng| {
        let (a, b) = pair_factors(&ctx, povm, rng);
        let k: f64 = null.iter().zip(a.iter().zip(&b)).map(|(p, (a, b))| p * (a + b).powi(2)).sum();
        (1.0 + gamma * k).powi(n as i32)
    });
    Ok(MomentEstimate::new(DivergenceEstimate::from_summary("moment_growth", &s), scale, MOMENT_GROWTH_C))
}

/// `E_{x∼null, U, U'}[Ψ(U,U')²]` over length-`t` null transcripts of `schedule`.
pub fn psi_second_moment_experiment(
    d: usize,
    eps: f64,
    t: usize,
    schedule: &MeasurementSchedule<f64>,
    num: usize,
    seed: RngSeed,
) -> Result<MomentEstimate> {
    let ctx = LikelihoodContext::new(d, eps)?;
    regime_guard(t, d, eps)?;
    ensure_arg!(num >= 2, "need at least two samples");
    let scale = t as f64 * eps * eps / d as f64;
    if t == 0 || eps == 0.0 {
        return Ok(MomentEstimate::new(
            DivergenceEstimate { estimator: "psi_second_moment".into(), mean: 1.0, stderr: 0.0, samples: num as u64 },
            scale,
            PSI_SQUARED_C,
        ));
    }
    let null = StateSource::Fixed(DensityMatrix::maximally_mixed(d));
    let values = mc::per_trial(seed, num, |s, _| -> Result<f64> {
        let tr = run_schedule(&null, schedule, t, s.derive(0))?;
        let mut rng = s.derive(1).rng();
        let u = haar_unitary::<f64, _>(d, &mut rng);
        let v = haar_unitary::<f64, _>(d, &mut rng);
        Ok(psi(&tr, &u, &v, &ctx)?.powi(2))
    });
    let values = values.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(MomentEstimate::new(
        DivergenceEstimate::from_summary("psi_second_moment", &Summary::from_values(&values)),
        scale,
        PSI_SQUARED_C,
    ))
}

/// POVM used at each dimension of a scaling study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PovmFamily {
    StandardBasis,
    /// Random POVM with `outcomes_per_dim · d` elements, drawn from the seed of that `d`.
    Random { outcomes_per_dim: usize },
}

impl PovmFamily {
    pub fn build(self, d: usize, seed: RngSeed) -> Result<Povm<f64>> {
        match self {
            PovmFamily::StandardBasis => Ok(Povm::standard_basis(d)),
            PovmFamily::Random { outcomes_per_dim } => {
                ensure_arg!(outcomes_per_dim >= 1, "need at least one outcome per dimension");
                random_povm(d, outcomes_per_dim * d, &mut seed.rng())
            }
        }
    }
}

/// Standard deviation of `φ` per dimension and the log-log slope against `d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluctuationReport {
    pub eps: f64,
    pub d_list: Vec<usize>,
    pub std: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub num_pairs: usize,
    pub seed: u64,
}

impl FluctuationReport {
    pub const CSV_HEADER: [&'static str; 6] = ["d", "eps", "std_phi", "num_pairs", "slope", "seed"];

    pub fn csv_records(&self) -> Vec<Vec<String>> {
        self.d_list
            .iter()
            .zip(&self.std)
            .map(|(d, s)| {
                vec![
                    d.to_string(),
                    fmt_f64(self.eps),
                    fmt_f64(*s),
                    self.num_pairs.to_string(),
                    fmt_f64(self.slope),
                    self.seed.to_string(),
                ]
            })
            .collect()
    }
}

/// Least-squares slope of `ln std(φ)` against `ln d`. Dimension `d` uses stream `seed.derive(d)`.
pub fn fluctuation_scaling(
    d_list: &[usize],
    eps: f64,
    family: PovmFamily,
    num_pairs: usize,
    seed: RngSeed,
) -> Result<FluctuationReport> {
    ensure_arg!(d_list.len() >= 3, "scaling fit needs at least three dimensions, got {}", d_list.len());
    ensure_arg!(num_pairs >= 2, "need at least two Haar pairs");
    ensure_arg!(eps > 0.0, "eps must be positive for a scaling fit");
    let mut std = Vec::with_capacity(d_list.len());
    for &d in d_list {
        let ctx = LikelihoodContext::new(d, eps)?;
        let s = seed.derive(d as u64);
        let povm = family.build(d, s.derive(0))?;
        let null = povm.null_distribution();
        let summary = mc::summarize(s.derive(1), num_pairs, |rng| {
            let (a, b) = pair_factors(&ctx, &povm, rng);
            null.iter().zip(a.iter().zip(&b)).map(|(p, (a, b))| p * a * b).sum()
        });
        std.push(summary.std_dev());
    }
    let x: Vec<f64> = d_list.iter().map(|&d| (d as f64).ln()).collect();
    let y: Vec<f64> = std.iter().map(|s| s.ln()).collect();
    let (intercept, slope) = least_squares(&x, &y);
    Ok(FluctuationReport { eps, d_list: d_list.to_vec(), std, slope, intercept, num_pairs, seed: seed.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::haar::random_unit_vector;
    use crate::scalar::ratio;
    use crate::states::ScheduleKind;
    use num_rational::BigRational;
    use proptest::prelude::*;

    fn random_hermitian(d: usize, rng: &mut crate::rng::StreamRng) -> Hermitian<f64> {
        let g = crate::haar::ginibre::<f64, _>(d, rng);
        Hermitian::new(&g + &g.adjoint()).unwrap()
    }

    #[test]
    fn s2_group_table() {
        assert_eq!(PermS2::E.compose(PermS2::E), PermS2::E);
        assert_eq!(PermS2::TauStar.compose(PermS2::TauStar), PermS2::E);
        assert_eq!(PermS2::E.compose(PermS2::TauStar), PermS2::TauStar);
        assert_eq!(PermS2::TauStar.compose(PermS2::E), PermS2::TauStar);
    }

    #[test]
    fn weingarten_values() {
        assert_eq!(wg2::<BigRational>(PermS2::E, 2).unwrap(), ratio(1, 3));
        assert_eq!(wg2::<BigRational>(PermS2::TauStar, 2).unwrap(), ratio(-1, 6));
        for d in 2..40 {
            let row = wg2::<BigRational>(PermS2::E, d).unwrap()
                + wg2::<BigRational>(PermS2::TauStar, d).unwrap() * BigRational::from_u64(d as u64);
            assert_eq!(row, ratio(0, 1), "d = {d}");
        }
        assert!((wg2::<f64>(PermS2::E, 2).unwrap() - 1.0 / 3.0).abs() < 1e-16);
        assert!(wg2::<f64>(PermS2::E, 1).is_err());
    }

    #[test]
    fn power_traces() {
        let i = Matrix::<f64>::identity(5);
        assert_eq!(power_trace_product(&i, PermS2::E).re, 25.0);
        assert_eq!(power_trace_product(&i, PermS2::TauStar).re, 5.0);
        let ctx = LikelihoodContext::new(8, 0.5).unwrap();
        let x = ctx.x_matrix();
        assert!((power_trace_product(x.matrix(), PermS2::TauStar).re - 8.0 * 0.25).abs() < 1e-14);
        assert!(power_trace_product(x.matrix(), PermS2::E).norm() < 1e-14);
    }

    #[test]
    fn closed_form_special_cases() {
        for d in [2usize, 4, 8, 16] {
            let i = Hermitian::<f64>::identity(d);
            assert!((second_moment_trace(&i, &i).unwrap() - (d * d) as f64).abs() < 1e-9);
            let mut e1 = vec![Complex::new(0.0, 0.0); d];
            e1[0] = Complex::new(1.0, 0.0);
            let pi = Hermitian::outer(&e1);
            let xp = LikelihoodContext::new(d, 1.0).unwrap().x_matrix();
            assert!((second_moment_trace(&pi, &xp).unwrap() - 1.0 / (d + 1) as f64).abs() < 1e-15);
            // Exact in rationals.
            let exact = second_moment_from_traces(
                ratio(1, 1),
                ratio(1, 1),
                ratio(0, 1),
                BigRational::from_u64(d as u64),
                d,
            )
            .unwrap();
            assert_eq!(exact, ratio(1, d as i64 + 1));
        }
    }

    #[test]
    fn rank_one_g_squared() {
        let mut rng = RngSeed(3).rng();
        for d in [4usize, 8, 16] {
            let v = random_unit_vector::<f64, _>(d, &mut rng);
            let m = Hermitian::outer(&v);
            let x = LikelihoodContext::new(d, 0.5).unwrap().x_matrix();
            let want = 0.25 / (d + 1) as f64;
            assert!((second_moment_trace(&m, &x).unwrap() - want).abs() < 1e-14);
            assert!((expected_g_squared(&m, 0.5).unwrap() - want).abs() < 1e-14);
            let mixed = Hermitian::<f64>::identity(d).scale(1.0 / d as f64);
            assert!(expected_g_squared(&mixed, 0.5).unwrap().abs() < 1e-15);
            assert!(expected_g_squared(&Hermitian::identity(d), 0.5).is_err());
        }
    }

    #[test]
    fn g_squared_matches_mc() {
        let d = 8;
        let v = random_unit_vector::<f64, _>(d, &mut RngSeed(4).rng());
        let m = Hermitian::outer(&v);
        let x = LikelihoodContext::new(d, 0.5).unwrap().x_matrix();
        let est = second_moment_trace_mc(&m, &x, 100_000, RngSeed(5)).unwrap();
        let want = expected_g_squared(&m, 0.5).unwrap();
        assert!((est.mean - want).abs() <= 0.02 * want, "{} vs {want}", est.mean);
    }

    #[test]
    fn random_pairs_match_mc() {
        let mut rng = RngSeed(6).rng();
        for (k, d) in [4usize, 8].into_iter().enumerate() {
            for j in 0..3 {
                let a = random_hermitian(d, &mut rng);
                let b = random_hermitian(d, &mut rng);
                let est = second_moment_trace_mc(&a, &b, 20_000, RngSeed(100 + (k * 10 + j) as u64)).unwrap();
                let want = second_moment_trace(&a, &b).unwrap();
                assert!((est.mean - want).abs() <= 4.0 * est.stderr, "d={d}: {} ± {} vs {want}", est.mean, est.stderr);
            }
        }
    }

    #[test]
    fn unitary_invariance() {
        let mut rng = RngSeed(7).rng();
        for d in [3usize, 6] {
            let a = random_hermitian(d, &mut rng);
            let b = random_hermitian(d, &mut rng);
            let v = haar_unitary::<f64, _>(d, &mut rng);
            let rotated = a.conjugate_by(&v).unwrap();
            let x = second_moment_trace(&a, &b).unwrap();
            assert!((x - second_moment_trace(&rotated, &b).unwrap()).abs() <= 1e-10 * x.abs().max(1.0));
        }
    }

    #[test]
    fn k_statistic_mean_is_twice_single_factor_bound() {
        for d in [8usize, 16] {
            let est = k_statistic_mean_mc(&Povm::standard_basis(d), 0.5, 10_000, RngSeed(d as u64)).unwrap();
            let want = 2.0 * 0.25 / (d + 1) as f64;
            assert!((est.mean - want).abs() <= 4.0 * est.stderr, "d={d}: {} vs {want}", est.mean);
        }
    }

    #[test]
    fn diag_norm_tail() {
        let d = 32;
        let t = 1.0 + 10.0 / (d as f64).sqrt();
        let curve = tail_experiment(
            TailStatistic::DiagNorm,
            d,
            0.5,
            &Povm::standard_basis(d),
            10_000,
            Some(&[0.5, 1.0, t]),
            RngSeed(8),
        )
        .unwrap();
        assert!(curve.empirical_exceed_prob[2] <= 0.01);
        assert!(curve.empirical_exceed_prob[0] == 1.0);
    }

    #[test]
    fn phi_tail() {
        let (d, eps) = (16usize, 0.5);
        let t = 5.0 * eps * eps / (d as f64).powf(1.5);
        let curve =
            tail_experiment(TailStatistic::Phi, d, eps, &Povm::standard_basis(d), 10_000, Some(&[t]), RngSeed(9))
                .unwrap();
        assert!(curve.empirical_exceed_prob[0] <= 0.02, "{:?}", curve.empirical_exceed_prob);
    }

    #[test]
    fn frozen_bounds_dominate_empirical_curves() {
        let (d, eps) = (16usize, 0.5);
        let povm = Povm::standard_basis(d);
        for stat in [TailStatistic::DiagNorm, TailStatistic::Phi, TailStatistic::KStat] {
            let c = tail_experiment(stat, d, eps, &povm, 4000, None, RngSeed(10)).unwrap();
            assert_eq!(c.thresholds.len(), DEFAULT_GRID_POINTS);
            for k in 0..c.thresholds.len() {
                assert!(
                    c.empirical_exceed_prob[k] <= c.bound_value[k] + 3.0 * c.stderr[k],
                    "{} at {}: {} > {}",
                    stat.label(),
                    c.thresholds[k],
                    c.empirical_exceed_prob[k],
                    c.bound_value[k]
                );
            }
        }
    }

    #[test]
    fn tail_guards_and_degenerate_thresholds() {
        let povm = Povm::standard_basis(4);
        assert!(tail_experiment(TailStatistic::Phi, 4, 0.5, &povm, 999, None, RngSeed(1)).is_err());
        let c = tail_experiment(TailStatistic::KStat, 4, 0.5, &povm, 1000, Some(&[-1.0]), RngSeed(1)).unwrap();
        assert_eq!(c.empirical_exceed_prob, vec![1.0]);
    }

    #[test]
    fn moment_growth() {
        let d = 16;
        let povm = Povm::standard_basis(d);
        assert_eq!(moment_growth_experiment(d, 0.5, 0, 1.0, &povm, 10, RngSeed(1)).unwrap().estimate.mean, 1.0);
        assert_eq!(moment_growth_experiment(d, 0.5, 10, 0.0, &povm, 10, RngSeed(1)).unwrap().estimate.mean, 1.0);
        assert!(moment_growth_experiment(d, 0.5, 200, 1.0, &povm, 10, RngSeed(1)).is_err());
        let m = moment_growth_experiment(d, 0.5, 64, 1.0, &povm, 4000, RngSeed(11)).unwrap();
        assert!(m.within_bound() && MOMENT_GROWTH_C <= 8.0, "{m:?}");
        assert!(m.estimate.mean > 1.0);
    }

    #[test]
    fn psi_second_moment() {
        let d = 16;
        let sched = ScheduleKind::Fixed.build::<f64>(d);
        assert_eq!(psi_second_moment_experiment(d, 0.5, 0, &sched, 4, RngSeed(1)).unwrap().estimate.mean, 1.0);
        assert_eq!(psi_second_moment_experiment(d, 0.0, 5, &sched, 4, RngSeed(1)).unwrap().estimate.mean, 1.0);
        assert!(psi_second_moment_experiment(d, 0.5, 200, &sched, 4, RngSeed(1)).is_err());
        let m = psi_second_moment_experiment(d, 0.5, 50, &sched, 4000, RngSeed(12)).unwrap();
        assert!(m.within_bound() && PSI_SQUARED_C <= 10.0, "{m:?}");
    }

    #[test]
    fn fluctuation_slope_and_eps_scaling() {
        let ds = [8usize, 16, 32, 64];
        let r = fluctuation_scaling(&ds, 0.5, PovmFamily::StandardBasis, 4000, RngSeed(13)).unwrap();
        assert!((-1.7..=-1.3).contains(&r.slope), "slope {}", r.slope);
        let r2 = fluctuation_scaling(&ds, 1.0, PovmFamily::StandardBasis, 4000, RngSeed(13)).unwrap();
        for (a, b) in r.std.iter().zip(&r2.std) {
            assert!((b / a - 4.0).abs() < 1e-9);
        }
        assert!(fluctuation_scaling(&[8], 0.5, PovmFamily::StandardBasis, 10, RngSeed(1)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn tail_curve_is_monotone(seed in any::<u64>(), ts in proptest::collection::vec(0.0f64..0.1, 1..8)) {
            let c = tail_experiment(TailStatistic::KStat, 4, 0.8, &Povm::standard_basis(4), 1000, Some(&ts), RngSeed(seed)).unwrap();
            prop_assert!(c.thresholds.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(c.empirical_exceed_prob.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(c.empirical_exceed_prob.iter().all(|p| (0.0..=1.0).contains(p)));
        }

        #[test]
        fn conjugation_invariance(seed in any::<u64>(), d in 2usize..6) {
            let mut rng = RngSeed(seed).rng();
            let a = random_hermitian(d, &mut rng);
            let b = random_hermitian(d, &mut rng);
            let v = haar_unitary::<f64, _>(d, &mut rng);
            let x = second_moment_trace(&a, &b).unwrap();
            let y = second_moment_trace(&a.conjugate_by(&v).unwrap(), &b.conjugate_by(&v).unwrap()).unwrap();
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }
}
