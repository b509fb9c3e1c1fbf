//! The classical Paninski instance and its exact likelihood quantities.
//!
//! Symbols are `0..d`. Symbol `i` belongs to pair `a = i / 2`; even symbols
//! carry `−ε z_a`, odd symbols `+ε z_a`:
//! `D_z(i) = (1 + g^z(i)) / d`.
//!
//! For a transcript with histogram `h`, pair `a` contributes the counts
//! `(h₁, h₂) = (h_{2a}, h_{2a+1})` and
//!
//! * `A^{h₁,h₂} = ½((1−ε)^{h₁}(1+ε)^{h₂} + (1−ε)^{h₂}(1+ε)^{h₁}) = E_z[∏(1+g)]` on the pair
//! * `B^{h₁,h₂} = ½((1−ε)^{h₁}(1+ε)^{h₂} − (1−ε)^{h₂}(1+ε)^{h₁}) = E_z[z_a ∏(1+g)]`
//!
//! The closed forms are generic over [`Field`] so that they can be evaluated
//! exactly over the rationals; the `_f64` variants switch to log space for
//! long transcripts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_arg, Result};
use crate::scalar::Field;

/// Enumeration budget `2^{d/2} · d^t`.
pub const ENUMERATION_BUDGET: f64 = 1e8;
/// `t·ε²` above which the `_f64` closed forms work in log space.
pub const LOG_SPACE_THRESHOLD: f64 = 30.0;
/// Constant `c` in `E_x[(Ψ^{z,z'}_{x<t})²] ≤ (1 + c ε²)^{t−1}`; per step the
/// worst case is `z = z'` with `E[(1+g)⁴] = 1 + 6ε² + ε⁴`.
pub const PSI_SECOND_MOMENT_C: f64 = 9.0;

/// `z ∈ {±1}^{d/2}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignVector {
    z: Vec<i8>,
}

impl SignVector {
    pub fn new(z: Vec<i8>) -> Result<Self> {
        ensure_arg!(!z.is_empty(), "sign vector must be nonempty");
        ensure_arg!(z.iter().all(|&s| s == 1 || s == -1), "sign vector entries must be ±1");
        Ok(SignVector { z })
    }

    /// The `k`-th of the `2^{d/2}` sign vectors: bit `a` set means `z_a = −1`.
    pub fn from_index(d: usize, k: u64) -> Self {
        SignVector { z: (0..d / 2).map(|a| if (k >> a) & 1 == 1 { -1 } else { 1 }).collect() }
    }

    pub fn dim(&self) -> usize {
        2 * self.z.len()
    }

    pub fn signs(&self) -> &[i8] {
        &self.z
    }

    pub fn dot(&self, other: &SignVector) -> i64 {
        self.z.iter().zip(&other.z).map(|(&a, &b)| (a * b) as i64).sum()
    }

    pub fn neg(&self) -> SignVector {
        SignVector { z: self.z.iter().map(|s| -s).collect() }
    }
}

/// Per-symbol counts of a transcript over `[d]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    counts: Vec<u64>,
}

impl Histogram {
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `(h_{2a}, h_{2a+1})`.
    pub fn pair(&self, a: usize) -> (u64, u64) {
        (self.counts[2 * a], self.counts[2 * a + 1])
    }
}

/// Histogram of a transcript over `[d]`.
pub fn histogram(d: usize, transcript: &[usize]) -> Result<Histogram> {
    ensure_arg!(d >= 2 && d % 2 == 0, "dimension must be even, got {d}");
    let mut counts = vec![0u64; d];
    for &x in transcript {
        ensure_arg!(x < d, "symbol {x} out of range for d = {d}");
        counts[x] += 1;
    }
    Ok(Histogram { counts })
}

fn check_eps<F: Field>(eps: &F) -> Result<()> {
    ensure_arg!(*eps >= F::zero() && *eps < F::one(), "eps must lie in [0, 1), got {}", eps.to_f64());
    Ok(())
}

/// `D_z(i) = 1/d ∓ ε z_{i/2}/d`.
pub fn paninski_marginals<F: Field>(z: &SignVector, eps: &F) -> Result<Vec<F>> {
    check_eps(eps)?;
    let d = F::from_u64(z.dim() as u64);
    Ok((0..z.dim()).map(|i| (F::one() + classical_g(z, i, eps)) / d.clone()).collect())
}

/// `g^z(i)`: `−ε z_{i/2}` for even `i`, `+ε z_{i/2}` for odd `i`.
pub fn classical_g<F: Field>(z: &SignVector, i: usize, eps: &F) -> F {
    let s = z.z[i / 2] as i64 * if i % 2 == 0 { -1 } else { 1 };
    F::from_i64(s) * eps.clone()
}

/// `φ^{z,z'} = (2ε²/d) ⟨z, z'⟩`.
pub fn classical_phi<F: Field>(z: &SignVector, z2: &SignVector, eps: &F) -> Result<F> {
    ensure_arg!(z.dim() == z2.dim(), "sign vectors differ in length");
    let d = F::from_u64(z.dim() as u64);
    Ok(F::from_u64(2) * eps.clone() * eps.clone() * F::from_i64(z.dot(z2)) / d)
}

/// Total variation `½ Σ |p − u|` to the uniform distribution.
pub fn tv_to_uniform(p: &[f64]) -> f64 {
    let u = 1.0 / p.len() as f64;
    0.5 * p.iter().map(|q| (q - u).abs()).sum::<f64>()
}

/// `(A^{h₁,h₂}, B^{h₁,h₂})`.
pub fn ab_coefficients<F: Field>(h1: u64, h2: u64, eps: &F) -> (F, F) {
    let lo = F::one() - eps.clone();
    let hi = F::one() + eps.clone();
    let a = lo.powi(h1) * hi.powi(h2);
    let b = lo.powi(h2) * hi.powi(h1);
    let half = F::one() / F::from_u64(2);
    ((a.clone() + b.clone()) * half.clone(), (a - b) * half)
}

/// `Δ(x_{<t}) = ∏_a A^{h_{2a}, h_{2a+1}}`.
pub fn delta_closed_form<F: Field>(h: &Histogram, eps: &F) -> F {
    (0..h.counts.len() / 2).fold(F::one(), |acc, a| {
        let (h1, h2) = h.pair(a);
        acc * ab_coefficients(h1, h2, eps).0
    })
}

/// `E_{z,z'}[⟨z,z'⟩ Ψ^{z,z'}_{x<t}] = Σ_a (B_a)² ∏_{a'≠a} (A_{a'})²`.
pub fn inner_psi_closed_form<F: Field>(h: &Histogram, eps: &F) -> F {
    let ab: Vec<(F, F)> = (0..h.counts.len() / 2)
        .map(|a| {
            let (h1, h2) = h.pair(a);
            ab_coefficients(h1, h2, eps)
        })
        .collect();
    let mut total = F::zero();
    for a in 0..ab.len() {
        let mut term = ab[a].1.clone() * ab[a].1.clone();
        for (k, (aa, _)) in ab.iter().enumerate() {
            if k != a {
                term = term * aa.clone() * aa.clone();
            }
        }
        total = total + term;
    }
    total
}

/// `C(n, k)` evaluated in the field.
pub fn binomial<F: Field>(n: u64, k: u64) -> F {
    if k > n {
        return F::zero();
    }
    let k = k.min(n - k);
    (0..k).fold(F::one(), |acc, i| acc * F::from_u64(n - i) / F::from_u64(i + 1))
}

/// `E_{z,z'}[(1 + 2ε²⟨z,z'⟩/d)^N] − 1`, summed over the law of
/// `⟨z,z'⟩ = d/2 − 2k`, `k ∼ Bin(d/2, 1/2)`.
pub fn chisq_exact<F: Field>(d: usize, n: u64, eps: &F) -> Result<F> {
    ensure_arg!(d >= 2 && d % 2 == 0, "dimension must be even, got {d}");
    check_eps(eps)?;
    let half = (d / 2) as u64;
    let df = F::from_u64(d as u64);
    let scale = F::from_u64(2).powi(half);
    let mut total = F::zero();
    for k in 0..=half {
        let inner = F::from_i64(half as i64 - 2 * k as i64);
        let base = F::one() + F::from_u64(2) * eps.clone() * eps.clone() * inner / df.clone();
        total = total + binomial::<F>(half, k) * base.powi(n);
    }
    Ok(total / scale - F::one())
}

/// [`chisq_exact`] in double precision, in log space when `N ε² > 30`.
pub fn chisq_exact_f64(d: usize, n: u64, eps: f64) -> Result<f64> {
    if (n as f64) * eps * eps <= LOG_SPACE_THRESHOLD {
        return chisq_exact::<f64>(d, n, &eps);
    }
    ensure_arg!(d >= 2 && d % 2 == 0, "dimension must be even, got {d}");
    check_eps(&eps)?;
    let half = (d / 2) as u64;
    let lf = ln_factorials(half);
    let logs: Vec<f64> = (0..=half)
        .filter_map(|k| {
            let base = 1.0 + 2.0 * eps * eps * (half as f64 - 2.0 * k as f64) / d as f64;
            (base > 0.0).then(|| ln_binomial(&lf, half, k) - half as f64 * std::f64::consts::LN_2 + n as f64 * base.ln())
        })
        .collect();
    Ok(log_sum_exp(&logs).exp_m1())
}

/// `Z_t = ε² · E_{ℓ∼Bin(t−1, 2/d)} E_{h₁∼Bin(ℓ,1/2)}[(B^{h₁,ℓ−h₁})² / A^{h₁,ℓ−h₁}]`.
///
/// `ℓ` counts the `t − 1` earlier symbols that land in one fixed pair. The
/// factors from the other pairs average to one.
pub fn zt_exact<F: Field>(d: usize, eps: &F, t: u64) -> Result<F> {
    ensure_arg!(d >= 2 && d % 2 == 0, "dimension must be even, got {d}");
    ensure_arg!(t >= 1, "t must be at least 1");
    check_eps(eps)?;
    let m = t - 1;
    let df = F::from_u64(d as u64);
    let p_in = F::from_u64(2) / df.clone();
    let p_out = F::from_u64(d as u64 - 2) / df;
    let half = F::one() / F::from_u64(2);
    let mut c = F::zero();
    for l in 0..=m {
        let w = binomial::<F>(m, l) * p_in.powi(l) * p_out.powi(m - l) * half.powi(l);
        let mut inner = F::zero();
        for h1 in 0..=l {
            let (a, b) = ab_coefficients(h1, l - h1, eps);
            inner = inner + binomial::<F>(l, h1) * b.clone() * b / a;
        }
        c = c + w * inner;
    }
    Ok(eps.clone() * eps.clone() * c)
}

/// [`zt_exact`] in double precision, in log space when `t ε² > 30`.
pub fn zt_exact_f64(d: usize, eps: f64, t: u64) -> Result<f64> {
    if (t as f64) * eps * eps <= LOG_SPACE_THRESHOLD {
        return zt_exact::<f64>(d, &eps, t);
    }
    ensure_arg!(d >= 2 && d % 2 == 0, "dimension must be even, got {d}");
    check_eps(&eps)?;
    let m = t - 1;
    let lf = ln_factorials(m);
    let (lp_in, lp_out) = ((2.0 / d as f64).ln(), ((d as f64 - 2.0) / d as f64).ln());
    let (llo, lhi) = ((1.0 - eps).ln(), (1.0 + eps).ln());
    let mut logs = Vec::new();
    for l in 0..=m {
        let lw = ln_binomial(&lf, m, l)
            + if l > 0 { l as f64 * lp_in } else { 0.0 }
            + if m > l { (m - l) as f64 * lp_out } else { 0.0 }
            - l as f64 * std::f64::consts::LN_2;
        for h1 in 0..=l {
            let h2 = l - h1;
            let la = h1 as f64 * llo + h2 as f64 * lhi;
            let lb = h2 as f64 * llo + h1 as f64 * lhi;
            if la == lb {
                continue;
            }
            // B²/A = ½ e^{max} (1 − r)² / (1 + r) with r = e^{−|la − lb|}.
            let r = (-(la - lb).abs()).exp();
            let lratio = la.max(lb) + (0.5 * (1.0 - r).powi(2) / (1.0 + r)).ln();
            logs.push(lw + ln_binomial(&lf, l, h1) + lratio);
        }
    }
    Ok(eps * eps * log_sum_exp(&logs).exp())
}

/// `ln Δ` in log space.
pub fn ln_delta_closed_form(h: &Histogram, eps: f64) -> f64 {
    let (llo, lhi) = ((1.0 - eps).ln(), (1.0 + eps).ln());
    (0..h.counts.len() / 2)
        .map(|a| {
            let (h1, h2) = h.pair(a);
            let la = h1 as f64 * llo + h2 as f64 * lhi;
            let lb = h2 as f64 * llo + h1 as f64 * lhi;
            log_sum_exp(&[la, lb]) - std::f64::consts::LN_2
        })
        .sum()
}

fn ln_factorials(n: u64) -> Vec<f64> {
    let mut v = Vec::with_capacity(n as usize + 1);
    let mut acc = 0.0;
    v.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        v.push(acc);
    }
    v
}

fn ln_binomial(lf: &[f64], n: u64, k: u64) -> f64 {
    lf[n as usize] - lf[k as usize] - lf[(n - k) as usize]
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Brute-force tables over every `z`, `z'` and transcript up to length `t_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleTables {
    pub d: usize,
    pub eps: f64,
    pub t_max: usize,
    /// `delta[n][k]`: `Δ` of the `k`-th transcript of length `n` (base-`d` digits, first symbol most significant).
    pub delta: Vec<Vec<f64>>,
    /// `inner_psi[n][k] = E_{z,z'}[⟨z,z'⟩ Ψ]`.
    pub inner_psi: Vec<Vec<f64>>,
    /// `psi_mean[n][k] = E_{z,z'}[Ψ]`.
    pub psi_mean: Vec<Vec<f64>>,
    /// `chisq[n] = χ²(p₁^{≤n} ‖ p₀^{≤n})`.
    pub chisq: Vec<f64>,
    /// `kl[n] = KL(p₁^{≤n} ‖ p₀^{≤n})` in nats.
    pub kl: Vec<f64>,
    /// `zt[t]` for `t = 1..=t_max + 1`; index 0 unused.
    pub zt: Vec<f64>,
}

impl OracleTables {
    /// `Σ_{t=1}^{N} Z_t`.
    pub fn chain_rule_rhs(&self, n: usize) -> f64 {
        self.zt[1..=n].iter().sum()
    }

    /// Smallest `Δ` over transcripts of length `n`.
    pub fn delta_min(&self, n: usize) -> f64 {
        self.delta[n].iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Decodes transcript `k` of length `n` into symbols.
pub fn transcript_from_index(d: usize, n: usize, mut k: usize) -> Vec<usize> {
    let mut out = vec![0; n];
    for slot in out.iter_mut().rev() {
        *slot = k % d;
        k /= d;
    }
    out
}

/// Exact tables by enumeration; `φ` is computed by summing over symbols.
pub fn enumeration_oracle(d: usize, eps: f64, t_max: usize) -> Result<OracleTables> {
    ensure_arg!(d >= 2 && d % 2 == 0, "dimension must be even, got {d}");
    check_eps(&eps)?;
    let cost = 2f64.powi((d / 2) as i32) * (d as f64).powi(t_max as i32);
    ensure_arg!(
        cost <= ENUMERATION_BUDGET,
        "enumeration needs 2^(d/2)·d^t = {cost:e} evaluations, over the budget of {ENUMERATION_BUDGET:e}"
    );
    let nz = 1u64 << (d / 2);
    let zs: Vec<SignVector> = (0..nz).map(|k| SignVector::from_index(d, k)).collect();
    let gs: Vec<Vec<f64>> = zs.iter().map(|z| (0..d).map(|i| classical_g(z, i, &eps)).collect()).collect();
    let phis: Vec<Vec<f64>> = gs
        .iter()
        .map(|g| gs.iter().map(|g2| g.iter().zip(g2).map(|(a, b)| a * b).sum::<f64>() / d as f64).collect())
        .collect();
    let dots: Vec<Vec<f64>> = zs.iter().map(|z| zs.iter().map(|z2| z.dot(z2) as f64).collect()).collect();
    let nzf = nz as f64;

    let mut tables = OracleTables {
        d,
        eps,
        t_max,
        delta: Vec::new(),
        inner_psi: Vec::new(),
        psi_mean: Vec::new(),
        chisq: Vec::new(),
        kl: Vec::new(),
        zt: vec![f64::NAN],
    };
    for n in 0..=t_max {
        let count = d.pow(n as u32);
        let rows: Vec<(f64, f64, f64, f64)> = (0..count)
            .into_par_iter()
            .map(|k| {
                let tr = transcript_from_index(d, n, k);
                let f: Vec<f64> = gs.iter().map(|g| tr.iter().map(|&x| 1.0 + g[x]).product()).collect();
                let delta = f.iter().sum::<f64>() / nzf;
                let (mut ip, mut pm, mut pp) = (0.0, 0.0, 0.0);
                for (i, fi) in f.iter().enumerate() {
                    for (j, fj) in f.iter().enumerate() {
                        let psi = fi * fj;
                        ip += dots[i][j] * psi;
                        pm += psi;
                        pp += phis[i][j] * psi;
                    }
                }
                (delta, ip / (nzf * nzf), pm / (nzf * nzf), pp / (nzf * nzf))
            })
            .collect();
        let p0 = 1.0 / count as f64;
        tables.chisq.push(rows.iter().map(|r| p0 * (r.0 - 1.0).powi(2)).sum());
        tables.kl.push(rows.iter().map(|r| if r.0 > 0.0 { p0 * r.0 * r.0.ln() } else { 0.0 }).sum());
        tables.zt.push(rows.iter().map(|r| p0 * r.3 / r.0).sum());
        tables.delta.push(rows.iter().map(|r| r.0).collect());
        tables.inner_psi.push(rows.iter().map(|r| r.1).collect());
        tables.psi_mean.push(rows.iter().map(|r| r.2).collect());
    }
    Ok(tables)
}

/// `E_{x<t∼U}[(Ψ^{z,z'}_{x<t})²]` by enumeration over transcripts of length `n`.
pub fn psi_second_moment_enumerated(z: &SignVector, z2: &SignVector, eps: f64, n: usize) -> Result<f64> {
    let d = z.dim();
    ensure_arg!(z2.dim() == d, "sign vectors differ in length");
    ensure_arg!((d as f64).powi(n as i32) <= ENUMERATION_BUDGET, "enumeration over budget");
    let step: Vec<f64> = (0..d)
        .map(|i| ((1.0 + classical_g(z, i, &eps)) * (1.0 + classical_g(z2, i, &eps))).powi(2))
        .collect();
    let count = d.pow(n as u32);
    let total: f64 = (0..count)
        .map(|k| transcript_from_index(d, n, k).iter().map(|&x| step[x]).product::<f64>())
        .sum();
    Ok(total / count as f64)
}

/// One row of the classical report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaninskiRow {
    pub d: usize,
    pub eps: f64,
    pub t: usize,
    pub zt_exact: f64,
    /// `min Δ(x_{<t})` over all transcripts, when enumeration is within budget.
    pub delta_min_over_transcripts: Option<f64>,
    /// `χ²` of the first `t` samples.
    pub chisq_exact: f64,
    /// `KL` of the first `t` samples, when enumeration is within budget.
    pub kl_exact: Option<f64>,
}

impl PaninskiRow {
    pub const CSV_HEADER: [&'static str; 7] =
        ["d", "eps", "t", "Zt_exact", "delta_min_over_transcripts", "chisq_exact", "kl_exact"];

    pub fn csv_record(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(crate::stats::fmt_f64).unwrap_or_default();
        vec![
            self.d.to_string(),
            crate::stats::fmt_f64(self.eps),
            self.t.to_string(),
            crate::stats::fmt_f64(self.zt_exact),
            opt(self.delta_min_over_transcripts),
            crate::stats::fmt_f64(self.chisq_exact),
            opt(self.kl_exact),
        ]
    }
}

/// Rows `t = 1..=t_max`, with enumerated columns filled when affordable.
pub fn paninski_report(d: usize, eps: f64, t_max: usize) -> Result<Vec<PaninskiRow>> {
    let oracle = enumeration_oracle(d, eps, t_max).ok();
    (1..=t_max)
        .map(|t| {
            Ok(PaninskiRow {
                d,
                eps,
                t,
                zt_exact: zt_exact_f64(d, eps, t as u64)?,
                delta_min_over_transcripts: oracle.as_ref().map(|o| o.delta_min(t - 1)),
                chisq_exact: chisq_exact_f64(d, t as u64, eps)?,
                kl_exact: oracle.as_ref().map(|o| o.kl[t]),
            })
        })
        .collect()
}
