//! Random-basis mixedness certifier.
//!
//! Measure every copy in one Haar-random basis. Under `ρ_mm` the outcome law
//! is exactly uniform; for a state ε-far in trace distance it is, with high
//! probability over the basis, about `ε/d` away from uniform in L2. A collision
//! tester on the outcomes separates the two.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_arg, Result};
use crate::haar::haar_unitary;
use crate::rng::RngSeed;
use crate::states::{basis_povm, outcome_distribution, sample_outcomes, DensityMatrix, HardInstance, StateSource};
use crate::uniformity::{CollisionTestConfig, Verdict};

/// `C₁` in `N = ⌈C₁ d^{3/2} / ε²⌉`.
pub const C1: f64 = 24.0;

/// Fraction of the nominal `ε/d` L2 separation the inner tester is tuned to detect.
pub const DETECTION_FRACTION: f64 = 0.5;

/// `⌈C₁ d^{3/2} / ε²⌉`.
pub fn copies_needed(d: usize, eps: f64) -> Result<usize> {
    ensure_arg!(d >= 1, "dimension must be positive");
    ensure_arg!(eps > 0.0 && eps <= 1.0, "eps must lie in (0, 1], got {eps}");
    Ok((C1 * (d as f64).powf(1.5) / (eps * eps)).ceil() as usize)
}

/// `ε'` handed to the collision tester: it detects L2 distance `ε'/√d = ε/(2d)`.
pub fn inner_eps_prime(d: usize, eps: f64) -> f64 {
    DETECTION_FRACTION * eps / (d as f64).sqrt()
}

/// Certifier decision: `Yes` means "maximally mixed".
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CertifyVerdict {
    Yes,
    No,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyResult {
    pub verdict: CertifyVerdict,
    pub d: usize,
    pub eps: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "S")]
    pub s: u64,
    pub threshold: f64,
    pub seed: u64,
}

impl CertifyResult {
    /// The verdict agrees with `S ≤ threshold`.
    pub fn is_consistent(&self) -> bool {
        (self.s as f64 <= self.threshold) == (self.verdict == CertifyVerdict::Yes)
    }
}

const STATE_STREAM: u64 = 0;
const BASIS_STREAM: u64 = 1;
const OUTCOME_STREAM: u64 = 2;

/// Resolves the state measured in one trial; hard instances draw their rotation from `seed`.
pub fn trial_state(source: &StateSource<f64>, seed: RngSeed) -> Result<DensityMatrix<f64>> {
    match source {
        StateSource::Fixed(rho) => Ok(rho.clone()),
        StateSource::HardInstance { d, eps } => {
            HardInstance::sample(*d, *eps, &mut seed.derive(STATE_STREAM).rng())?.state()
        }
    }
}

/// One run of the certifier with `copies_needed(d, eps)` copies.
pub fn test_mixed(source: &StateSource<f64>, d: usize, eps: f64, seed: RngSeed) -> Result<CertifyResult> {
    test_mixed_with_copies(source, d, eps, copies_needed(d, eps)?, seed)
}

/// One run with an explicit copy count `n`. Fewer than two copies carry no
/// collision information, so the run accepts with `S = 0` and threshold `0`.
pub fn test_mixed_with_copies(
    source: &StateSource<f64>,
    d: usize,
    eps: f64,
    n: usize,
    seed: RngSeed,
) -> Result<CertifyResult> {
    ensure_arg!(source.dim() == d, "state has dimension {}, expected {d}", source.dim());
    ensure_arg!(eps > 0.0 && eps <= 1.0, "eps must lie in (0, 1], got {eps}");
    if n < 2 {
        return Ok(CertifyResult { verdict: CertifyVerdict::Yes, d, eps, n, s: 0, threshold: 0.0, seed: seed.0 });
    }
    let rho = trial_state(source, seed)?;
    let u = haar_unitary::<f64, _>(d, &mut seed.derive(BASIS_STREAM).rng());
    let povm = basis_povm(&u)?;
    let samples = sample_outcomes(&rho, &povm, n, &mut seed.derive(OUTCOME_STREAM).rng())?;
    // N is below the inner tester's own guarantee at this ε'; the outer constant covers it.
    let outcome = CollisionTestConfig::new(d, inner_eps_prime(d, eps), n)?.run(&samples)?;
    let verdict = match outcome.verdict {
        Verdict::Uniform => CertifyVerdict::Yes,
        Verdict::Far => CertifyVerdict::No,
    };
    Ok(CertifyResult { verdict, d, eps, n, s: outcome.collisions, threshold: outcome.config.threshold, seed: seed.0 })
}

/// `‖q − u‖₂` of the outcome law of `rho` in the basis given by the columns of `u`.
pub fn basis_l2_distance(rho: &DensityMatrix<f64>, u: &crate::matrix::Matrix<f64>) -> Result<f64> {
    Ok(crate::uniformity::l2_to_uniform(&outcome_distribution(rho, &basis_povm(u)?)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc;
    use num_complex::Complex;

    #[test]
    fn copies_examples() {
        assert_eq!(copies_needed(16, 0.5).unwrap(), 6144);
        assert_eq!(copies_needed(16, 0.25).unwrap(), 4 * 6144);
        assert_eq!(copies_needed(1, 0.5).unwrap(), 96);
        assert!(copies_needed(16, 0.0).is_err());
        assert!(copies_needed(16, 1.5).is_err());
    }

    fn rate(source: &StateSource<f64>, want: CertifyVerdict, seed: u64) -> f64 {
        let hits = mc::per_trial(RngSeed(seed), 200, |s, _| {
            let r = test_mixed(source, 16, 0.5, s).unwrap();
            assert!(r.is_consistent());
            r.verdict == want
        });
        hits.iter().filter(|&&h| h).count() as f64 / 200.0
    }

    #[test]
    fn mixed_state_is_accepted() {
        let src = StateSource::Fixed(DensityMatrix::maximally_mixed(16));
        assert!(rate(&src, CertifyVerdict::Yes, 1) >= 0.75);
    }

    #[test]
    fn hard_instance_is_rejected() {
        let src = StateSource::HardInstance { d: 16, eps: 0.5 };
        assert!(rate(&src, CertifyVerdict::No, 2) >= 0.75);
    }

    #[test]
    fn pure_state_is_rejected() {
        let mut e1 = vec![Complex::new(0.0, 0.0); 16];
        e1[0] = Complex::new(1.0, 0.0);
        let src = StateSource::Fixed(DensityMatrix::pure(&e1).unwrap());
        assert!(rate(&src, CertifyVerdict::No, 3) >= 0.75);
    }

    #[test]
    fn too_few_copies_accept() {
        let src = StateSource::HardInstance { d: 8, eps: 0.7 };
        for n in [0, 1] {
            let r = test_mixed_with_copies(&src, 8, 0.7, n, RngSeed(1)).unwrap();
            assert_eq!((r.verdict, r.s), (CertifyVerdict::Yes, 0));
            assert!(r.is_consistent());
        }
    }

    #[test]
    fn verdict_is_deterministic() {
        let src = StateSource::HardInstance { d: 8, eps: 0.7 };
        assert_eq!(test_mixed(&src, 8, 0.7, RngSeed(5)).unwrap(), test_mixed(&src, 8, 0.7, RngSeed(5)).unwrap());
    }

    #[test]
    fn result_json_shape() {
        let src = StateSource::Fixed(DensityMatrix::maximally_mixed(4));
        let r = test_mixed(&src, 4, 0.9, RngSeed(1)).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for key in ["verdict", "d", "eps", "N", "S", "threshold", "seed"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert!(v["verdict"] == "YES" || v["verdict"] == "NO");
    }

    // ‖q − u‖₂ = (ε/d)·‖diag(U†X'U)‖_HS with E‖diag‖² = d/(d+1).
    #[test]
    fn far_case_separation_concentrates() {
        let (d, eps) = (32, 0.5);
        let mut vals = mc::sample_chunked(RngSeed(9), 1000, |rng, _| {
            let inst = HardInstance::sample(d, eps, rng).unwrap();
            let u = haar_unitary::<f64, _>(d, rng);
            basis_l2_distance(&inst.state().unwrap(), &u).unwrap() * d as f64 / eps
        });
        vals.sort_by(f64::total_cmp);
        let median = 0.5 * (vals[499] + vals[500]);
        assert!((0.8..=1.1).contains(&median), "median {median}");
    }
}
