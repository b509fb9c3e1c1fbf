//! Collision-based uniformity testing in L2.
//!
//! With `N` samples from `q` over `[d]`, the collision count
//! `S = #{i < j : x_i = x_j}` has mean `C(N,2)·‖q‖₂²`. Uniform `q` gives
//! `‖q‖₂² = 1/d`; `q` at L2 distance `ε'/√d` from uniform gives
//! `(1 + ε'²)/d`. The test thresholds at the midpoint.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_arg, Result};
use crate::stats::fmt_f64;

/// `C₀` in `N = ⌈C₀ √d / ε'²⌉`.
pub const C0: f64 = 16.0;

/// Outcome of a uniformity test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Uniform,
    Far,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Uniform => "uniform",
            Verdict::Far => "far",
        })
    }
}

/// `Σ_j C(c_j, 2)` over per-symbol tallies.
pub fn collision_count(samples: &[usize], d: usize) -> Result<u64> {
    let mut counts = vec![0u64; d];
    for &x in samples {
        ensure_arg!(x < d, "sample {x} out of range for d = {d}");
        counts[x] += 1;
    }
    Ok(counts.iter().map(|&c| c * c.saturating_sub(1) / 2).sum())
}

/// `⌈C₀ √d / ε'²⌉`.
pub fn required_samples_l2(d: usize, eps_prime: f64) -> Result<usize> {
    ensure_arg!(d >= 1, "support size must be positive");
    ensure_arg!(eps_prime > 0.0 && eps_prime <= 1.0, "eps' must lie in (0, 1], got {eps_prime}");
    Ok((C0 * (d as f64).sqrt() / (eps_prime * eps_prime)).ceil() as usize)
}

/// Sample count and threshold of one collision test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionTestConfig {
    pub d: usize,
    /// `ε'`: the test separates uniform from L2 distance `ε'/√d`.
    pub eps_l2_param: f64,
    pub n: usize,
    /// `C(N,2)·(1 + ε'²/2)/d`.
    pub threshold: f64,
}

impl CollisionTestConfig {
    /// Any `N ≥ 2`; use [`CollisionTestConfig::calibrated`] for the guaranteed sample count.
    pub fn new(d: usize, eps_l2_param: f64, n: usize) -> Result<Self> {
        ensure_arg!(d >= 1, "support size must be positive");
        ensure_arg!(n >= 2, "collision testing needs at least two samples");
        ensure_arg!(eps_l2_param > 0.0 && eps_l2_param <= 1.0, "eps' must lie in (0, 1], got {eps_l2_param}");
        let pairs = (n as f64) * (n as f64 - 1.0) / 2.0;
        let threshold = pairs * (1.0 + eps_l2_param * eps_l2_param / 2.0) / d as f64;
        Ok(CollisionTestConfig { d, eps_l2_param, n, threshold })
    }

    pub fn calibrated(d: usize, eps_l2_param: f64) -> Result<Self> {
        Self::new(d, eps_l2_param, required_samples_l2(d, eps_l2_param)?.max(2))
    }

    /// Uniform iff `S ≤ threshold`.
    pub fn decide(&self, collisions: u64) -> Verdict {
        if collisions as f64 <= self.threshold {
            Verdict::Uniform
        } else {
            Verdict::Far
        }
    }

    /// Counts collisions in `samples` (which must number exactly `N`) and decides.
    pub fn run(&self, samples: &[usize]) -> Result<UniformityOutcome> {
        ensure_arg!(samples.len() == self.n, "expected {} samples, got {}", self.n, samples.len());
        let s = collision_count(samples, self.d)?;
        Ok(UniformityOutcome { config: self.clone(), collisions: s, verdict: self.decide(s) })
    }
}

/// A completed test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformityOutcome {
    pub config: CollisionTestConfig,
    pub collisions: u64,
    pub verdict: Verdict,
}

impl UniformityOutcome {
    pub const CSV_HEADER: [&'static str; 7] = ["d", "eps_prime", "N", "S", "threshold", "verdict", "seed"];

    pub fn csv_record(&self, seed: u64) -> Vec<String> {
        vec![
            self.config.d.to_string(),
            fmt_f64(self.config.eps_l2_param),
            self.config.n.to_string(),
            self.collisions.to_string(),
            fmt_f64(self.config.threshold),
            self.verdict.to_string(),
            seed.to_string(),
        ]
    }
}

/// Collision test on all of `samples`; errors when fewer than [`required_samples_l2`].
pub fn test_uniformity_l2(samples: &[usize], d: usize, eps_prime: f64) -> Result<UniformityOutcome> {
    let need = required_samples_l2(d, eps_prime)?;
    ensure_arg!(
        samples.len() >= need.max(2),
        "{} samples given, the test needs at least {need}",
        samples.len()
    );
    CollisionTestConfig::new(d, eps_prime, samples.len())?.run(samples)
}

/// `‖q‖₂²`.
pub fn l2_norm_sq(q: &[f64]) -> f64 {
    q.iter().map(|p| p * p).sum()
}

/// `‖q − u‖₂` for `u` uniform on the support of `q`.
pub fn l2_to_uniform(q: &[f64]) -> f64 {
    let u = 1.0 / q.len() as f64;
    q.iter().map(|p| (p - u).powi(2)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc;
    use crate::rng::RngSeed;
    use crate::states::Categorical;
    use crate::stats::Summary;
    use proptest::prelude::*;

    /// `q_i = (1 ± ε')/d`, at L2 distance exactly `ε'/√d`.
    fn perturbed(d: usize, eps: f64) -> Vec<f64> {
        (0..d).map(|i| (1.0 + if i % 2 == 0 { eps } else { -eps }) / d as f64).collect()
    }

    fn draw(q: &[f64], n: usize, seed: RngSeed) -> Vec<usize> {
        let cat = Categorical::new(q);
        let mut rng = seed.rng();
        (0..n).map(|_| cat.sample(&mut rng)).collect()
    }

    #[test]
    fn collision_examples() {
        assert_eq!(collision_count(&[0, 1, 2, 3], 4).unwrap(), 0);
        assert_eq!(collision_count(&[2; 7], 4).unwrap(), 21);
        assert_eq!(collision_count(&[0, 0, 1], 4).unwrap(), 1);
        assert!(collision_count(&[5], 4).is_err());
    }

    #[test]
    fn sample_size_examples() {
        assert_eq!(required_samples_l2(100, 1.0).unwrap(), 160);
        assert_eq!(required_samples_l2(1, 0.5).unwrap(), 64);
        let a = required_samples_l2(256, 0.2).unwrap();
        let b = required_samples_l2(256, 0.4).unwrap();
        assert!(b <= a.div_ceil(4) && a.div_ceil(4) <= b + 1);
        assert!(required_samples_l2(10, 0.0).is_err());
    }

    #[test]
    fn point_mass_is_far() {
        let out = test_uniformity_l2(&vec![3; 160], 100, 1.0).unwrap();
        assert_eq!(out.collisions, 160 * 159 / 2);
        assert_eq!(out.verdict, Verdict::Far);
        assert!(test_uniformity_l2(&[1; 10], 100, 1.0).is_err());
    }

    #[test]
    fn accept_and_reject_rates() {
        let d = 100;
        let n = required_samples_l2(d, 1.0).unwrap();
        let uniform = vec![1.0 / d as f64; d];
        let far = perturbed(d, 1.0);
        assert!((l2_to_uniform(&far) - 1.0 / (d as f64).sqrt()).abs() < 1e-15);
        let rate = |q: &[f64], seed: u64, want: Verdict| {
            let hits = mc::per_trial(RngSeed(seed), 500, |s, _| {
                test_uniformity_l2(&draw(q, n, s), d, 1.0).unwrap().verdict == want
            });
            hits.iter().filter(|&&h| h).count() as f64 / 500.0
        };
        assert!(rate(&uniform, 1, Verdict::Uniform) >= 0.9);
        assert!(rate(&far, 2, Verdict::Far) >= 0.9);
    }

    #[test]
    fn collision_count_is_unbiased() {
        let (d, n, trials) = (32, 60, 10_000);
        let pairs = (n * (n - 1) / 2) as f64;
        for (k, q) in [vec![1.0 / d as f64; d], perturbed(d, 0.6)].iter().enumerate() {
            let s = Summary::from_values(&mc::per_trial(RngSeed(10 + k as u64), trials, |seed, _| {
                collision_count(&draw(q, n, seed), d).unwrap() as f64
            }));
            let want = pairs * l2_norm_sq(q);
            assert!((s.mean() - want).abs() <= 4.0 * s.stderr(), "{} vs {want}", s.mean());
        }
    }

    proptest! {
        #[test]
        fn verdict_is_permutation_invariant(
            samples in proptest::collection::vec(0usize..20, 89..140),
            seed in any::<u64>(),
        ) {
            let mut shuffled = samples.clone();
            rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut RngSeed(seed).rng());
            let a = test_uniformity_l2(&samples, 20, 0.9).unwrap();
            let b = test_uniformity_l2(&shuffled, 20, 0.9).unwrap();
            prop_assert_eq!(a.collisions, b.collisions);
            prop_assert_eq!(a.verdict, b.verdict);
        }

        #[test]
        fn adding_collisions_never_flips_far_to_uniform(
            samples in proptest::collection::vec(0usize..20, 89..140),
            slot in any::<proptest::sample::Index>(),
        ) {
            let cfg = CollisionTestConfig::new(20, 0.9, samples.len()).unwrap();
            let before = cfg.run(&samples).unwrap();
            let mut more = samples.clone();
            // Replace one sample by a copy of the most frequent symbol.
            let mut counts = [0usize; 20];
            for &x in &samples { counts[x] += 1; }
            let top = (0..20).max_by_key(|&j| counts[j]).unwrap();
            let i = slot.index(more.len());
            more[i] = top;
            let after = cfg.run(&more).unwrap();
            prop_assert!(after.collisions >= before.collisions);
            if before.verdict == Verdict::Far {
                prop_assert_eq!(after.verdict, Verdict::Far);
            }
        }
    }
}
