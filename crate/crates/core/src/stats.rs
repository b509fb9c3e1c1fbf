//! Streaming summaries, interval estimates and small statistical helpers.

use serde::{Deserialize, Serialize};

/// Running mean and variance (Welford), mergeable with Chan's pairwise update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Summary {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Summary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_values(values: &[f64]) -> Self {
        let mut s = Self::new();
        for &v in values {
            s.push(v);
        }
        s
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Summary) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero with fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceEstimate {
    pub estimator: String,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(samples)`.
    pub stderr: f64,
    pub samples: u64,
}

impl DivergenceEstimate {
    pub fn from_summary(estimator: impl Into<String>, s: &Summary) -> Self {
        DivergenceEstimate { estimator: estimator.into(), mean: s.mean(), stderr: s.stderr(), samples: s.count() }
    }

    /// Deterministic value with no sampling error.
    pub fn exact(estimator: impl Into<String>, value: f64) -> Self {
        DivergenceEstimate { estimator: estimator.into(), mean: value, stderr: 0.0, samples: 0 }
    }

    pub const CSV_HEADER: [&'static str; 8] = ["estimator", "d", "eps", "N", "mean", "stderr", "samples", "seed"];

    pub fn csv_record(&self, d: usize, eps: f64, n: usize, seed: u64) -> Vec<String> {
        vec![
            self.estimator.clone(),
            d.to_string(),
            fmt_f64(eps),
            n.to_string(),
            fmt_f64(self.mean),
            fmt_f64(self.stderr),
            self.samples.to_string(),
            seed.to_string(),
        ]
    }
}

/// Shortest round-trip representation; stable across runs.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Wilson score interval for a binomial proportion at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Standard error of an empirical proportion.
pub fn proportion_stderr(p: f64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        (p * (1.0 - p) / n as f64).sqrt()
    }
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j) = (0usize, 0usize);
    let mut best: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        best = best.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    best
}

/// Ordinary least squares `y ≈ intercept + slope·x`.
pub fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}
