//! Statistical helpers for the Monte Carlo cross-checks.

use crate::error::MembraneError;
use serde::{Deserialize, Serialize};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, (var / n).sqrt())
}

/// z-score of the sample mean against a hypothesized value.
pub fn z_score(xs: &[f64], hypothesis: f64) -> f64 {
    let (m, se) = mean_se(xs);
    if se == 0.0 {
        if (m - hypothesis).abs() == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (m - hypothesis) / se
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Two-sided critical value for a standard normal at level `alpha`
/// (bisection on the CDF; plenty accurate for test thresholds).
pub fn normal_quantile_two_sided(alpha: f64) -> f64 {
    let target = 1.0 - alpha / 2.0;
    let (mut lo, mut hi) = (0.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Sup distance between the empirical CDF of `samples` and a reference CDF.
pub fn ks_distance_to_cdf<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let mut worst = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        worst = worst.max((f - lo).abs()).max((hi - f).abs());
    }
    worst
}

/// Two-sample sup-CDF distance.
pub fn ks_distance_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut worst = 0.0f64;
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        worst = worst.max((i as f64 / na - j as f64 / nb).abs());
    }
    worst
}

/// Histogram density estimate with per-bin binomial standard errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityTable {
    pub lo: f64,
    pub hi: f64,
    pub bin_width: f64,
    pub centers: Vec<f64>,
    pub density: Vec<f64>,
    pub se: Vec<f64>,
    pub n_samples: usize,
    /// Fraction of samples outside [lo, hi].
    pub outside: f64,
}

impl DensityTable {
    pub fn from_samples(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Self, MembraneError> {
        if samples.is_empty() {
            return Err(MembraneError::EmptyEnsemble);
        }
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        let mut outside = 0usize;
        for &x in samples {
            if x < lo || x >= hi {
                outside += 1;
            } else {
                counts[((x - lo) / width) as usize] += 1;
            }
        }
        let n = samples.len() as f64;
        let density: Vec<f64> = counts.iter().map(|&c| c as f64 / (n * width)).collect();
        let se = counts
            .iter()
            .map(|&c| {
                let p = c as f64 / n;
                (p * (1.0 - p) / n).sqrt() / width
            })
            .collect();
        Ok(DensityTable {
            lo,
            hi,
            bin_width: width,
            centers: (0..bins).map(|i| lo + (i as f64 + 0.5) * width).collect(),
            density,
            se,
            n_samples: samples.len(),
            outside: outside as f64 / n,
        })
    }

    /// Total mass of the histogram including the outside fraction.
    pub fn total_mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.bin_width + self.outside
    }
}
