//! Output analysis for steady-state simulation: non-overlapping batch means.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Default number of batches per run.
pub const DEFAULT_BATCHES: usize = 30;

/// Two-sided Student-t quantile for a 95% interval with `dof` degrees of freedom.
pub fn t95(dof: usize) -> f64 {
    assert!(dof >= 1);
    StudentsT::new(0.0, 1.0, dof as f64).expect("valid t distribution").inverse_cdf(0.975)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    /// Standard error of `mean` from the spread of batch (or replication) means.
    pub std_error: f64,
    /// 95% confidence half-width.
    pub half_width: f64,
    pub batches: usize,
}

impl Estimate {
    /// Mean and t-interval of a set of (approximately) i.i.d. means.
    pub fn from_means(means: &[f64]) -> Estimate {
        let k = means.len();
        assert!(k > 0, "no means");
        let mean = means.iter().sum::<f64>() / k as f64;
        if k == 1 {
            return Estimate { mean, std_error: f64::NAN, half_width: f64::NAN, batches: 1 };
        }
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
        let std_error = (var / k as f64).sqrt();
        Estimate { mean, std_error, half_width: t95(k - 1) * std_error, batches: k }
    }

    pub fn has_interval(&self) -> bool {
        self.half_width.is_finite()
    }

    /// `|mean − target|` in standard errors.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target).abs() / self.std_error
    }
}

/// Batch-means estimate of the mean of a stationary series held in memory.
pub fn batch_means(xs: &[f64], batches: usize) -> Estimate {
    let len = xs.len() / batches;
    assert!(len > 0, "series shorter than batch count");
    let means: Vec<f64> = xs.chunks_exact(len).take(batches).map(|c| c.iter().sum::<f64>() / len as f64).collect();
    Estimate::from_means(&means)
}

/// Streaming batch-means accumulator for a run of known length.
///
/// Samples past `batches * batch_len` fall into the final batch, so every
/// sample counts toward the overall mean.
#[derive(Debug, Clone)]
pub struct BatchAccumulator {
    batch_len: u64,
    sums: Vec<f64>,
    counts: Vec<u64>,
    current: usize,
    in_batch: u64,
}

impl BatchAccumulator {
    pub fn new(total: u64, batches: usize) -> Self {
        assert!(batches >= 1);
        let batch_len = (total / batches as u64).max(1);
        BatchAccumulator { batch_len, sums: vec![0.0; batches], counts: vec![0; batches], current: 0, in_batch: 0 }
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.sums[self.current] += x;
        self.counts[self.current] += 1;
        self.in_batch += 1;
        if self.in_batch == self.batch_len && self.current + 1 < self.sums.len() {
            self.current += 1;
            self.in_batch = 0;
        }
    }

    pub fn count(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sums.iter().sum::<f64>() / self.count() as f64
    }

    pub fn batch_means(&self) -> Vec<f64> {
        self.sums.iter().zip(&self.counts).filter(|(_, &c)| c > 0).map(|(s, &c)| s / c as f64).collect()
    }

    /// Estimate with the overall mean and a batch-means standard error.
    pub fn estimate(&self) -> Estimate {
        let means = self.batch_means();
        let mut e = Estimate::from_means(&means);
        e.mean = self.mean();
        e
    }
}

/// Pearson chi-square goodness-of-fit p-value against a uniform law.
pub fn chi_square_uniform_p(counts: &[u64]) -> f64 {
    use statrs::distribution::ChiSquared;
    let k = counts.len();
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / k as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    1.0 - ChiSquared::new((k - 1) as f64).expect("dof > 0").cdf(stat)
}
