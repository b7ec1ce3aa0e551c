//! Compensated accumulators for sample means and standard errors, and the
//! few significance thresholds the checks use.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Two-sided probability that a standard normal lands outside `±3`.
pub const THREE_SIGMA_TAIL: f64 = 2.699_796_063_260_189e-3;

/// `|z|` bound that `m` independent standard normals all stay under with the
/// probability a single one stays within 3σ (Šidák correction). Equals 3 for
/// `m = 1`.
pub fn family_z_bound(m: usize) -> f64 {
    if m <= 1 {
        return 3.0;
    }
    let per_test = -(-THREE_SIGMA_TAIL).ln_1p() / m as f64;
    let per_test = -(-per_test).exp_m1();
    let normal = Normal::standard();
    -normal.inverse_cdf(0.5 * per_test)
}

/// Chi-square test that independent estimates share one mean. Returns
/// `(chi², degrees of freedom, p-value)`.
pub fn homogeneity_test(values: &[f64], stderrs: &[f64]) -> (f64, usize, f64) {
    assert_eq!(values.len(), stderrs.len());
    let weights: Vec<f64> = stderrs.iter().map(|e| 1.0 / (e * e)).collect();
    let total: f64 = weights.iter().sum();
    let mean = values.iter().zip(&weights).map(|(v, w)| v * w).sum::<f64>() / total;
    let chi2: f64 = values
        .iter()
        .zip(&weights)
        .map(|(v, w)| (v - mean).powi(2) * w)
        .sum();
    let dof = values.len().saturating_sub(1);
    let p = match ChiSquared::new(dof as f64) {
        Ok(dist) => dist.sf(chi2),
        Err(_) => 1.0,
    };
    (chi2, dof, p)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Sample mean and variance of a stream of per-trial values.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanAccumulator {
    n: u64,
    sum: CompensatedSum,
    sum_sq: CompensatedSum,
}

impl MeanAccumulator {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum.add(x);
        self.sum_sq.add(x * x);
    }

    pub fn merge(&mut self, other: &MeanAccumulator) {
        self.n += other.n;
        self.sum.merge(&other.sum);
        self.sum_sq.merge(&other.sum_sq);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.sum.value() / self.n as f64
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let s = self.sum.value();
        ((self.sum_sq.value() - s * s / n) / (n - 1.0)).max(0.0)
    }

    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.variance() / self.n as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }

    #[test]
    fn mean_and_variance() {
        let mut acc = MeanAccumulator::default();
        for x in [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0] {
            acc.push(x);
        }
        assert_eq!(acc.mean(), 5.0);
        assert!((acc.variance() - 32.0 / 7.0).abs() < 1e-14);
        assert!((acc.stderr() - (32.0 / 7.0 / 8.0f64).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn merge_equals_single_stream() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut whole = MeanAccumulator::default();
        xs.iter().for_each(|&x| whole.push(x));
        let mut a = MeanAccumulator::default();
        let mut b = MeanAccumulator::default();
        xs[..40].iter().for_each(|&x| a.push(x));
        xs[40..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert_eq!(a.count(), 100);
        assert!((a.mean() - whole.mean()).abs() < 1e-15);
        assert!((a.variance() - whole.variance()).abs() < 1e-14);
    }
}
