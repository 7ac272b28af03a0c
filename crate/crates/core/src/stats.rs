//! Mergeable streaming mean and variance (Welford updates, Chan merge).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_slice(values: &[f64]) -> Self {
        let mut s = Self::new();
        for &v in values {
            s.push(v);
        }
        s
    }

    pub fn push(&mut self, value: f64) {
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (value - self.mean);
    }

    /// Combines two summaries as if their samples had been pushed into one.
    pub fn merge(&self, other: &RunningStats) -> RunningStats {
        if other.count == 0 {
            return *self;
        }
        if self.count == 0 {
            return *other;
        }
        let count = self.count + other.count;
        let (na, nb) = (self.count as f64, other.count as f64);
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * (nb / count as f64);
        let m2 = self.m2 + other.m2 + delta * delta * (na * nb / count as f64);
        RunningStats { count, mean, m2 }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; 0 below two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// `√(variance / count)`.
    pub fn std_error(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

impl Extend<f64> for RunningStats {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for v in iter {
            self.push(v);
        }
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        s.extend(iter);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn basic_moments() {
        let s = RunningStats::from_slice(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.count(), 4);
        assert_eq!(s.mean(), 2.5);
        assert!((s.variance() - 5.0 / 3.0).abs() < 1e-15);
        assert!((s.std_error() - (5.0 / 12.0f64).sqrt()).abs() < 1e-15);
        let two = RunningStats::from_slice(&[0.3, 0.9]);
        assert!(two.std_error().is_finite() && two.std_error() > 0.0);
        assert_eq!(RunningStats::new().merge(&two), two);
        assert_eq!(two.merge(&RunningStats::new()), two);
    }

    proptest! {
        #[test]
        fn merge_matches_single_pass(
            xs in proptest::collection::vec(-1e3f64..1e3, 3..200),
            cut1 in 0usize..200,
            cut2 in 0usize..200,
        ) {
            let n = xs.len();
            let (a, b) = (cut1 % n, cut2 % n);
            let (lo, hi) = (a.min(b), a.max(b));
            let whole = RunningStats::from_slice(&xs);
            let p1 = RunningStats::from_slice(&xs[..lo]);
            let p2 = RunningStats::from_slice(&xs[lo..hi]);
            let p3 = RunningStats::from_slice(&xs[hi..]);
            let left = p1.merge(&p2).merge(&p3);
            let right = p1.merge(&p2.merge(&p3));
            let swapped = p3.merge(&p1).merge(&p2);
            for m in [left, right, swapped] {
                prop_assert_eq!(m.count(), whole.count());
                prop_assert!(rel(m.mean(), whole.mean()) <= 1e-12 || (m.mean() - whole.mean()).abs() < 1e-12);
                prop_assert!(rel(m.variance(), whole.variance()) <= 1e-12);
            }
        }
    }
}
