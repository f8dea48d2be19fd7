//! Mergeable Monte Carlo accumulators.

/// Running (count, mean, second central moment) accumulator. Merging is
/// associative, so replica results can be combined in index order to give
/// results independent of the parallel schedule.
#[derive(Clone, Copy, Debug, Default)]
pub struct Estimate {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Estimate {
    pub fn new() -> Self {
        Estimate::default()
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Bernoulli observation.
    #[inline]
    pub fn push_bool(&mut self, hit: bool) {
        self.push(if hit { 1.0 } else { 0.0 });
    }

    /// Chan's parallel merge.
    pub fn merge(&mut self, other: &Estimate) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n1 = self.n as f64;
        let n2 = other.n as f64;
        let d = other.mean - self.mean;
        let n = n1 + n2;
        self.mean += d * n2 / n;
        self.m2 += other.m2 + d * d * n1 * n2 / n;
        self.n += other.n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample variance (unbiased).
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        self.m2 / (self.n as f64 - 1.0)
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            return f64::INFINITY;
        }
        (self.variance() / self.n as f64).sqrt()
    }

    /// Symmetric confidence half-width at `z` standard errors.
    pub fn half_width(&self, z: f64) -> f64 {
        z * self.stderr()
    }
}
