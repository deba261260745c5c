//! Special functions, exact binomial oracles and goodness-of-fit statistics.

use alloc::vec::Vec;

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / core::f64::consts::SQRT_2)
}

/// `ln C(n, k)`.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

/// `ln P(Binomial(n, p) = k)`.
pub fn ln_binomial_pmf(n: u64, k: u64, p: f64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_choose(n, k) + k as f64 * libm::log(p) + (n - k) as f64 * libm::log1p(-p)
}

/// `ln P(Binomial(n, p) >= k)` by log-sum-exp over the upper tail.
pub fn ln_binomial_upper_tail(n: u64, k: u64, p: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    if k > n {
        return f64::NEG_INFINITY;
    }
    let terms: Vec<f64> = (k..=n).map(|j| ln_binomial_pmf(n, j, p)).collect();
    log_sum_exp(&terms)
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + libm::log(xs.iter().map(|x| libm::exp(x - m)).sum::<f64>())
}

/// Relative entropy of Bernoulli(`alpha`) to Bernoulli(`p`).
pub fn bernoulli_kl(alpha: f64, p: f64) -> f64 {
    let a = if alpha > 0.0 { alpha * libm::log(alpha / p) } else { 0.0 };
    let b = if alpha < 1.0 { (1.0 - alpha) * libm::log((1.0 - alpha) / (1.0 - p)) } else { 0.0 };
    a + b
}

/// Kolmogorov-Smirnov distance between a sample and a continuous
/// distribution function. Sorts `xs` in place.
pub fn ks_statistic<F: Fn(f64) -> f64>(xs: &mut [f64], cdf: F) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

/// Kolmogorov-Smirnov distance for integer-valued samples against a
/// lattice distribution function `cdf(k) = P(X <= k)`, compared at every
/// lattice point between the sample extremes.
pub fn ks_lattice<F: Fn(i64) -> f64>(xs: &mut [i64], cdf: F) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_unstable();
    let n = xs.len() as f64;
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    let mut d = cdf(lo - 1).abs();
    let mut i = 0usize;
    for k in lo..=hi {
        while i < xs.len() && xs[i] <= k {
            i += 1;
        }
        d = d.max((i as f64 / n - cdf(k)).abs());
    }
    d.max(1.0 - cdf(hi))
}

/// Streaming count / mean / second central moment (Welford). Merges are
/// associative, so per-worker accumulators can be combined in any grouping.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulator {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&self, o: &Self) -> Self {
        if self.count == 0 {
            return *o;
        }
        if o.count == 0 {
            return *self;
        }
        let count = self.count + o.count;
        let d = o.mean - self.mean;
        let mean = self.mean + d * o.count as f64 / count as f64;
        let m2 = self.m2 + o.m2 + d * d * self.count as f64 * o.count as f64 / count as f64;
        Self { count, mean, m2 }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_err(&self) -> f64 {
        libm::sqrt(self.variance() / self.count as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_pmf_sums_to_one() {
        let total: f64 = (0..=50).map(|k| libm::exp(ln_binomial_pmf(50, k, 0.3))).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((ln_binomial_upper_tail(50, 0, 0.3)).abs() < 1e-15);
        let direct: f64 = (20..=50).map(|k| libm::exp(ln_binomial_pmf(50, k, 0.3))).sum();
        assert!((libm::exp(ln_binomial_upper_tail(50, 20, 0.3)) - direct).abs() < 1e-15);
    }

    #[test]
    fn kl_spot_value() {
        assert!((bernoulli_kl(0.4, 0.3) - 0.0225824).abs() < 1e-7);
        assert_eq!(bernoulli_kl(0.3, 0.3), 0.0);
    }

    #[test]
    fn normal_cdf_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-12);
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let mut xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let d = ks_statistic(&mut xs, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.0005).abs() < 1e-12);
    }

    #[test]
    fn ks_lattice_exact_sample() {
        // a sample that is exactly the law of a fair coin
        let mut xs = [0i64, 1, 0, 1];
        let d = ks_lattice(&mut xs, |k| if k < 0 { 0.0 } else if k == 0 { 0.5 } else { 1.0 });
        assert!(d < 1e-15);
    }

    #[test]
    fn accumulator_merge_is_associative() {
        let data: Vec<f64> = (0..100).map(|i| libm::sin(i as f64)).collect();
        let mut all = Accumulator::default();
        data.iter().for_each(|&x| all.push(x));
        let mut a = Accumulator::default();
        let mut b = Accumulator::default();
        data[..37].iter().for_each(|&x| a.push(x));
        data[37..].iter().for_each(|&x| b.push(x));
        let m = a.merge(&b);
        assert_eq!(m.count, all.count);
        assert!((m.mean - all.mean).abs() < 1e-14);
        assert!((m.variance() - all.variance()).abs() < 1e-13);
    }
}
