//! Importance sampling of `P(R(n) in [lo, hi])` under an exponential tilt.
//!
//! The sampling law is the Doob transform of the chain by the remaining-cycle
//! generating function `h(y) = E_y e^{lambda tau + mu zeta}`:
//!
//! ```text
//! p_hat(y) = e^{lambda + mu} p(y) g(y after 1) / h(y),   g = h off y0, g(y0) = 1.
//! ```
//!
//! Inside each cycle this is exactly the tilted cycle law, so cycles drawn
//! from it have the joint law `e^{lambda t + mu s} P(tau = t, zeta = s) / psi`.
//! The likelihood ratio of a path of length `n` telescopes to
//!
//! ```text
//! e^{-lambda n - mu R(n)} h(Y(0)) psi^{N} / g(Y(n)),
//! ```
//!
//! `N` the number of regenerations strictly before `n`, so the estimator is
//! unbiased for every `(lambda, mu)` where `h` is finite.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::lumped::LumpedChain;
use crate::model::{MemoryState, ModelSpec};
use crate::sim::{run_with_thresholds, stream_rng};
use crate::stats::log_sum_exp;
use crate::{Error, Result};

/// The chain under the path-level tilt `(lambda, mu)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedChain {
    chain: LumpedChain,
    lambda: f64,
    mu: f64,
    log_h: Vec<f64>,
    log_psi: f64,
    prob: Vec<f64>,
    threshold: Vec<u64>,
}

impl TiltedChain {
    pub fn new(spec: &ModelSpec, lambda: f64, mu: f64) -> Result<Self> {
        let chain = LumpedChain::new(spec);
        let n = chain.states();
        if lambda == 0.0 && mu == 0.0 {
            // h = 1: the sampling law is the chain itself, bit for bit
            let prob: Vec<f64> = (0..n).map(|i| chain.prob(i)).collect();
            let threshold = (0..n).map(|i| chain.threshold(i)).collect();
            return Ok(Self { chain, lambda, mu, log_h: vec![0.0; n], log_psi: 0.0, prob, threshold });
        }
        let h = chain.remaining_mgf(lambda, mu).ok_or_else(|| Error::OutsideCramerRegion {
            lambda,
            mu,
            reason: "the remaining-cycle generating function is not finite".to_string(),
        })?;
        let g = |j: usize| if j == LumpedChain::Y0 { 1.0 } else { h[j] };
        let e_lm = libm::exp(lambda + mu);
        let prob: Vec<f64> = (0..n).map(|i| (e_lm * chain.prob(i) * g(chain.next1(i)) / h[i]).clamp(0.0, 1.0)).collect();
        let threshold = prob.iter().map(|&p| libm::ceil(p * 9007199254740992.0) as u64).collect();
        let log_h: Vec<f64> = h.iter().map(|x| libm::log(*x)).collect();
        let log_psi = log_h[LumpedChain::Y0];
        Ok(Self { chain, lambda, mu, log_h, log_psi, prob, threshold })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Probability of writing `1` from lumped state `i` under the tilt.
    pub fn tilted_prob(&self, i: usize) -> f64 {
        self.prob[i]
    }

    pub fn chain(&self) -> &LumpedChain {
        &self.chain
    }

    /// `ln psi(lambda, mu)` from the linear solve.
    pub fn log_psi(&self) -> f64 {
        self.log_psi
    }

    /// Draws one tilted path and returns `(R(n), ln weight)`.
    pub fn sample<R: RngCore>(&self, n: u64, start: &MemoryState, rng: &mut R) -> (u64, f64) {
        let run = run_with_thresholds(&self.chain, |i| self.threshold[i], n, start, rng);
        if self.lambda == 0.0 && self.mu == 0.0 {
            return (run.r_n, 0.0);
        }
        let end = self.chain.index(&run.end);
        let log_g_end = if end == LumpedChain::Y0 { 0.0 } else { self.log_h[end] };
        let lw = -self.lambda * n as f64 - self.mu * run.r_n as f64 + self.log_h[self.chain.index(start)]
            + run.nu_n as f64 * self.log_psi
            - log_g_end;
        (run.r_n, lw)
    }
}

/// Sampling problem: `m` paths of length `n` from `start`; the event is
/// `lo <= R(n) <= hi`. Sample `i` uses stream `i` of `seed`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsTarget {
    pub n: u64,
    pub lo: u64,
    pub hi: u64,
    pub samples: u64,
    pub seed: u64,
    pub start: MemoryState,
}

impl IsTarget {
    /// The window `|R(n) - x| <= w`.
    pub fn window(n: u64, x: u64, w: u64, samples: u64, seed: u64, start: MemoryState) -> Self {
        Self { n, lo: x.saturating_sub(w), hi: (x + w).min(n), samples, seed, start }
    }

    pub fn contains(&self, r: u64) -> bool {
        self.lo <= r && r <= self.hi
    }
}

/// Weighted frequency of the target event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsEstimate {
    /// Log of the weighted mean.
    pub log_prob: f64,
    /// Delta-method standard error of `log_prob`.
    pub std_err: f64,
    /// Effective sample size `(sum w)^2 / sum w^2`.
    pub ess: f64,
    pub hits: u64,
    pub samples: u64,
}

impl IsEstimate {
    /// Summarizes the log weights of the samples that hit the event, out of
    /// `samples` draws. Fails when nothing hit.
    pub fn from_log_weights(hit_log_weights: &[f64], samples: u64) -> Result<Self> {
        if hit_log_weights.is_empty() {
            return Err(Error::NoHits {
                reason: format!("no sample out of {samples} hit the event; the estimate has infinite variance, widen the target window"),
            });
        }
        let m = samples as f64;
        let shift = hit_log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut s1, mut s2) = (0.0, 0.0);
        for &lw in hit_log_weights {
            let w = libm::exp(lw - shift);
            s1 += w;
            s2 += w * w;
        }
        let mean = s1 / m;
        let var = if samples > 1 { (s2 - m * mean * mean).max(0.0) / (m - 1.0) } else { 0.0 };
        Ok(Self {
            log_prob: shift + libm::log(mean),
            std_err: libm::sqrt(var / m) / mean,
            ess: s1 * s1 / s2,
            hits: hit_log_weights.len() as u64,
            samples,
        })
    }
}

/// Importance-sampling estimate under `tilted`.
pub fn is_estimate(tilted: &TiltedChain, target: &IsTarget) -> Result<IsEstimate> {
    if target.samples == 0 {
        return Err(Error::InvalidArgument { reason: "need at least one sample".to_string() });
    }
    let mut hits = Vec::new();
    for i in 0..target.samples {
        let mut rng = stream_rng(target.seed, i);
        let (r, lw) = tilted.sample(target.n, &target.start, &mut rng);
        if target.contains(r) {
            hits.push(lw);
        }
    }
    IsEstimate::from_log_weights(&hits, target.samples)
}

/// Plain hit frequency on the same streams as [`is_estimate`].
pub fn direct_mc_estimate(spec: &ModelSpec, target: &IsTarget) -> Result<IsEstimate> {
    is_estimate(&TiltedChain::new(spec, 0.0, 0.0)?, target)
}

/// `ln` of a vector mean of weights given in log form.
pub fn log_mean_exp(log_weights: &[f64]) -> f64 {
    log_sum_exp(log_weights) - libm::log(log_weights.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{run_chain, stream_rng};

    #[test]
    fn identity_tilt_is_the_chain() {
        let spec = ModelSpec::constant(2, 0.3).unwrap();
        let t = TiltedChain::new(&spec, 0.0, 0.0).unwrap();
        let chain = LumpedChain::new(&spec);
        let start = MemoryState::y0(2);
        for s in 0..10 {
            let (r, lw) = t.sample(300, &start, &mut stream_rng(5, s));
            assert_eq!(lw, 0.0);
            assert_eq!(r, run_chain(&chain, 300, &start, &mut stream_rng(5, s)).r_n);
        }
    }

    #[test]
    fn tilted_probabilities_form_a_kernel() {
        let spec = ModelSpec::new(2, vec![vec![0.5, 0.6], vec![0.4, 0.5], vec![0.45, 0.55]]).unwrap();
        let t = TiltedChain::new(&spec, -0.05, 0.2).unwrap();
        for i in 0..t.chain().states() {
            let p = t.tilted_prob(i);
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn constant_model_tilt_is_bernoulli() {
        // for constant p with A = 0 the tilt is Bernoulli(alpha)
        let spec = ModelSpec::constant(2, 0.3).unwrap();
        let alpha: f64 = 0.4;
        let mu = libm::log(alpha / 0.3) - libm::log((1.0 - alpha) / 0.7);
        let lambda = -libm::log(0.7 + 0.3 * libm::exp(mu));
        let t = TiltedChain::new(&spec, lambda, mu).unwrap();
        assert!(t.log_psi().abs() < 1e-12);
        for i in 0..t.chain().states() {
            assert!((t.tilted_prob(i) - alpha).abs() < 1e-12);
        }
    }

    #[test]
    fn no_hits_is_an_error() {
        let spec = ModelSpec::constant(2, 0.3).unwrap();
        let target = IsTarget::window(100, 100, 0, 10, 1, MemoryState::y0(2));
        assert!(matches!(direct_mc_estimate(&spec, &target), Err(Error::NoHits { .. })));
    }
}
