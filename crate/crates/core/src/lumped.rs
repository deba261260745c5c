//! Finite lumping of the Markov state space.
//!
//! Once `y1 > max(k_max, v - 1)` the transition law no longer depends on the
//! exact value of `y1`: the probability has saturated on row `k_max`, and a
//! `1` written after at least `v - 1` zeros always lands in `y0`. Merging all
//! such `y1` into one class per word is therefore exact. The lumped chain has
//! `(cap + 1) * 2^(v-1)` states; index `0` is `y0`.

use alloc::vec;
use alloc::vec::Vec;

use crate::model::{word_after_one, MemoryState, ModelSpec};

/// Transition structure of the lumped chain.
#[derive(Debug, Clone, PartialEq)]
pub struct LumpedChain {
    v: u32,
    words: usize,
    cap: u64,
    prob: Vec<f64>,
    next0: Vec<u32>,
    next1: Vec<u32>,
    threshold: Vec<u64>,
}

/// Geometric envelope for the surviving mass of a nonnegative kernel `Q`:
/// `(pi Q^k) . 1 <= (pi . w) * rate^k / w_min` for every `pi >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayEnvelope {
    pub rate: f64,
    pub weights: Vec<f64>,
    pub w_min: f64,
}

impl DecayEnvelope {
    /// Upper bound on the total mass of `mass * Q^k`.
    pub fn bound(&self, mass: &[f64], k: u64) -> f64 {
        let dot: f64 = mass.iter().zip(&self.weights).map(|(m, w)| m * w).sum();
        dot / self.w_min * libm::pow(self.rate, k as f64)
    }

    /// `(mass . w) / w_min`, the prefactor of [`bound`](Self::bound).
    pub fn prefactor(&self, mass: &[f64]) -> f64 {
        let dot: f64 = mass.iter().zip(&self.weights).map(|(m, w)| m * w).sum();
        dot / self.w_min
    }
}

impl LumpedChain {
    pub const Y0: usize = 0;

    pub fn new(spec: &ModelSpec) -> Self {
        let v = spec.v();
        let words = spec.words();
        let cap = (spec.k_max() as u64).max(v as u64 - 1).max(1);
        let n = (cap as usize + 1) * words;
        let mut prob = Vec::with_capacity(n);
        let mut next0 = Vec::with_capacity(n);
        let mut next1 = Vec::with_capacity(n);
        for c in 0..=cap {
            for col in 0..words {
                let word = ((col as u32) << 1) | 1;
                prob.push(spec.prob(c, col));
                let c0 = (c + 1).min(cap);
                next0.push((c0 as usize * words + col) as u32);
                let w1 = word_after_one(v, word, c);
                next1.push(w1 >> 1);
            }
        }
        // u = (r >> 11) * 2^-53 < p  <=>  (r >> 11) < ceil(p * 2^53)
        let threshold = prob.iter().map(|&p| libm::ceil(p * 9007199254740992.0) as u64).collect();
        Self { v, words, cap, prob, next0, next1, threshold }
    }

    pub fn states(&self) -> usize {
        self.prob.len()
    }

    pub fn v(&self) -> u32 {
        self.v
    }

    /// Largest tracked zero-run class; larger runs are merged into it.
    pub fn cap(&self) -> u64 {
        self.cap
    }

    #[inline]
    pub fn index(&self, state: &MemoryState) -> usize {
        state.y1.min(self.cap) as usize * self.words + state.column()
    }

    #[inline]
    pub fn prob(&self, i: usize) -> f64 {
        self.prob[i]
    }

    #[inline]
    pub fn next0(&self, i: usize) -> usize {
        self.next0[i] as usize
    }

    /// Successor after writing `1`; `0` means the chain regenerated.
    #[inline]
    pub fn next1(&self, i: usize) -> usize {
        self.next1[i] as usize
    }

    #[inline]
    pub(crate) fn threshold(&self, i: usize) -> u64 {
        self.threshold[i]
    }

    /// Applies the `mu`-tilted transient kernel: `1`-steps that stay
    /// transient are weighted by `e^mu`, steps into `y0` are dropped.
    pub fn apply_transient(&self, w: &[f64], e_mu: f64, out: &mut [f64]) {
        for i in 0..self.states() {
            let p = self.prob[i];
            let mut acc = (1.0 - p) * w[self.next0[i] as usize];
            let j = self.next1[i] as usize;
            if j != Self::Y0 {
                acc += p * e_mu * w[j];
            }
            out[i] = acc;
        }
    }

    /// Geometric envelope for the `mu`-tilted transient kernel `Q_mu`.
    ///
    /// `rate` upper-bounds the spectral radius: the weights are the
    /// truncated resolvent `(s - Q)^-1 1` for some `s` above `||Q^K||^(1/K)`,
    /// and `rate = max_i (Q w)_i / w_i` is recomputed from them, so the
    /// envelope holds for whatever vector the iteration stopped at.
    pub fn decay_envelope(&self, mu: f64) -> DecayEnvelope {
        let n = self.states();
        let e_mu = libm::exp(mu);
        let mut x = vec![1.0; n];
        let mut y = vec![0.0; n];
        const K: usize = 2048;
        let mut log_norm = 0.0;
        for _ in 0..K {
            self.apply_transient(&x, e_mu, &mut y);
            let norm = y.iter().copied().fold(0.0, f64::max);
            if norm == 0.0 {
                // nilpotent kernel: everything is absorbed in finitely many steps
                log_norm = f64::NEG_INFINITY;
                break;
            }
            log_norm += libm::log(norm);
            for (xi, yi) in x.iter_mut().zip(&y) {
                *xi = yi / norm;
            }
        }
        let r_est = libm::exp(log_norm / K as f64);
        let s = r_est * (1.0 + 5e-3) + 1e-12;

        let mut w = vec![0.0; n];
        let mut qw = vec![0.0; n];
        for _ in 0..200_000 {
            self.apply_transient(&w, e_mu, &mut qw);
            let mut change = 0.0f64;
            for i in 0..n {
                let next = (1.0 + qw[i]) / s;
                change = change.max((next - w[i]).abs() / next);
                w[i] = next;
            }
            if change < 1e-13 {
                break;
            }
        }
        self.apply_transient(&w, e_mu, &mut qw);
        let rate = (0..n).map(|i| qw[i] / w[i]).fold(0.0, f64::max);
        let w_min = w.iter().copied().fold(f64::INFINITY, f64::min);
        DecayEnvelope { rate, weights: w, w_min }
    }

    /// Remaining-cycle generating function
    /// `h(y) = E_y[exp(lambda * tau + mu * zeta)]`, with `tau` the first
    /// visit to `y0` after time 0 and `zeta` the ones written on the way.
    /// `h(y0)` is the cycle generating function `psi(lambda, mu)`.
    ///
    /// Returns `None` outside the region where `e^lambda * rate(Q_mu) < 1`,
    /// i.e. where the generating function cannot be certified finite.
    pub fn remaining_mgf(&self, lambda: f64, mu: f64) -> Option<Vec<f64>> {
        let env = self.decay_envelope(mu);
        if libm::exp(lambda) * env.rate >= 1.0 {
            return None;
        }
        let n = self.states();
        let e_l = libm::exp(lambda);
        let e_lm = libm::exp(lambda + mu);
        let e_mu = libm::exp(mu);
        let b: Vec<f64> = (0..n)
            .map(|i| if self.next1[i] as usize == Self::Y0 { self.prob[i] * e_lm } else { 0.0 })
            .collect();
        if n <= 256 {
            // (I - e^lambda Q_mu) h = b
            let mut a = vec![0.0; n * n];
            for i in 0..n {
                a[i * n + i] += 1.0;
                let p = self.prob[i];
                a[i * n + self.next0[i] as usize] -= e_l * (1.0 - p);
                let j = self.next1[i] as usize;
                if j != Self::Y0 {
                    a[i * n + j] -= e_l * p * e_mu;
                }
            }
            let h = solve_dense(a, b, n)?;
            return h.iter().all(|x| x.is_finite() && *x >= 0.0).then_some(h);
        }
        let mut h = vec![0.0; n];
        let mut next = vec![0.0; n];
        for _ in 0..2_000_000 {
            self.apply_transient(&h, e_mu, &mut next);
            let mut change = 0.0f64;
            for i in 0..n {
                let val = b[i] + e_l * next[i];
                change = change.max(((val - h[i]) / val).abs());
                h[i] = val;
            }
            if change < 1e-16 {
                return Some(h);
            }
        }
        None
    }
}

/// Gaussian elimination with partial pivoting on a row-major `n x n` system.
fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))?;
        if a[piv * n + col].abs() < 1e-300 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f != 0.0 {
                for k in col..n {
                    a[r * n + k] -= f * a[col * n + k];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut acc = b[r];
        for k in r + 1..n {
            acc -= a[r * n + k] * x[k];
        }
        x[r] = acc / a[r * n + r];
    }
    Some(x)
}
