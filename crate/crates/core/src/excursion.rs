//! The joint law of one regeneration cycle `(tau, zeta)` started from `y0`.
//!
//! [`excursion_pmf`] runs a forward sweep over the lumped chain, tracking
//! the number of ones written so far; mass that re-enters `y0` at time `t`
//! with `s` ones is recorded at `(t, s)`. Whatever has not returned by the
//! horizon `L` is the residual `P(tau > L)`. The sweep also keeps the
//! surviving mass at time `L`, which together with a geometric envelope of
//! the transient kernel bounds every neglected tail sum.
//!
//! [`excursion_pmf_enum`] is an independent check: it walks every character
//! string of length up to `L` straight from the definition of the chain
//! (nearest `1`, the word ending there) and never touches the lumped chain.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::complex::Complex;
use crate::lumped::{DecayEnvelope, LumpedChain};
use crate::model::ModelSpec;
use crate::rate::lemma_tail_constants;
use crate::{Error, Result};

/// Largest horizon accepted by the enumeration oracle.
pub const ENUM_MAX_HORIZON: usize = 24;

/// Cap on the default horizon.
pub const MAX_HORIZON: usize = 100_000;

/// Target for the tail bound `C e^{-rho L}` when choosing the default horizon.
pub const DEFAULT_RESIDUAL_TARGET: f64 = 1e-12;

/// Exact law of `(tau, zeta)` restricted to `tau <= L`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPmf {
    horizon: usize,
    /// Triangular storage: `(t, s)` with `1 <= s <= t <= L` at `t(t-1)/2 + s - 1`.
    masses: Vec<f64>,
    residual: f64,
    tail: Option<TailModel>,
}

/// What is known about the cycle law beyond the horizon.
///
/// A tilted pmf keeps the tail model of the law it came from: its entries
/// are `e^{lambda t + mu s} mass(t, s) / norm` for the recorded
/// `(lambda, mu, norm)`, and every tail bound is taken on the base law.
#[derive(Debug, Clone, PartialEq)]
struct TailModel {
    chain: LumpedChain,
    /// Mass still in the excursion at time `L`, by lumped state and ones count.
    survivors: Vec<f64>,
    /// Envelope of the untilted transient kernel.
    base: DecayEnvelope,
    lemma: (f64, f64),
    tilt: (f64, f64, f64),
}

impl TailModel {
    fn is_tilted(&self) -> bool {
        self.tilt != (0.0, 0.0, 1.0)
    }

    /// `(pref, x)` with `sum_s e^{lambda t + mu s} P(tau = t, zeta = s) <= pref x^k`
    /// at `t = L + 1 + k`, for the base law; `None` when `x >= 1`.
    fn geometric(&self, horizon: usize, lambda: f64, mu: f64) -> Option<(f64, f64)> {
        let env = self.chain.decay_envelope(mu);
        let x = libm::exp(lambda) * env.rate;
        if x >= 1.0 {
            return None;
        }
        let e_mu = libm::exp(mu);
        let weighted = tilted_survivors(&self.survivors, self.chain.states(), horizon, mu);
        let dot: f64 = weighted.iter().zip(&env.weights).map(|(a, b)| a * b).sum();
        // the step into y0 from state i carries p_i e^mu <= beta w_i
        let beta = (0..self.chain.states())
            .filter(|&i| self.chain.next1(i) == LumpedChain::Y0)
            .map(|i| self.chain.prob(i) * e_mu / env.weights[i])
            .fold(0.0, f64::max);
        Some((libm::exp(lambda * (horizon + 1) as f64) * beta * dot, x))
    }
}

#[inline]
fn tri(t: usize, s: usize) -> usize {
    t * (t - 1) / 2 + s - 1
}

impl JointPmf {
    /// Builds a pmf from explicit entries; `(t, s)` must satisfy
    /// `1 <= s <= t <= horizon` and masses must be nonnegative.
    pub fn from_entries<I>(horizon: usize, entries: I, residual: f64) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        if horizon == 0 {
            return Err(Error::InvalidArgument { reason: "horizon must be at least 1".to_string() });
        }
        if !(0.0..=1.0).contains(&residual) {
            return Err(Error::InvalidArgument { reason: format!("residual {residual} not in [0, 1]") });
        }
        let mut masses = vec![0.0; tri(horizon, horizon) + 1];
        for (t, s, m) in entries {
            if !(1 <= s && s <= t && t <= horizon) {
                return Err(Error::InvalidArgument { reason: format!("entry ({t}, {s}) outside 1 <= s <= t <= {horizon}") });
            }
            if !(m >= 0.0) {
                return Err(Error::InvalidArgument { reason: format!("negative mass {m} at ({t}, {s})") });
            }
            masses[tri(t, s)] += m;
        }
        Ok(Self { horizon, masses, residual, tail: None })
    }

    /// All mass at `(t0, s0)`.
    pub fn point_mass(t0: usize, s0: usize) -> Result<Self> {
        Self::from_entries(t0, [(t0, s0, 1.0)], 0.0)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `P(tau > L)`.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// More than half of the mass lies beyond the horizon.
    pub fn residual_warning(&self) -> bool {
        self.residual > 0.5
    }

    pub fn mass(&self, t: usize, s: usize) -> f64 {
        if 1 <= s && s <= t && t <= self.horizon {
            self.masses[tri(t, s)]
        } else {
            0.0
        }
    }

    /// Sum of all recorded masses.
    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Nonzero entries `(t, s, mass)` in `t`-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (1..=self.horizon).flat_map(move |t| (1..=t).map(move |s| (t, s, self.masses[tri(t, s)]))).filter(|e| e.2 != 0.0)
    }

    /// `P(tau = t)` for `t = 1..=L` (index 0 unused).
    pub fn tau_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.horizon + 1];
        for (t, _, m) in self.iter() {
            out[t] += m;
        }
        out
    }

    /// `P(tau >= n)` for `n = 1..=L+1` (index 0 unused); exact on the DP output.
    pub fn survival(&self) -> Vec<f64> {
        let marg = self.tau_marginal();
        let mut out = vec![0.0; self.horizon + 2];
        out[self.horizon + 1] = self.residual;
        for t in (1..=self.horizon).rev() {
            out[t] = out[t + 1] + marg[t];
        }
        out
    }

    /// Whether tail sums can be bounded beyond the horizon.
    pub fn has_tail_model(&self) -> bool {
        self.tail.is_some()
    }

    /// Decay rate `-ln r` of the base law's survival probability, where
    /// `r` bounds the spectral radius of the transient kernel.
    pub fn tail_decay_rate(&self) -> Option<f64> {
        self.tail.as_ref().map(|t| -libm::log(t.base.rate))
    }

    /// Checks that `(lambda, mu)` lies in the Cramer region with margin:
    /// `lambda + ln r(Q_mu) < -rho / 10`, `rho` the untilted decay rate.
    pub fn check_cramer(&self, lambda: f64, mu: f64) -> Result<()> {
        let Some(tail) = &self.tail else { return Ok(()) };
        let (lambda0, mu0, _) = tail.tilt;
        let rho = -libm::log(tail.base.rate);
        let env = tail.chain.decay_envelope(mu0 + mu);
        let lhs = lambda0 + lambda + libm::log(env.rate);
        if lhs < -rho / 10.0 {
            Ok(())
        } else {
            Err(Error::OutsideCramerRegion {
                lambda,
                mu,
                reason: format!("lambda + ln r(Q_mu) = {lhs:.6} is not below -rho/10 = {:.6}", -rho / 10.0),
            })
        }
    }

    /// Upper bound on `sum_{t > L} e^{lambda t + mu s} P(tau = t, zeta = s)`.
    pub fn tail_sum_bound(&self, lambda: f64, mu: f64) -> f64 {
        if self.residual == 0.0 {
            return 0.0;
        }
        let Some(tail) = &self.tail else {
            let c = lambda + mu.max(0.0);
            return if c <= 0.0 { self.residual * libm::exp(c * (self.horizon + 1) as f64) } else { f64::INFINITY };
        };
        let (lambda0, mu0, norm) = tail.tilt;
        match tail.geometric(self.horizon, lambda0 + lambda, mu0 + mu) {
            Some((pref, x)) => pref / (1.0 - x) / norm,
            None => f64::INFINITY,
        }
    }

    /// Bounds on `sum_{t > L} t^m P(tau = t)` for `m = 0, 1, 2`.
    pub fn tail_moment_bounds(&self) -> [f64; 3] {
        if self.residual == 0.0 {
            return [0.0; 3];
        }
        let n = (self.horizon + 1) as f64;
        let Some(tail) = &self.tail else {
            return [self.residual, f64::INFINITY, f64::INFINITY];
        };
        let (lambda0, mu0, norm) = tail.tilt;
        let mut out = match tail.geometric(self.horizon, lambda0, mu0) {
            Some((pref, x)) => geometric_moment_sums(n, x).map(|g| pref * g / norm),
            None => [f64::INFINITY; 3],
        };
        if !tail.is_tilted() {
            // P(tau = t) <= P(tau >= t) <= C e^{-rho t}
            let (c, rho) = tail.lemma;
            let x = libm::exp(-rho);
            let lemma = geometric_moment_sums(n, x).map(|g| c * libm::pow(x, n) * g);
            for m in 0..3 {
                out[m] = out[m].min(lemma[m]);
            }
        }
        out[0] = self.residual;
        out
    }

    /// Horizon at which a bound of the form `t^2 r^t`, equal to `bound`
    /// now, drops below `target`.
    fn required_horizon(&self, bound: f64, target: f64) -> usize {
        let rate = self.tail_decay_rate().filter(|r| *r > 0.0);
        match rate {
            Some(rho) if bound.is_finite() => {
                let l1 = (self.horizon + 1) as f64;
                let mut extra = 1usize;
                loop {
                    let e = extra as f64;
                    let grown = bound * libm::pow((l1 + e) / l1, 2.0) * libm::exp(-rho * e);
                    if grown < target || extra > MAX_HORIZON {
                        break;
                    }
                    extra += 1;
                }
                self.horizon + extra
            }
            _ => self.horizon * 2,
        }
    }
}

/// `sum_{k >= 0} (n + k)^m x^k` for `m = 0, 1, 2`.
fn geometric_moment_sums(n: f64, x: f64) -> [f64; 3] {
    let q = 1.0 - x;
    [1.0 / q, n / q + x / (q * q), n * n / q + 2.0 * n * x / (q * q) + x * (1.0 + x) / (q * q * q)]
}

fn tilted_survivors(survivors: &[f64], states: usize, horizon: usize, mu: f64) -> Vec<f64> {
    let e_mu = libm::exp(mu);
    (0..states)
        .map(|i| {
            let row = &survivors[i * (horizon + 1)..(i + 1) * (horizon + 1)];
            let mut w = 1.0;
            let mut acc = 0.0;
            for &m in row {
                acc += m * w;
                w *= e_mu;
            }
            acc
        })
        .collect()
}

/// Default horizon: smallest `L` with `C e^{-rho L} < 1e-12` for the closed-form
/// tail constants, capped at [`MAX_HORIZON`].
pub fn default_horizon(spec: &ModelSpec) -> usize {
    let (c, rho) = lemma_tail_constants(spec);
    let l = libm::floor(libm::log(c / DEFAULT_RESIDUAL_TARGET) / rho) + 1.0;
    if l.is_finite() && l >= 1.0 {
        (l as usize).min(MAX_HORIZON)
    } else {
        MAX_HORIZON
    }
}

/// Exact law of `(tau, zeta)` up to horizon `L` by forward dynamic programming.
pub fn excursion_pmf(spec: &ModelSpec, horizon: usize) -> Result<JointPmf> {
    if horizon == 0 {
        return Err(Error::InvalidArgument { reason: "horizon must be at least 1".to_string() });
    }
    let chain = LumpedChain::new(spec);
    let states = chain.states();
    let stride = horizon + 1;
    let mut cur = vec![0.0; states * stride];
    let mut next = vec![0.0; states * stride];
    let mut masses = vec![0.0; tri(horizon, horizon) + 1];
    cur[LumpedChain::Y0 * stride] = 1.0;
    for t in 1..=horizon {
        next.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..states {
            let p = chain.prob(i);
            let (n0, n1) = (chain.next0(i), chain.next1(i));
            let row = &cur[i * stride..i * stride + t];
            for (s, &m) in row.iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                next[n0 * stride + s] += m * (1.0 - p);
                if n1 == LumpedChain::Y0 {
                    masses[tri(t, s + 1)] += m * p;
                } else {
                    next[n1 * stride + s + 1] += m * p;
                }
            }
        }
        core::mem::swap(&mut cur, &mut next);
    }
    let residual: f64 = cur.iter().sum();
    let base = chain.decay_envelope(0.0);
    let lemma = lemma_tail_constants(spec);
    Ok(JointPmf { horizon, masses, residual, tail: Some(TailModel { chain, survivors: cur, base, lemma, tilt: (0.0, 0.0, 1.0) }) })
}

/// Brute-force law of `(tau, zeta)` up to horizon `L <= 24`, computed by
/// walking every character string from the definition of the chain.
pub fn excursion_pmf_enum(spec: &ModelSpec, horizon: usize) -> Result<JointPmf> {
    if horizon == 0 || horizon > ENUM_MAX_HORIZON {
        return Err(Error::InvalidArgument {
            reason: format!("enumeration horizon {horizon} not in 1..={ENUM_MAX_HORIZON} (2^L strings)"),
        });
    }
    let v = spec.v() as usize;
    // the configuration y0: v-1 zeros then a 1
    let mut history = vec![0u8; v - 1];
    history.push(1);
    let mut masses = vec![0.0; tri(horizon, horizon) + 1];
    let mut residual = 0.0;
    walk(spec, &mut history, v, horizon, 1.0, 0, &mut masses, &mut residual);
    Ok(JointPmf { horizon, masses, residual, tail: None })
}

#[allow(clippy::too_many_arguments)]
fn walk(
    spec: &ModelSpec,
    history: &mut Vec<u8>,
    v: usize,
    horizon: usize,
    prob: f64,
    ones: usize,
    masses: &mut [f64],
    residual: &mut f64,
) {
    let t = history.len() - v;
    if t == horizon {
        *residual += prob;
        return;
    }
    let last_one = history.iter().rposition(|&c| c == 1).expect("history always holds a 1");
    let k = history.len() - 1 - last_one;
    let column = history[last_one + 1 - v..last_one].iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
    let p = spec.prob(k as u64, column);

    history.push(1);
    let back_in_y0 = history[history.len() - v..history.len() - 1].iter().all(|&c| c == 0);
    if back_in_y0 {
        masses[tri(t + 1, ones + 1)] += prob * p;
    } else {
        walk(spec, history, v, horizon, prob * p, ones + 1, masses, residual);
    }
    history.pop();

    history.push(0);
    walk(spec, history, v, horizon, prob * (1.0 - p), ones, masses, residual);
    history.pop();
}

/// Cycle moments and the drift/variance constants built from them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    /// `E tau`.
    pub a_tau: f64,
    /// `E zeta`.
    pub e_zeta: f64,
    /// `E zeta / E tau`, ones per step.
    pub a: f64,
    /// `E(zeta - a tau)^2 / E tau`.
    pub sigma2: f64,
    /// Bound on the neglected tail contributions to the raw moments.
    pub truncation_error_bound: f64,
}

/// Default tolerance on the truncation bound in [`moments`].
pub const MOMENT_TOLERANCE: f64 = 1e-6;

pub fn moments(pmf: &JointPmf) -> Result<Moments> {
    moments_with_tolerance(pmf, MOMENT_TOLERANCE)
}

/// Cycle moments, failing when the tail beyond the horizon could move the
/// first or second moment by more than `tol`.
pub fn moments_with_tolerance(pmf: &JointPmf, tol: f64) -> Result<Moments> {
    let [_, b1, b2] = pmf.tail_moment_bounds();
    let bound = b1.max(b2);
    if !(bound <= tol) {
        return Err(Error::HorizonTooShort { horizon: pmf.horizon, required: pmf.required_horizon(bound, tol), bound });
    }
    let (mut e_t, mut e_s) = (0.0, 0.0);
    for (t, s, m) in pmf.iter() {
        e_t += t as f64 * m;
        e_s += s as f64 * m;
    }
    let a = e_s / e_t;
    let second: f64 = pmf.iter().map(|(t, s, m)| {
        let d = s as f64 - a * t as f64;
        d * d * m
    })
    .sum();
    Ok(Moments { a_tau: e_t, e_zeta: e_s, a, sigma2: second / e_t, truncation_error_bound: bound })
}

/// `psi(lambda, mu) = E e^{lambda tau + mu zeta}` over the recorded entries,
/// `A = ln psi`, and a bound on the part beyond the horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogMgf {
    pub psi: f64,
    pub a_value: f64,
    pub tail_bound: f64,
}

pub fn log_mgf(pmf: &JointPmf, lambda: f64, mu: f64) -> Result<LogMgf> {
    pmf.check_cramer(lambda, mu)?;
    let psi = mgf_sum(pmf, lambda, mu);
    Ok(LogMgf { psi, a_value: libm::log(psi), tail_bound: pmf.tail_sum_bound(lambda, mu) })
}

pub(crate) fn mgf_sum(pmf: &JointPmf, lambda: f64, mu: f64) -> f64 {
    let el = exp_table(lambda, pmf.horizon);
    let em = exp_table(mu, pmf.horizon);
    pmf.iter().map(|(t, s, m)| el[t] * em[s] * m).sum()
}

/// `e^{x k}` for `k = 0..=n`, each computed directly.
pub(crate) fn exp_table(x: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| libm::exp(x * k as f64)).collect()
}

/// Characteristic function at `2 pi (u1, u2)`; the second value is the
/// modulus uncertainty from the truncated mass.
pub fn char_fn(pmf: &JointPmf, u1: f64, u2: f64) -> (Complex, f64) {
    let mut acc = Complex::default();
    for (t, s, m) in pmf.iter() {
        // reduce each product mod 1 before adding, so integer u stay exact
        let phase = frac(u1 * t as f64) + frac(u2 * s as f64);
        acc += Complex::unit(phase) * m;
    }
    (acc, pmf.residual)
}

/// Moduli `|f(2 pi (u1, u2))|` on a product grid, row-major in `u1`.
///
/// Sums over `s` first for each `u2`, so the cost is one pass over the pmf
/// per `u2` plus `O(L)` per grid point.
pub fn char_fn_grid(pmf: &JointPmf, u1s: &[f64], u2s: &[f64]) -> Vec<f64> {
    let l = pmf.horizon;
    let mut out = vec![0.0; u1s.len() * u2s.len()];
    let mut inner = vec![Complex::default(); l + 1];
    for (j, &u2) in u2s.iter().enumerate() {
        let e2: Vec<Complex> = (0..=l).map(|s| Complex::unit(frac(u2 * s as f64))).collect();
        inner.iter_mut().for_each(|z| *z = Complex::default());
        for (t, s, m) in pmf.iter() {
            inner[t] += e2[s] * m;
        }
        for (i, &u1) in u1s.iter().enumerate() {
            let mut acc = Complex::default();
            for (t, g) in inner.iter().enumerate().skip(1) {
                acc += Complex::unit(frac(u1 * t as f64)) * *g;
            }
            out[i * u2s.len() + j] = acc.norm();
        }
    }
    out
}

fn frac(x: f64) -> f64 {
    x - libm::floor(x)
}

/// Exponentially tilted law `e^{lambda t + mu s} mass(t, s) / psi`.
///
/// The neglected tail is bounded, renormalized together with the entries
/// and reported as the new residual.
pub fn tilt(pmf: &JointPmf, lambda: f64, mu: f64) -> Result<JointPmf> {
    pmf.check_cramer(lambda, mu)?;
    let tail = pmf.tail_sum_bound(lambda, mu);
    if !tail.is_finite() {
        return Err(Error::OutsideCramerRegion { lambda, mu, reason: "tail beyond the horizon cannot be bounded".to_string() });
    }
    let el = exp_table(lambda, pmf.horizon);
    let em = exp_table(mu, pmf.horizon);
    let mut masses = pmf.masses.clone();
    let mut psi = 0.0;
    for t in 1..=pmf.horizon {
        for s in 1..=t {
            let m = &mut masses[tri(t, s)];
            *m *= el[t] * em[s];
            psi += *m;
        }
    }
    let norm = psi + tail;
    masses.iter_mut().for_each(|m| *m /= norm);
    let tail_model = pmf.tail.as_ref().map(|t| {
        let (l0, m0, n0) = t.tilt;
        TailModel { tilt: (l0 + lambda, m0 + mu, n0 * norm), ..t.clone() }
    });
    Ok(JointPmf { horizon: pmf.horizon, masses, residual: tail / norm, tail: tail_model })
}

/// `q_l(mu) = E(e^{mu R(l)}; tau >= l | Y(0) = y0)` for `l = 1..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialTerms {
    pub mu: f64,
    /// `terms[l - 1] = q_l`.
    pub terms: Vec<f64>,
    chain: LumpedChain,
    /// `E(e^{mu R(L)}; tau > L, Y(L) = i)`.
    end_mass: Vec<f64>,
}

impl PartialTerms {
    /// Bound on `sum_{l > L} e^{lambda l} q_l(mu)`; infinite when the
    /// series cannot be shown to converge.
    pub fn series_tail_bound(&self, lambda: f64) -> f64 {
        let env = self.chain.decay_envelope(self.mu);
        let e_l = libm::exp(lambda);
        if e_l * env.rate >= 1.0 {
            return f64::INFINITY;
        }
        let l1 = (self.terms.len() + 1) as f64;
        libm::exp(lambda * l1) * libm::exp(self.mu).max(1.0) * env.prefactor(&self.end_mass) / (1.0 - e_l * env.rate)
    }
}

/// Tilted survival terms from a sweep that folds the ones count into the
/// weight `e^{mu}` per written `1`.
pub fn partial_terms(spec: &ModelSpec, horizon: usize, mu: f64) -> Result<PartialTerms> {
    if horizon == 0 {
        return Err(Error::InvalidArgument { reason: "horizon must be at least 1".to_string() });
    }
    let chain = LumpedChain::new(spec);
    let n = chain.states();
    let e_mu = libm::exp(mu);
    let mut g = vec![0.0; n];
    g[LumpedChain::Y0] = 1.0;
    let mut next = vec![0.0; n];
    let mut terms = Vec::with_capacity(horizon);
    for _ in 1..=horizon {
        let mut q = 0.0;
        next.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..n {
            let m = g[i];
            if m == 0.0 {
                continue;
            }
            let p = chain.prob(i);
            q += m * (1.0 - p + p * e_mu);
            next[chain.next0(i)] += m * (1.0 - p);
            let j = chain.next1(i);
            if j != LumpedChain::Y0 {
                next[j] += m * p * e_mu;
            }
        }
        terms.push(q);
        core::mem::swap(&mut g, &mut next);
    }
    Ok(PartialTerms { mu, terms, chain, end_mass: g })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m1() -> ModelSpec {
        ModelSpec::new(2, vec![vec![0.5, 0.6], vec![0.4, 0.5], vec![0.45, 0.55]]).unwrap()
    }

    #[test]
    fn geometric_cycle_for_depth_one() {
        let spec = ModelSpec::constant(1, 0.3).unwrap();
        let pmf = excursion_pmf(&spec, 64).unwrap();
        for t in 1..=64 {
            let expect = 0.3 * libm::pow(0.7, (t - 1) as f64);
            assert!((pmf.mass(t, 1) - expect).abs() < 1e-15);
            for s in 2..=t {
                assert_eq!(pmf.mass(t, s), 0.0);
            }
        }
        assert!((pmf.residual() - libm::pow(0.7, 64.0)).abs() < 1e-18);
    }

    #[test]
    fn enumeration_geometric_and_short_horizon() {
        let spec = ModelSpec::constant(1, 0.3).unwrap();
        let pmf = excursion_pmf_enum(&spec, 4).unwrap();
        let expect = [0.3, 0.7 * 0.3, 0.7 * 0.7 * 0.3, 0.7 * 0.7 * 0.7 * 0.3];
        for (t, e) in expect.iter().enumerate() {
            assert!((pmf.mass(t + 1, 1) - e).abs() < 1e-16);
        }
        let pmf = excursion_pmf_enum(&m1(), 1).unwrap();
        assert_eq!(pmf.total(), 0.0);
        assert!((pmf.residual() - 1.0).abs() < 1e-16);
        assert!(pmf.residual_warning());
        assert!(excursion_pmf_enum(&m1(), 25).is_err());
    }

    #[test]
    fn dp_matches_enumeration_on_m1() {
        let spec = m1();
        let a = excursion_pmf(&spec, 16).unwrap();
        let b = excursion_pmf_enum(&spec, 16).unwrap();
        for t in 1..=16 {
            for s in 1..=t {
                assert!((a.mass(t, s) - b.mass(t, s)).abs() < 1e-12);
            }
        }
        assert!((a.residual() - b.residual()).abs() < 1e-12);
        assert!((a.total() + a.residual() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn geometric_moments() {
        let spec = ModelSpec::constant(1, 0.3).unwrap();
        let pmf = excursion_pmf(&spec, default_horizon(&spec)).unwrap();
        let m = moments(&pmf).unwrap();
        assert!((m.a_tau - 10.0 / 3.0).abs() < 1e-10);
        assert!((m.e_zeta - 1.0).abs() < 1e-10);
        assert!((m.a - 0.3).abs() < 1e-10);
        assert!((m.sigma2 - 0.21).abs() < 1e-10);
    }

    #[test]
    fn point_mass_is_degenerate() {
        let pmf = JointPmf::point_mass(7, 3).unwrap();
        let m = moments(&pmf).unwrap();
        assert_eq!(m.a, 3.0 / 7.0);
        assert!(m.sigma2.abs() < 1e-15);
    }

    #[test]
    fn short_horizon_moment_error_names_a_longer_horizon() {
        let pmf = excursion_pmf(&m1(), 10).unwrap();
        match moments(&pmf) {
            Err(Error::HorizonTooShort { horizon, required, .. }) => {
                assert_eq!(horizon, 10);
                assert!(required > 10);
                assert!(moments(&excursion_pmf(&m1(), required).unwrap()).is_ok());
            }
            other => panic!("expected HorizonTooShort, got {other:?}"),
        }
    }

    #[test]
    fn mgf_geometric_and_normalization() {
        let spec = ModelSpec::constant(1, 0.3).unwrap();
        let pmf = excursion_pmf(&spec, default_horizon(&spec)).unwrap();
        let z = log_mgf(&pmf, 0.0, 0.0).unwrap();
        assert!((z.psi - (1.0 - pmf.residual())).abs() < 1e-15);
        let g = log_mgf(&pmf, 0.05, 0.1).unwrap();
        let expect = libm::exp(0.15) * 0.3 / (1.0 - 0.7 * libm::exp(0.05));
        assert!((g.psi - expect).abs() < 1e-10, "{} vs {}", g.psi, expect);
        assert!((g.psi - 1.3197).abs() < 1e-4);
        assert!(g.tail_bound < 1e-9);
        // the geometric tail has rate ln(1/0.7) = 0.357
        assert!(matches!(log_mgf(&pmf, 0.35, 0.0), Err(Error::OutsideCramerRegion { .. })));
    }

    #[test]
    fn char_fn_values() {
        let spec = ModelSpec::constant(1, 0.3).unwrap();
        let pmf = excursion_pmf(&spec, default_horizon(&spec)).unwrap();
        let (f0, unc) = char_fn(&pmf, 0.0, 0.0);
        assert_eq!(unc, pmf.residual());
        assert!((f0.re - (1.0 - pmf.residual())).abs() < 1e-15);
        let (f, _) = char_fn(&pmf, 3.0, -2.0);
        assert_eq!(f, f0);
        let (h, _) = char_fn(&pmf, 0.5, 0.5);
        assert!((h.norm() - 0.3 / 1.7).abs() < 1e-10);
        let grid = char_fn_grid(&pmf, &[0.0, 0.5, 0.25], &[0.5, 0.0]);
        assert!((grid[2] - 0.3 / 1.7).abs() < 1e-10);
        assert!((grid[1] - f0.norm()).abs() < 1e-14);
        let (q, _) = char_fn(&pmf, 0.25, 0.5);
        assert!((grid[4] - q.norm()).abs() < 1e-12);
    }

    #[test]
    fn tilt_identity_and_geometric() {
        let spec = ModelSpec::constant(1, 0.3).unwrap();
        let pmf = excursion_pmf(&spec, 200).unwrap();
        let same = tilt(&pmf, 0.0, 0.0).unwrap();
        for (t, s, m) in pmf.iter() {
            assert!((same.mass(t, s) - m / (1.0 - pmf.residual() + same.residual() * 0.0 + pmf.residual())).abs() < 1e-15);
        }
        let q = 0.7 * libm::exp(0.1);
        let tilted = tilt(&pmf, 0.1, 0.0).unwrap();
        for t in 1..=60 {
            let expect = (1.0 - q) * libm::pow(q, (t - 1) as f64);
            assert!((tilted.mass(t, 1) - expect).abs() < 1e-12);
        }
        assert!((tilted.total() + tilted.residual() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn partial_terms_geometric_and_sum() {
        let spec = ModelSpec::constant(1, 0.3).unwrap();
        let pt = partial_terms(&spec, 50, 0.0).unwrap();
        for (l, q) in pt.terms.iter().enumerate() {
            assert!((q - libm::pow(0.7, l as f64)).abs() < 1e-15);
        }
        let pt = partial_terms(&m1(), 400, 0.0).unwrap();
        assert_eq!(pt.terms[0], 1.0);
        assert!(pt.terms.windows(2).all(|w| w[1] <= w[0]));
        let pmf = excursion_pmf(&m1(), 400).unwrap();
        let m = moments(&pmf).unwrap();
        let sum: f64 = pt.terms.iter().sum();
        assert!((sum - m.a_tau).abs() < 1e-10);
        assert!(pt.series_tail_bound(0.0) < 1e-10);
    }
}
