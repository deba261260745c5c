//! The rate function `D(theta, alpha)` and the local-limit formulas built on it.
//!
//! `D(alpha) = sup { lambda + alpha mu : A(lambda, mu) <= 0 }` with
//! `A = ln E e^{lambda tau + mu zeta}`. At the optimum the constraint is
//! active and the gradient of `A` is parallel to `(1, alpha)`, which gives
//! the 2x2 system
//!
//! ```text
//! A(lambda, mu) = 0,    dA/dmu - alpha dA/dlambda = 0
//! ```
//!
//! solved by Newton's method with derivatives taken from the pmf sums. The
//! root at `alpha = a` is `(0, 0)`; other slopes are reached by continuation.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use crate::excursion::{exp_table, moments, partial_terms, JointPmf, Moments};
use crate::model::ModelSpec;
use crate::{Error, Result};

/// Residual level at which a tilt point counts as converged.
pub const TILT_TOLERANCE: f64 = 1e-10;

/// Largest change in `alpha` between neighbouring continuation solves.
pub const CONTINUATION_STEP: f64 = 0.005;

/// Required size of the neglected tail in [`series_i`].
pub const SERIES_TOLERANCE: f64 = 1e-10;

const MAX_NEWTON: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltPoint {
    pub alpha: f64,
    pub lambda: f64,
    pub mu: f64,
    /// `D(alpha) = lambda + alpha mu`.
    pub d_value: f64,
    /// `|A(lambda, mu)|`.
    pub residual_a: f64,
    /// `|dA/dmu - alpha dA/dlambda|`.
    pub residual_slope: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Sums over the pmf at one `(lambda, mu)`: value, gradient and Hessian of `A`.
#[derive(Debug, Clone, Copy)]
struct Local {
    a: f64,
    a_l: f64,
    a_m: f64,
    a_ll: f64,
    a_lm: f64,
    a_mm: f64,
}

/// Newton solver for the tilt parameters of one cycle law.
#[derive(Debug, Clone)]
pub struct TiltSolver<'a> {
    pmf: &'a JointPmf,
    moments: Moments,
}

impl<'a> TiltSolver<'a> {
    /// Fails when the horizon leaves too much mass for the cycle moments.
    pub fn new(pmf: &'a JointPmf) -> Result<Self> {
        let moments = moments(pmf)?;
        Ok(Self { pmf, moments })
    }

    pub fn pmf(&self) -> &JointPmf {
        self.pmf
    }

    pub fn moments(&self) -> &Moments {
        &self.moments
    }

    fn local(&self, lambda: f64, mu: f64) -> Local {
        let l = self.pmf.horizon();
        let el = exp_table(lambda, l);
        let em = exp_table(mu, l);
        let (mut s0, mut st, mut ss, mut stt, mut sts, mut sss) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for (t, s, m) in self.pmf.iter() {
            let w = el[t] * em[s] * m;
            let (tf, sf) = (t as f64, s as f64);
            s0 += w;
            st += tf * w;
            ss += sf * w;
            stt += tf * tf * w;
            sts += tf * sf * w;
            sss += sf * sf * w;
        }
        let (a_l, a_m) = (st / s0, ss / s0);
        Local {
            a: libm::log(s0),
            a_l,
            a_m,
            a_ll: stt / s0 - a_l * a_l,
            a_lm: sts / s0 - a_l * a_m,
            a_mm: sss / s0 - a_m * a_m,
        }
    }

    fn residuals(&self, alpha: f64, lambda: f64, mu: f64) -> (Local, f64, f64) {
        let loc = self.local(lambda, mu);
        let f1 = loc.a;
        let f2 = loc.a_m - alpha * loc.a_l;
        (loc, f1, f2)
    }

    /// Solves at `alpha` by continuation from `(0, 0)` at `alpha = a`.
    pub fn solve(&self, alpha: f64) -> Result<TiltPoint> {
        let a = self.moments.a;
        let start = TiltPoint {
            alpha: a,
            lambda: 0.0,
            mu: 0.0,
            d_value: 0.0,
            residual_a: 0.0,
            residual_slope: 0.0,
            converged: true,
            iterations: 0,
        };
        self.solve_from(alpha, &start)
    }

    /// Solves at `alpha` by continuation from an already solved point.
    pub fn solve_from(&self, alpha: f64, from: &TiltPoint) -> Result<TiltPoint> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain { alpha, reason: "slope must lie in (0, 1)".to_string() });
        }
        let steps = (libm::ceil((alpha - from.alpha).abs() / CONTINUATION_STEP) as usize).max(1);
        let (mut lambda, mut mu) = (from.lambda, from.mu);
        let mut point = *from;
        for k in 1..=steps {
            let target = if k == steps { alpha } else { from.alpha + (alpha - from.alpha) * k as f64 / steps as f64 };
            point = self.newton(target, lambda, mu);
            if !point.converged && k < steps {
                return Err(Error::Domain {
                    alpha,
                    reason: format!("continuation stalled at alpha = {target:.6} (residuals {:.3e}, {:.3e})", point.residual_a, point.residual_slope),
                });
            }
            lambda = point.lambda;
            mu = point.mu;
        }
        if let Err(e) = self.pmf.check_cramer(point.lambda, point.mu) {
            return Err(Error::Domain { alpha, reason: format!("tilt leaves the Cramer region: {e}") });
        }
        Ok(point)
    }

    fn newton(&self, alpha: f64, mut lambda: f64, mut mu: f64) -> TiltPoint {
        let (mut loc, mut f1, mut f2) = self.residuals(alpha, lambda, mu);
        let mut iterations = 0;
        while iterations < MAX_NEWTON {
            let norm = f1.abs().max(f2.abs());
            if norm < 1e-14 || !norm.is_finite() {
                break;
            }
            let j11 = loc.a_l;
            let j12 = loc.a_m;
            let j21 = loc.a_lm - alpha * loc.a_ll;
            let j22 = loc.a_mm - alpha * loc.a_lm;
            let det = j11 * j22 - j12 * j21;
            if det == 0.0 || !det.is_finite() {
                break;
            }
            let dl = -(j22 * f1 - j12 * f2) / det;
            let dm = -(-j21 * f1 + j11 * f2) / det;
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let (nl, nm) = (lambda + t * dl, mu + t * dm);
                let (nloc, g1, g2) = self.residuals(alpha, nl, nm);
                if g1.is_finite() && g2.is_finite() && g1.abs().max(g2.abs()) < norm {
                    lambda = nl;
                    mu = nm;
                    loc = nloc;
                    f1 = g1;
                    f2 = g2;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            iterations += 1;
            if !accepted {
                break;
            }
        }
        let converged = f1.abs() < TILT_TOLERANCE && f2.abs() < TILT_TOLERANCE;
        TiltPoint {
            alpha,
            lambda,
            mu,
            d_value: lambda + alpha * mu,
            residual_a: f1.abs(),
            residual_slope: f2.abs(),
            converged,
            iterations,
        }
    }
}

/// `solve_tilt` for a single slope.
pub fn solve_tilt(pmf: &JointPmf, alpha: f64) -> Result<TiltPoint> {
    TiltSolver::new(pmf)?.solve(alpha)
}

/// Tilt points on the grid `a + k h`, `|k h| <= delta_used`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateCurve {
    pub points: Vec<TiltPoint>,
    /// Half-width of the symmetric neighbourhood of `a` on which every
    /// grid point converged inside the Cramer region.
    pub delta_used: f64,
    pub a: f64,
}

impl RateCurve {
    /// Midpoint convexity of `D` along the grid, with absolute slack.
    pub fn is_convex(&self, slack: f64) -> bool {
        self.points.windows(3).all(|w| w[1].d_value <= 0.5 * (w[0].d_value + w[2].d_value) + slack)
    }
}

/// Marches outward from `a` in steps of `step` on both sides, up to
/// `delta_max`, and keeps the largest symmetric range that solved cleanly.
pub fn rate_curve(pmf: &JointPmf, delta_max: f64, step: f64) -> Result<RateCurve> {
    if !(step > 0.0 && delta_max >= 0.0) {
        return Err(Error::InvalidArgument { reason: format!("need step > 0 and delta >= 0, got {step}, {delta_max}") });
    }
    let solver = TiltSolver::new(pmf)?;
    let a = solver.moments.a;
    let centre = solver.solve(a)?;
    let kmax = libm::floor(delta_max / step + 1e-9) as usize;
    let mut sides: [Vec<TiltPoint>; 2] = [Vec::new(), Vec::new()];
    for (side, sign) in [(0usize, -1.0), (1, 1.0)] {
        let mut prev = centre;
        for k in 1..=kmax {
            let alpha = a + sign * step * k as f64;
            match solver.solve_from(alpha, &prev) {
                Ok(p) if p.converged => {
                    sides[side].push(p);
                    prev = p;
                }
                _ => break,
            }
        }
    }
    let reach = sides[0].len().min(sides[1].len());
    let mut points: Vec<TiltPoint> = sides[0][..reach].iter().rev().copied().collect();
    points.push(centre);
    points.extend_from_slice(&sides[1][..reach]);
    Ok(RateCurve { points, delta_used: reach as f64 * step, a })
}

/// `D(theta, alpha) = theta D(alpha / theta)`.
pub fn rate_d(pmf: &JointPmf, theta: f64, alpha: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::InvalidArgument { reason: format!("theta must be positive, got {theta}") });
    }
    let p = solve_tilt(pmf, alpha / theta)?;
    if !p.converged {
        return Err(Error::Domain { alpha: alpha / theta, reason: "tilt solver did not converge".to_string() });
    }
    Ok(theta * p.d_value)
}

/// `I(alpha) = sum_l e^{lambda l} E(e^{mu R(l)}; tau >= l)` at a solved tilt point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesI {
    /// Sum of the first `horizon` terms.
    pub value: f64,
    /// Bound on the remaining terms.
    pub tail_bound: f64,
    pub horizon: usize,
}

pub fn series_i(spec: &ModelSpec, point: &TiltPoint, horizon: usize) -> Result<SeriesI> {
    let terms = partial_terms(spec, horizon, point.mu)?;
    let mut value = 0.0;
    for (l, q) in terms.terms.iter().enumerate() {
        value += libm::exp(point.lambda * (l + 1) as f64) * q;
    }
    let tail_bound = terms.series_tail_bound(point.lambda);
    if !(tail_bound < SERIES_TOLERANCE) {
        let required = if tail_bound.is_finite() {
            // the bound decays at least like e^{-rho L} with rho from the untilted tail
            let (_, rho) = lemma_tail_constants(spec);
            horizon + libm::ceil(libm::log(tail_bound / SERIES_TOLERANCE) / rho) as usize + 1
        } else {
            horizon * 2
        };
        return Err(Error::HorizonTooShort { horizon, required, bound: tail_bound });
    }
    Ok(SeriesI { value, tail_bound, horizon })
}

/// Which asymptotic form of `P(R(n) = x)` to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmfMode {
    /// `e^{-n D(x/n)} / (sigma sqrt(2 pi n))`.
    Gauss,
    /// The exponent `-n D(x/n)` alone.
    LogRate,
    /// `psi_1 C_H(1, a) I(a) e^{-n D(x/n)} / sqrt(n)` with `psi_1 = 1`,
    /// `C_H(1, a) = 1 / (E tau sigma sqrt(2 pi))` and `I(a)` from the series.
    FullAtA,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoreticalPmf {
    /// Natural log of the approximation.
    pub log_value: f64,
    /// `-n D(x/n)`.
    pub exponent: f64,
    /// `log_value - exponent`.
    pub log_prefactor: f64,
    pub tilt: TiltPoint,
}

/// Asymptotic value of `ln P(R(n) = x)`.
pub fn theoretical_pmf(spec: &ModelSpec, solver: &TiltSolver<'_>, n: u64, x: u64, mode: PmfMode) -> Result<TheoreticalPmf> {
    if n == 0 || x > n {
        return Err(Error::InvalidArgument { reason: format!("need 0 <= x <= n and n >= 1, got x = {x}, n = {n}") });
    }
    let alpha = x as f64 / n as f64;
    let tilt = solver.solve(alpha)?;
    if !tilt.converged {
        return Err(Error::Domain { alpha, reason: "tilt solver did not converge".to_string() });
    }
    let nf = n as f64;
    let exponent = -nf * tilt.d_value;
    let m = solver.moments();
    let sigma = libm::sqrt(m.sigma2);
    let two_pi = 2.0 * core::f64::consts::PI;
    let log_prefactor = match mode {
        PmfMode::LogRate => 0.0,
        PmfMode::Gauss => {
            if m.sigma2 <= 0.0 {
                return Err(Error::Degenerate { reason: "sigma^2 = 0".to_string() });
            }
            -libm::log(sigma * libm::sqrt(two_pi * nf))
        }
        PmfMode::FullAtA => {
            if m.sigma2 <= 0.0 {
                return Err(Error::Degenerate { reason: "sigma^2 = 0".to_string() });
            }
            let at_a = TiltPoint { alpha: m.a, lambda: 0.0, mu: 0.0, d_value: 0.0, ..tilt };
            let series = series_i(spec, &at_a, solver.pmf().horizon())?;
            let psi1 = 1.0;
            let c_h = 1.0 / (m.a_tau * sigma * libm::sqrt(two_pi));
            libm::log(psi1 * c_h * series.value) - 0.5 * libm::log(nf)
        }
    };
    Ok(TheoreticalPmf { log_value: exponent + log_prefactor, exponent, log_prefactor, tilt })
}

/// Moderate-deviation rate `y^2 / (2 sigma^2)`.
pub fn mdp_rate(y: f64, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::Degenerate { reason: format!("sigma^2 = {sigma2}; the moderate deviation rate is undefined") });
    }
    Ok(y * y / (2.0 * sigma2))
}

/// Constants `(C, rho)` of the bound `P(tau >= n) <= C e^{-rho n}`:
/// `C = 1 / (1 - (1 - delta1)^(v-1) delta2)`, `rho = ln(C) / v`.
pub fn lemma_tail_constants(spec: &ModelSpec) -> (f64, f64) {
    let v = spec.v();
    let c = 1.0 / (1.0 - libm::pow(1.0 - spec.delta1(), (v - 1) as f64) * spec.delta2());
    (c, libm::log(c) / v as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::excursion::{default_horizon, excursion_pmf, tilt};
    use crate::stats::bernoulli_kl;

    fn m0() -> (ModelSpec, JointPmf) {
        let spec = ModelSpec::constant(2, 0.3).unwrap();
        let pmf = excursion_pmf(&spec, default_horizon(&spec)).unwrap();
        (spec, pmf)
    }

    #[test]
    fn lemma_constants() {
        let spec = ModelSpec::new(2, alloc::vec![alloc::vec![0.5, 0.6], alloc::vec![0.4, 0.5], alloc::vec![0.45, 0.55]]).unwrap();
        let (c, rho) = lemma_tail_constants(&spec);
        assert!((c - 1.0 / 0.84).abs() < 1e-15);
        assert!((rho - libm::log(1.0 / 0.84) / 2.0).abs() < 1e-15);
        assert!((rho - 0.08717).abs() < 1e-4);
        let (c, rho) = lemma_tail_constants(&ModelSpec::constant(1, 0.3).unwrap());
        assert!((c - 1.0 / 0.7).abs() < 1e-15);
        assert_eq!(rho, libm::log(c));
    }

    #[test]
    fn mdp_rate_values() {
        assert_eq!(mdp_rate(0.0, 0.21).unwrap(), 0.0);
        assert!((mdp_rate(1.0, 0.21).unwrap() - 2.380952).abs() < 1e-6);
        assert_eq!(mdp_rate(-1.3, 0.21).unwrap(), mdp_rate(1.3, 0.21).unwrap());
        assert!(matches!(mdp_rate(1.0, 0.0), Err(Error::Degenerate { .. })));
    }

    #[test]
    fn root_at_the_mean() {
        let (_, pmf) = m0();
        let s = TiltSolver::new(&pmf).unwrap();
        let p = s.solve(s.moments().a).unwrap();
        assert!(p.converged);
        assert!(p.lambda.abs() < 1e-8 && p.mu.abs() < 1e-8);
        assert!(p.d_value.abs() < 1e-12);
    }

    #[test]
    fn bernoulli_spot_value_and_duality() {
        let (_, pmf) = m0();
        let p = solve_tilt(&pmf, 0.4).unwrap();
        assert!(p.converged, "{p:?}");
        assert!((p.d_value - bernoulli_kl(0.4, 0.3)).abs() < 1e-8);
        let tilted = tilt(&pmf, p.lambda, p.mu).unwrap();
        let m = moments(&tilted).unwrap();
        assert!((m.a - 0.4).abs() < 1e-8);
    }

    #[test]
    fn homogeneity() {
        let (_, pmf) = m0();
        let d1 = rate_d(&pmf, 1.0, 0.35).unwrap();
        let d2 = rate_d(&pmf, 2.0, 0.7).unwrap();
        assert!((d2 - 2.0 * d1).abs() < 1e-12);
        assert!(rate_d(&pmf, 1.0, 0.3).unwrap().abs() < 1e-12);
        assert!(rate_d(&pmf, 0.0, 0.3).is_err());
    }

    #[test]
    fn curve_is_symmetric_and_convex() {
        let (_, pmf) = m0();
        let c = rate_curve(&pmf, 0.1, 0.005).unwrap();
        assert!((c.delta_used - 0.1).abs() < 1e-12);
        assert_eq!(c.points.len(), 41);
        assert!(c.is_convex(1e-10));
        assert!(c.points.iter().all(|p| p.d_value >= -1e-12));
    }

    #[test]
    fn series_at_mean_is_mean_cycle_length() {
        let spec = ModelSpec::constant(1, 0.3).unwrap();
        let pmf = excursion_pmf(&spec, default_horizon(&spec)).unwrap();
        let s = TiltSolver::new(&pmf).unwrap();
        let p = s.solve(s.moments().a).unwrap();
        let i = series_i(&spec, &p, pmf.horizon()).unwrap();
        assert!((i.value - 10.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn gauss_value_for_m0() {
        let (spec, pmf) = m0();
        let s = TiltSolver::new(&pmf).unwrap();
        let g = theoretical_pmf(&spec, &s, 1000, 300, PmfMode::Gauss).unwrap();
        let expect = -libm::log(libm::sqrt(2.0 * core::f64::consts::PI * 1000.0 * 0.21));
        assert!((g.log_value - expect).abs() < 1e-8);
        let f = theoretical_pmf(&spec, &s, 1000, 300, PmfMode::FullAtA).unwrap();
        assert!((f.log_value - g.log_value).abs() < 1e-12);
        let r = theoretical_pmf(&spec, &s, 1000, 300, PmfMode::LogRate).unwrap();
        assert!(r.log_value.abs() < 1e-9);
    }
}
