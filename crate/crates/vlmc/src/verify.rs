//! Verification experiments.
//!
//! Each experiment turns a model and an [`ExperimentConfig`] into a
//! [`VerificationReport`]. Sample `i` of an experiment always draws from
//! stream `i` of the experiment seed and results are reduced in sample
//! order, so reports do not depend on the number of worker threads.

use std::collections::BTreeMap;

use rayon::prelude::*;
use vlmc_core::excursion::char_fn_grid;
use vlmc_core::importance::IsEstimate;
use vlmc_core::sim::{run_chain, run_to_regeneration, stream_rng};
use vlmc_core::stats::{ks_lattice, ln_binomial_pmf, ln_binomial_upper_tail, log_sum_exp, normal_cdf};
use vlmc_core::{
    char_fn, default_horizon, excursion_pmf, lemma_tail_constants, moments, rate_curve, theoretical_pmf, tilt,
    JointPmf, LumpedChain, MemoryState, Moments, PmfMode, TiltSolver, TiltedChain,
};

use crate::config::{ExperimentConfig, Kind, Model};
use crate::error::CliError;
use crate::report::{overall, Check, Num, Verdict, VerificationReport};

/// Fewest hits for a histogram bin to be judged.
pub const MIN_BIN_HITS: u64 = 500;

/// Smallest acceptable effective sample size for importance sampling.
pub const MIN_ESS: f64 = 100.0;

/// Lattice check tolerance on `|f(2 pi u)| = 1 - residual`.
pub const LATTICE_TOLERANCE: f64 = 1e-10;

/// Relative rounding slack for the tail bound, which is an equality at `n = v`.
pub const TIGHT_BOUND_SLACK: f64 = 1e-12;

/// Tolerance of the tilted-mean duality check.
pub const DUALITY_TOLERANCE: f64 = 1e-8;

type Outcome = Result<(BTreeMap<String, Num>, Vec<Check>), CliError>;

/// Runs one experiment. Failures to carry it out become a report with
/// `error` set and a hard-fail verdict.
pub fn run_experiment(model: &Model, cfg: &ExperimentConfig, seed: u64, tolerance_scale: f64) -> VerificationReport {
    let seed = cfg.seed.unwrap_or(seed);
    let ctx = Ctx { model, cfg, seed, scale: tolerance_scale };
    let outcome = match cfg.kind {
        Kind::Slln => run_slln(&ctx),
        Kind::Clt => run_clt(&ctx),
        Kind::Llt => run_llt(&ctx),
        Kind::Mdp => run_mdp(&ctx),
        Kind::Tail => tail_check(&ctx),
        Kind::Arith => arith_scan(&ctx),
        Kind::Is => run_is(&ctx),
    };
    let (statistics, checks, error) = match outcome {
        Ok((s, c)) => (s, c, None),
        Err(e) => (BTreeMap::new(), Vec::new(), Some(e.to_string())),
    };
    let verdict = if error.is_some() { Verdict::HardFail } else { overall(&checks) };
    VerificationReport {
        kind: cfg.kind,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        model: model.source.clone(),
        config: cfg.clone(),
        tolerance_scale,
        statistics,
        checks,
        error,
        verdict,
    }
}

struct Ctx<'a> {
    model: &'a Model,
    cfg: &'a ExperimentConfig,
    seed: u64,
    scale: f64,
}

impl Ctx<'_> {
    fn pmf(&self) -> Result<JointPmf, CliError> {
        let spec = &self.model.spec;
        Ok(excursion_pmf(spec, self.cfg.horizon.unwrap_or_else(|| default_horizon(spec)))?)
    }

    fn chain(&self) -> LumpedChain {
        LumpedChain::new(&self.model.spec)
    }

    fn start(&self) -> MemoryState {
        self.model.start
    }

    /// The table's common value when every entry is equal and exact oracles are on.
    fn constant_p(&self) -> Option<f64> {
        (self.cfg.exact && self.model.spec.is_constant()).then(|| self.model.spec.prob(0, 0))
    }

    fn single_n(&self) -> u64 {
        self.cfg.n[0]
    }
}

fn stats_from(m: &Moments, pmf: &JointPmf) -> BTreeMap<String, Num> {
    let mut s = BTreeMap::new();
    s.insert("a".into(), Num(m.a));
    s.insert("sigma2".into(), Num(m.sigma2));
    s.insert("mean_cycle_length".into(), Num(m.a_tau));
    s.insert("horizon".into(), Num(pmf.horizon() as f64));
    s.insert("residual".into(), Num(pmf.residual()));
    s.insert("truncation_error_bound".into(), Num(m.truncation_error_bound));
    s
}

fn par_samples<T: Send, F: Fn(u64) -> T + Sync + Send>(m: u64, f: F) -> Vec<T> {
    (0..m).into_par_iter().map(f).collect()
}

/// Sandwich `Z(n) <= R(n) <= Z(n) + (n - T_nu(n))`, counted as violations.
fn sandwich_violations<I: Iterator<Item = (u64, u64, u64)>>(rows: I) -> u64 {
    rows.filter(|&(r, z, open)| !(z <= r && r <= z + open)).count() as u64
}

#[derive(Debug, Clone, Copy)]
struct PathPoint {
    r: u64,
    z: u64,
    /// `n - T_nu(n)`, the observed part of the open cycle.
    open: u64,
    /// `tau_{nu(n)+1}`, the full length of the cycle straddling `n`.
    straddle: u64,
}

/// One trajectory observed at the checkpoints of `grid` (sorted, distinct).
fn observe_path(chain: &LumpedChain, start: &MemoryState, grid: &[u64], seed: u64, stream: u64) -> Vec<PathPoint> {
    let mut rng = stream_rng(seed, stream);
    let mut state = *start;
    let (mut prev, mut r_total, mut t_nu, mut z) = (0u64, 0u64, 0u64, 0u64);
    let mut out = Vec::with_capacity(grid.len());
    for &n in grid {
        if prev > 0 && state.is_y0() {
            // a regeneration at the previous checkpoint lies strictly before n
            t_nu = prev;
            z = r_total;
        }
        let run = run_chain(chain, n - prev, &state, &mut rng);
        if run.nu_n > 0 {
            t_nu = prev + run.t_nu;
            z = r_total + run.z_n;
        }
        r_total += run.r_n;
        state = run.end;
        prev = n;
        // finish the straddling cycle on a copy so the path itself is untouched
        let rest = if state.is_y0() { 0 } else { run_to_regeneration(chain, &state, &mut rng.clone()).0 };
        out.push(PathPoint { r: r_total, z, open: n - t_nu, straddle: n - t_nu + rest });
    }
    out
}

/// Strong law: every path stays within `a +- tol sqrt(sigma^2 / n)` at every
/// checkpoint. Also sweeps the sandwich inequality and the overshoot bound
/// `P(tau_{nu(n)+1} >= ln^2 n) <= exp(-rho ln^2 n / 4)`.
fn run_slln(ctx: &Ctx) -> Outcome {
    let pmf = ctx.pmf()?;
    let m = moments(&pmf)?;
    let mut stats = stats_from(&m, &pmf);
    let mut grid = ctx.cfg.n.clone();
    grid.sort_unstable();
    grid.dedup();
    grid.retain(|&n| n > 0);
    if grid.is_empty() {
        return Err(CliError::Refused("slln needs at least one positive n".into()));
    }
    let chain = ctx.chain();
    let start = ctx.start();
    let samples = ctx.cfg.samples;
    let paths = par_samples(samples, |i| observe_path(&chain, &start, &grid, ctx.seed, i));
    let (_, rho) = lemma_tail_constants(&ctx.model.spec);
    let mut checks = Vec::new();
    let mut violations = 0u64;
    for (g, &n) in grid.iter().enumerate() {
        let nf = n as f64;
        let envelope = ctx.cfg.tolerance * ctx.scale * (m.sigma2 / nf).sqrt();
        let devs: Vec<f64> = paths.iter().map(|p| (p[g].r as f64 / nf - m.a).abs()).collect();
        violations += devs.iter().filter(|&&d| d > envelope).count() as u64;
        let worst = devs.iter().copied().fold(0.0, f64::max);
        checks.push(Check::at_most("max |R(n)/n - a|", Some(n), worst, envelope, true));

        let kappa = nf.ln().powi(2);
        let bound = (-rho / 4.0 * kappa).exp().min(1.0);
        let freq = paths.iter().filter(|p| p[g].straddle as f64 >= kappa).count() as f64 / samples as f64;
        let slack = 3.0 * (bound * (1.0 - bound) / samples as f64).sqrt() + 1.0 / samples as f64;
        checks.push(Check::new("overshoot frequency above bound", Some(n), freq, bound, (freq - bound).max(0.0), slack, true));
    }
    let sandwich = sandwich_violations(paths.iter().flatten().map(|p| (p.r, p.z, p.open)));
    checks.push(Check::at_most("sandwich violations", None, sandwich as f64, 0.0, false));
    stats.insert("envelope_violations".into(), Num(violations as f64));
    stats.insert("lemma_rho".into(), Num(rho));
    Ok((stats, checks))
}

/// Central limit theorem: Kolmogorov distance between the law of `R(n)` and
/// the normal approximation `Phi((k + 1/2 - a n) / (sigma sqrt n))` at every
/// integer `k`.
fn run_clt(ctx: &Ctx) -> Outcome {
    let pmf = ctx.pmf()?;
    let m = moments(&pmf)?;
    let mut stats = stats_from(&m, &pmf);
    let n = ctx.single_n();
    let samples = ctx.cfg.samples;
    let chain = ctx.chain();
    let start = ctx.start();
    let runs = par_samples(samples, |i| run_chain(&chain, n, &start, &mut stream_rng(ctx.seed, i)));
    let sandwich = sandwich_violations(runs.iter().map(|r| (r.r_n, r.z_n, n - r.t_nu)));
    let mut values: Vec<i64> = runs.iter().map(|r| r.r_n as i64).collect();
    let (mean, sd) = (m.a * n as f64, (m.sigma2 * n as f64).sqrt());
    let ks = ks_lattice(&mut values, |k| normal_cdf((k as f64 + 0.5 - mean) / sd));
    let threshold = (1.95 / (samples as f64).sqrt()).max(ctx.cfg.tolerance) * ctx.scale;
    stats.insert("ks".into(), Num(ks));
    Ok((
        stats,
        vec![
            Check::at_most("KS distance", Some(n), ks, threshold, true),
            Check::at_most("sandwich violations", Some(n), sandwich as f64, 0.0, false),
        ],
    ))
}

/// Local limit theorem: `P(R(n) = x)` against `e^{-n D(x/n)} / (sigma sqrt(2 pi n))`
/// over the window `|x - a n| <= 2 sigma sqrt n`.
fn run_llt(ctx: &Ctx) -> Outcome {
    let pmf = ctx.pmf()?;
    let solver = TiltSolver::new(&pmf)?;
    let m = *solver.moments();
    let mut stats = stats_from(&m, &pmf);
    let n = ctx.single_n();
    let nf = n as f64;
    let half = 2.0 * (nf * m.sigma2).sqrt();
    let lo = (m.a * nf - half).ceil().max(0.0) as u64;
    let hi = ((m.a * nf + half).floor() as u64).min(n);
    let tol = ctx.cfg.tolerance * ctx.scale;
    let mut checks = Vec::new();
    if let Some(p) = ctx.constant_p() {
        stats.insert("exact".into(), Num(1.0));
        for x in lo..=hi {
            let theory = theoretical_pmf(&ctx.model.spec, &solver, n, x, PmfMode::Gauss)?;
            let ratio = (ln_binomial_pmf(n, x, p) - theory.log_value).exp();
            checks.push(Check::abs(format!("exact pmf / formula at x = {x}"), Some(n), ratio, 1.0, tol, false));
        }
    } else {
        let samples = ctx.cfg.samples;
        let chain = ctx.chain();
        let start = ctx.start();
        let rs = par_samples(samples, |i| run_chain(&chain, n, &start, &mut stream_rng(ctx.seed, i)).r_n);
        let mut hist = vec![0u64; (hi - lo + 1) as usize];
        for r in rs {
            if (lo..=hi).contains(&r) {
                hist[(r - lo) as usize] += 1;
            }
        }
        for (k, &hits) in hist.iter().enumerate() {
            let x = lo + k as u64;
            let theory = theoretical_pmf(&ctx.model.spec, &solver, n, x, PmfMode::Gauss)?;
            let ratio = hits as f64 / samples as f64 / theory.log_value.exp();
            let label = format!("empirical pmf / formula at x = {x} ({hits} hits)");
            if hits >= MIN_BIN_HITS {
                checks.push(Check::abs(label, Some(n), ratio, 1.0, tol, true));
            } else {
                checks.push(Check::skipped(label, Some(n), ratio, 1.0));
            }
        }
    }
    Ok((stats, checks))
}

/// Moderate deviations: `(n / kappa^2) ln P(R(n) - a n >= kappa y)` against
/// `-y^2 / (2 sigma^2)` with `kappa = n^q`.
fn run_mdp(ctx: &Ctx) -> Outcome {
    let pmf = ctx.pmf()?;
    let solver = TiltSolver::new(&pmf)?;
    let m = *solver.moments();
    let mut stats = stats_from(&m, &pmf);
    let n = ctx.single_n();
    let nf = n as f64;
    let kappa = nf.powf(ctx.cfg.kappa_exponent);
    let norm = nf / (kappa * kappa);
    let tol = ctx.cfg.tolerance * ctx.scale;
    stats.insert("kappa".into(), Num(kappa));
    let mut checks = Vec::new();
    for &y in &ctx.cfg.y {
        let x = (m.a * nf + kappa * y).ceil().max(0.0) as u64;
        let label_y = format!("y = {y}");
        let ln_p = if let Some(p) = ctx.constant_p() {
            ln_binomial_upper_tail(n, x, p)
        } else {
            let alpha = x as f64 / nf;
            let point = solver.solve(alpha)?;
            if !point.converged {
                return Err(CliError::Refused(format!("tilt solver did not converge at alpha = {alpha}")));
            }
            let tilted = TiltedChain::new(&ctx.model.spec, point.lambda, point.mu)?;
            let est = importance_estimate(&tilted, ctx, n, x, n, ctx.cfg.samples)?;
            checks.push(Check::new(
                format!("effective sample size, {label_y}"),
                Some(n),
                est.ess,
                MIN_ESS,
                (MIN_ESS - est.ess).max(0.0),
                0.0,
                false,
            ));
            stats.insert(format!("is_std_err[{label_y}]"), Num(est.std_err));
            est.log_prob
        };
        if y == 0.0 {
            // zero-rate boundary: P(R(n) >= a n) stays near one half
            let half = 0.5f64.ln();
            checks.push(Check::new(format!("ln P, {label_y}"), Some(n), ln_p, half, (half - ln_p).max(0.0), tol, true));
        } else {
            let value = norm * ln_p;
            let target = -y * y / (2.0 * m.sigma2);
            let rel = ((value - target) / target).abs();
            checks.push(Check::new(format!("(n/kappa^2) ln P, {label_y}"), Some(n), value, target, rel, tol, true));
        }
    }
    Ok((stats, checks))
}

/// Runs `samples` tilted paths in parallel and estimates `P(lo <= R(n) <= hi)`.
/// Identical to `vlmc_core::is_estimate` on the same streams.
fn importance_estimate(tilted: &TiltedChain, ctx: &Ctx, n: u64, lo: u64, hi: u64, samples: u64) -> Result<IsEstimate, CliError> {
    let start = ctx.start();
    let draws = par_samples(samples, |i| tilted.sample(n, &start, &mut stream_rng(ctx.seed, i)));
    let hits: Vec<f64> = draws.into_iter().filter(|(r, _)| (lo..=hi).contains(r)).map(|(_, lw)| lw).collect();
    Ok(IsEstimate::from_log_weights(&hits, samples)?)
}

/// `P(tau >= n) <= C e^{-rho n}` for `n = 1..=L` on the exact cycle law.
fn tail_check(ctx: &Ctx) -> Outcome {
    let spec = &ctx.model.spec;
    let l = ctx.single_n() as usize;
    if l < spec.v() as usize + 1 {
        return Err(CliError::Refused(format!("tail check needs L >= v + 1 = {}", spec.v() + 1)));
    }
    let (c, rho) = lemma_tail_constants(spec);
    let pmf = excursion_pmf(spec, l)?;
    let surv = pmf.survival();
    let mut violations = 0u64;
    let mut worst = 0.0f64;
    for (n, &s) in surv.iter().enumerate().take(l + 1).skip(1) {
        let bound = c * (-rho * n as f64).exp();
        // the bound is attained at n = v, where it is 1 up to rounding
        if s > bound * (1.0 + TIGHT_BOUND_SLACK) {
            violations += 1;
        }
        worst = worst.max(s / bound);
    }
    let mut stats = BTreeMap::new();
    stats.insert("C".into(), Num(c));
    stats.insert("rho".into(), Num(rho));
    stats.insert("max_ratio_to_bound".into(), Num(worst));
    Ok((stats, vec![Check::at_most("points with P(tau >= n) > C e^{-rho n}", Some(l as u64), violations as f64, 0.0, false)]))
}

/// Non-arithmeticity scan: `|f(2 pi u)|` over a grid on `[0, 1)^2` away from
/// the integer lattice must stay below `1 - floor`, and equal `1 - residual`
/// on the lattice.
fn arith_scan(ctx: &Ctx) -> Outcome {
    if ctx.model.spec.v() == 1 {
        return Err(CliError::Refused(
            "arithmeticity scan refused for v = 1: every written 1 regenerates, so zeta = 1 on every cycle and \
             |f(2 pi u)| = 1 whenever u1 is an integer, whatever u2 is; the two-dimensional lattice condition \
             cannot hold"
                .into(),
        ));
    }
    let pmf = ctx.pmf()?;
    let steps = (1.0 / ctx.cfg.grid_step).round() as usize;
    let us: Vec<f64> = (0..steps).map(|k| k as f64 * ctx.cfg.grid_step).collect();
    let moduli = char_fn_grid(&pmf, &us, &us);
    let dist = |u: f64| u.min(1.0 - u);
    let mut worst = 0.0f64;
    let mut worst_at = (0.0, 0.0);
    for (i, &u1) in us.iter().enumerate() {
        for (j, &u2) in us.iter().enumerate() {
            if dist(u1).hypot(dist(u2)) < ctx.cfg.margin {
                continue;
            }
            let f = moduli[i * us.len() + j];
            if f > worst {
                worst = f;
                worst_at = (u1, u2);
            }
        }
    }
    let floor = ctx.cfg.tolerance;
    let mut checks = vec![Check::at_most("max |f(2 pi u)| off the lattice", None, worst, 1.0 - floor, false)];
    for (u1, u2) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (-2.0, 3.0)] {
        let (f, unc) = char_fn(&pmf, u1, u2);
        checks.push(Check::abs(format!("|f| at lattice point ({u1}, {u2})"), None, f.norm(), 1.0 - unc, LATTICE_TOLERANCE, false));
    }
    let mut stats = BTreeMap::new();
    stats.insert("argmax_u1".into(), Num(worst_at.0));
    stats.insert("argmax_u2".into(), Num(worst_at.1));
    stats.insert("residual".into(), Num(pmf.residual()));
    Ok((stats, checks))
}

/// Importance sampling of point probabilities, the identity-tilt reduction
/// to plain Monte Carlo, and tilted-mean duality on the rate grid.
fn run_is(ctx: &Ctx) -> Outcome {
    let spec = &ctx.model.spec;
    let pmf = ctx.pmf()?;
    let solver = TiltSolver::new(&pmf)?;
    let m = *solver.moments();
    let mut stats = stats_from(&m, &pmf);
    let alpha = ctx.cfg.alpha.unwrap_or(m.a + 0.1);
    let tol = ctx.cfg.tolerance * ctx.scale;
    let w = ctx.cfg.window;
    let mut checks = Vec::new();
    let mut trend = Vec::new();
    for &n in &ctx.cfg.n {
        let x = (alpha * n as f64).round() as u64;
        let point = solver.solve(x as f64 / n as f64)?;
        if !point.converged {
            return Err(CliError::Refused(format!("tilt solver did not converge at alpha = {}", x as f64 / n as f64)));
        }
        let tilted = TiltedChain::new(spec, point.lambda, point.mu)?;
        let (lo, hi) = (x.saturating_sub(w), (x + w).min(n));
        let est = importance_estimate(&tilted, ctx, n, lo, hi, ctx.cfg.samples)?;
        stats.insert(format!("ln_p_hat[n={n}]"), Num(est.log_prob));
        stats.insert(format!("std_err[n={n}]"), Num(est.std_err));
        stats.insert(format!("ess[n={n}]"), Num(est.ess));
        if let Some(p) = ctx.constant_p() {
            let terms: Vec<f64> = (lo..=hi).map(|k| ln_binomial_pmf(n, k, p)).collect();
            let exact = log_sum_exp(&terms);
            checks.push(Check::abs(format!("ln P(|R(n) - {x}| <= {w}) vs exact"), Some(n), est.log_prob, exact, tol, true));
        } else {
            checks.push(Check::at_most(format!("std error of ln P(|R(n) - {x}| <= {w})"), Some(n), est.std_err, tol, true));
        }
        trend.push((n, -est.log_prob / n as f64, est.std_err / n as f64, point.d_value));
    }
    // -(1/n) ln P approaches D(alpha) as n grows
    if trend.len() > 1 {
        let mut bad = 0u64;
        for pair in trend.windows(2) {
            let (d0, d1) = ((pair[0].1 - pair[0].3).abs(), (pair[1].1 - pair[1].3).abs());
            if d1 > d0 + 2.0 * (pair[0].2 + pair[1].2) {
                bad += 1;
            }
        }
        for &(n, rate, se, d) in &trend {
            stats.insert(format!("log_rate[n={n}]"), Num(rate));
            stats.insert(format!("log_rate_err[n={n}]"), Num(se));
            stats.insert("D(alpha)".into(), Num(d));
        }
        checks.push(Check::at_most("log-rate steps moving away from D(alpha)", None, bad as f64, 0.0, true));
    }

    // identity tilt against plain hit counting on the same streams
    let n0 = ctx.cfg.n[0];
    let x0 = (m.a * n0 as f64).round() as u64;
    let w0 = (n0 as f64).sqrt().ceil() as u64;
    let m0 = ctx.cfg.samples.min(10_000);
    let identity = TiltedChain::new(spec, 0.0, 0.0)?;
    let (lo0, hi0) = (x0.saturating_sub(w0), (x0 + w0).min(n0));
    let via_is = importance_estimate(&identity, ctx, n0, lo0, hi0, m0)?;
    let chain = ctx.chain();
    let start = ctx.start();
    let hits = par_samples(m0, |i| run_chain(&chain, n0, &start, &mut stream_rng(ctx.seed, i)).r_n)
        .into_iter()
        .filter(|r| (lo0..=hi0).contains(r))
        .count();
    let direct = (hits as f64 / m0 as f64).ln();
    checks.push(Check::abs("identity tilt minus direct Monte Carlo", Some(n0), via_is.log_prob, direct, 0.0, false));

    // duality: the tilted law has mean slope alpha across the certified grid
    let curve = rate_curve(&pmf, 0.1, 0.005)?;
    let mut worst = 0.0f64;
    for p in &curve.points {
        let tilted = tilt(&pmf, p.lambda, p.mu)?;
        worst = worst.max((moments(&tilted)?.a - p.alpha).abs());
    }
    stats.insert("certified_delta".into(), Num(curve.delta_used));
    checks.push(Check::at_most("max |tilted mean slope - alpha| on the rate grid", None, worst, DUALITY_TOLERANCE, false));
    Ok((stats, checks))
}
