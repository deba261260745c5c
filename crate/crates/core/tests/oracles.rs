//! Exact answers from independent constructions: brute-force enumeration,
//! Bernoulli closed forms, the binomial distribution and finite differences.

use vlmc_core::rate::{lemma_tail_constants, TILT_TOLERANCE};
use vlmc_core::sim::{stream_rng, uniform};
use vlmc_core::stats::{bernoulli_kl, ln_binomial_pmf};
use vlmc_core::*;

fn m1() -> ModelSpec {
    ModelSpec::new(2, vec![vec![0.5, 0.6], vec![0.4, 0.5], vec![0.45, 0.55]]).unwrap()
}

fn random_spec(v: u32, k_max: usize, seed: u64) -> ModelSpec {
    let mut rng = stream_rng(seed, 0);
    let words = 1usize << (v - 1);
    let table = (0..=k_max).map(|_| (0..words).map(|_| 0.1 + 0.8 * uniform(&mut rng)).collect()).collect();
    ModelSpec::new(v, table).unwrap()
}

#[test]
fn dp_agrees_with_enumeration() {
    for spec in [m1(), random_spec(3, 2, 11), random_spec(3, 4, 12), ModelSpec::constant(1, 0.3).unwrap()] {
        let a = excursion_pmf(&spec, 16).unwrap();
        let b = excursion_pmf_enum(&spec, 16).unwrap();
        for t in 1..=16 {
            for s in 1..=t {
                assert!((a.mass(t, s) - b.mass(t, s)).abs() < 1e-12, "v={} ({t},{s})", spec.v());
            }
        }
        assert!((a.residual() - b.residual()).abs() < 1e-12);
    }
}

#[test]
fn constant_models_reduce_to_bernoulli() {
    for v in 1..=3 {
        let spec = ModelSpec::constant(v, 0.3).unwrap();
        let pmf = excursion_pmf(&spec, default_horizon(&spec)).unwrap();
        let m = moments(&pmf).unwrap();
        assert!((m.a - 0.3).abs() < 1e-9, "v={v}: a = {}", m.a);
        assert!((m.sigma2 - 0.21).abs() < 1e-9, "v={v}: sigma2 = {}", m.sigma2);
    }
}

#[test]
fn rate_matches_relative_entropy_on_the_grid() {
    let spec = ModelSpec::constant(2, 0.3).unwrap();
    let pmf = excursion_pmf(&spec, default_horizon(&spec)).unwrap();
    let curve = rate_curve(&pmf, 0.1, 0.005).unwrap();
    assert!(curve.delta_used >= 0.1 - 1e-12);
    for p in &curve.points {
        assert!(p.converged);
        assert!(p.residual_a < TILT_TOLERANCE && p.residual_slope < TILT_TOLERANCE);
        let kl = bernoulli_kl(p.alpha, 0.3);
        assert!((p.d_value - kl).abs() < 1e-8, "alpha {}: {} vs {}", p.alpha, p.d_value, kl);
        let tilted = tilt(&pmf, p.lambda, p.mu).unwrap();
        assert!((moments(&tilted).unwrap().a - p.alpha).abs() < 1e-8);
    }
    let spot = solve_tilt(&pmf, 0.4).unwrap();
    assert!((spot.d_value - 0.0225824).abs() < 1e-6);
}

#[test]
fn derivative_of_rate_is_mu() {
    let pmf = excursion_pmf(&m1(), default_horizon(&m1())).unwrap();
    let solver = TiltSolver::new(&pmf).unwrap();
    let a = solver.moments().a;
    let h = 1e-4;
    for alpha in [a - 0.03, a + 0.02, a + 0.04] {
        let p = solver.solve(alpha).unwrap();
        let up = solver.solve(alpha + h).unwrap().d_value;
        let down = solver.solve(alpha - h).unwrap().d_value;
        let fd = (up - down) / (2.0 * h);
        assert!((fd - p.mu).abs() < 1e-6, "alpha {alpha}: {fd} vs {}", p.mu);
    }
}

#[test]
fn survival_obeys_the_closed_form_tail_bound() {
    for spec in [m1(), ModelSpec::constant(1, 0.3).unwrap()] {
        let (c, rho) = lemma_tail_constants(&spec);
        let pmf = excursion_pmf(&spec, 200).unwrap();
        let surv = pmf.survival();
        for (n, &s) in surv.iter().enumerate().take(201).skip(1) {
            // equality at n = v, so allow rounding
            assert!(s <= c * (-rho * n as f64).exp() * (1.0 + 1e-12), "n = {n}");
        }
    }
}

#[test]
fn series_at_the_mean_is_the_mean_cycle_length() {
    let spec = m1();
    let pmf = excursion_pmf(&spec, default_horizon(&spec)).unwrap();
    let solver = TiltSolver::new(&pmf).unwrap();
    let at_a = solver.solve(solver.moments().a).unwrap();
    let series = series_i(&spec, &at_a, pmf.horizon()).unwrap();
    assert!((series.value - solver.moments().a_tau).abs() < 1e-8);
    let n = 2000;
    let x = (solver.moments().a * n as f64).round() as u64;
    let g = theoretical_pmf(&spec, &solver, n, x, PmfMode::Gauss).unwrap();
    let f = theoretical_pmf(&spec, &solver, n, x, PmfMode::FullAtA).unwrap();
    assert!((g.log_value - f.log_value).abs() < 1e-12);
}

#[test]
fn local_limit_against_binomial() {
    let spec = ModelSpec::constant(2, 0.3).unwrap();
    let pmf = excursion_pmf(&spec, default_horizon(&spec)).unwrap();
    let solver = TiltSolver::new(&pmf).unwrap();
    let n = 1000u64;
    let half = 2.0 * (n as f64 * 0.21).sqrt();
    let lo = (300.0 - half).ceil() as u64;
    let hi = (300.0 + half).floor() as u64;
    for x in lo..=hi {
        let g = theoretical_pmf(&spec, &solver, n, x, PmfMode::Gauss).unwrap();
        let ratio = (ln_binomial_pmf(n, x, 0.3) - g.log_value).exp();
        assert!((0.95..=1.05).contains(&ratio), "x = {x}: {ratio}");
    }
}

#[test]
fn characteristic_function_on_the_lattice() {
    let pmf = excursion_pmf(&m1(), default_horizon(&m1())).unwrap();
    for (u1, u2) in [(0.0, 0.0), (1.0, 0.0), (2.0, -3.0)] {
        let (f, unc) = char_fn(&pmf, u1, u2);
        assert!((f.norm() - (1.0 - unc)).abs() < 1e-10);
    }
    let (f, _) = char_fn(&pmf, 0.5, 0.5);
    let direct: f64 = pmf
        .iter()
        .map(|(t, s, m)| if (t + s) % 2 == 0 { m } else { -m })
        .sum();
    assert!((f.re - direct).abs() < 1e-12 && f.im.abs() < 1e-12);
}

#[test]
fn importance_sampling_recovers_a_binomial_point_probability() {
    let spec = ModelSpec::constant(2, 0.3).unwrap();
    let pmf = excursion_pmf(&spec, default_horizon(&spec)).unwrap();
    let p = solve_tilt(&pmf, 0.4).unwrap();
    let tilted = TiltedChain::new(&spec, p.lambda, p.mu).unwrap();
    let target = IsTarget::window(500, 200, 0, 20_000, 3, MemoryState::y0(2));
    let est = is_estimate(&tilted, &target).unwrap();
    let exact = ln_binomial_pmf(500, 200, 0.3);
    assert!((est.log_prob - exact).abs() < 0.1, "{} vs {exact}", est.log_prob);
    assert!((est.log_prob - exact).abs() < 5.0 * est.std_err + 0.02);
}

#[test]
fn identity_tilt_is_plain_monte_carlo() {
    let spec = m1();
    let target = IsTarget::window(400, 200, 5, 2_000, 8, MemoryState::y0(2));
    let direct = direct_mc_estimate(&spec, &target).unwrap();
    let chain = LumpedChain::new(&spec);
    let hits = (0..target.samples)
        .filter(|&i| {
            let r = vlmc_core::sim::run_chain(&chain, 400, &target.start, &mut stream_rng(8, i)).r_n;
            (195..=205).contains(&r)
        })
        .count();
    assert_eq!(direct.hits, hits as u64);
    assert_eq!(direct.log_prob, (hits as f64 / 2000.0).ln());
}
