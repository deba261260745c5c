//! Simulated cycles against the exact cycle law.

use vlmc_core::sim::{stream_rng, CycleSampler};
use vlmc_core::stats::Accumulator;
use vlmc_core::*;

fn m1() -> ModelSpec {
    ModelSpec::new(2, vec![vec![0.5, 0.6], vec![0.4, 0.5], vec![0.45, 0.55]]).unwrap()
}

#[test]
fn simulated_cycle_moments_match_the_exact_law() {
    let spec = m1();
    let exact = moments(&excursion_pmf(&spec, default_horizon(&spec)).unwrap()).unwrap();
    let chain = LumpedChain::new(&spec);
    let cycles: Vec<_> = CycleSampler::new(&chain, stream_rng(21, 0)).take(200_000).collect();
    let (mut tau, mut zeta) = (Accumulator::default(), Accumulator::default());
    for c in &cycles {
        tau.push(c.tau as f64);
        zeta.push(c.zeta as f64);
    }
    assert!((tau.mean - exact.a_tau).abs() < 4.0 * tau.std_err());
    assert!((zeta.mean - exact.e_zeta).abs() < 4.0 * zeta.std_err());
    // ratio estimator: influence function (zeta - a tau) / E tau
    let a_hat = zeta.mean / tau.mean;
    let mut infl = Accumulator::default();
    for c in &cycles {
        infl.push((c.zeta as f64 - a_hat * c.tau as f64) / tau.mean);
    }
    assert!((a_hat - exact.a).abs() < 4.0 * infl.std_err());
}

#[test]
fn consecutive_cycles_are_uncorrelated() {
    let spec = m1();
    let chain = LumpedChain::new(&spec);
    let taus: Vec<f64> = CycleSampler::new(&chain, stream_rng(4, 2)).take(100_000).map(|c| c.tau as f64).collect();
    let n = taus.len() as f64;
    let mean = taus.iter().sum::<f64>() / n;
    let var = taus.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    let cov = taus.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / (n - 1.0);
    assert!((cov / var).abs() < 4.0 / n.sqrt());
}

#[test]
fn regenerations_split_a_long_run_into_cycles() {
    let spec = m1();
    let tr = simulate(&spec, 50_000, MemoryState::y0(2), 17).unwrap();
    let reg = split_regenerations(&tr);
    let total: u64 = reg.cycles.iter().map(|c| c.tau).sum();
    assert_eq!(total, *tr.regen_marks.last().unwrap());
    let ones_after_last: u64 = tr.chars[total as usize..].iter().map(|&c| c as u64).sum();
    assert_eq!(reg.cycles.iter().map(|c| c.zeta).sum::<u64>() + ones_after_last, tr.r_n);
    assert!(reg.cycles.iter().all(|c| c.zeta >= 1 && c.zeta <= c.tau));
}
