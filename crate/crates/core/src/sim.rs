//! Seeded trajectories and their regeneration structure.
//!
//! Randomness comes from ChaCha8 keyed by `(seed, stream)`: every stream is
//! a disjoint keystream, so concurrent workers that own distinct stream ids
//! never share variates.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::lumped::LumpedChain;
use crate::model::{step, MemoryState, ModelSpec};
use crate::{Error, Result};

const TWO_POW_NEG_53: f64 = 1.0 / 9007199254740992.0;

/// Generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform variate on `[0, 1)` with 53 random bits.
#[inline]
pub fn uniform<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * TWO_POW_NEG_53
}

/// A simulated path of `n` characters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub n: u64,
    pub start: MemoryState,
    /// `chars[t - 1]` is the character written at time `t`.
    pub chars: Vec<u8>,
    /// `R(n)`, the number of ones written.
    pub r_n: u64,
    /// Times `t >= 1` with `Y(t) = y0`.
    pub regen_marks: Vec<u64>,
    pub seed: u64,
    pub stream: u64,
}

impl Trajectory {
    /// Rebuilds a trajectory from known characters.
    pub fn from_chars(start: MemoryState, chars: &[u8]) -> Result<Self> {
        let mut state = start;
        let mut marks = Vec::new();
        let mut r_n = 0;
        for (i, &c) in chars.iter().enumerate() {
            if c > 1 {
                return Err(Error::InvalidArgument { reason: alloc::format!("character {c} at time {}", i + 1) });
            }
            state = state.after(c);
            r_n += c as u64;
            if state.is_y0() {
                marks.push(i as u64 + 1);
            }
        }
        Ok(Self { n: chars.len() as u64, start, chars: chars.to_vec(), r_n, regen_marks: marks, seed: 0, stream: 0 })
    }
}

/// Simulates `n` steps from `start` on stream 0 of `seed`.
pub fn simulate(spec: &ModelSpec, n: u64, start: MemoryState, seed: u64) -> Result<Trajectory> {
    simulate_stream(spec, n, start, seed, 0)
}

pub fn simulate_stream(spec: &ModelSpec, n: u64, start: MemoryState, seed: u64, stream: u64) -> Result<Trajectory> {
    start.validate(spec)?;
    let mut rng = stream_rng(seed, stream);
    let mut state = start;
    let mut chars = Vec::with_capacity(n as usize);
    let mut marks = Vec::new();
    let mut r_n = 0;
    for t in 1..=n {
        let (c, next) = step(spec, &state, uniform(&mut rng));
        chars.push(c);
        r_n += c as u64;
        if next.is_y0() {
            marks.push(t);
        }
        state = next;
    }
    Ok(Trajectory { n, start, chars, r_n, regen_marks: marks, seed, stream })
}

/// One regeneration cycle: `tau` steps containing `zeta` ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CycleRecord {
    pub k: usize,
    pub tau: u64,
    pub zeta: u64,
}

/// Cycle decomposition of a trajectory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Regenerations {
    /// Every cycle completed by time `n` (`T_k <= n`).
    pub cycles: Vec<CycleRecord>,
    /// `nu(n) = max{k >= 0 : T_k < n}`.
    pub nu_n: usize,
    /// `Z(n)`, ones over the first `nu(n)` cycles.
    pub z_n: u64,
    /// Observed part of cycle `nu(n) + 1`: its length up to time `n`
    /// and the ones written in it.
    pub open_len: u64,
    pub open_ones: u64,
}

pub fn split_regenerations(traj: &Trajectory) -> Regenerations {
    let mut cycles = Vec::with_capacity(traj.regen_marks.len());
    let mut prev = 0u64;
    let mut z = 0u64;
    let mut nu_n = 0;
    let mut z_n = 0;
    let mut t_nu = 0;
    for (k, &mark) in traj.regen_marks.iter().enumerate() {
        let zeta = traj.chars[prev as usize..mark as usize].iter().map(|&c| c as u64).sum();
        cycles.push(CycleRecord { k: k + 1, tau: mark - prev, zeta });
        z += zeta;
        if mark < traj.n {
            nu_n = k + 1;
            z_n = z;
            t_nu = mark;
        }
        prev = mark;
    }
    Regenerations { cycles, nu_n, z_n, open_len: traj.n - t_nu, open_ones: traj.r_n - z_n }
}

/// End-of-run summary from the lumped fast path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSummary {
    pub r_n: u64,
    pub end: MemoryState,
    /// Number of regenerations at times `1..=n`.
    pub regenerations: u64,
    /// `nu(n)` and `Z(n)`.
    pub nu_n: u64,
    pub z_n: u64,
    /// `T_nu(n)`, the last regeneration strictly before `n` (0 if none).
    pub t_nu: u64,
}

/// Runs `n` steps without storing the path. Consumes the generator exactly
/// like [`simulate_stream`], so both produce the same `R(n)` and end state.
pub fn run_chain<R: RngCore>(chain: &LumpedChain, n: u64, start: &MemoryState, rng: &mut R) -> RunSummary {
    run_with_thresholds(chain, chain_thresholds(chain), n, start, rng)
}

pub(crate) fn chain_thresholds(chain: &LumpedChain) -> impl Fn(usize) -> u64 + '_ {
    move |i| chain.threshold(i)
}

#[inline]
pub(crate) fn run_with_thresholds<R: RngCore, F: Fn(usize) -> u64>(
    chain: &LumpedChain,
    threshold: F,
    n: u64,
    start: &MemoryState,
    rng: &mut R,
) -> RunSummary {
    let mut idx = chain.index(start);
    let mut y1 = start.y1;
    let mut ones = 0u64;
    let mut regen = 0u64;
    let (mut nu_n, mut z_n, mut t_nu) = (0, 0, 0);
    for t in 1..=n {
        if (rng.next_u64() >> 11) < threshold(idx) {
            ones += 1;
            idx = chain.next1(idx);
            y1 = 0;
            if idx == LumpedChain::Y0 {
                regen += 1;
                if t < n {
                    nu_n = regen;
                    z_n = ones;
                    t_nu = t;
                }
            }
        } else {
            idx = chain.next0(idx);
            y1 += 1;
        }
    }
    let words = 1u32 << (chain.v() - 1);
    let col = (idx % words as usize) as u32;
    let end = MemoryState::from_bits(chain.v(), y1, (col << 1) | 1).expect("lumped index encodes a valid word");
    RunSummary { r_n: ones, end, regenerations: regen, nu_n, z_n, t_nu }
}

/// Runs from `state` until the next visit to `y0`; returns `(steps, ones)`.
pub fn run_to_regeneration<R: RngCore>(chain: &LumpedChain, state: &MemoryState, rng: &mut R) -> (u64, u64) {
    let mut idx = chain.index(state);
    let (mut t, mut ones) = (0u64, 0u64);
    loop {
        t += 1;
        if (rng.next_u64() >> 11) < chain.threshold(idx) {
            ones += 1;
            idx = chain.next1(idx);
            if idx == LumpedChain::Y0 {
                return (t, ones);
            }
        } else {
            idx = chain.next0(idx);
        }
    }
}

/// Draws i.i.d. regeneration cycles by running the chain from `y0`.
pub struct CycleSampler<'a, R> {
    chain: &'a LumpedChain,
    rng: R,
    k: usize,
}

impl<'a, R: RngCore> CycleSampler<'a, R> {
    pub fn new(chain: &'a LumpedChain, rng: R) -> Self {
        Self { chain, rng, k: 0 }
    }
}

impl<R: RngCore> Iterator for CycleSampler<'_, R> {
    type Item = CycleRecord;

    fn next(&mut self) -> Option<CycleRecord> {
        let y0 = MemoryState::y0(self.chain.v());
        let (tau, zeta) = run_to_regeneration(self.chain, &y0, &mut self.rng);
        self.k += 1;
        Some(CycleRecord { k: self.k, tau, zeta })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn empty_run() {
        let spec = ModelSpec::constant(2, 0.3).unwrap();
        let tr = simulate(&spec, 0, MemoryState::y0(2), 1).unwrap();
        assert_eq!(tr.r_n, 0);
        assert!(tr.chars.is_empty());
        let reg = split_regenerations(&tr);
        assert!(reg.cycles.is_empty());
        assert_eq!((reg.nu_n, reg.z_n, reg.open_len), (0, 0, 0));
    }

    #[test]
    fn single_one_from_y0_does_not_regenerate() {
        let tr = Trajectory::from_chars(MemoryState::y0(2), &[1]).unwrap();
        let reg = split_regenerations(&tr);
        assert!(reg.cycles.is_empty());
        assert_eq!((reg.nu_n, reg.z_n, tr.r_n), (0, 0, 1));
    }

    #[test]
    fn zero_one_is_one_cycle_but_not_counted_at_n() {
        let tr = Trajectory::from_chars(MemoryState::y0(2), &[0, 1]).unwrap();
        assert_eq!(tr.regen_marks, vec![2]);
        let reg = split_regenerations(&tr);
        assert_eq!(reg.cycles, vec![CycleRecord { k: 1, tau: 2, zeta: 1 }]);
        // T_1 = 2 is not < n = 2
        assert_eq!((reg.nu_n, reg.z_n, reg.open_len, reg.open_ones), (0, 0, 2, 1));
        let tr = Trajectory::from_chars(MemoryState::y0(2), &[0, 1, 1]).unwrap();
        let reg = split_regenerations(&tr);
        assert_eq!((reg.nu_n, reg.z_n, reg.open_len, reg.open_ones), (1, 1, 1, 1));
    }

    #[test]
    fn fast_path_matches_step_path() {
        let spec = ModelSpec::new(2, vec![vec![0.5, 0.6], vec![0.4, 0.5], vec![0.45, 0.55]]).unwrap();
        let chain = LumpedChain::new(&spec);
        for seed in 0..20 {
            let start = MemoryState::new(seed % 4, &[1, 1]).unwrap();
            let tr = simulate_stream(&spec, 500, start, seed, 3).unwrap();
            let sum = run_chain(&chain, 500, &start, &mut stream_rng(seed, 3));
            let reg = split_regenerations(&tr);
            assert_eq!(sum.r_n, tr.r_n);
            assert_eq!(sum.regenerations, tr.regen_marks.len() as u64);
            assert_eq!((sum.nu_n as usize, sum.z_n), (reg.nu_n, reg.z_n));
            let mut s = start;
            for &c in &tr.chars {
                s = s.after(c);
            }
            assert_eq!(sum.end, s);
        }
    }

    #[test]
    fn reproducible() {
        let spec = ModelSpec::constant(3, 0.4).unwrap();
        let a = simulate(&spec, 1000, MemoryState::y0(3), 9).unwrap();
        let b = simulate(&spec, 1000, MemoryState::y0(3), 9).unwrap();
        assert_eq!(a, b);
        let c = simulate_stream(&spec, 1000, MemoryState::y0(3), 9, 1).unwrap();
        assert_ne!(a.chars, c.chars);
    }

    #[test]
    fn rejects_foreign_start() {
        let spec = ModelSpec::constant(3, 0.4).unwrap();
        assert!(simulate(&spec, 10, MemoryState::y0(2), 0).is_err());
    }
}
