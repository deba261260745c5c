//! Chains with unbounded variable-length memory over the binary alphabet.
//!
//! The next character is `1` with probability `p[k][j]`, where `k` is the
//! number of zeros written since the most recent `1` and `j` numbers the
//! `v`-letter word ending at that `1`. The pair (distance, word) is a Markov
//! state; visits to `y0 = (0, 0…01)` split a trajectory into i.i.d.
//! regeneration cycles `(tau, zeta)`, and everything else in this crate is
//! built on the joint law of one cycle:
//!
//! * [`model`]: parameters, Markov state and the one-step transition.
//! * [`sim`]: seeded trajectories and their regeneration structure.
//! * [`excursion`]: the exact (truncated) cycle law by dynamic programming,
//!   its moments, generating functions and exponential tilts.
//! * [`rate`]: the constrained Legendre problem, the series constant of the
//!   local limit theorem and the closed-form tail constants.
//! * [`importance`]: a path-level tilted chain for rare-event estimation.
//! * [`stats`]: special functions and goodness-of-fit statistics.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod complex;
pub mod error;
pub mod excursion;
pub mod importance;
pub mod lumped;
pub mod model;
pub mod rate;
pub mod sim;
pub mod stats;

pub use complex::Complex;
pub use error::Error;
pub use excursion::{
    char_fn, char_fn_grid, default_horizon, excursion_pmf, excursion_pmf_enum, log_mgf, moments, moments_with_tolerance,
    partial_terms, tilt, JointPmf, LogMgf, Moments, PartialTerms,
};
pub use importance::{direct_mc_estimate, is_estimate, IsEstimate, IsTarget, TiltedChain};
pub use lumped::LumpedChain;
pub use model::{char_one_prob, step, word_index, MemoryState, ModelSpec};
pub use rate::{
    lemma_tail_constants, mdp_rate, rate_curve, rate_d, series_i, solve_tilt, theoretical_pmf,
    PmfMode, RateCurve, SeriesI, TheoreticalPmf, TiltPoint, TiltSolver,
};
pub use sim::{simulate, simulate_stream, split_regenerations, CycleRecord, Regenerations, Trajectory};

pub type Result<T> = core::result::Result<T, Error>;
