//! Low-rank matrix completion with graph-guided pairwise penalties on the
//! latent factors.
//!
//! The crate is `no_std` (it only needs `alloc`) and contains the numerical
//! core: sparse observed matrices, the penalty family and its group proximal
//! maps, pairwise graphs, the Bregman-modified ADMM solver with inexact
//! conjugate-gradient subproblem solves, and the synthetic subgroup model used
//! to study fusion of latent vectors. File formats, the command line and
//! parallel drivers live in the companion `llfmc` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod config;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod observed;
pub mod penalty;
pub mod solver;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use graph::{Edge, PairGraph, Weighting};
pub use linalg::{FactorPair, Matrix};
pub use observed::{Entry, ObservedMatrix};
pub use penalty::{PenaltyKind, PenaltySpec};
pub use solver::{solve, IterationRecord, Solution, SolverState, StopReason};
