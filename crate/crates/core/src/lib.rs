//! Optimal decentralized control of networked systems whose local-to-remote
//! uplinks drop packets.
//!
//! A remote controller acts on `N` plants but only sees plant `n` when the
//! uplink from local controller `n` delivers. The optimal strategies are
//! characterized by coupled Riccati recursions; this crate
//!
//! * evaluates the recursions over a finite horizon and iterates them to a
//!   steady state ([`riccati`]),
//! * builds the auxiliary Markov jump linear system whose coupled Riccati
//!   recursions coincide with the plant's, and runs its stochastic
//!   stabilizability/detectability tests ([`mjls`]),
//! * computes the critical drop probabilities from the uncontrollable modes
//!   of the local pairs ([`thresholds`]),
//! * simulates the closed loop and checks the exact one-step cost identity
//!   ([`simulator`]).
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`). The
//! `*F64` aliases below are what most callers want.

pub mod blockmat;
pub mod error;
pub mod mjls;
pub mod operators;
pub mod riccati;
pub mod simulator;
pub mod testing;
pub mod thresholds;

use std::fmt::Debug;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

pub use error::{Error, Result};

/// Real scalar the numerical core is written against.
///
/// Eigen-decompositions, Cholesky factors and square roots are needed
/// throughout, so only real fields qualify.
pub trait Scalar: RealField + Copy + FromPrimitive + ToPrimitive + Debug {
    /// Converts an `f64` literal, rounding if the type is narrower.
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    /// Widens to `f64` for reporting.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub type BlockMatrixF64 = blockmat::BlockMatrix<f64>;
pub type DncsSpecF64 = riccati::DncsSpec<f64>;
pub type FiniteSolutionF64 = riccati::FiniteSolution<f64>;
pub type SteadySolutionF64 = riccati::SteadySolution<f64>;
pub type MjlsModelF64 = mjls::MjlsModel<f64>;
pub type ThresholdReportF64 = thresholds::ThresholdReport<f64>;
pub type SimReportF64 = simulator::SimReport<f64>;

pub type BlockMatrixF32 = blockmat::BlockMatrix<f32>;
pub type DncsSpecF32 = riccati::DncsSpec<f32>;
pub type SteadySolutionF32 = riccati::SteadySolution<f32>;
pub type MjlsModelF32 = mjls::MjlsModel<f32>;
