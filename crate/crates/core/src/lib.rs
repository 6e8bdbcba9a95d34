//! Experimental design scored by elementary symmetric polynomials.
//!
//! The design criterion is `f_l(S) = (1/l) log E_l((X_S' X_S)^{-1})`, where
//! `E_l` is the l-th elementary symmetric polynomial of the spectrum. Order
//! `l = 1` recovers A-optimal design (trace), `l = m` recovers D-optimal
//! design (determinant), and intermediate orders interpolate between the two.
//!
//! The crate provides:
//! - numerically stable ESP evaluation, gradients, and geodesic operations on
//!   positive definite matrices ([`esp`]);
//! - the discrete objective, its convex relaxation over fractional weights,
//!   and the relaxed gradient ([`objective`]);
//! - projected gradient descent over the knapsack polytope ([`solver`]);
//! - rounding, greedy removal, and Fedorov exchange to turn weights into
//!   size-k designs ([`discretize`]);
//! - brute-force enumeration oracles for testing ([`oracles`]);
//! - the dual stationarity system and its closed-form special cases
//!   ([`dual`]);
//! - synthetic generators, CSV ingestion, and evaluation metrics ([`data`]).

pub mod data;
pub mod discretize;
pub mod dual;
mod error;
pub mod esp;
pub mod objective;
pub mod oracles;
pub mod solver;

pub use error::{Error, Result};
pub use esp::{LogEsp, PdMatrix, SpectralDecomp, PD_FLOOR_REL};
pub use objective::{DesignMatrix, ObjectiveOrder, Subset, Weights};
pub use solver::{SolverConfig, SolverReport};
