//! Simulation and verification toolkit for martingale approximation of
//! chaotic dynamics.
//!
//! The crate has three layers:
//!
//! * [`billiard`]: event-driven dynamics of the finite-horizon planar
//!   periodic Lorentz gas (flow, time-one map, collision map, horizon and
//!   hyperbolicity diagnostics).
//! * [`symbolic`] and [`martdecomp`]: exact computations on the two-sided
//!   Bernoulli shift, including martingale-coboundary decompositions with
//!   zero statistical error.
//! * [`limitlaws`] and [`homogenize`]: a driver-generic statistical harness
//!   (CLT, WIP, moments, iterated sums, Green-Kubo) and the fast-slow
//!   homogenization experiment.
//!
//! [`config`] and [`report`] implement the shared key=value configuration
//! format and the CSV outputs.

// `!(x < y)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod billiard;
pub mod config;
pub mod homogenize;
pub mod limitlaws;
pub mod martdecomp;
pub mod report;
pub mod rng;
pub mod stats;
pub mod symbolic;
