//! Monte Carlo simulator of the three-state "cunning agents" spin model of a
//! financial market, together with the statistics used to study its output.
//!
//! Agents sit on an `n x n` periodic square lattice and hold a position
//! `s_i in {-1, 0, +1}`. A drawn agent re-evaluates its position from the sum
//! of its four neighbours plus an idiosyncratic noise term, compared against
//! a threshold proportional to the absolute magnetization. Trades are the
//! *changes* of position, so log returns are proportional to changes of the
//! magnetization.
//!
//! Module map:
//! - [`noise`]: Weierstrass-Mandelbrot and alternative noise laws.
//! - [`lattice`]: spin grid, update kernel, rounds and market-maker restarts.
//! - [`market`]: excess demand and log returns.
//! - [`stats`]: histograms, CCDF, autocorrelation, tail and ACF fits,
//!   interevent times.
//! - [`analytic`]: incomplete gamma functions and the interevent-time law.
//! - [`sweep`]: parallel parameter-grid runs and phase-diagram slices.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod error;
pub mod lattice;
pub mod market;
pub mod noise;
pub mod stats;
pub mod sweep;

pub use error::{Error, Result};
pub use lattice::{simulate, ModelParams, RoundRecord, SpinLattice, TimeSeries};
pub use market::{build_return_series, ReturnSeries};
pub use noise::{NoiseSpec, WmParams};
