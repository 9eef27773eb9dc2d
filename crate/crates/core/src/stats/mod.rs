//! Empirical statistics of return series.
//!
//! Every estimator here is a deterministic function of its input.

mod acf;
mod fit;
mod histogram;
mod iet;
pub mod ingest;

pub use acf::{
    autocorrelation, fit_exponential, fit_truncated_powerlaw, AcfCurve, ExponentialFit, LagWindow,
    TruncatedPowerLawFit,
};
pub use fit::{linear_regression, tail_exponent, LinearFit, QuantileWindow, TailCurve, TailFit};
pub use histogram::{
    cumulative_abs_distribution, rescaled_histogram, BinScale, BinSpec, Ccdf, Histogram,
};
pub use iet::{iet_distribution, interevent_times, write_iet_csv, EventKind, IetSample, Threshold};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

pub(crate) fn nonzero_std(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if xs.iter().all(|&x| x == xs[0]) {
        return Err(Error::ZeroVariance);
    }
    let s = std_dev(xs);
    if s > 0.0 && s.is_finite() {
        Ok(s)
    } else {
        Err(Error::ZeroVariance)
    }
}
