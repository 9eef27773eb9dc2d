use std::io::Write;

use crate::error::{Error, Result};
use crate::stats::fit::least_squares;
use crate::stats::{mean, nonzero_std};

/// Autocorrelation values `C(lag)` for `lag = 0..=max_lag`.
#[derive(Debug, Clone, PartialEq)]
pub struct AcfCurve {
    pub lags: Vec<u64>,
    pub values: Vec<f64>,
    /// Length of the series the curve was estimated from.
    pub length: usize,
}

impl AcfCurve {
    /// `3 / sqrt(length)`, the white-noise band half-width.
    pub fn noise_band(&self) -> f64 {
        3.0 / (self.length as f64).sqrt()
    }

    pub fn at(&self, lag: u64) -> Option<f64> {
        self.lags.binary_search(&lag).ok().map(|k| self.values[k])
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "lag,c")?;
        for (l, c) in self.lags.iter().zip(&self.values) {
            writeln!(w, "{l},{c}")?;
        }
        Ok(())
    }
}

/// `C(d) = <(x_t - mu)(x_{t+d} - mu)> / <(x_t - mu)^2>` with the numerator
/// averaged over the `n - d` available pairs and `mu`, the denominator taken
/// over the whole sample.
///
/// This estimator is not bounded by 1 in general; `|C(d)| <= n / (n - d)`.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<AcfCurve> {
    let n = series.len();
    if max_lag >= n {
        return Err(Error::invalid(
            "max_lag",
            format!("must be < series length {n}, got {max_lag}"),
        ));
    }
    nonzero_std(series)?;
    let mu = mean(series);
    let centered: Vec<f64> = series.iter().map(|x| x - mu).collect();
    let lagged = |d: usize| {
        let s: f64 = centered[..n - d]
            .iter()
            .zip(&centered[d..])
            .map(|(a, b)| a * b)
            .sum();
        s / (n - d) as f64
    };
    let var = lagged(0);
    let values = (0..=max_lag).map(|d| lagged(d) / var).collect();
    Ok(AcfCurve {
        lags: (0..=max_lag as u64).collect(),
        values,
        length: n,
    })
}

/// Inclusive lag range used by the decay fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LagWindow {
    pub min: u64,
    pub max: u64,
}

const MIN_FIT_POINTS: usize = 5;

/// `(lag, ln C)` over the window, cut short at the first non-positive value.
fn log_points(acf: &AcfCurve, window: LagWindow) -> Result<(Vec<f64>, Vec<f64>)> {
    if window.min == 0 || window.min > window.max {
        return Err(Error::invalid(
            "window",
            format!("need 1 <= min <= max, got [{}, {}]", window.min, window.max),
        ));
    }
    let mut lags = Vec::new();
    let mut logs = Vec::new();
    for (&l, &c) in acf.lags.iter().zip(&acf.values) {
        if l < window.min || l > window.max {
            continue;
        }
        if !(c > 0.0) {
            break;
        }
        lags.push(l as f64);
        logs.push(c.ln());
    }
    if lags.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData {
            needed: MIN_FIT_POINTS,
            got: lags.len(),
        });
    }
    Ok((lags, logs))
}

/// `C(d) ~ amplitude * d^(-exponent) * exp(-d / cutoff)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedPowerLawFit {
    pub amplitude: f64,
    pub exponent: f64,
    /// Infinite when the fitted curvature is not a decay.
    pub cutoff: f64,
    /// RMS residual of `ln C`.
    pub residual: f64,
    pub points: usize,
    /// Largest lag actually used after shrinking.
    pub max_lag: u64,
}

/// Least squares of `ln C` against `1, ln d, d` over the window. The window
/// stops at the first non-positive `C`; fewer than 5 remaining lags is an error.
pub fn fit_truncated_powerlaw(acf: &AcfCurve, window: LagWindow) -> Result<TruncatedPowerLawFit> {
    let (lags, logs) = log_points(acf, window)?;
    let cols = vec![
        vec![1.0; lags.len()],
        lags.iter().map(|d| d.ln()).collect(),
        lags.clone(),
    ];
    let (beta, residual) = least_squares(&cols, &logs)?;
    let cutoff = if beta[2] < 0.0 {
        -1.0 / beta[2]
    } else {
        f64::INFINITY
    };
    Ok(TruncatedPowerLawFit {
        amplitude: beta[0].exp(),
        exponent: -beta[1],
        cutoff,
        residual,
        points: lags.len(),
        max_lag: *lags.last().unwrap() as u64,
    })
}

/// `C(d) ~ amplitude * exp(-d / scale)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialFit {
    pub amplitude: f64,
    pub scale: f64,
    pub residual: f64,
    pub points: usize,
}

/// Log-linear fit over the same points as [`fit_truncated_powerlaw`], so the
/// two residuals are comparable.
pub fn fit_exponential(acf: &AcfCurve, window: LagWindow) -> Result<ExponentialFit> {
    let (lags, logs) = log_points(acf, window)?;
    let cols = vec![vec![1.0; lags.len()], lags.clone()];
    let (beta, residual) = least_squares(&cols, &logs)?;
    Ok(ExponentialFit {
        amplitude: beta[0].exp(),
        scale: if beta[1] < 0.0 {
            -1.0 / beta[1]
        } else {
            f64::INFINITY
        },
        residual,
        points: lags.len(),
    })
}
