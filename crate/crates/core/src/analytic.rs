//! Analytic interevent-time law and the incomplete gamma functions behind it.
//!
//! With `u = dt / tau_q` the two branches of the density are
//!
//! ```text
//! plus:  psi(dt) = (alpha / tau_q) u^-(1 + alpha) lower_gamma(1 + alpha, u)
//! minus: psi(dt) = (alpha / tau_q) u^-(1 - alpha) upper_gamma(1 - alpha, u)
//! ```
//!
//! and their distribution functions are
//!
//! ```text
//! plus:  F(u) = 1 - e^-u - u^-alpha lower_gamma(1 + alpha, u)
//! minus: F(u) = 1 - e^-u + u^alpha  upper_gamma(1 - alpha, u)
//! ```
//!
//! The minus branch is a normalized density only for `alpha < 1`.
//!
//! Empirical interval `k` (an integer number of rounds) is matched to the
//! continuous interval `(k - 1, k]`, so an integer bin `[a, b)` carries the
//! model mass `F(b - 1) - F(a - 1)`.

use std::io::Write;

use argmin::core::{CostFunction, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;

use crate::error::{Error, Result};
use crate::stats::{iet_distribution, Histogram, IetSample};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Gamma(a)` for `a > 0` (Lanczos approximation).
pub fn ln_gamma(a: f64) -> f64 {
    if a < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * a).sin()).ln() - ln_gamma(1.0 - a);
    }
    let x = a - 1.0;
    let mut sum = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        sum += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + sum.ln()
}

/// `Gamma(a)` for `a > 0`.
pub fn gamma(a: f64) -> f64 {
    ln_gamma(a).exp()
}

const MAX_TERMS: usize = 100_000;
const TINY: f64 = 1e-300;

fn check_domain(a: f64, x: f64) -> Result<()> {
    if a > 0.0 && a.is_finite() && x >= 0.0 && !x.is_nan() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "incomplete gamma needs a > 0, x >= 0; got a={a}, x={x}"
        )))
    }
}

/// `x^a e^-x`.
fn prefactor(a: f64, x: f64) -> f64 {
    (a * x.ln() - x).exp()
}

/// Power series for the lower function, good for `x < a + 1`.
fn lower_series(a: f64, x: f64) -> Result<f64> {
    let mut term = 1.0 / a;
    let mut sum = term;
    for n in 1..MAX_TERMS {
        term *= x / (a + n as f64);
        sum += term;
        if term.abs() < sum.abs() * f64::EPSILON {
            return Ok(sum * prefactor(a, x));
        }
    }
    Err(Error::NoConvergence {
        what: "incomplete gamma series",
        iterations: MAX_TERMS,
    })
}

/// Continued fraction (modified Lentz) for the upper function, good for `x >= a + 1`.
fn upper_fraction(a: f64, x: f64) -> Result<f64> {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_TERMS {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < f64::EPSILON {
            return Ok(h * prefactor(a, x));
        }
    }
    Err(Error::NoConvergence {
        what: "incomplete gamma continued fraction",
        iterations: MAX_TERMS,
    })
}

/// `(lower, upper)` incomplete gamma values; the smaller-error one is computed
/// directly and the other as its complement in `Gamma(a)`.
fn incomplete_pair(a: f64, x: f64) -> Result<(f64, f64)> {
    check_domain(a, x)?;
    let full = gamma(a);
    if x == 0.0 {
        return Ok((0.0, full));
    }
    if x.is_infinite() {
        return Ok((full, 0.0));
    }
    if x < a + 1.0 {
        let lower = lower_series(a, x)?;
        Ok((lower, full - lower))
    } else {
        let upper = upper_fraction(a, x)?;
        Ok((full - upper, upper))
    }
}

/// `lower_gamma(a, x) = int_0^x t^(a-1) e^-t dt`.
pub fn lower_incomplete_gamma(a: f64, x: f64) -> Result<f64> {
    incomplete_pair(a, x).map(|p| p.0)
}

/// `upper_gamma(a, x) = int_x^inf t^(a-1) e^-t dt`.
pub fn upper_incomplete_gamma(a: f64, x: f64) -> Result<f64> {
    incomplete_pair(a, x).map(|p| p.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn name(self) -> &'static str {
        match self {
            Branch::Plus => "plus",
            Branch::Minus => "minus",
        }
    }
}

/// Parameters of the interevent-time law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IetModel {
    alpha: f64,
    tau_q: f64,
    branch: Branch,
}

impl IetModel {
    pub fn new(alpha: f64, tau_q: f64, branch: Branch) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid("alpha", format!("must be > 0, got {alpha}")));
        }
        if branch == Branch::Minus && alpha >= 1.0 {
            return Err(Error::invalid(
                "alpha",
                format!("minus branch is normalizable only for alpha < 1, got {alpha}"),
            ));
        }
        if !(tau_q > 0.0 && tau_q.is_finite()) {
            return Err(Error::invalid("tau_q", format!("must be > 0, got {tau_q}")));
        }
        Ok(IetModel {
            alpha,
            tau_q,
            branch,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tau_q(&self) -> f64 {
        self.tau_q
    }

    pub fn branch(&self) -> Branch {
        self.branch
    }

    fn check_dt(dt: f64) -> Result<f64> {
        if dt >= 0.0 && !dt.is_nan() {
            Ok(dt)
        } else {
            Err(Error::Domain(format!(
                "interevent time must be >= 0, got {dt}"
            )))
        }
    }

    /// Density at `dt > 0` rounds.
    pub fn psi(&self, dt: f64) -> Result<f64> {
        if !(dt > 0.0) {
            return Err(Error::Domain(format!(
                "interevent time must be > 0, got {dt}"
            )));
        }
        let u = dt / self.tau_q;
        let a = self.alpha;
        let core = match self.branch {
            Branch::Plus => u.powf(-(1.0 + a)) * lower_incomplete_gamma(1.0 + a, u)?,
            Branch::Minus => u.powf(-(1.0 - a)) * upper_incomplete_gamma(1.0 - a, u)?,
        };
        Ok(a / self.tau_q * core)
    }

    /// `(F, 1 - F)` at `dt`, each computed without cancellation where possible.
    fn cdf_pair(&self, dt: f64) -> Result<(f64, f64)> {
        let u = Self::check_dt(dt)? / self.tau_q;
        if u == 0.0 {
            return Ok((0.0, 1.0));
        }
        if u.is_infinite() {
            return Ok((1.0, 0.0));
        }
        let a = self.alpha;
        let decay = (-u).exp();
        Ok(match self.branch {
            Branch::Plus => {
                let g = u.powf(-a) * lower_incomplete_gamma(1.0 + a, u)?;
                (-(-u).exp_m1() - g, decay + g)
            }
            Branch::Minus => {
                let g = u.powf(a) * upper_incomplete_gamma(1.0 - a, u)?;
                (-(-u).exp_m1() + g, decay - g)
            }
        })
    }

    pub fn cdf(&self, dt: f64) -> Result<f64> {
        self.cdf_pair(dt).map(|p| p.0)
    }

    pub fn survival(&self, dt: f64) -> Result<f64> {
        self.cdf_pair(dt).map(|p| p.1)
    }

    /// Probability of the continuous interval `(lo, hi]`.
    pub fn mass(&self, lo: f64, hi: f64) -> Result<f64> {
        let (f_lo, s_lo) = self.cdf_pair(lo)?;
        let (f_hi, s_hi) = self.cdf_pair(hi)?;
        Ok(if f_lo < 0.5 { f_hi - f_lo } else { s_lo - s_hi })
    }

    /// Model probability of the integer intervals `a..b`.
    pub fn integer_bin_mass(&self, a: f64, b: f64) -> Result<f64> {
        self.mass(a - 1.0, b - 1.0)
    }

    /// `dt` with `F(dt) = p`, by bisection in `ln dt`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!(
                "probability must be in (0, 1), got {p}"
            )));
        }
        let (mut lo, mut hi) = (self.tau_q.ln() - 50.0, self.tau_q.ln() + 50.0);
        let unbracketed = || Error::NoConvergence {
            what: "quantile bracket",
            iterations: 0,
        };
        while self.cdf(hi.exp())? < p {
            hi += 50.0;
            if hi > 700.0 {
                return Err(unbracketed());
            }
        }
        // Small alpha puts low quantiles many decades below tau_q.
        while self.cdf(lo.exp())? > p {
            lo -= 50.0;
            if lo < -700.0 {
                return Err(unbracketed());
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid.exp())? < p {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-13 {
                break;
            }
        }
        Ok((0.5 * (lo + hi)).exp())
    }

    /// Model density averaged over each integer bin of `hist`.
    pub fn binned_densities(&self, hist: &Histogram) -> Result<Vec<f64>> {
        hist.edges
            .windows(2)
            .map(|w| Ok(self.integer_bin_mass(w[0], w[1])? / (w[1] - w[0])))
            .collect()
    }

    /// CSV `dt,psi,binned` at the bin centres of `hist`: the density itself
    /// and its average over each integer bin, comparable to the histogram.
    pub fn write_overlay_csv<W: Write>(&self, hist: &Histogram, mut w: W) -> Result<()> {
        writeln!(w, "dt,psi,binned")?;
        let binned = self.binned_densities(hist)?;
        for (dt, b) in hist.centers().into_iter().zip(binned) {
            writeln!(w, "{dt},{},{b}", self.psi(dt)?)?;
        }
        Ok(())
    }
}

/// RMS of `ln(empirical) - ln(model)` over bins of `hist` holding at least
/// `min_count` intervals. Returns the residual and the number of bins used.
pub fn log_residual(model: &IetModel, hist: &Histogram, min_count: u64) -> Result<(f64, usize)> {
    let model_d = model.binned_densities(hist)?;
    let emp = hist.densities();
    let mut sse = 0.0;
    let mut used = 0;
    for k in 0..hist.bins() {
        if hist.counts[k] < min_count.max(1) {
            continue;
        }
        if !(model_d[k] > 0.0) {
            return Err(Error::Domain(format!("model density vanishes in bin {k}")));
        }
        sse += (emp[k].ln() - model_d[k].ln()).powi(2);
        used += 1;
    }
    if used == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    Ok(((sse / used as f64).sqrt(), used))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IetFitOptions {
    /// Geometric ratio of the integer log bins.
    pub bin_ratio: f64,
    /// Nelder-Mead iteration cap per start.
    pub max_iters: u64,
    /// Bins with fewer intervals are left out of the objective, unless that
    /// leaves fewer than three bins; then every non-empty bin is used.
    pub min_count: u64,
}

impl Default for IetFitOptions {
    fn default() -> Self {
        IetFitOptions {
            bin_ratio: 1.25,
            max_iters: 2_000,
            min_count: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchFit {
    pub model: IetModel,
    /// RMS log residual over the bins the fit used.
    pub residual: f64,
    pub converged: bool,
    pub iterations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IetFit {
    pub plus: Option<BranchFit>,
    pub minus: Option<BranchFit>,
    /// Binned empirical density the fits were made against.
    pub histogram: Histogram,
}

impl IetFit {
    /// The converged branch with the smaller residual.
    pub fn best(&self) -> Option<&BranchFit> {
        [self.plus.as_ref(), self.minus.as_ref()]
            .into_iter()
            .flatten()
            .filter(|f| f.converged)
            .min_by(|a, b| a.residual.total_cmp(&b.residual))
    }
}

pub const MIN_FIT_INTERVALS: usize = 20;
const PENALTY: f64 = 1e6;

struct BinnedObjective<'a> {
    branch: Branch,
    edges: &'a [f64],
    log_density: Vec<(usize, f64)>,
}

impl BinnedObjective<'_> {
    fn model(&self, p: &[f64]) -> Option<IetModel> {
        let alpha = match self.branch {
            Branch::Plus => p[0].exp(),
            Branch::Minus => 1.0 / (1.0 + (-p[0]).exp()),
        };
        IetModel::new(alpha, p[1].exp(), self.branch).ok()
    }

    fn mean_sq_error(&self, model: &IetModel) -> Option<f64> {
        let mut sse = 0.0;
        for &(k, emp) in &self.log_density {
            let (a, b) = (self.edges[k], self.edges[k + 1]);
            let m = model.integer_bin_mass(a, b).ok()? / (b - a);
            if !(m > 0.0) || !m.is_finite() {
                return None;
            }
            sse += (emp - m.ln()).powi(2);
        }
        Some(sse / self.log_density.len() as f64)
    }
}

impl CostFunction for &BinnedObjective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self
            .model(p)
            .and_then(|m| self.mean_sq_error(&m))
            .unwrap_or(PENALTY))
    }
}

fn fit_branch(
    hist: &Histogram,
    branch: Branch,
    median: f64,
    options: &IetFitOptions,
) -> Option<BranchFit> {
    let densities = hist.densities();
    let select = |min: u64| -> Vec<(usize, f64)> {
        (0..hist.bins())
            .filter(|&k| hist.counts[k] >= min.max(1))
            .map(|k| (k, densities[k].ln()))
            .collect()
    };
    let mut log_density = select(options.min_count);
    if log_density.len() < 3 {
        log_density = select(1);
    }
    let objective = BinnedObjective {
        branch,
        edges: &hist.edges,
        log_density,
    };
    let alphas: &[f64] = match branch {
        Branch::Plus => &[0.5, 1.0, 2.0],
        Branch::Minus => &[0.3, 0.7],
    };
    let mut best: Option<BranchFit> = None;
    for &alpha in alphas {
        for scale in [1.0 / 3.0, 1.0, 3.0] {
            let a0 = match branch {
                Branch::Plus => alpha.ln(),
                Branch::Minus => (alpha / (1.0 - alpha)).ln(),
            };
            let t0 = (median * scale).max(1e-3).ln();
            let simplex = vec![vec![a0, t0], vec![a0 + 0.5, t0], vec![a0, t0 + 0.5]];
            let Ok(solver) = NelderMead::new(simplex).with_sd_tolerance(1e-12) else {
                continue;
            };
            let Ok(result) = Executor::new(&objective, solver)
                .configure(|s| s.max_iters(options.max_iters))
                .run()
            else {
                continue;
            };
            let state = result.state();
            let Some(p) = state.get_best_param() else {
                continue;
            };
            let Some(model) = objective.model(p) else {
                continue;
            };
            let Some(sse) = objective.mean_sq_error(&model) else {
                continue;
            };
            let fit = BranchFit {
                model,
                residual: sse.sqrt(),
                converged: matches!(
                    state.get_termination_status(),
                    TerminationStatus::Terminated(TerminationReason::SolverConverged)
                ),
                iterations: state.get_iter(),
            };
            let better = match &best {
                None => true,
                Some(b) => (fit.converged, -fit.residual) > (b.converged, -b.residual),
            };
            if better {
                best = Some(fit);
            }
        }
    }
    best
}

/// Fits both branches to the log-binned interval density by least squares
/// in log space over the well-populated bins, with several Nelder-Mead starts per branch.
/// Fails when fewer than 20 intervals are given or no branch converged.
pub fn fit_iet(sample: &IetSample, options: &IetFitOptions) -> Result<IetFit> {
    let n = sample.intervals.len();
    if n < MIN_FIT_INTERVALS {
        return Err(Error::InsufficientData {
            needed: MIN_FIT_INTERVALS,
            got: n,
        });
    }
    let histogram = iet_distribution(sample, options.bin_ratio)?;
    let mut sorted = sample.intervals.clone();
    sorted.sort_unstable();
    let median = sorted[n / 2] as f64;
    let fit = IetFit {
        plus: fit_branch(&histogram, Branch::Plus, median, options),
        minus: fit_branch(&histogram, Branch::Minus, median, options),
        histogram,
    };
    if fit.best().is_none() {
        return Err(Error::NoConvergence {
            what: "interevent-time fit",
            iterations: options.max_iters as usize,
        });
    }
    Ok(fit)
}
