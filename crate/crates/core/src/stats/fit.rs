use crate::error::{Error, Result};
use crate::stats::histogram::{Ccdf, Histogram};

/// Ordinary least-squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    /// Root-mean-square residual.
    pub rms: f64,
    pub points: usize,
}

pub fn linear_regression(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("ys", "length differs from xs"));
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, got: n });
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if !(sxx > 0.0) {
        return Err(Error::invalid("xs", "all abscissae are equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - intercept - slope * x;
            e * e
        })
        .sum();
    Ok(LinearFit {
        slope,
        intercept,
        slope_stderr: (sse / (nf - 2.0) / sxx).sqrt(),
        rms: (sse / nf).sqrt(),
        points: n,
    })
}

/// Least squares for `y ~ X beta` via modified Gram-Schmidt. Returns the
/// coefficients and the root-mean-square residual.
pub(crate) fn least_squares(columns: &[Vec<f64>], ys: &[f64]) -> Result<(Vec<f64>, f64)> {
    let p = columns.len();
    let n = ys.len();
    if n < p {
        return Err(Error::InsufficientData { needed: p, got: n });
    }
    let mut q: Vec<Vec<f64>> = columns.to_vec();
    let mut r = vec![vec![0.0; p]; p];
    for j in 0..p {
        for i in 0..j {
            let dot: f64 = q[i].iter().zip(&q[j]).map(|(a, b)| a * b).sum();
            r[i][j] = dot;
            let qi = q[i].clone();
            for (v, u) in q[j].iter_mut().zip(&qi) {
                *v -= dot * u;
            }
        }
        let norm = q[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = columns[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 1e-12 * scale) {
            return Err(Error::invalid("design", "columns are linearly dependent"));
        }
        r[j][j] = norm;
        q[j].iter_mut().for_each(|v| *v /= norm);
    }
    let qty: Vec<f64> = q
        .iter()
        .map(|col| col.iter().zip(ys).map(|(a, b)| a * b).sum())
        .collect();
    let mut beta = vec![0.0; p];
    for j in (0..p).rev() {
        let tail: f64 = (j + 1..p).map(|k| r[j][k] * beta[k]).sum();
        beta[j] = (qty[j] - tail) / r[j][j];
    }
    let sse: f64 = (0..n)
        .map(|i| {
            let fitted: f64 = (0..p).map(|j| columns[j][i] * beta[j]).sum();
            (ys[i] - fitted).powi(2)
        })
        .sum();
    Ok((beta, (sse / n as f64).sqrt()))
}

/// Range of cumulative probability `[lo, hi]` selecting the tail to fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileWindow {
    pub lo: f64,
    pub hi: f64,
}

impl QuantileWindow {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::invalid(
                "window",
                format!("need 0 <= lo < hi <= 1, got [{lo}, {hi}]"),
            ));
        }
        Ok(QuantileWindow { lo, hi })
    }

    fn contains(&self, q: f64) -> bool {
        self.lo <= q && q <= self.hi
    }
}

/// A curve decaying in `x` whose log-log slope can be fitted.
pub trait TailCurve {
    /// Points `(x, y, F)` with `F` the cumulative probability below `x`.
    fn tail_points(&self) -> Vec<(f64, f64, f64)>;
}

impl TailCurve for Ccdf {
    fn tail_points(&self) -> Vec<(f64, f64, f64)> {
        self.xs
            .iter()
            .zip(&self.probs)
            .map(|(&x, &p)| (x, p, 1.0 - p))
            .collect()
    }
}

impl TailCurve for Histogram {
    fn tail_points(&self) -> Vec<(f64, f64, f64)> {
        let mut below = 0.0;
        let centers = self.centers();
        let densities = self.densities();
        self.masses()
            .into_iter()
            .enumerate()
            .map(|(k, m)| {
                let point = (centers[k], densities[k], below + 0.5 * m);
                below += m;
                point
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailFit {
    /// Positive decay exponent, `-slope` of the log-log regression.
    pub exponent: f64,
    pub stderr: f64,
    pub points: usize,
    /// Exponents fitted separately on the lower and upper halves (in `ln x`).
    pub lower_exponent: f64,
    pub upper_exponent: f64,
    /// False when the two half-window exponents differ by more than 20%.
    pub power_law: bool,
}

const MIN_TAIL_POINTS: usize = 10;
const MAX_DRIFT: f64 = 0.2;

/// Log-log slope of `curve` over the points whose cumulative probability
/// lies in `window`; points with `x <= 0` or `y <= 0` are skipped.
pub fn tail_exponent<C: TailCurve + ?Sized>(curve: &C, window: QuantileWindow) -> Result<TailFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = curve
        .tail_points()
        .into_iter()
        .filter(|&(x, y, q)| x > 0.0 && y > 0.0 && window.contains(q))
        .map(|(x, y, _)| (x.ln(), y.ln()))
        .unzip();
    if lx.len() < MIN_TAIL_POINTS {
        return Err(Error::InsufficientData {
            needed: MIN_TAIL_POINTS,
            got: lx.len(),
        });
    }
    let fit = linear_regression(&lx, &ly)?;
    let mid = 0.5 * (lx[0] + lx[lx.len() - 1]);
    let split = lx.partition_point(|&x| x < mid).clamp(3, lx.len() - 3);
    let half = |range: std::ops::Range<usize>| {
        linear_regression(&lx[range.clone()], &ly[range]).map(|f| -f.slope)
    };
    let lower = half(0..split)?;
    let upper = half(split..lx.len())?;
    let drift = (upper - lower).abs() / (0.5 * (upper.abs() + lower.abs()));
    Ok(TailFit {
        exponent: -fit.slope,
        stderr: fit.slope_stderr,
        points: fit.points,
        lower_exponent: lower,
        upper_exponent: upper,
        power_law: drift <= MAX_DRIFT,
    })
}
