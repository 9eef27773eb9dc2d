use std::io::Write;

use crate::error::{Error, Result};
use crate::stats::nonzero_std;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinScale {
    Linear,
    Logarithmic,
}

/// How to lay out histogram bins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BinSpec {
    /// `bins` equal-width bins over `range`, or over the data range when `None`.
    Linear {
        bins: usize,
        range: Option<(f64, f64)>,
    },
    /// Geometric edges `min * ratio^k` over the positive values. `min`
    /// defaults to the smallest positive value.
    Log { ratio: f64, min: Option<f64> },
    /// Geometric edges rounded up to integers, for integer-valued data such
    /// as interevent times. Every bin has integer width >= 1.
    LogInteger { ratio: f64 },
}

impl BinSpec {
    pub const DEFAULT_LOG_RATIO: f64 = 1.25;

    pub fn log() -> Self {
        BinSpec::Log {
            ratio: Self::DEFAULT_LOG_RATIO,
            min: None,
        }
    }
}

/// Bin counts with edges; bins are `[e_i, e_{i+1})`, the last one closed.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Number of binned samples, `sum(counts)`.
    pub total: u64,
    /// Samples that fell outside the edges (or non-positive values on log bins).
    pub outside: u64,
    pub scale: BinScale,
}

fn check_ratio(ratio: f64) -> Result<()> {
    if ratio > 1.0 && ratio.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("ratio", format!("must be > 1, got {ratio}")))
    }
}

impl Histogram {
    pub fn build(data: &[f64], spec: &BinSpec) -> Result<Self> {
        let finite = data.iter().copied().filter(|x| x.is_finite());
        match *spec {
            BinSpec::Linear { bins, range } => {
                if bins == 0 {
                    return Err(Error::invalid("bins", "must be >= 1"));
                }
                let (lo, hi) = match range {
                    Some(r) => r,
                    None => finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| {
                        (a.min(x), b.max(x))
                    }),
                };
                if !(lo < hi) {
                    return Err(Error::invalid("range", format!("empty range [{lo}, {hi}]")));
                }
                let width = (hi - lo) / bins as f64;
                let mut edges: Vec<f64> = (0..=bins).map(|k| lo + width * k as f64).collect();
                edges[bins] = hi;
                Self::from_edges(data, edges, BinScale::Linear)
            }
            BinSpec::Log { ratio, min } => {
                check_ratio(ratio)?;
                let positive = finite.filter(|&x| x > 0.0);
                let (smallest, largest) =
                    positive.fold((f64::INFINITY, 0.0f64), |(a, b), x| (a.min(x), b.max(x)));
                let start = min.unwrap_or(smallest);
                if !(start > 0.0) || !start.is_finite() {
                    return Err(Error::InsufficientData { needed: 1, got: 0 });
                }
                let mut edges = vec![start];
                while *edges.last().unwrap() <= largest {
                    let next = edges.last().unwrap() * ratio;
                    edges.push(next);
                }
                if edges.len() < 2 {
                    edges.push(start * ratio);
                }
                Self::from_edges(data, edges, BinScale::Logarithmic)
            }
            BinSpec::LogInteger { ratio } => {
                check_ratio(ratio)?;
                let positive = finite.filter(|&x| x >= 1.0);
                let (smallest, largest) =
                    positive.fold((f64::INFINITY, 0.0f64), |(a, b), x| (a.min(x), b.max(x)));
                if !smallest.is_finite() {
                    return Err(Error::InsufficientData { needed: 1, got: 0 });
                }
                let mut edges = vec![smallest.floor()];
                while *edges.last().unwrap() <= largest {
                    let last = *edges.last().unwrap();
                    edges.push((last * ratio).ceil().max(last + 1.0));
                }
                Self::from_edges(data, edges, BinScale::Logarithmic)
            }
        }
    }

    /// Counts `data` into the given strictly increasing edges.
    pub fn from_edges(data: &[f64], edges: Vec<f64>, scale: BinScale) -> Result<Self> {
        if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid(
                "edges",
                "need >= 2 strictly increasing edges",
            ));
        }
        let bins = edges.len() - 1;
        let last = edges[bins];
        let mut counts = vec![0u64; bins];
        let mut outside = 0;
        for &x in data {
            if !(x >= edges[0] && x <= last) {
                outside += 1;
                continue;
            }
            let k = edges.partition_point(|&e| e <= x).min(bins) - 1;
            counts[k] += 1;
        }
        let total = counts.iter().sum();
        Ok(Histogram {
            edges,
            counts,
            total,
            outside,
            scale,
        })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Arithmetic bin centres for linear bins, geometric for log bins.
    pub fn centers(&self) -> Vec<f64> {
        self.edges
            .windows(2)
            .map(|w| match self.scale {
                BinScale::Linear => 0.5 * (w[0] + w[1]),
                BinScale::Logarithmic => (w[0] * w[1]).sqrt(),
            })
            .collect()
    }

    /// `count / (total * width)`; sums to one against the bin widths.
    pub fn densities(&self) -> Vec<f64> {
        let total = self.total.max(1) as f64;
        self.counts
            .iter()
            .zip(self.widths())
            .map(|(&c, w)| c as f64 / (total * w))
            .collect()
    }

    /// Fraction of binned samples in each bin.
    pub fn masses(&self) -> Vec<f64> {
        let total = self.total.max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }

    /// CSV `x,density` with `x` the bin centre. Empty bins are written with zero density.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,density")?;
        for (x, d) in self.centers().into_iter().zip(self.densities()) {
            writeln!(w, "{x},{d}")?;
        }
        Ok(())
    }
}

/// Histogram of `r / sigma(r)`. Log bins are laid over `|r| / sigma`, with
/// exact zeros counted as outside.
pub fn rescaled_histogram(returns: &[f64], bins: &BinSpec) -> Result<Histogram> {
    let sigma = nonzero_std(returns)?;
    let scaled: Vec<f64> = match bins {
        BinSpec::Linear { .. } => returns.iter().map(|r| r / sigma).collect(),
        _ => returns.iter().map(|r| r.abs() / sigma).collect(),
    };
    Histogram::build(&scaled, bins)
}

/// Complementary cumulative distribution `P(|r| >= x)` at every distinct `|r|`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ccdf {
    /// Distinct absolute values, increasing.
    pub xs: Vec<f64>,
    /// `P(|r| >= xs[k])`, non-increasing from 1 to `1/total` or above.
    pub probs: Vec<f64>,
    pub total: usize,
}

impl Ccdf {
    /// `P(|r| >= x)` for any `x`.
    pub fn at(&self, x: f64) -> f64 {
        let k = self.xs.partition_point(|&v| v < x);
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,ccdf")?;
        for (x, p) in self.xs.iter().zip(&self.probs) {
            writeln!(w, "{x},{p}")?;
        }
        Ok(())
    }
}

pub fn cumulative_abs_distribution(returns: &[f64]) -> Result<Ccdf> {
    if returns.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let mut abs: Vec<f64> = returns.iter().map(|r| r.abs()).collect();
    if abs.iter().any(|x| x.is_nan()) {
        return Err(Error::invalid("returns", "contains NaN"));
    }
    abs.sort_by(|a, b| a.total_cmp(b));
    let n = abs.len();
    let mut xs = Vec::new();
    let mut probs = Vec::new();
    let mut k = 0;
    while k < n {
        let x = abs[k];
        xs.push(x);
        probs.push((n - k) as f64 / n as f64);
        while k < n && abs[k] == x {
            k += 1;
        }
    }
    Ok(Ccdf {
        xs,
        probs,
        total: n,
    })
}
