use std::io::Write;

use crate::error::{Error, Result};
use crate::market::ReturnSeries;
use crate::stats::histogram::{BinSpec, Histogram};
use crate::stats::nonzero_std;

/// Which side of the return distribution counts as an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EventKind {
    /// `r <= -Q`.
    #[default]
    Loss,
    /// `r >= Q`.
    Profit,
}

/// Event threshold, either as a multiple of the series' standard deviation
/// or as an absolute return level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Sigma(f64),
    Absolute(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IetSample {
    /// `R_Q` for sigma-scaled thresholds, `Q / sigma` for absolute ones.
    pub threshold_multiplier: f64,
    /// `Q` in return units.
    pub threshold: f64,
    pub event_kind: EventKind,
    /// Rounds between consecutive events.
    pub intervals: Vec<u64>,
    /// Number of threshold exceedances.
    pub events: usize,
}

impl IetSample {
    /// No interval could be formed.
    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Fewer than `min_events` exceedances.
    pub fn is_sparse(&self, min_events: usize) -> bool {
        self.events < min_events
    }
}

/// Collects the times between consecutive threshold exceedances. Pairs of
/// events with an excluded round strictly between them are dropped.
pub fn interevent_times(
    rs: &ReturnSeries,
    threshold: Threshold,
    kind: EventKind,
) -> Result<IetSample> {
    let returns = rs.returns();
    let sigma = nonzero_std(&returns)?;
    let (multiplier, q) = match threshold {
        Threshold::Sigma(r) if r > 0.0 && r.is_finite() => (r, r * sigma),
        Threshold::Absolute(q) if q > 0.0 && q.is_finite() => (q / sigma, q),
        _ => {
            return Err(Error::invalid(
                "threshold",
                format!("must be positive, got {threshold:?}"),
            ))
        }
    };
    let hit = |r: f64| match kind {
        EventKind::Loss => r <= -q,
        EventKind::Profit => r >= q,
    };
    let mut excluded = rs.excluded.clone();
    excluded.sort_unstable();

    let mut intervals = Vec::new();
    let mut events = 0;
    let mut last: Option<u64> = None;
    for &(t, r) in &rs.values {
        if !hit(r) {
            continue;
        }
        events += 1;
        if let Some(prev) = last {
            let gaps =
                excluded.partition_point(|&e| e < t) - excluded.partition_point(|&e| e <= prev);
            if gaps == 0 && t > prev {
                intervals.push(t - prev);
            }
        }
        last = Some(t);
    }
    Ok(IetSample {
        threshold_multiplier: multiplier,
        threshold: q,
        event_kind: kind,
        intervals,
        events,
    })
}

/// Density of the intervals on integer-aligned logarithmic bins.
pub fn iet_distribution(sample: &IetSample, ratio: f64) -> Result<Histogram> {
    if sample.intervals.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: sample.intervals.len(),
        });
    }
    let data: Vec<f64> = sample.intervals.iter().map(|&d| d as f64).collect();
    Histogram::build(&data, &BinSpec::LogInteger { ratio })
}

/// CSV `dt,density` of an interval histogram.
pub fn write_iet_csv<W: Write>(hist: &Histogram, mut w: W) -> Result<()> {
    writeln!(w, "dt,density")?;
    for (x, d) in hist.centers().into_iter().zip(hist.densities()) {
        writeln!(w, "{x},{d}")?;
    }
    Ok(())
}
