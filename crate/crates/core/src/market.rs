//! Market observables derived from the magnetization history.
//!
//! The log return over `tau` rounds is the excess demand divided by the
//! market depth: `r_tau(t) = N [M(t) - M(t - tau)] / Lambda`.
//!
//! Restart convention: the record of a round in which the market maker
//! re-randomized the lattice holds the post-restart magnetization. A return
//! `r_tau(t)` is affected by a restart at round `t0` iff `t - tau < t0 <= t`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::lattice::{Spin, TimeSeries};

/// Trade of one agent between two consecutive states: `curr - prev`.
#[inline]
pub fn agent_demand(prev: Spin, curr: Spin) -> i8 {
    curr - prev
}

fn check_window(ts: &TimeSeries, t: u64, tau: u64) -> Result<()> {
    if tau == 0 {
        return Err(Error::invalid("tau", "must be >= 1"));
    }
    if t <= tau || t > ts.len() as u64 {
        return Err(Error::OutOfRange {
            index: t,
            reason: format!("need {tau} < t <= {}", ts.len()),
        });
    }
    Ok(())
}

fn sum_at(ts: &TimeSeries, t: u64) -> i64 {
    ts.rounds[t as usize - 1].magnet_sum
}

/// `D_tau(t) = N [M(t) - M(t - tau)]`.
pub fn excess_demand(ts: &TimeSeries, t: u64, tau: u64) -> Result<f64> {
    check_window(ts, t, tau)?;
    Ok((sum_at(ts, t) - sum_at(ts, t - tau)) as f64)
}

/// `r_tau(t) = D_tau(t) / depth`.
pub fn log_return(ts: &TimeSeries, t: u64, tau: u64, depth: f64) -> Result<f64> {
    if !(depth > 0.0) {
        return Err(Error::invalid(
            "market_depth",
            format!("must be > 0, got {depth}"),
        ));
    }
    Ok(excess_demand(ts, t, tau)? / depth)
}

/// Returns `r_tau(t)` indexed by the round `t` at which the window ends.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub tau: u64,
    pub values: Vec<(u64, f64)>,
    /// Rounds dropped because their window contains a restart.
    pub excluded: Vec<u64>,
}

impl ReturnSeries {
    pub fn new(tau: u64, values: Vec<(u64, f64)>, excluded: Vec<u64>) -> Self {
        ReturnSeries {
            tau,
            values,
            excluded,
        }
    }

    /// A gap-free series `t = 1, 2, ...` of the given returns.
    pub fn from_returns(tau: u64, returns: &[f64]) -> Self {
        let values = returns
            .iter()
            .enumerate()
            .map(|(i, &r)| (i as u64 + 1, r))
            .collect();
        ReturnSeries::new(tau, values, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn returns(&self) -> Vec<f64> {
        self.values.iter().map(|&(_, r)| r).collect()
    }

    pub fn times(&self) -> Vec<u64> {
        self.values.iter().map(|&(t, _)| t).collect()
    }

    /// CSV with header `t,r`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,r")?;
        for &(t, r) in &self.values {
            writeln!(w, "{t},{r}")?;
        }
        Ok(())
    }

    /// CSV with header `t` listing the excluded rounds.
    pub fn write_excluded_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t")?;
        for t in &self.excluded {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }
}

/// Computes `r_tau(t)` for every `t` in `(tau, T]`, using the run's market
/// depth. With `include_restart_return = false` every return whose window
/// contains a restart is moved to `excluded`.
pub fn build_return_series(
    ts: &TimeSeries,
    tau: u64,
    include_restart_return: bool,
) -> Result<ReturnSeries> {
    if tau == 0 {
        return Err(Error::invalid("tau", "must be >= 1"));
    }
    let horizon = ts.len() as u64;
    if tau >= horizon {
        return Err(Error::invalid(
            "tau",
            format!("must be < T = {horizon}, got {tau}"),
        ));
    }
    let depth = ts.params.depth();

    // restarts[t] = number of restarts in rounds 1..=t
    let mut restarts = Vec::with_capacity(ts.len() + 1);
    restarts.push(0u64);
    for r in &ts.rounds {
        restarts.push(restarts.last().unwrap() + r.restarted as u64);
    }

    let mut values = Vec::with_capacity((horizon - tau) as usize);
    let mut excluded = Vec::new();
    for t in tau + 1..=horizon {
        let hit = restarts[t as usize] > restarts[(t - tau) as usize];
        if hit && !include_restart_return {
            excluded.push(t);
            continue;
        }
        let d = (sum_at(ts, t) - sum_at(ts, t - tau)) as f64;
        values.push((t, d / depth));
    }
    Ok(ReturnSeries {
        tau,
        values,
        excluded,
    })
}

/// Log price `ln P(t)` with `ln P(1) = 0`, accumulated from one-round returns
/// (restart jumps included).
pub fn log_price_path(ts: &TimeSeries) -> Vec<(u64, f64)> {
    let depth = ts.params.depth();
    let mut level = 0.0;
    let mut out = Vec::with_capacity(ts.len());
    for (k, r) in ts.rounds.iter().enumerate() {
        if k > 0 {
            level += (r.magnet_sum - ts.rounds[k - 1].magnet_sum) as f64 / depth;
        }
        out.push((r.t, level));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{ModelParams, RoundRecord, Simulation, SpinLattice};
    use crate::noise::NoiseSpec;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(side: usize) -> ModelParams {
        let mut p = ModelParams::new(1.0, NoiseSpec::wm(5.0, 2.0, 0.2).unwrap());
        p.side = side;
        p
    }

    /// Synthetic series from magnetization sums; `restarts` marks rounds.
    fn synthetic(side: usize, sums: &[i64], restarts: &[u64]) -> TimeSeries {
        let n = (side * side) as f64;
        let rounds = sums
            .iter()
            .enumerate()
            .map(|(k, &s)| RoundRecord {
                t: k as u64 + 1,
                m: s as f64 / n,
                magnet_sum: s,
                restarted: restarts.contains(&(k as u64 + 1)),
                flips: 0,
            })
            .collect();
        TimeSeries {
            params: params(side),
            rounds,
        }
    }

    #[test]
    fn agent_demand_examples() {
        assert_eq!(agent_demand(-1, 1), 2);
        assert_eq!(agent_demand(0, -1), -1);
        for s in -1..=1 {
            assert_eq!(agent_demand(s, s), 0);
        }
    }

    #[test]
    fn excess_demand_examples() {
        let ts = synthetic(32, &[256, 512, 512, 1024], &[]);
        assert_eq!(excess_demand(&ts, 3, 1).unwrap(), 0.0);
        assert_eq!(excess_demand(&ts, 2, 1).unwrap(), 256.0);
        assert_eq!(excess_demand(&ts, 3, 2).unwrap(), 256.0);
        assert!(excess_demand(&ts, 1, 1).is_err());
        assert!(excess_demand(&ts, 5, 1).is_err());

        // everyone moves 0 -> +1
        let ts = synthetic(32, &[0, 1024], &[]);
        assert_eq!(excess_demand(&ts, 2, 1).unwrap(), 1024.0);
    }

    #[test]
    fn log_return_scales_with_depth() {
        let ts = synthetic(32, &[256, 512], &[]);
        assert_eq!(log_return(&ts, 2, 1, 1024.0).unwrap(), 0.5 - 0.25);
        assert_eq!(log_return(&ts, 2, 1, 2048.0).unwrap(), 0.125);
        assert!(log_return(&ts, 2, 1, 0.0).is_err());
    }

    #[test]
    fn return_series_without_restarts() {
        let ts = synthetic(4, &[1, 2, 3, 4, 5, 6], &[]);
        let rs = build_return_series(&ts, 2, false).unwrap();
        assert!(rs.excluded.is_empty());
        assert_eq!(rs.len(), 4);
        assert_eq!(rs.times(), vec![3, 4, 5, 6]);
        assert!(build_return_series(&ts, 6, false).is_err());
        assert!(build_return_series(&ts, 0, false).is_err());
    }

    #[test]
    fn restart_window_exclusion() {
        // fully ordered at round 3 (sum 16), restarted to 0
        let ts = synthetic(4, &[8, 14, 0, 2, 3], &[3]);
        let rs = build_return_series(&ts, 1, false).unwrap();
        assert_eq!(rs.excluded, vec![3]);
        assert_eq!(rs.times(), vec![2, 4, 5]);

        let rs = build_return_series(&ts, 2, false).unwrap();
        assert_eq!(rs.excluded, vec![3, 4]);

        // included: the jump shows up as an outlier of size up to N/Lambda (1 + |M_pre|)
        let rs = build_return_series(&ts, 1, true).unwrap();
        let (_, r3) = rs.values[1];
        assert_eq!(r3, -14.0 / 16.0);
        assert!(r3.abs() <= 1.0 + 14.0 / 16.0);
    }

    #[test]
    fn demand_aggregates_to_excess_demand() {
        let p = params(8);
        let rng = ChaCha8Rng::seed_from_u64(17);
        let lattice = SpinLattice::random(8, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut sim = Simulation::with_lattice(p, lattice, rng).unwrap();
        for _ in 0..20 {
            let before = sim.lattice().spins().to_vec();
            let m_before = sim.lattice().magnetization();
            let rec = sim.run_round();
            if rec.restarted {
                continue;
            }
            let demand: i64 = before
                .iter()
                .zip(sim.lattice().spins())
                .map(|(&a, &b)| agent_demand(a, b) as i64)
                .sum();
            assert_eq!(demand as f64, 64.0 * (rec.m - m_before));
        }
    }

    #[test]
    fn price_path_is_cumulative() {
        let ts = synthetic(4, &[0, 4, 2, 2], &[]);
        let path = log_price_path(&ts);
        assert_eq!(path, vec![(1, 0.0), (2, 0.25), (3, 0.125), (4, 0.125)]);
    }

    #[test]
    fn csv_export() {
        let rs = ReturnSeries::new(1, vec![(2, 0.5), (3, -0.25)], vec![4]);
        let mut buf = Vec::new();
        rs.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,r\n2,0.5\n3,-0.25\n");
        let mut buf = Vec::new();
        rs.write_excluded_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t\n4\n");
    }

    proptest! {
        #[test]
        fn returns_are_additive(sums in proptest::collection::vec(-64i64..=64, 8..60), tau in 1u64..4) {
            let ts = synthetic(8, &sums, &[]);
            let t_max = ts.len() as u64;
            for t in (2 * tau + 1)..=t_max {
                let two = log_return(&ts, t, 2 * tau, 64.0).unwrap();
                let one = log_return(&ts, t, tau, 64.0).unwrap()
                    + log_return(&ts, t - tau, tau, 64.0).unwrap();
                prop_assert_eq!(two, one);
            }
        }

        #[test]
        fn returns_ignore_price_level(sums in proptest::collection::vec(-64i64..=64, 4..30), shift in -1000.0f64..1000.0) {
            // r depends on M differences only
            let ts = synthetic(8, &sums, &[]);
            let path = log_price_path(&ts);
            let shifted: Vec<f64> = path.iter().map(|&(_, p)| p + shift).collect();
            for t in 2..=ts.len() as u64 {
                let r = log_return(&ts, t, 1, 64.0).unwrap();
                let from_price = shifted[t as usize - 1] - shifted[t as usize - 2];
                prop_assert!((r - from_price).abs() < 1e-9);
            }
        }
    }
}
