use std::io::Write;

use anyhow::Result;
use cunning_core::market::build_return_series;
use cunning_core::{simulate, ModelParams, ReturnSeries, TimeSeries};

use crate::config::{describe_model, RunConfig};
use crate::output::OutDir;

/// Runs the configured model. Returns the run and the return series for
/// every configured `tau < T` (other horizons are reported on stderr).
pub fn run_model(config: &RunConfig, seed: Option<u64>) -> Result<(TimeSeries, Vec<ReturnSeries>)> {
    let params = config.model(seed)?;
    let run = simulate(params)?;
    let mut series = Vec::new();
    for &tau in &config.stats.taus {
        if tau >= run.len() as u64 {
            eprintln!("skipping tau = {tau}: needs more than {} rounds", run.len());
            continue;
        }
        series.push(build_return_series(
            &run,
            tau,
            run.params.restart.include_restart_return,
        )?);
    }
    Ok((run, series))
}

pub fn write_run_manifest(
    out: &mut OutDir,
    command: &str,
    params: &ModelParams,
    extra: &str,
) -> Result<()> {
    let files = out.written().join(",");
    out.write("run_manifest.txt", |w| {
        writeln!(w, "command = {command}")?;
        writeln!(w, "seed = {}", params.seed)?;
        write!(w, "{}", describe_model(params))?;
        write!(w, "{extra}")?;
        writeln!(w, "files = {files}")?;
        Ok(())
    })
}

pub fn cmd_simulate(config: &RunConfig, out: &mut OutDir, seed: Option<u64>) -> Result<()> {
    let (run, series) = run_model(config, seed)?;
    out.write("magnetization.csv", |w| {
        writeln!(w, "t,m,restarted")?;
        for r in &run.rounds {
            writeln!(w, "{},{},{}", r.t, r.m, r.restarted as u8)?;
        }
        Ok(())
    })?;
    for rs in &series {
        out.write(&format!("returns_tau{}.csv", rs.tau), |w| {
            Ok(rs.write_csv(w)?)
        })?;
        out.write(&format!("returns_tau{}_excluded.csv", rs.tau), |w| {
            Ok(rs.write_excluded_csv(w)?)
        })?;
    }
    let extra = format!("restarts = {}\n", run.restart_count());
    write_run_manifest(out, "simulate", &run.params, &extra)
}
