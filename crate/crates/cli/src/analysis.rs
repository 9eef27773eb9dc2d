use std::fmt::Display;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use cunning_core::analytic::{fit_iet, log_residual, IetFit, IetFitOptions};
use cunning_core::stats::ingest::read_returns;
use cunning_core::stats::{
    autocorrelation, cumulative_abs_distribution, fit_exponential, fit_truncated_powerlaw,
    iet_distribution, interevent_times, rescaled_histogram, std_dev, tail_exponent, write_iet_csv,
    BinSpec, IetSample, LagWindow, QuantileWindow, Threshold,
};
use cunning_core::ReturnSeries;

use crate::config::{RunConfig, StatsOptions, ThresholdList};
use crate::output::{label, OutDir};
use crate::simulate::{run_model, write_run_manifest};

/// Bins with fewer intervals do not enter the interevent-time fit or its residual.
const MIN_BIN_COUNT: u64 = 20;

/// Series to analyse, each with its file-name suffix, plus the model
/// parameters when they were simulated.
type Inputs = (
    Vec<(String, ReturnSeries)>,
    Option<cunning_core::ModelParams>,
);

/// The given returns file, or one simulated series per configured `tau`.
fn inputs(config: &RunConfig, returns: Option<&Path>, seed: Option<u64>) -> Result<Inputs> {
    match returns {
        Some(path) => {
            let file =
                File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
            let rs = read_returns(BufReader::new(file))
                .with_context(|| format!("in {}", path.display()))?;
            Ok((vec![(String::new(), rs)], None))
        }
        None => {
            let (run, series) = run_model(config, seed)?;
            if series.is_empty() {
                bail!("no configured tau is shorter than the run");
            }
            let named = series
                .into_iter()
                .map(|rs| (format!("_tau{}", rs.tau), rs))
                .collect();
            Ok((named, Some(run.params)))
        }
    }
}

fn report_line<T: Display, E: Display>(
    w: &mut impl Write,
    key: &str,
    value: Result<T, E>,
) -> std::io::Result<()> {
    match value {
        Ok(v) => writeln!(w, "{key} = {v}"),
        Err(e) => writeln!(w, "{key} = unavailable ({e})"),
    }
}

fn write_stats(
    out: &mut OutDir,
    suffix: &str,
    rs: &ReturnSeries,
    opts: &StatsOptions,
) -> Result<()> {
    let returns = rs.returns();
    if returns.len() < 2 {
        bail!("need at least 2 returns, got {}", returns.len());
    }
    let linear = rescaled_histogram(
        &returns,
        &BinSpec::Linear {
            bins: opts.bins,
            range: None,
        },
    )?;
    out.write(&format!("hist{suffix}.csv"), |w| Ok(linear.write_csv(w)?))?;
    let log_spec = BinSpec::Log {
        ratio: opts.log_ratio,
        min: None,
    };
    let log = rescaled_histogram(&returns, &log_spec)?;
    out.write(&format!("hist_log{suffix}.csv"), |w| Ok(log.write_csv(w)?))?;
    let ccdf = cumulative_abs_distribution(&returns)?;
    out.write(&format!("ccdf{suffix}.csv"), |w| Ok(ccdf.write_csv(w)?))?;

    let max_lag = opts.max_lag.min(returns.len() - 1);
    let acf = autocorrelation(&returns, max_lag)?;
    out.write(&format!("acf{suffix}.csv"), |w| Ok(acf.write_csv(w)?))?;
    let abs: Vec<f64> = returns.iter().map(|r| r.abs()).collect();
    let acf_abs = autocorrelation(&abs, max_lag);
    if let Ok(curve) = &acf_abs {
        out.write(&format!("acf_abs{suffix}.csv"), |w| Ok(curve.write_csv(w)?))?;
    }

    let window = QuantileWindow::new(opts.tail_lo, opts.tail_hi)?;
    let lags = LagWindow {
        min: opts.acf_fit_min,
        max: opts.acf_fit_max,
    };
    out.write(&format!("fit{suffix}.txt"), |w| {
        writeln!(w, "returns = {}", returns.len())?;
        writeln!(w, "tau = {}", rs.tau)?;
        writeln!(w, "sigma = {}", std_dev(&returns))?;
        writeln!(w, "tail_window = {}:{}", opts.tail_lo, opts.tail_hi)?;
        for (name, fit) in [
            ("density", tail_exponent(&log, window)),
            ("ccdf", tail_exponent(&ccdf, window)),
        ] {
            report_line(
                w,
                &format!("tail_exponent_{name}"),
                fit.as_ref().map(|f| f.exponent),
            )?;
            report_line(
                w,
                &format!("tail_exponent_{name}_stderr"),
                fit.as_ref().map(|f| f.stderr),
            )?;
            report_line(
                w,
                &format!("tail_power_law_{name}"),
                fit.as_ref().map(|f| f.power_law),
            )?;
        }
        writeln!(w, "acf_noise_band = {}", acf.noise_band())?;
        report_line(w, "acf_lag1", acf.at(1).ok_or("series too short"))?;
        match &acf_abs {
            Ok(curve) => {
                let tpl = fit_truncated_powerlaw(curve, lags);
                report_line(
                    w,
                    "abs_acf_tpl_amplitude",
                    tpl.as_ref().map(|f| f.amplitude),
                )?;
                report_line(w, "abs_acf_tpl_exponent", tpl.as_ref().map(|f| f.exponent))?;
                report_line(w, "abs_acf_tpl_cutoff", tpl.as_ref().map(|f| f.cutoff))?;
                report_line(w, "abs_acf_tpl_residual", tpl.as_ref().map(|f| f.residual))?;
                let exp = fit_exponential(curve, lags);
                report_line(
                    w,
                    "abs_acf_exp_amplitude",
                    exp.as_ref().map(|f| f.amplitude),
                )?;
                report_line(w, "abs_acf_exp_scale", exp.as_ref().map(|f| f.scale))?;
                report_line(w, "abs_acf_exp_residual", exp.as_ref().map(|f| f.residual))?;
            }
            Err(e) => writeln!(w, "abs_acf = unavailable ({e})")?,
        }
        Ok(())
    })
}

pub fn cmd_stats(
    config: &RunConfig,
    out: &mut OutDir,
    returns: Option<&Path>,
    seed: Option<u64>,
) -> Result<()> {
    let (series, params) = inputs(config, returns, seed)?;
    for (suffix, rs) in &series {
        write_stats(out, suffix, rs, &config.stats)?;
    }
    if let Some(p) = params {
        write_run_manifest(out, "stats", &p, "")?;
    }
    Ok(())
}

fn describe_fit(w: &mut impl Write, fit: &IetFit) -> std::io::Result<()> {
    for f in [fit.plus, fit.minus].into_iter().flatten() {
        let branch = f.model.branch().name();
        writeln!(
            w,
            "  {branch}: alpha = {}, tau_q = {}, residual = {}, converged = {}, iterations = {}",
            f.model.alpha(),
            f.model.tau_q(),
            f.residual,
            f.converged,
            f.iterations
        )?;
    }
    Ok(())
}

fn write_iet(
    out: &mut OutDir,
    suffix: &str,
    rs: &ReturnSeries,
    opts: &StatsOptions,
    report: &mut String,
) -> Result<()> {
    let thresholds: Vec<(String, Threshold)> = match &opts.thresholds {
        ThresholdList::Sigma(v) => v
            .iter()
            .map(|&r| (format!("RQ{}", label(r)), Threshold::Sigma(r)))
            .collect(),
        ThresholdList::Absolute(v) => v
            .iter()
            .map(|&q| (format!("Q{}", label(q)), Threshold::Absolute(q)))
            .collect(),
    };
    let fit_options = IetFitOptions {
        bin_ratio: opts.iet_ratio,
        min_count: MIN_BIN_COUNT,
        ..Default::default()
    };
    for (name, threshold) in thresholds {
        let sample: IetSample = interevent_times(rs, threshold, opts.event)?;
        let flag = if sample.is_empty() {
            "empty"
        } else if sample.is_sparse(opts.min_events) {
            "sparse"
        } else {
            "ok"
        };
        report.push_str(&format!(
            "{name}{suffix}: threshold = {}, multiplier = {}, events = {}, intervals = {}, flag = {flag}\n",
            sample.threshold,
            sample.threshold_multiplier,
            sample.events,
            sample.intervals.len()
        ));
        let hist = iet_distribution(&sample, opts.iet_ratio).ok();
        out.write(&format!("iet_{name}{suffix}.csv"), |w| match &hist {
            Some(h) => Ok(write_iet_csv(h, w)?),
            None => Ok(writeln!(w, "dt,density")?),
        })?;
        let fit = if flag == "ok" {
            fit_iet(&sample, &fit_options)
        } else {
            Err(cunning_core::Error::InsufficientData {
                needed: opts.min_events,
                got: sample.events,
            })
        };
        match fit {
            Ok(fit) => {
                let best = *fit.best().expect("fit_iet returns a converged branch");
                out.write(&format!("iet_{name}{suffix}_fit.csv"), |w| {
                    Ok(best.model.write_overlay_csv(&fit.histogram, w)?)
                })?;
                let (rms, bins) = log_residual(&best.model, &fit.histogram, MIN_BIN_COUNT)
                    .map_or((f64::NAN, 0), |r| r);
                let mut text = Vec::new();
                describe_fit(&mut text, &fit)?;
                report.push_str(&String::from_utf8_lossy(&text));
                report.push_str(&format!(
                    "  best = {}, log_rms_residual = {rms} over {bins} bins with >= {MIN_BIN_COUNT} counts\n",
                    best.model.branch().name()
                ));
            }
            Err(e) => {
                out.write(&format!("iet_{name}{suffix}_fit.csv"), |w| {
                    Ok(writeln!(w, "dt,psi,binned")?)
                })?;
                report.push_str(&format!("  fit = unavailable ({e})\n"));
            }
        }
    }
    Ok(())
}

pub fn cmd_iet(
    config: &RunConfig,
    out: &mut OutDir,
    returns: Option<&Path>,
    seed: Option<u64>,
) -> Result<()> {
    let (series, params) = inputs(config, returns, seed)?;
    let mut report = String::new();
    for (suffix, rs) in &series {
        write_iet(out, suffix, rs, &config.stats, &mut report)?;
    }
    out.write("iet_report.txt", |w| Ok(w.write_all(report.as_bytes())?))?;
    if let Some(p) = params {
        write_run_manifest(out, "iet", &p, "")?;
    }
    Ok(())
}
