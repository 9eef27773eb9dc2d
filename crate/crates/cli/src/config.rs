//! Flat `key = value` run configuration.
//!
//! Lines are `section.key = value`; `#` starts a comment. Every key must be
//! known and may appear once. Lists are comma-separated; sweep axes are
//! `start:stop:step` or a single value.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use cunning_core::lattice::{RestartPolicy, ThresholdMagnetization};
use cunning_core::stats::EventKind;
use cunning_core::sweep::{Axis, SweepGrid};
use cunning_core::{ModelParams, NoiseSpec};

const KEYS: &[&str] = &[
    "model.J",
    "model.lambda",
    "model.n",
    "model.T",
    "model.seed",
    "model.market_depth",
    "model.restart",
    "model.include_restart_return",
    "model.threshold_magnetization",
    "noise.family",
    "noise.K",
    "noise.b",
    "noise.b0",
    "noise.sigma",
    "noise.step",
    "noise.exponent",
    "noise.scale",
    "stats.tau",
    "stats.threshold",
    "stats.R_Q",
    "stats.Q",
    "stats.event",
    "stats.bins",
    "stats.log_ratio",
    "stats.max_lag",
    "stats.acf_fit_min",
    "stats.acf_fit_max",
    "stats.tail_lo",
    "stats.tail_hi",
    "stats.iet_ratio",
    "stats.min_events",
    "sweep.lambda",
    "sweep.K",
    "sweep.b",
    "sweep.b0",
    "sweep.T",
    "sweep.n",
    "sweep.replicas",
    "sweep.seed",
    "sweep.workers",
    "sweep.timing",
    "output.dir",
];

/// Raw key-value pairs with the line each came from.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (usize, String)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (k, line) in text.lines().enumerate() {
            let lineno = k + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| anyhow!("line {lineno}: expected `key = value`"))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                bail!("line {lineno}: unknown key `{key}`");
            }
            if entries
                .insert(key.to_string(), (lineno, value.trim().to_string()))
                .is_some()
            {
                bail!("line {lineno}: key `{key}` given twice");
            }
        }
        Ok(RawConfig { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.entries.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("line {line}: `{key}`: cannot parse `{v}`: {e}")),
        }
    }

    fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some((line, v)) = self.raw(key) else {
            return Ok(None);
        };
        let items = v
            .split(',')
            .map(|item| {
                item.trim().parse().map_err(|e| {
                    anyhow!("line {line}: `{key}`: cannot parse `{}`: {e}", item.trim())
                })
            })
            .collect::<Result<Vec<T>>>()?;
        if items.is_empty() {
            bail!("line {line}: `{key}` is empty");
        }
        Ok(Some(items))
    }

    fn axis(&self, key: &str, default: Axis) -> Result<Axis> {
        let Some((line, v)) = self.raw(key) else {
            return Ok(default);
        };
        let parts = v
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| anyhow!("line {line}: `{key}`: cannot parse `{v}`: {e}"))?;
        let axis = match parts.as_slice() {
            [x] => Ok(Axis::single(*x)),
            [start, stop, step] => Axis::new(*start, *stop, *step),
            _ => bail!("line {line}: `{key}`: expected `start:stop:step` or a single value"),
        };
        axis.map_err(|e| anyhow!("line {line}: `{key}`: {e}"))
    }

    /// Wraps a validation failure with the offending key and line.
    fn blame(&self, key: &str, err: impl std::fmt::Display) -> anyhow::Error {
        match self.raw(key) {
            Some((line, _)) => anyhow!("line {line}: `{key}`: {err}"),
            None => anyhow!("`{key}`: {err}"),
        }
    }
}

/// Options of the statistics and interevent-time commands.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsOptions {
    pub taus: Vec<u64>,
    pub thresholds: ThresholdList,
    pub event: EventKind,
    pub bins: usize,
    pub log_ratio: f64,
    pub max_lag: usize,
    pub acf_fit_min: u64,
    pub acf_fit_max: u64,
    pub tail_lo: f64,
    pub tail_hi: f64,
    pub iet_ratio: f64,
    pub min_events: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdList {
    /// Multiples of the return standard deviation.
    Sigma(Vec<f64>),
    /// Absolute return levels.
    Absolute(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    raw: RawConfig,
    pub stats: StatsOptions,
    pub out_dir: Option<PathBuf>,
}

fn parse_bool(key: &str, v: &str, line: usize) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => bail!("line {line}: `{key}`: expected true or false, got `{v}`"),
    }
}

impl RunConfig {
    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        let thresholds = match raw
            .raw("stats.threshold")
            .map(|(_, v)| v)
            .unwrap_or("sigma")
        {
            "sigma" => {
                if raw.raw("stats.Q").is_some() {
                    return Err(raw.blame("stats.Q", "only used with stats.threshold = absolute"));
                }
                ThresholdList::Sigma(
                    raw.list("stats.R_Q")?
                        .unwrap_or(vec![2.0, 5.0, 10.0, 30.0, 70.0]),
                )
            }
            "absolute" => {
                if raw.raw("stats.R_Q").is_some() {
                    return Err(raw.blame("stats.R_Q", "only used with stats.threshold = sigma"));
                }
                ThresholdList::Absolute(raw.list("stats.Q")?.ok_or_else(|| {
                    anyhow!("`stats.Q` is required with stats.threshold = absolute")
                })?)
            }
            other => {
                return Err(raw.blame(
                    "stats.threshold",
                    format!("expected sigma or absolute, got `{other}`"),
                ))
            }
        };
        let values = match &thresholds {
            ThresholdList::Sigma(v) | ThresholdList::Absolute(v) => v,
        };
        if values.iter().any(|&q| !(q > 0.0 && q.is_finite())) {
            let key = match thresholds {
                ThresholdList::Sigma(_) => "stats.R_Q",
                ThresholdList::Absolute(_) => "stats.Q",
            };
            return Err(raw.blame(key, "thresholds must be positive"));
        }
        let event = match raw.raw("stats.event").map(|(_, v)| v).unwrap_or("loss") {
            "loss" => EventKind::Loss,
            "profit" => EventKind::Profit,
            other => {
                return Err(raw.blame(
                    "stats.event",
                    format!("expected loss or profit, got `{other}`"),
                ))
            }
        };
        let taus: Vec<u64> = raw.list("stats.tau")?.unwrap_or(vec![1]);
        if taus.contains(&0) {
            return Err(raw.blame("stats.tau", "must be >= 1"));
        }
        let stats = StatsOptions {
            taus,
            thresholds,
            event,
            bins: raw.get_or("stats.bins", 100)?,
            log_ratio: raw.get_or("stats.log_ratio", 1.25)?,
            max_lag: raw.get_or("stats.max_lag", 1000)?,
            acf_fit_min: raw.get_or("stats.acf_fit_min", 1)?,
            acf_fit_max: raw.get_or("stats.acf_fit_max", 1000)?,
            tail_lo: raw.get_or("stats.tail_lo", 0.99)?,
            tail_hi: raw.get_or("stats.tail_hi", 0.9999)?,
            iet_ratio: raw.get_or("stats.iet_ratio", 1.25)?,
            min_events: raw.get_or("stats.min_events", 20)?,
        };
        if stats.bins == 0 {
            return Err(raw.blame("stats.bins", "must be >= 1"));
        }
        for key in ["stats.log_ratio", "stats.iet_ratio"] {
            let v: f64 = raw.get_or(key, 1.25)?;
            if !(v > 1.0 && v.is_finite()) {
                return Err(raw.blame(key, "must be > 1"));
            }
        }
        if !(0.0 <= stats.tail_lo && stats.tail_lo < stats.tail_hi && stats.tail_hi <= 1.0) {
            return Err(raw.blame("stats.tail_lo", "need 0 <= tail_lo < tail_hi <= 1"));
        }
        if stats.acf_fit_min == 0 || stats.acf_fit_min > stats.acf_fit_max {
            return Err(raw.blame("stats.acf_fit_min", "need 1 <= acf_fit_min <= acf_fit_max"));
        }
        let out_dir = raw.get::<PathBuf>("output.dir")?;
        Ok(RunConfig {
            raw,
            stats,
            out_dir,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = RawConfig::load(path)?;
        Self::from_raw(raw).with_context(|| format!("in config {}", path.display()))
    }

    /// Noise law; Weierstrass-Mandelbrot with `K = 5, b = 2, b0 = 0.2` unless
    /// configured otherwise. The Gaussian and Pareto laws have no defaults.
    pub fn noise(&self) -> Result<NoiseSpec> {
        let raw = &self.raw;
        let family = match raw.raw("noise.family").map(|(_, v)| v).unwrap_or("wm") {
            "gaussian" => "gauss",
            "gaussian_discrete" => "dgauss",
            other => other,
        };
        let required = |key: &str| -> Result<f64> {
            raw.get(key)?
                .ok_or_else(|| anyhow!("`{key}` is required for noise.family = {family}"))
        };
        let used: &[&str] = match family {
            "wm" => &["noise.K", "noise.b", "noise.b0"],
            "gauss" => &["noise.sigma"],
            "dgauss" => &["noise.sigma", "noise.step"],
            "pareto" => &["noise.exponent", "noise.scale"],
            other => {
                return Err(raw.blame(
                    "noise.family",
                    format!("expected wm, gauss, dgauss or pareto, got `{other}`"),
                ))
            }
        };
        for key in [
            "noise.K",
            "noise.b",
            "noise.b0",
            "noise.sigma",
            "noise.step",
            "noise.exponent",
            "noise.scale",
        ] {
            if raw.raw(key).is_some() && !used.contains(&key) {
                return Err(raw.blame(key, format!("not a parameter of noise.family = {family}")));
            }
        }
        let spec = match family {
            "wm" => NoiseSpec::wm(
                raw.get_or("noise.K", 5.0)?,
                raw.get_or("noise.b", 2.0)?,
                raw.get_or("noise.b0", 0.2)?,
            ),
            "gauss" => Ok(NoiseSpec::GaussianContinuous {
                sigma: required("noise.sigma")?,
            }),
            "dgauss" => Ok(NoiseSpec::GaussianDiscrete {
                sigma: required("noise.sigma")?,
                step: required("noise.step")?,
            }),
            _ => Ok(NoiseSpec::ParetoContinuous {
                exponent: required("noise.exponent")?,
                scale: required("noise.scale")?,
            }),
        };
        let spec = spec.map_err(|e| anyhow!("noise: {e}"))?;
        spec.validate().map_err(|e| anyhow!("noise: {e}"))?;
        Ok(spec)
    }

    /// Parameters of a single simulation; `model.lambda` is required.
    pub fn model(&self, seed_override: Option<u64>) -> Result<ModelParams> {
        let raw = &self.raw;
        let lambda: f64 = raw
            .get("model.lambda")?
            .ok_or_else(|| anyhow!("`model.lambda` is required"))?;
        let mut p = ModelParams::new(lambda, self.noise()?);
        p.coupling = raw.get_or("model.J", 1.0)?;
        p.side = raw.get_or("model.n", 32)?;
        p.rounds = raw.get_or("model.T", 10_000)?;
        p.seed = seed_override.unwrap_or(raw.get_or("model.seed", 0)?);
        p.market_depth = raw.get("model.market_depth")?;
        let flag = |key: &str, default: bool| -> Result<bool> {
            match raw.raw(key) {
                Some((line, v)) => parse_bool(key, v, line),
                None => Ok(default),
            }
        };
        p.restart = RestartPolicy {
            enabled: flag("model.restart", true)?,
            include_restart_return: flag("model.include_restart_return", false)?,
        };
        p.threshold_magnetization = match raw.raw("model.threshold_magnetization").map(|(_, v)| v) {
            None | Some("running") => ThresholdMagnetization::Running,
            Some("previous_round") => ThresholdMagnetization::PreviousRound,
            Some(other) => {
                return Err(raw.blame(
                    "model.threshold_magnetization",
                    format!("expected running or previous_round, got `{other}`"),
                ))
            }
        };
        p.validate().map_err(|e| {
            let key = match &e {
                cunning_core::Error::InvalidParameter { name, .. } => match *name {
                    "J" => "model.J",
                    "lambda" => "model.lambda",
                    "n" => "model.n",
                    "T" => "model.T",
                    "market_depth" => "model.market_depth",
                    _ => "model",
                },
                _ => "model",
            };
            raw.blame(key, e)
        })?;
        Ok(p)
    }

    /// Sweep grid: the full default axes at `T = 10 000` unless configured.
    pub fn sweep_grid(&self, seed_override: Option<u64>) -> Result<SweepGrid> {
        let raw = &self.raw;
        let grid = SweepGrid {
            lambda: raw.axis("sweep.lambda", Axis::new(0.1, 3.9, 0.2)?)?,
            k: raw.axis("sweep.K", Axis::new(1.5, 9.5, 0.5)?)?,
            b: raw.axis("sweep.b", Axis::new(1.2, 4.8, 0.2)?)?,
            b0: raw.axis("sweep.b0", Axis::new(0.1, 1.9, 0.1)?)?,
            rounds: raw.get_or("sweep.T", 10_000)?,
            replicas: raw.get_or("sweep.replicas", 1)?,
            base_seed: seed_override.unwrap_or(raw.get_or("sweep.seed", 0)?),
            side: raw.get_or("sweep.n", 32)?,
        };
        grid.validate().map_err(|e| anyhow!("sweep: {e}"))?;
        Ok(grid)
    }

    pub fn sweep_workers(&self) -> Result<usize> {
        let default = std::thread::available_parallelism().map_or(1, |n| n.get());
        let workers = self.raw.get_or("sweep.workers", default)?;
        if workers == 0 {
            return Err(self.raw.blame("sweep.workers", "must be >= 1"));
        }
        Ok(workers)
    }

    /// Whether sweep records carry wall-clock times; off by default so that
    /// reruns are byte-identical.
    pub fn sweep_timing(&self) -> Result<bool> {
        match self.raw.raw("sweep.timing") {
            Some((line, v)) => parse_bool("sweep.timing", v, line),
            None => Ok(false),
        }
    }
}

/// `key = value` lines describing a model, for run manifests.
pub fn describe_model(p: &ModelParams) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "model.J = {}", p.coupling);
    let _ = writeln!(s, "model.lambda = {}", p.lambda);
    let _ = writeln!(s, "model.n = {}", p.side);
    let _ = writeln!(s, "model.T = {}", p.rounds);
    let _ = writeln!(s, "model.seed = {}", p.seed);
    let _ = writeln!(s, "model.market_depth = {}", p.depth());
    let _ = writeln!(s, "model.restart = {}", p.restart.enabled);
    let _ = writeln!(
        s,
        "model.include_restart_return = {}",
        p.restart.include_restart_return
    );
    let mode = match p.threshold_magnetization {
        ThresholdMagnetization::Running => "running",
        ThresholdMagnetization::PreviousRound => "previous_round",
    };
    let _ = writeln!(s, "model.threshold_magnetization = {mode}");
    match p.noise {
        NoiseSpec::WeierstrassMandelbrot(w) => {
            let _ = writeln!(
                s,
                "noise.family = wm\nnoise.K = {}\nnoise.b = {}\nnoise.b0 = {}",
                w.k(),
                w.b(),
                w.b0()
            );
        }
        NoiseSpec::GaussianContinuous { sigma } => {
            let _ = writeln!(s, "noise.family = gauss\nnoise.sigma = {sigma}");
        }
        NoiseSpec::GaussianDiscrete { sigma, step } => {
            let _ = writeln!(
                s,
                "noise.family = dgauss\nnoise.sigma = {sigma}\nnoise.step = {step}"
            );
        }
        NoiseSpec::ParetoContinuous { exponent, scale } => {
            let _ = writeln!(
                s,
                "noise.family = pareto\nnoise.exponent = {exponent}\nnoise.scale = {scale}"
            );
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(text: &str) -> Result<RunConfig> {
        RunConfig::from_raw(RawConfig::parse(text)?)
    }

    #[test]
    fn defaults_and_overrides() {
        let c = config("model.lambda = 2.2\nmodel.T = 50 # short\n").unwrap();
        let p = c.model(None).unwrap();
        assert_eq!(p.rounds, 50);
        assert_eq!(p.side, 32);
        assert_eq!(p.noise, NoiseSpec::wm(5.0, 2.0, 0.2).unwrap());
        assert_eq!(c.model(Some(9)).unwrap().seed, 9);
        assert_eq!(c.stats.taus, vec![1]);
        assert_eq!(
            c.stats.thresholds,
            ThresholdList::Sigma(vec![2.0, 5.0, 10.0, 30.0, 70.0])
        );
        assert_eq!(c.stats.event, EventKind::Loss);
    }

    #[test]
    fn errors_name_the_key() {
        let msg = |text: &str| match config(text).and_then(|c| c.model(None).map(|_| ())) {
            Err(e) => format!("{e:#}"),
            Ok(()) => panic!("accepted `{text}`"),
        };
        assert!(msg("model.lamda = 1").contains("model.lamda"));
        assert!(msg("model.lambda = abc").contains("model.lambda"));
        assert!(msg("model.lambda = -1").contains("model.lambda"));
        assert!(msg("model.lambda = 1\nmodel.n = 1").contains("model.n"));
        assert!(msg("model.T = 5").contains("model.lambda"));
        assert!(msg("model.lambda = 1\nmodel.lambda = 2").contains("twice"));
        assert!(msg("model.lambda = 1\nnoise.family = gauss").contains("noise.sigma"));
        assert!(
            msg("model.lambda = 1\nnoise.family = gaussian_discrete\nnoise.sigma = 1")
                .contains("noise.step")
        );
        assert!(msg("model.lambda = 1\nnoise.sigma = 1").contains("noise.sigma"));
        assert!(msg("stats.tau = 1,0").contains("stats.tau"));
        assert!(msg("just text").contains("key = value"));
    }

    #[test]
    fn sweep_axes() {
        let c = config("sweep.lambda = 0.3\nsweep.K = 5\nsweep.b = 1.2:4.8:0.9\nsweep.b0 = 0.1 : 1.9 : 0.45\nsweep.replicas = 3").unwrap();
        let g = c.sweep_grid(Some(4)).unwrap();
        assert_eq!(g.b.len(), 5);
        assert_eq!(g.b0.len(), 5);
        assert_eq!(g.tasks(), 75);
        assert_eq!(g.base_seed, 4);
        assert!(!c.sweep_timing().unwrap());
        assert!(config("sweep.b = 1:2").unwrap().sweep_grid(None).is_err());
        let full = config("").unwrap().sweep_grid(None).unwrap();
        assert_eq!(
            (full.lambda.len(), full.k.len(), full.b.len(), full.b0.len()),
            (20, 17, 19, 19)
        );
    }

    #[test]
    fn absolute_thresholds() {
        let c = config("stats.threshold = absolute\nstats.Q = 0.01, 0.02").unwrap();
        assert_eq!(
            c.stats.thresholds,
            ThresholdList::Absolute(vec![0.01, 0.02])
        );
        assert!(config("stats.threshold = absolute").is_err());
        assert!(config("stats.R_Q = 2\nstats.Q = 1").is_err());
    }
}
