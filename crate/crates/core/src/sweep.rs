//! Parallel runs over a grid of `(lambda, K, b, b0)` and phase-diagram slices
//! of the final magnetization.
//!
//! Tasks are numbered point-major: point `p` (lambda outermost, b0
//! innermost) with replica `r` is task `p * replicas + r`. Workers finish
//! tasks in any order, but the sink always receives records in task order,
//! so the output is independent of the worker count.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::lattice::{ModelParams, Simulation};
use crate::noise::NoiseSpec;

/// Values `start, start + step, ...` up to `stop` inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Axis {
    pub fn new(start: f64, stop: f64, step: f64) -> Result<Self> {
        let axis = Axis { start, stop, step };
        axis.validate("axis")?;
        Ok(axis)
    }

    /// A one-value axis.
    pub fn single(value: f64) -> Self {
        Axis {
            start: value,
            stop: value,
            step: 1.0,
        }
    }

    fn validate(&self, name: &'static str) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::invalid(
                name,
                format!("step must be > 0, got {}", self.step),
            ));
        }
        if !(self.start.is_finite() && self.stop.is_finite() && self.start <= self.stop) {
            return Err(Error::invalid(
                name,
                format!("need start <= stop, got {}..{}", self.start, self.stop),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len())
            .map(|k| self.start + self.step * k as f64)
            .collect()
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.step)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub lambda: Axis,
    pub k: Axis,
    pub b: Axis,
    pub b0: Axis,
    /// Rounds per simulation.
    pub rounds: u64,
    pub replicas: u32,
    pub base_seed: u64,
    /// Lattice side `n`.
    pub side: usize,
}

/// One `(lambda, K, b, b0)` combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub lambda: f64,
    pub k: f64,
    pub b: f64,
    pub b0: f64,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        self.lambda.validate("lambda")?;
        self.k.validate("K")?;
        self.b.validate("b")?;
        self.b0.validate("b0")?;
        if self.replicas == 0 {
            return Err(Error::invalid("replicas", "must be >= 1"));
        }
        for p in self.points() {
            self.params(&p, 0)?.validate()?;
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for lambda in self.lambda.values() {
            for k in self.k.values() {
                for b in self.b.values() {
                    for b0 in self.b0.values() {
                        out.push(GridPoint {
                            index: out.len(),
                            lambda,
                            k,
                            b,
                            b0,
                        });
                    }
                }
            }
        }
        out
    }

    /// Number of simulations, points times replicas.
    pub fn tasks(&self) -> usize {
        self.lambda.len() * self.k.len() * self.b.len() * self.b0.len() * self.replicas as usize
    }

    /// Model parameters of one replica at one point.
    pub fn params(&self, point: &GridPoint, replica: u32) -> Result<ModelParams> {
        let noise = NoiseSpec::wm(point.k, point.b, point.b0)?;
        let mut params = ModelParams::new(point.lambda, noise);
        params.side = self.side;
        params.rounds = self.rounds;
        params.seed = point_seed(self.base_seed, point.index, replica);
        Ok(params)
    }

    /// One-line description used to match a manifest to its grid.
    pub fn spec_line(&self) -> String {
        format!(
            "lambda={} K={} b={} b0={} rounds={} replicas={} base_seed={} n={}",
            self.lambda,
            self.k,
            self.b,
            self.b0,
            self.rounds,
            self.replicas,
            self.base_seed,
            self.side
        )
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one simulation, a pure function of its coordinates.
pub fn point_seed(base_seed: u64, point: usize, replica: u32) -> u64 {
    let h = splitmix64(base_seed);
    let h = splitmix64(h ^ point as u64);
    splitmix64(h ^ ((replica as u64) << 32 | 0x5eed))
}

pub const CSV_HEADER: &str = "lambda,K,b,b0,replica,seed,m_final,restarts,wall_ms";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub lambda: f64,
    pub k: f64,
    pub b: f64,
    pub b0: f64,
    pub replica: u32,
    pub seed: u64,
    /// Magnetization after the last round.
    pub m_final: f64,
    pub restarts: u64,
    pub wall_ms: u64,
}

impl SweepRecord {
    pub fn write_csv_row<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            self.lambda,
            self.k,
            self.b,
            self.b0,
            self.replica,
            self.seed,
            self.m_final,
            self.restarts,
            self.wall_ms
        )?;
        Ok(())
    }

    pub fn parse_csv_row(line: &str, lineno: usize) -> Result<Self> {
        let err = |message: String| Error::Parse {
            line: lineno,
            message,
        };
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 9 {
            return Err(err(format!("expected 9 fields, got {}", f.len())));
        }
        let real = |k: usize| {
            f[k].parse::<f64>()
                .map_err(|e| err(format!("field {}: {e}", k + 1)))
        };
        let int = |k: usize| {
            f[k].parse::<u64>()
                .map_err(|e| err(format!("field {}: {e}", k + 1)))
        };
        Ok(SweepRecord {
            lambda: real(0)?,
            k: real(1)?,
            b: real(2)?,
            b0: real(3)?,
            replica: int(4)? as u32,
            seed: int(5)?,
            m_final: real(6)?,
            restarts: int(7)?,
            wall_ms: int(8)?,
        })
    }
}

/// Runs one replica at one point. `wall_ms` is zero unless `timing` is set.
pub fn run_point(
    grid: &SweepGrid,
    point: &GridPoint,
    replica: u32,
    timing: bool,
) -> Result<SweepRecord> {
    let params = grid.params(point, replica)?;
    let seed = params.seed;
    let started = Instant::now();
    let mut sim = Simulation::new(params)?;
    let mut restarts = 0;
    let mut m_final = sim.lattice().magnetization();
    for _ in 0..grid.rounds {
        let r = sim.run_round();
        restarts += r.restarted as u64;
        m_final = r.m;
    }
    Ok(SweepRecord {
        lambda: point.lambda,
        k: point.k,
        b: point.b,
        b0: point.b0,
        replica,
        seed,
        m_final,
        restarts,
        wall_ms: if timing {
            started.elapsed().as_millis() as u64
        } else {
            0
        },
    })
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    pub workers: usize,
    /// Record wall-clock time per simulation (makes output non-reproducible).
    pub timing: bool,
    /// Task numbers already done, e.g. from a manifest.
    pub skip: BTreeSet<usize>,
    /// Run at most this many of the remaining tasks (the first ones in task order).
    pub limit: Option<usize>,
}

/// Runs every task not in `options.skip` on up to `options.workers` threads
/// and hands `(task, record)` to `sink` in increasing task order. The first
/// simulation or sink error stops the sweep and is returned; records already
/// passed to the sink stay valid.
pub fn run_sweep<F>(grid: &SweepGrid, options: &SweepOptions, mut sink: F) -> Result<()>
where
    F: FnMut(usize, SweepRecord) -> Result<()>,
{
    grid.validate()?;
    if options.workers == 0 {
        return Err(Error::invalid("workers", "must be >= 1"));
    }
    let points = grid.points();
    let replicas = grid.replicas as usize;
    let mut todo: Vec<usize> = (0..grid.tasks())
        .filter(|t| !options.skip.contains(t))
        .collect();
    if let Some(limit) = options.limit {
        todo.truncate(limit);
    }
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<(usize, Result<SweepRecord>)>();

    std::thread::scope(|scope| {
        for _ in 0..options.workers.min(todo.len()) {
            let tx = tx.clone();
            let (todo, points, next, abort) = (&todo, &points, &next, &abort);
            scope.spawn(move || loop {
                if abort.load(Ordering::Relaxed) {
                    break;
                }
                let slot = next.fetch_add(1, Ordering::Relaxed);
                let Some(&task) = todo.get(slot) else {
                    break;
                };
                let point = &points[task / replicas];
                let record = run_point(grid, point, (task % replicas) as u32, options.timing);
                if tx.send((task, record)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut pending: BTreeMap<usize, SweepRecord> = BTreeMap::new();
        let mut cursor = 0;
        let mut outcome = Ok(());
        for (task, record) in rx.iter() {
            match record {
                Ok(r) => {
                    pending.insert(task, r);
                }
                Err(e) => {
                    outcome = Err(e);
                    break;
                }
            }
            while cursor < todo.len() {
                let Some(r) = pending.remove(&todo[cursor]) else {
                    break;
                };
                if let Err(e) = sink(todo[cursor], r) {
                    outcome = Err(e);
                    break;
                }
                cursor += 1;
            }
            if outcome.is_err() {
                break;
            }
        }
        if outcome.is_err() {
            abort.store(true, Ordering::Relaxed);
        }
        outcome
    })
}

/// Final magnetization over the `(b, b0)` plane at fixed `K` and `lambda`:
/// `cells[i][j]` belongs to `b_values[i]`, `b0_values[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceMatrix {
    pub k: f64,
    pub lambda: f64,
    pub b_values: Vec<f64>,
    pub b0_values: Vec<f64>,
    /// `None` where no record covers the point.
    pub cells: Vec<Vec<Option<f64>>>,
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// A single record per point gives its raw `M_T`; several replicas give the
/// mean of `|M_T|`.
pub fn slice(
    records: &[SweepRecord],
    k: f64,
    lambda: f64,
    b_axis: &Axis,
    b0_axis: &Axis,
) -> SliceMatrix {
    let b_values = b_axis.values();
    let b0_values = b0_axis.values();
    let cells = b_values
        .iter()
        .map(|&b| {
            b0_values
                .iter()
                .map(|&b0| {
                    let ms: Vec<f64> = records
                        .iter()
                        .filter(|r| {
                            same(r.k, k) && same(r.lambda, lambda) && same(r.b, b) && same(r.b0, b0)
                        })
                        .map(|r| r.m_final)
                        .collect();
                    match ms.len() {
                        0 => None,
                        1 => Some(ms[0]),
                        n => Some(ms.iter().map(|m| m.abs()).sum::<f64>() / n as f64),
                    }
                })
                .collect()
        })
        .collect();
    SliceMatrix {
        k,
        lambda,
        b_values,
        b0_values,
        cells,
    }
}

impl SliceMatrix {
    pub fn get(&self, b_index: usize, b0_index: usize) -> Option<f64> {
        self.cells[b_index][b0_index]
    }

    /// CSV with header `b\b0,<b0 values>` and one row per `b`; gaps are empty fields.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "b\\b0")?;
        for b0 in &self.b0_values {
            write!(w, ",{b0}")?;
        }
        writeln!(w)?;
        for (b, row) in self.b_values.iter().zip(&self.cells) {
            write!(w, "{b}")?;
            for cell in row {
                match cell {
                    Some(m) => write!(w, ",{m}")?,
                    None => write!(w, ",")?,
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

const MANIFEST_TITLE: &str = "# sweep manifest v1";

/// Grid description plus the log of completed tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub spec: String,
    pub completed: BTreeSet<usize>,
}

impl Manifest {
    pub fn new(grid: &SweepGrid) -> Self {
        Manifest {
            spec: grid.spec_line(),
            completed: BTreeSet::new(),
        }
    }

    /// Header lines; completion lines `done <task>` are appended after them.
    pub fn header(&self) -> String {
        format!("{MANIFEST_TITLE}\ngrid {}\n", self.spec)
    }

    pub fn done_line(task: usize) -> String {
        format!("done {task}\n")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let err = |line: usize, message: &str| Error::Parse {
            line: line + 1,
            message: message.to_string(),
        };
        match lines.next() {
            Some((_, MANIFEST_TITLE)) => {}
            _ => return Err(err(0, "not a sweep manifest")),
        }
        let spec = match lines.next() {
            Some((_, l)) if l.starts_with("grid ") => l["grid ".len()..].to_string(),
            _ => return Err(err(1, "missing grid line")),
        };
        let mut completed = BTreeSet::new();
        for (k, line) in lines {
            let task = line
                .strip_prefix("done ")
                .and_then(|t| t.parse::<usize>().ok())
                .ok_or_else(|| err(k, "expected `done <task>`"))?;
            if !completed.insert(task) {
                return Err(err(k, "task listed twice"));
            }
        }
        Ok(Manifest { spec, completed })
    }

    /// Checks that the manifest was written for `grid` and that its tasks
    /// exist and form a prefix of the task order.
    pub fn check(&self, grid: &SweepGrid) -> Result<()> {
        if self.spec != grid.spec_line() {
            return Err(Error::invalid(
                "manifest",
                format!("grid `{}` does not match `{}`", self.spec, grid.spec_line()),
            ));
        }
        if let Some(&last) = self.completed.last() {
            if last >= grid.tasks() || last + 1 != self.completed.len() {
                return Err(Error::invalid(
                    "manifest",
                    "completed tasks are not a prefix of the grid",
                ));
            }
        }
        Ok(())
    }
}
