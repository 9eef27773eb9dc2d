//! Spin lattice and the asynchronous threshold dynamics.
//!
//! A round is `N` single-site drawings with replacement. Each drawing consumes
//! the random stream in a fixed order: first the site index, then one noise
//! sample. The drawn spin is set to `sgn_q(J * sum_nn s_j + eps)` with
//! `q = lambda * |M|`, and the magnetization is updated immediately.
//! After each round a fully ordered lattice (`|M| = 1`) is re-randomized when
//! restarts are enabled.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::noise::{NoiseSampler, NoiseSpec};

/// Agent position: `-1` short, `0` neutral, `+1` long.
pub type Spin = i8;

/// Three-valued sign with a dead zone: `+1` for `x >= q`, `0` for
/// `-q <= x < q`, `-1` for `x < -q`.
#[inline]
pub fn threshold_sign(x: f64, q: f64) -> Spin {
    (x >= q) as Spin - (x < -q) as Spin
}

/// Which magnetization sets the threshold `lambda * |M|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdMagnetization {
    /// The running value, updated after every single-spin change.
    #[default]
    Running,
    /// The value at the end of the previous round.
    PreviousRound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RestartPolicy {
    pub enabled: bool,
    /// Keep returns whose window contains a restart in the statistics.
    pub include_restart_return: bool,
}

impl Default for RestartPolicy {
    fn default() -> Self {
        RestartPolicy {
            enabled: true,
            include_restart_return: false,
        }
    }
}

/// Full configuration of one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Nearest-neighbour coupling `J`.
    pub coupling: f64,
    /// Threshold coefficient `lambda`.
    pub lambda: f64,
    /// Lattice side `n`; there are `n^2` agents.
    pub side: usize,
    pub noise: NoiseSpec,
    /// Horizon `T` in rounds.
    pub rounds: u64,
    pub seed: u64,
    /// Market depth `Lambda`; `None` means `N`.
    pub market_depth: Option<f64>,
    pub restart: RestartPolicy,
    pub threshold_magnetization: ThresholdMagnetization,
}

impl ModelParams {
    /// `J = 1` on a 32x32 lattice for 10 000 rounds, seed 0, restarts on.
    pub fn new(lambda: f64, noise: NoiseSpec) -> Self {
        ModelParams {
            coupling: 1.0,
            lambda,
            side: 32,
            noise,
            rounds: 10_000,
            seed: 0,
            market_depth: None,
            restart: RestartPolicy::default(),
            threshold_magnetization: ThresholdMagnetization::Running,
        }
    }

    pub fn agents(&self) -> usize {
        self.side * self.side
    }

    pub fn depth(&self) -> f64 {
        self.market_depth.unwrap_or(self.agents() as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.side < 2 {
            return Err(Error::invalid(
                "n",
                format!("must be >= 2, got {}", self.side),
            ));
        }
        if self.side > 1 << 15 {
            return Err(Error::invalid("n", format!("too large: {}", self.side)));
        }
        if self.rounds < 1 {
            return Err(Error::invalid("T", "must be >= 1"));
        }
        if !(self.coupling > 0.0) || !self.coupling.is_finite() {
            return Err(Error::invalid(
                "J",
                format!("must be > 0, got {}", self.coupling),
            ));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid(
                "lambda",
                format!("must be >= 0, got {}", self.lambda),
            ));
        }
        if let Some(depth) = self.market_depth {
            if !(depth > 0.0) || !depth.is_finite() {
                return Err(Error::invalid(
                    "market_depth",
                    format!("must be > 0, got {depth}"),
                ));
            }
        }
        self.noise.validate()
    }
}

/// `n x n` periodic grid of three-state spins with a running magnetization sum.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinLattice {
    side: usize,
    spins: Vec<Spin>,
    neighbors: Vec<[u32; 4]>,
    magnet_sum: i64,
    round_index: u64,
}

fn neighbor_table(side: usize) -> Vec<[u32; 4]> {
    let n = side;
    (0..n * n)
        .map(|i| {
            let (r, c) = (i / n, i % n);
            let up = ((r + n - 1) % n) * n + c;
            let down = ((r + 1) % n) * n + c;
            let left = r * n + (c + n - 1) % n;
            let right = r * n + (c + 1) % n;
            [up as u32, down as u32, left as u32, right as u32]
        })
        .collect()
}

#[inline]
fn draw_spin<R: Rng + ?Sized>(rng: &mut R, mirrored: bool) -> Spin {
    let s = rng.random_range(0..3u32) as Spin - 1;
    if mirrored {
        -s
    } else {
        s
    }
}

impl SpinLattice {
    pub fn from_spins(side: usize, spins: Vec<Spin>) -> Result<Self> {
        if side < 2 {
            return Err(Error::invalid("n", format!("must be >= 2, got {side}")));
        }
        if spins.len() != side * side {
            return Err(Error::invalid(
                "spins",
                format!("expected {} values, got {}", side * side, spins.len()),
            ));
        }
        if let Some(bad) = spins.iter().find(|s| !(-1..=1).contains(*s)) {
            return Err(Error::invalid(
                "spins",
                format!("value {bad} not in {{-1,0,1}}"),
            ));
        }
        let magnet_sum = spins.iter().map(|&s| s as i64).sum();
        Ok(SpinLattice {
            side,
            spins,
            neighbors: neighbor_table(side),
            magnet_sum,
            round_index: 0,
        })
    }

    pub fn uniform(side: usize, spin: Spin) -> Result<Self> {
        Self::from_spins(side, vec![spin; side * side])
    }

    /// Every spin drawn uniformly from `{-1, 0, +1}`.
    pub fn random<R: Rng + ?Sized>(side: usize, rng: &mut R) -> Result<Self> {
        Self::random_inner(side, rng, false)
    }

    fn random_inner<R: Rng + ?Sized>(side: usize, rng: &mut R, mirrored: bool) -> Result<Self> {
        let spins = (0..side * side).map(|_| draw_spin(rng, mirrored)).collect();
        Self::from_spins(side, spins)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn spins(&self) -> &[Spin] {
        &self.spins
    }

    pub fn spin(&self, i: usize) -> Spin {
        self.spins[i]
    }

    pub fn neighbors(&self, i: usize) -> [usize; 4] {
        self.neighbors[i].map(|j| j as usize)
    }

    pub fn magnet_sum(&self) -> i64 {
        self.magnet_sum
    }

    pub fn magnetization(&self) -> f64 {
        self.magnet_sum as f64 / self.spins.len() as f64
    }

    pub fn round_index(&self) -> u64 {
        self.round_index
    }

    /// Sum of spins recomputed from scratch.
    pub fn recount(&self) -> i64 {
        self.spins.iter().map(|&s| s as i64).sum()
    }

    /// All spins `+1` or all `-1`.
    pub fn is_trapped(&self) -> bool {
        self.magnet_sum.unsigned_abs() as usize == self.spins.len()
    }

    #[inline]
    pub fn neighbor_sum(&self, i: usize) -> i32 {
        let [a, b, c, d] = self.neighbors[i];
        self.spins[a as usize] as i32
            + self.spins[b as usize] as i32
            + self.spins[c as usize] as i32
            + self.spins[d as usize] as i32
    }

    /// `J * (sum of the four periodic neighbours) + eps`.
    #[inline]
    pub fn local_field(&self, i: usize, coupling: f64, eps: f64) -> f64 {
        coupling * self.neighbor_sum(i) as f64 + eps
    }

    /// Sets spin `i` and keeps the magnetization sum current. Returns the old value.
    #[inline]
    pub fn set_spin(&mut self, i: usize, spin: Spin) -> Spin {
        let old = self.spins[i];
        self.spins[i] = spin;
        self.magnet_sum += (spin - old) as i64;
        old
    }

    /// Applies the threshold rule to spin `i` against `q = lambda * |M|` with
    /// the current running magnetization.
    pub fn update_spin(&mut self, i: usize, params: &ModelParams, eps: f64) -> Spin {
        let q = params.lambda * self.magnetization().abs();
        let s = threshold_sign(self.local_field(i, params.coupling, eps), q);
        self.set_spin(i, s);
        s
    }

    /// Re-randomizes every spin when the lattice is fully ordered.
    pub fn restart_if_trapped<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        self.restart_inner(rng, false)
    }

    fn restart_inner<R: Rng + ?Sized>(&mut self, rng: &mut R, mirrored: bool) -> bool {
        if !self.is_trapped() {
            return false;
        }
        for s in self.spins.iter_mut() {
            *s = draw_spin(rng, mirrored);
        }
        self.magnet_sum = self.recount();
        true
    }
}

/// State after one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRecord {
    /// Round index, starting at 1.
    pub t: u64,
    /// Magnetization at the end of the round, after any restart.
    pub m: f64,
    pub magnet_sum: i64,
    pub restarted: bool,
    /// Number of drawings that changed a spin value.
    pub flips: u32,
}

/// Magnetization history of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub params: ModelParams,
    pub rounds: Vec<RoundRecord>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn agents(&self) -> usize {
        self.params.agents()
    }

    /// Record of round `t` (1-based).
    pub fn round(&self, t: u64) -> Option<&RoundRecord> {
        if t == 0 {
            return None;
        }
        self.rounds.get(t as usize - 1)
    }

    pub fn magnetizations(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.m).collect()
    }

    pub fn restart_count(&self) -> usize {
        self.rounds.iter().filter(|r| r.restarted).count()
    }
}

/// A running simulation: lattice, parameters and the single random stream.
#[derive(Debug, Clone)]
pub struct Simulation<R = ChaCha8Rng> {
    params: ModelParams,
    lattice: SpinLattice,
    sampler: NoiseSampler,
    rng: R,
    mirrored: bool,
    previous_sum: i64,
    /// `thresholds[k] = lambda * (k / N)`, the threshold at `|sum| = k`.
    thresholds: Vec<f64>,
}

impl Simulation<ChaCha8Rng> {
    /// Validates the parameters and draws the initial configuration from the seed.
    pub fn new(params: ModelParams) -> Result<Self> {
        Self::seeded(params, false)
    }

    /// The same run under global spin reversal: every random spin draw and
    /// every noise draw is negated. The dynamics are odd under this map, so
    /// the trajectory is the exact negation of [`Simulation::new`]'s.
    pub fn mirrored(params: ModelParams) -> Result<Self> {
        Self::seeded(params, true)
    }

    fn seeded(params: ModelParams, mirrored: bool) -> Result<Self> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let lattice = SpinLattice::random_inner(params.side, &mut rng, mirrored)?;
        Ok(Self::assemble(params, lattice, rng, mirrored))
    }
}

impl<R: RngCore> Simulation<R> {
    /// Starts from a given lattice and random stream.
    pub fn with_lattice(params: ModelParams, lattice: SpinLattice, rng: R) -> Result<Self> {
        params.validate()?;
        if lattice.side() != params.side {
            return Err(Error::invalid(
                "n",
                format!(
                    "lattice side {} != params side {}",
                    lattice.side(),
                    params.side
                ),
            ));
        }
        Ok(Self::assemble(params, lattice, rng, false))
    }

    fn assemble(params: ModelParams, lattice: SpinLattice, rng: R, mirrored: bool) -> Self {
        let sampler = params.noise.sampler();
        let previous_sum = lattice.magnet_sum();
        let n = lattice.len();
        let thresholds = (0..=n)
            .map(|k| params.lambda * (k as f64 / n as f64))
            .collect();
        Simulation {
            params,
            lattice,
            sampler,
            rng,
            mirrored,
            previous_sum,
            thresholds,
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn lattice(&self) -> &SpinLattice {
        &self.lattice
    }

    /// `N` drawings followed by the restart check.
    pub fn run_round(&mut self) -> RoundRecord {
        let n = self.lattice.len();
        let coupling = self.params.coupling;
        let running = self.params.threshold_magnetization == ThresholdMagnetization::Running;
        let fixed_q = self.thresholds[self.previous_sum.unsigned_abs() as usize];
        let mut flips = 0u32;

        for _ in 0..n {
            let i = self.rng.random_range(0..n as u32) as usize;
            let mut eps = self.sampler.sample(&mut self.rng);
            if self.mirrored {
                eps = -eps;
            }
            let q = if running {
                self.thresholds[self.lattice.magnet_sum.unsigned_abs() as usize]
            } else {
                fixed_q
            };
            let s = threshold_sign(self.lattice.local_field(i, coupling, eps), q);
            flips += (self.lattice.set_spin(i, s) != s) as u32;
        }
        debug_assert_eq!(self.lattice.magnet_sum, self.lattice.recount());

        self.lattice.round_index += 1;
        let restarted =
            self.params.restart.enabled && self.lattice.restart_inner(&mut self.rng, self.mirrored);
        self.previous_sum = self.lattice.magnet_sum;
        RoundRecord {
            t: self.lattice.round_index,
            m: self.lattice.magnetization(),
            magnet_sum: self.lattice.magnet_sum,
            restarted,
            flips,
        }
    }

    /// Runs the configured number of rounds.
    pub fn run(mut self) -> TimeSeries {
        let rounds = (0..self.params.rounds).map(|_| self.run_round()).collect();
        assert_eq!(
            self.lattice.magnet_sum,
            self.lattice.recount(),
            "incremental magnetization drifted from the spin sum"
        );
        TimeSeries {
            params: self.params,
            rounds,
        }
    }
}

/// Draws a random initial configuration from the seed and runs `T` rounds.
pub fn simulate(params: ModelParams) -> Result<TimeSeries> {
    Ok(Simulation::new(params)?.run())
}
