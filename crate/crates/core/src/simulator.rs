//! Simulation of the log-LIBOR rates under the terminal measure.
//!
//! All schemes share the left-point Euler recursion
//! `z_i(t_{k+1}) = z_i(t_k) + b_i(t_k) dt + lambda_i(t_k) dH_k` and the same
//! driver increments; they differ only in the state the drift reads:
//!
//! * `FullSde`: the current log-rates of the path itself.
//! * `FrozenDrift`: the initial log-rates. This path is also the first-order
//!   Taylor process `TX`.
//! * `StrongTaylor`: the `TX` path of the same driver sample.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::drift::{link_weight, DriftEngine, DriftMethod, StateVector};
use crate::error::{Error, Result};
use crate::levy_driver::{substream, DriverIncrements, DriverSampler};
use crate::term_structure::{validate_setup, MarketSetup, TenorStructure};

pub const DEFAULT_SUBSTEPS: usize = 4;

/// Paths per work item in ensemble runs; block boundaries do not depend on
/// the thread count, so reductions are reproducible.
const BLOCK: u64 = 1024;

/// Time grid on `[0, T_N]` with every tenor date on the grid and equal steps
/// inside each accrual period.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationGrid {
    times: Vec<f64>,
    substeps: usize,
    step_intervals: Vec<usize>,
    tenor_points: Vec<usize>,
}

impl SimulationGrid {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn substeps_per_accrual(&self) -> usize {
        self.substeps
    }

    /// Accrual interval index of each step.
    pub fn step_intervals(&self) -> &[usize] {
        &self.step_intervals
    }

    /// Grid index of `T_i`, `i = 0..=N`.
    pub fn tenor_point(&self, i: usize) -> usize {
        self.tenor_points[i]
    }
}

pub fn build_grid(tenor: &TenorStructure, substeps: usize) -> Result<SimulationGrid> {
    if substeps == 0 {
        return Err(Error::InvalidParameter("substeps per accrual period must be >= 1".into()));
    }
    let n = tenor.n_rates();
    let mut times = Vec::with_capacity(n * substeps + 1);
    let mut step_intervals = Vec::with_capacity(n * substeps);
    let mut tenor_points = Vec::with_capacity(n + 1);
    for k in 0..n {
        tenor_points.push(times.len());
        let (start, dt) = (tenor.date(k), tenor.accrual(k) / substeps as f64);
        for m in 0..substeps {
            times.push(if m == 0 { start } else { start + m as f64 * dt });
            step_intervals.push(k);
        }
    }
    tenor_points.push(times.len());
    times.push(tenor.date(n));
    Ok(SimulationGrid { times, substeps, step_intervals, tenor_points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    FullSde,
    FrozenDrift,
    StrongTaylor,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::FullSde, Scheme::FrozenDrift, Scheme::StrongTaylor];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::FullSde => "full",
            Scheme::FrozenDrift => "frozen",
            Scheme::StrongTaylor => "taylor",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Scheme::FullSde),
            "frozen" => Ok(Scheme::FrozenDrift),
            "taylor" => Ok(Scheme::StrongTaylor),
            other => Err(Error::InvalidParameter(format!("unknown scheme {other:?}"))),
        }
    }
}

/// Access to the fixings `L(T_i, T_l)`, `l >= i`, of one simulated path.
pub trait Fixings {
    fn log_fixing(&self, i: usize, l: usize) -> f64;

    fn fixing(&self, i: usize, l: usize) -> f64 {
        self.log_fixing(i, l).exp()
    }
}

/// Borrowed log-rate matrix of one path: rate-major, one row per rate.
#[derive(Debug, Clone, Copy)]
pub struct PathView<'a> {
    points: usize,
    log_rates: &'a [f64],
    grid: &'a SimulationGrid,
}

impl PathView<'_> {
    /// `z_i` at grid point `t`.
    pub fn log_rate(&self, i: usize, t: usize) -> f64 {
        self.log_rates[(i - 1) * self.points + t]
    }

    /// Every rate `e^z` on the path is finite.
    pub fn is_finite(&self) -> bool {
        let max = f64::MAX.ln();
        self.log_rates.iter().all(|&z| z < max && z > f64::NEG_INFINITY)
    }
}

impl Fixings for PathView<'_> {
    fn log_fixing(&self, i: usize, l: usize) -> f64 {
        self.log_rate(l, self.grid.tenor_point(i))
    }
}

/// One simulated path of every rate under one scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub scheme: Scheme,
    pub grid: Arc<SimulationGrid>,
    /// Rate-major log-LIBOR values, `N x (K + 1)`.
    pub log_rates: Vec<f64>,
    pub seed: u64,
    pub path_index: u64,
    /// False when the path overflowed; such paths are excluded from estimators.
    pub valid: bool,
}

impl PathBundle {
    pub fn n_rates(&self) -> usize {
        self.log_rates.len() / self.grid.times().len()
    }

    pub fn view(&self) -> PathView<'_> {
        PathView { points: self.grid.times().len(), log_rates: &self.log_rates, grid: &self.grid }
    }

    /// Log-rate path of rate `i` over the whole grid.
    pub fn rate_path(&self, i: usize) -> &[f64] {
        let p = self.grid.times().len();
        &self.log_rates[(i - 1) * p..i * p]
    }
}

impl Fixings for PathBundle {
    fn log_fixing(&self, i: usize, l: usize) -> f64 {
        self.view().log_fixing(i, l)
    }
}

/// Which schemes to run on each driver sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SchemeSet {
    pub full: bool,
    pub frozen: bool,
    pub taylor: bool,
}

impl SchemeSet {
    pub fn all() -> Self {
        Self { full: true, frozen: true, taylor: true }
    }

    pub fn only(scheme: Scheme) -> Self {
        let mut s = Self::default();
        s.insert(scheme);
        s
    }

    pub fn insert(&mut self, scheme: Scheme) {
        match scheme {
            Scheme::FullSde => self.full = true,
            Scheme::FrozenDrift => self.frozen = true,
            Scheme::StrongTaylor => self.taylor = true,
        }
    }

    pub fn contains(&self, scheme: Scheme) -> bool {
        match scheme {
            Scheme::FullSde => self.full,
            Scheme::FrozenDrift => self.frozen,
            Scheme::StrongTaylor => self.taylor,
        }
    }
}

/// Per-thread buffers for path generation.
#[derive(Debug, Clone)]
pub struct PathWorkspace {
    pub increments: DriverIncrements,
    frozen: Vec<f64>,
    full: Vec<f64>,
    taylor: Vec<f64>,
    u: Vec<f64>,
}

/// The scheme outputs for one driver sample.
#[derive(Debug, Clone, Copy)]
pub struct PathSet<'a> {
    pub path_index: u64,
    pub full: Option<PathView<'a>>,
    pub frozen: Option<PathView<'a>>,
    pub taylor: Option<PathView<'a>>,
    /// Stage-one path of the Taylor scheme, when it ran.
    pub taylor_stage_one: Option<PathView<'a>>,
}

impl<'a> PathSet<'a> {
    pub fn get(&self, scheme: Scheme) -> Option<PathView<'a>> {
        match scheme {
            Scheme::FullSde => self.full,
            Scheme::FrozenDrift => self.frozen,
            Scheme::StrongTaylor => self.taylor,
        }
    }
}

#[derive(Debug, Clone)]
struct StepData {
    dt: f64,
    interval: usize,
    /// `lambda_i` on the step, index `i - 1`.
    lambdas: Vec<f64>,
    /// Frozen drift `b(t, T_i; X(0))`, index `i - 1`.
    frozen_drift: Vec<f64>,
}

/// Path generator for one validated market setup and grid.
#[derive(Debug, Clone)]
pub struct Simulator {
    setup: MarketSetup,
    grid: Arc<SimulationGrid>,
    drift: DriftEngine,
    sampler: DriverSampler,
    initial_libor: Vec<f64>,
    z0: Vec<f64>,
    steps: Vec<StepData>,
    method: DriftMethod,
}

#[inline(always)]
fn euler(z: f64, b: f64, dt: f64, lambda: f64, dh: f64) -> f64 {
    z + b * dt + lambda * dh
}

impl Simulator {
    pub fn new(setup: &MarketSetup, grid: SimulationGrid) -> Result<Self> {
        Self::with_method(setup, grid, DriftMethod::CumulantExpansion)
    }

    /// Simulator whose drifts come from `method`. Quadrature evaluates the
    /// jump integral afresh on every step and is far slower.
    pub fn with_method(setup: &MarketSetup, grid: SimulationGrid, method: DriftMethod) -> Result<Self> {
        let report = validate_setup(setup);
        if !report.passed() {
            return Err(Error::Validation(report));
        }
        if grid.tenor_points.len() != setup.n_rates() + 1 {
            return Err(Error::InvalidParameter("grid was built for a different tenor".into()));
        }
        let drift = DriftEngine::new(setup)?;
        let initial_libor = setup.initial_libor()?;
        let z0: Vec<f64> = initial_libor.iter().map(|l| l.ln()).collect();
        let n = setup.n_rates();
        let state0 = StateVector::log_libor(z0.clone());
        let frozen_tables = (1..=n)
            .map(|i| drift.deterministic_drift_table_with(i, &state0, &grid, method))
            .collect::<Result<Vec<_>>>()?;
        let steps = grid
            .times
            .windows(2)
            .zip(&grid.step_intervals)
            .enumerate()
            .map(|(k, (w, &interval))| StepData {
                dt: w[1] - w[0],
                interval,
                lambdas: (1..=n).map(|i| setup.vols.level(i, interval)).collect(),
                frozen_drift: frozen_tables.iter().map(|t| t[k]).collect(),
            })
            .collect();
        let sampler = DriverSampler::new(&grid, &setup.driver);
        Ok(Self {
            setup: setup.clone(),
            grid: Arc::new(grid),
            drift,
            sampler,
            initial_libor,
            z0,
            steps,
            method,
        })
    }

    pub fn with_substeps(setup: &MarketSetup, substeps: usize) -> Result<Self> {
        Self::new(setup, build_grid(&setup.tenor, substeps)?)
    }

    pub fn drift_method(&self) -> DriftMethod {
        self.method
    }

    pub fn setup(&self) -> &MarketSetup {
        &self.setup
    }

    pub fn grid(&self) -> &SimulationGrid {
        &self.grid
    }

    pub fn drift_engine(&self) -> &DriftEngine {
        &self.drift
    }

    pub fn initial_libor(&self) -> &[f64] {
        &self.initial_libor
    }

    pub fn n_rates(&self) -> usize {
        self.z0.len()
    }

    /// Frozen drift of rate `i` on each grid step.
    pub fn frozen_drift_table(&self, i: usize) -> Vec<f64> {
        self.steps.iter().map(|s| s.frozen_drift[i - 1]).collect()
    }

    pub fn workspace(&self) -> PathWorkspace {
        let len = self.n_rates() * self.grid.times.len();
        PathWorkspace {
            increments: self.sampler.blank(),
            frozen: vec![0.0; len],
            full: vec![0.0; len],
            taylor: vec![0.0; len],
            u: vec![0.0; self.n_rates()],
        }
    }

    pub fn sample_increments<R: Rng + ?Sized>(&self, rng: &mut R) -> DriverIncrements {
        self.sampler.sample(rng)
    }

    fn points(&self) -> usize {
        self.grid.times.len()
    }

    fn init_rows(&self, out: &mut [f64]) {
        let p = self.points();
        for (row, &z) in out.chunks_mut(p).zip(&self.z0) {
            row[0] = z;
        }
    }

    fn check_increments(&self, inc: &DriverIncrements) -> Result<()> {
        if inc.dh.len() != self.steps.len() {
            return Err(Error::InvalidParameter(format!(
                "driver increments have {} steps, grid has {}",
                inc.dh.len(),
                self.steps.len()
            )));
        }
        Ok(())
    }

    fn run_frozen(&self, dh: &[f64], out: &mut [f64]) {
        let p = self.points();
        self.init_rows(out);
        for (k, step) in self.steps.iter().enumerate() {
            for i in 1..=self.n_rates() {
                let at = (i - 1) * p + k;
                out[at + 1] = if i > step.interval {
                    euler(out[at], step.frozen_drift[i - 1], step.dt, step.lambdas[i - 1], dh[k])
                } else {
                    out[at]
                };
            }
        }
    }

    /// Euler recursion whose drift reads the log-rates in `state` (which may
    /// be `out` itself for the full SDE).
    fn run_state_driven(&self, dh: &[f64], state: Option<&[f64]>, out: &mut [f64], u: &mut [f64]) {
        let p = self.points();
        let n = self.n_rates();
        self.init_rows(out);
        for (k, step) in self.steps.iter().enumerate() {
            {
                let source: &[f64] = match state {
                    Some(s) => s,
                    None => out,
                };
                for (l, w) in u.iter_mut().enumerate() {
                    *w = link_weight(self.drift.accruals()[l], source[l * p + k]);
                }
            }
            for i in 1..=n {
                let at = (i - 1) * p + k;
                out[at + 1] = if i > step.interval {
                    let b = match self.method {
                        DriftMethod::CumulantExpansion => self.drift.drift_on_interval(step.interval, i, u),
                        // A failed evaluation marks the path invalid.
                        DriftMethod::Quadrature => {
                            self.drift.drift_with(step.interval, i, u, self.method).unwrap_or(f64::NAN)
                        }
                    };
                    euler(out[at], b, step.dt, step.lambdas[i - 1], dh[k])
                } else {
                    out[at]
                };
            }
        }
    }

    /// Runs the requested schemes on the increments already in `ws`.
    pub fn run_schemes<'a>(&'a self, schemes: SchemeSet, path_index: u64, ws: &'a mut PathWorkspace) -> PathSet<'a> {
        let PathWorkspace { increments, frozen, full, taylor, u } = ws;
        let dh = &increments.dh;
        if schemes.frozen || schemes.taylor {
            self.run_frozen(dh, frozen);
        }
        if schemes.taylor {
            self.run_state_driven(dh, Some(frozen), taylor, u);
        }
        if schemes.full {
            self.run_state_driven(dh, None, full, u);
        }
        let view = |buf: &'a [f64], on: bool| {
            on.then_some(PathView { points: self.grid.times.len(), log_rates: buf, grid: &self.grid })
        };
        PathSet {
            path_index,
            full: view(full, schemes.full),
            frozen: view(frozen, schemes.frozen),
            taylor: view(taylor, schemes.taylor),
            taylor_stage_one: view(frozen, schemes.taylor),
        }
    }

    /// Samples path `path_index` of `seed` into `ws` and runs the schemes.
    pub fn run_path<'a>(&'a self, schemes: SchemeSet, seed: u64, path_index: u64, ws: &'a mut PathWorkspace) -> PathSet<'a> {
        let mut rng = substream(seed, path_index);
        self.sampler.sample_into(&mut ws.increments, &mut rng);
        self.run_schemes(schemes, path_index, ws)
    }

    /// Simulates one scheme on given driver increments.
    pub fn simulate_with_increments(&self, scheme: Scheme, inc: &DriverIncrements) -> Result<PathBundle> {
        self.check_increments(inc)?;
        let mut ws = self.workspace();
        ws.increments = inc.clone();
        let view = self.run_schemes(SchemeSet::only(scheme), 0, &mut ws).get(scheme).expect("requested");
        Ok(self.bundle(scheme, view, 0, 0))
    }

    fn bundle(&self, scheme: Scheme, view: PathView<'_>, seed: u64, path_index: u64) -> PathBundle {
        PathBundle {
            scheme,
            grid: Arc::clone(&self.grid),
            log_rates: view.log_rates.to_vec(),
            seed,
            path_index,
            valid: view.is_finite(),
        }
    }

    /// Path `path_index` of `seed` under `scheme`.
    pub fn simulate_path(&self, scheme: Scheme, seed: u64, path_index: u64) -> PathBundle {
        let mut ws = self.workspace();
        let view = self.run_path(SchemeSet::only(scheme), seed, path_index, &mut ws).get(scheme).expect("requested");
        self.bundle(scheme, view, seed, path_index)
    }

    /// Paths `0..n_paths` of `seed`, in path order. The result does not
    /// depend on `threads` (0 selects the rayon default).
    pub fn simulate_ensemble(&self, scheme: Scheme, n_paths: u64, seed: u64, threads: usize) -> Result<Vec<PathBundle>> {
        if n_paths == 0 {
            return Err(Error::InvalidParameter("n_paths must be >= 1".into()));
        }
        let blocks = self.map_blocks(n_paths, threads, |range| {
            let mut ws = self.workspace();
            range
                .map(|j| {
                    let view = self.run_path(SchemeSet::only(scheme), seed, j, &mut ws).get(scheme).expect("requested");
                    self.bundle(scheme, view, seed, j)
                })
                .collect::<Vec<_>>()
        })?;
        Ok(blocks.into_iter().flatten().collect())
    }

    /// Runs `per_path` over paths `0..n_paths` in fixed blocks, one
    /// accumulator per block, and merges the blocks in order.
    pub fn accumulate<A, I, F, M>(
        &self,
        schemes: SchemeSet,
        n_paths: u64,
        seed: u64,
        threads: usize,
        init: I,
        per_path: F,
        merge: M,
    ) -> Result<A>
    where
        A: Send,
        I: Fn() -> A + Sync,
        F: Fn(&mut A, &PathSet<'_>) + Sync,
        M: Fn(&mut A, A),
    {
        if n_paths == 0 {
            return Err(Error::InvalidParameter("n_paths must be >= 1".into()));
        }
        let blocks = self.map_blocks(n_paths, threads, |range| {
            let mut ws = self.workspace();
            let mut acc = init();
            for j in range {
                let set = self.run_path(schemes, seed, j, &mut ws);
                per_path(&mut acc, &set);
            }
            acc
        })?;
        let mut iter = blocks.into_iter();
        let mut total = iter.next().expect("at least one block");
        for block in iter {
            merge(&mut total, block);
        }
        Ok(total)
    }

    fn map_blocks<T, F>(&self, n_paths: u64, threads: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(std::ops::Range<u64>) -> T + Sync,
    {
        let n_blocks = n_paths.div_ceil(BLOCK);
        let run = || {
            (0..n_blocks)
                .into_par_iter()
                .map(|b| f(b * BLOCK..((b + 1) * BLOCK).min(n_paths)))
                .collect::<Vec<T>>()
        };
        if threads == 0 {
            return Ok(run());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
        Ok(pool.install(run))
    }
}
