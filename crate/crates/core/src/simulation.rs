//! Event-driven continuous-time simulation of the column-jump dynamics.
//!
//! The simulator keeps one trigger list per column pair `(x, x+1)`. A move
//! at `x` only touches `V[x]`, `V[x+1]` and `H[x]`, so the pairs `x-1`, `x`,
//! `x+1` are the only ones whose triggers or jump kinds can change.
//!
//! Drift is reported as signed swept area per unit time per site: a right
//! jump of span `k` contributes `+k`, a left jump `-k`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    apply_unchecked, classify, column_triggers, resolve_move, Direction, JumpKind, Move,
    MoveRecord, RateTable, Trigger,
};
use crate::enumeration::StateSpace;
use crate::error::{Error, Result};
use crate::lattice::{FluxPair, State, TorusGeometry, TypeCounts, VertexType};
use crate::weights::WeightVector;

pub const DEFAULT_BURN_IN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Time(f64),
    Events(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub geometry: TorusGeometry,
    pub flux: FluxPair,
    pub weights: WeightVector,
    pub seed: u64,
    pub horizon: Horizon,
    /// Fraction of the horizon discarded before observables are collected.
    pub burn_in: f64,
    /// Events between density samples; `None` picks the default.
    pub cadence: Option<u64>,
    /// Keep a per-event move log.
    pub trace: bool,
}

impl SimConfig {
    pub fn new(
        geometry: TorusGeometry,
        flux: FluxPair,
        weights: WeightVector,
        seed: u64,
        horizon: Horizon,
    ) -> Self {
        Self {
            geometry,
            flux,
            weights,
            seed,
            horizon,
            burn_in: DEFAULT_BURN_IN,
            cadence: None,
            trace: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.check_dynamics_flux(self.flux)?;
        let positive = match self.horizon {
            Horizon::Time(t) => t.is_finite() && t > 0.0,
            Horizon::Events(n) => n > 0,
        };
        if !positive {
            return Err(Error::OutOfRange(format!(
                "horizon must be positive, got {:?}",
                self.horizon
            )));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(Error::OutOfRange(format!(
                "burn-in fraction must lie in [0, 1), got {}",
                self.burn_in
            )));
        }
        if self.cadence == Some(0) {
            return Err(Error::OutOfRange("cadence must be positive".into()));
        }
        if !self.weights.is_positive() {
            return Err(Error::OutOfRange(
                "simulation needs positive weights".into(),
            ));
        }
        Ok(())
    }

    /// Every event for enumerable tori, every `M*N` events otherwise.
    pub fn effective_cadence(&self) -> u64 {
        self.cadence.unwrap_or(if self.geometry.fits_code() {
            1
        } else {
            self.geometry.vertices() as u64
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    /// Length of the measurement window (after burn-in).
    pub elapsed: f64,
    pub events: u64,
    /// Indexed by `JumpKind::index` (R1..R4, L1..L4).
    pub jump_counts: [u64; 8],
    pub swept_right: u64,
    pub swept_left: u64,
    /// Time-averaged vertex-type fractions in `VertexType` order.
    pub densities: [f64; 6],
    pub drift: f64,
    /// Set when the chain reached a state with no triggers.
    pub absorbed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySample {
    pub t: f64,
    pub events: u64,
    pub densities: [f64; 6],
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: SimConfig,
    pub observables: Observables,
    pub samples: Vec<DensitySample>,
    pub trace: Option<Vec<MoveRecord>>,
    pub final_state: State,
}

/// The JSON summary: config echo plus observables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: SimConfig,
    pub observables: Observables,
}

impl RunOutput {
    pub fn summary(&self) -> Summary {
        Summary {
            config: self.config.clone(),
            observables: self.observables.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub wait: f64,
    pub mv: Move,
}

type Column = Vec<(Trigger, JumpKind)>;

fn scan_column(s: &State, x: usize, buf: &mut Vec<Trigger>, out: &mut Column) -> Result<()> {
    buf.clear();
    out.clear();
    column_triggers(s, x, buf);
    for &t in buf.iter() {
        out.push((t, classify(s, t)?));
    }
    Ok(())
}

fn column_rate(col: &Column, rates: &RateTable) -> f64 {
    col.iter().map(|&(_, k)| rates.get(k)).sum()
}

fn exp_wait<R: Rng + ?Sized>(rng: &mut R, total: f64) -> f64 {
    // `random` is in [0, 1), so the argument of `ln` is in (0, 1].
    -(1.0 - rng.random::<f64>()).ln() / total
}

/// Picks a trigger with probability proportional to its rate: first a
/// column by its total, then a trigger inside it.
fn select(cols: &[Column], col_rates: &[f64], rates: &RateTable, total: f64, u: f64) -> Trigger {
    let mut target = u * total;
    let mut last = None;
    for (col, &r) in cols.iter().zip(col_rates) {
        if col.is_empty() {
            continue;
        }
        if target < r {
            for &(t, k) in col {
                let rk = rates.get(k);
                if target < rk {
                    return t;
                }
                target -= rk;
                last = Some(t);
            }
            // Rounding left a sliver past the end of this column.
            return last.expect("non-empty column");
        }
        target -= r;
        last = col.last().map(|&(t, _)| t);
    }
    last.expect("positive total implies a trigger")
}

fn draw(
    cols: &[Column],
    col_rates: &[f64],
    rates: &RateTable,
    s: &State,
    rng: &mut ChaCha8Rng,
) -> Result<Step> {
    let total: f64 = col_rates.iter().sum();
    if cols.iter().all(|c| c.is_empty()) || total <= 0.0 {
        return Err(Error::Absorbed);
    }
    let wait = exp_wait(rng, total);
    let u: f64 = rng.random();
    let t = select(cols, col_rates, rates, total, u);
    Ok(Step {
        wait,
        mv: resolve_move(s, t)?,
    })
}

/// One step from scratch: full trigger scan, exponential wait with the
/// total exit rate, trigger chosen by rate. Consumes the rng exactly as
/// [`Simulator::step`] does, so both produce the same trajectory.
pub fn gillespie_step(
    s: &State,
    rates: &RateTable,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Move, State)> {
    let m = s.geometry().m;
    let mut buf = Vec::new();
    let mut cols = vec![Vec::new(); m];
    for (x, col) in cols.iter_mut().enumerate() {
        scan_column(s, x, &mut buf, col)?;
    }
    let col_rates: Vec<f64> = cols.iter().map(|c| column_rate(c, rates)).collect();
    let step = draw(&cols, &col_rates, rates, s, rng)?;
    let mut next = s.clone();
    apply_unchecked(&mut next, &step.mv);
    Ok((step.wait, step.mv, next))
}

/// Incremental simulator state.
#[derive(Debug, Clone)]
pub struct Simulator {
    state: State,
    rates: RateTable,
    rng: ChaCha8Rng,
    cols: Vec<Column>,
    col_rates: Vec<f64>,
    counts: TypeCounts,
    buf: Vec<Trigger>,
    touched: Vec<(usize, usize)>,
}

impl Simulator {
    pub fn new(state: State, rates: RateTable, seed: u64) -> Result<Self> {
        let m = state.geometry().m;
        let counts = state.count_types();
        let mut sim = Self {
            state,
            rates,
            rng: ChaCha8Rng::seed_from_u64(seed),
            cols: vec![Vec::new(); m],
            col_rates: vec![0.0; m],
            counts,
            buf: Vec::new(),
            touched: Vec::new(),
        };
        for x in 0..m {
            sim.rescan(x)?;
        }
        Ok(sim)
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn type_counts(&self) -> TypeCounts {
        self.counts
    }

    pub fn total_rate(&self) -> f64 {
        self.col_rates.iter().sum()
    }

    /// Maintained triggers, in lexicographic `(x, y)` order.
    pub fn triggers(&self) -> Vec<(Trigger, JumpKind)> {
        self.cols.iter().flatten().copied().collect()
    }

    /// Triggers and kinds recomputed from scratch, for cross-checking.
    pub fn full_rescan(&self) -> Result<Vec<(Trigger, JumpKind)>> {
        let mut buf = Vec::new();
        let mut col = Vec::new();
        let mut out = Vec::new();
        for x in 0..self.state.geometry().m {
            scan_column(&self.state, x, &mut buf, &mut col)?;
            out.extend_from_slice(&col);
        }
        Ok(out)
    }

    fn rescan(&mut self, x: usize) -> Result<()> {
        scan_column(&self.state, x, &mut self.buf, &mut self.cols[x])?;
        self.col_rates[x] = column_rate(&self.cols[x], &self.rates);
        Ok(())
    }

    /// Draws and applies one event.
    pub fn step(&mut self) -> Result<Step> {
        let step = draw(
            &self.cols,
            &self.col_rates,
            &self.rates,
            &self.state,
            &mut self.rng,
        )?;
        self.apply(&step.mv)?;
        Ok(step)
    }

    fn apply(&mut self, mv: &Move) -> Result<()> {
        let g = self.state.geometry();
        let x = mv.trigger.x;
        let xr = g.right(x);
        // Retyped vertices: columns x and x+1, rows y..=y_top.
        self.touched.clear();
        for i in 0..=mv.span {
            let j = (mv.trigger.y + i) % g.n;
            self.touched.push((x, j));
            if xr != x {
                self.touched.push((xr, j));
            }
        }
        for &(a, b) in &self.touched {
            self.counts.remove(self.state.vertex_type(a, b));
        }
        apply_unchecked(&mut self.state, mv);
        for &(a, b) in &self.touched {
            self.counts.add(self.state.vertex_type(a, b));
        }
        let xl = g.left(x);
        self.rescan(xl)?;
        if x != xl {
            self.rescan(x)?;
        }
        if xr != xl && xr != x {
            self.rescan(xr)?;
        }
        Ok(())
    }
}

fn densities(c: &TypeCounts) -> [f64; 6] {
    let total = c.total() as f64;
    let mut out = [0.0; 6];
    for t in VertexType::ALL {
        out[t.index()] = c[t] as f64 / total;
    }
    out
}

/// Time-weighted accumulator for the measurement window.
#[derive(Default)]
struct Accumulator {
    elapsed: f64,
    events: u64,
    jump_counts: [u64; 8],
    swept_right: u64,
    swept_left: u64,
    type_time: [f64; 6],
}

impl Accumulator {
    fn hold(&mut self, counts: &TypeCounts, dt: f64) {
        self.elapsed += dt;
        for (acc, &c) in self.type_time.iter_mut().zip(counts.0.iter()) {
            *acc += c as f64 * dt;
        }
    }

    fn record(&mut self, mv: &Move) {
        self.events += 1;
        self.jump_counts[mv.kind.index()] += 1;
        match mv.trigger.dir {
            Direction::Right => self.swept_right += mv.span as u64,
            Direction::Left => self.swept_left += mv.span as u64,
        }
    }

    fn finish(self, g: TorusGeometry, absorbed: bool) -> Observables {
        let sites = g.vertices() as f64;
        let mut dens = [0.0; 6];
        if self.elapsed > 0.0 {
            for (d, &a) in dens.iter_mut().zip(self.type_time.iter()) {
                *d = a / (self.elapsed * sites);
            }
        }
        let drift = if self.elapsed > 0.0 {
            (self.swept_right as f64 - self.swept_left as f64) / (self.elapsed * sites)
        } else {
            0.0
        };
        Observables {
            elapsed: self.elapsed,
            events: self.events,
            jump_counts: self.jump_counts,
            swept_right: self.swept_right,
            swept_left: self.swept_left,
            densities: dens,
            drift,
            absorbed,
        }
    }
}

/// Receives the measured part of a trajectory.
trait Observer {
    /// The current state is held for `dt` inside the measurement window.
    fn hold(&mut self, sim: &Simulator, dt: f64);
    /// A jump completed at time `t` inside the measurement window.
    fn event(&mut self, _sim: &Simulator, _t: f64, _mv: &Move) {}
}

/// Walks a trajectory; returns the simulator and whether it was absorbed.
fn drive<O: Observer>(config: &SimConfig, start: State, obs: &mut O) -> Result<(Simulator, bool)> {
    let rates = RateTable::from_weights(&config.weights);
    let mut sim = Simulator::new(start, rates, config.seed)?;
    let mut t = 0.0f64;
    let mut n = 0u64;
    let (t_burn, n_burn) = match config.horizon {
        Horizon::Time(tt) => (tt * config.burn_in, 0),
        Horizon::Events(ne) => (0.0, (ne as f64 * config.burn_in).floor() as u64),
    };
    loop {
        if let Horizon::Events(ne) = config.horizon {
            if n >= ne {
                return Ok((sim, false));
            }
        }
        let step = match draw(
            &sim.cols,
            &sim.col_rates,
            &sim.rates,
            &sim.state,
            &mut sim.rng,
        ) {
            Ok(s) => s,
            Err(Error::Absorbed) => {
                // The state is held for the rest of a timed horizon.
                if let Horizon::Time(tt) = config.horizon {
                    let from = t.max(t_burn);
                    if tt > from {
                        obs.hold(&sim, tt - from);
                    }
                }
                return Ok((sim, true));
            }
            Err(e) => return Err(e),
        };
        let t_next = t + step.wait;
        let end = match config.horizon {
            Horizon::Time(tt) => t_next.min(tt),
            Horizon::Events(_) => t_next,
        };
        let measuring = n >= n_burn;
        let from = t.max(t_burn);
        if measuring && end > from {
            obs.hold(&sim, end - from);
        }
        if let Horizon::Time(tt) = config.horizon {
            if t_next >= tt {
                return Ok((sim, false));
            }
        }
        sim.apply(&step.mv)?;
        t = t_next;
        n += 1;
        if measuring && t >= t_burn {
            obs.event(&sim, t, &step.mv);
        }
    }
}

struct RunObserver {
    acc: Accumulator,
    cadence: u64,
    samples: Vec<DensitySample>,
    trace: Option<Vec<MoveRecord>>,
}

impl Observer for RunObserver {
    fn hold(&mut self, sim: &Simulator, dt: f64) {
        self.acc.hold(&sim.counts, dt);
    }

    fn event(&mut self, sim: &Simulator, t: f64, mv: &Move) {
        self.acc.record(mv);
        if self.acc.events.is_multiple_of(self.cadence) {
            self.samples.push(DensitySample {
                t,
                events: self.acc.events,
                densities: densities(&sim.counts),
            });
        }
        if let Some(tr) = self.trace.as_mut() {
            tr.push(MoveRecord::new(t, mv));
        }
    }
}

struct OccupationObserver<'a> {
    space: &'a StateSpace,
    occupation: Vec<f64>,
    missing: Option<u64>,
}

impl Observer for OccupationObserver<'_> {
    fn hold(&mut self, sim: &Simulator, dt: f64) {
        let code = sim.state.code().expect("fits_code checked");
        match self.space.index_of_code(code) {
            Some(i) => self.occupation[i] += dt,
            None => self.missing = Some(code),
        }
    }
}

/// Runs one trajectory from the canonical state of the configured flux.
pub fn run(config: &SimConfig) -> Result<RunOutput> {
    config.validate()?;
    let start = State::canonical(config.geometry, config.flux)?;
    run_from(config, start)
}

/// Runs one trajectory from a given start state.
pub fn run_from(config: &SimConfig, start: State) -> Result<RunOutput> {
    config.validate()?;
    if start.geometry() != config.geometry || start.flux() != config.flux {
        return Err(Error::OutOfRange(
            "start state does not match the configured torus and flux".into(),
        ));
    }
    let mut obs = RunObserver {
        acc: Accumulator::default(),
        cadence: config.effective_cadence(),
        samples: Vec::new(),
        trace: config.trace.then(Vec::new),
    };
    let (sim, absorbed) = drive(config, start, &mut obs)?;
    Ok(RunOutput {
        config: config.clone(),
        observables: obs.acc.finish(config.geometry, absorbed),
        samples: obs.samples,
        trace: obs.trace,
        final_state: sim.state,
    })
}

/// Independent replicas with seeds `seed, seed+1, ...`, run in parallel on
/// at most `jobs` threads; results are ordered by seed.
pub fn run_replicas(config: &SimConfig, replicas: usize, jobs: usize) -> Result<Vec<RunOutput>> {
    config.validate()?;
    let seeds: Vec<u64> = (0..replicas as u64)
        .map(|i| config.seed.wrapping_add(i))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::OutOfRange(format!("thread pool: {e}")))?;
    let mut out: Vec<RunOutput> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let mut c = config.clone();
                c.seed = seed;
                run(&c)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    out.sort_by_key(|r| r.config.seed);
    Ok(out)
}

/// Time-weighted occupation frequencies over the states of `space`, in
/// space order. Starts from the canonical state.
pub fn empirical_distribution(config: &SimConfig, space: &StateSpace) -> Result<Vec<f64>> {
    if !config.geometry.fits_code() {
        return Err(Error::TooLarge(format!(
            "{}x{} torus has no 64-bit state code",
            config.geometry.m, config.geometry.n
        )));
    }
    if space.geometry() != config.geometry || space.flux() != config.flux {
        return Err(Error::OutOfRange(
            "state space does not match the configured torus and flux".into(),
        ));
    }
    if space.is_empty() {
        return Err(Error::EmptySpace);
    }
    if space.len() == 1 {
        return Ok(vec![1.0]);
    }
    config.validate()?;
    let start = State::canonical(config.geometry, config.flux)?;
    let mut obs = OccupationObserver {
        space,
        occupation: vec![0.0; space.len()],
        missing: None,
    };
    drive(config, start, &mut obs)?;
    if let Some(code) = obs.missing {
        return Err(Error::OutOfRange(format!(
            "visited state code {code} is not in the state space"
        )));
    }
    let total: f64 = obs.occupation.iter().sum();
    if total <= 0.0 {
        return Err(Error::OutOfRange("empty measurement window".into()));
    }
    Ok(obs.occupation.into_iter().map(|o| o / total).collect())
}

/// Total variation distance between two distributions on the same index set.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
