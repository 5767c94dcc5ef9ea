//! Sequential scheduler: seeded activation order, adversarial food events,
//! event log with hashed checkpoints, metrics sampling and replay.

use crate::analysis::{self, MetricsFrame};
use crate::compression_algo::{self, Activation, CompressionParams, CompressionState, ParamError, Verdict};
use crate::lattice::{Coord, LatticeConfig, LatticeError};
use crate::spiral_algo::{self, SpiralActivation, SpiralParams, SpiralState};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::VecDeque;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

pub const EVENT_FORMAT: &str = "forage-events";
pub const SNAPSHOT_FORMAT: &str = "forage-snapshot";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("outside lattice")]
    Outside,
    #[error("unknown parameter {0}")]
    UnknownParam(String),
    #[error("schedule steps must be non-decreasing")]
    Unordered,
    #[error("invariant violated at step {step}: {detail}")]
    Invariant { step: u64, detail: String },
    #[error("log line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("log line {line} differs on replay\n  logged:   {logged}\n  replayed: {replayed}")]
    Mismatch { line: usize, logged: String, replayed: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Compression,
    Spiral,
}

impl FromStr for Algo {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "compression" => Ok(Algo::Compression),
            "spiral" => Ok(Algo::Spiral),
            _ => Err(format!("unknown algorithm {s}")),
        }
    }
}

/// Terminal predicate, checked once per sweep of n activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stop {
    Never,
    /// Every particle in a compression state, one cluster, touching food.
    Gathered,
    /// Every particle back in dispersion.
    Dispersed,
    /// One spiral holding every particle.
    Spiral,
}

impl FromStr for Stop {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "never" | "none" => Ok(Stop::Never),
            "gathered" => Ok(Stop::Gathered),
            "dispersed" => Ok(Stop::Dispersed),
            "spiral" => Ok(Stop::Spiral),
            _ => Err(format!("unknown stop predicate {s}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub side: i32,
    pub n: usize,
    pub algo: Algo,
    pub p: f64,
    pub lambda: f64,
    pub rho: f64,
    pub seed: u64,
    pub max_steps: u64,
    /// Steps between metrics frames and checkpoints.
    pub cadence: u64,
    pub stop: Stop,
    /// Initial food sites.
    pub food: Vec<[i32; 2]>,
    /// Start positions; drawn uniformly at random when absent.
    #[serde(default)]
    pub initial: Option<Vec<[i32; 2]>>,
    /// Per-particle activation weights; empty means uniform.
    #[serde(default)]
    pub rates: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            side: 32,
            n: 100,
            algo: Algo::Compression,
            p: 0.1,
            lambda: 4.0,
            rho: 0.25,
            seed: 0,
            max_steps: 100_000,
            cadence: 1000,
            stop: Stop::Never,
            food: vec![[16, 16]],
            initial: None,
            rates: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::Config(m.to_string()));
        if self.side < 6 {
            return bad("side must be at least 6");
        }
        let sites = (self.side * self.side) as usize;
        if self.n + self.food.len() >= sites {
            return bad("too many particles for the lattice");
        }
        if self.cadence == 0 {
            return bad("cadence must be positive");
        }
        match self.algo {
            Algo::Compression => {
                CompressionParams::new(self.p, self.lambda)?;
            }
            Algo::Spiral => {
                SpiralParams::new(self.rho)?;
            }
        }
        if !self.rates.is_empty() && (self.rates.len() != self.n || self.rates.iter().any(|&r| !(r > 0.0))) {
            return bad("rates need one positive weight per particle");
        }
        if let Some(init) = &self.initial {
            if init.len() != self.n {
                return bad("initial positions must list n sites");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FoodKind {
    Place,
    Move,
    Remove,
}

/// One adversarial food action; `to` only for moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoodEvent {
    pub step: u64,
    pub action: FoodKind,
    pub at: [i32; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<[i32; 2]>,
}

pub fn parse_schedule(json: &str) -> Result<Vec<FoodEvent>, EngineError> {
    let events: Vec<FoodEvent> =
        serde_json::from_str(json).map_err(|e| EngineError::Parse { line: e.line(), msg: e.to_string() })?;
    if events.windows(2).any(|w| w[0].step > w[1].step) {
        return Err(EngineError::Unordered);
    }
    Ok(events)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Event {
    Header {
        format: String,
        version: u32,
        config: RunConfig,
    },
    Food {
        step: u64,
        action: FoodKind,
        at: [i32; 2],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        to: Option<[i32; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    Param {
        step: u64,
        name: String,
        value: f64,
    },
    Checkpoint {
        step: u64,
        hash: String,
    },
    End {
        step: u64,
        hash: String,
    },
}

impl Event {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("events serialize")
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Pending {
    Food(FoodEvent),
    Param { step: u64, name: String, value: f64 },
}

impl Pending {
    fn step(&self) -> u64 {
        match self {
            Pending::Food(e) => e.step,
            Pending::Param { step, .. } => *step,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum World {
    Compression(LatticeConfig<CompressionState>),
    Spiral(LatticeConfig<SpiralState>),
}

macro_rules! each {
    ($w:expr, $c:ident => $body:expr) => {
        match $w {
            World::Compression($c) => $body,
            World::Spiral($c) => $body,
        }
    };
}

impl World {
    pub fn side(&self) -> i32 {
        each!(self, w => w.side())
    }

    pub fn len(&self) -> usize {
        each!(self, w => w.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn food(&self) -> Vec<Coord> {
        each!(self, w => w.food().to_vec())
    }

    /// Position and state code of each particle, by id.
    pub fn cells(&self) -> Vec<(Coord, String)> {
        match self {
            World::Compression(w) => w.particles().iter().map(|p| (p.pos, p.state.label().to_string())).collect(),
            World::Spiral(w) => w.particles().iter().map(|p| (p.pos, spiral_code(p.state))).collect(),
        }
    }

    pub fn frame(&self, step: u64) -> MetricsFrame {
        match self {
            World::Compression(w) => analysis::compression_frame(w, step),
            World::Spiral(w) => analysis::spiral_frame(w, step),
        }
    }

    pub fn check_consistency(&self) -> Result<(), String> {
        each!(self, w => w.check_consistency())
    }

    /// SHA-256 over step, particle cells in id order and sorted food.
    pub fn hash(&self, step: u64) -> String {
        let mut h = Sha256::new();
        h.update(step.to_le_bytes());
        for (c, s) in self.cells() {
            h.update(format!("{},{},{};", c.x, c.y, s).as_bytes());
        }
        let mut food = self.food();
        food.sort();
        h.update(b"|");
        for f in food {
            h.update(format!("{},{};", f.x, f.y).as_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn apply_food(&mut self, kind: FoodKind, at: Coord, to: Option<Coord>) -> Result<(), LatticeError> {
        each!(self, w => match kind {
            FoodKind::Place => w.place_food(at),
            FoodKind::Remove => w.remove_food(at),
            FoodKind::Move => w.move_food(at, to.expect("move has a target")),
        })
    }
}

/// `D`, or `<base>[*]@<parent direction>`.
pub fn spiral_code(s: SpiralState) -> String {
    match s {
        SpiralState::Dispersion => "D".to_string(),
        SpiralState::Comp { parent, .. } => format!("{}@{}", s.label(), parent.index()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algo", rename_all = "lowercase")]
pub enum StepRecord {
    Compression { step: u64, activation: Activation },
    Spiral { step: u64, activation: SpiralActivation },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleView {
    pub at: [i32; 2],
    pub state: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub format: String,
    pub version: u32,
    pub step: u64,
    pub side: i32,
    pub algo: Algo,
    pub particles: Vec<ParticleView>,
    pub food: Vec<[i32; 2]>,
    pub metrics: MetricsFrame,
}

/// Everything a finished run leaves behind.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub events: Vec<Event>,
    pub metrics: Vec<MetricsFrame>,
    pub initial: Snapshot,
    pub last: Snapshot,
}

impl Artifact {
    pub fn event_log(&self) -> String {
        self.events.iter().map(|e| e.to_line() + "\n").collect()
    }

    /// Writes `events.jsonl`, `metrics.csv`, `initial.json` and `snapshot.json`.
    pub fn write(&self, dir: &Path) -> Result<(), EngineError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("events.jsonl"), self.event_log())?;
        let mut csv = csv::Writer::from_path(dir.join("metrics.csv"))?;
        csv.write_record(analysis::CSV_COLUMNS)?;
        for f in &self.metrics {
            csv.write_record(f.csv_record())?;
        }
        csv.flush()?;
        let pretty = |s: &Snapshot| serde_json::to_string_pretty(s).expect("snapshots serialize");
        std::fs::write(dir.join("initial.json"), pretty(&self.initial))?;
        std::fs::write(dir.join("snapshot.json"), pretty(&self.last))?;
        Ok(())
    }
}

fn to_coord(side: i32, [x, y]: [i32; 2]) -> Result<Coord, EngineError> {
    if (0..side).contains(&x) && (0..side).contains(&y) {
        Ok(Coord::new(x, y))
    } else {
        Err(EngineError::Outside)
    }
}

pub struct Sim {
    config: RunConfig,
    world: World,
    rng: ChaCha8Rng,
    step: u64,
    pending: VecDeque<Pending>,
    events: Vec<Event>,
    metrics: Vec<MetricsFrame>,
    weights: Option<WeightedIndex<f64>>,
    initial: Snapshot,
    checked: bool,
    finished: bool,
}

impl Sim {
    pub fn new(config: RunConfig) -> Result<Self, EngineError> {
        Self::with_schedule(config, &[])
    }

    pub fn with_schedule(config: RunConfig, schedule: &[FoodEvent]) -> Result<Self, EngineError> {
        config.validate()?;
        if schedule.windows(2).any(|w| w[0].step > w[1].step) {
            return Err(EngineError::Unordered);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let side = config.side;
        let mut food = Vec::new();
        for &f in &config.food {
            food.push(to_coord(side, f)?);
        }
        let positions: Vec<Coord> = match &config.initial {
            Some(init) => init.iter().map(|&a| to_coord(side, a)).collect::<Result<_, _>>()?,
            None => {
                let vacant: Vec<Coord> = (0..(side * side) as usize)
                    .map(|i| Coord::new(i as i32 % side, i as i32 / side))
                    .filter(|c| !food.contains(c))
                    .collect();
                rand::seq::index::sample(&mut rng, vacant.len(), config.n)
                    .into_iter()
                    .map(|i| vacant[i])
                    .collect()
            }
        };
        let world = match config.algo {
            Algo::Compression => World::Compression(populate(side, &food, &positions, CompressionState::D)?),
            Algo::Spiral => World::Spiral(populate(side, &food, &positions, SpiralState::Dispersion)?),
        };
        let weights = if config.rates.is_empty() {
            None
        } else {
            Some(WeightedIndex::new(&config.rates).map_err(|e| EngineError::Config(e.to_string()))?)
        };
        let initial = snapshot_of(&world, config.algo, 0);
        let mut sim = Sim {
            events: vec![Event::Header {
                format: EVENT_FORMAT.to_string(),
                version: FORMAT_VERSION,
                config: config.clone(),
            }],
            config,
            world,
            rng,
            step: 0,
            pending: schedule.iter().copied().map(Pending::Food).collect(),
            metrics: Vec::new(),
            weights,
            initial,
            checked: false,
            finished: false,
        };
        sim.sample();
        Ok(sim)
    }

    /// Checks invariants after every activation; violations abort the step.
    pub fn set_checked(&mut self, on: bool) {
        self.checked = on;
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn metrics(&self) -> &[MetricsFrame] {
        &self.metrics
    }

    pub fn snapshot(&self) -> Snapshot {
        snapshot_of(&self.world, self.config.algo, self.step)
    }

    /// Applies a food action now and logs it; errors leave the world unchanged.
    pub fn apply_food_event(&mut self, kind: FoodKind, at: [i32; 2], to: Option<[i32; 2]>) -> Result<(), EngineError> {
        self.food_now(kind, at, to)?;
        self.events.push(Event::Food {
            step: self.step,
            action: kind,
            at,
            to,
            error: None,
        });
        Ok(())
    }

    fn food_now(&mut self, kind: FoodKind, at: [i32; 2], to: Option<[i32; 2]>) -> Result<(), EngineError> {
        let side = self.config.side;
        let a = to_coord(side, at)?;
        let b = match (kind, to) {
            (FoodKind::Move, Some(t)) => Some(to_coord(side, t)?),
            (FoodKind::Move, None) => return Err(EngineError::Config("move needs a target".into())),
            _ => None,
        };
        self.world.apply_food(kind, a, b)?;
        Ok(())
    }

    /// Changes `p`, `lambda` or `rho` from the next activation on.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<(), EngineError> {
        self.param_now(name, value)?;
        self.events.push(Event::Param {
            step: self.step,
            name: name.to_string(),
            value,
        });
        Ok(())
    }

    fn param_now(&mut self, name: &str, value: f64) -> Result<(), EngineError> {
        let c = &mut self.config;
        match name {
            "p" => {
                CompressionParams::new(value, c.lambda)?;
                c.p = value;
            }
            "lambda" => {
                CompressionParams::new(c.p, value)?;
                c.lambda = value;
            }
            "rho" => {
                SpiralParams::new(value)?;
                c.rho = value;
            }
            _ => return Err(EngineError::UnknownParam(name.to_string())),
        }
        Ok(())
    }

    fn fire_pending(&mut self) {
        while self.pending.front().is_some_and(|p| p.step() <= self.step) {
            match self.pending.pop_front().expect("front exists") {
                Pending::Food(e) => {
                    let error = self.food_now(e.action, e.at, e.to).err().map(|x| x.to_string());
                    self.events.push(Event::Food {
                        step: self.step,
                        action: e.action,
                        at: e.at,
                        to: e.to,
                        error,
                    });
                }
                Pending::Param { name, value, .. } => {
                    // logged values were range-checked when first applied
                    let _ = self.param_now(&name, value);
                    self.events.push(Event::Param {
                        step: self.step,
                        name,
                        value,
                    });
                }
            }
        }
    }

    /// Fires food events due now, then activates one random particle.
    pub fn step(&mut self) -> Result<StepRecord, EngineError> {
        self.fire_pending();
        let n = self.world.len();
        if n == 0 {
            return Err(EngineError::Config("no particles".into()));
        }
        let id = match &self.weights {
            Some(w) => w.sample(&mut self.rng) as u32,
            None => self.rng.gen_range(0..n) as u32,
        };
        let step = self.step;
        let record = match &mut self.world {
            World::Compression(w) => {
                let params = CompressionParams::new(self.config.p, self.config.lambda)?;
                let activation = compression_algo::activate(w, id, &params, &mut self.rng);
                StepRecord::Compression { step, activation }
            }
            World::Spiral(w) => {
                let params = SpiralParams::new(self.config.rho)?;
                let activation = spiral_algo::activate(w, id, &params, &mut self.rng);
                StepRecord::Spiral { step, activation }
            }
        };
        self.step += 1;
        if self.checked {
            self.check(&record)?;
        }
        if self.step % self.config.cadence == 0 {
            self.sample();
        }
        Ok(record)
    }

    fn check(&self, record: &StepRecord) -> Result<(), EngineError> {
        let fail = |detail: String| Err(EngineError::Invariant { step: self.step, detail });
        if self.world.len() != self.config.n {
            return fail("particle count changed".into());
        }
        if let (StepRecord::Compression { activation, .. }, World::Compression(w)) = (record, &self.world) {
            if let Some(m) = &activation.moved {
                if m.verdict.is_some_and(|v| v != Verdict::Valid) {
                    return fail(format!("invalid compression move {} -> {}", m.from, m.to));
                }
                if m.local_disconnection {
                    return fail(format!("move {} -> {} disconnects locally", m.from, m.to));
                }
            }
            let report = analysis::check_state_invariant(w);
            if !report.holds {
                return fail(format!("state invariant fails for components {:?}", report.offending));
            }
        }
        if self.step % self.config.cadence == 0 {
            if let Err(e) = self.world.check_consistency() {
                return fail(e);
            }
        }
        Ok(())
    }

    fn sample(&mut self) {
        self.metrics.push(self.world.frame(self.step));
        self.events.push(Event::Checkpoint {
            step: self.step,
            hash: self.world.hash(self.step),
        });
    }

    pub fn stop_reached(&self) -> bool {
        stop_holds(&self.world, self.config.stop)
    }

    /// Runs to `max_steps` or until the stop predicate holds at a sweep boundary.
    pub fn run(&mut self) -> Result<Artifact, EngineError> {
        let sweep = self.world.len().max(1) as u64;
        while self.step < self.config.max_steps {
            if self.step % sweep == 0 && self.config.stop != Stop::Never && self.stop_reached() {
                break;
            }
            self.step()?;
        }
        Ok(self.finish())
    }

    /// The event log as it would read if the session ended now.
    pub fn log_now(&self) -> String {
        let mut out: String = self.events.iter().map(|e| e.to_line() + "\n").collect();
        if !self.finished {
            let end = Event::End {
                step: self.step,
                hash: self.world.hash(self.step),
            };
            out += &(end.to_line() + "\n");
        }
        out
    }

    /// Fires events due at the final boundary and closes the log.
    pub fn finish(&mut self) -> Artifact {
        if !self.finished {
            self.fire_pending();
            self.events.push(Event::End {
                step: self.step,
                hash: self.world.hash(self.step),
            });
            self.finished = true;
        }
        Artifact {
            events: self.events.clone(),
            metrics: self.metrics.clone(),
            initial: self.initial.clone(),
            last: self.snapshot(),
        }
    }
}

fn populate<S: Clone>(side: i32, food: &[Coord], at: &[Coord], s: S) -> Result<LatticeConfig<S>, EngineError> {
    let mut w = LatticeConfig::new(side)?;
    for &f in food {
        w.place_food(f)?;
    }
    for &c in at {
        w.add_particle(c, s.clone())?;
    }
    Ok(w)
}

fn snapshot_of(world: &World, algo: Algo, step: u64) -> Snapshot {
    Snapshot {
        format: SNAPSHOT_FORMAT.to_string(),
        version: FORMAT_VERSION,
        step,
        side: world.side(),
        algo,
        particles: world
            .cells()
            .into_iter()
            .map(|(c, state)| ParticleView { at: [c.x, c.y], state })
            .collect(),
        food: world.food().iter().map(|c| [c.x, c.y]).collect(),
        metrics: world.frame(step),
    }
}

pub fn stop_holds(world: &World, stop: Stop) -> bool {
    match (stop, world) {
        (Stop::Never, _) => false,
        (Stop::Gathered, World::Compression(w)) => gathered(w),
        (Stop::Dispersed, World::Compression(w)) => w.particles().iter().all(|p| p.state == CompressionState::D),
        (Stop::Dispersed, World::Spiral(w)) => w.particles().iter().all(|p| !p.state.is_comp()),
        (Stop::Spiral, World::Spiral(w)) => spiral_algo::find_spirals(w).iter().any(|s| s.len() == w.len()),
        _ => false,
    }
}

/// All particles in compression states, forming one cluster next to food.
pub fn gathered(w: &LatticeConfig<CompressionState>) -> bool {
    if !w.particles().iter().all(|p| p.state.is_compression()) {
        return false;
    }
    let comps = analysis::components(w);
    comps.len() == 1 && comps[0].iter().any(|&id| w.adjacent_to_food(w.particle(id).pos))
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_line())
    }
}

/// Outcome of a successful replay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub lines: usize,
    pub steps: u64,
    pub checkpoints: usize,
}

/// Re-runs a logged session from its header and logged food and parameter
/// events, returning the regenerated log.
pub fn replay(log: &str, checked: bool) -> Result<Vec<Event>, EngineError> {
    let mut events = Vec::new();
    for (i, line) in log.lines().enumerate() {
        let e: Event = serde_json::from_str(line).map_err(|e| EngineError::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        events.push(e);
    }
    let Some(Event::Header { format, version, config }) = events.first() else {
        return Err(EngineError::Parse {
            line: 1,
            msg: "missing header".into(),
        });
    };
    if format != EVENT_FORMAT || *version != FORMAT_VERSION {
        return Err(EngineError::Parse {
            line: 1,
            msg: format!("unsupported format {format} v{version}"),
        });
    }
    let Some(Event::End { step: end, .. }) = events.last() else {
        return Err(EngineError::Parse {
            line: events.len(),
            msg: "missing end record".into(),
        });
    };
    let end = *end;
    let mut sim = Sim::new(config.clone())?;
    sim.set_checked(checked);
    for e in &events {
        match e {
            Event::Food { step, action, at, to, .. } => sim.pending.push_back(Pending::Food(FoodEvent {
                step: *step,
                action: *action,
                at: *at,
                to: *to,
            })),
            Event::Param { step, name, value } => sim.pending.push_back(Pending::Param {
                step: *step,
                name: name.clone(),
                value: *value,
            }),
            _ => {}
        }
    }
    if sim.pending.iter().zip(sim.pending.iter().skip(1)).any(|(a, b)| a.step() > b.step()) {
        return Err(EngineError::Unordered);
    }
    while sim.step < end {
        sim.step()?;
    }
    Ok(sim.finish().events)
}

/// Replays with invariant checks and demands a byte-identical event log.
pub fn verify(log: &str) -> Result<VerifyReport, EngineError> {
    let replayed = replay(log, true)?;
    let logged: Vec<&str> = log.lines().collect();
    let fresh: Vec<String> = replayed.iter().map(Event::to_line).collect();
    for i in 0..logged.len().max(fresh.len()) {
        let a = logged.get(i).copied().unwrap_or("<missing>");
        let b = fresh.get(i).map(String::as_str).unwrap_or("<missing>");
        if a != b {
            return Err(EngineError::Mismatch {
                line: i + 1,
                logged: a.to_string(),
                replayed: b.to_string(),
            });
        }
    }
    let steps = match replayed.last() {
        Some(Event::End { step, .. }) => *step,
        _ => 0,
    };
    Ok(VerifyReport {
        lines: fresh.len(),
        steps,
        checkpoints: replayed.iter().filter(|e| matches!(e, Event::Checkpoint { .. })).count(),
    })
}
