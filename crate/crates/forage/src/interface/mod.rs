//! Command line entry points and the live steering service.

pub mod config_file;
pub mod protocol;
pub mod service;

use crate::analysis::hole_free;
use crate::comb_oracle::{self, Planar};
use crate::engine::{self, Algo, RunConfig, Sim, Stop};
use crate::lattice::Axial;
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::net::TcpListener;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "forage", version, about = "Foraging particle system simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Run a simulation and write its artifacts.
    Run(RunArgs),
    /// Flatten random or given configurations with the comb oracle.
    CombCheck(CombArgs),
    /// Replay an event log, checking invariants and byte equality.
    Verify {
        #[arg(long)]
        log: PathBuf,
    },
    /// Serve a live simulation over TCP.
    Serve(ServeArgs),
}

#[derive(Debug, Args, Default)]
pub struct SimArgs {
    /// key = value config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub algo: Option<Algo>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub side: Option<i32>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub cadence: Option<u64>,
    #[arg(long)]
    pub stop: Option<Stop>,
    /// Food sites as `x,y;x,y`, or `none`.
    #[arg(long)]
    pub food: Option<String>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// JSON food schedule.
    #[arg(long)]
    pub schedule: Option<PathBuf>,
    #[arg(long, default_value = "run-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CombArgs {
    #[arg(long, default_value_t = 10)]
    pub n_max: usize,
    #[arg(long, default_value_t = 200)]
    pub cases: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON list of `[x,y]` offsets from the food; prints the move list.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Overrides $FORAGE_BIND.
    #[arg(long)]
    pub bind: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    pub speed: f64,
    #[arg(long, default_value_t = 1000)]
    pub frame_every: u64,
    /// Start stepping immediately instead of waiting for `resume`.
    #[arg(long)]
    pub running: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl SimArgs {
    pub fn build(&self) -> Result<RunConfig, String> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
                config_file::parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?
            }
            None => RunConfig::default(),
        };
        macro_rules! take {
            ($($f:ident => $g:ident),*) => { $(if let Some(v) = self.$f.clone() { cfg.$g = v; })* };
        }
        take!(algo => algo, n => n, side => side, lambda => lambda, p => p, rho => rho,
              seed => seed, steps => max_steps, cadence => cadence, stop => stop);
        if let Some(f) = &self.food {
            cfg.food = config_file::parse_sites(f)?;
        }
        if self.food.is_none() && self.config.is_none() && self.side.is_some() {
            cfg.food = vec![[cfg.side / 2, cfg.side / 2]];
        }
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

/// Outcome of a batch of comb-oracle checks.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CombReport {
    pub cases: usize,
    pub flattened: usize,
    pub invalid_moves: usize,
    pub disconnected: usize,
    pub irreversible: usize,
    pub moves: usize,
    pub failures: Vec<String>,
}

impl CombReport {
    pub fn ok(&self) -> bool {
        self.flattened == self.cases && self.invalid_moves + self.disconnected + self.irreversible == 0
    }

    pub fn summary(&self) -> String {
        format!(
            "{}/{} flattened, {} invalid moves, {} disconnected, {} irreversible, {} moves total",
            self.flattened, self.cases, self.invalid_moves, self.disconnected, self.irreversible, self.moves
        )
    }
}

fn with_food(cfg: &Planar) -> Vec<Axial> {
    cfg.sites().chain([Axial::new(0, 0)]).collect()
}

/// Flattens one configuration and audits every emitted move.
pub fn audit_flatten(cfg: &Planar, report: &mut CombReport) {
    report.cases += 1;
    let moves = match comb_oracle::flatten_to_line(cfg) {
        Ok(m) => m,
        Err(e) => {
            report.failures.push(format!("{e} on {:?}", cfg.sites().collect::<Vec<_>>()));
            return;
        }
    };
    let mut cur = cfg.clone();
    let mut hole_free_now = hole_free(&with_food(&cur));
    for &m in &moves {
        if cur.apply(m).is_err() {
            report.invalid_moves += 1;
            return;
        }
        if !cur.is_connected() {
            report.disconnected += 1;
        }
        let after = hole_free(&with_food(&cur));
        if hole_free_now && after && !cur.is_move_valid(comb_oracle::Move { from: m.to, to: m.from }) {
            report.irreversible += 1;
        }
        hole_free_now = after;
    }
    report.moves += moves.len();
    if cur.is_line() {
        report.flattened += 1;
    } else {
        report.failures.push("result is not a line".into());
    }
}

/// `cases` random connected configurations with 1..=n_max particles.
pub fn comb_check(n_max: usize, cases: usize, seed: u64) -> CombReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CombReport::default();
    for _ in 0..cases {
        let n = rng.gen_range(1..=n_max.max(1));
        let cfg = comb_oracle::random_connected(n, &mut rng);
        audit_flatten(&cfg, &mut report);
    }
    report
}

/// Parses arguments and runs a subcommand, returning the exit status.
pub fn cli_run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(msg) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<(), String> {
    match cmd {
        Cmd::Run(a) => {
            let cfg = a.sim.build()?;
            let schedule = match &a.schedule {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
                    engine::parse_schedule(&text).map_err(|e| e.to_string())?
                }
                None => Vec::new(),
            };
            let mut sim = Sim::with_schedule(cfg, &schedule).map_err(|e| e.to_string())?;
            let art = sim.run().map_err(|e| e.to_string())?;
            art.write(&a.out).map_err(|e| e.to_string())?;
            println!(
                "{} steps, {} metrics frames, artifacts in {}",
                sim.step_count(),
                art.metrics.len(),
                a.out.display()
            );
            Ok(())
        }
        Cmd::CombCheck(a) => {
            if let Some(p) = &a.input {
                let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
                let sites: Vec<[i32; 2]> = serde_json::from_str(&text).map_err(|e| e.to_string())?;
                let cfg = Planar::new(sites.iter().map(|&[x, y]| Axial::new(x, y))).map_err(|e| e.to_string())?;
                let moves = comb_oracle::flatten_to_line(&cfg).map_err(|e| e.to_string())?;
                println!("{}", comb_oracle::moves_json(&moves));
                return Ok(());
            }
            let report = comb_check(a.n_max, a.cases, a.seed);
            println!("{}", report.summary());
            for f in report.failures.iter().take(5) {
                eprintln!("{f}");
            }
            if report.ok() {
                Ok(())
            } else {
                Err("comb check failed".into())
            }
        }
        Cmd::Verify { log } => {
            let text = std::fs::read_to_string(&log).map_err(|e| format!("{}: {e}", log.display()))?;
            let r = engine::verify(&text).map_err(|e| e.to_string())?;
            println!("ok: {} lines, {} steps, {} checkpoints replayed identically", r.lines, r.steps, r.checkpoints);
            Ok(())
        }
        Cmd::Serve(a) => {
            let cfg = a.sim.build()?;
            let addr = service::bind_address(a.bind.as_deref());
            let listener = TcpListener::bind(&addr).map_err(|e| format!("{addr}: {e}"))?;
            eprintln!("listening on {}", listener.local_addr().map_err(|e| e.to_string())?);
            let sim = Sim::new(cfg).map_err(|e| e.to_string())?;
            let opts = service::ServeOptions {
                frame_every: a.frame_every,
                steps_per_sec: a.speed,
                paused: !a.running,
                out: a.out,
            };
            let art = service::serve(listener, sim, opts).map_err(|e| e.to_string())?;
            eprintln!("session ended after {} steps", art.last.step);
            Ok(())
        }
    }
}
