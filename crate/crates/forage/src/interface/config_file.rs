//! Plain-text run configuration: one `key = value` per line, `#` comments.
//!
//! Keys: `side n algo p lambda rho seed max_steps cadence stop food initial rates`.
//! Site lists (`food`, `initial`) are `x,y;x,y;...` or `none`; `rates` is a
//! comma-separated list of weights.

use crate::engine::{Algo, RunConfig, Stop};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: expected key = value")]
    Syntax { line: usize },
    #[error("line {line}: unknown key {key}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for {key}: {msg}")]
    Value { line: usize, key: String, msg: String },
}

pub fn parse_sites(s: &str) -> Result<Vec<[i32; 2]>, String> {
    let s = s.trim();
    if s.is_empty() || s == "none" {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|pair| {
            let (x, y) = pair.split_once(',').ok_or_else(|| format!("site {pair:?} is not x,y"))?;
            let x = x.trim().parse().map_err(|_| format!("bad x in {pair:?}"))?;
            let y = y.trim().parse().map_err(|_| format!("bad y in {pair:?}"))?;
            Ok([x, y])
        })
        .collect()
}

pub fn format_sites(sites: &[[i32; 2]]) -> String {
    if sites.is_empty() {
        return "none".into();
    }
    sites.iter().map(|[x, y]| format!("{x},{y}")).collect::<Vec<_>>().join(";")
}

/// Applies one setting to `cfg`.
pub fn set_key(cfg: &mut RunConfig, key: &str, value: &str) -> Result<(), String> {
    fn num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
        v.parse().map_err(|_| format!("cannot parse {v:?}"))
    }
    match key {
        "side" => cfg.side = num(value)?,
        "n" => cfg.n = num(value)?,
        "algo" => cfg.algo = value.parse::<Algo>()?,
        "p" => cfg.p = num(value)?,
        "lambda" => cfg.lambda = num(value)?,
        "rho" => cfg.rho = num(value)?,
        "seed" => cfg.seed = num(value)?,
        "max_steps" | "steps" => cfg.max_steps = num(value)?,
        "cadence" => cfg.cadence = num(value)?,
        "stop" => cfg.stop = value.parse::<Stop>()?,
        "food" => cfg.food = parse_sites(value)?,
        "initial" => {
            cfg.initial = match value.trim() {
                "none" | "" => None,
                v => Some(parse_sites(v)?),
            }
        }
        "rates" => {
            cfg.rates = if value.trim().is_empty() {
                Vec::new()
            } else {
                value.split(',').map(|r| num(r.trim())).collect::<Result<_, _>>()?
            }
        }
        _ => return Err("unknown key".into()),
    }
    Ok(())
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (k, v) = body.split_once('=').ok_or(ConfigError::Syntax { line })?;
        let (k, v) = (k.trim(), v.trim());
        set_key(&mut cfg, k, v).map_err(|msg| {
            if msg == "unknown key" {
                ConfigError::UnknownKey { line, key: k.into() }
            } else {
                ConfigError::Value { line, key: k.into(), msg }
            }
        })?;
    }
    Ok(cfg)
}

pub fn render_config(cfg: &RunConfig) -> String {
    let algo = match cfg.algo {
        Algo::Compression => "compression",
        Algo::Spiral => "spiral",
    };
    let stop = match cfg.stop {
        Stop::Never => "never",
        Stop::Gathered => "gathered",
        Stop::Dispersed => "dispersed",
        Stop::Spiral => "spiral",
    };
    let mut out = format!(
        "side = {}\nn = {}\nalgo = {algo}\np = {}\nlambda = {}\nrho = {}\nseed = {}\nmax_steps = {}\ncadence = {}\nstop = {stop}\nfood = {}\n",
        cfg.side, cfg.n, cfg.p, cfg.lambda, cfg.rho, cfg.seed, cfg.max_steps, cfg.cadence,
        format_sites(&cfg.food)
    );
    if let Some(init) = &cfg.initial {
        out += &format!("initial = {}\n", format_sites(init));
    }
    if !cfg.rates.is_empty() {
        let r: Vec<String> = cfg.rates.iter().map(f64::to_string).collect();
        out += &format!("rates = {}\n", r.join(","));
    }
    out
}
