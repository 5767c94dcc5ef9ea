//! Metrics over world snapshots: components, invariants, residual sets,
//! potential, perimeter, circles and the auxiliary parent graph.

use crate::compression_algo::CompressionState;
use crate::lattice::{Axial, Cell, Coord, Direction, LatticeConfig, Torus};
use crate::spiral_algo::{self, SpiralClass, SpiralState};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("cluster wraps around the torus")]
    Wraps,
    #[error("cluster is not connected")]
    NotConnected,
}

/// Connected components of the particles whose state passes `keep`.
pub fn components_by<S: Clone>(world: &LatticeConfig<S>, keep: impl Fn(&S) -> bool) -> Vec<Vec<u32>> {
    let t = world.torus();
    let mut seen = vec![false; world.len()];
    let mut out = Vec::new();
    for id in world.ids() {
        if seen[id as usize] || !keep(world.state(id)) {
            continue;
        }
        seen[id as usize] = true;
        let mut comp = vec![id];
        let mut i = 0;
        while i < comp.len() {
            let at = world.particle(comp[i]).pos;
            for n in t.neighbors(at) {
                if let Some(j) = world.particle_at(n) {
                    if !seen[j as usize] && keep(world.state(j)) {
                        seen[j as usize] = true;
                        comp.push(j);
                    }
                }
            }
            i += 1;
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Components of compression-state and DT particles; food is not a member.
pub fn components(world: &LatticeConfig<CompressionState>) -> Vec<Vec<u32>> {
    components_by(world, |s| s.is_cluster())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub holds: bool,
    pub offending: Vec<Vec<u32>>,
}

/// Every component holds a `C_GF`, `C_F` or `DT` particle.
pub fn check_state_invariant(world: &LatticeConfig<CompressionState>) -> InvariantReport {
    let offending: Vec<Vec<u32>> = components(world)
        .into_iter()
        .filter(|comp| {
            !comp.iter().any(|&id| {
                let s = *world.state(id);
                s.food_bit() || s == CompressionState::DT
            })
        })
        .collect();
    InvariantReport {
        holds: offending.is_empty(),
        offending,
    }
}

fn is_residual_component(world: &LatticeConfig<CompressionState>, comp: &[u32]) -> bool {
    comp.iter().any(|&id| {
        let s = *world.state(id);
        let near = world.adjacent_to_food(world.particle(id).pos);
        s == CompressionState::DT || (s.food_bit() && !near) || (s.is_compression() && !s.food_bit() && near)
    })
}

/// Members of residual components, sorted.
pub fn residual_compression(world: &LatticeConfig<CompressionState>) -> Vec<u32> {
    let mut out: Vec<u32> = components(world)
        .into_iter()
        .filter(|c| is_residual_component(world, c))
        .flatten()
        .collect();
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Potential {
    pub phi: usize,
    pub phi_c: usize,
    pub phi_dt: usize,
    pub phi_t: usize,
}

pub fn potential(world: &LatticeConfig<CompressionState>) -> Potential {
    let mut p = Potential::default();
    for q in world.particles() {
        if q.state.is_compression() {
            p.phi_c += 1;
        }
        if q.state == CompressionState::DT {
            p.phi_dt += 1;
        }
        if q.state.growth() {
            p.phi_t += 1;
        }
    }
    p.phi = p.phi_c + p.phi_dt + p.phi_t;
    p
}

/// Lays a connected set of torus sites out in the plane.
pub fn unwrap_sites(t: &Torus, sites: &[Coord]) -> Result<Vec<Axial>, AnalysisError> {
    if sites.is_empty() {
        return Ok(Vec::new());
    }
    let index: HashMap<Coord, usize> = sites.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut placed: Vec<Option<Axial>> = vec![None; sites.len()];
    placed[0] = Some(Axial::new(0, 0));
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let a = placed[i].expect("queued sites are placed");
        for d in Direction::ALL {
            if let Some(&j) = index.get(&t.neighbor(sites[i], d)) {
                let b = a.step(d);
                match placed[j] {
                    None => {
                        placed[j] = Some(b);
                        queue.push_back(j);
                    }
                    Some(prev) if prev != b => return Err(AnalysisError::Wraps),
                    _ => {}
                }
            }
        }
    }
    let out: Vec<Axial> = placed.into_iter().collect::<Option<_>>().ok_or(AnalysisError::NotConnected)?;
    let span = |f: fn(&Axial) -> i32| {
        let lo = out.iter().map(f).min().unwrap_or(0);
        let hi = out.iter().map(f).max().unwrap_or(0);
        hi - lo + 1
    };
    if span(|a| a.x) >= t.side || span(|a| a.y) >= t.side || span(|a| a.x - a.y) >= t.side {
        return Err(AnalysisError::Wraps);
    }
    Ok(out)
}

/// Length of the closed walk around the outer boundary of a connected planar set.
pub fn perimeter(sites: &[Axial]) -> usize {
    if sites.len() <= 1 {
        return 0;
    }
    let set: HashSet<Axial> = sites.iter().copied().collect();
    let start = *sites.iter().min_by_key(|a| (a.y, a.x)).expect("non-empty");
    // (-1,-1) from the lowest-then-leftmost site is always vacant
    let mut at = start;
    let mut back = Direction::new(4);
    let mut first: Option<(Axial, Direction)> = None;
    let mut steps = 0;
    loop {
        let out = (1..=6)
            .map(|k| back.rotate(k))
            .find(|&d| set.contains(&at.step(d)))
            .expect("connected set with two or more sites");
        match first {
            None => first = Some((at, out)),
            Some(f) if f == (at, out) => return steps,
            _ => {}
        }
        steps += 1;
        at = at.step(out);
        back = out.opposite();
    }
}

/// Perimeter of a set of torus sites.
pub fn cluster_perimeter(t: &Torus, sites: &[Coord]) -> Result<usize, AnalysisError> {
    Ok(perimeter(&unwrap_sites(t, sites)?))
}

/// Minimum perimeter over connected `n`-site sets: the spiral built out from one site.
pub fn p_min(n: usize) -> usize {
    if n <= 1 {
        return 0;
    }
    let mut sites = vec![Axial::new(0, 0)];
    sites.extend(spiral_algo::canonical_spiral(Direction::new(0), n - 1));
    perimeter(&sites)
}

/// `perimeter / p_min(n)`, with ratio 1 when `p_min` is 0.
pub fn alpha_ratio(sites: &[Axial]) -> f64 {
    let pm = p_min(sites.len());
    if pm == 0 {
        1.0
    } else {
        perimeter(sites) as f64 / pm as f64
    }
}

/// True when every vacant site is reachable from outside the set.
pub fn hole_free(sites: &[Axial]) -> bool {
    if sites.is_empty() {
        return true;
    }
    let set: HashSet<Axial> = sites.iter().copied().collect();
    let x0 = sites.iter().map(|a| a.x).min().unwrap() - 1;
    let x1 = sites.iter().map(|a| a.x).max().unwrap() + 1;
    let y0 = sites.iter().map(|a| a.y).min().unwrap() - 1;
    let y1 = sites.iter().map(|a| a.y).max().unwrap() + 1;
    let inside = |a: Axial| a.x >= x0 && a.x <= x1 && a.y >= y0 && a.y <= y1;
    let start = Axial::new(x0, y0);
    let mut seen = HashSet::from([start]);
    let mut stack = vec![start];
    while let Some(a) = stack.pop() {
        for n in a.neighbors() {
            if inside(n) && !set.contains(&n) && seen.insert(n) {
                stack.push(n);
            }
        }
    }
    let box_cells = ((x1 - x0 + 1) * (y1 - y0 + 1)) as usize;
    seen.len() + set.len() == box_cells
}

/// Hole test for torus sites; refuses clusters that wrap.
pub fn is_hole_free(t: &Torus, sites: &[Coord]) -> Result<bool, AnalysisError> {
    Ok(hole_free(&unwrap_sites(t, sites)?))
}

/// Residual particles of a spiral world, sorted.
pub fn residual_spiral(world: &LatticeConfig<SpiralState>) -> Vec<u32> {
    let spiral: HashSet<u32> = spiral_algo::find_spirals(world)
        .into_iter()
        .flat_map(|s| s.members)
        .collect();
    world
        .ids()
        .filter(|id| {
            let p = world.particle(*id);
            match p.state.base() {
                None => false,
                Some(b) => !spiral.contains(id) && (b == 6 || !world.adjacent_to_food(p.pos)),
            }
        })
        .collect()
}

/// A circle: a center site and the direction of position 0 from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Circle {
    pub center: Coord,
    pub zero: Direction,
}

impl Circle {
    pub fn position(&self, t: &Torus, x: usize) -> Coord {
        t.neighbor(self.center, self.zero.rotate(x as i32))
    }
}

/// `Some(verified)` if position `x` holds base `x` with its parent pointing
/// at the center (`x = 0`) or at position `x - 1`.
pub fn correctly_filled(world: &LatticeConfig<SpiralState>, c: &Circle, x: usize) -> Option<bool> {
    let t = world.torus();
    let at = c.position(t, x);
    let target = if x == 0 { c.center } else { c.position(t, x - 1) };
    match world.state_at(at) {
        Some(SpiralState::Comp { base, verified, parent })
            if *base as usize == x && t.neighbor(at, *parent) == target =>
        {
            Some(*verified)
        }
        _ => None,
    }
}

/// The unique circle in which a verified particle is correctly filled.
fn circle_of(t: &Torus, at: Coord, base: u8, parent: Direction) -> Circle {
    let toward = t.neighbor(at, parent);
    if base == 0 {
        return Circle {
            center: toward,
            zero: parent.opposite(),
        };
    }
    // position base-1 is at `toward`; the center sits so that `at` is one step ccw of it
    let e = parent.opposite().rotate(-2);
    let center = t.neighbor(toward, e.opposite());
    Circle {
        center,
        zero: e.rotate(-(base as i32 - 1)),
    }
}

pub fn circle_inconsistency(world: &LatticeConfig<SpiralState>, c: &Circle) -> usize {
    let filled: Vec<Option<bool>> = (0..6).map(|x| correctly_filled(world, c, x)).collect();
    if world.is_food(c.center) {
        (0..6)
            .rev()
            .find(|&x| filled[x] == Some(true) && filled[x + 1..].iter().any(|f| f.is_none()))
            .map_or(0, |x| x + 1)
    } else {
        filled.iter().filter(|f| **f == Some(true)).count()
    }
}

/// Sum of circle values; only circles holding a verified particle can be nonzero.
pub fn inconsistency_value(world: &LatticeConfig<SpiralState>) -> usize {
    let t = world.torus();
    let mut circles = HashSet::new();
    for p in world.particles() {
        if let SpiralState::Comp { base, verified: true, parent } = p.state {
            circles.insert(circle_of(t, p.pos, base, parent));
        }
    }
    circles.iter().map(|c| circle_inconsistency(world, c)).sum()
}

/// Food-centered circle with all six positions correctly filled, if any.
pub fn complete_circle(world: &LatticeConfig<SpiralState>) -> Option<Circle> {
    world.food().iter().find_map(|&center| {
        Direction::ALL
            .into_iter()
            .map(|zero| Circle { center, zero })
            .find(|c| (0..6).all(|x| correctly_filled(world, c, x).is_some()))
    })
}

/// Progress stage 1 to 4.
pub fn stage(world: &LatticeConfig<SpiralState>) -> u8 {
    if inconsistency_value(world) > 0 {
        return 1;
    }
    match complete_circle(world) {
        None => 2,
        Some(c) if (0..6).all(|x| correctly_filled(world, &c, x) == Some(true)) => 4,
        Some(_) => 3,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Node {
    Particle(u32),
    Food(Coord),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuxGraph {
    pub edges: Vec<(u32, Node)>,
    pub max_in_degree: usize,
    /// A non-food node reaching the maximum, if any edge exists.
    pub worst: Option<u32>,
}

/// Edges from stable particles to their parents and from attachable
/// particles to every potential parent.
pub fn auxiliary_graph(world: &LatticeConfig<SpiralState>) -> AuxGraph {
    let t = world.torus();
    let node = |c: Coord| match world.cell(c) {
        Cell::Particle(id) => Some(Node::Particle(id)),
        Cell::Food => Some(Node::Food(c)),
        Cell::Empty => None,
    };
    let mut edges = Vec::new();
    for id in world.ids() {
        let p = world.particle(id);
        let dirs: Vec<Direction> = match spiral_algo::classify(world, id) {
            SpiralClass::Stable { .. } => p.state.parent().into_iter().collect(),
            SpiralClass::Attachable { options, .. } => {
                let mut ds: Vec<Direction> = options.iter().map(|o| o.1).collect();
                ds.sort();
                ds.dedup();
                ds
            }
            _ => Vec::new(),
        };
        for d in dirs {
            if let Some(n) = node(t.neighbor(p.pos, d)) {
                edges.push((id, n));
            }
        }
    }
    let mut indeg: BTreeMap<u32, usize> = BTreeMap::new();
    for (_, n) in &edges {
        if let Node::Particle(j) = n {
            *indeg.entry(*j).or_default() += 1;
        }
    }
    let worst = indeg.iter().max_by_key(|(id, k)| (**k, std::cmp::Reverse(**id))).map(|(id, _)| *id);
    AuxGraph {
        max_in_degree: worst.map_or(0, |w| indeg[&w]),
        worst,
        edges,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingStats {
    pub mean: f64,
    pub std_err: f64,
    pub bound: f64,
}

/// Mean first time a walk from `k` hits 0 when it steps down with
/// probability `1/n` and up with probability `eta/n`.
pub fn biased_walk_hitting_time<R: Rng + ?Sized>(n: u32, k: u32, eta: f64, trials: u32, rng: &mut R) -> HittingStats {
    let p = 1.0 / n as f64;
    let q = eta * p;
    let bound = (n as f64 * k as f64) / (1.0 - eta);
    if k == 0 || trials == 0 {
        return HittingStats { mean: 0.0, std_err: 0.0, bound };
    }
    let mut sum = 0.0;
    let mut sq = 0.0;
    for _ in 0..trials {
        let mut x = k as i64;
        let mut steps = 0u64;
        while x > 0 {
            let u: f64 = rng.gen();
            if u < p {
                x -= 1;
            } else if u < p + q {
                x += 1;
            }
            steps += 1;
        }
        sum += steps as f64;
        sq += (steps as f64).powi(2);
    }
    let m = sum / trials as f64;
    let var = (sq / trials as f64 - m * m).max(0.0);
    HittingStats {
        mean: m,
        std_err: (var / trials as f64).sqrt(),
        bound,
    }
}

/// One sample of the run metrics. `stage` and `inconsistency` are 0 for
/// compression runs; the potential fields are compression-state counts for
/// spiral runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFrame {
    pub step: u64,
    pub phi: usize,
    pub phi_c: usize,
    pub phi_dt: usize,
    pub phi_t: usize,
    pub perimeter: usize,
    pub cluster_size: usize,
    /// NaN (null in JSON) when the cluster wraps around the torus.
    #[serde(deserialize_with = "nan_if_null")]
    pub alpha: f64,
    pub n_residual: usize,
    pub inconsistency: usize,
    pub stage: u8,
    pub cluster_count: usize,
    pub density: f64,
    pub n_by_state: BTreeMap<String, usize>,
}

fn nan_if_null<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

pub const CSV_COLUMNS: [&str; 14] = [
    "step",
    "phi",
    "phi_c",
    "phi_dt",
    "phi_t",
    "perimeter",
    "cluster_size",
    "alpha",
    "n_residual",
    "inconsistency",
    "stage",
    "cluster_count",
    "density",
    "n_by_state",
];

impl MetricsFrame {
    /// Fields in `CSV_COLUMNS` order; state counts as `label:count` joined by `;`.
    pub fn csv_record(&self) -> Vec<String> {
        let counts: Vec<String> = self.n_by_state.iter().map(|(k, v)| format!("{k}:{v}")).collect();
        vec![
            self.step.to_string(),
            self.phi.to_string(),
            self.phi_c.to_string(),
            self.phi_dt.to_string(),
            self.phi_t.to_string(),
            self.perimeter.to_string(),
            self.cluster_size.to_string(),
            format!("{:.6}", self.alpha),
            self.n_residual.to_string(),
            self.inconsistency.to_string(),
            self.stage.to_string(),
            self.cluster_count.to_string(),
            format!("{:.6}", self.density),
            counts.join(";"),
        ]
    }
}

/// Fraction of particles with at least three occupied neighbors.
pub fn density_proxy<S: Clone>(world: &LatticeConfig<S>) -> f64 {
    if world.is_empty() {
        return 0.0;
    }
    let t = world.torus();
    let dense = world
        .particles()
        .iter()
        .filter(|p| t.neighbors(p.pos).iter().filter(|&&n| !world.is_vacant(n)).count() >= 3)
        .count();
    dense as f64 / world.len() as f64
}

/// Largest component plus food sites touching it, with its perimeter.
fn largest_cluster<S: Clone>(world: &LatticeConfig<S>, comps: &[Vec<u32>]) -> (usize, usize, f64) {
    let Some(big) = comps.iter().max_by_key(|c| c.len()) else {
        return (0, 0, 1.0);
    };
    let t = world.torus();
    let mut sites: Vec<Coord> = big.iter().map(|&id| world.particle(id).pos).collect();
    for &f in world.food() {
        if t.neighbors(f).iter().any(|n| sites.contains(n)) {
            sites.push(f);
        }
    }
    match unwrap_sites(t, &sites) {
        Ok(planar) => (perimeter(&planar), planar.len(), alpha_ratio(&planar)),
        Err(_) => (0, sites.len(), f64::NAN),
    }
}

pub fn compression_frame(world: &LatticeConfig<CompressionState>, step: u64) -> MetricsFrame {
    let pot = potential(world);
    let comps = components(world);
    let (perimeter, cluster_size, alpha) = largest_cluster(world, &comps);
    let mut n_by_state = BTreeMap::new();
    for s in CompressionState::ALL {
        n_by_state.insert(s.label().to_string(), 0);
    }
    for p in world.particles() {
        *n_by_state.entry(p.state.label().to_string()).or_default() += 1;
    }
    MetricsFrame {
        step,
        phi: pot.phi,
        phi_c: pot.phi_c,
        phi_dt: pot.phi_dt,
        phi_t: pot.phi_t,
        perimeter,
        cluster_size,
        alpha,
        n_residual: residual_compression(world).len(),
        inconsistency: 0,
        stage: 0,
        cluster_count: comps.len(),
        density: density_proxy(world),
        n_by_state,
    }
}

pub fn spiral_frame(world: &LatticeConfig<SpiralState>, step: u64) -> MetricsFrame {
    let comps = components_by(world, |s| s.is_comp());
    let (perimeter, cluster_size, alpha) = largest_cluster(world, &comps);
    let mut n_by_state = BTreeMap::new();
    for p in world.particles() {
        *n_by_state.entry(p.state.label()).or_default() += 1;
    }
    let phi_c = world.particles().iter().filter(|p| p.state.is_comp()).count();
    MetricsFrame {
        step,
        phi: phi_c,
        phi_c,
        phi_dt: 0,
        phi_t: 0,
        perimeter,
        cluster_size,
        alpha,
        n_residual: residual_spiral(world).len(),
        inconsistency: inconsistency_value(world),
        stage: stage(world),
        cluster_count: comps.len(),
        density: density_proxy(world),
        n_by_state,
    }
}
