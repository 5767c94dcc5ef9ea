//! Deterministic move sequences that reshape any connected cluster around a
//! fixed food site into a straight line, every step a valid compression move.
//!
//! Work happens on the plane with the food at the origin. A `CombFrame`
//! assigns `(lane, depth)` coordinates: lane `l` on the source spine is
//! `l` steps out, depth counts steps "down" toward the target spine.

use crate::compression_algo::{check_move, local_disconnection, ClusterView, Verdict};
use crate::lattice::{Axial, Coord, Direction, LatticeConfig, Torus};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CombError {
    #[error("position ({0},{1}) is not combable")]
    NotCombable(i32, i32),
    #[error("move {0:?} -> {1:?} is not valid ({2:?})")]
    InvalidMove(Axial, Axial, Verdict),
    #[error("no valid route from {0:?} to {1:?}")]
    NoRoute(Axial, Axial),
    #[error("configuration is not connected")]
    Disconnected,
    #[error("a particle sits on the food site")]
    OnFood,
    #[error("torus side {side} too small for {n} particles (need at least {need})")]
    NoSpace { side: i32, n: usize, need: i32 },
    #[error("world must hold exactly one food site")]
    FoodCount,
    #[error("procedure stuck: {0}")]
    Stuck(String),
}

const ORIGIN: Axial = Axial { x: 0, y: 0 };

/// Particle sites around a food site at the origin.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Planar {
    sites: BTreeSet<Axial>,
}

impl ClusterView for Planar {
    type Site = Axial;

    fn step(&self, s: Axial, d: Direction) -> Axial {
        s.step(d)
    }

    fn is_cluster(&self, s: Axial) -> bool {
        s == ORIGIN || self.sites.contains(&s)
    }

    fn is_vacant(&self, s: Axial) -> bool {
        !self.is_cluster(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Move {
    pub from: Axial,
    pub to: Axial,
}

impl Planar {
    pub fn new(sites: impl IntoIterator<Item = Axial>) -> Result<Self, CombError> {
        let p = Planar {
            sites: sites.into_iter().collect(),
        };
        if p.sites.contains(&ORIGIN) {
            return Err(CombError::OnFood);
        }
        if !p.is_connected() {
            return Err(CombError::Disconnected);
        }
        Ok(p)
    }

    /// Straight line of `n` particles out from the food in direction `d`.
    pub fn line(d: Direction, n: usize) -> Self {
        Planar {
            sites: (1..=n as i32).map(|m| Axial::unit(d).scale(m)).collect(),
        }
    }

    /// All particles of a single-food world, laid out around the food.
    pub fn from_world<S: Clone>(world: &LatticeConfig<S>) -> Result<Self, CombError> {
        let [food] = world.food() else {
            return Err(CombError::FoodCount);
        };
        let n = world.len();
        let need = 2 * n as i32 + 6;
        if world.side() < need {
            return Err(CombError::NoSpace {
                side: world.side(),
                n,
                need,
            });
        }
        let t = world.torus();
        Planar::new(world.particles().iter().map(|p| t.displacement(*food, p.pos)))
    }

    /// Torus coordinates for these sites with the food at `food`.
    pub fn to_torus(&self, t: &Torus, food: Coord) -> Vec<Coord> {
        self.sites.iter().map(|&a| t.place(food, a)).collect()
    }

    pub fn sites(&self) -> impl Iterator<Item = Axial> + '_ {
        self.sites.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn contains(&self, a: Axial) -> bool {
        self.sites.contains(&a)
    }

    /// Particles plus the food form one connected set.
    pub fn is_connected(&self) -> bool {
        let mut seen = HashSet::from([ORIGIN]);
        let mut stack = vec![ORIGIN];
        while let Some(a) = stack.pop() {
            for n in a.neighbors() {
                if self.sites.contains(&n) && seen.insert(n) {
                    stack.push(n);
                }
            }
        }
        seen.len() == self.sites.len() + 1
    }

    /// Applies one move after checking it is a valid compression move.
    pub fn apply(&mut self, m: Move) -> Result<(), CombError> {
        let d = m
            .from
            .direction_to(m.to)
            .ok_or(CombError::InvalidMove(m.from, m.to, Verdict::InvalidProperty))?;
        if !self.sites.contains(&m.from) {
            return Err(CombError::InvalidMove(m.from, m.to, Verdict::InvalidProperty));
        }
        let v = check_move(self, m.from, d);
        if v != Verdict::Valid {
            return Err(CombError::InvalidMove(m.from, m.to, v));
        }
        debug_assert!(!local_disconnection(self, m.from, d));
        self.sites.remove(&m.from);
        self.sites.insert(m.to);
        Ok(())
    }

    pub fn is_move_valid(&self, m: Move) -> bool {
        match m.from.direction_to(m.to) {
            Some(d) => self.sites.contains(&m.from) && check_move(self, m.from, d) == Verdict::Valid,
            None => false,
        }
    }

    /// Spine data for each of the six directions.
    pub fn spines(&self) -> [SpineView; 6] {
        Direction::ALL.map(|k| self.spine(k))
    }

    pub fn spine(&self, k: Direction) -> SpineView {
        let on_spine = |a: Axial| spine_distance(a, k).is_some();
        let mut length = 0;
        let mut extent = 0;
        let mut anchor = None;
        for &a in &self.sites {
            let Some(m) = spine_distance(a, k) else {
                continue;
            };
            extent = extent.max(m);
            let flanked = a
                .neighbors()
                .iter()
                .any(|&n| n != ORIGIN && self.sites.contains(&n) && !on_spine(n));
            if flanked && m > length {
                length = m;
                anchor = Some(a);
            }
        }
        SpineView {
            length,
            extent: extent.max(length),
            anchor,
        }
    }

    pub fn min_spine_length(&self) -> i32 {
        self.spines().iter().map(|s| s.length).min().unwrap_or(0)
    }

    /// All particles on one spine, filling distances 1..=n.
    pub fn is_line(&self) -> bool {
        let n = self.sites.len() as i32;
        n == 0
            || Direction::ALL
                .iter()
                .any(|&k| (1..=n).all(|m| self.sites.contains(&Axial::unit(k).scale(m))))
    }

    fn occupied(&self, a: Axial) -> bool {
        self.is_cluster(a)
    }
}

/// Distance along spine `k`, if `a` lies on it.
fn spine_distance(a: Axial, k: Direction) -> Option<i32> {
    let u = Axial::unit(k);
    let m = a.norm();
    (m > 0 && u.scale(m) == a).then_some(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpineView {
    /// Distance of the anchor, 0 without one.
    pub length: i32,
    /// Distance of the furthest particle on the spine (at least `length`).
    pub extent: i32,
    pub anchor: Option<Axial>,
}

/// One of the twelve comb orientations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CombFrame {
    pub source: Direction,
    pub reflected: bool,
}

impl CombFrame {
    pub fn new(source: Direction, reflected: bool) -> Self {
        CombFrame { source, reflected }
    }

    pub fn all() -> impl Iterator<Item = CombFrame> {
        [false, true]
            .into_iter()
            .flat_map(|r| Direction::ALL.into_iter().map(move |k| CombFrame::new(k, r)))
    }

    /// Direction of increasing depth.
    pub fn down(&self) -> Direction {
        self.source.rotate(if self.reflected { -2 } else { 2 })
    }

    pub fn target(&self) -> Direction {
        self.source.rotate(if self.reflected { -1 } else { 1 })
    }

    pub fn site(&self, l: i32, d: i32) -> Axial {
        Axial::unit(self.source).scale(l).add(Axial::unit(self.down()).scale(d))
    }

    pub fn coords(&self, a: Axial) -> (i32, i32) {
        let u = Axial::unit(self.source);
        let w = Axial::unit(self.down());
        let det = u.x * w.y - u.y * w.x;
        ((a.x * w.y - a.y * w.x) / det, (u.x * a.y - u.y * a.x) / det)
    }

    pub fn up_left(&self) -> Direction {
        self.source
    }
    pub fn down_right(&self) -> Direction {
        self.source.opposite()
    }
    pub fn down_left(&self) -> Direction {
        self.target()
    }
    pub fn up_right(&self) -> Direction {
        self.target().opposite()
    }
}

fn in_region(l0: i32, d0: i32, l: i32, d: i32) -> bool {
    l >= l0 && d - l >= d0 - l0
}

/// Particles of the residual region of `(l, d)`, as frame coordinates.
fn region_particles(cfg: &Planar, f: &CombFrame, l: i32, d: i32) -> Vec<(i32, i32)> {
    cfg.sites()
        .map(|a| f.coords(a))
        .filter(|&(x, y)| in_region(l, d, x, y))
        .collect()
}

pub fn is_combed(cfg: &Planar, f: &CombFrame, l: i32, d: i32) -> bool {
    let occ = |x: i32, y: i32| cfg.occupied(f.site(x, y));
    let region = region_particles(cfg, f, l, d);
    for &(x, y) in &region {
        if occ(x, y - 1) || !occ(x - 1, y - 1) {
            return false;
        }
    }
    for &(x, y) in &region {
        if x == l && occ(x - 1, y) {
            // the root of this line has a particle below it
            return false;
        }
    }
    true
}

pub fn is_combable(cfg: &Planar, f: &CombFrame, l: i32, d: i32) -> bool {
    l > 0 && d >= 0 && !cfg.occupied(f.site(l, d - 1)) && is_combed(cfg, f, l + 1, d + 1)
}

/// Accumulates validated moves.
struct Run {
    cfg: Planar,
    moves: Vec<Move>,
}

impl Run {
    fn new(cfg: &Planar) -> Self {
        Run {
            cfg: cfg.clone(),
            moves: Vec::new(),
        }
    }

    fn go(&mut self, from: Axial, d: Direction) -> Result<Axial, CombError> {
        let m = Move { from, to: from.step(d) };
        self.cfg.apply(m)?;
        self.moves.push(m);
        Ok(m.to)
    }

    /// Moves one particle from `from` to `to` along valid single steps that
    /// stay inside `allowed`.
    fn route(&mut self, from: Axial, to: Axial, allowed: &dyn Fn(Axial) -> bool) -> Result<(), CombError> {
        if from == to {
            return Ok(());
        }
        let path = find_route(&self.cfg, from, to, allowed).ok_or(CombError::NoRoute(from, to))?;
        let mut at = from;
        for next in path {
            let d = at.direction_to(next).expect("route steps are adjacent");
            at = self.go(at, d)?;
        }
        Ok(())
    }
}

/// Shortest valid single-particle route, other particles fixed.
fn find_route(cfg: &Planar, from: Axial, to: Axial, allowed: &dyn Fn(Axial) -> bool) -> Option<Vec<Axial>> {
    let mut work = cfg.clone();
    work.sites.remove(&from);
    let limit = 4 * (cfg.len() as i32 + 4);
    let mut prev: HashMap<Axial, Axial> = HashMap::new();
    let mut queue = VecDeque::from([from]);
    prev.insert(from, from);
    while let Some(p) = queue.pop_front() {
        if p == to {
            let mut path = vec![p];
            let mut c = p;
            while prev[&c] != c {
                c = prev[&c];
                path.push(c);
            }
            path.pop();
            path.reverse();
            return Some(path);
        }
        work.sites.insert(p);
        for d in Direction::ALL {
            let q = p.step(d);
            if prev.contains_key(&q) || !allowed(q) || q.norm() > limit {
                continue;
            }
            if check_move(&work, p, d) == Verdict::Valid {
                prev.insert(q, p);
                queue.push_back(q);
            }
        }
        work.sites.remove(&p);
    }
    None
}

fn shiftable(cfg: &Planar, f: &CombFrame, a: Axial) -> bool {
    if !cfg.contains(a) {
        return false;
    }
    let below = a.step(f.down());
    let ur = a.step(f.up_right());
    let occupied: Vec<Axial> = a.neighbors().into_iter().filter(|&n| cfg.occupied(n)).collect();
    occupied.len() == 2 && occupied.contains(&below) && occupied.contains(&ur)
}

/// Moves that comb the combable position `(l, d)` in frame `f`.
pub fn comb(cfg: &Planar, f: &CombFrame, l: i32, d: i32) -> Result<Vec<Move>, CombError> {
    let mut run = Run::new(cfg);
    comb_in(&mut run, f, l, d)?;
    Ok(run.moves)
}

fn comb_in(run: &mut Run, f: &CombFrame, l: i32, d: i32) -> Result<(), CombError> {
    if !is_combable(&run.cfg, f, l, d) {
        return Err(CombError::NotCombable(l, d));
    }
    form_lines(run, f, l, d)?;
    merge_lines(run, f, l, d)?;
    if !is_combed(&run.cfg, f, l, d) {
        return Err(CombError::Stuck(format!("({l},{d}) not combed after comb")));
    }
    Ok(())
}

fn lane_runs(cfg: &Planar, f: &CombFrame, l: i32, d: i32) -> Vec<(i32, i32)> {
    let mut depths: Vec<i32> = cfg
        .sites()
        .map(|a| f.coords(a))
        .filter(|&(x, y)| x == l && y >= d)
        .map(|(_, y)| y)
        .collect();
    depths.sort_unstable();
    let mut runs: Vec<(i32, i32)> = Vec::new();
    for y in depths {
        match runs.last_mut() {
            Some(r) if r.1 + 1 == y => r.1 = y,
            _ => runs.push((y, y)),
        }
    }
    runs
}

fn form_lines(run: &mut Run, f: &CombFrame, l: i32, d: i32) -> Result<(), CombError> {
    let cap = 8 * (run.cfg.len() + 2) * (run.cfg.len() + 2);
    for _ in 0..cap {
        let Some(&(top, bottom)) = lane_runs(&run.cfg, f, l, d).iter().find(|r| r.1 > r.0) else {
            return Ok(());
        };
        let p = f.site(l, top);
        if shiftable(&run.cfg, f, p) {
            let chain = |i: i32| f.site(l - 2 * i, top);
            let mut k = 1;
            while shiftable(&run.cfg, f, chain(k)) {
                k += 1;
            }
            let next = chain(k);
            let up = next.step(f.down().opposite());
            let dl = next.step(f.down_left());
            if !run.cfg.occupied(next) || run.cfg.occupied(up) || run.cfg.occupied(dl) {
                for i in (0..k).rev() {
                    run.go(chain(i), f.down_right())?;
                }
            } else {
                if next == ORIGIN {
                    return Err(CombError::Stuck("shift would move the food".into()));
                }
                for i in (1..=k).rev() {
                    run.go(chain(i), f.up_left())?;
                }
            }
            continue;
        }
        // walk p around the component to the end of the line hanging below it
        let mut tail = 0;
        while run.cfg.contains(f.site(l + 1 + tail, bottom + 1 + tail)) {
            tail += 1;
        }
        let dest = f.site(l + 1 + tail, bottom + 1 + tail);
        let mut path = vec![f.site(l + 1, top + 1)];
        for y in top + 2..=bottom {
            path.push(f.site(l + 1, y));
        }
        for i in 1..=tail {
            path.push(f.site(l + 1 + i, bottom + i));
        }
        path.push(dest);
        let mut at = p;
        let snapshot = (run.cfg.clone(), run.moves.len());
        let mut ok = true;
        for next in path {
            let dir = at.direction_to(next).expect("path steps are adjacent");
            if run.go(at, dir).is_err() {
                ok = false;
                break;
            }
            at = next;
        }
        if !ok {
            run.cfg = snapshot.0;
            run.moves.truncate(snapshot.1);
            let allowed = |a: Axial| {
                let (x, y) = f.coords(a);
                in_region(l, d, x, y)
            };
            run.route(p, dest, &allowed)?;
        }
    }
    Err(CombError::Stuck("line formation did not finish".into()))
}

fn merge_lines(run: &mut Run, f: &CombFrame, l: i32, d: i32) -> Result<(), CombError> {
    let mut tops: Vec<i32> = lane_runs(&run.cfg, f, l, d).into_iter().map(|r| r.0).collect();
    tops.sort_unstable_by(|a, b| b.cmp(a));
    let occ = |cfg: &Planar, x: i32, y: i32| cfg.occupied(f.site(x, y));
    let line_len = |cfg: &Planar, s: i32| {
        let mut n = 0;
        while cfg.contains(f.site(l + n, s + n)) {
            n += 1;
        }
        n
    };
    let cap = 4 * (run.cfg.len() as i32 + 4) * (run.cfg.len() as i32 + 4);
    for mut s in tops {
        let mut guard = 0;
        loop {
            guard += 1;
            if guard > cap {
                return Err(CombError::Stuck("line merging did not settle".into()));
            }
            if occ(&run.cfg, l - 1, s - 1) && !occ(&run.cfg, l - 1, s) {
                break;
            }
            let len = line_len(&run.cfg, s);
            if occ(&run.cfg, l, s + 1) {
                // merge into the line directly below, leftmost particle first
                let below = s + 1;
                let allowed = |a: Axial| {
                    let (x, y) = f.coords(a);
                    in_region(l, d, x, y)
                };
                for i in (0..len).rev() {
                    let m = line_len(&run.cfg, below);
                    let dest = f.site(l + m, below + m);
                    run.route(f.site(l + i, s + i), dest, &allowed)?;
                }
                break;
            }
            for i in 0..len {
                run.go(f.site(l + i, s + i), f.down())?;
            }
            s += 1;
        }
    }
    Ok(())
}

/// Combs the sequence that sweeps the wedge left of the source spine.
pub fn spine_comb(cfg: &Planar, f: &CombFrame) -> Result<Vec<Move>, CombError> {
    let mut run = Run::new(cfg);
    spine_comb_in(&mut run, f)?;
    Ok(run.moves)
}

fn spine_comb_in(run: &mut Run, f: &CombFrame) -> Result<(), CombError> {
    let spine = run.cfg.spine(f.source);
    let (r, rt) = (spine.length, spine.extent);
    let x1 = run.cfg.sites().map(|a| f.coords(a).0).max().unwrap_or(0);
    let mut x = x1;
    while x > r {
        let y = if x > rt { 1 } else { 0 };
        comb_in(run, f, x, y)?;
        x -= 1;
    }
    Ok(())
}

/// Moves that strictly lower the minimum spine length (which must be at least 1).
pub fn reduce_min_spine(cfg: &Planar) -> Result<Vec<Move>, CombError> {
    let r = cfg.min_spine_length();
    if r < 1 {
        return Err(CombError::Stuck("minimum spine length is already 0".into()));
    }
    if !cfg.is_connected() {
        return Err(CombError::Disconnected);
    }
    let mut run = Run::new(cfg);
    let spines = cfg.spines();
    let s0 = spines.iter().position(|s| s.length == r).expect("minimum exists") as i32;
    for i in 0..7 {
        let f = CombFrame::new(Direction::new(s0 + i), false);
        spine_comb_in(&mut run, &f)?;
        if run.cfg.min_spine_length() < r {
            return Ok(run.moves);
        }
        // gap strictly between the two spines on the distance-r segment
        if let Some(g) = (1..r).find(|&g| !run.cfg.occupied(f.site(r, g))) {
            comb_in(&mut run, &f, r, g + 1)?;
            if run.cfg.min_spine_length() < r {
                return Ok(run.moves);
            }
            return Err(CombError::Stuck("gap comb did not shorten a spine".into()));
        }
    }
    reduce_hexagon(&mut run, r)?;
    Ok(run.moves)
}

/// Tries `attempt` on a copy; keeps it only if the minimum spine shrank.
fn try_on(run: &mut Run, r: i32, attempt: impl FnOnce(&mut Run) -> Result<(), CombError>) -> bool {
    let mut trial = Run::new(&run.cfg);
    if attempt(&mut trial).is_ok() && trial.cfg.min_spine_length() < r {
        run.cfg = trial.cfg;
        run.moves.extend(trial.moves);
        true
    } else {
        false
    }
}

/// Frames in which `a` sits strictly inside the left side at distance `r`.
fn side_frames(a: Axial, r: i32) -> Vec<(CombFrame, i32)> {
    CombFrame::all()
        .filter_map(|f| {
            let (x, y) = f.coords(a);
            (x == r && y > 0 && y < r).then_some((f, y))
        })
        .collect()
}

fn comb_below_gap(run: &mut Run, r: i32, gap: Axial) -> Result<(), CombError> {
    for (f, g) in side_frames(gap, r) {
        if is_combable(&run.cfg, &f, r, g + 1) {
            comb_in(run, &f, r, g + 1)?;
            return Ok(());
        }
    }
    Err(CombError::NotCombable(r, -1))
}

fn ring(r: i32) -> Vec<Axial> {
    let mut out = Vec::new();
    for k in Direction::ALL {
        let mut at = Axial::unit(k).scale(r);
        for _ in 0..r {
            out.push(at);
            at = at.step(k.rotate(2));
        }
    }
    out
}

fn reduce_hexagon(run: &mut Run, r: i32) -> Result<(), CombError> {
    let hex = ring(r);
    let gaps: Vec<Axial> = hex.iter().copied().filter(|&a| !run.cfg.occupied(a)).collect();
    for gap in gaps {
        if try_on(run, r, |t| comb_below_gap(t, r, gap)) {
            return Ok(());
        }
    }
    let particles: Vec<Axial> = hex.iter().copied().filter(|&a| run.cfg.contains(a)).collect();
    if r == 1 {
        for &a in &particles {
            for d in Direction::ALL {
                let to = a.step(d);
                if to.norm() == 2 && Direction::ALL.iter().all(|&k| spine_distance(to, k).is_none()) {
                    let m = Move { from: a, to };
                    if try_on(run, r, |t| t.go(m.from, d).map(|_| ())) {
                        return Ok(());
                    }
                }
            }
        }
    }
    // corner moved down-left with its tail following
    for f in CombFrame::all() {
        let corner = f.site(r, 0);
        if !run.cfg.contains(corner) {
            continue;
        }
        let attempt = |t: &mut Run| {
            let mut m = r;
            while t.cfg.contains(f.site(m, 0)) {
                t.go(f.site(m, 0), f.down_left())?;
                m += 1;
            }
            Ok(())
        };
        if try_on(run, r, attempt) {
            return Ok(());
        }
    }
    // a side particle stepped inward or outward, then the gap combed
    for &v0 in &particles {
        if Direction::ALL.iter().any(|&k| spine_distance(v0, k).is_some()) {
            continue;
        }
        for d in Direction::ALL {
            let to = v0.step(d);
            if to.norm() == r {
                continue;
            }
            let attempt = |t: &mut Run| {
                t.go(v0, d)?;
                comb_below_gap(t, r, v0)
            };
            if try_on(run, r, attempt) {
                return Ok(());
            }
        }
    }
    Err(CombError::Stuck(format!("no reduction found for hexagon of radius {r}")))
}

/// Moves that turn the configuration into a straight line from the food.
pub fn flatten_to_line(cfg: &Planar) -> Result<Vec<Move>, CombError> {
    if !cfg.is_connected() {
        return Err(CombError::Disconnected);
    }
    let mut run = Run::new(cfg);
    if cfg.is_line() {
        return Ok(Vec::new());
    }
    loop {
        let r = run.cfg.min_spine_length();
        if r == 0 {
            break;
        }
        let moves = reduce_min_spine(&run.cfg)?;
        for m in moves {
            run.cfg.apply(m)?;
            run.moves.push(m);
        }
    }
    let spines = run.cfg.spines();
    let s0 = spines.iter().position(|s| s.length == 0).expect("minimum is 0") as i32;
    for i in 0..7 {
        if run.cfg.is_line() {
            break;
        }
        spine_comb_in(&mut run, &CombFrame::new(Direction::new(s0 + i), false))?;
    }
    if !run.cfg.is_line() {
        return Err(CombError::Stuck("radius-0 combs did not produce a line".into()));
    }
    Ok(run.moves)
}

/// Moves that turn a line into the line along `to`, end particle first.
pub fn reorient_line(cfg: &Planar, to: Direction) -> Result<Vec<Move>, CombError> {
    if !cfg.is_line() {
        return Err(CombError::Stuck("not a line".into()));
    }
    let n = cfg.len() as i32;
    let Some(from) = Direction::ALL.into_iter().find(|&k| cfg.contains(Axial::unit(k))) else {
        return Ok(Vec::new());
    };
    if from == to {
        return Ok(Vec::new());
    }
    let mut run = Run::new(cfg);
    let everywhere = |_: Axial| true;
    for (i, m) in (1..=n).rev().enumerate() {
        let dest = Axial::unit(to).scale(i as i32 + 1);
        run.route(Axial::unit(from).scale(m), dest, &everywhere)?;
    }
    Ok(run.moves)
}

/// Checks and applies a sequence, returning the final configuration.
pub fn apply_moves(cfg: &Planar, moves: &[Move]) -> Result<Planar, CombError> {
    let mut out = cfg.clone();
    for &m in moves {
        out.apply(m)?;
    }
    Ok(out)
}

/// `[[[x,y],[x,y]], ...]` with coordinates relative to the food.
pub fn moves_json(moves: &[Move]) -> String {
    let pairs: Vec<[[i32; 2]; 2]> = moves
        .iter()
        .map(|m| [[m.from.x, m.from.y], [m.to.x, m.to.y]])
        .collect();
    serde_json::to_string(&pairs).expect("plain arrays serialize")
}

/// Connected configuration of `n` particles grown by random attachment.
pub fn random_connected<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Planar {
    let mut sites: BTreeSet<Axial> = BTreeSet::new();
    let mut frontier: Vec<Axial> = ORIGIN.neighbors().to_vec();
    while sites.len() < n {
        let i = rng.gen_range(0..frontier.len());
        let a = frontier.swap_remove(i);
        if a == ORIGIN || sites.contains(&a) {
            continue;
        }
        sites.insert(a);
        for b in a.neighbors() {
            if b != ORIGIN && !sites.contains(&b) {
                frontier.push(b);
            }
        }
    }
    Planar { sites }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis;
    use proptest::prelude::{prop_assert, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(sites: &[(i32, i32)]) -> Planar {
        Planar::new(sites.iter().map(|&(x, y)| Axial::new(x, y))).unwrap()
    }

    #[test]
    fn frame_is_a_bijection() {
        for f in CombFrame::all() {
            for l in -4..5 {
                for d in -4..5 {
                    assert_eq!(f.coords(f.site(l, d)), (l, d));
                }
            }
            assert_eq!(f.site(3, 3), Axial::unit(f.target()).scale(3));
            assert_eq!(f.site(0, 1).step(f.up_left()), f.site(1, 1));
            assert_eq!(f.site(0, 0).step(f.down_left()), f.site(1, 1));
        }
    }

    #[test]
    fn spine_lengths_of_a_line_and_hexagon() {
        let line = Planar::line(Direction::new(0), 4);
        assert!(line.spines().iter().all(|s| s.length == 0));
        assert_eq!(line.spine(Direction::new(0)).extent, 4);
        let hex = Planar::new(ORIGIN.neighbors()).unwrap();
        assert!(hex.spines().iter().all(|s| s.length == 1));
    }

    #[test]
    fn empty_region_is_combed() {
        let cfg = Planar::line(Direction::new(3), 3);
        let f = CombFrame::new(Direction::new(0), false);
        assert!(is_combed(&cfg, &f, 2, 0));
        assert!(is_combable(&cfg, &f, 2, 0));
        assert_eq!(comb(&cfg, &f, 2, 0).unwrap(), vec![]);
    }

    #[test]
    fn stacked_region_particles_are_not_combed() {
        let f = CombFrame::new(Direction::new(0), false);
        let sites: Vec<Axial> = [(0, 1), (1, 1), (1, 2), (1, 3)].iter().map(|&(l, d)| f.site(l, d)).collect();
        let cfg = Planar::new(sites).unwrap();
        assert!(!is_combed(&cfg, &f, 1, 1));
        assert!(!is_combable(&cfg, &f, 1, 2));
        assert!(matches!(comb(&cfg, &f, 1, 2), Err(CombError::NotCombable(1, 2))));
    }

    #[test]
    fn line_merging_matches_drawing() {
        let f = CombFrame::new(Direction::new(0), false);
        let (l, d) = (3, 2);
        let mut lane_depth = vec![];
        for y in [d, d + 1, d + 2, d + 3, d + 5, d + 6] {
            lane_depth.push((l - 1, y));
        }
        for (x, y) in [(l, d + 1), (l, d + 3), (l, d + 6), (l + 1, d + 2), (l + 1, d + 4), (l + 1, d + 7), (l + 2, d + 5)] {
            lane_depth.push((x, y));
        }
        for y in 1..=7 {
            lane_depth.push((1, y));
        }
        let cfg = Planar::new(lane_depth.iter().map(|&(x, y)| f.site(x, y))).unwrap();
        assert!(is_combable(&cfg, &f, l, d));
        let moves = comb(&cfg, &f, l, d).unwrap();
        let after = apply_moves(&cfg, &moves).unwrap();
        let region: BTreeSet<(i32, i32)> = region_particles(&after, &f, l, d).into_iter().collect();
        let expect: BTreeSet<(i32, i32)> = [
            (l, d + 4),
            (l + 1, d + 5),
            (l + 2, d + 6),
            (l + 3, d + 7),
            (l + 4, d + 8),
            (l, d + 7),
            (l + 1, d + 8),
        ]
        .into_iter()
        .collect();
        assert_eq!(region, expect);
    }

    #[test]
    fn small_l_shape_flattens() {
        let cfg = p(&[(1, 0), (2, 1)]);
        let moves = flatten_to_line(&cfg).unwrap();
        assert!(moves.len() <= 10);
        assert!(apply_moves(&cfg, &moves).unwrap().is_line());
    }

    #[test]
    fn line_needs_no_moves() {
        assert!(flatten_to_line(&Planar::line(Direction::new(4), 5)).unwrap().is_empty());
    }

    #[test]
    fn reorient_moves_line() {
        let cfg = Planar::line(Direction::new(0), 3);
        let moves = reorient_line(&cfg, Direction::new(3)).unwrap();
        let out = apply_moves(&cfg, &moves).unwrap();
        assert_eq!(out, Planar::line(Direction::new(3), 3));
    }

    #[test]
    fn json_export() {
        let m = [Move { from: Axial::new(1, 0), to: Axial::new(1, 1) }];
        assert_eq!(moves_json(&m), "[[[1,0],[1,1]]]");
    }

    #[test]
    fn from_world_checks_space() {
        let mut w: LatticeConfig<u8> = LatticeConfig::new(10).unwrap();
        w.place_food(Coord::new(0, 0)).unwrap();
        w.add_particle(Coord::new(9, 9), 0).unwrap();
        let cfg = Planar::from_world(&w).unwrap();
        assert!(cfg.contains(Axial::new(-1, -1)));
        for i in 1..4 {
            w.add_particle(Coord::new(i, 0), 0).unwrap();
        }
        assert!(matches!(Planar::from_world(&w), Err(CombError::NoSpace { .. })));
    }

    proptest! {
        #[test]
        fn random_configurations_flatten(seed in 0u64..300, n in 1usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cfg = random_connected(n, &mut rng);
            let moves = flatten_to_line(&cfg).map_err(|e| proptest::test_runner::TestCaseError::fail(format!("{e} on {:?}", cfg)))?;
            let mut cur = cfg.clone();
            for m in &moves {
                cur.apply(*m).unwrap();
                prop_assert!(cur.is_connected());
            }
            prop_assert!(cur.is_line());
            let _ = analysis::hole_free(&cur.sites().collect::<Vec<_>>());
        }
    }
}
