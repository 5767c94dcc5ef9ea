//! Food-driven compression controller: dispersion walk, growth tokens,
//! dispersion tokens and Metropolis-filtered compression moves.

use crate::lattice::{Coord, Direction, LatticeConfig, LatticeError};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CompressionState {
    D,
    C,
    #[serde(rename = "C_G")]
    CG,
    #[serde(rename = "C_F")]
    CF,
    #[serde(rename = "C_GF")]
    CGF,
    DT,
}

impl CompressionState {
    pub const ALL: [CompressionState; 6] = [
        CompressionState::D,
        CompressionState::C,
        CompressionState::CG,
        CompressionState::CF,
        CompressionState::CGF,
        CompressionState::DT,
    ];

    pub fn is_compression(self) -> bool {
        matches!(
            self,
            CompressionState::C | CompressionState::CG | CompressionState::CF | CompressionState::CGF
        )
    }

    /// Compression and dispersion-token particles belong to clusters.
    pub fn is_cluster(self) -> bool {
        self.is_compression() || self == CompressionState::DT
    }

    pub fn growth(self) -> bool {
        matches!(self, CompressionState::CG | CompressionState::CGF)
    }

    pub fn food_bit(self) -> bool {
        matches!(self, CompressionState::CF | CompressionState::CGF)
    }

    /// Compression state with the given bits.
    pub fn compression(growth: bool, food: bool) -> Self {
        match (growth, food) {
            (false, false) => CompressionState::C,
            (true, false) => CompressionState::CG,
            (false, true) => CompressionState::CF,
            (true, true) => CompressionState::CGF,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            CompressionState::D => "D",
            CompressionState::C => "C",
            CompressionState::CG => "C_G",
            CompressionState::CF => "C_F",
            CompressionState::CGF => "C_GF",
            CompressionState::DT => "DT",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.label() == s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("p must lie in (0, 1/6), got {0}")]
    P(f64),
    #[error("lambda must be positive, got {0}")]
    Lambda(f64),
    #[error("rho must lie in (0, 1/2), got {0}")]
    Rho(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionParams {
    pub p: f64,
    pub lambda: f64,
}

impl CompressionParams {
    pub fn new(p: f64, lambda: f64) -> Result<Self, ParamError> {
        if !(p > 0.0 && p < 1.0 / 6.0) {
            return Err(ParamError::P(p));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(ParamError::Lambda(lambda));
        }
        Ok(CompressionParams { p, lambda })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Valid,
    InvalidProperty,
    InvalidDegree,
    Occupied,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveProposal {
    pub from: Coord,
    pub to: Coord,
    pub delta_e: i32,
    pub verdict: Verdict,
    pub accept_prob: f64,
}

/// Read access to a cluster neighborhood; implemented for the torus world
/// and for the planar configurations of the comb oracle.
pub trait ClusterView {
    type Site: Copy + Eq;
    fn step(&self, s: Self::Site, d: Direction) -> Self::Site;
    fn is_cluster(&self, s: Self::Site) -> bool;
    fn is_vacant(&self, s: Self::Site) -> bool;
}

impl ClusterView for LatticeConfig<CompressionState> {
    type Site = Coord;

    fn step(&self, s: Coord, d: Direction) -> Coord {
        self.neighbor(s, d)
    }

    fn is_cluster(&self, s: Coord) -> bool {
        if self.is_food(s) {
            return true;
        }
        self.state_at(s).is_some_and(|st| st.is_cluster())
    }

    fn is_vacant(&self, s: Coord) -> bool {
        LatticeConfig::is_vacant(self, s)
    }
}

fn adjacent<V: ClusterView>(v: &V, a: V::Site, b: V::Site) -> bool {
    Direction::ALL.iter().any(|&d| v.step(a, d) == b)
}

/// True when the sites of `set` marked by `filled` form at most one
/// connected piece using only sites of `set`.
fn connected_within<V: ClusterView>(v: &V, set: &[V::Site], filled: impl Fn(V::Site) -> bool) -> bool {
    let members: Vec<V::Site> = set.iter().copied().filter(|&s| filled(s)).collect();
    if members.len() <= 1 {
        return true;
    }
    let mut reached = vec![false; members.len()];
    reached[0] = true;
    let mut stack = vec![0usize];
    while let Some(i) = stack.pop() {
        for j in 0..members.len() {
            if !reached[j] && adjacent(v, members[i], members[j]) {
                reached[j] = true;
                stack.push(j);
            }
        }
    }
    reached.into_iter().all(|r| r)
}

fn ring<V: ClusterView>(v: &V, center: V::Site, skip: V::Site) -> Vec<V::Site> {
    Direction::ALL
        .iter()
        .map(|&d| v.step(center, d))
        .filter(|&s| s != skip)
        .collect()
}

/// Validity of moving the cluster particle at `from` one step in direction `d`.
pub fn check_move<V: ClusterView>(v: &V, from: V::Site, d: Direction) -> Verdict {
    let to = v.step(from, d);
    if !v.is_vacant(to) {
        return Verdict::Occupied;
    }
    let around_from = ring(v, from, to);
    if around_from.iter().filter(|&&s| v.is_cluster(s)).count() >= 5 {
        return Verdict::InvalidDegree;
    }
    let shared = [v.step(from, d.ccw()), v.step(from, d.cw())];
    let s_count = shared.iter().filter(|&&s| v.is_cluster(s)).count();
    let around_to = ring(v, to, from);
    let ok = if s_count >= 1 {
        // every cluster site of the joint neighborhood reaches the shared pair
        let mut union = around_from.clone();
        for s in &around_to {
            if !union.contains(s) {
                union.push(*s);
            }
        }
        union.iter().filter(|&&s| v.is_cluster(s)).all(|&s| {
            shared.contains(&s) && v.is_cluster(s) || reaches_any(v, &union, s, &shared)
        })
    } else {
        around_from.iter().any(|&s| v.is_cluster(s))
            && around_to.iter().any(|&s| v.is_cluster(s))
            && connected_within(v, &around_from, |s| v.is_cluster(s))
            && connected_within(v, &around_to, |s| v.is_cluster(s))
    };
    if ok {
        Verdict::Valid
    } else {
        Verdict::InvalidProperty
    }
}

fn reaches_any<V: ClusterView>(v: &V, set: &[V::Site], start: V::Site, targets: &[V::Site; 2]) -> bool {
    let mut seen = vec![start];
    let mut stack = vec![start];
    while let Some(s) = stack.pop() {
        if targets.contains(&s) {
            return true;
        }
        for &n in set {
            if v.is_cluster(n) && !seen.contains(&n) && adjacent(v, s, n) {
                seen.push(n);
                stack.push(n);
            }
        }
    }
    false
}

/// Whether moving `from` in direction `d` leaves the cluster neighbors of
/// `from` split inside `N(from) ∪ {from}`. The mover itself, now at the
/// target, may still link them; its own attachment is not tracked.
pub fn local_disconnection<V: ClusterView>(v: &V, from: V::Site, d: Direction) -> bool {
    let to = v.step(from, d);
    let set: Vec<V::Site> = Direction::ALL.iter().map(|&k| v.step(from, k)).collect();
    let filled = |s: V::Site| s == to || v.is_cluster(s);
    let members: Vec<V::Site> = set.iter().copied().filter(|&s| s != to && v.is_cluster(s)).collect();
    let Some(&first) = members.first() else {
        return false;
    };
    let mut seen = vec![first];
    let mut stack = vec![first];
    while let Some(s) = stack.pop() {
        for &n in &set {
            if filled(n) && !seen.contains(&n) && adjacent(v, s, n) {
                seen.push(n);
                stack.push(n);
            }
        }
    }
    !members.iter().all(|m| seen.contains(m))
}

/// Cluster neighbors gained at the target minus those held at the origin.
pub fn delta_edges<V: ClusterView>(v: &V, from: V::Site, d: Direction) -> i32 {
    let to = v.step(from, d);
    let at_to = ring(v, to, from).into_iter().filter(|&s| v.is_cluster(s)).count();
    let at_from = ring(v, from, to).into_iter().filter(|&s| v.is_cluster(s)).count();
    at_to as i32 - at_from as i32
}

pub fn acceptance_probability(delta_e: i32, lambda: f64) -> Result<f64, ParamError> {
    if !(lambda > 0.0) {
        return Err(ParamError::Lambda(lambda));
    }
    Ok(lambda.powi(delta_e).min(1.0))
}

pub fn is_valid_compression_move(
    world: &LatticeConfig<CompressionState>,
    from: Coord,
    to: Coord,
) -> Result<Verdict, LatticeError> {
    let d = world.torus().direction_between(from, to).ok_or(LatticeError::NotAdjacent)?;
    Ok(check_move(world, from, d))
}

pub fn causes_local_disconnection(
    world: &LatticeConfig<CompressionState>,
    from: Coord,
    to: Coord,
) -> Result<bool, LatticeError> {
    let d = world.torus().direction_between(from, to).ok_or(LatticeError::NotAdjacent)?;
    Ok(local_disconnection(world, from, d))
}

pub fn propose(world: &LatticeConfig<CompressionState>, from: Coord, d: Direction, lambda: f64) -> MoveProposal {
    let to = world.neighbor(from, d);
    let verdict = check_move(world, from, d);
    let delta_e = delta_edges(world, from, d);
    let accept_prob = if verdict == Verdict::Valid {
        lambda.powi(delta_e).min(1.0)
    } else {
        0.0
    };
    MoveProposal {
        from,
        to,
        delta_e,
        verdict,
        accept_prob,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// D next to food; joined with the food bit.
    JoinedViaFood,
    /// D consumed a neighbor's growth token.
    JoinedViaToken,
    /// D stayed D (failed draw or nothing to join).
    StayedDispersed,
    /// Inconsistency trigger 1, 2 or 3 fired.
    Demoted(u8),
    PassedToken,
    GeneratedToken,
    Idle,
    /// DT particle cleared itself and spread the wave.
    Cleared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateChange {
    pub before: CompressionState,
    pub after: CompressionState,
    pub branch: Branch,
    /// Neighbors whose state changed: (id, old, new).
    pub neighbors: Vec<(u32, CompressionState, CompressionState)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveRecord {
    pub from: Coord,
    pub to: Coord,
    /// Verdict at execution time; `None` for a dispersion step.
    pub verdict: Option<Verdict>,
    pub local_disconnection: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Activation {
    pub id: u32,
    pub change: StateChange,
    pub moved: Option<MoveRecord>,
}

fn random_direction<R: Rng + ?Sized>(rng: &mut R) -> Direction {
    Direction::new(rng.gen_range(0..6))
}

fn spread_dt(world: &mut LatticeConfig<CompressionState>, at: Coord, log: &mut Vec<(u32, CompressionState, CompressionState)>) {
    for n in world.torus().neighbors(at) {
        if let Some(id) = world.particle_at(n) {
            let s = *world.state(id);
            if s.is_compression() {
                world.set_state(id, CompressionState::DT);
                log.push((id, s, CompressionState::DT));
            }
        }
    }
}

fn inconsistency_trigger(world: &LatticeConfig<CompressionState>, at: Coord, s: CompressionState) -> Option<u8> {
    let near_food = world.adjacent_to_food(at);
    if s.food_bit() && !near_food {
        return Some(1);
    }
    if !s.food_bit() && near_food {
        return Some(2);
    }
    if near_food {
        let t = world.torus();
        for d in Direction::ALL {
            let f = t.neighbor(at, d);
            if !world.is_food(f) {
                continue;
            }
            for w in [t.neighbor(at, d.ccw()), t.neighbor(at, d.cw())] {
                if let Some(ws) = world.state_at(w) {
                    if ws.is_compression() && !ws.food_bit() {
                        return Some(3);
                    }
                }
            }
        }
    }
    None
}

/// State-change step for particle `id`.
pub fn state_change<R: Rng + ?Sized>(
    world: &mut LatticeConfig<CompressionState>,
    id: u32,
    params: &CompressionParams,
    rng: &mut R,
) -> StateChange {
    let before = *world.state(id);
    let at = world.particle(id).pos;
    let mut neighbors = Vec::new();
    let (after, branch) = match before {
        CompressionState::D => {
            if world.adjacent_to_food(at) {
                if rng.gen::<f64>() < params.p {
                    (CompressionState::CF, Branch::JoinedViaFood)
                } else {
                    (before, Branch::StayedDispersed)
                }
            } else {
                let donors: Vec<u32> = world
                    .torus()
                    .neighbors(at)
                    .iter()
                    .filter_map(|&n| world.particle_at(n))
                    .filter(|&j| world.state(j).growth())
                    .collect();
                if !donors.is_empty() && rng.gen::<f64>() < params.p {
                    let j = donors[rng.gen_range(0..donors.len())];
                    let old = *world.state(j);
                    let new = CompressionState::compression(false, old.food_bit());
                    world.set_state(j, new);
                    neighbors.push((j, old, new));
                    (CompressionState::C, Branch::JoinedViaToken)
                } else {
                    (before, Branch::StayedDispersed)
                }
            }
        }
        CompressionState::DT => {
            spread_dt(world, at, &mut neighbors);
            (CompressionState::D, Branch::Cleared)
        }
        s => {
            if let Some(t) = inconsistency_trigger(world, at, s) {
                world.set_state(id, CompressionState::D);
                spread_dt(world, at, &mut neighbors);
                (CompressionState::D, Branch::Demoted(t))
            } else if s.growth() {
                let n = world.neighbor(at, random_direction(rng));
                match world.particle_at(n) {
                    Some(j) if world.state(j).is_compression() && !world.state(j).growth() => {
                        let old = *world.state(j);
                        let new = CompressionState::compression(true, old.food_bit());
                        world.set_state(j, new);
                        neighbors.push((j, old, new));
                        (CompressionState::compression(false, s.food_bit()), Branch::PassedToken)
                    }
                    _ => (s, Branch::Idle),
                }
            } else if world.adjacent_to_food(at) && rng.gen::<f64>() < params.p {
                (CompressionState::compression(true, s.food_bit()), Branch::GeneratedToken)
            } else {
                (s, Branch::Idle)
            }
        }
    };
    world.set_state(id, after);
    StateChange {
        before,
        after,
        branch,
        neighbors,
    }
}

/// Movement step; `was_dt` marks a particle that started the activation in DT.
pub fn movement_step<R: Rng + ?Sized>(
    world: &mut LatticeConfig<CompressionState>,
    id: u32,
    params: &CompressionParams,
    was_dt: bool,
    rng: &mut R,
) -> Option<MoveRecord> {
    if was_dt {
        return None;
    }
    let s = *world.state(id);
    let from = world.particle(id).pos;
    let d = random_direction(rng);
    let to = world.neighbor(from, d);
    let record = if s == CompressionState::D {
        if world.is_vacant(to) {
            world.move_particle(id, to).expect("vacant target");
            Some(MoveRecord {
                from,
                to,
                verdict: None,
                local_disconnection: false,
            })
        } else {
            None
        }
    } else if s.is_compression() {
        let prop = propose(world, from, d, params.lambda);
        if prop.verdict == Verdict::Valid && rng.gen::<f64>() < prop.accept_prob {
            let split = local_disconnection(world, from, d);
            world.move_particle(id, to).expect("vacant target");
            Some(MoveRecord {
                from,
                to,
                verdict: Some(prop.verdict),
                local_disconnection: split,
            })
        } else {
            None
        }
    } else {
        None
    };
    let s = *world.state(id);
    if s.is_compression() {
        let pos = world.particle(id).pos;
        let fed = world.adjacent_to_food(pos);
        world.set_state(id, CompressionState::compression(s.growth(), fed));
    }
    record
}

/// One full activation: state change followed by movement.
pub fn activate<R: Rng + ?Sized>(
    world: &mut LatticeConfig<CompressionState>,
    id: u32,
    params: &CompressionParams,
    rng: &mut R,
) -> Activation {
    let was_dt = *world.state(id) == CompressionState::DT;
    let change = state_change(world, id, params, rng);
    let moved = movement_step(world, id, params, was_dt, rng);
    Activation { id, change, moved }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Torus;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use CompressionState::*;

    fn world(side: i32) -> LatticeConfig<CompressionState> {
        LatticeConfig::new(side).unwrap()
    }

    fn c(x: i32, y: i32) -> Coord {
        Coord::new(x, y)
    }

    /// Rng whose uniform draws are all tiny (always below p).
    struct Low;
    impl rand::RngCore for Low {
        fn next_u32(&mut self) -> u32 {
            0
        }
        fn next_u64(&mut self) -> u64 {
            0
        }
        fn fill_bytes(&mut self, b: &mut [u8]) {
            b.fill(0)
        }
        fn try_fill_bytes(&mut self, b: &mut [u8]) -> Result<(), rand::Error> {
            b.fill(0);
            Ok(())
        }
    }

    /// Rng whose uniform draws are all close to one.
    struct High;
    impl rand::RngCore for High {
        fn next_u32(&mut self) -> u32 {
            u32::MAX
        }
        fn next_u64(&mut self) -> u64 {
            u64::MAX
        }
        fn fill_bytes(&mut self, b: &mut [u8]) {
            b.fill(0xff)
        }
        fn try_fill_bytes(&mut self, b: &mut [u8]) -> Result<(), rand::Error> {
            b.fill(0xff);
            Ok(())
        }
    }

    fn params() -> CompressionParams {
        CompressionParams::new(0.1, 4.0).unwrap()
    }

    #[test]
    fn state_bits() {
        assert!(CGF.growth() && CGF.food_bit());
        assert!(CG.growth() && !CG.food_bit());
        assert!(!CF.growth() && CF.food_bit());
        assert!(!D.is_cluster() && DT.is_cluster() && !DT.is_compression());
        for s in CompressionState::ALL {
            assert_eq!(CompressionState::from_label(s.label()), Some(s));
        }
    }

    #[test]
    fn param_ranges() {
        assert!(CompressionParams::new(1.0 / 6.0, 2.0).is_err());
        assert!(CompressionParams::new(0.0, 2.0).is_err());
        assert!(CompressionParams::new(0.1, 0.0).is_err());
        assert!(CompressionParams::new(0.1, 0.5).is_ok());
    }

    #[test]
    fn single_particle_slides_around_food() {
        let mut w = world(8);
        w.place_food(c(0, 0)).unwrap();
        w.add_particle(c(1, 0), CF).unwrap();
        assert_eq!(is_valid_compression_move(&w, c(1, 0), c(1, 1)), Ok(Verdict::Valid));
        assert_eq!(causes_local_disconnection(&w, c(1, 0), c(1, 1)), Ok(false));
        assert_eq!(is_valid_compression_move(&w, c(1, 0), c(2, 0)), Ok(Verdict::InvalidProperty));
        assert_eq!(is_valid_compression_move(&w, c(1, 0), c(0, 0)), Ok(Verdict::Occupied));
        assert_eq!(is_valid_compression_move(&w, c(1, 0), c(3, 0)), Err(LatticeError::NotAdjacent));
    }

    #[test]
    fn dispersion_particles_are_not_cluster_but_block() {
        let mut w = world(8);
        w.place_food(c(0, 0)).unwrap();
        w.add_particle(c(1, 0), C).unwrap();
        w.add_particle(c(1, 1), D).unwrap();
        assert_eq!(is_valid_compression_move(&w, c(1, 0), c(1, 1)), Ok(Verdict::Occupied));
        // the D particle does not count toward the shared pair
        w.add_particle(c(2, 1), D).unwrap();
        assert_eq!(is_valid_compression_move(&w, c(1, 0), c(2, 0)), Ok(Verdict::InvalidProperty));
    }

    #[test]
    fn degree_five_blocks_moves() {
        let mut w = world(8);
        let center = c(3, 3);
        w.add_particle(center, C).unwrap();
        let t = *w.torus();
        for d in 1..6 {
            w.add_particle(t.neighbor(center, Direction::new(d)), C).unwrap();
        }
        assert_eq!(
            is_valid_compression_move(&w, center, t.neighbor(center, Direction::new(0))),
            Ok(Verdict::InvalidDegree)
        );
    }

    #[test]
    fn bridge_particle_disconnects() {
        // Two single-particle arcs at directions 3 and 5; the move toward
        // direction 1 has both shared sites empty.
        let mut w = world(10);
        let u = c(5, 5);
        let t = *w.torus();
        w.add_particle(u, C).unwrap();
        let a = t.neighbor(u, Direction::new(3));
        let b = t.neighbor(u, Direction::new(5));
        w.add_particle(a, C).unwrap();
        w.add_particle(b, C).unwrap();
        w.add_particle(t.neighbor(a, Direction::new(3)), C).unwrap();
        w.add_particle(t.neighbor(b, Direction::new(5)), C).unwrap();
        let to = t.neighbor(u, Direction::new(1));
        assert!(causes_local_disconnection(&w, u, to).unwrap());
        assert_eq!(is_valid_compression_move(&w, u, to), Ok(Verdict::InvalidProperty));
    }

    #[test]
    fn isolated_particle_never_disconnects() {
        let mut w = world(8);
        w.add_particle(c(3, 3), C).unwrap();
        for d in Direction::ALL {
            assert!(!local_disconnection(&w, c(3, 3), d));
        }
    }

    #[test]
    fn acceptance_examples() {
        assert_eq!(acceptance_probability(1, 4.0), Ok(1.0));
        assert_eq!(acceptance_probability(-2, 4.0), Ok(0.0625));
        assert_eq!(acceptance_probability(-5, 1.0), Ok(1.0));
        assert!(acceptance_probability(0, 0.0).is_err());
        assert!(acceptance_probability(0, -1.0).is_err());
    }

    #[test]
    fn dispersion_particle_joins_next_to_food() {
        let mut w = world(8);
        w.place_food(c(0, 0)).unwrap();
        let id = w.add_particle(c(1, 0), D).unwrap();
        let ch = state_change(&mut w, id, &params(), &mut Low);
        assert_eq!(ch.after, CF);
        assert_eq!(ch.branch, Branch::JoinedViaFood);
        let ch = state_change(&mut w, id, &params(), &mut High);
        assert_eq!(ch.branch, Branch::Idle);
        let mut w2 = world(8);
        w2.place_food(c(0, 0)).unwrap();
        let id = w2.add_particle(c(1, 0), D).unwrap();
        assert_eq!(state_change(&mut w2, id, &params(), &mut High).after, D);
    }

    #[test]
    fn dispersion_particle_consumes_growth_token() {
        let mut w = world(8);
        w.place_food(c(0, 0)).unwrap();
        let holder = w.add_particle(c(1, 0), CGF).unwrap();
        let id = w.add_particle(c(2, 0), D).unwrap();
        let ch = state_change(&mut w, id, &params(), &mut Low);
        assert_eq!(ch.after, C);
        assert_eq!(*w.state(holder), CF);
        assert_eq!(ch.neighbors, vec![(holder, CGF, CF)]);
    }

    #[test]
    fn dt_particle_spreads_wave() {
        let mut w = world(8);
        let id = w.add_particle(c(3, 3), DT).unwrap();
        let a = w.add_particle(c(4, 3), C).unwrap();
        let b = w.add_particle(c(3, 4), CG).unwrap();
        let dd = w.add_particle(c(2, 3), D).unwrap();
        let ch = state_change(&mut w, id, &params(), &mut High);
        assert_eq!(ch.after, D);
        assert_eq!(*w.state(a), DT);
        assert_eq!(*w.state(b), DT);
        assert_eq!(*w.state(dd), D);
    }

    #[test]
    fn stale_food_bit_demotes() {
        let mut w = world(8);
        let id = w.add_particle(c(3, 3), CF).unwrap();
        let a = w.add_particle(c(4, 3), C).unwrap();
        let ch = state_change(&mut w, id, &params(), &mut High);
        assert_eq!(ch.branch, Branch::Demoted(1));
        assert_eq!(*w.state(id), D);
        assert_eq!(*w.state(a), DT);
    }

    #[test]
    fn missing_food_bit_demotes() {
        let mut w = world(8);
        w.place_food(c(3, 3)).unwrap();
        let id = w.add_particle(c(4, 3), C).unwrap();
        assert_eq!(state_change(&mut w, id, &params(), &mut High).branch, Branch::Demoted(2));
    }

    #[test]
    fn shared_neighbor_without_food_bit_demotes() {
        let mut w = world(8);
        w.place_food(c(3, 3)).unwrap();
        let id = w.add_particle(c(4, 3), CF).unwrap();
        // (4,4) is adjacent to both the food and the particle
        let other = w.add_particle(c(4, 4), C).unwrap();
        let ch = state_change(&mut w, id, &params(), &mut High);
        assert_eq!(ch.branch, Branch::Demoted(3));
        assert_eq!(*w.state(other), DT);
    }

    #[test]
    fn token_generation_and_passing() {
        let mut w = world(8);
        w.place_food(c(3, 3)).unwrap();
        let id = w.add_particle(c(4, 3), CF).unwrap();
        let ch = state_change(&mut w, id, &params(), &mut Low);
        assert_eq!(ch.branch, Branch::GeneratedToken);
        assert_eq!(*w.state(id), CGF);
        // direction 0 is drawn by the zero rng: neighbor (5,3)
        let other = w.add_particle(c(5, 3), C).unwrap();
        let ch = state_change(&mut w, id, &params(), &mut Low);
        assert_eq!(ch.branch, Branch::PassedToken);
        assert_eq!(*w.state(id), CF);
        assert_eq!(*w.state(other), CG);
    }

    #[test]
    fn dispersion_walk_respects_exclusion() {
        let mut w = world(8);
        let id = w.add_particle(c(3, 3), D).unwrap();
        // zero rng picks direction 0
        let m = movement_step(&mut w, id, &params(), false, &mut Low).unwrap();
        assert_eq!(m.to, c(4, 3));
        w.add_particle(c(5, 3), D).unwrap();
        assert!(movement_step(&mut w, id, &params(), false, &mut Low).is_none());
        assert!(movement_step(&mut w, id, &params(), true, &mut Low).is_none());
    }

    #[test]
    fn compression_move_updates_food_bit() {
        let mut w = world(8);
        w.place_food(c(0, 0)).unwrap();
        w.add_particle(c(0, 1), C).unwrap();
        let id = w.add_particle(c(1, 0), CF).unwrap();
        let p = propose(&w, c(1, 0), Direction::new(2), 4.0);
        assert_eq!((p.to, p.verdict, p.delta_e, p.accept_prob), (c(1, 1), Verdict::Valid, 1, 1.0));

        // leaving the food: (1,0) -> (2,0) with (1,1) and (2,1) filled
        w.add_particle(c(1, 1), C).unwrap();
        w.add_particle(c(2, 1), C).unwrap();
        let p = propose(&w, c(1, 0), Direction::new(0), 4.0);
        assert_eq!((p.verdict, p.delta_e, p.accept_prob), (Verdict::Valid, -2, 0.0625));
        let m = movement_step(&mut w, id, &params(), false, &mut Low).unwrap();
        assert_eq!(m.to, c(2, 0));
        assert!(!m.local_disconnection);
        assert_eq!(*w.state(id), C);
    }

    #[test]
    fn dt_particle_never_moves() {
        let mut w = world(8);
        let id = w.add_particle(c(3, 3), DT).unwrap();
        let a = activate(&mut w, id, &params(), &mut Low);
        assert!(a.moved.is_none());
        assert_eq!(w.particle(id).pos, c(3, 3));
    }

    #[test]
    fn promoted_particle_moves_in_same_activation() {
        let mut w = world(8);
        w.place_food(c(0, 0)).unwrap();
        let id = w.add_particle(c(1, 0), D).unwrap();
        // Low rng: joins, then proposes direction 0 -> (2,0) which is invalid
        let a = activate(&mut w, id, &params(), &mut Low);
        assert_eq!(a.change.after, CF);
        assert!(a.moved.is_none());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut moved = false;
        for _ in 0..200 {
            let a = activate(&mut w, id, &CompressionParams::new(0.1, 1.0).unwrap(), &mut rng);
            if let Some(m) = a.moved {
                assert_eq!(m.verdict, Some(Verdict::Valid));
                moved = true;
            }
            assert!(w.state(id).food_bit());
        }
        assert!(moved);
    }

    /// Brute-force validity over the 10-site neighborhood, written directly
    /// from the two properties with plain coordinate sets.
    fn oracle(occ: &[Coord], t: &Torus, from: Coord, to: Coord) -> bool {
        use std::collections::HashSet;
        let cl: HashSet<Coord> = occ.iter().copied().collect();
        if cl.contains(&to) {
            return false;
        }
        let nf: HashSet<Coord> = t.neighbors(from).into_iter().filter(|&s| s != to).collect();
        let nt: HashSet<Coord> = t.neighbors(to).into_iter().filter(|&s| s != from).collect();
        if t.neighbors(from).iter().filter(|s| cl.contains(s)).count() >= 5 {
            return false;
        }
        let s: HashSet<Coord> = nf.intersection(&nt).filter(|x| cl.contains(x)).copied().collect();
        let comps = |set: &HashSet<Coord>| -> Vec<HashSet<Coord>> {
            let mut left: HashSet<Coord> = set.iter().filter(|x| cl.contains(x)).copied().collect();
            let mut out = vec![];
            while let Some(&a) = left.iter().next() {
                let mut comp = HashSet::new();
                let mut st = vec![a];
                left.remove(&a);
                while let Some(u) = st.pop() {
                    comp.insert(u);
                    for n in t.neighbors(u) {
                        if left.remove(&n) {
                            st.push(n);
                        }
                    }
                }
                out.push(comp);
            }
            out
        };
        if !s.is_empty() {
            let union: HashSet<Coord> = nf.union(&nt).copied().collect();
            comps(&union).iter().all(|k| k.iter().any(|x| s.contains(x)))
        } else {
            let a = comps(&nf);
            let b = comps(&nt);
            a.len() == 1 && b.len() == 1
        }
    }

    proptest! {
        #[test]
        fn validity_matches_brute_force(mask in 0u32..(1 << 12), d in 0..6i32, food in any::<bool>()) {
            let t = Torus::new(9).unwrap();
            let from = c(4, 4);
            let d = Direction::new(d);
            let to = t.neighbor(from, d);
            let mut sites: Vec<Coord> = vec![];
            for s in t.neighbors(from).into_iter().chain(t.neighbors(to)) {
                if s != from && s != to && !sites.contains(&s) {
                    sites.push(s);
                }
            }
            // the 8 ring sites plus target; use 12 bits over ring + a few outer sites
            let mut w = world(9);
            w.add_particle(from, C).unwrap();
            let mut occ = vec![from];
            for (i, &s) in sites.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    if food && i == 0 {
                        w.place_food(s).unwrap();
                    } else {
                        w.add_particle(s, C).unwrap();
                    }
                    occ.push(s);
                }
            }
            if mask & (1 << 11) != 0 {
                w.add_particle(to, C).unwrap();
                occ.push(to);
            }
            let got = check_move(&w, from, d) == Verdict::Valid;
            prop_assert_eq!(got, oracle(&occ, &t, from, to));
        }

        #[test]
        fn valid_moves_never_disconnect(mask in 0u32..(1 << 8), d in 0..6i32) {
            let t = Torus::new(9).unwrap();
            let from = c(4, 4);
            let d = Direction::new(d);
            let to = t.neighbor(from, d);
            let mut w = world(9);
            w.add_particle(from, C).unwrap();
            let mut i = 0;
            for s in t.neighbors(from).into_iter().chain(t.neighbors(to)) {
                if s == from || s == to || !w.is_vacant(s) { continue; }
                if mask & (1 << i) != 0 { w.add_particle(s, C).unwrap(); }
                i += 1;
                if i == 8 { break; }
            }
            if check_move(&w, from, d) == Verdict::Valid {
                prop_assert!(!local_disconnection(&w, from, d));
            }
        }

        #[test]
        fn acceptance_is_metropolis(de in -6..6i32, lambda in 0.05f64..8.0) {
            let a = acceptance_probability(de, lambda).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!((a - lambda.powi(de).min(1.0)).abs() < 1e-12);
        }

        #[test]
        fn token_count_changes_by_at_most_one(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut w = world(6);
            w.place_food(c(2, 2)).unwrap();
            for i in 0..12 {
                let s = CompressionState::ALL[rng.gen_range(0..6)];
                let _ = w.add_particle(c(i % 6, i / 6 + 3), s);
            }
            let tokens = |w: &LatticeConfig<CompressionState>| w.particles().iter().filter(|p| p.state.growth()).count() as i32;
            for _ in 0..50 {
                let before = tokens(&w);
                let id = rng.gen_range(0..w.len() as u32);
                let ch = state_change(&mut w, id, &params(), &mut rng);
                let after = tokens(&w);
                match ch.branch {
                    Branch::Demoted(_) | Branch::Cleared => prop_assert!(after <= before),
                    _ => prop_assert!((after - before).abs() <= 1),
                }
            }
        }
    }
}
