//! Triangular lattice on an `L x L` torus.
//!
//! Sites are addressed by `(x, y)` with the six neighbor offsets
//! `(+1,0) (+1,+1) (0,+1) (-1,0) (-1,-1) (0,-1)`, listed counterclockwise.
//! In the plane a site sits at `(x - y/2, y * sqrt(3)/2)`.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LatticeError {
    #[error("not adjacent")]
    NotAdjacent,
    #[error("site occupied")]
    SiteOccupied,
    #[error("no food at source")]
    NoFood,
    #[error("side length {0} too small")]
    SideTooSmall(i32),
}

const OFFSETS: [(i32, i32); 6] = [(1, 0), (1, 1), (0, 1), (-1, 0), (-1, -1), (0, -1)];

/// One of the six lattice directions. `+1` is one step counterclockwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Direction(u8);

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction(0),
        Direction(1),
        Direction(2),
        Direction(3),
        Direction(4),
        Direction(5),
    ];

    pub fn new(d: i32) -> Self {
        Direction(d.rem_euclid(6) as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn offset(self) -> (i32, i32) {
        OFFSETS[self.0 as usize]
    }

    pub fn rotate(self, k: i32) -> Self {
        Direction::new(self.0 as i32 + k)
    }

    pub fn ccw(self) -> Self {
        self.rotate(1)
    }

    pub fn cw(self) -> Self {
        self.rotate(-1)
    }

    pub fn opposite(self) -> Self {
        self.rotate(3)
    }

    pub fn from_offset(dx: i32, dy: i32) -> Option<Self> {
        OFFSETS
            .iter()
            .position(|&o| o == (dx, dy))
            .map(|i| Direction(i as u8))
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `rotate(d, k) = (d + k) mod 6`.
pub fn rotate(d: Direction, k: i32) -> Direction {
    d.rotate(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coord {
    pub x: i32,
    pub y: i32,
}

impl Coord {
    pub fn new(x: i32, y: i32) -> Self {
        Coord { x, y }
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// Unbounded planar lattice site, same offsets as the torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Axial {
    pub x: i32,
    pub y: i32,
}

impl Axial {
    pub fn new(x: i32, y: i32) -> Self {
        Axial { x, y }
    }

    pub fn step(self, d: Direction) -> Axial {
        let (dx, dy) = d.offset();
        Axial::new(self.x + dx, self.y + dy)
    }

    pub fn add(self, o: Axial) -> Axial {
        Axial::new(self.x + o.x, self.y + o.y)
    }

    pub fn sub(self, o: Axial) -> Axial {
        Axial::new(self.x - o.x, self.y - o.y)
    }

    pub fn scale(self, k: i32) -> Axial {
        Axial::new(self.x * k, self.y * k)
    }

    pub fn unit(d: Direction) -> Axial {
        let (dx, dy) = d.offset();
        Axial::new(dx, dy)
    }

    /// Hop distance from the origin.
    pub fn norm(self) -> i32 {
        self.x.abs().max(self.y.abs()).max((self.x - self.y).abs())
    }

    pub fn distance(self, o: Axial) -> i32 {
        self.sub(o).norm()
    }

    pub fn direction_to(self, o: Axial) -> Option<Direction> {
        Direction::from_offset(o.x - self.x, o.y - self.y)
    }

    pub fn neighbors(self) -> [Axial; 6] {
        Direction::ALL.map(|d| self.step(d))
    }

    /// Point in the Euclidean plane (unit edge length).
    pub fn embed(self) -> (f64, f64) {
        let x = self.x as f64 - 0.5 * self.y as f64;
        let y = self.y as f64 * 3f64.sqrt() / 2.0;
        (x, y)
    }
}

/// Torus geometry for side length `L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Torus {
    pub side: i32,
}

impl Torus {
    pub fn new(side: i32) -> Result<Self, LatticeError> {
        if side < 3 {
            return Err(LatticeError::SideTooSmall(side));
        }
        Ok(Torus { side })
    }

    pub fn sites(&self) -> usize {
        (self.side * self.side) as usize
    }

    pub fn wrap(&self, x: i32, y: i32) -> Coord {
        Coord::new(x.rem_euclid(self.side), y.rem_euclid(self.side))
    }

    pub fn index(&self, c: Coord) -> usize {
        (c.y * self.side + c.x) as usize
    }

    pub fn coord(&self, i: usize) -> Coord {
        Coord::new(i as i32 % self.side, i as i32 / self.side)
    }

    pub fn neighbor(&self, c: Coord, d: Direction) -> Coord {
        let (dx, dy) = d.offset();
        self.wrap(c.x + dx, c.y + dy)
    }

    pub fn neighbors(&self, c: Coord) -> [Coord; 6] {
        Direction::ALL.map(|d| self.neighbor(c, d))
    }

    /// Direction `d` with `neighbor(a, d) == b`, if the sites are adjacent.
    pub fn direction_between(&self, a: Coord, b: Coord) -> Option<Direction> {
        Direction::ALL.into_iter().find(|&d| self.neighbor(a, d) == b)
    }

    pub fn common_neighbors(&self, a: Coord, b: Coord) -> Result<[Coord; 2], LatticeError> {
        let d = self.direction_between(a, b).ok_or(LatticeError::NotAdjacent)?;
        Ok([self.neighbor(a, d.ccw()), self.neighbor(a, d.cw())])
    }

    /// Planar displacement from `a` to `b` taking the shortest wrap on each axis.
    pub fn displacement(&self, a: Coord, b: Coord) -> Axial {
        let half = self.side / 2;
        let fold = |v: i32| {
            let v = v.rem_euclid(self.side);
            if v > half {
                v - self.side
            } else {
                v
            }
        };
        Axial::new(fold(b.x - a.x), fold(b.y - a.y))
    }

    pub fn place(&self, origin: Coord, a: Axial) -> Coord {
        self.wrap(origin.x + a.x, origin.y + a.y)
    }
}

/// What sits on a lattice site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Empty,
    Food,
    Particle(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle<S> {
    pub pos: Coord,
    pub state: S,
}

/// World state: torus occupancy, food sites and per-particle records.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeConfig<S> {
    torus: Torus,
    cells: Vec<Cell>,
    particles: Vec<Particle<S>>,
    food: Vec<Coord>,
}

impl<S: Clone> LatticeConfig<S> {
    pub fn new(side: i32) -> Result<Self, LatticeError> {
        let torus = Torus::new(side)?;
        Ok(LatticeConfig {
            torus,
            cells: vec![Cell::Empty; torus.sites()],
            particles: Vec::new(),
            food: Vec::new(),
        })
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn side(&self) -> i32 {
        self.torus.side
    }

    pub fn cell(&self, c: Coord) -> Cell {
        self.cells[self.torus.index(c)]
    }

    pub fn is_vacant(&self, c: Coord) -> bool {
        self.cell(c) == Cell::Empty
    }

    pub fn is_food(&self, c: Coord) -> bool {
        self.cell(c) == Cell::Food
    }

    pub fn particle_at(&self, c: Coord) -> Option<u32> {
        match self.cell(c) {
            Cell::Particle(id) => Some(id),
            _ => None,
        }
    }

    pub fn particles(&self) -> &[Particle<S>] {
        &self.particles
    }

    pub fn particle(&self, id: u32) -> &Particle<S> {
        &self.particles[id as usize]
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn food(&self) -> &[Coord] {
        &self.food
    }

    pub fn state(&self, id: u32) -> &S {
        &self.particles[id as usize].state
    }

    pub fn set_state(&mut self, id: u32, s: S) {
        self.particles[id as usize].state = s;
    }

    pub fn state_at(&self, c: Coord) -> Option<&S> {
        self.particle_at(c).map(|id| self.state(id))
    }

    pub fn neighbor(&self, c: Coord, d: Direction) -> Coord {
        self.torus.neighbor(c, d)
    }

    pub fn adjacent_to_food(&self, c: Coord) -> bool {
        self.torus.neighbors(c).iter().any(|&n| self.is_food(n))
    }

    pub fn add_particle(&mut self, pos: Coord, state: S) -> Result<u32, LatticeError> {
        let pos = self.torus.wrap(pos.x, pos.y);
        if !self.is_vacant(pos) {
            return Err(LatticeError::SiteOccupied);
        }
        let id = self.particles.len() as u32;
        let i = self.torus.index(pos);
        self.cells[i] = Cell::Particle(id);
        self.particles.push(Particle { pos, state });
        Ok(id)
    }

    pub fn place_food(&mut self, c: Coord) -> Result<(), LatticeError> {
        let c = self.torus.wrap(c.x, c.y);
        if !self.is_vacant(c) {
            return Err(LatticeError::SiteOccupied);
        }
        let i = self.torus.index(c);
        self.cells[i] = Cell::Food;
        self.food.push(c);
        Ok(())
    }

    pub fn remove_food(&mut self, c: Coord) -> Result<(), LatticeError> {
        let c = self.torus.wrap(c.x, c.y);
        if !self.is_food(c) {
            return Err(LatticeError::NoFood);
        }
        let i = self.torus.index(c);
        self.cells[i] = Cell::Empty;
        self.food.retain(|&f| f != c);
        Ok(())
    }

    pub fn move_food(&mut self, from: Coord, to: Coord) -> Result<(), LatticeError> {
        let from = self.torus.wrap(from.x, from.y);
        let to = self.torus.wrap(to.x, to.y);
        if !self.is_food(from) {
            return Err(LatticeError::NoFood);
        }
        if from == to {
            return Ok(());
        }
        if !self.is_vacant(to) {
            return Err(LatticeError::SiteOccupied);
        }
        self.remove_food(from)?;
        self.place_food(to)
    }

    /// Moves particle `id` to the vacant site `to`.
    pub fn move_particle(&mut self, id: u32, to: Coord) -> Result<(), LatticeError> {
        if !self.is_vacant(to) {
            return Err(LatticeError::SiteOccupied);
        }
        let from = self.particles[id as usize].pos;
        let fi = self.torus.index(from);
        let ti = self.torus.index(to);
        self.cells[fi] = Cell::Empty;
        self.cells[ti] = Cell::Particle(id);
        self.particles[id as usize].pos = to;
        Ok(())
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> {
        0..self.particles.len() as u32
    }

    /// Same occupancy with every state mapped through `f`.
    pub fn map_states<T: Clone>(&self, f: impl Fn(&S) -> T) -> LatticeConfig<T> {
        LatticeConfig {
            torus: self.torus,
            cells: self.cells.clone(),
            particles: self
                .particles
                .iter()
                .map(|p| Particle {
                    pos: p.pos,
                    state: f(&p.state),
                })
                .collect(),
            food: self.food.clone(),
        }
    }

    /// Checks occupancy bookkeeping; used by tests and `verify`.
    pub fn check_consistency(&self) -> Result<(), String> {
        let mut seen = 0usize;
        for (i, c) in self.cells.iter().enumerate() {
            match *c {
                Cell::Particle(id) => {
                    seen += 1;
                    let p = self
                        .particles
                        .get(id as usize)
                        .ok_or_else(|| format!("dangling particle id {id}"))?;
                    if self.torus.index(p.pos) != i {
                        return Err(format!("particle {id} position mismatch"));
                    }
                }
                Cell::Food => {
                    if !self.food.contains(&self.torus.coord(i)) {
                        return Err(format!("untracked food at {}", self.torus.coord(i)));
                    }
                }
                Cell::Empty => {}
            }
        }
        if seen != self.particles.len() {
            return Err("particle count mismatch".into());
        }
        if self.food.iter().any(|&f| !self.is_food(f)) {
            return Err("food list out of sync".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn neighbors_of_origin_on_side_eight() {
        let t = Torus::new(8).unwrap();
        let n: Vec<_> = t.neighbors(Coord::new(0, 0)).to_vec();
        let want = [(1, 0), (1, 1), (0, 1), (7, 0), (7, 7), (0, 7)];
        assert_eq!(n, want.map(|(x, y)| Coord::new(x, y)).to_vec());
    }

    #[test]
    fn wraparound_corner() {
        let t = Torus::new(8).unwrap();
        let d = Direction::from_offset(1, 1).unwrap();
        assert_eq!(t.neighbor(Coord::new(7, 7), d), Coord::new(0, 0));
    }

    #[test]
    fn common_neighbor_examples() {
        let t = Torus::new(8).unwrap();
        let mut c = t.common_neighbors(Coord::new(0, 0), Coord::new(1, 0)).unwrap().to_vec();
        c.sort();
        assert_eq!(c, vec![Coord::new(0, 7), Coord::new(1, 1)]);
        let mut c = t.common_neighbors(Coord::new(0, 0), Coord::new(1, 1)).unwrap().to_vec();
        c.sort();
        assert_eq!(c, vec![Coord::new(0, 1), Coord::new(1, 0)]);
        assert_eq!(
            t.common_neighbors(Coord::new(0, 0), Coord::new(2, 0)),
            Err(LatticeError::NotAdjacent)
        );
    }

    #[test]
    fn rotate_examples() {
        assert_eq!(rotate(Direction::new(5), 1), Direction::new(0));
        assert_eq!(rotate(Direction::new(2), -3), Direction::new(5));
        for d in Direction::ALL {
            assert_eq!(rotate(d, 6), d);
        }
    }

    #[test]
    fn directions_run_counterclockwise_in_the_plane() {
        for d in Direction::ALL {
            let (x0, y0) = Axial::unit(d).embed();
            let (x1, y1) = Axial::unit(d.ccw()).embed();
            let cross = x0 * y1 - y0 * x1;
            assert!(cross > 0.0, "{d}");
            assert!(((x0 * x0 + y0 * y0) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn food_and_particle_exclusion() {
        let mut w: LatticeConfig<u8> = LatticeConfig::new(6).unwrap();
        w.place_food(Coord::new(1, 1)).unwrap();
        assert_eq!(w.add_particle(Coord::new(1, 1), 0), Err(LatticeError::SiteOccupied));
        let id = w.add_particle(Coord::new(2, 1), 0).unwrap();
        assert_eq!(w.place_food(Coord::new(2, 1)), Err(LatticeError::SiteOccupied));
        assert_eq!(w.move_food(Coord::new(0, 0), Coord::new(3, 3)), Err(LatticeError::NoFood));
        w.move_food(Coord::new(1, 1), Coord::new(3, 3)).unwrap();
        w.move_particle(id, Coord::new(1, 1)).unwrap();
        w.check_consistency().unwrap();
        assert!(w.adjacent_to_food(Coord::new(2, 3)));
    }

    proptest! {
        #[test]
        fn neighbor_inverse(x in 0..5i32, y in 0..5i32, d in 0..6i32) {
            let t = Torus::new(5).unwrap();
            let c = Coord::new(x, y);
            let d = Direction::new(d);
            prop_assert_eq!(t.neighbor(t.neighbor(c, d), d.opposite()), c);
        }

        #[test]
        fn neighbors_distinct(side in 3..12i32, x in 0..12i32, y in 0..12i32) {
            let t = Torus::new(side).unwrap();
            let c = t.wrap(x, y);
            let mut n = t.neighbors(c).to_vec();
            n.sort();
            n.dedup();
            prop_assert_eq!(n.len(), 6);
        }

        #[test]
        fn neighbor_is_bijection(side in 3..9i32, d in 0..6i32) {
            let t = Torus::new(side).unwrap();
            let d = Direction::new(d);
            let mut img: Vec<usize> = (0..t.sites()).map(|i| t.index(t.neighbor(t.coord(i), d))).collect();
            img.sort();
            prop_assert_eq!(img, (0..t.sites()).collect::<Vec<_>>());
        }

        #[test]
        fn two_common_neighbors(side in 4..10i32, x in 0..10i32, y in 0..10i32, d in 0..6i32) {
            let t = Torus::new(side).unwrap();
            let a = t.wrap(x, y);
            let b = t.neighbor(a, Direction::new(d));
            let c = t.common_neighbors(a, b).unwrap();
            prop_assert!(c[0] != c[1]);
            for s in c {
                prop_assert!(t.direction_between(a, s).is_some());
                prop_assert!(t.direction_between(b, s).is_some());
            }
        }
    }
}
