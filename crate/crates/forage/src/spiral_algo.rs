//! Spiral-building controller: attachment property, particle classes and
//! the per-activation rule.

use crate::compression_algo::ParamError;
use crate::lattice::{Axial, Cell, Coord, Direction, LatticeConfig};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpiralState {
    Dispersion,
    Comp { base: u8, verified: bool, parent: Direction },
}

impl SpiralState {
    pub fn comp(base: u8, verified: bool, parent: Direction) -> Self {
        debug_assert!(base <= 6 && !(verified && base == 6));
        SpiralState::Comp { base, verified, parent }
    }

    pub fn is_comp(self) -> bool {
        matches!(self, SpiralState::Comp { .. })
    }

    pub fn base(self) -> Option<u8> {
        match self {
            SpiralState::Comp { base, .. } => Some(base),
            SpiralState::Dispersion => None,
        }
    }

    pub fn verified(self) -> bool {
        matches!(self, SpiralState::Comp { verified: true, .. })
    }

    pub fn parent(self) -> Option<Direction> {
        match self {
            SpiralState::Comp { parent, .. } => Some(parent),
            SpiralState::Dispersion => None,
        }
    }

    /// `D`, `0`..`6` or `0*`..`5*`.
    pub fn label(self) -> String {
        self.to_string()
    }
}

impl fmt::Display for SpiralState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpiralState::Dispersion => write!(f, "D"),
            SpiralState::Comp { base, verified, .. } => {
                write!(f, "{}{}", base, if *verified { "*" } else { "" })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpiralParams {
    pub rho: f64,
}

impl SpiralParams {
    pub fn new(rho: f64) -> Result<Self, ParamError> {
        if !(rho > 0.0 && rho < 0.5) {
            return Err(ParamError::Rho(rho));
        }
        Ok(SpiralParams { rho })
    }
}

/// Hypothetical state for an attachment check: base plus verified flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Label {
    pub base: u8,
    pub verified: bool,
}

impl Label {
    pub fn plain(base: u8) -> Self {
        Label { base, verified: false }
    }
}

fn comp_at(world: &LatticeConfig<SpiralState>, c: Coord) -> Option<(u8, bool, Direction)> {
    match world.state_at(c) {
        Some(SpiralState::Comp { base, verified, parent }) => Some((*base, *verified, *parent)),
        _ => None,
    }
}

/// Attachment property for site `v` holding label `s` with parent direction `d`.
/// The particle currently on `v`, if any, is ignored.
pub fn attachment_property(world: &LatticeConfig<SpiralState>, v: Coord, s: Label, d: Direction) -> bool {
    let t = world.torus();
    let vp = t.neighbor(v, d);
    let vcw = t.neighbor(v, d.cw());
    let vccw = t.neighbor(v, d.ccw());
    match world.cell(vp) {
        Cell::Empty => false,
        Cell::Food => {
            s.base == 0
                && match comp_at(world, vccw) {
                    None => true,
                    Some((b, _, _)) => b == 5,
                }
        }
        Cell::Particle(_) => {
            let Some((bp, _, dp)) = comp_at(world, vp) else {
                return false;
            };
            match bp {
                0 => s.base == 1 && dp == d.rotate(-2) && world.is_food(vcw),
                1..=4 => s.base == bp + 1 && dp == d.cw() && world.is_food(vcw),
                5 => s.base == 6 && dp == d && matches!(comp_at(world, vcw), Some((0, true, _))),
                _ => {
                    if s.base != 6 {
                        return false;
                    }
                    match comp_at(world, vcw) {
                        None => false,
                        Some((0, _, dcw)) => dp == d.cw() && (dcw == dp || dcw == dp.cw()),
                        Some((_, _, dcw)) => (dp == d || dp == d.cw()) && dcw == dp,
                    }
                }
            }
        }
    }
}

/// All unverified `(base, direction)` pairs satisfying the attachment
/// property at `v`, smallest base first, then smallest direction.
pub fn attachment_options(world: &LatticeConfig<SpiralState>, v: Coord) -> Vec<(u8, Direction)> {
    let mut out = Vec::new();
    for base in 0..=6u8 {
        for d in Direction::ALL {
            if attachment_property(world, v, Label::plain(base), d) {
                out.push((base, d));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpiralClass {
    Stable { verifiable: bool },
    Attachable { base: u8, dir: Direction, options: Vec<(u8, Direction)> },
    /// Compression particle with no attachment option.
    Unstable,
    /// Dispersion particle with no attachment option.
    Free,
}

/// Food site that a stable particle of base 0..=5 circles.
pub fn circle_center(world: &LatticeConfig<SpiralState>, v: Coord, parent: Direction) -> Option<Coord> {
    let t = world.torus();
    let vp = t.neighbor(v, parent);
    if world.is_food(vp) {
        return Some(vp);
    }
    let vcw = t.neighbor(v, parent.cw());
    world.is_food(vcw).then_some(vcw)
}

fn verifiable(world: &LatticeConfig<SpiralState>, v: Coord, base: u8, parent: Direction) -> bool {
    if base == 5 {
        return true;
    }
    if base > 5 {
        return false;
    }
    let t = world.torus();
    let Some(f) = circle_center(world, v, parent) else {
        return false;
    };
    let e = t.direction_between(f, v).expect("center is adjacent");
    let u = t.neighbor(f, e.ccw());
    match comp_at(world, u) {
        Some((b, true, pu)) => b == base + 1 && t.neighbor(u, pu) == v,
        _ => false,
    }
}

pub fn classify(world: &LatticeConfig<SpiralState>, id: u32) -> SpiralClass {
    let p = world.particle(id);
    if let SpiralState::Comp { base, verified, parent } = p.state {
        if attachment_property(world, p.pos, Label { base, verified }, parent) {
            return SpiralClass::Stable {
                verifiable: verifiable(world, p.pos, base, parent),
            };
        }
    }
    let options = attachment_options(world, p.pos);
    match options.first() {
        Some(&(base, dir)) => SpiralClass::Attachable { base, dir, options },
        None if p.state.is_comp() => SpiralClass::Unstable,
        None => SpiralClass::Free,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpiralActivation {
    pub id: u32,
    pub before: SpiralState,
    pub after: SpiralState,
    pub class: SpiralClass,
    pub moved: Option<(Coord, Coord)>,
}

pub fn activate<R: Rng + ?Sized>(
    world: &mut LatticeConfig<SpiralState>,
    id: u32,
    params: &SpiralParams,
    rng: &mut R,
) -> SpiralActivation {
    let before = world.particle(id).state;
    let class = classify(world, id);
    let after = match &class {
        SpiralClass::Stable { verifiable } => match before {
            SpiralState::Comp { base, parent, .. } => SpiralState::comp(base, *verifiable && base <= 5, parent),
            SpiralState::Dispersion => unreachable!("stable particles are compression particles"),
        },
        SpiralClass::Attachable { base, dir, .. } => {
            if before == SpiralState::Dispersion && rng.gen::<f64>() >= params.rho {
                before
            } else {
                SpiralState::comp(*base, false, *dir)
            }
        }
        SpiralClass::Unstable | SpiralClass::Free => SpiralState::Dispersion,
    };
    world.set_state(id, after);
    let mut moved = None;
    if after == SpiralState::Dispersion {
        let from = world.particle(id).pos;
        let to = world.neighbor(from, Direction::new(rng.gen_range(0..6)));
        if world.is_vacant(to) {
            world.move_particle(id, to).expect("vacant target");
            moved = Some((from, to));
        }
    }
    SpiralActivation {
        id,
        before,
        after,
        class,
        moved,
    }
}

/// Offsets from the food of the first `n` canonical spiral positions whose
/// first particle sits in direction `start`.
pub fn canonical_spiral(start: Direction, n: usize) -> Vec<Axial> {
    let mut out = Vec::with_capacity(n);
    let mut r = 1;
    while out.len() < n {
        let corner = Axial::unit(start.cw()).scale(r);
        let mut at = corner;
        for side in 0..6 {
            let dir = start.rotate(1 + side);
            for _ in 0..r {
                at = at.step(dir);
                out.push(at);
                if out.len() == n {
                    return out;
                }
            }
        }
        r += 1;
    }
    out
}

/// Canonical state of spiral position `i` given its offset list.
pub fn canonical_state(positions: &[Axial], i: usize) -> SpiralState {
    let target = if i == 0 { Axial::new(0, 0) } else { positions[i - 1] };
    let parent = positions[i].direction_to(target).expect("consecutive positions are adjacent");
    if i < 6 {
        SpiralState::comp(i as u8, true, parent)
    } else {
        SpiralState::comp(6, false, parent)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpiralInfo {
    pub food: Coord,
    pub start: Direction,
    pub members: Vec<u32>,
}

impl SpiralInfo {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Length of the chain matching the canonical spiral at `food` from `start`.
fn chain(world: &LatticeConfig<SpiralState>, food: Coord, start: Direction) -> Vec<u32> {
    let t = world.torus();
    let cap = world.len();
    let positions = canonical_spiral(start, cap);
    let mut members = Vec::new();
    for i in 0..positions.len() {
        let c = t.place(food, positions[i]);
        match world.particle_at(c) {
            Some(id) if *world.state(id) == canonical_state(&positions, i) && !members.contains(&id) => {
                members.push(id)
            }
            _ => break,
        }
    }
    members
}

/// Every maximal spiral around every food site.
pub fn find_spirals(world: &LatticeConfig<SpiralState>) -> Vec<SpiralInfo> {
    let mut out = Vec::new();
    for &food in world.food() {
        for start in Direction::ALL {
            let members = chain(world, food, start);
            if members.len() >= 6 {
                out.push(SpiralInfo { food, start, members });
            }
        }
    }
    out
}

/// Chains that follow the canonical layout but have not completed the
/// verified circle.
pub fn partial_spirals(world: &LatticeConfig<SpiralState>) -> Vec<SpiralInfo> {
    let mut out = Vec::new();
    for &food in world.food() {
        for start in Direction::ALL {
            let members = chain(world, food, start);
            if !members.is_empty() && members.len() < 6 {
                out.push(SpiralInfo { food, start, members });
            }
        }
    }
    out
}

/// Places a canonical spiral of `n` particles around a new food site.
pub fn build_spiral(
    world: &mut LatticeConfig<SpiralState>,
    food: Coord,
    start: Direction,
    n: usize,
) -> Result<Vec<u32>, crate::lattice::LatticeError> {
    world.place_food(food)?;
    let positions = canonical_spiral(start, n);
    let mut ids = Vec::with_capacity(n);
    for i in 0..n {
        let c = world.torus().place(food, positions[i]);
        ids.push(world.add_particle(c, canonical_state(&positions, i))?);
    }
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(x: i32, y: i32) -> Coord {
        Coord::new(x, y)
    }

    /// The drawn spiral, food at (-2,-6): circle offsets then the sixes.
    const CIRCLE: [(i32, i32); 6] = [(0, 1), (-1, 0), (-1, -1), (0, -1), (1, 0), (1, 1)];
    const SIXES: [(i32, i32); 19] = [
        (-1, -4),
        (-2, -4),
        (-3, -5),
        (-4, -6),
        (-4, -7),
        (-4, -8),
        (-3, -8),
        (-2, -8),
        (-1, -7),
        (0, -6),
        (0, -5),
        (0, -4),
        (0, -3),
        (-1, -3),
        (-2, -3),
        (-3, -4),
        (-4, -5),
        (-5, -6),
        (-5, -7),
    ];

    /// Drawn positions as offsets from the food, in chain order.
    fn drawn() -> Vec<Axial> {
        let mut v: Vec<Axial> = CIRCLE.iter().map(|&(x, y)| Axial::new(x, y)).collect();
        v.extend(SIXES.iter().map(|&(x, y)| Axial::new(x + 2, y + 6)));
        v
    }

    fn drawn_world(count: usize) -> (LatticeConfig<SpiralState>, Coord) {
        let mut w = LatticeConfig::new(24).unwrap();
        let food = c(10, 10);
        w.place_food(food).unwrap();
        let pos = drawn();
        for i in 0..count {
            let at = w.torus().place(food, pos[i]);
            w.add_particle(at, canonical_state(&pos, i)).unwrap();
        }
        (w, food)
    }

    #[test]
    fn canonical_layout_matches_drawing() {
        assert_eq!(canonical_spiral(Direction::new(2), 25), drawn());
    }

    #[test]
    fn canonical_spiral_fills_rings() {
        for a in Direction::ALL {
            let s = canonical_spiral(a, 60);
            let mut seen = std::collections::HashSet::new();
            for (i, p) in s.iter().enumerate() {
                assert!(seen.insert(*p));
                let ring = match i {
                    0..=5 => 1,
                    6..=17 => 2,
                    18..=35 => 3,
                    _ => 4,
                };
                assert_eq!(p.norm(), ring);
                if i > 0 {
                    assert!(s[i - 1].direction_to(*p).is_some());
                }
            }
            assert_eq!(s[0], Axial::unit(a));
        }
    }

    #[test]
    fn drawn_spiral_satisfies_attachment() {
        let (w, _) = drawn_world(25);
        for id in w.ids() {
            let p = w.particle(id);
            let SpiralState::Comp { base, verified, parent } = p.state else {
                panic!()
            };
            assert!(attachment_property(&w, p.pos, Label { base, verified }, parent), "particle {id}");
            assert!(matches!(classify(&w, id), SpiralClass::Stable { verifiable } if verifiable == (base <= 5)));
        }
    }

    #[test]
    fn every_spiral_orientation_is_stable() {
        for a in Direction::ALL {
            for n in 1..40 {
                let mut w = LatticeConfig::new(20).unwrap();
                build_spiral(&mut w, c(10, 10), a, n).unwrap();
                for id in w.ids() {
                    assert!(matches!(classify(&w, id), SpiralClass::Stable { .. }), "a={a} n={n} id={id}");
                }
            }
        }
    }

    #[test]
    fn food_parent_bullet() {
        let mut w = LatticeConfig::new(10).unwrap();
        w.place_food(c(5, 5)).unwrap();
        let v = c(6, 5);
        let d = Direction::new(3);
        assert!(attachment_property(&w, v, Label::plain(0), d));
        assert!(attachment_property(&w, v, Label { base: 0, verified: true }, d));
        assert!(!attachment_property(&w, v, Label::plain(6), d));
        assert!(!attachment_property(&w, v, Label::plain(1), d));
        // a non-5 compression particle counterclockwise of the food blocks state 0
        let ccw = w.torus().neighbor(v, d.ccw());
        w.add_particle(ccw, SpiralState::comp(0, false, Direction::new(4))).unwrap();
        assert!(!attachment_property(&w, v, Label::plain(0), d));
        w.set_state(0, SpiralState::comp(5, false, Direction::new(4)));
        assert!(attachment_property(&w, v, Label::plain(0), d));
    }

    #[test]
    fn dispersion_parent_never_attaches() {
        let mut w = LatticeConfig::new(10).unwrap();
        w.add_particle(c(5, 5), SpiralState::Dispersion).unwrap();
        for base in 0..=6 {
            assert!(!attachment_property(&w, c(6, 5), Label::plain(base), Direction::new(3)));
        }
        assert!(attachment_options(&w, c(6, 5)).is_empty());
    }

    #[test]
    fn verifiable_needs_parented_successor() {
        let (mut w, _) = drawn_world(6);
        assert_eq!(classify(&w, 3), SpiralClass::Stable { verifiable: true });
        // 4* loses its verification: 3 is still stable but no longer verifiable
        let s = *w.state(4);
        w.set_state(4, SpiralState::comp(4, false, s.parent().unwrap()));
        assert_eq!(classify(&w, 3), SpiralClass::Stable { verifiable: false });
        assert_eq!(classify(&w, 5), SpiralClass::Stable { verifiable: true });
    }

    #[test]
    fn orphan_is_unstable() {
        let mut w = LatticeConfig::new(10).unwrap();
        let id = w.add_particle(c(5, 5), SpiralState::comp(3, false, Direction::new(0))).unwrap();
        assert_eq!(classify(&w, id), SpiralClass::Unstable);
        let id2 = w.add_particle(c(2, 2), SpiralState::Dispersion).unwrap();
        assert_eq!(classify(&w, id2), SpiralClass::Free);
    }

    #[test]
    fn growth_tip_is_attachable() {
        let (mut w, food) = drawn_world(24);
        let pos = drawn();
        let tip = w.torus().place(food, pos[24]);
        let id = w.add_particle(tip, SpiralState::Dispersion).unwrap();
        let toward = w.torus().direction_between(tip, w.torus().place(food, pos[23])).unwrap();
        match classify(&w, id) {
            SpiralClass::Attachable { base, dir, options } => {
                assert_eq!((base, dir), (6, toward));
                assert_eq!(options, vec![(6, toward)]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn activation_rules() {
        let (mut w, _) = drawn_world(6);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = SpiralParams::new(0.25).unwrap();
        // stable non-verifiable 2 stays 2
        let s = *w.state(3);
        w.set_state(3, SpiralState::comp(3, false, s.parent().unwrap()));
        let a = activate(&mut w, 2, &p, &mut rng);
        assert_eq!(a.after.label(), "2");
        assert!(a.moved.is_none());
        let a = activate(&mut w, 3, &p, &mut rng);
        assert_eq!(a.after.label(), "3*");
        // lone compression particle disperses and walks
        let id = w.add_particle(c(2, 2), SpiralState::comp(6, false, Direction::new(1))).unwrap();
        let a = activate(&mut w, id, &p, &mut rng);
        assert_eq!(a.after, SpiralState::Dispersion);
        assert_eq!(a.class, SpiralClass::Unstable);
    }

    #[test]
    fn dispersion_attach_rate_is_rho() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = SpiralParams::new(0.25).unwrap();
        let mut joined = 0;
        let trials = 20_000;
        for _ in 0..trials {
            let mut w = LatticeConfig::new(10).unwrap();
            w.place_food(c(5, 5)).unwrap();
            let id = w.add_particle(c(6, 5), SpiralState::Dispersion).unwrap();
            let a = activate(&mut w, id, &p, &mut rng);
            if a.after.is_comp() {
                assert_eq!(a.after, SpiralState::comp(0, false, Direction::new(3)));
                assert!(a.moved.is_none());
                joined += 1;
            }
        }
        let f = joined as f64 / trials as f64;
        let sd = (0.25f64 * 0.75 / trials as f64).sqrt();
        assert!((f - 0.25).abs() < 4.0 * sd, "{f}");
    }

    #[test]
    fn find_spirals_on_drawing() {
        let (w, food) = drawn_world(25);
        let s = find_spirals(&w);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].len(), 25);
        assert_eq!((s[0].food, s[0].start), (food, Direction::new(2)));
        let (w, _) = drawn_world(6);
        assert_eq!(find_spirals(&w)[0].len(), 6);
        let (w, _) = drawn_world(5);
        assert!(find_spirals(&w).is_empty());
        assert_eq!(partial_spirals(&w)[0].len(), 5);
        let mut w = LatticeConfig::new(10).unwrap();
        w.add_particle(c(1, 1), SpiralState::Dispersion).unwrap();
        assert!(find_spirals(&w).is_empty());
    }

    #[test]
    fn rho_range() {
        assert!(SpiralParams::new(0.0).is_err());
        assert!(SpiralParams::new(0.5).is_err());
        assert!(SpiralParams::new(0.49).is_ok());
    }

    proptest! {
        #[test]
        fn compression_particles_never_move(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut w = LatticeConfig::new(8).unwrap();
            w.place_food(c(3, 3)).unwrap();
            for i in 0..20 {
                let at = c(rng.gen_range(0..8), rng.gen_range(0..8));
                let s = if i % 2 == 0 {
                    SpiralState::Dispersion
                } else {
                    SpiralState::comp(rng.gen_range(0..6), false, Direction::new(rng.gen_range(0..6)))
                };
                let _ = w.add_particle(at, s);
            }
            let p = SpiralParams::new(0.3).unwrap();
            for _ in 0..200 {
                let id = rng.gen_range(0..w.len() as u32);
                let a = activate(&mut w, id, &p, &mut rng);
                if a.after.is_comp() {
                    prop_assert!(a.moved.is_none());
                }
                prop_assert!(w.check_consistency().is_ok());
            }
        }
    }
}
