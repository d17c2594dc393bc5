//! World model: object identities, arrangements, the buffer grid, and
//! problem instances with deterministic generation and JSON serialization.
//!
//! Uniform object radius `r` everywhere; two discs overlap iff their centers
//! are strictly closer than `2r`. Goal positions always sit on grid cells.
//! Start positions are continuous but are guaranteed (and validated) to lie
//! within `2r` of their nearest grid cell, so a start disc always overlaps
//! the cell it snaps to — the invariant the constraint compiler relies on.

use crate::geom2d::{Position, PlanarArm, Rect, Side, WorkspaceGeom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use thiserror::Error;

pub const MAX_OBJECTS: usize = 32;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("start and goal arrangements have different sizes ({starts} vs {goals})")]
    MismatchedCounts { starts: usize, goals: usize },
    #[error("at most {MAX_OBJECTS} objects supported, got {n}")]
    TooManyObjects { n: usize },
    #[error("objects {a} and {b} overlap in the start arrangement")]
    OverlappingStarts { a: ObjectId, b: ObjectId },
    #[error("object {object} start lies outside the workspace")]
    StartOutOfBounds { object: ObjectId },
    #[error("object {object} start is not within 2r of any grid cell")]
    StartUncovered { object: ObjectId },
    #[error("object {object} goal is not a grid cell")]
    GoalOffGrid { object: ObjectId },
    #[error("objects {a} and {b} share a goal cell")]
    DuplicateGoalCells { a: ObjectId, b: ObjectId },
    #[error("could not sample a start for object {object} in {attempts} attempts")]
    GenerationFailed { object: ObjectId, attempts: usize },
    #[error("object {object} sits at neither its start nor its goal")]
    NotMonotoneState { object: ObjectId },
    #[error("unsupported instance schema {found} (expected {expected})")]
    UnsupportedSchema { found: u32, expected: u32 },
    #[error("instance JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Index of an object; displayed as `o0`, `o1`, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObjectId(pub usize);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "o{}", self.0)
    }
}

/// A set of objects, packed into a `u64` bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ObjSet(u64);

impl ObjSet {
    pub const EMPTY: ObjSet = ObjSet(0);

    pub fn singleton(o: ObjectId) -> Self {
        ObjSet(1u64 << o.0)
    }

    pub fn from_bits(bits: u64) -> Self {
        ObjSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn full(n: usize) -> Self {
        assert!(n <= MAX_OBJECTS);
        if n == 0 {
            ObjSet(0)
        } else {
            ObjSet((1u64 << n) - 1)
        }
    }

    #[must_use]
    pub fn with(self, o: ObjectId) -> Self {
        ObjSet(self.0 | (1u64 << o.0))
    }

    #[must_use]
    pub fn without(self, o: ObjectId) -> Self {
        ObjSet(self.0 & !(1u64 << o.0))
    }

    pub fn contains(self, o: ObjectId) -> bool {
        self.0 & (1u64 << o.0) != 0
    }

    pub fn union(self, other: ObjSet) -> Self {
        ObjSet(self.0 | other.0)
    }

    pub fn difference(self, other: ObjSet) -> Self {
        ObjSet(self.0 & !other.0)
    }

    pub fn intersects(self, other: ObjSet) -> bool {
        self.0 & other.0 != 0
    }

    pub fn is_subset_of(self, other: ObjSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn count(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Members in ascending index order.
    pub fn iter(self) -> impl Iterator<Item = ObjectId> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(ObjectId(i))
            }
        })
    }
}

impl FromIterator<ObjectId> for ObjSet {
    fn from_iter<T: IntoIterator<Item = ObjectId>>(iter: T) -> Self {
        iter.into_iter().fold(ObjSet::EMPTY, ObjSet::with)
    }
}

impl fmt::Display for ObjSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, o) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{o}")?;
        }
        write!(f, "}}")
    }
}

/// Search state of the monotone solvers: which objects already sit at goal.
/// Every object is either at its start or at its goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct MonoState {
    pub at_goal: ObjSet,
}

impl MonoState {
    pub fn root(inst: &Instance) -> Self {
        // Objects whose start coincides with their goal are already home.
        let at_goal = (0..inst.len())
            .map(ObjectId)
            .filter(|&o| inst.start[o] == inst.goal[o])
            .collect();
        MonoState { at_goal }
    }

    pub fn contains(self, o: ObjectId) -> bool {
        self.at_goal.contains(o)
    }

    #[must_use]
    pub fn with_moved(self, o: ObjectId) -> Self {
        MonoState { at_goal: self.at_goal.with(o) }
    }

    pub fn is_full(self, n: usize) -> bool {
        self.at_goal == ObjSet::full(n)
    }

    pub fn key(self) -> u64 {
        self.at_goal.bits()
    }
}

/// One position per object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arrangement {
    positions: Vec<Position>,
}

impl Arrangement {
    pub fn new(positions: Vec<Position>) -> Self {
        Self { positions }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ObjectId, Position)> + '_ {
        self.positions.iter().enumerate().map(|(i, &p)| (ObjectId(i), p))
    }

    #[must_use]
    pub fn with_moved(&self, o: ObjectId, to: Position) -> Arrangement {
        let mut positions = self.positions.clone();
        positions[o.0] = to;
        Arrangement { positions }
    }

    /// Indices of any overlapping pair, or `None` if pairwise valid.
    pub fn overlapping_pair(&self, radius: f64) -> Option<(ObjectId, ObjectId)> {
        for i in 0..self.positions.len() {
            for j in (i + 1)..self.positions.len() {
                if self.positions[i].distance(self.positions[j]) < 2.0 * radius {
                    return Some((ObjectId(i), ObjectId(j)));
                }
            }
        }
        None
    }
}

impl std::ops::Index<ObjectId> for Arrangement {
    type Output = Position;
    fn index(&self, o: ObjectId) -> &Position {
        &self.positions[o.0]
    }
}

/// The candidate buffer grid: `rows x cols` cells, row 0 nearest the open
/// side, columns ordered left-to-right along the opening.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionGrid {
    pub cells: Vec<Position>,
    pub cols: usize,
    pub rows: usize,
    pub spacing: f64,
}

impl PositionGrid {
    /// Nearest cell index; ties resolve to the lowest index.
    pub fn snap(&self, p: Position) -> usize {
        assert!(!self.cells.is_empty());
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.cells.iter().enumerate() {
            let d = c.distance(p);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// A rearrangement problem: geometry plus start and goal arrangements.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub ws: WorkspaceGeom,
    pub arm: PlanarArm,
    pub radius: f64,
    pub start: Arrangement,
    pub goal: Arrangement,
    pub grid: PositionGrid,
    pub seed: u64,
    /// Grid cell index of each object's goal.
    pub goal_cells: Vec<usize>,
}

impl Instance {
    pub fn new(
        ws: WorkspaceGeom,
        arm: PlanarArm,
        radius: f64,
        start: Arrangement,
        goal: Arrangement,
        grid: PositionGrid,
        seed: u64,
    ) -> Result<Self, WorldError> {
        if start.len() != goal.len() {
            return Err(WorldError::MismatchedCounts { starts: start.len(), goals: goal.len() });
        }
        if start.len() > MAX_OBJECTS {
            return Err(WorldError::TooManyObjects { n: start.len() });
        }
        if let Some((a, b)) = start.overlapping_pair(radius) {
            return Err(WorldError::OverlappingStarts { a, b });
        }
        for (o, p) in start.iter() {
            if !ws.rect.contains(p) {
                return Err(WorldError::StartOutOfBounds { object: o });
            }
            if !grid.is_empty() && grid.cells[grid.snap(p)].distance(p) >= 2.0 * radius {
                return Err(WorldError::StartUncovered { object: o });
            }
        }
        let mut goal_cells = Vec::with_capacity(goal.len());
        for (o, g) in goal.iter() {
            match grid.cells.iter().position(|c| *c == g) {
                Some(idx) => goal_cells.push(idx),
                None => return Err(WorldError::GoalOffGrid { object: o }),
            }
        }
        for i in 0..goal_cells.len() {
            for j in (i + 1)..goal_cells.len() {
                if goal_cells[i] == goal_cells[j] {
                    return Err(WorldError::DuplicateGoalCells { a: ObjectId(i), b: ObjectId(j) });
                }
            }
        }
        Ok(Self { ws, arm, radius, start, goal, grid, seed, goal_cells })
    }

    pub fn len(&self) -> usize {
        self.start.len()
    }

    pub fn is_empty(&self) -> bool {
        self.start.is_empty()
    }

    pub fn objects(&self) -> impl Iterator<Item = ObjectId> {
        (0..self.len()).map(ObjectId)
    }

    /// Same instance with a different start arrangement (used by the global
    /// planner after a perturbation). Revalidates all invariants.
    pub fn with_start(&self, start: Arrangement) -> Result<Instance, WorldError> {
        Instance::new(
            self.ws.clone(),
            self.arm.clone(),
            self.radius,
            start,
            self.goal.clone(),
            self.grid.clone(),
            self.seed,
        )
    }

    /// Whether placing `moving`'s disc on `cell` overlaps any *other* disc.
    pub fn cell_is_free(&self, cell: usize, arr: &Arrangement, moving: ObjectId) -> bool {
        let c = self.grid.cells[cell];
        arr.iter().all(|(o, p)| o == moving || c.distance(p) >= 2.0 * self.radius)
    }
}

/// Positions implied by a monotone state: at-goal objects on their goals,
/// the rest on their starts.
pub fn arrangement_for(inst: &Instance, state: MonoState) -> Arrangement {
    let positions = inst
        .objects()
        .map(|o| if state.contains(o) { inst.goal[o] } else { inst.start[o] })
        .collect();
    Arrangement::new(positions)
}

/// Monotone state of an arrangement, or an error if some object sits at
/// neither endpoint (exact position match).
pub fn mono_state_of(arr: &Arrangement, inst: &Instance) -> Result<MonoState, WorldError> {
    let mut at_goal = ObjSet::EMPTY;
    for (o, p) in arr.iter() {
        if p == inst.goal[o] {
            at_goal = at_goal.with(o);
        } else if p != inst.start[o] {
            return Err(WorldError::NotMonotoneState { object: o });
        }
    }
    Ok(MonoState { at_goal })
}

/// Goal layout for generated instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GenMode {
    /// Goals fill grid cells in index order (front rows first).
    RowGoals,
    /// Goals are a random sample of distinct grid cells.
    RandomGoals,
}

/// Desk-scale geometry defaults plus generation knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceParams {
    pub width: f64,
    pub depth: f64,
    pub open_side: Side,
    pub clearance: f64,
    pub radius: f64,
    pub grid_cols: usize,
    pub grid_rows: usize,
    pub grid_spacing: f64,
    /// Distance from the open side to the first grid row.
    pub front_margin: f64,
    /// Distance from the open side to the arm base, outside the workspace.
    pub base_offset: f64,
    pub link_lengths: [f64; 3],
    pub link_thickness: f64,
    pub joint_limits: [[f64; 2]; 3],
}

impl Default for InstanceParams {
    fn default() -> Self {
        Self {
            width: 1.0,
            depth: 0.6,
            open_side: Side::South,
            clearance: 0.06,
            radius: 0.05,
            grid_cols: 4,
            grid_rows: 4,
            grid_spacing: 0.125,
            front_margin: 0.1,
            // Far enough back that the first link's full sweep circle stays
            // outside the opening: with L1 = 0.45 the shoulder can rotate
            // freely across the frontage no matter which cells are occupied.
            base_offset: 0.45,
            link_lengths: [0.45, 0.45, 0.35],
            link_thickness: 0.02,
            joint_limits: [[-PI, PI]; 3],
        }
    }
}

impl InstanceParams {
    pub fn workspace(&self) -> WorkspaceGeom {
        WorkspaceGeom::new(
            Rect::new(Position::new(0.0, 0.0), Position::new(self.width, self.depth)),
            self.open_side,
            self.clearance,
        )
    }

    /// Opening midpoint, inward depth direction, and lateral direction.
    fn frame(&self) -> (Position, Position, Position) {
        let rect = self.workspace().rect;
        let cx = (rect.min.x + rect.max.x) / 2.0;
        let cy = (rect.min.y + rect.max.y) / 2.0;
        match self.open_side {
            Side::South => (Position::new(cx, rect.min.y), Position::new(0.0, 1.0), Position::new(1.0, 0.0)),
            Side::North => (Position::new(cx, rect.max.y), Position::new(0.0, -1.0), Position::new(-1.0, 0.0)),
            Side::West => (Position::new(rect.min.x, cy), Position::new(1.0, 0.0), Position::new(0.0, -1.0)),
            Side::East => (Position::new(rect.max.x, cy), Position::new(-1.0, 0.0), Position::new(0.0, 1.0)),
        }
    }

    pub fn arm(&self) -> PlanarArm {
        let (mid, inward, _) = self.frame();
        PlanarArm {
            base: mid - inward * self.base_offset,
            link_lengths: self.link_lengths,
            link_thickness: self.link_thickness,
            joint_limits: self.joint_limits,
        }
    }

    pub fn grid(&self) -> PositionGrid {
        let (mid, inward, lateral) = self.frame();
        let half = (self.grid_cols as f64 - 1.0) / 2.0;
        let mut cells = Vec::with_capacity(self.grid_rows * self.grid_cols);
        for r in 0..self.grid_rows {
            for c in 0..self.grid_cols {
                let depth = self.front_margin + r as f64 * self.grid_spacing;
                let side = (c as f64 - half) * self.grid_spacing;
                cells.push(mid + inward * depth + lateral * side);
            }
        }
        PositionGrid {
            cells,
            cols: self.grid_cols,
            rows: self.grid_rows,
            spacing: self.grid_spacing,
        }
    }
}

/// Deterministically generate an instance: goals per `mode`, starts
/// rejection-sampled to be collision-free, inside the walls with clearance,
/// and within `2r` of their nearest grid cell.
pub fn gen_instance(
    params: &InstanceParams,
    n: usize,
    mode: GenMode,
    seed: u64,
) -> Result<Instance, WorldError> {
    let ws = params.workspace();
    let arm = params.arm();
    let grid = params.grid();
    if n > grid.len() || n > MAX_OBJECTS {
        return Err(WorldError::TooManyObjects { n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let goal_cells: Vec<usize> = match mode {
        GenMode::RowGoals => (0..n).collect(),
        GenMode::RandomGoals => rand::seq::index::sample(&mut rng, grid.len(), n).into_vec(),
    };
    let goal = Arrangement::new(goal_cells.iter().map(|&i| grid.cells[i]).collect());

    let rect = ws.rect;
    let lo = Position::new(rect.min.x + ws.clearance, rect.min.y + ws.clearance);
    let hi = Position::new(rect.max.x - ws.clearance, rect.max.y - ws.clearance);
    let mut placed: Vec<Position> = Vec::with_capacity(n);
    const ATTEMPTS: usize = 10_000;
    for i in 0..n {
        let mut ok = None;
        for _ in 0..ATTEMPTS {
            let p = Position::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
            let covered = grid.cells[grid.snap(p)].distance(p) < 2.0 * params.radius * (1.0 - 1e-6);
            let clear = placed.iter().all(|q| q.distance(p) >= 2.0 * params.radius + 1e-9);
            if covered && clear {
                ok = Some(p);
                break;
            }
        }
        match ok {
            Some(p) => placed.push(p),
            None => return Err(WorldError::GenerationFailed { object: ObjectId(i), attempts: ATTEMPTS }),
        }
    }
    Instance::new(ws, arm, params.radius, Arrangement::new(placed), goal, grid, seed)
}

const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    schema: u32,
    seed: u64,
    radius: f64,
    workspace: WorkspaceGeom,
    arm: PlanarArm,
    grid: PositionGrid,
    start: Vec<Position>,
    goal: Vec<Position>,
}

/// Serialize an instance to versioned JSON. `f64` values roundtrip exactly.
pub fn instance_to_json(inst: &Instance) -> String {
    let file = InstanceFile {
        schema: SCHEMA_VERSION,
        seed: inst.seed,
        radius: inst.radius,
        workspace: inst.ws.clone(),
        arm: inst.arm.clone(),
        grid: inst.grid.clone(),
        start: inst.start.iter().map(|(_, p)| p).collect(),
        goal: inst.goal.iter().map(|(_, p)| p).collect(),
    };
    serde_json::to_string_pretty(&file).expect("instance serializes")
}

/// Parse and fully revalidate an instance from JSON.
pub fn instance_from_json(text: &str) -> Result<Instance, WorldError> {
    let file: InstanceFile = serde_json::from_str(text)?;
    if file.schema != SCHEMA_VERSION {
        return Err(WorldError::UnsupportedSchema { found: file.schema, expected: SCHEMA_VERSION });
    }
    Instance::new(
        file.workspace,
        file.arm,
        file.radius,
        Arrangement::new(file.start),
        Arrangement::new(file.goal),
        file.grid,
        file.seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn objset_basic_ops() {
        let a = ObjSet::EMPTY.with(ObjectId(0)).with(ObjectId(3));
        assert!(a.contains(ObjectId(0)) && a.contains(ObjectId(3)) && !a.contains(ObjectId(1)));
        assert_eq!(a.count(), 2);
        assert_eq!(a.iter().collect::<Vec<_>>(), vec![ObjectId(0), ObjectId(3)]);
        assert_eq!(format!("{a}"), "{o0,o3}");
        let b = ObjSet::singleton(ObjectId(3));
        assert!(b.is_subset_of(a));
        assert_eq!(a.difference(b), ObjSet::singleton(ObjectId(0)));
        assert!(a.intersects(b));
        assert_eq!(ObjSet::full(3).bits(), 0b111);
        assert_eq!(ObjSet::full(0), ObjSet::EMPTY);
    }

    #[test]
    fn grid_layout_faces_the_opening() {
        let params = InstanceParams::default();
        let grid = params.grid();
        assert_eq!(grid.len(), 16);
        // Row 0 is nearest the south opening; columns increase with x.
        assert!(grid.cells[0].y < grid.cells[12].y);
        assert!(grid.cells[0].x < grid.cells[1].x);
        // All cells keep wall clearance.
        let ws = params.workspace();
        for c in &grid.cells {
            assert!(c.x >= ws.rect.min.x + params.clearance && c.x <= ws.rect.max.x - params.clearance);
            assert!(c.y <= ws.rect.max.y - params.clearance);
        }
    }

    #[test]
    fn snap_returns_exact_cells_and_breaks_ties_low() {
        let grid = InstanceParams::default().grid();
        for (i, &c) in grid.cells.iter().enumerate() {
            assert_eq!(grid.snap(c), i);
        }
        // Midpoint between cells 0 and 1 is equidistant; lowest index wins.
        let mid = Position::new(
            (grid.cells[0].x + grid.cells[1].x) / 2.0,
            grid.cells[0].y,
        );
        assert_eq!(grid.snap(mid), 0);
    }

    #[test]
    fn snap_matches_linear_scan_oracle() {
        use rand::{Rng, SeedableRng};
        let grid = InstanceParams::default().grid();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let p = Position::new(rng.gen_range(-0.2..1.2), rng.gen_range(-0.2..0.8));
            let got = grid.snap(p);
            let want = grid
                .cells
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| a.distance(p).partial_cmp(&b.distance(p)).unwrap())
                .unwrap()
                .0;
            // Oracle may differ on exact ties only; both must be equidistant.
            assert!(
                (grid.cells[got].distance(p) - grid.cells[want].distance(p)).abs() < 1e-12
            );
        }
    }

    #[test]
    fn generation_is_deterministic_and_seed_sensitive() {
        let params = InstanceParams::default();
        let a = gen_instance(&params, 5, GenMode::RandomGoals, 42).unwrap();
        let b = gen_instance(&params, 5, GenMode::RandomGoals, 42).unwrap();
        assert_eq!(instance_to_json(&a), instance_to_json(&b));
        let c = gen_instance(&params, 5, GenMode::RandomGoals, 43).unwrap();
        assert_ne!(instance_to_json(&a), instance_to_json(&c));
    }

    #[test]
    fn generated_instances_satisfy_invariants() {
        let params = InstanceParams::default();
        for seed in 0..30 {
            for mode in [GenMode::RowGoals, GenMode::RandomGoals] {
                let inst = gen_instance(&params, 8, mode, seed).unwrap();
                assert!(inst.start.overlapping_pair(inst.radius).is_none());
                for (o, p) in inst.start.iter() {
                    assert!(inst.ws.rect.contains(p));
                    let near = inst.grid.cells[inst.grid.snap(p)];
                    assert!(near.distance(p) < 2.0 * inst.radius, "{o} uncovered");
                }
                let mut cells = inst.goal_cells.clone();
                cells.sort_unstable();
                cells.dedup();
                assert_eq!(cells.len(), inst.len(), "duplicate goal cells");
            }
        }
    }

    #[test]
    fn row_goals_fill_front_cells_in_order() {
        let inst = gen_instance(&InstanceParams::default(), 4, GenMode::RowGoals, 1).unwrap();
        assert_eq!(inst.goal_cells, vec![0, 1, 2, 3]);
    }

    #[test]
    fn mono_state_tracks_goal_membership() {
        let inst = gen_instance(&InstanceParams::default(), 4, GenMode::RowGoals, 9).unwrap();
        assert_eq!(MonoState::root(&inst).at_goal, ObjSet::EMPTY);
        let full = arrangement_for(&inst, MonoState { at_goal: ObjSet::full(4) });
        assert_eq!(mono_state_of(&full, &inst).unwrap().at_goal, ObjSet::full(4));
        let mixed = MonoState { at_goal: ObjSet::from_bits(0b0101) };
        assert_eq!(mono_state_of(&arrangement_for(&inst, mixed), &inst).unwrap(), mixed);
        // An off-lattice position is not a monotone state.
        let off = inst.start.with_moved(ObjectId(2), Position::new(0.5, 0.3));
        assert!(matches!(
            mono_state_of(&off, &inst),
            Err(WorldError::NotMonotoneState { object: ObjectId(2) })
        ));
    }

    #[test]
    fn json_roundtrip_is_bit_exact() {
        let inst = gen_instance(&InstanceParams::default(), 6, GenMode::RandomGoals, 77).unwrap();
        let text = instance_to_json(&inst);
        let back = instance_from_json(&text).unwrap();
        for (o, p) in inst.start.iter() {
            assert_eq!(p.x.to_bits(), back.start[o].x.to_bits());
            assert_eq!(p.y.to_bits(), back.start[o].y.to_bits());
        }
        assert_eq!(back.goal_cells, inst.goal_cells);
        assert_eq!(instance_to_json(&back), text);
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let inst = gen_instance(&InstanceParams::default(), 2, GenMode::RowGoals, 3).unwrap();
        let text = instance_to_json(&inst).replace("\"schema\": 1", "\"schema\": 2");
        assert!(matches!(
            instance_from_json(&text),
            Err(WorldError::UnsupportedSchema { found: 2, expected: 1 })
        ));
    }

    #[test]
    fn invalid_instances_are_rejected() {
        let params = InstanceParams::default();
        let inst = gen_instance(&params, 3, GenMode::RowGoals, 4).unwrap();
        // Overlapping starts.
        let bad = inst.start.with_moved(ObjectId(0), inst.start[ObjectId(1)]);
        assert!(matches!(
            inst.with_start(bad),
            Err(WorldError::OverlappingStarts { .. })
        ));
        // Goal off the grid.
        let off_goal = Instance::new(
            inst.ws.clone(),
            inst.arm.clone(),
            inst.radius,
            inst.start.clone(),
            inst.goal.with_moved(ObjectId(1), Position::new(0.512, 0.3)),
            inst.grid.clone(),
            0,
        );
        assert!(matches!(off_goal, Err(WorldError::GoalOffGrid { object: ObjectId(1) })));
        // Uncovered start (far corner away from all cells).
        let uncovered = inst.start.with_moved(ObjectId(0), Position::new(0.07, 0.59));
        assert!(matches!(
            inst.with_start(uncovered),
            Err(WorldError::StartUncovered { object: ObjectId(0) })
        ));
    }

    #[test]
    fn cell_is_free_accounts_for_other_objects_only() {
        let inst = gen_instance(&InstanceParams::default(), 2, GenMode::RowGoals, 11).unwrap();
        let goal_state = arrangement_for(&inst, MonoState { at_goal: ObjSet::full(2) });
        // o0 occupies cell 0; for o1 that cell is busy, for o0 itself it is free.
        assert!(!inst.cell_is_free(0, &goal_state, ObjectId(1)));
        assert!(inst.cell_is_free(0, &goal_state, ObjectId(0)));
        assert!(inst.cell_is_free(9, &goal_state, ObjectId(1)));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn snap_is_idempotent(x in -0.5f64..1.5, y in -0.5f64..1.0) {
                let grid = InstanceParams::default().grid();
                let i = grid.snap(Position::new(x, y));
                prop_assert_eq!(grid.snap(grid.cells[i]), i);
            }

            #[test]
            fn objset_insert_then_contains(bits in 0u64..(1 << 16), idx in 0usize..16) {
                let s = ObjSet::from_bits(bits).with(ObjectId(idx));
                prop_assert!(s.contains(ObjectId(idx)));
                prop_assert_eq!(s.without(ObjectId(idx)).contains(ObjectId(idx)), false);
                prop_assert!(ObjSet::from_bits(bits).is_subset_of(s));
            }
        }
    }
}
