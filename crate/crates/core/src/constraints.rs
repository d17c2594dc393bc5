//! Invalidity detection: compile, per object, which *combinations of other
//! objects being at their goals (or still at their starts)* block every grasp
//! the planner could use, and turn those combinations into predicates the
//! monotone search can check in O(1) against its bitmask state.
//!
//! Pipeline per object `o` (skipping objects already at goal):
//!
//! 1. [`colliding_sets`]: for each of the `k` pick configurations (at `o`'s
//!    snapped start cell) and `k` place configurations (at `o`'s goal,
//!    carrying the disc), collect the set of other objects whose *goal* disc
//!    collides with that configuration's body.
//! 2. [`constraint_sets`]: cross-product unions over one family. A set `C`
//!    survives iff it hits every configuration's colliding set and no proper
//!    subset does — i.e. the inclusion-minimal hitting sets. If any
//!    configuration has an empty colliding set, the family yields nothing
//!    (that grasp remains usable no matter which goals fill up).
//! 3. [`elicit_predicates`]: a constraint set `C` anchored at `o` becomes
//!    `|C| + 1` predicates — for each `b` in `C`, "moving `b` is invalid
//!    while `o` is at start and `C \ {b}` are at goal", plus "moving `o` is
//!    invalid while all of `C` are at goal".
//!
//! Soundness leans on two structural facts: grasp nodes in the roadmap are a
//! prefix of the same `ik_grasp_configs` family analysed here, and a start
//! position always overlaps its snapped cell (enforced by `Instance`), so a
//! cell occupied by another object is never forgiven by the ignore set.

use crate::geom2d::{collides_disc, forward_kinematics, ik_grasp_configs, Disc, GeomError};
use crate::world::{Instance, MonoState, ObjSet, ObjectId};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConstraintError {
    #[error("object {object} admits no grasp configurations: {source}")]
    EmptyGraspSet { object: ObjectId, source: GeomError },
}

/// Which grasp family a configuration belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GraspPhase {
    /// Bare-arm grasp at the object's (snapped) start cell.
    Pick,
    /// Carrying the disc onto the object's goal cell.
    Place,
}

/// The other objects whose goal discs collide with one grasp configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CollidingSet {
    pub object: ObjectId,
    pub phase: GraspPhase,
    pub config_index: usize,
    pub blockers: ObjSet,
}

/// An inclusion-minimal set of objects that, all at goal, block every grasp
/// configuration in a family for `object`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstraintSet {
    pub object: ObjectId,
    pub members: ObjSet,
}

/// "Moving `forbidden` is invalid while everything in `at_start` is still at
/// its start and everything in `at_goal` is at its goal."
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InvalidPredicate {
    pub forbidden: ObjectId,
    pub at_start: ObjSet,
    pub at_goal: ObjSet,
    /// The object whose blocked grasps produced this predicate (the victim).
    pub source: ObjectId,
}

impl InvalidPredicate {
    /// Whether the predicate's conditions hold in `s` (for a candidate move
    /// of `forbidden`, which the caller checks is not yet at goal).
    pub fn fires(&self, s: MonoState) -> bool {
        !self.at_start.intersects(s.at_goal) && self.at_goal.is_subset_of(s.at_goal)
    }
}

impl std::fmt::Display for InvalidPredicate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "move {} invalid while {} at start", self.forbidden, self.at_start)?;
        if !self.at_goal.is_empty() {
            write!(f, " and {} at goal", self.at_goal)?;
        }
        write!(f, " (blocks {})", self.source)
    }
}

/// All predicates, indexed by the forbidden object for O(preds) state checks.
#[derive(Debug, Clone, Default)]
pub struct InvalidityLedger {
    per_forbidden: Vec<Vec<InvalidPredicate>>,
    /// Some constraint-set product hit the cap; pruning is weaker but sound.
    pub truncated: bool,
}

impl InvalidityLedger {
    pub fn empty(n: usize) -> Self {
        Self { per_forbidden: vec![Vec::new(); n], truncated: false }
    }

    /// Assemble a ledger from explicit predicates (used for synthetic search
    /// experiments; real ledgers come from [`detect_invalidity`]).
    pub fn from_predicates(n: usize, preds: impl IntoIterator<Item = InvalidPredicate>) -> Self {
        let mut ledger = Self::empty(n);
        for p in preds {
            assert!(p.forbidden.0 < n);
            ledger.push(p);
        }
        ledger.sort();
        ledger
    }

    /// Whether moving `o` (currently off-goal) out of state `s` is provably
    /// doomed.
    pub fn is_invalid(&self, o: ObjectId, s: MonoState) -> bool {
        self.per_forbidden[o.0].iter().any(|p| p.fires(s))
    }

    pub fn for_object(&self, o: ObjectId) -> &[InvalidPredicate] {
        &self.per_forbidden[o.0]
    }

    pub fn predicates(&self) -> impl Iterator<Item = &InvalidPredicate> {
        self.per_forbidden.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.per_forbidden.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&mut self, p: InvalidPredicate) {
        self.per_forbidden[p.forbidden.0].push(p);
    }

    fn sort(&mut self) {
        for preds in &mut self.per_forbidden {
            preds.sort_by_key(|p| (p.at_goal.bits(), p.at_start.bits(), p.source));
        }
    }
}

/// Both grasp families for `o`: `k` pick configurations at the cell its start
/// snaps to, and `k` place configurations (carrying) at its goal. Each entry
/// records which other objects' goal discs collide with the configuration.
pub fn colliding_sets(
    inst: &Instance,
    o: ObjectId,
    k: usize,
) -> Result<Vec<CollidingSet>, ConstraintError> {
    let pick_pos = inst.grid.cells[inst.grid.snap(inst.start[o])];
    let place_pos = inst.goal[o];
    let wrap = |source| ConstraintError::EmptyGraspSet { object: o, source };
    let pick_cfgs = ik_grasp_configs(&inst.arm, pick_pos, k).map_err(wrap)?;
    let place_cfgs = ik_grasp_configs(&inst.arm, place_pos, k).map_err(wrap)?;

    let goal_discs: Vec<(ObjectId, Disc)> = inst
        .goal
        .iter()
        .filter(|(j, _)| *j != o)
        .map(|(j, p)| (j, Disc { center: p, radius: inst.radius }))
        .collect();

    let mut out = Vec::with_capacity(pick_cfgs.len() + place_cfgs.len());
    for (idx, q) in pick_cfgs.iter().enumerate() {
        let body = forward_kinematics(&inst.arm, q);
        let blockers =
            goal_discs.iter().filter(|(_, d)| collides_disc(&body, d)).map(|(j, _)| *j).collect();
        out.push(CollidingSet { object: o, phase: GraspPhase::Pick, config_index: idx, blockers });
    }
    for (idx, q) in place_cfgs.iter().enumerate() {
        let body = forward_kinematics(&inst.arm, q).with_grasped_disc(inst.radius);
        let blockers =
            goal_discs.iter().filter(|(_, d)| collides_disc(&body, d)).map(|(j, _)| *j).collect();
        out.push(CollidingSet { object: o, phase: GraspPhase::Place, config_index: idx, blockers });
    }
    Ok(out)
}

pub const CONSTRAINT_SET_CAP: usize = 10_000;

/// Cross-product construction of constraint sets over *one* family, with a
/// cap on the number of distinct product sets carried per level. Returns the
/// inclusion-minimal sets and whether the cap truncated anything (truncation
/// only weakens pruning; it never fabricates a constraint).
pub fn constraint_sets_capped(family: &[CollidingSet], cap: usize) -> (Vec<ConstraintSet>, bool) {
    if family.is_empty() {
        return (Vec::new(), false);
    }
    let object = family[0].object;
    debug_assert!(family.iter().all(|c| c.object == object));
    if family.iter().any(|c| c.blockers.is_empty()) {
        // Some grasp stays free regardless of which goals fill in.
        return (Vec::new(), false);
    }
    let mut truncated = false;
    let mut level: Vec<u64> = vec![0];
    for cs in family {
        let mut next = Vec::new();
        let mut seen = HashSet::new();
        'outer: for &m in &level {
            for b in cs.blockers.iter() {
                let nm = m | (1u64 << b.0);
                if seen.insert(nm) {
                    if next.len() == cap {
                        truncated = true;
                        break 'outer;
                    }
                    next.push(nm);
                }
            }
        }
        level = next;
    }
    (minimal_masks(level).into_iter().map(|m| ConstraintSet { object, members: ObjSet::from_bits(m) }).collect(), truncated)
}

/// [`constraint_sets_capped`] with the default cap.
pub fn constraint_sets(family: &[CollidingSet]) -> Vec<ConstraintSet> {
    constraint_sets_capped(family, CONSTRAINT_SET_CAP).0
}

/// Inclusion-minimal masks, sorted by (popcount, value) — deterministic.
fn minimal_masks(mut masks: Vec<u64>) -> Vec<u64> {
    masks.sort_unstable_by_key(|&m| (m.count_ones(), m));
    masks.dedup();
    let mut kept: Vec<u64> = Vec::new();
    for m in masks {
        if !kept.iter().any(|&k| m | k == m) {
            kept.push(m);
        }
    }
    kept
}

/// Expand one constraint set into its `|C| + 1` predicates.
pub fn elicit_predicates(c: &ConstraintSet) -> Vec<InvalidPredicate> {
    let mut out: Vec<InvalidPredicate> = c
        .members
        .iter()
        .map(|b| InvalidPredicate {
            forbidden: b,
            at_start: ObjSet::singleton(c.object),
            at_goal: c.members.without(b),
            source: c.object,
        })
        .collect();
    out.push(InvalidPredicate {
        forbidden: c.object,
        at_start: ObjSet::singleton(c.object),
        at_goal: c.members,
        source: c.object,
    });
    out
}

#[derive(Debug, Clone, Copy)]
pub struct DetectOptions {
    /// Also emit predicates for objects whose *start* discs block every
    /// place configuration of another object (an extension past goal-only
    /// analysis; useful when clutter sits in front of a goal).
    pub start_blocking: bool,
    pub cap: usize,
}

impl Default for DetectOptions {
    fn default() -> Self {
        Self { start_blocking: false, cap: CONSTRAINT_SET_CAP }
    }
}

/// Run the full analysis for every object not already at its goal and
/// assemble the ledger. `k` must equal the roadmap's `k_grasps` for the
/// pruning to be sound against that roadmap.
pub fn detect_invalidity(
    inst: &Instance,
    k: usize,
    opts: &DetectOptions,
) -> Result<InvalidityLedger, ConstraintError> {
    let n = inst.len();
    let root = MonoState::root(inst);
    let mut ledger = InvalidityLedger::empty(n);
    let mut seen: HashSet<(ObjectId, u64, u64)> = HashSet::new();

    for o in inst.objects() {
        if root.contains(o) {
            continue;
        }
        let family = colliding_sets(inst, o, k)?;
        let picks: Vec<CollidingSet> =
            family.iter().copied().filter(|c| c.phase == GraspPhase::Pick).collect();
        let places: Vec<CollidingSet> =
            family.iter().copied().filter(|c| c.phase == GraspPhase::Place).collect();
        let (pick_sets, t1) = constraint_sets_capped(&picks, opts.cap);
        let (place_sets, t2) = constraint_sets_capped(&places, opts.cap);
        ledger.truncated |= t1 || t2;

        // Minimality across the union: a pick set that is a superset of a
        // place set (or vice versa) adds nothing.
        let union = minimal_masks(
            pick_sets.iter().chain(place_sets.iter()).map(|c| c.members.bits()).collect(),
        );
        for members in union {
            let c = ConstraintSet { object: o, members: ObjSet::from_bits(members) };
            for p in elicit_predicates(&c) {
                if seen.insert((p.forbidden, p.at_start.bits(), p.at_goal.bits())) {
                    ledger.push(p);
                }
            }
        }

        if opts.start_blocking {
            for p in start_blocking_predicates(inst, o, k, opts.cap, &mut ledger.truncated)? {
                if seen.insert((p.forbidden, p.at_start.bits(), p.at_goal.bits())) {
                    ledger.push(p);
                }
            }
        }
    }
    ledger.sort();
    Ok(ledger)
}

/// Start-disc analysis for `o`'s place family: which other objects' *snapped
/// start* discs block every carrying configuration at `o`'s goal. Blockers
/// whose snapped cell coincides with `o`'s own pick or target cell are
/// skipped — the planner ignores those two cells while moving `o`, so a
/// predicate built on them would not correspond to a real failure.
fn start_blocking_predicates(
    inst: &Instance,
    o: ObjectId,
    k: usize,
    cap: usize,
    truncated: &mut bool,
) -> Result<Vec<InvalidPredicate>, ConstraintError> {
    let root = MonoState::root(inst);
    let pick_cell = inst.grid.snap(inst.start[o]);
    let goal_cell = inst.goal_cells[o.0];
    let wrap = |source| ConstraintError::EmptyGraspSet { object: o, source };
    let place_cfgs = ik_grasp_configs(&inst.arm, inst.goal[o], k).map_err(wrap)?;

    let start_discs: Vec<(ObjectId, Disc)> = inst
        .start
        .iter()
        .filter(|(j, _)| {
            let cell = inst.grid.snap(inst.start[*j]);
            *j != o && !root.contains(*j) && cell != pick_cell && cell != goal_cell
        })
        .map(|(j, p)| {
            let snapped = inst.grid.cells[inst.grid.snap(p)];
            (j, Disc { center: snapped, radius: inst.radius })
        })
        .collect();

    let family: Vec<CollidingSet> = place_cfgs
        .iter()
        .enumerate()
        .map(|(idx, q)| {
            let body = forward_kinematics(&inst.arm, q).with_grasped_disc(inst.radius);
            let blockers = start_discs
                .iter()
                .filter(|(_, d)| collides_disc(&body, d))
                .map(|(j, _)| *j)
                .collect();
            CollidingSet { object: o, phase: GraspPhase::Place, config_index: idx, blockers }
        })
        .collect();

    let (sets, t) = constraint_sets_capped(&family, cap);
    *truncated |= t;
    Ok(sets
        .iter()
        .map(|c| InvalidPredicate {
            forbidden: o,
            at_start: c.members.with(o),
            at_goal: ObjSet::EMPTY,
            source: o,
        })
        .collect())
}
