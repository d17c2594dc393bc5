//! Monotone solvers over the at-goal bitmask state space.
//!
//! All three search the same space — states are subsets of objects already
//! moved to their goals, actions move one off-goal object to its goal — and
//! differ only in bookkeeping:
//!
//! * [`mrs`]: plain backtracking over orderings. No memory; the same state
//!   reached through two different orders is expanded twice, and the motion
//!   planner is consulted again for every transition out of it.
//! * [`dfs_dp`]: the same traversal with a visited set, so each state is
//!   expanded at most once.
//! * [`cidfs_dp`]: `dfs_dp` plus an [`InvalidityLedger`] guard consulted
//!   *before* anything else; moves the ledger proves doomed are pruned
//!   without touching the motion planner.
//!
//! [`cirs`] is the packaged pipeline: run invalidity detection, then
//! `cidfs_dp` against the geometric move oracle.
//!
//! Solvers talk to the world through [`MoveOracle`], so the same engine runs
//! against real geometry ([`GeometricOracle`]) or a scripted feasibility rule
//! ([`SyntheticOracle`]) for counting tests and search-shape experiments.

use crate::constraints::{detect_invalidity, ConstraintError, DetectOptions, InvalidityLedger};
use crate::roadmap::{plan_manipulation, LabeledRoadmap, ManipPath};
use crate::world::{arrangement_for, Instance, MonoState, ObjectId};
use serde::Serialize;
use std::collections::{HashMap, HashSet};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("detector uses {requested} grasps per cell but the roadmap was built with {roadmap}")]
    GraspCountMismatch { requested: usize, roadmap: usize },
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
}

/// A wall-clock budget. `none()` never expires.
#[derive(Debug, Clone, Copy)]
pub struct Deadline(Option<Instant>);

impl Deadline {
    pub fn none() -> Self {
        Self(None)
    }

    pub fn after(d: Duration) -> Self {
        Self(Some(Instant::now() + d))
    }

    pub fn at(t: Instant) -> Self {
        Self(Some(t))
    }

    pub fn expired(&self) -> bool {
        self.0.is_some_and(|t| Instant::now() >= t)
    }

    /// Time left, `None` meaning unlimited. Zero when already expired.
    pub fn remaining(&self) -> Option<Duration> {
        self.0.map(|t| t.saturating_duration_since(Instant::now()))
    }
}

#[derive(Debug)]
pub enum MoveOutcome {
    /// The move works; geometric oracles attach the manipulation path.
    Feasible(Option<ManipPath>),
    Infeasible,
}

/// What a solver needs from the world: the root state and per-move
/// feasibility. Every `try_move` counts as one motion-planner query.
pub trait MoveOracle {
    fn num_objects(&self) -> usize;
    fn root_state(&self) -> MonoState;
    fn try_move(&mut self, o: ObjectId, s: MonoState) -> MoveOutcome;
    fn mp_calls(&self) -> u64;
}

/// Real geometry: moves are feasible iff [`plan_manipulation`] finds pick,
/// transfer and retreat motions on the labeled roadmap. No caching — repeated
/// queries (as issued by [`mrs`]) really do re-plan.
pub struct GeometricOracle<'a> {
    rm: &'a LabeledRoadmap,
    inst: &'a Instance,
    calls: u64,
}

impl<'a> GeometricOracle<'a> {
    pub fn new(rm: &'a LabeledRoadmap, inst: &'a Instance) -> Self {
        Self { rm, inst, calls: 0 }
    }
}

impl MoveOracle for GeometricOracle<'_> {
    fn num_objects(&self) -> usize {
        self.inst.len()
    }

    fn root_state(&self) -> MonoState {
        MonoState::root(self.inst)
    }

    fn try_move(&mut self, o: ObjectId, s: MonoState) -> MoveOutcome {
        self.calls += 1;
        let arr = arrangement_for(self.inst, s);
        match plan_manipulation(self.rm, self.inst, &arr, o, self.inst.goal_cells[o.0]) {
            Ok(p) => MoveOutcome::Feasible(Some(p)),
            Err(_) => MoveOutcome::Infeasible,
        }
    }

    fn mp_calls(&self) -> u64 {
        self.calls
    }
}

/// Scripted feasibility for tests: `rule(o, s)` says whether moving `o` out
/// of `s` works.
pub struct SyntheticOracle<F> {
    n: usize,
    root: MonoState,
    rule: F,
    calls: u64,
}

impl<F: FnMut(ObjectId, MonoState) -> bool> SyntheticOracle<F> {
    pub fn new(n: usize, rule: F) -> Self {
        assert!(n <= crate::world::MAX_OBJECTS);
        Self { n, root: MonoState { at_goal: crate::world::ObjSet::EMPTY }, rule, calls: 0 }
    }

    pub fn with_root(mut self, root: MonoState) -> Self {
        self.root = root;
        self
    }
}

impl<F: FnMut(ObjectId, MonoState) -> bool> MoveOracle for SyntheticOracle<F> {
    fn num_objects(&self) -> usize {
        self.n
    }

    fn root_state(&self) -> MonoState {
        self.root
    }

    fn try_move(&mut self, o: ObjectId, s: MonoState) -> MoveOutcome {
        self.calls += 1;
        if (self.rule)(o, s) {
            MoveOutcome::Feasible(None)
        } else {
            MoveOutcome::Infeasible
        }
    }

    fn mp_calls(&self) -> u64 {
        self.calls
    }
}

#[derive(Debug, Default, Clone, Copy, Serialize)]
pub struct SearchStats {
    /// States entered (re-entries count for the memoryless solver).
    pub expansions: u64,
    /// Motion-planner queries issued during this solve.
    pub mp_calls: u64,
    /// Moves rejected by the invalidity ledger before planning.
    pub pruned: u64,
}

#[derive(Debug, Clone)]
pub struct ParentLink {
    pub state: u64,
    pub moved: ObjectId,
    pub path: Option<ManipPath>,
}

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub state: MonoState,
    pub parent: Option<ParentLink>,
}

/// Every state the search entered, each recorded once with the move that
/// first reached it. `insertion_order` lets callers replay discovery order
/// deterministically (the perturbation planner grafts local trees this way).
#[derive(Debug, Clone)]
pub struct SearchTree {
    pub root: MonoState,
    pub nodes: HashMap<u64, TreeNode>,
    pub insertion_order: Vec<u64>,
}

impl SearchTree {
    fn new(root: MonoState) -> Self {
        let mut nodes = HashMap::new();
        nodes.insert(root.key(), TreeNode { state: root, parent: None });
        Self { root, nodes, insertion_order: vec![root.key()] }
    }

    fn record(&mut self, parent: MonoState, moved: ObjectId, path: Option<ManipPath>, child: MonoState) {
        if !self.nodes.contains_key(&child.key()) {
            self.insertion_order.push(child.key());
            self.nodes.insert(
                child.key(),
                TreeNode {
                    state: child,
                    parent: Some(ParentLink { state: parent.key(), moved, path }),
                },
            );
        }
    }

    pub fn contains(&self, s: MonoState) -> bool {
        self.nodes.contains_key(&s.key())
    }
}

#[derive(Debug, Clone)]
pub enum SolveOutcome {
    Solved {
        /// Objects in the order they were moved to their goals.
        order: Vec<ObjectId>,
        /// Manipulation paths parallel to `order` (`None` under synthetic
        /// oracles).
        paths: Vec<Option<ManipPath>>,
    },
    /// The whole reachable space was searched without filling every goal.
    Exhausted,
    TimedOut,
}

impl SolveOutcome {
    pub fn is_solved(&self) -> bool {
        matches!(self, SolveOutcome::Solved { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SolveOutcome::Solved { .. } => "solved",
            SolveOutcome::Exhausted => "exhausted",
            SolveOutcome::TimedOut => "timeout",
        }
    }
}

#[derive(Debug)]
pub struct SolveResult {
    pub outcome: SolveOutcome,
    pub stats: SearchStats,
    pub tree: SearchTree,
}

enum Flow {
    /// Moves taken below this point, deepest first.
    Solved(Vec<(ObjectId, Option<ManipPath>)>),
    Dead,
    Timeout,
}

struct Engine<'o> {
    oracle: &'o mut dyn MoveOracle,
    ledger: Option<&'o InvalidityLedger>,
    memoize: bool,
    deadline: Deadline,
    n: usize,
    visited: HashSet<u64>,
    tree: SearchTree,
    stats: SearchStats,
}

impl<'o> Engine<'o> {
    fn new(
        oracle: &'o mut dyn MoveOracle,
        ledger: Option<&'o InvalidityLedger>,
        memoize: bool,
        deadline: Deadline,
    ) -> Self {
        let n = oracle.num_objects();
        let root = oracle.root_state();
        Self {
            oracle,
            ledger,
            memoize,
            deadline,
            n,
            visited: HashSet::new(),
            tree: SearchTree::new(root),
            stats: SearchStats::default(),
        }
    }

    fn run(mut self) -> SolveResult {
        let root = self.tree.root;
        let calls_before = self.oracle.mp_calls();
        let flow = self.recurse(root);
        self.stats.mp_calls = self.oracle.mp_calls() - calls_before;
        let outcome = match flow {
            Flow::Solved(mut rev) => {
                rev.reverse();
                let (order, paths) = rev.into_iter().unzip();
                SolveOutcome::Solved { order, paths }
            }
            Flow::Dead => SolveOutcome::Exhausted,
            Flow::Timeout => SolveOutcome::TimedOut,
        };
        SolveResult { outcome, stats: self.stats, tree: self.tree }
    }

    fn recurse(&mut self, s: MonoState) -> Flow {
        self.stats.expansions += 1;
        if s.is_full(self.n) {
            return Flow::Solved(Vec::new());
        }
        if self.deadline.expired() {
            return Flow::Timeout;
        }
        for o in (0..self.n).map(ObjectId) {
            if s.contains(o) {
                continue;
            }
            if let Some(ledger) = self.ledger {
                if ledger.is_invalid(o, s) {
                    self.stats.pruned += 1;
                    continue;
                }
            }
            let child = s.with_moved(o);
            if self.memoize && self.visited.contains(&child.key()) {
                continue;
            }
            match self.oracle.try_move(o, s) {
                MoveOutcome::Infeasible => continue,
                MoveOutcome::Feasible(path) => {
                    if self.memoize {
                        self.visited.insert(child.key());
                    }
                    self.tree.record(s, o, path.clone(), child);
                    match self.recurse(child) {
                        Flow::Dead => continue,
                        Flow::Timeout => return Flow::Timeout,
                        Flow::Solved(mut tail) => {
                            tail.push((o, path));
                            return Flow::Solved(tail);
                        }
                    }
                }
            }
        }
        Flow::Dead
    }
}

/// Memoryless backtracking over move orderings.
pub fn mrs(oracle: &mut dyn MoveOracle, deadline: Deadline) -> SolveResult {
    Engine::new(oracle, None, false, deadline).run()
}

/// Backtracking with a visited set: each state expanded at most once.
pub fn dfs_dp(oracle: &mut dyn MoveOracle, deadline: Deadline) -> SolveResult {
    Engine::new(oracle, None, true, deadline).run()
}

/// [`dfs_dp`] with the invalidity-ledger guard in front of the planner.
pub fn cidfs_dp(
    oracle: &mut dyn MoveOracle,
    ledger: &InvalidityLedger,
    deadline: Deadline,
) -> SolveResult {
    Engine::new(oracle, Some(ledger), true, deadline).run()
}

#[derive(Debug)]
pub struct CirsSolve {
    pub result: SolveResult,
    pub ledger: InvalidityLedger,
}

/// The constraint-informed pipeline: detect invalid arrangements for this
/// instance, then run the guarded search against real geometry. `k` must
/// match the grasp family the roadmap's grasp nodes were drawn from,
/// otherwise the ledger could prune moves the roadmap can still execute.
pub fn cirs(
    inst: &Instance,
    rm: &LabeledRoadmap,
    k: usize,
    detect: &DetectOptions,
    deadline: Deadline,
) -> Result<CirsSolve, SolverError> {
    if k != rm.params.k_grasps {
        return Err(SolverError::GraspCountMismatch { requested: k, roadmap: rm.params.k_grasps });
    }
    let ledger = detect_invalidity(inst, k, detect)?;
    let mut oracle = GeometricOracle::new(rm, inst);
    let result = cidfs_dp(&mut oracle, &ledger, deadline);
    Ok(CirsSolve { result, ledger })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Mrs,
    DfsDp,
    Cirs,
}

impl SolverKind {
    pub const ALL: [SolverKind; 3] = [SolverKind::Mrs, SolverKind::DfsDp, SolverKind::Cirs];

    pub fn name(&self) -> &'static str {
        match self {
            SolverKind::Mrs => "mrs",
            SolverKind::DfsDp => "dfsdp",
            SolverKind::Cirs => "cirs",
        }
    }

    pub fn from_name(s: &str) -> Option<SolverKind> {
        match s {
            "mrs" => Some(SolverKind::Mrs),
            "dfsdp" => Some(SolverKind::DfsDp),
            "cirs" => Some(SolverKind::Cirs),
            _ => None,
        }
    }
}

#[derive(Debug)]
pub struct GeometricSolve {
    pub result: SolveResult,
    /// Present only for the constraint-informed solver.
    pub ledger: Option<InvalidityLedger>,
}

/// Run one of the three solvers against real geometry.
pub fn solve_geometric(
    kind: SolverKind,
    inst: &Instance,
    rm: &LabeledRoadmap,
    detect: &DetectOptions,
    deadline: Deadline,
) -> Result<GeometricSolve, SolverError> {
    match kind {
        SolverKind::Mrs => {
            let mut oracle = GeometricOracle::new(rm, inst);
            Ok(GeometricSolve { result: mrs(&mut oracle, deadline), ledger: None })
        }
        SolverKind::DfsDp => {
            let mut oracle = GeometricOracle::new(rm, inst);
            Ok(GeometricSolve { result: dfs_dp(&mut oracle, deadline), ledger: None })
        }
        SolverKind::Cirs => {
            let s = cirs(inst, rm, rm.params.k_grasps, detect, deadline)?;
            Ok(GeometricSolve { result: s.result, ledger: Some(s.ledger) })
        }
    }
}
