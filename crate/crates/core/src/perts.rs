//! Non-monotone planning by perturbation: when no ordering of direct
//! goal moves works, relocate some object to a free buffer cell and try
//! again from the perturbed arrangement.
//!
//! The planner grows a global tree whose nodes are full arrangements. A
//! node's *level* counts the perturbations on its root path — the number of
//! buffers a solution through it would consume. Each iteration:
//!
//! 1. select uniformly among the lowest-level nodes with perturbation budget
//!    left (so cheap solutions are exhausted before buying another buffer),
//! 2. draw a random object and a random eligible free cell, plan the
//!    relocation with the real manipulation planner,
//! 3. run a monotone local solve from the perturbed arrangement toward the
//!    goals; if it succeeds the root path plus the local solution is the
//!    answer, otherwise the local search tree is grafted into the global
//!    tree (every reachable arrangement is a future perturbation base at the
//!    same level).
//!
//! The roadmap is instance-independent and shared across every local solve;
//! only the occupancy filters change.

use crate::constraints::DetectOptions;
use crate::roadmap::{plan_manipulation, LabeledRoadmap, ManipPath};
use crate::solvers::{
    solve_geometric, Deadline, SearchTree, SolveOutcome, SolverError, SolverKind,
};
use crate::geom2d::Position;
use crate::world::{arrangement_for, Arrangement, Instance, ObjectId, WorldError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PertsError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("perturbed arrangement failed validation: {0}")]
    World(#[from] WorldError),
}

#[derive(Debug, Clone, Copy)]
pub struct PertsConfig {
    /// Local monotone solver run from every perturbed arrangement.
    pub solver: SolverKind,
    /// Per-node perturbation budget = `budget_factor * n`.
    pub budget_factor: usize,
    /// Each local solve gets `remaining / deadline_divisor` of the budget.
    pub deadline_divisor: u32,
    /// Hard cap on perturbation attempts (keeps unsolvable runs finite even
    /// without a wall-clock deadline).
    pub max_iterations: usize,
    pub detect: DetectOptions,
    pub seed: u64,
    /// Record which node each iteration selected (for tests and audits).
    pub log_selection: bool,
}

impl Default for PertsConfig {
    fn default() -> Self {
        Self {
            solver: SolverKind::Cirs,
            budget_factor: 2,
            deadline_divisor: 8,
            max_iterations: 10_000,
            detect: DetectOptions::default(),
            seed: 0,
            log_selection: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ActionKind {
    /// Relocation to a buffer cell (costs one buffer).
    Perturb,
    /// A move to the object's final goal cell.
    GoalMove,
}

/// One executed manipulation in the final plan.
#[derive(Debug, Clone)]
pub struct Action {
    pub kind: ActionKind,
    pub object: ObjectId,
    pub from: Position,
    pub to: Position,
    pub path: Option<ManipPath>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnsolvedReason {
    TimedOut,
    IterationCap,
    BudgetExhausted,
}

#[derive(Debug)]
pub enum GlobalOutcome {
    Solved { actions: Vec<Action>, buffers: usize },
    Unsolved { reason: UnsolvedReason },
}

impl GlobalOutcome {
    pub fn is_solved(&self) -> bool {
        matches!(self, GlobalOutcome::Solved { .. })
    }
}

#[derive(Debug, Default, Clone, Copy, Serialize)]
pub struct GlobalStats {
    /// Perturbation attempts (selection draws).
    pub iterations: u64,
    /// Monotone local solves run (root solve included).
    pub local_solves: u64,
    /// Perturbations that produced a new global node.
    pub perturbations_applied: u64,
    /// Global tree size at the end.
    pub nodes: u64,
    /// Motion-planner queries across local solves and perturbation plans.
    pub mp_calls: u64,
    /// State expansions summed over local solves.
    pub expansions: u64,
    /// Ledger prunes summed over local solves.
    pub pruned: u64,
}

#[derive(Debug)]
pub struct PertsResult {
    pub outcome: GlobalOutcome,
    pub stats: GlobalStats,
    /// `(iteration, selected node, node level)` when selection logging is on.
    pub selection_log: Vec<(u64, usize, usize)>,
}

struct GlobalNode {
    arr: Arrangement,
    level: usize,
    parent: Option<(usize, Action)>,
    budget: usize,
}

fn arrangement_key(arr: &Arrangement) -> Vec<u64> {
    arr.iter().flat_map(|(_, p)| [p.x.to_bits(), p.y.to_bits()]).collect()
}

struct Planner<'a> {
    inst: &'a Instance,
    rm: &'a LabeledRoadmap,
    cfg: PertsConfig,
    deadline: Deadline,
    rng: ChaCha8Rng,
    nodes: Vec<GlobalNode>,
    index: HashMap<Vec<u64>, usize>,
    stats: GlobalStats,
    selection_log: Vec<(u64, usize, usize)>,
}

impl<'a> Planner<'a> {
    fn new(inst: &'a Instance, rm: &'a LabeledRoadmap, cfg: PertsConfig, deadline: Deadline) -> Self {
        Self {
            inst,
            rm,
            cfg,
            deadline,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            nodes: Vec::new(),
            index: HashMap::new(),
            stats: GlobalStats::default(),
            selection_log: Vec::new(),
        }
    }

    fn fresh_budget(&self) -> usize {
        self.cfg.budget_factor * self.inst.len()
    }

    /// Insert an arrangement if unseen; returns its index either way.
    fn intern(&mut self, arr: Arrangement, level: usize, parent: Option<(usize, Action)>) -> usize {
        let key = arrangement_key(&arr);
        if let Some(&i) = self.index.get(&key) {
            return i;
        }
        let i = self.nodes.len();
        let budget = self.fresh_budget();
        self.nodes.push(GlobalNode { arr, level, parent, budget });
        self.index.insert(key, i);
        i
    }

    fn local_deadline(&self) -> Deadline {
        match self.deadline.remaining() {
            None => Deadline::none(),
            Some(rem) => Deadline::after(rem / self.cfg.deadline_divisor),
        }
    }

    /// Monotone solve from `base`'s arrangement; grafts the search tree and
    /// returns the goal-move actions when solved.
    fn local_solve(&mut self, base: usize) -> Result<Option<Vec<Action>>, PertsError> {
        self.stats.local_solves += 1;
        let local = self.inst.with_start(self.nodes[base].arr.clone())?;
        let solve =
            solve_geometric(self.cfg.solver, &local, self.rm, &self.cfg.detect, self.local_deadline())?;
        self.stats.mp_calls += solve.result.stats.mp_calls;
        self.stats.expansions += solve.result.stats.expansions;
        self.stats.pruned += solve.result.stats.pruned;
        self.graft(base, &local, &solve.result.tree);
        if let SolveOutcome::Solved { order, paths } = solve.result.outcome {
            let mut actions = Vec::with_capacity(order.len());
            let mut arr = local.start.clone();
            for (o, path) in order.into_iter().zip(paths) {
                let to = local.goal[o];
                actions.push(Action { kind: ActionKind::GoalMove, object: o, from: arr[o], to, path });
                arr = arr.with_moved(o, to);
            }
            return Ok(Some(actions));
        }
        Ok(None)
    }

    /// Every arrangement the local search visited becomes a perturbation
    /// base at the same level, linked through goal-move actions.
    fn graft(&mut self, base: usize, local: &Instance, tree: &SearchTree) {
        let level = self.nodes[base].level;
        let mut map: HashMap<u64, usize> = HashMap::new();
        map.insert(tree.root.key(), base);
        for key in &tree.insertion_order {
            let node = &tree.nodes[key];
            let Some(link) = &node.parent else { continue };
            let Some(&gparent) = map.get(&link.state) else { continue };
            let arr = arrangement_for(local, node.state);
            let action = Action {
                kind: ActionKind::GoalMove,
                object: link.moved,
                from: self.nodes[gparent].arr[link.moved],
                to: local.goal[link.moved],
                path: link.path.clone(),
            };
            let gi = self.intern(arr, level, Some((gparent, action)));
            map.insert(*key, gi);
        }
    }

    /// Lowest level among nodes with budget, chosen uniformly.
    fn select(&mut self) -> Option<usize> {
        let min_level =
            self.nodes.iter().filter(|n| n.budget > 0).map(|n| n.level).min()?;
        let candidates: Vec<usize> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.budget > 0 && n.level == min_level)
            .map(|(i, _)| i)
            .collect();
        let pick = candidates[self.rng.gen_range(0..candidates.len())];
        Some(pick)
    }

    /// One perturbation attempt from `base`: random object to a random
    /// eligible cell, executed with the real manipulation planner.
    fn perturb(&mut self, base: usize) -> Result<Option<usize>, PertsError> {
        self.nodes[base].budget -= 1;
        let arr = self.nodes[base].arr.clone();
        let level = self.nodes[base].level;
        let o = ObjectId(self.rng.gen_range(0..self.inst.len()));
        let eligible: Vec<usize> = (0..self.inst.grid.len())
            .filter(|&c| {
                let pos = self.inst.grid.cells[c];
                // Not where it already stands, not its own goal (the local
                // solver owns goal moves), and physically free.
                pos != arr[o] && pos != self.inst.goal[o] && self.inst.cell_is_free(c, &arr, o)
            })
            .collect();
        if eligible.is_empty() {
            return Ok(None);
        }
        let cell = eligible[self.rng.gen_range(0..eligible.len())];
        self.stats.mp_calls += 1;
        let Ok(path) = plan_manipulation(self.rm, self.inst, &arr, o, cell) else {
            return Ok(None);
        };
        let to = self.inst.grid.cells[cell];
        let action =
            Action { kind: ActionKind::Perturb, object: o, from: arr[o], to, path: Some(path) };
        let next = arr.with_moved(o, to);
        let key = arrangement_key(&next);
        if self.index.contains_key(&key) {
            return Ok(None);
        }
        let gi = self.intern(next, level + 1, Some((base, action)));
        self.stats.perturbations_applied += 1;
        Ok(Some(gi))
    }

    fn traceback(&self, node: usize, mut tail: Vec<Action>) -> (Vec<Action>, usize) {
        let mut chain = Vec::new();
        let mut cur = node;
        while let Some((parent, action)) = &self.nodes[cur].parent {
            chain.push(action.clone());
            cur = *parent;
        }
        chain.reverse();
        let buffers = self.nodes[node].level;
        chain.append(&mut tail);
        (chain, buffers)
    }

    fn run(mut self) -> Result<PertsResult, PertsError> {
        let root = self.intern(self.inst.start.clone(), 0, None);
        if let Some(tail) = self.local_solve(root)? {
            let (actions, buffers) = self.traceback(root, tail);
            self.stats.nodes = self.nodes.len() as u64;
            return Ok(self.finish(GlobalOutcome::Solved { actions, buffers }));
        }

        while self.stats.iterations < self.cfg.max_iterations as u64 {
            if self.deadline.expired() {
                return Ok(self.finish(GlobalOutcome::Unsolved { reason: UnsolvedReason::TimedOut }));
            }
            let Some(base) = self.select() else {
                return Ok(self
                    .finish(GlobalOutcome::Unsolved { reason: UnsolvedReason::BudgetExhausted }));
            };
            self.stats.iterations += 1;
            if self.cfg.log_selection {
                self.selection_log.push((self.stats.iterations, base, self.nodes[base].level));
            }
            if let Some(fresh) = self.perturb(base)? {
                if let Some(tail) = self.local_solve(fresh)? {
                    let (actions, buffers) = self.traceback(fresh, tail);
                    return Ok(self.finish(GlobalOutcome::Solved { actions, buffers }));
                }
            }
        }
        Ok(self.finish(GlobalOutcome::Unsolved { reason: UnsolvedReason::IterationCap }))
    }

    fn finish(mut self, outcome: GlobalOutcome) -> PertsResult {
        self.stats.nodes = self.nodes.len() as u64;
        PertsResult { outcome, stats: self.stats, selection_log: self.selection_log }
    }
}

/// Plan a (possibly non-monotone) rearrangement for `inst` on `rm`.
pub fn perts(
    inst: &Instance,
    rm: &LabeledRoadmap,
    cfg: &PertsConfig,
    deadline: Deadline,
) -> Result<PertsResult, PertsError> {
    Planner::new(inst, rm, *cfg, deadline).run()
}

/// Replay a plan action-by-action with fresh manipulation planning; returns
/// the final arrangement. Used by tests and the CLI to validate output.
pub fn replay_actions(
    inst: &Instance,
    rm: &LabeledRoadmap,
    actions: &[Action],
) -> Result<Arrangement, String> {
    let mut arr = inst.start.clone();
    for (i, a) in actions.iter().enumerate() {
        if arr[a.object] != a.from {
            return Err(format!("action {i}: {} is at {:?}, not {:?}", a.object, arr[a.object], a.from));
        }
        let cell = inst
            .grid
            .cells
            .iter()
            .position(|&c| c == a.to)
            .ok_or_else(|| format!("action {i}: target {:?} is not a cell", a.to))?;
        plan_manipulation(rm, inst, &arr, a.object, cell)
            .map_err(|e| format!("action {i}: replay planning failed: {e}"))?;
        if a.kind == ActionKind::GoalMove && a.to != inst.goal[a.object] {
            return Err(format!("action {i}: goal move does not end at the goal"));
        }
        arr = arr.with_moved(a.object, a.to);
    }
    Ok(arr)
}
