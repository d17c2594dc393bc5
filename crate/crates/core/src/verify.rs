//! Independent correctness checks, deliberately implemented without the
//! machinery they validate:
//!
//! * [`permutation_solvable`] / [`permutation_solutions`] decide monotone
//!   solvability straight from the definition — try orderings of off-goal
//!   objects, no memoization, no pruning — so they can referee the solvers.
//! * [`ledger_sound_on_solutions`] confirms the invalidity ledger never
//!   fires against a move some actual solution takes.
//! * [`label_equivalence`] recomputes every edge label from scratch and
//!   replays shortest-path queries with fresh collision checks.
//!
//! Everything returns `Result<(), String>` where the error describes the
//! first counterexample found; the CLI's `verify` subcommand prints these as
//! pass/fail lines and the acceptance tests assert on them.

use crate::constraints::InvalidityLedger;
use crate::geom2d::edge_collides;
use crate::roadmap::{plan_path, plan_path_filtered, CellSet, LabeledRoadmap, Mode, PathQuery};
use crate::solvers::{MoveOracle, MoveOutcome};
use crate::world::{Instance, MonoState, ObjSet, ObjectId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Does any ordering of the off-goal objects reach the full state? Straight
/// backtracking over permutations; exponential, intended for small n.
pub fn permutation_solvable(oracle: &mut dyn MoveOracle) -> bool {
    let n = oracle.num_objects();
    let root = oracle.root_state();
    fn rec(oracle: &mut dyn MoveOracle, n: usize, s: MonoState) -> bool {
        if s.is_full(n) {
            return true;
        }
        for o in (0..n).map(ObjectId) {
            if s.contains(o) {
                continue;
            }
            if let MoveOutcome::Feasible(_) = oracle.try_move(o, s) {
                if rec(oracle, n, s.with_moved(o)) {
                    return true;
                }
            }
        }
        false
    }
    rec(oracle, n, root)
}

/// Every complete solving order, in lexicographic order of moves.
pub fn permutation_solutions(oracle: &mut dyn MoveOracle) -> Vec<Vec<ObjectId>> {
    let n = oracle.num_objects();
    let root = oracle.root_state();
    let mut out = Vec::new();
    let mut prefix = Vec::new();
    fn rec(
        oracle: &mut dyn MoveOracle,
        n: usize,
        s: MonoState,
        prefix: &mut Vec<ObjectId>,
        out: &mut Vec<Vec<ObjectId>>,
    ) {
        if s.is_full(n) {
            out.push(prefix.clone());
            return;
        }
        for o in (0..n).map(ObjectId) {
            if s.contains(o) {
                continue;
            }
            if let MoveOutcome::Feasible(_) = oracle.try_move(o, s) {
                prefix.push(o);
                rec(oracle, n, s.with_moved(o), prefix, out);
                prefix.pop();
            }
        }
    }
    rec(oracle, n, root, &mut prefix, &mut out);
    out
}

/// A solver's claimed solution must replay move-by-move against a fresh
/// oracle and end with every object at its goal.
pub fn replay_order(oracle: &mut dyn MoveOracle, order: &[ObjectId]) -> Result<(), String> {
    let n = oracle.num_objects();
    let mut s = oracle.root_state();
    for (i, &o) in order.iter().enumerate() {
        if s.contains(o) {
            return Err(format!("step {i}: {o} already at goal"));
        }
        match oracle.try_move(o, s) {
            MoveOutcome::Feasible(_) => s = s.with_moved(o),
            MoveOutcome::Infeasible => {
                return Err(format!("step {i}: moving {o} from {} is infeasible", s.at_goal));
            }
        }
    }
    if !s.is_full(n) {
        return Err(format!("order ends at {} with goals unfilled", s.at_goal));
    }
    Ok(())
}

/// The ledger may prune only doomed branches: along every solution the
/// permutation oracle finds, no taken move may be flagged invalid.
pub fn ledger_sound_on_solutions(
    oracle: &mut dyn MoveOracle,
    ledger: &InvalidityLedger,
) -> Result<(), String> {
    let solutions = permutation_solutions(oracle);
    for order in &solutions {
        let mut s = oracle.root_state();
        for &o in order {
            if ledger.is_invalid(o, s) {
                return Err(format!(
                    "ledger flags {o} at {} but a solution moves it there (order {order:?})",
                    s.at_goal
                ));
            }
            s = s.with_moved(o);
        }
    }
    Ok(())
}

/// Recompute every per-edge, per-cell occupancy label in both modes with
/// fresh interpolated collision checks, plus the carry-along wall flag.
pub fn label_equivalence(rm: &LabeledRoadmap, inst: &Instance) -> Result<(), String> {
    let res = rm.params.resolution;
    for (ei, e) in rm.edges.iter().enumerate() {
        let from = &rm.nodes[e.a].config;
        let to = &rm.nodes[e.b].config;
        for (ci, &cell) in inst.grid.cells.iter().enumerate() {
            let disc = [crate::geom2d::Disc { center: cell, radius: inst.radius }];
            let transit = edge_collides(&inst.arm, from, to, &disc, None, None, res);
            if transit != e.transit.contains(ci) {
                return Err(format!(
                    "edge {ei} cell {ci}: stored transit label {} but fresh check says {}",
                    e.transit.contains(ci),
                    transit
                ));
            }
            let transfer =
                edge_collides(&inst.arm, from, to, &disc, None, Some(inst.radius), res);
            if transfer != e.transfer.contains(ci) {
                return Err(format!(
                    "edge {ei} cell {ci}: stored transfer label {} but fresh check says {}",
                    e.transfer.contains(ci),
                    transfer
                ));
            }
        }
        let wall_ok =
            !edge_collides(&inst.arm, from, to, &[], Some(&inst.ws), Some(inst.radius), res);
        if wall_ok != e.transfer_wall_ok {
            return Err(format!(
                "edge {ei}: stored transfer_wall_ok {} but fresh check says {}",
                e.transfer_wall_ok, wall_ok
            ));
        }
    }
    Ok(())
}

/// Random labeled queries must agree — same feasibility, bit-equal cost —
/// with planning over a fresh-collision edge filter.
pub fn query_equivalence(
    rm: &LabeledRoadmap,
    inst: &Instance,
    queries: usize,
    seed: u64,
) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let res = rm.params.resolution;
    let ncells = inst.grid.len();
    for qi in 0..queries {
        let from = rng.gen_range(0..rm.nodes.len());
        let to = rng.gen_range(0..rm.nodes.len());
        let mode = if rng.gen_bool(0.5) { Mode::Transit } else { Mode::Transfer };
        let mut occupied = CellSet::empty(ncells);
        let mut ignore = CellSet::empty(ncells);
        for c in 0..ncells {
            if rng.gen_bool(0.3) {
                occupied.insert(c);
                if rng.gen_bool(0.25) {
                    ignore.insert(c);
                }
            }
        }
        let q = PathQuery { from, to, mode, occupied: occupied.clone(), ignore: ignore.clone() };
        let labeled = plan_path(rm, &q);

        let blocked = occupied.difference(&ignore);
        let discs: Vec<crate::geom2d::Disc> = blocked
            .iter()
            .map(|c| crate::geom2d::Disc { center: inst.grid.cells[c], radius: inst.radius })
            .collect();
        let grasped = match mode {
            Mode::Transit => None,
            Mode::Transfer => Some(inst.radius),
        };
        let fresh = plan_path_filtered(rm, from, to, |e| {
            let a = &rm.nodes[e.a].config;
            let b = &rm.nodes[e.b].config;
            let ws = match mode {
                Mode::Transit => None,
                Mode::Transfer => Some(&inst.ws),
            };
            !edge_collides(&inst.arm, a, b, &discs, ws, grasped, res)
        });
        match (&labeled, &fresh) {
            (Ok(l), Ok(f)) => {
                if l.cost != f.cost {
                    return Err(format!(
                        "query {qi}: labeled cost {} != fresh cost {}",
                        l.cost, f.cost
                    ));
                }
            }
            (Err(_), Err(_)) => {}
            (l, f) => {
                return Err(format!(
                    "query {qi}: labeled feasibility {} but fresh says {}",
                    l.is_ok(),
                    f.is_ok()
                ));
            }
        }
    }
    Ok(())
}

/// Exhaustive cross-check of the three solvers against the permutation
/// oracle on one geometric instance.
pub fn solver_agreement(
    inst: &Instance,
    rm: &LabeledRoadmap,
    detect: &crate::constraints::DetectOptions,
    deadline: crate::solvers::Deadline,
) -> Result<(), String> {
    use crate::solvers::{solve_geometric, GeometricOracle, SolveOutcome, SolverKind};
    let mut reference = GeometricOracle::new(rm, inst);
    let expect = permutation_solvable(&mut reference);
    for kind in SolverKind::ALL {
        let solve = solve_geometric(kind, inst, rm, detect, deadline)
            .map_err(|e| format!("{}: {e}", kind.name()))?;
        match &solve.result.outcome {
            SolveOutcome::Solved { order, .. } => {
                if !expect {
                    return Err(format!(
                        "{} solved an instance the permutation oracle calls unsolvable",
                        kind.name()
                    ));
                }
                let mut fresh = GeometricOracle::new(rm, inst);
                replay_order(&mut fresh, order).map_err(|e| format!("{}: {e}", kind.name()))?;
            }
            SolveOutcome::Exhausted => {
                if expect {
                    return Err(format!(
                        "{} exhausted an instance the permutation oracle solves",
                        kind.name()
                    ));
                }
            }
            SolveOutcome::TimedOut => {
                return Err(format!("{} timed out; verdict inconclusive", kind.name()));
            }
        }
    }
    Ok(())
}

/// Solver agreement over random *synthetic* feasibility tables (no
/// geometry): for `cases` seeded tables with object counts cycling
/// `2..=max_n`, every solver's verdict must match the brute-force
/// permutation oracle. Returns the number of cases checked.
pub fn synthetic_agreement(max_n: usize, cases: u64, seed: u64) -> Result<u64, String> {
    use crate::solvers::{cidfs_dp, dfs_dp, mrs, Deadline, SyntheticOracle};

    if max_n < 2 {
        return Err(format!("synthetic tables need max_n >= 2, got {max_n}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let n = 2 + (case as usize % (max_n - 1));
        let table: Vec<Vec<bool>> =
            (0..n).map(|_| (0..1u64 << n).map(|_| rng.gen_bool(0.7)).collect()).collect();
        let rule = move |o: ObjectId, s: MonoState| table[o.0][s.at_goal.bits() as usize];

        let expect = permutation_solvable(&mut SyntheticOracle::new(n, rule.clone()));
        let empty = InvalidityLedger::empty(n);
        let verdicts = [
            ("mrs", mrs(&mut SyntheticOracle::new(n, rule.clone()), Deadline::none())),
            ("dfs_dp", dfs_dp(&mut SyntheticOracle::new(n, rule.clone()), Deadline::none())),
            (
                "cidfs_dp",
                cidfs_dp(&mut SyntheticOracle::new(n, rule.clone()), &empty, Deadline::none()),
            ),
        ];
        for (name, r) in &verdicts {
            if r.outcome.is_solved() != expect {
                return Err(format!(
                    "case {case} (n={n}): {name} says {} but the permutation oracle says {}",
                    r.outcome.name(),
                    if expect { "solvable" } else { "unsolvable" }
                ));
            }
        }
    }
    Ok(cases)
}

/// Used by the monotone suite: `at_goal` masks that correspond to physically
/// valid arrangements (no two discs overlapping).
pub fn valid_states(inst: &Instance) -> Vec<MonoState> {
    (0u64..(1 << inst.len()))
        .map(|bits| MonoState { at_goal: ObjSet::from_bits(bits) })
        .filter(|s| {
            crate::world::arrangement_for(inst, *s).overlapping_pair(inst.radius).is_none()
        })
        .collect()
}
