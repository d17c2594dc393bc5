//! Offline-labeled roadmap: a PRM in the arm's joint space whose edges carry,
//! for every grid cell and both motion modes (transit = bare arm, transfer =
//! arm carrying a disc), a precomputed bit saying whether a disc parked on
//! that cell collides with the swept edge. Online queries then reduce to
//! graph search with edge filtering — no collision checking at query time.
//!
//! Grasp-tagged nodes for a cell are always a prefix of the deterministic
//! family `ik_grasp_configs(arm, cell, k_grasps)`. The constraint compiler
//! analyses exactly that family, which is what makes its pruning sound with
//! respect to this planner.

use crate::geom2d::{
    edge_collides, forward_kinematics, orientation_of, collides_workspace, ik_grasp_configs,
    normalize_angle, Config, Disc, Position, Side,
};
use crate::world::{Arrangement, Instance, ObjectId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::BinaryHeap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RoadmapError {
    #[error("home configuration collides with the workspace walls")]
    InvalidHome,
    #[error("home component of the roadmap contains no grasp node")]
    DisconnectedHome,
    #[error("no grasp node for cell {cell}")]
    NoGraspNode { cell: usize },
    #[error("no feasible path under the given occupancy")]
    Infeasible,
    #[error("roadmap is not labeled; run label_edges first")]
    NotLabeled,
    #[error("roadmap was built for different geometry")]
    GeometryMismatch,
    #[error("unsupported roadmap schema {found} (expected {expected})")]
    UnsupportedSchema { found: u32, expected: u32 },
    #[error("roadmap JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// A set of grid cells, packed into 64-bit words.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "CellSetRepr", into = "CellSetRepr")]
pub struct CellSet {
    ncells: usize,
    words: Vec<u64>,
}

#[derive(Serialize, Deserialize, Clone)]
struct CellSetRepr {
    ncells: usize,
    cells: Vec<u32>,
}

impl From<CellSetRepr> for CellSet {
    fn from(r: CellSetRepr) -> Self {
        let mut s = CellSet::empty(r.ncells);
        for c in r.cells {
            s.insert(c as usize);
        }
        s
    }
}

impl From<CellSet> for CellSetRepr {
    fn from(s: CellSet) -> Self {
        CellSetRepr { ncells: s.ncells, cells: s.iter().map(|c| c as u32).collect() }
    }
}

impl CellSet {
    pub fn empty(ncells: usize) -> Self {
        CellSet { ncells, words: vec![0; ncells.div_ceil(64)] }
    }

    pub fn from_indices(ncells: usize, indices: &[usize]) -> Self {
        let mut s = Self::empty(ncells);
        for &i in indices {
            s.insert(i);
        }
        s
    }

    pub fn ncells(&self) -> usize {
        self.ncells
    }

    pub fn insert(&mut self, i: usize) {
        assert!(i < self.ncells, "cell {i} out of range");
        self.words[i / 64] |= 1u64 << (i % 64);
    }

    pub fn remove(&mut self, i: usize) {
        assert!(i < self.ncells);
        self.words[i / 64] &= !(1u64 << (i % 64));
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.ncells && self.words[i / 64] & (1u64 << (i % 64)) != 0
    }

    pub fn intersects(&self, other: &CellSet) -> bool {
        self.words.iter().zip(other.words.iter()).any(|(a, b)| a & b != 0)
    }

    #[must_use]
    pub fn difference(&self, other: &CellSet) -> CellSet {
        let words = self.words.iter().zip(other.words.iter()).map(|(a, b)| a & !b).collect();
        CellSet { ncells: self.ncells, words }
    }

    pub fn is_subset_of(&self, other: &CellSet) -> bool {
        self.words.iter().zip(other.words.iter()).all(|(a, b)| a & !b == 0)
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.ncells).filter(|&i| self.contains(i))
    }
}

/// Why a node exists in the roadmap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeRole {
    /// The retracted rest configuration outside the shelf; node 0.
    Home,
    /// End-effector sits exactly on a grid cell.
    Grasp { cell: usize },
    /// Deterministic funnel configuration near the open side; entry nodes
    /// and home are additionally connected all-to-all (collision-checked
    /// like any edge) so the way into the shelf never hinges on random
    /// samples landing in the narrow entry corridor.
    Entry,
    /// Uniform random sample in joint space.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub config: Config,
    pub role: NodeRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub cost: f64,
    /// Cells whose parked disc collides with the bare-arm sweep.
    pub transit: CellSet,
    /// Cells whose parked disc collides with the carrying-arm sweep.
    pub transfer: CellSet,
    /// Whether the carrying-arm sweep stays clear of the walls.
    pub transfer_wall_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadmapParams {
    /// Number of sampled nodes (the home node is extra).
    pub num_samples: usize,
    /// Fraction of samples reserved for grasp nodes.
    pub grasp_ratio: f64,
    /// Neighbors considered per node during connection.
    pub connection_k: usize,
    /// Grasp configurations per cell; must match the constraint compiler's.
    pub k_grasps: usize,
    /// Joint-space collision-check resolution (radians).
    pub resolution: f64,
    pub seed: u64,
}

impl Default for RoadmapParams {
    fn default() -> Self {
        Self {
            num_samples: 600,
            grasp_ratio: 0.5,
            connection_k: 15,
            k_grasps: 4,
            resolution: 0.02,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LabeledRoadmap {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    /// Node index -> incident edge indices (derived, not serialized).
    pub adj: Vec<Vec<usize>>,
    /// Cell index -> grasp node indices, ascending (derived).
    pub grasp_nodes: Vec<Vec<usize>>,
    pub home: usize,
    pub params: RoadmapParams,
    pub labeled: bool,
}

/// The arm's rest configuration: first link pointing away from the shelf,
/// remaining joints straight.
pub fn home_config(inst: &Instance) -> Config {
    let away = inst.arm.base - inst.ws.rect.center();
    Config::new(normalize_angle(orientation_of(away)), 0.0, 0.0)
}

/// Node-sampling stage of the build: home node, then grasp nodes assigned
/// round-robin across cells (every cell gets its first grasp node before any
/// cell gets a second) up to `round(num_samples * grasp_ratio)`, then uniform
/// random joint configurations to fill up `num_samples`.
pub fn sample_nodes(inst: &Instance, params: &RoadmapParams) -> Result<Vec<Node>, RoadmapError> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let home = home_config(inst);
    if collides_workspace(&forward_kinematics(&inst.arm, &home), &inst.ws) {
        return Err(RoadmapError::InvalidHome);
    }
    let mut nodes = vec![Node { config: home, role: NodeRole::Home }];

    let quota = (params.num_samples as f64 * params.grasp_ratio).round() as usize;
    let families: Vec<Vec<Config>> = inst
        .grid
        .cells
        .iter()
        .map(|&c| ik_grasp_configs(&inst.arm, c, params.k_grasps).unwrap_or_default())
        .collect();
    let mut added = 0;
    let mut round = 0;
    while added < quota {
        let before = added;
        for (cell, fam) in families.iter().enumerate() {
            if added == quota {
                break;
            }
            if let Some(cfg) = fam.get(round) {
                nodes.push(Node { config: *cfg, role: NodeRole::Grasp { cell } });
                added += 1;
            }
        }
        if added == before {
            break; // all families exhausted
        }
        round += 1;
    }

    for config in entry_scaffold(inst, params.k_grasps) {
        if nodes.len() > params.num_samples {
            break;
        }
        nodes.push(Node { config, role: NodeRole::Entry });
    }

    while nodes.len() < params.num_samples + 1 {
        let mut joints = [0.0; 3];
        for (j, lim) in joints.iter_mut().zip(inst.arm.joint_limits.iter()) {
            *j = rng.gen_range(lim[0]..=lim[1]);
        }
        nodes.push(Node { config: Config { joints }, role: NodeRole::Random });
    }
    Ok(nodes)
}

/// Deterministic funnel configurations near the open side.
///
/// Uniform joint sampling almost never lands in the narrow corridor between
/// the hanging rest pose and the in-shelf grasps, which leaves the roadmap's
/// entries funneled through whichever big shoulder sweep happens to connect —
/// and a single occupied front cell then cuts the home node off. Seeding the
/// corridor explicitly gives every column its own entry: a ring of folded
/// (short-profile) poses sweeping across the frontage, plus grasp-style
/// configurations whose tips hover just outside the opening, one target per
/// front-row cell.
fn entry_scaffold(inst: &Instance, k: usize) -> Vec<Config> {
    let mut out = Vec::new();
    let inward = normalize_angle(
        orientation_of(inst.arm.base - inst.ws.rect.center()) + std::f64::consts::PI,
    );
    let ring = 17;
    for i in 0..ring {
        let t = i as f64 / (ring - 1) as f64;
        let theta = normalize_angle(inward + (2.0 * t - 1.0) * 2.4);
        for fold in [2.9, -2.9] {
            let cfg = Config::new(theta, fold, -fold);
            if inst.arm.within_limits(&cfg) {
                out.push(cfg);
            }
        }
    }
    let rect = &inst.ws.rect;
    let r = inst.radius;
    for cell in inst.grid.cells.iter().take(inst.grid.cols) {
        let tip = match inst.ws.open_side {
            Side::South => Position::new(cell.x, rect.min.y - r),
            Side::North => Position::new(cell.x, rect.max.y + r),
            Side::West => Position::new(rect.min.x - r, cell.y),
            Side::East => Position::new(rect.max.x + r, cell.y),
        };
        if let Ok(cfgs) = ik_grasp_configs(&inst.arm, tip, k) {
            out.extend(cfgs);
        }
    }
    out
}

fn derive_indices(nodes: &[Node], edges: &[Edge], ncells: usize) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let mut adj = vec![Vec::new(); nodes.len()];
    for (i, e) in edges.iter().enumerate() {
        adj[e.a].push(i);
        adj[e.b].push(i);
    }
    let mut grasp_nodes = vec![Vec::new(); ncells];
    for (i, n) in nodes.iter().enumerate() {
        if let NodeRole::Grasp { cell } = n.role {
            grasp_nodes[cell].push(i);
        }
    }
    (adj, grasp_nodes)
}

/// Build the roadmap: sample nodes, connect each to its `connection_k`
/// nearest neighbors, and wall-check every candidate edge in both modes.
/// Edges whose bare-arm sweep crosses a wall are discarded outright; edges
/// that only fail while carrying keep `transfer_wall_ok = false`. Labels are
/// left empty — run [`label_edges`] next.
pub fn build_roadmap(inst: &Instance, params: &RoadmapParams) -> Result<LabeledRoadmap, RoadmapError> {
    let nodes = sample_nodes(inst, params)?;
    let ncells = inst.grid.len();
    let n = nodes.len();

    let mut pairs: Vec<(usize, usize)> = Vec::new();
    {
        let mut seen = std::collections::HashSet::new();
        for i in 0..n {
            let mut dists: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (nodes[i].config.distance(&nodes[j].config), j))
                .collect();
            dists.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for &(_, j) in dists.iter().take(params.connection_k) {
                let key = (i.min(j), i.max(j));
                if seen.insert(key) {
                    pairs.push(key);
                }
            }
        }
        // The entry corridor gets dense wiring: kNN works on joint distance,
        // and home/entry configurations are deliberately far from everything
        // in that metric.
        let funnel: Vec<usize> = (0..n)
            .filter(|&i| i == 0 || nodes[i].role == NodeRole::Entry)
            .collect();
        for (x, &i) in funnel.iter().enumerate() {
            for &j in &funnel[x + 1..] {
                if seen.insert((i, j)) {
                    pairs.push((i, j));
                }
            }
        }
    }
    pairs.sort_unstable();

    let edges: Vec<Edge> = pairs
        .par_iter()
        .filter_map(|&(a, b)| {
            let qa = &nodes[a].config;
            let qb = &nodes[b].config;
            let cost = qa.distance(qb);
            if cost < 1e-12 {
                return None; // duplicate configs would create zero-cost edges
            }
            if edge_collides(&inst.arm, qa, qb, &[], Some(&inst.ws), None, params.resolution) {
                return None;
            }
            let transfer_wall_ok = !edge_collides(
                &inst.arm,
                qa,
                qb,
                &[],
                Some(&inst.ws),
                Some(inst.radius),
                params.resolution,
            );
            Some(Edge {
                a,
                b,
                cost,
                transit: CellSet::empty(ncells),
                transfer: CellSet::empty(ncells),
                transfer_wall_ok,
            })
        })
        .collect();

    let (adj, grasp_nodes) = derive_indices(&nodes, &edges, ncells);
    let rm = LabeledRoadmap {
        nodes,
        edges,
        adj,
        grasp_nodes,
        home: 0,
        params: *params,
        labeled: false,
    };

    // The home component must reach at least one grasp node — unless the
    // roadmap was deliberately built without any (grasp_ratio = 0), in which
    // case it degrades to a plain PRM.
    let has_grasp = rm.grasp_nodes.iter().any(|g| !g.is_empty());
    if has_grasp {
        let mut reach = vec![false; rm.nodes.len()];
        let mut stack = vec![rm.home];
        reach[rm.home] = true;
        while let Some(u) = stack.pop() {
            for &eid in &rm.adj[u] {
                let e = &rm.edges[eid];
                let v = if e.a == u { e.b } else { e.a };
                if !reach[v] {
                    reach[v] = true;
                    stack.push(v);
                }
            }
        }
        let connected = rm
            .nodes
            .iter()
            .enumerate()
            .any(|(i, nd)| reach[i] && matches!(nd.role, NodeRole::Grasp { .. }));
        if !connected {
            return Err(RoadmapError::DisconnectedHome);
        }
    }
    Ok(rm)
}

/// Offline labeling: for every edge and every grid cell, sweep the edge
/// against a disc parked on that cell in both modes. After this, online
/// feasibility under any occupancy is a pure bitset test per edge.
pub fn label_edges(mut rm: LabeledRoadmap, inst: &Instance) -> LabeledRoadmap {
    let ncells = inst.grid.len();
    let nodes = &rm.nodes;
    let params = rm.params;
    rm.edges.par_iter_mut().for_each(|e| {
        let qa = &nodes[e.a].config;
        let qb = &nodes[e.b].config;
        let mut transit = CellSet::empty(ncells);
        let mut transfer = CellSet::empty(ncells);
        for (c, &center) in inst.grid.cells.iter().enumerate() {
            let disc = [Disc { center, radius: inst.radius }];
            if edge_collides(&inst.arm, qa, qb, &disc, None, None, params.resolution) {
                transit.insert(c);
            }
            if edge_collides(&inst.arm, qa, qb, &disc, None, Some(inst.radius), params.resolution)
            {
                transfer.insert(c);
            }
        }
        debug_assert!(transit.is_subset_of(&transfer));
        e.transit = transit;
        e.transfer = transfer;
    });
    rm.labeled = true;
    rm
}

/// Motion mode for path queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Transit,
    Transfer,
}

#[derive(Debug, Clone)]
pub struct PathQuery {
    pub from: usize,
    pub to: usize,
    pub mode: Mode,
    /// Cells currently holding a disc.
    pub occupied: CellSet,
    /// Occupied cells to disregard (the moved object's own footprint).
    pub ignore: CellSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedPath {
    pub nodes: Vec<usize>,
    pub cost: f64,
}

struct HeapEntry {
    f: f64,
    g: f64,
    node: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.f
            .total_cmp(&other.f)
            .then(self.g.total_cmp(&other.g))
            .then(self.node.cmp(&other.node))
    }
}

/// A* over the roadmap restricted to edges passing `usable`. Returns the
/// minimum-cost path; among equal-cost optima, the lexicographically smallest
/// node sequence. Deterministic.
pub fn plan_path_filtered(
    rm: &LabeledRoadmap,
    from: usize,
    to: usize,
    usable: impl Fn(&Edge) -> bool,
) -> Result<PlannedPath, RoadmapError> {
    if from == to {
        return Ok(PlannedPath { nodes: vec![from], cost: 0.0 });
    }
    let n = rm.nodes.len();
    let h = |v: usize| rm.nodes[v].config.distance(&rm.nodes[from].config);

    // Search backward from `to` so settled costs are costs-to-goal; then a
    // greedy forward walk over tight edges recovers the lexicographically
    // smallest optimum. Settled costs are exact because the heuristic
    // (straight-line joint distance to `from`) is consistent.
    let mut dist = vec![f64::INFINITY; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[to] = 0.0;
    heap.push(Reverse(HeapEntry { f: h(to), g: 0.0, node: to }));
    let mut best: Option<f64> = None;
    while let Some(Reverse(e)) = heap.pop() {
        if let Some(c) = best {
            if e.f > c {
                break; // everything with f <= C* is settled
            }
        }
        if settled[e.node] {
            continue;
        }
        settled[e.node] = true;
        if e.node == from {
            best = Some(dist[from]);
        }
        for &eid in &rm.adj[e.node] {
            let edge = &rm.edges[eid];
            if !usable(edge) {
                continue;
            }
            let v = if edge.a == e.node { edge.b } else { edge.a };
            if settled[v] {
                continue;
            }
            let nd = dist[e.node] + edge.cost;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Reverse(HeapEntry { f: nd + h(v), g: nd, node: v }));
            }
        }
    }
    let Some(total) = best else {
        return Err(RoadmapError::Infeasible);
    };

    let mut path = vec![from];
    let mut u = from;
    while u != to {
        let mut next: Option<usize> = None;
        for &eid in &rm.adj[u] {
            let edge = &rm.edges[eid];
            if !usable(edge) {
                continue;
            }
            let v = if edge.a == u { edge.b } else { edge.a };
            // Tight edge: relaxation arithmetic reproduced bit-for-bit.
            if settled[v] && dist[u] == edge.cost + dist[v] && next.is_none_or(|b| v < b) {
                next = Some(v);
            }
        }
        u = next.expect("settled node has a tight edge toward the goal");
        path.push(u);
    }
    Ok(PlannedPath { nodes: path, cost: total })
}

/// Label-filtered shortest path: an edge is usable iff its labels miss every
/// occupied-and-not-ignored cell (and, in transfer mode, its carrying sweep
/// clears the walls).
pub fn plan_path(rm: &LabeledRoadmap, q: &PathQuery) -> Result<PlannedPath, RoadmapError> {
    if !rm.labeled {
        return Err(RoadmapError::NotLabeled);
    }
    let blocked = q.occupied.difference(&q.ignore);
    match q.mode {
        Mode::Transit => {
            plan_path_filtered(rm, q.from, q.to, |e| !e.transit.intersects(&blocked))
        }
        Mode::Transfer => plan_path_filtered(rm, q.from, q.to, |e| {
            e.transfer_wall_ok && !e.transfer.intersects(&blocked)
        }),
    }
}

/// Cells occupied by an arrangement (each disc snapped to its nearest cell),
/// optionally skipping one object.
pub fn occupied_cells(inst: &Instance, arr: &Arrangement, skip: Option<ObjectId>) -> CellSet {
    let mut s = CellSet::empty(inst.grid.len());
    for (o, p) in arr.iter() {
        if Some(o) != skip {
            s.insert(inst.grid.snap(p));
        }
    }
    s
}

/// A complete pick-transfer-place-retreat motion for one object.
#[derive(Debug, Clone)]
pub struct ManipPath {
    pub object: ObjectId,
    pub from_cell: usize,
    pub target_cell: usize,
    pub from_pos: Position,
    pub to_pos: Position,
    pub pick_node: usize,
    pub place_node: usize,
    /// Home -> pick node, bare arm.
    pub transit: PlannedPath,
    /// Pick node -> place node, carrying the disc.
    pub transfer: PlannedPath,
    /// Place node -> home, bare arm.
    pub retreat: PlannedPath,
    /// True when re-checking the legs against the true (unsnapped) disc
    /// positions finds a collision the cell approximation missed.
    pub snap_discrepancy: bool,
}

impl ManipPath {
    pub fn total_cost(&self) -> f64 {
        self.transit.cost + self.transfer.cost + self.retreat.cost
    }
}

/// Plan moving object `o` from its current position onto `target_cell`:
/// transit (home to a grasp node over the object's snapped cell), transfer
/// (carrying, to a grasp node over the target), retreat (back home).
/// Grasp-node candidates are tried in ascending node order; the first
/// feasible triple wins. The moved object's own footprint is ignored in the
/// occupancy; everything else blocks.
pub fn plan_manipulation(
    rm: &LabeledRoadmap,
    inst: &Instance,
    arr: &Arrangement,
    o: ObjectId,
    target_cell: usize,
) -> Result<ManipPath, RoadmapError> {
    if !rm.labeled {
        return Err(RoadmapError::NotLabeled);
    }
    // The target cell must physically admit the disc among the true
    // positions of the other objects.
    if !inst.cell_is_free(target_cell, arr, o) {
        return Err(RoadmapError::Infeasible);
    }
    let ncells = inst.grid.len();
    let pick_cell = inst.grid.snap(arr[o]);
    let occupied = occupied_cells(inst, arr, Some(o));

    let picks = &rm.grasp_nodes[pick_cell];
    if picks.is_empty() {
        return Err(RoadmapError::NoGraspNode { cell: pick_cell });
    }
    let places = &rm.grasp_nodes[target_cell];
    if places.is_empty() {
        return Err(RoadmapError::NoGraspNode { cell: target_cell });
    }

    let ignore_transit = CellSet::from_indices(ncells, &[pick_cell]);
    let ignore_transfer = CellSet::from_indices(ncells, &[pick_cell, target_cell]);
    let ignore_retreat = CellSet::from_indices(ncells, &[target_cell]);

    for &pick in picks {
        let transit = match plan_path(
            rm,
            &PathQuery {
                from: rm.home,
                to: pick,
                mode: Mode::Transit,
                occupied: occupied.clone(),
                ignore: ignore_transit.clone(),
            },
        ) {
            Ok(p) => p,
            Err(RoadmapError::Infeasible) => continue,
            Err(e) => return Err(e),
        };
        for &place in places {
            let transfer = match plan_path(
                rm,
                &PathQuery {
                    from: pick,
                    to: place,
                    mode: Mode::Transfer,
                    occupied: occupied.clone(),
                    ignore: ignore_transfer.clone(),
                },
            ) {
                Ok(p) => p,
                Err(RoadmapError::Infeasible) => continue,
                Err(e) => return Err(e),
            };
            let retreat = match plan_path(
                rm,
                &PathQuery {
                    from: place,
                    to: rm.home,
                    mode: Mode::Transit,
                    occupied: occupied.clone(),
                    ignore: ignore_retreat.clone(),
                },
            ) {
                Ok(p) => p,
                Err(RoadmapError::Infeasible) => continue,
                Err(e) => return Err(e),
            };
            let mut path = ManipPath {
                object: o,
                from_cell: pick_cell,
                target_cell,
                from_pos: arr[o],
                to_pos: inst.grid.cells[target_cell],
                pick_node: pick,
                place_node: place,
                transit,
                transfer,
                retreat,
                snap_discrepancy: false,
            };
            path.snap_discrepancy = has_snap_discrepancy(rm, inst, arr, &path);
            return Ok(path);
        }
    }
    Err(RoadmapError::Infeasible)
}

/// Fresh collision re-check of a planned manipulation against the *true*
/// (continuous) positions of the other discs. The cell approximation may
/// miss a collision when a disc sits off-center in its cell; this flags it.
fn has_snap_discrepancy(
    rm: &LabeledRoadmap,
    inst: &Instance,
    arr: &Arrangement,
    path: &ManipPath,
) -> bool {
    let true_discs: Vec<Disc> = arr
        .iter()
        .filter(|(j, _)| *j != path.object)
        .map(|(_, p)| Disc { center: p, radius: inst.radius })
        .collect();
    let res = rm.params.resolution;
    let leg_hits = |leg: &PlannedPath, grasped: Option<f64>| {
        leg.nodes.windows(2).any(|w| {
            edge_collides(
                &inst.arm,
                &rm.nodes[w[0]].config,
                &rm.nodes[w[1]].config,
                &true_discs,
                None,
                grasped,
                res,
            )
        })
    };
    leg_hits(&path.transit, None)
        || leg_hits(&path.transfer, Some(inst.radius))
        || leg_hits(&path.retreat, None)
}

const ROADMAP_SCHEMA: u32 = 1;

#[derive(Serialize, Deserialize)]
struct RoadmapFile {
    schema: u32,
    workspace: crate::geom2d::WorkspaceGeom,
    arm: crate::geom2d::PlanarArm,
    radius: f64,
    grid: crate::world::PositionGrid,
    params: RoadmapParams,
    labeled: bool,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

/// Serialize the roadmap (with geometry fingerprint) for caching.
pub fn roadmap_to_json(rm: &LabeledRoadmap, inst: &Instance) -> String {
    let file = RoadmapFile {
        schema: ROADMAP_SCHEMA,
        workspace: inst.ws.clone(),
        arm: inst.arm.clone(),
        radius: inst.radius,
        grid: inst.grid.clone(),
        params: rm.params,
        labeled: rm.labeled,
        nodes: rm.nodes.clone(),
        edges: rm.edges.clone(),
    };
    serde_json::to_string(&file).expect("roadmap serializes")
}

/// Load a cached roadmap, refusing if it was built for different geometry.
pub fn roadmap_from_json(text: &str, inst: &Instance) -> Result<LabeledRoadmap, RoadmapError> {
    let file: RoadmapFile = serde_json::from_str(text)?;
    if file.schema != ROADMAP_SCHEMA {
        return Err(RoadmapError::UnsupportedSchema { found: file.schema, expected: ROADMAP_SCHEMA });
    }
    let same = file.workspace == inst.ws
        && file.arm == inst.arm
        && file.radius == inst.radius
        && file.grid == inst.grid;
    if !same {
        return Err(RoadmapError::GeometryMismatch);
    }
    let (adj, grasp_nodes) = derive_indices(&file.nodes, &file.edges, inst.grid.len());
    Ok(LabeledRoadmap {
        nodes: file.nodes,
        edges: file.edges,
        adj,
        grasp_nodes,
        home: 0,
        params: file.params,
        labeled: file.labeled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{gen_instance, GenMode, InstanceParams, MonoState, arrangement_for, ObjSet};

    fn small_params() -> RoadmapParams {
        RoadmapParams { num_samples: 150, seed: 9, ..RoadmapParams::default() }
    }

    fn desk_instance(n: usize, seed: u64) -> crate::world::Instance {
        gen_instance(&InstanceParams::default(), n, GenMode::RandomGoals, seed).unwrap()
    }

    #[test]
    fn cellset_ops() {
        let mut a = CellSet::empty(70);
        a.insert(0);
        a.insert(65);
        assert!(a.contains(0) && a.contains(65) && !a.contains(64));
        assert_eq!(a.count(), 2);
        assert_eq!(a.iter().collect::<Vec<_>>(), vec![0, 65]);
        let b = CellSet::from_indices(70, &[65]);
        assert!(b.is_subset_of(&a));
        assert!(a.intersects(&b));
        assert_eq!(a.difference(&b).iter().collect::<Vec<_>>(), vec![0]);
        a.remove(65);
        assert!(!a.contains(65));
        let json = serde_json::to_string(&b).unwrap();
        let back: CellSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn grasp_nodes_cover_reachable_cells_round_robin() {
        let inst = desk_instance(3, 1);
        let nodes = sample_nodes(&inst, &small_params()).unwrap();
        assert_eq!(nodes.len(), 151);
        assert!(matches!(nodes[0].role, NodeRole::Home));
        // Desk grid: 16 cells, k_grasps 4 -> all 64 family configs fit the
        // 75-node quota, so every cell carries a full family.
        let mut per_cell = vec![0usize; inst.grid.len()];
        for n in &nodes {
            if let NodeRole::Grasp { cell } = n.role {
                per_cell[cell] += 1;
            }
        }
        assert!(per_cell.iter().all(|&c| c >= 1), "round-robin skipped a cell: {per_cell:?}");
    }

    #[test]
    fn grasp_node_configs_are_family_prefixes() {
        let inst = desk_instance(2, 5);
        let params = small_params();
        let rm = build_roadmap(&inst, &params).unwrap();
        for (cell, nodes) in rm.grasp_nodes.iter().enumerate() {
            let fam = ik_grasp_configs(&inst.arm, inst.grid.cells[cell], params.k_grasps).unwrap();
            for (rank, &ni) in nodes.iter().enumerate() {
                assert_eq!(rm.nodes[ni].config, fam[rank], "cell {cell} rank {rank}");
            }
        }
    }

    #[test]
    fn zero_grasp_ratio_builds_a_plain_prm() {
        let inst = desk_instance(2, 3);
        let params = RoadmapParams { grasp_ratio: 0.0, num_samples: 80, seed: 2, ..Default::default() };
        let rm = build_roadmap(&inst, &params).unwrap();
        assert!(rm.grasp_nodes.iter().all(|g| g.is_empty()));
        assert!(!rm.edges.is_empty());
    }

    #[test]
    fn build_is_deterministic() {
        let inst = desk_instance(3, 7);
        let params = small_params();
        let a = label_edges(build_roadmap(&inst, &params).unwrap(), &inst);
        let b = label_edges(build_roadmap(&inst, &params).unwrap(), &inst);
        assert_eq!(roadmap_to_json(&a, &inst), roadmap_to_json(&b, &inst));
    }

    #[test]
    fn labels_match_fresh_edge_checks_exhaustively() {
        let inst = desk_instance(3, 11);
        let params = RoadmapParams { num_samples: 120, seed: 4, ..RoadmapParams::default() };
        let rm = label_edges(build_roadmap(&inst, &params).unwrap(), &inst);
        for e in &rm.edges {
            assert!(e.transit.is_subset_of(&e.transfer), "transit ⊄ transfer");
            let qa = &rm.nodes[e.a].config;
            let qb = &rm.nodes[e.b].config;
            for (c, &center) in inst.grid.cells.iter().enumerate() {
                let disc = [Disc { center, radius: inst.radius }];
                let transit =
                    edge_collides(&inst.arm, qa, qb, &disc, None, None, params.resolution);
                let transfer = edge_collides(
                    &inst.arm, qa, qb, &disc, None, Some(inst.radius), params.resolution,
                );
                assert_eq!(e.transit.contains(c), transit, "transit label mismatch cell {c}");
                assert_eq!(e.transfer.contains(c), transfer, "transfer label mismatch cell {c}");
            }
        }
    }

    /// Independent O(V^2) Dijkstra oracle over the same filtered graph.
    fn dijkstra_oracle(rm: &LabeledRoadmap, from: usize, to: usize, usable: &dyn Fn(&Edge) -> bool) -> Option<f64> {
        let n = rm.nodes.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        dist[from] = 0.0;
        for _ in 0..n {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for i in 0..n {
                if !done[i] && dist[i] < best {
                    best = dist[i];
                    u = i;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            for &eid in &rm.adj[u] {
                let e = &rm.edges[eid];
                if !usable(e) {
                    continue;
                }
                let v = if e.a == u { e.b } else { e.a };
                if dist[u] + e.cost < dist[v] {
                    dist[v] = dist[u] + e.cost;
                }
            }
        }
        dist[to].is_finite().then_some(dist[to])
    }

    #[test]
    fn plan_path_matches_dijkstra_under_random_occupancy() {
        use rand::{Rng, SeedableRng};
        let inst = desk_instance(4, 13);
        let rm = label_edges(build_roadmap(&inst, &small_params()).unwrap(), &inst);
        let ncells = inst.grid.len();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for trial in 0..60 {
            let mut occupied = CellSet::empty(ncells);
            for c in 0..ncells {
                if rng.gen_bool(0.3) {
                    occupied.insert(c);
                }
            }
            let from = rng.gen_range(0..rm.nodes.len());
            let to = rng.gen_range(0..rm.nodes.len());
            let mode = if rng.gen_bool(0.5) { Mode::Transit } else { Mode::Transfer };
            let q = PathQuery { from, to, mode, occupied: occupied.clone(), ignore: CellSet::empty(ncells) };
            let got = plan_path(&rm, &q);
            let blocked = occupied.clone();
            let usable: Box<dyn Fn(&Edge) -> bool> = match mode {
                Mode::Transit => Box::new(move |e: &Edge| !e.transit.intersects(&blocked)),
                Mode::Transfer => {
                    Box::new(move |e: &Edge| e.transfer_wall_ok && !e.transfer.intersects(&blocked))
                }
            };
            let want = dijkstra_oracle(&rm, from, to, &usable);
            match (got, want) {
                (Ok(p), Some(c)) => {
                    assert!((p.cost - c).abs() < 1e-9, "trial {trial}: cost {} vs {}", p.cost, c);
                    // Path edges must exist, be usable, and sum to the cost.
                    let mut sum = 0.0;
                    for w in p.nodes.windows(2) {
                        let eid = rm.adj[w[0]]
                            .iter()
                            .find(|&&eid| {
                                let e = &rm.edges[eid];
                                (e.a == w[0] && e.b == w[1]) || (e.b == w[0] && e.a == w[1])
                            })
                            .copied()
                            .expect("path uses existing edges");
                        assert!(usable(&rm.edges[eid]));
                        sum += rm.edges[eid].cost;
                    }
                    assert!((sum - p.cost).abs() < 1e-9);
                }
                (Err(RoadmapError::Infeasible), None) => {}
                (g, w) => panic!("trial {trial}: feasibility mismatch {g:?} vs {w:?}"),
            }
        }
    }

    #[test]
    fn occupancy_filtering_is_monotone() {
        let inst = desk_instance(4, 19);
        let rm = label_edges(build_roadmap(&inst, &small_params()).unwrap(), &inst);
        let ncells = inst.grid.len();
        let sparse = CellSet::from_indices(ncells, &[2, 5]);
        let dense = CellSet::from_indices(ncells, &[2, 5, 7, 9, 11]);
        let grasp = rm.grasp_nodes.iter().find(|g| !g.is_empty()).unwrap()[0];
        let query = |occ: &CellSet| {
            plan_path(
                &rm,
                &PathQuery {
                    from: rm.home,
                    to: grasp,
                    mode: Mode::Transit,
                    occupied: occ.clone(),
                    ignore: CellSet::empty(ncells),
                },
            )
        };
        if let Ok(dense_path) = query(&dense) {
            let sparse_path = query(&sparse).expect("fewer obstacles cannot break feasibility");
            assert!(sparse_path.cost <= dense_path.cost + 1e-12);
        }
    }

    #[test]
    fn ignore_set_neutralizes_occupancy() {
        let inst = desk_instance(3, 23);
        let rm = label_edges(build_roadmap(&inst, &small_params()).unwrap(), &inst);
        let ncells = inst.grid.len();
        let occ = CellSet::from_indices(ncells, &[1, 4, 6]);
        let free = plan_path(
            &rm,
            &PathQuery {
                from: rm.home,
                to: 5,
                mode: Mode::Transit,
                occupied: CellSet::empty(ncells),
                ignore: CellSet::empty(ncells),
            },
        );
        let ignored = plan_path(
            &rm,
            &PathQuery {
                from: rm.home,
                to: 5,
                mode: Mode::Transit,
                occupied: occ.clone(),
                ignore: occ,
            },
        );
        match (free, ignored) {
            (Ok(a), Ok(b)) => assert_eq!(a, b),
            (Err(RoadmapError::Infeasible), Err(RoadmapError::Infeasible)) => {}
            other => panic!("mismatch: {other:?}"),
        }
    }

    #[test]
    fn equal_cost_paths_resolve_lexicographically() {
        // Hand-built diamond: 0 -> {1,2} -> 3 with symmetric costs.
        let c = |j: [f64; 3]| Config { joints: j };
        let nodes = vec![
            Node { config: c([0.0, 0.0, 0.0]), role: NodeRole::Random },
            Node { config: c([0.1, 0.0, 0.0]), role: NodeRole::Random },
            Node { config: c([0.0, 0.1, 0.0]), role: NodeRole::Random },
            Node { config: c([0.1, 0.1, 0.0]), role: NodeRole::Random },
        ];
        let mk = |a: usize, b: usize| Edge {
            a,
            b,
            cost: nodes[a].config.distance(&nodes[b].config),
            transit: CellSet::empty(4),
            transfer: CellSet::empty(4),
            transfer_wall_ok: true,
        };
        let edges = vec![mk(0, 1), mk(0, 2), mk(1, 3), mk(2, 3)];
        let (adj, grasp_nodes) = derive_indices(&nodes, &edges, 4);
        let rm = LabeledRoadmap {
            nodes,
            edges,
            adj,
            grasp_nodes,
            home: 0,
            params: RoadmapParams::default(),
            labeled: true,
        };
        let p = plan_path_filtered(&rm, 0, 3, |_| true).unwrap();
        assert_eq!(p.nodes, vec![0, 1, 3]);
    }

    #[test]
    fn manipulation_legs_share_grasp_nodes_and_home() {
        let inst = desk_instance(1, 29);
        let rm = label_edges(build_roadmap(&inst, &RoadmapParams { num_samples: 250, seed: 1, ..Default::default() }).unwrap(), &inst);
        let arr = inst.start.clone();
        let target = inst.goal_cells[0];
        let m = plan_manipulation(&rm, &inst, &arr, ObjectId(0), target).unwrap();
        assert_eq!(m.transit.nodes.first(), Some(&rm.home));
        assert_eq!(m.transit.nodes.last(), Some(&m.pick_node));
        assert_eq!(m.transfer.nodes.first(), Some(&m.pick_node));
        assert_eq!(m.transfer.nodes.last(), Some(&m.place_node));
        assert_eq!(m.retreat.nodes.first(), Some(&m.place_node));
        assert_eq!(m.retreat.nodes.last(), Some(&rm.home));
        assert!(matches!(rm.nodes[m.pick_node].role, NodeRole::Grasp { cell } if cell == m.from_cell));
        assert!(matches!(rm.nodes[m.place_node].role, NodeRole::Grasp { cell } if cell == target));
    }

    #[test]
    fn manipulation_rejects_occupied_target_cell() {
        let inst = desk_instance(2, 31);
        let rm = label_edges(build_roadmap(&inst, &small_params()).unwrap(), &inst);
        // Send o0 onto o1's goal cell after o1 got there: physically blocked.
        let arr = arrangement_for(&inst, MonoState { at_goal: ObjSet::singleton(ObjectId(1)) });
        let r = plan_manipulation(&rm, &inst, &arr, ObjectId(0), inst.goal_cells[1]);
        assert!(matches!(r, Err(RoadmapError::Infeasible)));
    }

    #[test]
    fn manipulation_without_grasp_nodes_reports_missing_cell() {
        let inst = desk_instance(1, 37);
        let params = RoadmapParams { grasp_ratio: 0.0, num_samples: 60, seed: 3, ..Default::default() };
        let rm = label_edges(build_roadmap(&inst, &params).unwrap(), &inst);
        let r = plan_manipulation(&rm, &inst, &inst.start, ObjectId(0), inst.goal_cells[0]);
        assert!(matches!(r, Err(RoadmapError::NoGraspNode { .. })));
    }

    #[test]
    fn unlabeled_roadmap_refuses_queries() {
        let inst = desk_instance(1, 41);
        let rm = build_roadmap(&inst, &small_params()).unwrap();
        let q = PathQuery {
            from: 0,
            to: 1,
            mode: Mode::Transit,
            occupied: CellSet::empty(inst.grid.len()),
            ignore: CellSet::empty(inst.grid.len()),
        };
        assert!(matches!(plan_path(&rm, &q), Err(RoadmapError::NotLabeled)));
        assert!(matches!(
            plan_manipulation(&rm, &inst, &inst.start, ObjectId(0), 0),
            Err(RoadmapError::NotLabeled)
        ));
    }

    #[test]
    fn cache_roundtrip_and_geometry_guard() {
        let inst = desk_instance(2, 43);
        let rm = label_edges(build_roadmap(&inst, &small_params()).unwrap(), &inst);
        let json = roadmap_to_json(&rm, &inst);
        let back = roadmap_from_json(&json, &inst).unwrap();
        assert_eq!(back.nodes, rm.nodes);
        assert_eq!(back.edges, rm.edges);
        assert_eq!(back.labeled, rm.labeled);
        assert_eq!(back.adj, rm.adj);
        // Same JSON refused for an instance with different geometry.
        let other_params = InstanceParams { radius: 0.045, ..InstanceParams::default() };
        let other = gen_instance(&other_params, 2, GenMode::RandomGoals, 43).unwrap();
        assert!(matches!(roadmap_from_json(&json, &other), Err(RoadmapError::GeometryMismatch)));
    }
}
