//! Rearrangement planning for uniformly sized disc objects in a confined
//! planar workspace (a shelf with one open side) served by a 3-link planar arm.
//!
//! The crate is organized bottom-up:
//!
//! - [`geom2d`]: arm kinematics, capsule/disc collision primitives, swept edges
//! - [`world`]: arrangements, the buffer grid, instances and their generation
//! - [`roadmap`]: an offline-labeled roadmap with per-edge cell occupancy labels
//!   and A* queries in transit/transfer modes
//! - [`constraints`]: invalidity detection — grasp-blocking analysis compiled
//!   into predicates over which objects sit at start/goal
//! - [`solvers`]: monotone solvers (`mrs`, `dfs_dp`, `cidfs_dp`/`cirs`) over a
//!   pluggable single-move feasibility oracle
//! - [`perts`]: the global planner that escapes non-monotone instances by
//!   perturbing objects to buffer cells
//! - [`scene`]: SVG rendering of instances and solution playbacks
//! - [`bench`]: deterministic benchmark harness with CSV/JSON artifacts
//! - [`verify`]: brute-force oracles used by tests and the `verify` CLI command

pub mod bench;
pub mod constraints;
pub mod geom2d;
pub mod perts;
pub mod roadmap;
pub mod scene;
pub mod solvers;
pub mod verify;
pub mod world;

pub use bench::{run_benchmark, BenchConfig, BenchOutput, TrialRecord};
pub use constraints::{
    detect_invalidity, DetectOptions, InvalidPredicate, InvalidityLedger,
};
pub use geom2d::{Config, PlanarArm, Position, WorkspaceGeom};
pub use perts::{perts, replay_actions, GlobalOutcome, PertsConfig, PertsResult};
pub use scene::{render_frames, render_scene, FrameMove};
pub use roadmap::{
    build_roadmap, label_edges, plan_manipulation, plan_path, LabeledRoadmap, RoadmapParams,
};
pub use solvers::{
    cidfs_dp, cirs, dfs_dp, mrs, solve_geometric, Deadline, GeometricOracle, MoveOracle,
    SolveOutcome, SolveResult, SolverKind,
};
pub use world::{gen_instance, Arrangement, GenMode, Instance, InstanceParams, MonoState, ObjectId};
