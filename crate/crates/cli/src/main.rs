//! `rearrange` — command-line front end for the disc-rearrangement planner.
//!
//! Subcommands: `gen` (instance files), `build-roadmap` (labeled roadmap
//! files), `solve` (one solver, optionally wrapped in the global
//! perturbation planner), `bench` (paired benchmark suite with CSV/JSON
//! artifacts), `verify` (brute-force oracle audits), and `render` (SVG
//! scenes and solution playbacks).
//!
//! The environment variable `REARRANGE_SEED` overrides `--seed` everywhere.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use rearrange_core::bench::{self, BenchConfig};
use rearrange_core::constraints::{detect_invalidity, DetectOptions};
use rearrange_core::geom2d::Position;
use rearrange_core::perts::{self, ActionKind, GlobalOutcome, PertsConfig, UnsolvedReason};
use rearrange_core::roadmap::{
    build_roadmap, label_edges, roadmap_from_json, roadmap_to_json, LabeledRoadmap, RoadmapParams,
};
use rearrange_core::scene::{render_frames, render_scene, FrameMove};
use rearrange_core::solvers::{
    solve_geometric, Deadline, GeometricOracle, GeometricSolve, SolveOutcome, SolverKind,
};
use rearrange_core::verify;
use rearrange_core::world::{gen_instance, Arrangement, GenMode, Instance, InstanceParams};

const SEED_ENV: &str = "REARRANGE_SEED";

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{path}: {source}", path = .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}", path = .path.display())]
    File { path: PathBuf, message: String },
    #[error("{0}")]
    Msg(String),
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io { path: path.into(), source: e })
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| CliError::Io { path: dir.into(), source: e })?;
        }
    }
    fs::write(path, text).map_err(|e| CliError::Io { path: path.into(), source: e })
}

/// `--seed` unless `REARRANGE_SEED` is set, in which case the variable wins.
fn effective_seed(flag: u64) -> Result<u64, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse::<u64>().map_err(|_| {
            CliError::Msg(format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))
        }),
        Err(std::env::VarError::NotPresent) => Ok(flag),
        Err(e) => Err(CliError::Msg(format!("{SEED_ENV}: {e}"))),
    }
}

fn parse_seconds(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err("must be a positive number of seconds".into())
    }
}

// ---------------------------------------------------------------------------
// Instance files
// ---------------------------------------------------------------------------

/// On-disk instance format: the generation parameters plus the exact start
/// positions and goal cells, so files round-trip bit-for-bit.
#[derive(Debug, Serialize, Deserialize)]
struct InstanceFile {
    params: InstanceParams,
    seed: u64,
    start: Vec<Position>,
    goal_cells: Vec<usize>,
}

impl InstanceFile {
    fn new(params: &InstanceParams, inst: &Instance) -> Self {
        Self {
            params: params.clone(),
            seed: inst.seed,
            start: inst.objects().map(|o| inst.start[o]).collect(),
            goal_cells: inst.goal_cells.clone(),
        }
    }

    fn build(&self) -> Result<Instance, String> {
        let grid = self.params.grid();
        let mut goal = Vec::with_capacity(self.goal_cells.len());
        for &c in &self.goal_cells {
            if c >= grid.len() {
                return Err(format!("goal cell {c} out of range (grid has {})", grid.len()));
            }
            goal.push(grid.cells[c]);
        }
        Instance::new(
            self.params.workspace(),
            self.params.arm(),
            self.params.radius,
            Arrangement::new(self.start.clone()),
            Arrangement::new(goal),
            grid,
            self.seed,
        )
        .map_err(|e| e.to_string())
    }
}

fn load_instance(path: &Path) -> Result<Instance, CliError> {
    let text = read_file(path)?;
    let file: InstanceFile = serde_json::from_str(&text).map_err(|e| CliError::File {
        path: path.into(),
        message: format!("not a valid instance file: {e}"),
    })?;
    file.build().map_err(|m| CliError::File { path: path.into(), message: m })
}

// ---------------------------------------------------------------------------
// Shared flag groups
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverArg {
    /// Memoryless recursive search.
    Mrs,
    /// Depth-first search with a visited-state memo.
    Dfsdp,
    /// Constraint-informed search: the memoized search plus the invalidity ledger.
    Cirs,
}

impl From<SolverArg> for SolverKind {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Mrs => SolverKind::Mrs,
            SolverArg::Dfsdp => SolverKind::DfsDp,
            SolverArg::Cirs => SolverKind::Cirs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    /// Goals on a random sample of distinct grid cells.
    Random,
    /// Goals fill grid cells in index order (front rows first).
    Rows,
}

impl From<ModeArg> for GenMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Random => GenMode::RandomGoals,
            ModeArg::Rows => GenMode::RowGoals,
        }
    }
}

#[derive(Debug, Args)]
struct RoadmapFlags {
    /// Roadmap samples (the home node is extra).
    #[arg(long, default_value_t = 600)]
    samples: usize,
    /// Grasp configurations per grid cell.
    #[arg(long, default_value_t = 4)]
    k_grasps: usize,
    /// Fraction of samples reserved for grasp nodes.
    #[arg(long, default_value_t = 0.5)]
    grasp_ratio: f64,
}

impl RoadmapFlags {
    fn params(&self, seed: u64) -> RoadmapParams {
        RoadmapParams {
            num_samples: self.samples,
            grasp_ratio: self.grasp_ratio,
            k_grasps: self.k_grasps,
            seed,
            ..RoadmapParams::default()
        }
    }
}

fn build_labeled(inst: &Instance, params: &RoadmapParams) -> Result<LabeledRoadmap, CliError> {
    let rm = build_roadmap(inst, params)
        .map_err(|e| CliError::Msg(format!("roadmap build failed: {e}")))?;
    Ok(label_edges(rm, inst))
}

/// Load the cached roadmap if the file exists (rejecting files built for
/// different geometry or without labels), otherwise build one — and save it
/// when a cache path was given.
fn obtain_roadmap(
    inst: &Instance,
    flags: &RoadmapFlags,
    seed: u64,
    cache: Option<&Path>,
) -> Result<LabeledRoadmap, CliError> {
    if let Some(path) = cache {
        if path.exists() {
            let text = read_file(path)?;
            let rm = roadmap_from_json(&text, inst).map_err(|e| CliError::File {
                path: path.into(),
                message: format!("cached roadmap rejected: {e}"),
            })?;
            if !rm.labeled {
                return Err(CliError::File {
                    path: path.into(),
                    message: "cached roadmap has no occupancy labels".into(),
                });
            }
            return Ok(rm);
        }
    }
    let rm = build_labeled(inst, &flags.params(seed))?;
    if let Some(path) = cache {
        write_file(path, &roadmap_to_json(&rm, inst))?;
        eprintln!("cached roadmap at {}", path.display());
    }
    Ok(rm)
}

// ---------------------------------------------------------------------------
// Command definitions
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "rearrange",
    version,
    about = "Rearrangement planning for disc objects in a confined shelf"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate an instance and write it as JSON.
    Gen(GenArgs),
    /// Build a labeled roadmap for an instance and write it as JSON.
    BuildRoadmap(BuildRoadmapArgs),
    /// Run one solver on an instance and print a JSON report.
    Solve(SolveArgs),
    /// Run the paired benchmark suite; writes results.csv and summary.json.
    Bench(BenchArgs),
    /// Audit solvers, labels, and ledgers against brute-force oracles.
    Verify(VerifyArgs),
    /// Render an instance (and optionally a solution playback) to SVG.
    Render(RenderArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Number of objects.
    #[arg(long)]
    n: usize,
    /// Base RNG seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Goal layout.
    #[arg(long, value_enum, default_value_t = ModeArg::Random)]
    mode: ModeArg,
    /// Write the instance here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BuildRoadmapArgs {
    /// Instance file produced by `gen`.
    #[arg(long)]
    instance: PathBuf,
    #[command(flatten)]
    roadmap: RoadmapFlags,
    /// Sampling seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output roadmap file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance file produced by `gen`.
    #[arg(long)]
    instance: PathBuf,
    /// Solver to run.
    #[arg(long, value_enum, default_value_t = SolverArg::Cirs)]
    solver: SolverArg,
    /// Wrap the solver in the buffer-perturbation global planner.
    #[arg(long)]
    global: bool,
    /// Wall-clock limit in seconds (default 180, or 360 with --global).
    #[arg(long, value_parser = parse_seconds)]
    time_limit: Option<f64>,
    #[command(flatten)]
    roadmap: RoadmapFlags,
    /// Load this roadmap if present, else build one and save it here.
    #[arg(long)]
    roadmap_cache: Option<PathBuf>,
    /// Also derive predicates from start-disc blockage, not just goals.
    #[arg(long)]
    start_blocking: bool,
    /// Print the compiled invalidity predicates before solving.
    #[arg(long)]
    dump_ledger: bool,
    /// Roadmap-sampling and perturbation seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Object counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "3,4,5")]
    n: Vec<usize>,
    /// Trials per object count.
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Solvers to run (comma separated); default all three.
    #[arg(long, value_enum, value_delimiter = ',')]
    solver: Vec<SolverArg>,
    /// Wrap every solver in the global perturbation planner.
    #[arg(long)]
    global: bool,
    /// Per-solve limit in seconds; the global limit is twice this.
    #[arg(long, value_parser = parse_seconds, default_value_t = 180.0)]
    time_limit: f64,
    #[command(flatten)]
    roadmap: RoadmapFlags,
    /// Also derive predicates from start-disc blockage.
    #[arg(long)]
    start_blocking: bool,
    /// Goal layout for generated instances.
    #[arg(long, value_enum, default_value_t = ModeArg::Random)]
    mode: ModeArg,
    /// Base seed; every (n, trial) derives its own stream.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for results.csv and summary.json.
    #[arg(long, default_value = "bench_out")]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Random synthetic feasibility tables to check.
    #[arg(long, default_value_t = 100)]
    seeds: u64,
    /// Largest object count (the permutation oracle caps this at 5).
    #[arg(long, default_value_t = 5)]
    n: usize,
    /// Geometric instances to audit.
    #[arg(long, default_value_t = 6)]
    instances: usize,
    /// Roadmap samples for the geometric leg.
    #[arg(long, default_value_t = 250)]
    samples: usize,
    /// Per-solve limit in seconds for the geometric leg.
    #[arg(long, value_parser = parse_seconds, default_value_t = 60.0)]
    time_limit: f64,
    /// Base seed for tables, instances, and roadmaps.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RenderArgs {
    /// Instance file produced by `gen`.
    #[arg(long)]
    instance: PathBuf,
    /// Solve first and render one frame per action (omit for the scene only).
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    /// Wrap the solver in the global perturbation planner.
    #[arg(long, requires = "solver")]
    global: bool,
    /// Wall-clock limit in seconds (default 180, or 360 with --global).
    #[arg(long, value_parser = parse_seconds)]
    time_limit: Option<f64>,
    #[command(flatten)]
    roadmap: RoadmapFlags,
    /// Load this roadmap if present, else build one and save it here.
    #[arg(long)]
    roadmap_cache: Option<PathBuf>,
    /// Roadmap-sampling and perturbation seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for scene.svg and frame_NNN.svg.
    #[arg(long, default_value = "render_out")]
    out: PathBuf,
}

// ---------------------------------------------------------------------------
// Command implementations
// ---------------------------------------------------------------------------

fn cmd_gen(a: GenArgs) -> Result<(), CliError> {
    let seed = effective_seed(a.seed)?;
    let params = InstanceParams::default();
    let inst = gen_instance(&params, a.n, a.mode.into(), seed)
        .map_err(|e| CliError::Msg(format!("generation failed: {e}")))?;
    let mut text = serde_json::to_string_pretty(&InstanceFile::new(&params, &inst))
        .expect("instance files serialize");
    text.push('\n');
    match &a.out {
        Some(p) => {
            write_file(p, &text)?;
            println!("wrote {} (n={}, seed={})", p.display(), a.n, seed);
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_build_roadmap(a: BuildRoadmapArgs) -> Result<(), CliError> {
    let inst = load_instance(&a.instance)?;
    let seed = effective_seed(a.seed)?;
    let rm = build_labeled(&inst, &a.roadmap.params(seed))?;
    write_file(&a.out, &roadmap_to_json(&rm, &inst))?;
    println!("wrote {} ({} nodes, {} edges)", a.out.display(), rm.nodes.len(), rm.edges.len());
    Ok(())
}

fn solve_limit(time_limit: Option<f64>, global: bool) -> Duration {
    Duration::from_secs_f64(time_limit.unwrap_or(if global { 360.0 } else { 180.0 }))
}

fn mono_report(kind: SolverKind, solve: &GeometricSolve, wall: Duration) -> Value {
    let stats = &solve.result.stats;
    let mut v = json!({
        "solver": kind.name(),
        "global": false,
        "outcome": solve.result.outcome.name(),
        "wall_time_ms": wall.as_secs_f64() * 1e3,
        "stats": {
            "mp_calls": stats.mp_calls,
            "expansions": stats.expansions,
            "pruned": stats.pruned,
        },
    });
    if let SolveOutcome::Solved { order, paths } = &solve.result.outcome {
        v["order"] = json!(order.iter().map(|o| o.0).collect::<Vec<_>>());
        v["moves"] = json!(order
            .iter()
            .zip(paths)
            .map(|(o, p)| json!({
                "object": o.0,
                "to_cell": p.as_ref().map(|p| p.target_cell),
            }))
            .collect::<Vec<_>>());
        v["buffers"] = json!(0);
    }
    if let Some(ledger) = &solve.ledger {
        v["ledger_predicates"] = json!(ledger.len());
    }
    v
}

fn global_report(kind: SolverKind, res: &perts::PertsResult, wall: Duration) -> Value {
    let (outcome, reason) = match &res.outcome {
        GlobalOutcome::Solved { .. } => ("solved", None),
        GlobalOutcome::Unsolved { reason: UnsolvedReason::TimedOut } => ("timeout", None),
        GlobalOutcome::Unsolved { reason: UnsolvedReason::IterationCap } => {
            ("exhausted", Some("iteration-cap"))
        }
        GlobalOutcome::Unsolved { reason: UnsolvedReason::BudgetExhausted } => {
            ("exhausted", Some("budget-exhausted"))
        }
    };
    let mut v = json!({
        "solver": format!("perts-{}", kind.name()),
        "global": true,
        "outcome": outcome,
        "wall_time_ms": wall.as_secs_f64() * 1e3,
        "stats": serde_json::to_value(res.stats).expect("stats serialize"),
    });
    if let Some(r) = reason {
        v["reason"] = json!(r);
    }
    if let GlobalOutcome::Solved { actions, buffers } = &res.outcome {
        v["buffers"] = json!(buffers);
        v["actions"] = json!(actions
            .iter()
            .map(|a| json!({
                "kind": match a.kind {
                    ActionKind::Perturb => "perturb",
                    ActionKind::GoalMove => "goal-move",
                },
                "object": a.object.0,
                "to_cell": a.path.as_ref().map(|p| p.target_cell),
            }))
            .collect::<Vec<_>>());
    }
    v
}

fn cmd_solve(a: SolveArgs) -> Result<(), CliError> {
    let inst = load_instance(&a.instance)?;
    let seed = effective_seed(a.seed)?;
    let rm = obtain_roadmap(&inst, &a.roadmap, seed, a.roadmap_cache.as_deref())?;
    let detect = DetectOptions { start_blocking: a.start_blocking, ..DetectOptions::default() };
    let kind = SolverKind::from(a.solver);
    let limit = solve_limit(a.time_limit, a.global);

    if a.dump_ledger {
        let ledger = detect_invalidity(&inst, rm.params.k_grasps, &detect)
            .map_err(|e| CliError::Msg(format!("invalidity detection failed: {e}")))?;
        if ledger.is_empty() {
            println!("ledger: no invalidity predicates");
        } else {
            for p in ledger.predicates() {
                println!("ledger: {p}");
            }
        }
        if ledger.truncated {
            println!("ledger: truncated (a constraint-set product hit the cap)");
        }
    }

    let started = Instant::now();
    let report = if a.global {
        let cfg = PertsConfig { solver: kind, detect, seed, ..PertsConfig::default() };
        let res = perts::perts(&inst, &rm, &cfg, Deadline::after(limit))
            .map_err(|e| CliError::Msg(format!("global planner failed: {e}")))?;
        global_report(kind, &res, started.elapsed())
    } else {
        let solve = solve_geometric(kind, &inst, &rm, &detect, Deadline::after(limit))
            .map_err(|e| CliError::Msg(format!("solver failed: {e}")))?;
        mono_report(kind, &solve, started.elapsed())
    };

    let mut text = serde_json::to_string_pretty(&report).expect("reports serialize");
    text.push('\n');
    match &a.out {
        Some(p) => {
            write_file(p, &text)?;
            println!("wrote {}", p.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<(), CliError> {
    let seed = effective_seed(a.seed)?;
    let solvers: Vec<SolverKind> = if a.solver.is_empty() {
        SolverKind::ALL.to_vec()
    } else {
        a.solver.iter().map(|&s| s.into()).collect()
    };
    let cfg = BenchConfig {
        n_range: a.n.clone(),
        trials: a.trials,
        solvers,
        global: a.global,
        monotone_limit: Duration::from_secs_f64(a.time_limit),
        global_limit: Duration::from_secs_f64(a.time_limit * 2.0),
        params: InstanceParams::default(),
        mode: a.mode.into(),
        roadmap: a.roadmap.params(seed),
        detect: DetectOptions { start_blocking: a.start_blocking, ..DetectOptions::default() },
        seed,
        out_dir: Some(a.out.clone()),
    };
    cfg.validate().map_err(|e| CliError::Msg(format!("invalid benchmark config: {e}")))?;
    let output =
        bench::run_benchmark(&cfg).map_err(|e| CliError::Msg(format!("benchmark failed: {e}")))?;
    let (csv_path, json_path) = bench::write_artifacts(&output, &a.out)
        .map_err(|e| CliError::Io { path: a.out.clone(), source: e })?;
    for (key, g) in &output.summary {
        println!(
            "{key}: solved {}/{} ({:.0}%), median wall {:.1} ms, mean buffers {:.2}, median mp_calls {:.1}",
            g.solved,
            g.trials,
            g.success_rate * 100.0,
            g.median_wall_ms,
            g.mean_buffers,
            g.median_mp_calls
        );
    }
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> Result<ExitCode, CliError> {
    if a.n == 0 || a.n > 5 {
        return Err(CliError::Msg(format!(
            "--n must be between 1 and 5 (the permutation oracle is exponential), got {}",
            a.n
        )));
    }
    let seed = effective_seed(a.seed)?;
    let limit = Duration::from_secs_f64(a.time_limit);
    let mut failures = 0usize;
    let mut properties = 0usize;
    let mut check = |name: &str, result: Result<String, String>| {
        properties += 1;
        match result {
            Ok(detail) => println!("PROPERTY {name}: PASS — {detail}"),
            Err(e) => {
                println!("PROPERTY {name}: FAIL — {e}");
                failures += 1;
            }
        }
    };

    check(
        "permutation oracle vs solvers (synthetic tables)",
        verify::synthetic_agreement(a.n.max(2), a.seeds, seed ^ 0x5eed_7ab1)
            .map(|c| format!("{c} random tables, all three solvers agreed")),
    );

    // Geometric suite: instances with n cycling 2..=max(n, 2), each with its
    // own roadmap. Generation retries a few seeds per slot; exhausting them
    // is a configuration error, not a property failure.
    let mut suite: Vec<(Instance, LabeledRoadmap)> = Vec::new();
    for i in 0..a.instances {
        let n = 2 + (i % a.n.max(2).saturating_sub(1));
        let mut found = None;
        for attempt in 0..20u64 {
            let s = seed
                .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                .wrapping_add(1000 * i as u64 + attempt);
            if let Ok(inst) = gen_instance(&InstanceParams::default(), n, GenMode::RandomGoals, s)
            {
                found = Some(inst);
                break;
            }
        }
        let inst = found.ok_or_else(|| {
            CliError::Msg(format!("could not generate a feasible instance with n={n}"))
        })?;
        let rm_params = RoadmapParams {
            num_samples: a.samples,
            seed: seed.wrapping_add(7_000 + i as u64),
            ..RoadmapParams::default()
        };
        let rm = build_labeled(&inst, &rm_params)?;
        suite.push((inst, rm));
    }

    let audit = |f: &dyn Fn(usize, &Instance, &LabeledRoadmap) -> Result<(), String>| {
        for (i, (inst, rm)) in suite.iter().enumerate() {
            f(i, inst, rm)
                .map_err(|e| format!("instance {i} (n={}, seed={}): {e}", inst.len(), inst.seed))?;
        }
        Ok(format!("{} geometric instances audited", suite.len()))
    };

    check(
        "permutation oracle vs solvers (geometric)",
        audit(&|_, inst, rm| {
            verify::solver_agreement(inst, rm, &DetectOptions::default(), Deadline::after(limit))
        }),
    );
    check(
        "offline labels vs fresh collision checks",
        audit(&|_, inst, rm| verify::label_equivalence(rm, inst)),
    );
    check(
        "labeled queries vs brute-force feasibility",
        audit(&|i, inst, rm| {
            verify::query_equivalence(rm, inst, 200, seed.wrapping_add(40_000 + i as u64))
        }),
    );
    check(
        "ledger soundness on oracle solutions",
        audit(&|_, inst, rm| {
            for start_blocking in [false, true] {
                let opts = DetectOptions { start_blocking, ..DetectOptions::default() };
                let ledger = detect_invalidity(inst, rm.params.k_grasps, &opts)
                    .map_err(|e| e.to_string())?;
                let mut oracle = GeometricOracle::new(rm, inst);
                verify::ledger_sound_on_solutions(&mut oracle, &ledger)?;
            }
            Ok(())
        }),
    );

    if failures == 0 {
        println!("verify: all {properties} properties passed");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("verify: {failures} of {properties} properties FAILED");
        Ok(ExitCode::FAILURE)
    }
}

fn cmd_render(a: RenderArgs) -> Result<(), CliError> {
    let inst = load_instance(&a.instance)?;
    fs::create_dir_all(&a.out).map_err(|e| CliError::Io { path: a.out.clone(), source: e })?;

    let scene_path = a.out.join("scene.svg");
    write_file(&scene_path, &render_scene(&inst, &inst.start, None))?;
    println!("wrote {}", scene_path.display());

    let Some(solver) = a.solver else {
        return Ok(());
    };
    let seed = effective_seed(a.seed)?;
    let rm = obtain_roadmap(&inst, &a.roadmap, seed, a.roadmap_cache.as_deref())?;
    let kind = SolverKind::from(solver);
    let limit = solve_limit(a.time_limit, a.global);
    let detect = DetectOptions::default();

    // One frame move per executed action; the arm is drawn at the placing
    // configuration of that action's manipulation path.
    let moves: Result<Vec<FrameMove>, String> = if a.global {
        let cfg = PertsConfig { solver: kind, detect, seed, ..PertsConfig::default() };
        let res = perts::perts(&inst, &rm, &cfg, Deadline::after(limit))
            .map_err(|e| CliError::Msg(format!("global planner failed: {e}")))?;
        match res.outcome {
            GlobalOutcome::Solved { actions, .. } => Ok(actions
                .iter()
                .map(|act| FrameMove {
                    object: act.object,
                    to: act.to,
                    arm: act.path.as_ref().map(|p| rm.nodes[p.place_node].config),
                })
                .collect()),
            GlobalOutcome::Unsolved { reason } => Err(format!("{reason:?}")),
        }
    } else {
        let solve = solve_geometric(kind, &inst, &rm, &detect, Deadline::after(limit))
            .map_err(|e| CliError::Msg(format!("solver failed: {e}")))?;
        match &solve.result.outcome {
            SolveOutcome::Solved { order, paths } => Ok(order
                .iter()
                .zip(paths)
                .map(|(&o, p)| FrameMove {
                    object: o,
                    to: inst.goal[o],
                    arm: p.as_ref().map(|p| rm.nodes[p.place_node].config),
                })
                .collect()),
            other => Err(other.name().to_string()),
        }
    };

    match moves {
        Ok(moves) => {
            let frames = render_frames(&inst, &moves);
            for (i, svg) in frames.iter().enumerate() {
                write_file(&a.out.join(format!("frame_{i:03}.svg")), svg)?;
            }
            println!("wrote {} frames to {}", frames.len(), a.out.display());
        }
        Err(outcome) => {
            println!("not solved ({outcome}); wrote the scene only");
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.cmd {
        Cmd::Gen(a) => cmd_gen(a).map(|()| ExitCode::SUCCESS),
        Cmd::BuildRoadmap(a) => cmd_build_roadmap(a).map(|()| ExitCode::SUCCESS),
        Cmd::Solve(a) => cmd_solve(a).map(|()| ExitCode::SUCCESS),
        Cmd::Bench(a) => cmd_bench(a).map(|()| ExitCode::SUCCESS),
        Cmd::Verify(a) => cmd_verify(a),
        Cmd::Render(a) => cmd_render(a).map(|()| ExitCode::SUCCESS),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
