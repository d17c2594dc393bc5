//! Deterministic benchmark harness. One run produces per-trial CSV rows and
//! per-(n, solver) aggregates; `(seed, config)` fully determines every output
//! except the wall-time column. Within a trial, every solver sees the
//! identical instance and roadmap, so rows sharing an instance id are paired.

use crate::constraints::DetectOptions;
use crate::perts::{perts, GlobalOutcome, PertsConfig, UnsolvedReason};
use crate::roadmap::{build_roadmap, label_edges, RoadmapParams};
use crate::solvers::{solve_geometric, Deadline, SolverKind};
use crate::world::{gen_instance, GenMode, Instance, InstanceParams};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("time limits must be positive")]
    ZeroLimit,
    #[error("no solvers selected")]
    NoSolvers,
    #[error("no object counts selected")]
    EmptyRange,
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub n_range: Vec<usize>,
    pub trials: usize,
    pub solvers: Vec<SolverKind>,
    /// Wrap each solver in the perturbation planner (non-monotone suite).
    pub global: bool,
    /// Per-solve limit for monotone runs.
    pub monotone_limit: Duration,
    /// Per-solve limit when `global` is set.
    pub global_limit: Duration,
    pub params: InstanceParams,
    pub mode: GenMode,
    pub roadmap: RoadmapParams,
    pub detect: DetectOptions,
    /// Base seed; each (n, trial) derives its own stream from it.
    pub seed: u64,
    /// Where the CLI writes `results.csv` and `summary.json`.
    pub out_dir: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n_range: vec![3, 4, 5],
            trials: 20,
            solvers: SolverKind::ALL.to_vec(),
            global: false,
            monotone_limit: Duration::from_secs(180),
            global_limit: Duration::from_secs(360),
            params: InstanceParams::default(),
            mode: GenMode::RandomGoals,
            roadmap: RoadmapParams::default(),
            detect: DetectOptions::default(),
            seed: 0,
            out_dir: None,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.trials == 0 {
            return Err(BenchError::NoTrials);
        }
        if self.monotone_limit.is_zero() || self.global_limit.is_zero() {
            return Err(BenchError::ZeroLimit);
        }
        if self.solvers.is_empty() {
            return Err(BenchError::NoSolvers);
        }
        if self.n_range.is_empty() {
            return Err(BenchError::EmptyRange);
        }
        Ok(())
    }
}

/// One CSV row: one solver's run on one instance.
#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord {
    pub instance_id: String,
    pub solver: String,
    pub outcome: String,
    pub wall_time_ms: f64,
    pub mp_calls: u64,
    pub expansions: u64,
    pub pruned: u64,
    pub buffers: u64,
    pub seed: u64,
}

pub const CSV_HEADER: &str =
    "instance_id,solver,outcome,wall_time_ms,mp_calls,expansions,pruned,buffers,seed";

/// Aggregates for one (object count, solver) group.
#[derive(Debug, Clone, Serialize)]
pub struct GroupSummary {
    pub n: usize,
    pub solver: String,
    pub trials: usize,
    pub solved: usize,
    pub success_rate: f64,
    pub median_wall_ms: f64,
    pub mean_buffers: f64,
    pub median_mp_calls: f64,
    pub median_expansions: f64,
}

#[derive(Debug)]
pub struct BenchOutput {
    pub records: Vec<TrialRecord>,
    pub summary: BTreeMap<String, GroupSummary>,
}

/// splitmix64: decorrelates per-trial seed streams from the base seed.
fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable content hash (FNV-1a over position bits) so the instance id is
/// reproducible across runs and platforms.
fn content_hash(inst: &Instance) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bits: u64| {
        for b in bits.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
    };
    eat(inst.len() as u64);
    for (_, p) in inst.start.iter() {
        eat(p.x.to_bits());
        eat(p.y.to_bits());
    }
    for (_, p) in inst.goal.iter() {
        eat(p.x.to_bits());
        eat(p.y.to_bits());
    }
    h
}

fn instance_id(n: usize, t: usize, hash: u64) -> String {
    format!("n{n}_t{t}_h{hash:016x}")
}

fn solver_label(kind: SolverKind, global: bool) -> String {
    if global {
        format!("perts-{}", kind.name())
    } else {
        kind.name().to_string()
    }
}

fn error_rows(cfg: &BenchConfig, n: usize, t: usize, seed: u64) -> Vec<TrialRecord> {
    let id = instance_id(n, t, mix(seed, 0xe44));
    cfg.solvers
        .iter()
        .map(|&kind| TrialRecord {
            instance_id: id.clone(),
            solver: solver_label(kind, cfg.global),
            outcome: "error".into(),
            wall_time_ms: 0.0,
            mp_calls: 0,
            expansions: 0,
            pruned: 0,
            buffers: 0,
            seed,
        })
        .collect()
}

fn trial_rows(cfg: &BenchConfig, n: usize, t: usize, seed: u64) -> Vec<TrialRecord> {
    let Ok(inst) = gen_instance(&cfg.params, n, cfg.mode, seed) else {
        return error_rows(cfg, n, t, seed);
    };
    let rm_params = RoadmapParams { seed: mix(seed, 0x0ad), ..cfg.roadmap };
    let Ok(rm) = build_roadmap(&inst, &rm_params) else {
        return error_rows(cfg, n, t, seed);
    };
    let rm = label_edges(rm, &inst);
    let id = instance_id(n, t, content_hash(&inst));

    cfg.solvers
        .iter()
        .enumerate()
        .map(|(si, &kind)| {
            let started = Instant::now();
            let (outcome, mp_calls, expansions, pruned, buffers) = if cfg.global {
                let pcfg = PertsConfig {
                    solver: kind,
                    detect: cfg.detect,
                    seed: mix(seed, 0x9e7 + si as u64),
                    ..Default::default()
                };
                match perts(&inst, &rm, &pcfg, Deadline::after(cfg.global_limit)) {
                    Ok(r) => {
                        let name = match &r.outcome {
                            GlobalOutcome::Solved { .. } => "solved",
                            GlobalOutcome::Unsolved { reason: UnsolvedReason::TimedOut } => {
                                "timeout"
                            }
                            GlobalOutcome::Unsolved { .. } => "exhausted",
                        };
                        let buffers = match &r.outcome {
                            GlobalOutcome::Solved { buffers, .. } => *buffers as u64,
                            GlobalOutcome::Unsolved { .. } => 0,
                        };
                        let s = r.stats;
                        (name, s.mp_calls, s.expansions, s.pruned, buffers)
                    }
                    Err(_) => ("error", 0, 0, 0, 0),
                }
            } else {
                match solve_geometric(kind, &inst, &rm, &cfg.detect, Deadline::after(cfg.monotone_limit)) {
                    Ok(s) => {
                        let st = s.result.stats;
                        (s.result.outcome.name(), st.mp_calls, st.expansions, st.pruned, 0)
                    }
                    Err(_) => ("error", 0, 0, 0, 0),
                }
            };
            TrialRecord {
                instance_id: id.clone(),
                solver: solver_label(kind, cfg.global),
                outcome: outcome.to_string(),
                // Quantized to the CSV's 3-decimal precision so every summary
                // aggregate is recomputable from the shipped CSV alone.
                wall_time_ms: (started.elapsed().as_secs_f64() * 1e6).round() / 1e3,
                mp_calls,
                expansions,
                pruned,
                buffers,
                seed,
            }
        })
        .collect()
}

/// Run every (n, trial, solver) cell. Trials run in a worker pool; output
/// order is fixed regardless of scheduling. A panicking trial is recorded as
/// `error` rows and the run continues.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchOutput, BenchError> {
    cfg.validate()?;
    let specs: Vec<(usize, usize)> = cfg
        .n_range
        .iter()
        .flat_map(|&n| (0..cfg.trials).map(move |t| (n, t)))
        .collect();
    let groups: Vec<Vec<TrialRecord>> = specs
        .par_iter()
        .map(|&(n, t)| {
            let seed = mix(cfg.seed, ((n as u64) << 20) | t as u64);
            catch_unwind(AssertUnwindSafe(|| trial_rows(cfg, n, t, seed)))
                .unwrap_or_else(|_| error_rows(cfg, n, t, seed))
        })
        .collect();
    let records: Vec<TrialRecord> = groups.into_iter().flatten().collect();
    let summary = summarize(&records);
    Ok(BenchOutput { records, summary })
}

fn median(sorted: &[f64]) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    }
}

fn n_of(record: &TrialRecord) -> usize {
    record
        .instance_id
        .strip_prefix('n')
        .and_then(|s| s.split('_').next())
        .and_then(|s| s.parse().ok())
        .unwrap_or(0)
}

/// Per-(n, solver) aggregates, keyed `"n={n}/{solver}"` in sorted order.
pub fn summarize(records: &[TrialRecord]) -> BTreeMap<String, GroupSummary> {
    let mut groups: BTreeMap<(usize, String), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((n_of(r), r.solver.clone())).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((n, solver), rows)| {
            let solved = rows.iter().filter(|r| r.outcome == "solved").count();
            let sorted = |f: &dyn Fn(&TrialRecord) -> f64| {
                let mut v: Vec<f64> = rows.iter().map(|r| f(r)).collect();
                v.sort_by(f64::total_cmp);
                v
            };
            let wall = sorted(&|r| r.wall_time_ms);
            let mp = sorted(&|r| r.mp_calls as f64);
            let exp = sorted(&|r| r.expansions as f64);
            let mean_buffers =
                rows.iter().map(|r| r.buffers as f64).sum::<f64>() / rows.len() as f64;
            let key = format!("n={n:02}/{solver}");
            let g = GroupSummary {
                n,
                solver,
                trials: rows.len(),
                solved,
                success_rate: solved as f64 / rows.len() as f64,
                median_wall_ms: median(&wall),
                mean_buffers,
                median_mp_calls: median(&mp),
                median_expansions: median(&exp),
            };
            (key, g)
        })
        .collect()
}

pub fn to_csv(records: &[TrialRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{:.3},{},{},{},{},{}",
            r.instance_id,
            r.solver,
            r.outcome,
            r.wall_time_ms,
            r.mp_calls,
            r.expansions,
            r.pruned,
            r.buffers,
            r.seed
        );
    }
    out
}

pub fn summary_json(summary: &BTreeMap<String, GroupSummary>) -> String {
    let mut s = serde_json::to_string_pretty(summary).expect("summary serializes");
    s.push('\n');
    s
}

/// Write `results.csv` and `summary.json` under `dir` (created if missing).
pub fn write_artifacts(output: &BenchOutput, dir: &Path) -> std::io::Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join("results.csv");
    let json_path = dir.join("summary.json");
    std::fs::write(&csv_path, to_csv(&output.records))?;
    std::fs::write(&json_path, summary_json(&output.summary))?;
    Ok((csv_path, json_path))
}

/// The CSV with its wall-time column blanked: the determinism surface.
pub fn csv_without_wall_time(csv: &str) -> String {
    csv.lines()
        .map(|line| {
            let mut cols: Vec<&str> = line.split(',').collect();
            if cols.len() > 3 {
                cols[3] = "-";
            }
            cols.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_cfg() -> BenchConfig {
        BenchConfig {
            n_range: vec![1],
            trials: 1,
            roadmap: RoadmapParams { num_samples: 250, ..Default::default() },
            monotone_limit: Duration::from_secs(30),
            global_limit: Duration::from_secs(60),
            ..Default::default()
        }
    }

    #[test]
    fn single_object_trials_solve_for_every_solver() {
        let out = run_benchmark(&quick_cfg()).unwrap();
        assert_eq!(out.records.len(), SolverKind::ALL.len());
        for r in &out.records {
            assert_eq!(r.outcome, "solved", "{} failed", r.solver);
            assert_eq!(r.buffers, 0);
            assert!(r.mp_calls >= 1);
        }
        for g in out.summary.values() {
            assert_eq!(g.success_rate, 1.0);
        }
    }

    #[test]
    fn repeat_runs_differ_only_in_wall_time() {
        let cfg = BenchConfig {
            n_range: vec![2],
            trials: 2,
            solvers: vec![SolverKind::Mrs, SolverKind::Cirs],
            roadmap: RoadmapParams { num_samples: 250, ..Default::default() },
            seed: 7,
            ..Default::default()
        };
        let a = run_benchmark(&cfg).unwrap();
        let b = run_benchmark(&cfg).unwrap();
        assert_eq!(
            csv_without_wall_time(&to_csv(&a.records)),
            csv_without_wall_time(&to_csv(&b.records))
        );
        let keys: Vec<&String> = a.summary.keys().collect();
        assert_eq!(keys, b.summary.keys().collect::<Vec<_>>());
    }

    #[test]
    fn rows_within_a_trial_share_the_instance() {
        let cfg = BenchConfig {
            n_range: vec![2, 3],
            trials: 2,
            roadmap: RoadmapParams { num_samples: 250, ..Default::default() },
            ..Default::default()
        };
        let out = run_benchmark(&cfg).unwrap();
        let mut by_id: BTreeMap<&str, Vec<&TrialRecord>> = BTreeMap::new();
        for r in &out.records {
            by_id.entry(&r.instance_id).or_default().push(r);
        }
        assert_eq!(by_id.len(), 4, "one id per (n, trial)");
        for rows in by_id.values() {
            assert_eq!(rows.len(), SolverKind::ALL.len());
            assert!(rows.windows(2).all(|w| w[0].seed == w[1].seed));
        }
    }

    #[test]
    fn impossible_generation_becomes_error_rows_and_the_run_continues() {
        let cfg = BenchConfig {
            n_range: vec![40, 1],
            trials: 1,
            roadmap: RoadmapParams { num_samples: 250, ..Default::default() },
            ..Default::default()
        };
        let out = run_benchmark(&cfg).unwrap();
        let (errors, solved): (Vec<_>, Vec<_>) =
            out.records.iter().partition(|r| r.outcome == "error");
        assert_eq!(errors.len(), SolverKind::ALL.len());
        assert_eq!(solved.len(), SolverKind::ALL.len());
        assert!(solved.iter().all(|r| r.outcome == "solved"));
    }

    #[test]
    fn csv_shape_is_pinned() {
        let out = run_benchmark(&quick_cfg()).unwrap();
        let csv = to_csv(&out.records);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next(),
            Some("instance_id,solver,outcome,wall_time_ms,mp_calls,expansions,pruned,buffers,seed")
        );
        for line in lines {
            assert_eq!(line.split(',').count(), 9);
        }
        let id = &out.records[0].instance_id;
        assert!(id.starts_with("n1_t0_h"), "unexpected id {id}");
        assert_eq!(id.len(), "n1_t0_h".len() + 16);
    }

    #[test]
    fn global_wrapping_renames_solvers_and_reports_buffers() {
        let cfg = BenchConfig { global: true, solvers: vec![SolverKind::Cirs], ..quick_cfg() };
        let out = run_benchmark(&cfg).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].solver, "perts-cirs");
        assert_eq!(out.records[0].outcome, "solved");
        assert_eq!(out.records[0].buffers, 0);
    }
}
