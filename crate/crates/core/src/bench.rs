//! Replays subproblem corpora through several solvers and tabulates them.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::astar::{solve_astar, AstarOptions};
use crate::instance::TripInstance;
use crate::oracle::{solve_bruteforce, OracleError, DEFAULT_ENUMERATION_CAP};
use crate::topo::solve_topo;

/// Largest relative disagreement tolerated between solvers.
pub const MISMATCH_TOLERANCE: f64 = 1e-6;

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "TRIPSOLVE_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchSolver {
    Topo,
    Astar,
    Oracle,
}

impl BenchSolver {
    pub fn name(&self) -> &'static str {
        match self {
            BenchSolver::Topo => "topo",
            BenchSolver::Astar => "astar",
            BenchSolver::Oracle => "oracle",
        }
    }
}

impl std::str::FromStr for BenchSolver {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "topo" => Ok(BenchSolver::Topo),
            "astar" => Ok(BenchSolver::Astar),
            "oracle" => Ok(BenchSolver::Oracle),
            other => Err(format!("unknown solver {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub instance_id: usize,
    pub n: usize,
    pub delta: u64,
    pub alpha: f64,
    pub solver: String,
    pub wall_seconds: f64,
    pub nodes_expanded: u64,
    pub objective: f64,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("instance {instance_id}: {a} reports {obj_a}, {b} reports {obj_b}")]
    Mismatch { instance_id: usize, a: &'static str, obj_a: f64, b: &'static str, obj_b: f64 },
    #[error("instance {instance_id}: {source}")]
    Oracle { instance_id: usize, source: OracleError },
    #[error("hybrid rows need both topo and astar measurements")]
    HybridNeedsBoth,
    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// `|a - b| <= tol * max(1, |a|, |b|)`.
pub fn objectives_agree(a: f64, b: f64) -> bool {
    (a - b).abs() <= MISMATCH_TOLERANCE * 1f64.max(a.abs()).max(b.abs())
}

/// Worker count from [`WORKERS_ENV`], if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok()?.trim().parse().ok().filter(|&w| w > 0)
}

fn run_one(id: usize, inst: &TripInstance<f64>, solvers: &[BenchSolver], options: &AstarOptions<f64>) -> Result<Vec<BenchRow>, BenchError> {
    let mut rows = Vec::with_capacity(solvers.len());
    for &solver in solvers {
        let sol = match solver {
            BenchSolver::Topo => solve_topo(inst),
            BenchSolver::Astar => solve_astar(inst, options),
            BenchSolver::Oracle => solve_bruteforce(inst, DEFAULT_ENUMERATION_CAP)
                .map_err(|source| BenchError::Oracle { instance_id: id, source })?,
        };
        rows.push(BenchRow {
            instance_id: id,
            n: inst.n(),
            delta: inst.delta(),
            alpha: inst.alpha(),
            solver: solver.name().to_string(),
            wall_seconds: sol.stats.wall_seconds,
            nodes_expanded: sol.stats.nodes_expanded,
            objective: sol.objective,
        });
    }
    for (i, a) in rows.iter().enumerate() {
        for (j, b) in rows.iter().enumerate().skip(i + 1) {
            if !objectives_agree(a.objective, b.objective) {
                return Err(BenchError::Mismatch {
                    instance_id: id,
                    a: solvers[i].name(),
                    obj_a: a.objective,
                    b: solvers[j].name(),
                    obj_b: b.objective,
                });
            }
        }
    }
    Ok(rows)
}

/// Solves every instance with every solver, one instance per worker at a
/// time. Rows come back ordered by instance, then solver.
pub fn replay(
    instances: &[TripInstance<f64>],
    solvers: &[BenchSolver],
    options: &AstarOptions<f64>,
    workers: Option<usize>,
) -> Result<Vec<BenchRow>, BenchError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w);
    }
    let pool = builder.build()?;
    let per_instance: Result<Vec<Vec<BenchRow>>, BenchError> = pool.install(|| {
        instances.par_iter().enumerate().map(|(id, inst)| run_one(id, inst, solvers, options)).collect()
    });
    Ok(per_instance?.into_iter().flatten().collect())
}

/// One `hybrid` row per instance: the topo measurement when `delta` is
/// below `delta_d`, the A* one otherwise.
pub fn hybrid_rows(rows: &[BenchRow], delta_d: u64) -> Result<Vec<BenchRow>, BenchError> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let id = rows[i].instance_id;
        let group: Vec<&BenchRow> = rows[i..].iter().take_while(|r| r.instance_id == id).collect();
        i += group.len();
        let want = if group[0].delta < delta_d { "topo" } else { "astar" };
        let pick = group.iter().find(|r| r.solver == want).ok_or(BenchError::HybridNeedsBoth)?;
        out.push(BenchRow { solver: format!("hybrid:{delta_d}"), ..(*pick).clone() });
    }
    Ok(out)
}

/// Total wall time per solver name, in first-seen order.
pub fn cumulative_seconds(rows: &[BenchRow]) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(s, _)| *s == r.solver) {
            Some((_, t)) => *t += r.wall_seconds,
            None => out.push((r.solver.clone(), r.wall_seconds)),
        }
    }
    out
}

pub fn write_csv(rows: &[BenchRow], out: impl Write) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
