//! Exact solver sweeping the layered graph in topological order.
//!
//! Costs live in two rolling tables of `(delta + 1) |Ξ|` states. For path
//! recovery only the predecessor's value index is kept per state, since the
//! predecessor's capacity follows from the capacity recursion.

use std::time::Instant;

use crate::instance::{SolveStats, Solution, TripInstance};
use crate::scalar::Scalar;

const NO_PRED: u32 = u32::MAX;

/// Globally optimal step by dynamic programming over all reachable states.
///
/// Among minimum-cost states of the last layer the one with the largest
/// remaining capacity wins, then the smallest value index; predecessors tie
/// towards the smallest value index.
pub fn solve_topo<S: Scalar>(inst: &TripInstance<S>) -> Solution<S> {
    let start = Instant::now();
    let inst = inst.clamp_delta();
    let n = inst.n();
    let m = inst.m();
    let delta = inst.delta() as usize;
    let width = (delta + 1) * m;
    let inf = S::infinity();
    let xi = inst.xi();
    let alpha = inst.alpha();

    let mut jump = vec![S::zero(); m * m];
    for ju in 0..m {
        for jv in 0..m {
            jump[ju * m + jv] = alpha * S::from_int((xi[jv] - xi[ju]).abs());
        }
    }

    let mut cur = vec![inf; width];
    let mut next = vec![inf; width];
    let mut pred = vec![NO_PRED; n * width];
    let mut processed: u64 = 2; // source and sink
    let mut relaxed: u64 = 0;

    for j in 0..m {
        let step = inst.step_for(0, j);
        let cons = inst.gamma()[0] as usize * step.unsigned_abs() as usize;
        if cons <= delta {
            relaxed += 1;
            cur[(delta - cons) * m + j] = inst.c()[0] * S::from_int(step);
        }
    }

    let mut lin = vec![S::zero(); m];
    let mut cons = vec![0usize; m];
    for i in 1..n {
        for jv in 0..m {
            let step = inst.step_for(i, jv);
            lin[jv] = inst.c()[i] * S::from_int(step);
            cons[jv] = inst.gamma()[i] as usize * step.unsigned_abs() as usize;
        }
        next.fill(inf);
        let pred_layer = &mut pred[i * width..(i + 1) * width];
        for cap in 0..=delta {
            for ju in 0..m {
                let g = cur[cap * m + ju];
                if g == inf {
                    continue;
                }
                processed += 1;
                let jrow = &jump[ju * m..(ju + 1) * m];
                for jv in 0..m {
                    if cons[jv] > cap {
                        continue;
                    }
                    relaxed += 1;
                    let cand = g + lin[jv] + jrow[jv];
                    let idx = (cap - cons[jv]) * m + jv;
                    if cand < next[idx] {
                        next[idx] = cand;
                        pred_layer[idx] = ju as u32;
                    }
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }

    let mut best = (inf, 0usize, 0usize);
    for cap in (0..=delta).rev() {
        for j in 0..m {
            let g = cur[cap * m + j];
            if g == inf {
                continue;
            }
            processed += 1;
            relaxed += 1;
            if g < best.0 {
                best = (g, cap, j);
            }
        }
    }

    let (_, mut cap, mut j) = best;
    let mut d = vec![0i64; n];
    for i in (0..n).rev() {
        let step = inst.step_for(i, j);
        d[i] = step;
        if i > 0 {
            let pj = pred[i * width + cap * m + j];
            debug_assert_ne!(pj, NO_PRED);
            cap += inst.gamma()[i] as usize * step.unsigned_abs() as usize;
            j = pj as usize;
        }
    }

    let stats = SolveStats {
        nodes_expanded: processed,
        nodes_generated: relaxed,
        wall_seconds: start.elapsed().as_secs_f64(),
        ..SolveStats::default()
    };
    inst.solution(d, stats).expect("step has instance length")
}
