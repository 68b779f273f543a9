//! A* on the implicit layered graph, guided by the Lagrangian heuristic.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use rustc_hash::{FxHashMap, FxHashSet};

use crate::graph::{successors, NodeRef};
use crate::instance::{SolveStats, Solution, TripInstance};
use crate::lagrange::{binary_search, LagrangeTables};
use crate::scalar::Scalar;

/// Slack applied wherever a pruning rule rests on a strict inequality.
const PRUNE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AstarOptions<S> {
    /// Skip edges that can be replaced by a zero step at no loss.
    pub edge_pruning: bool,
    /// Discard nodes whose `g + h` exceeds the best known feasible cost.
    pub upper_bound_pruning: bool,
    /// Skip nodes beaten by an expanded node of the same class holding at
    /// least as much capacity at no higher cost.
    pub node_dominance: bool,
    /// Bisection tolerance of the multiplier search; `None` picks
    /// `1e-6 (1 + max|c|)`.
    pub epsilon: Option<S>,
}

impl<S> Default for AstarOptions<S> {
    fn default() -> Self {
        AstarOptions { edge_pruning: true, upper_bound_pruning: true, node_dominance: false, epsilon: None }
    }
}

impl<S: Scalar> AstarOptions<S> {
    pub fn epsilon_for(&self, inst: &TripInstance<S>) -> S {
        self.epsilon.unwrap_or_else(|| S::lit(1e-6) * (S::one() + inst.c_max()))
    }
}

/// Search diagnostics beyond the counters in [`SolveStats`].
#[derive(Debug, Clone, Default)]
pub struct AstarTrace {
    /// Nodes in the order they were expanded.
    pub expanded: Vec<NodeRef>,
    /// Edges that would have lowered `g` of an already expanded node. Zero
    /// for a consistent heuristic.
    pub closed_improvements: u64,
    pub pruned_edges: u64,
    pub pruned_by_bound: u64,
    pub pruned_by_dominance: u64,
}

/// `c_{i+1} dv + alpha |x_{i+1} + dv - x_i - du| - alpha |x_{i+1} - x_i - du| > alpha |dv|`
/// for the edge from layer `layer` to `layer + 1`, `1 <= layer <= n - 1`.
///
/// Such an edge is never on an optimal path: switching to `dv = 0` saves
/// more on this edge than it can cost on the next one.
pub fn edge_dominated<S: Scalar>(inst: &TripInstance<S>, layer: usize, step_u: i64, step_v: i64) -> bool {
    edge_dominance_margin(inst, layer, step_u, step_v) > S::zero()
}

#[inline]
fn edge_dominance_margin<S: Scalar>(inst: &TripInstance<S>, layer: usize, step_u: i64, step_v: i64) -> S {
    if step_v == 0 {
        return S::zero();
    }
    let x = inst.x();
    let alpha = inst.alpha();
    let base = x[layer] - x[layer - 1] - step_u;
    let lhs = inst.c()[layer] * S::from_int(step_v) + alpha * S::from_int((base + step_v).abs())
        - alpha * S::from_int(base.abs());
    lhs - alpha * S::from_int(step_v.abs())
}

#[derive(Debug, Clone, Copy)]
struct QueueEntry<S> {
    f: S,
    g: S,
    node: NodeRef,
}

impl<S: Scalar> QueueEntry<S> {
    /// Expansion priority: `f` ascending, capacity descending, layer
    /// descending, value index ascending. `Less` means expanded first.
    fn priority(&self, other: &Self) -> Ordering {
        self.f
            .partial_cmp(&other.f)
            .unwrap_or(Ordering::Equal)
            .then(other.node.capacity.cmp(&self.node.capacity))
            .then(other.node.layer.cmp(&self.node.layer))
            .then(self.node.value_index.cmp(&other.node.value_index))
    }
}

impl<S: Scalar> PartialEq for QueueEntry<S> {
    fn eq(&self, other: &Self) -> bool {
        self.priority(other) == Ordering::Equal
    }
}

impl<S: Scalar> Eq for QueueEntry<S> {}

impl<S: Scalar> PartialOrd for QueueEntry<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<S: Scalar> Ord for QueueEntry<S> {
    // max-heap: the entry to expand first compares greatest
    fn cmp(&self, other: &Self) -> Ordering {
        other.priority(self)
    }
}

/// Globally optimal step via multiplier search followed by A*.
pub fn solve_astar<S: Scalar>(inst: &TripInstance<S>, options: &AstarOptions<S>) -> Solution<S> {
    solve_astar_traced(inst, options).0
}

/// As [`solve_astar`], also returning the search trace.
pub fn solve_astar_traced<S: Scalar>(inst: &TripInstance<S>, options: &AstarOptions<S>) -> (Solution<S>, AstarTrace) {
    let start = Instant::now();
    let inst = inst.clamp_delta();
    let tables = binary_search(&inst, options.epsilon_for(&inst));
    let mut trace = AstarTrace::default();
    if let Some(mut sol) = tables.early_exit.clone() {
        sol.stats.wall_seconds = start.elapsed().as_secs_f64();
        return (sol, trace);
    }
    let (d, mut stats) = search(&inst, &tables, options, &mut trace);
    stats.preprocessing_iterations = tables.evaluations;
    stats.wall_seconds = start.elapsed().as_secs_f64();
    (inst.solution(d, stats).expect("step has instance length"), trace)
}

/// A* proper, given finished multiplier tables.
pub fn search<S: Scalar>(
    inst: &TripInstance<S>,
    tables: &LagrangeTables<S>,
    options: &AstarOptions<S>,
    trace: &mut AstarTrace,
) -> (Vec<i64>, SolveStats) {
    let n = inst.n();
    let slack = S::lit(PRUNE_SLACK);
    let heuristic = tables.heuristic(inst);
    let sink = NodeRef::sink(inst);
    let sink_key = sink.pack(inst);

    let mut upper = tables.upper_bound;
    // best feasible completion seen: prefix end and table index of the suffix
    let mut concat: Option<(u64, usize)> = None;

    let mut best: FxHashMap<u64, (S, u64)> = FxHashMap::default();
    let mut closed: FxHashSet<u64> = FxHashSet::default();
    let mut expanded_by_class: FxHashMap<(u32, u32), Vec<(u64, S)>> = FxHashMap::default();
    let mut open = BinaryHeap::new();
    let mut stats = SolveStats::default();

    let source = NodeRef::source(inst);
    let source_key = source.pack(inst);
    best.insert(source_key, (S::zero(), u64::MAX));
    open.push(QueueEntry { f: heuristic.value(source), g: S::zero(), node: source });
    stats.nodes_generated += 1;

    let mut reached = false;
    while let Some(QueueEntry { g, node, .. }) = open.pop() {
        let key = node.pack(inst);
        if closed.contains(&key) || best.get(&key).is_some_and(|&(bg, _)| g > bg) {
            continue;
        }
        if options.node_dominance && !node.is_source() && node.layer as usize <= n {
            let list = expanded_by_class.entry((node.layer, node.value_index)).or_default();
            if list.iter().any(|&(cap, bg)| cap >= node.capacity && bg <= g) {
                trace.pruned_by_dominance += 1;
                closed.insert(key);
                continue;
            }
            list.push((node.capacity, g));
        }
        closed.insert(key);
        stats.nodes_expanded += 1;
        trace.expanded.push(node);
        if key == sink_key {
            reached = true;
            break;
        }

        let layer = node.layer as usize;
        let step_u = node.step(inst);
        for edge in successors(inst, node) {
            let v = edge.to;
            let vlayer = v.layer as usize;
            if options.edge_pruning && (1..n).contains(&layer) {
                let margin = edge_dominance_margin(inst, layer, step_u, v.step(inst));
                if margin > slack {
                    trace.pruned_edges += 1;
                    continue;
                }
            }
            let gv = g + edge.weight;
            let vkey = v.pack(inst);
            if closed.contains(&vkey) {
                if best.get(&vkey).is_some_and(|&(bg, _)| gv < bg - slack) {
                    trace.closed_improvements += 1;
                }
                continue;
            }
            if best.get(&vkey).is_some_and(|&(bg, _)| gv >= bg) {
                continue;
            }
            let (h, suffix) = heuristic.evaluate(v);
            let f = gv + h;
            if options.upper_bound_pruning {
                if f > upper + slack {
                    trace.pruned_by_bound += 1;
                    continue;
                }
                if let Some((s, t)) = suffix {
                    if vlayer <= n && gv + s < upper {
                        upper = gv + s;
                        concat = Some((vkey, t));
                    }
                }
            }
            best.insert(vkey, (gv, key));
            open.push(QueueEntry { f, g: gv, node: v });
            stats.nodes_generated += 1;
        }
    }

    let d = if reached {
        walk_back(inst, &best, sink_key, source_key)
    } else if let Some((vkey, t)) = concat {
        // every path was cut by a bound it could not beat; the stored
        // completion attains that bound
        let mut d = walk_back(inst, &best, vkey, source_key);
        let v = NodeRef::unpack(vkey, inst);
        d.extend(tables.tables[t].suffix(inst, v.layer as usize, v.value_index as usize));
        d
    } else {
        tables.incumbent.clone()
    };
    (d, stats)
}

/// Steps along the predecessor chain from `key` back to the source.
fn walk_back<S: Scalar>(inst: &TripInstance<S>, best: &FxHashMap<u64, (S, u64)>, key: u64, source_key: u64) -> Vec<i64> {
    let mut d = Vec::with_capacity(inst.n());
    let mut k = key;
    while k != source_key {
        let node = NodeRef::unpack(k, inst);
        if (1..=inst.n()).contains(&(node.layer as usize)) {
            d.push(node.step(inst));
        }
        k = best[&k].1;
    }
    d.reverse();
    d
}
