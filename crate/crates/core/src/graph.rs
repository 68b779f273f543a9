//! Implicit layered graph of the program and its capacity-free quotient.
//!
//! Layer `i` (1-based) holds one node per admissible step on interval `i`
//! and per remaining capacity. Edges only join consecutive layers, so every
//! source-sink path has exactly `n` interior nodes and spells out a step
//! vector. Nodes are never stored unless [`build_explicit`] is asked to.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::instance::{StepVector, TripInstance};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("broken path at position {position}: {reason}")]
    BrokenPath { position: usize, reason: &'static str },
    #[error("explicit graph would hold up to {required} states, above the cap of {cap}")]
    CapExceeded { required: u128, cap: u128 },
    #[error("step vector is not feasible for the instance")]
    Infeasible,
}

/// Node of the layered graph: layer, chosen value and remaining capacity.
///
/// The source is `(0, 0, delta)` and the sink `(n + 1, 0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeRef {
    pub layer: u32,
    pub value_index: u32,
    pub capacity: u64,
}

impl NodeRef {
    pub fn source<S: Scalar>(inst: &TripInstance<S>) -> Self {
        NodeRef { layer: 0, value_index: 0, capacity: inst.delta() }
    }

    pub fn sink<S: Scalar>(inst: &TripInstance<S>) -> Self {
        NodeRef { layer: inst.n() as u32 + 1, value_index: 0, capacity: 0 }
    }

    pub fn is_source(&self) -> bool {
        self.layer == 0
    }

    pub fn is_sink<S: Scalar>(&self, inst: &TripInstance<S>) -> bool {
        self.layer as usize == inst.n() + 1
    }

    /// Step `xi_j - x_layer` this node stands for; zero at source and sink.
    #[inline]
    pub fn step<S: Scalar>(&self, inst: &TripInstance<S>) -> i64 {
        let l = self.layer as usize;
        if l == 0 || l > inst.n() {
            0
        } else {
            inst.step_for(l - 1, self.value_index as usize)
        }
    }

    pub fn class(&self) -> QNodeRef {
        QNodeRef { layer: self.layer, value_index: self.value_index }
    }

    /// Dense integer key, unique per instance.
    #[inline]
    pub fn pack<S: Scalar>(&self, inst: &TripInstance<S>) -> u64 {
        (self.layer as u64 * inst.m() as u64 + self.value_index as u64) * (inst.delta() + 1)
            + self.capacity
    }

    #[inline]
    pub fn unpack<S: Scalar>(key: u64, inst: &TripInstance<S>) -> Self {
        let width = inst.delta() + 1;
        let capacity = key % width;
        let rest = key / width;
        let m = inst.m() as u64;
        NodeRef { layer: (rest / m) as u32, value_index: (rest % m) as u32, capacity }
    }

    fn label<S: Scalar>(&self, inst: &TripInstance<S>) -> String {
        if self.is_source() {
            "s".into()
        } else if self.is_sink(inst) {
            "t".into()
        } else {
            format!("{}:{}:{}", self.layer, self.step(inst), self.capacity)
        }
    }
}

/// Node of the quotient graph: a layer and a chosen value, capacity dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QNodeRef {
    pub layer: u32,
    pub value_index: u32,
}

impl QNodeRef {
    pub fn step<S: Scalar>(&self, inst: &TripInstance<S>) -> i64 {
        NodeRef { layer: self.layer, value_index: self.value_index, capacity: 0 }.step(inst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge<S, N> {
    pub to: N,
    pub weight: S,
    pub consumption: u64,
}

/// Weight of an edge leaving layer `layer_u` with step `step_u` towards a
/// node with step `step_v`. Sink edges weigh zero, source edges carry only
/// the linear term.
#[inline]
pub fn edge_weight<S: Scalar>(inst: &TripInstance<S>, layer_u: usize, step_u: i64, step_v: i64) -> S {
    let n = inst.n();
    if layer_u >= n {
        return S::zero();
    }
    let lin = inst.c()[layer_u] * S::from_int(step_v);
    if layer_u == 0 {
        return lin;
    }
    let x = inst.x();
    let jump = (x[layer_u] - x[layer_u - 1] + step_v - step_u).abs();
    lin + inst.alpha() * S::from_int(jump)
}

/// Out-edges of `node` in the layered graph.
pub fn successors<'a, S: Scalar>(inst: &'a TripInstance<S>, node: NodeRef) -> Successors<'a, S> {
    Successors { inst, from: node, from_step: node.step(inst), next: 0 }
}

pub struct Successors<'a, S> {
    inst: &'a TripInstance<S>,
    from: NodeRef,
    from_step: i64,
    next: usize,
}

impl<S: Scalar> Iterator for Successors<'_, S> {
    type Item = Edge<S, NodeRef>;

    fn next(&mut self) -> Option<Self::Item> {
        let inst = self.inst;
        let n = inst.n();
        let layer = self.from.layer as usize;
        if layer > n {
            return None;
        }
        if layer == n {
            if self.next > 0 {
                return None;
            }
            self.next = 1;
            return Some(Edge { to: NodeRef::sink(inst), weight: S::zero(), consumption: 0 });
        }
        while self.next < inst.m() {
            let j = self.next;
            self.next += 1;
            let step = inst.step_for(layer, j);
            let consumption = inst.gamma()[layer] * step.unsigned_abs();
            if consumption <= self.from.capacity {
                return Some(Edge {
                    to: NodeRef {
                        layer: layer as u32 + 1,
                        value_index: j as u32,
                        capacity: self.from.capacity - consumption,
                    },
                    weight: edge_weight(inst, layer, self.from_step, step),
                    consumption,
                });
            }
        }
        None
    }
}

/// Out-edges of `qnode` in the quotient graph; capacity is not checked.
pub fn q_successors<S: Scalar>(inst: &TripInstance<S>, qnode: QNodeRef) -> Vec<Edge<S, QNodeRef>> {
    let n = inst.n();
    let layer = qnode.layer as usize;
    if layer > n {
        return Vec::new();
    }
    if layer == n {
        let sink = QNodeRef { layer: n as u32 + 1, value_index: 0 };
        return vec![Edge { to: sink, weight: S::zero(), consumption: 0 }];
    }
    let from_step = qnode.step(inst);
    (0..inst.m())
        .map(|j| {
            let step = inst.step_for(layer, j);
            Edge {
                to: QNodeRef { layer: layer as u32 + 1, value_index: j as u32 },
                weight: edge_weight(inst, layer, from_step, step),
                consumption: inst.gamma()[layer] * step.unsigned_abs(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitEdge<S> {
    pub from: usize,
    pub to: usize,
    pub weight: S,
    pub consumption: u64,
}

/// Materialized graph holding exactly the nodes reachable from the source.
#[derive(Debug, Clone)]
pub struct ExplicitGraph<S> {
    pub nodes: Vec<NodeRef>,
    pub edges: Vec<ExplicitEdge<S>>,
    pub index: HashMap<NodeRef, usize>,
}

pub const DEFAULT_EXPLICIT_CAP: u128 = 5_000_000;

/// Materializes the layered graph. Refuses when `n (delta + 1) |Ξ|`
/// exceeds `cap`.
pub fn build_explicit<S: Scalar>(inst: &TripInstance<S>, cap: u128) -> Result<ExplicitGraph<S>, GraphError> {
    let required = inst.n() as u128 * (inst.delta() as u128 + 1) * inst.m() as u128;
    if required > cap {
        return Err(GraphError::CapExceeded { required, cap });
    }
    let mut nodes = Vec::new();
    let mut index = HashMap::new();
    let mut edges = Vec::new();
    let source = NodeRef::source(inst);
    index.insert(source, 0);
    nodes.push(source);
    let mut frontier = vec![source];
    while !frontier.is_empty() {
        let mut next = BTreeSet::new();
        for u in &frontier {
            let ui = index[u];
            for e in successors(inst, *u) {
                let vi = *index.entry(e.to).or_insert_with(|| {
                    nodes.push(e.to);
                    nodes.len() - 1
                });
                edges.push(ExplicitEdge { from: ui, to: vi, weight: e.weight, consumption: e.consumption });
                next.insert(e.to);
            }
        }
        frontier = next.into_iter().collect();
    }
    Ok(ExplicitGraph { nodes, edges, index })
}

impl<S: Scalar> ExplicitGraph<S> {
    /// Upper bound on the node count: `n (delta + 1) |Ξ| + 2`.
    pub fn node_bound(inst: &TripInstance<S>) -> u128 {
        inst.n() as u128 * (inst.delta() as u128 + 1) * inst.m() as u128 + 2
    }

    /// Upper bound on the edge count: `|Ξ|^2 n (delta + 1) + |Ξ| + (delta + 1) |Ξ|`.
    pub fn edge_bound(inst: &TripInstance<S>) -> u128 {
        let m = inst.m() as u128;
        let w = inst.delta() as u128 + 1;
        m * m * inst.n() as u128 * w + m + w * m
    }

    /// One `u v weight consumption` line per edge; nodes are written as
    /// `s`, `t` or `layer:step:capacity`.
    pub fn write_edge_list(&self, inst: &TripInstance<S>) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let _ = writeln!(
                out,
                "{} {} {} {}",
                self.nodes[e.from].label(inst),
                self.nodes[e.to].label(inst),
                e.weight,
                e.consumption
            );
        }
        out
    }
}

/// Reads the step vector off a source-sink path, checking every edge.
pub fn path_to_step<S: Scalar>(inst: &TripInstance<S>, path: &[NodeRef]) -> Result<StepVector, GraphError> {
    let n = inst.n();
    if path.len() != n + 2 {
        return Err(GraphError::BrokenPath { position: path.len(), reason: "wrong length" });
    }
    if path[0] != NodeRef::source(inst) {
        return Err(GraphError::BrokenPath { position: 0, reason: "does not start at the source" });
    }
    if path[n + 1] != NodeRef::sink(inst) {
        return Err(GraphError::BrokenPath { position: n + 1, reason: "does not end at the sink" });
    }
    let mut d = Vec::with_capacity(n);
    for k in 1..=n {
        let (u, v) = (path[k - 1], path[k]);
        if v.layer as usize != k {
            return Err(GraphError::BrokenPath { position: k, reason: "layer out of order" });
        }
        if v.value_index as usize >= inst.m() {
            return Err(GraphError::BrokenPath { position: k, reason: "value index out of range" });
        }
        let step = v.step(inst);
        let use_ = inst.gamma()[k - 1] * step.unsigned_abs();
        if use_ > u.capacity || u.capacity - use_ != v.capacity {
            return Err(GraphError::BrokenPath { position: k, reason: "capacity does not match" });
        }
        d.push(step);
    }
    Ok(StepVector(d))
}

/// The unique path encoding a feasible step vector.
pub fn step_to_path<S: Scalar>(inst: &TripInstance<S>, d: &[i64]) -> Result<Vec<NodeRef>, GraphError> {
    if !inst.is_feasible(d) {
        return Err(GraphError::Infeasible);
    }
    let mut path = Vec::with_capacity(inst.n() + 2);
    let mut cap = inst.delta();
    path.push(NodeRef::source(inst));
    for (i, &di) in d.iter().enumerate() {
        let j = inst.xi().binary_search(&(inst.x()[i] + di)).expect("feasible step");
        cap -= inst.gamma()[i] * di.unsigned_abs();
        path.push(NodeRef { layer: i as u32 + 1, value_index: j as u32, capacity: cap });
    }
    path.push(NodeRef::sink(inst));
    Ok(path)
}

/// Sum of edge weights along consecutive nodes of `path`.
pub fn path_weight<S: Scalar>(inst: &TripInstance<S>, path: &[NodeRef]) -> S {
    path.windows(2)
        .map(|w| edge_weight(inst, w[0].layer as usize, w[0].step(inst), w[1].step(inst)))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    const C1: f64 = 0.7;
    const C2: f64 = -0.4;
    const ALPHA: f64 = 0.25;

    fn fig1() -> TripInstance<f64> {
        TripInstance::new(vec![C1, C2], ALPHA, 2, vec![0, 1], vec![0, 0], vec![1, 1]).unwrap()
    }

    fn node(layer: u32, value_index: u32, capacity: u64) -> NodeRef {
        NodeRef { layer, value_index, capacity }
    }

    #[test]
    fn figure_edge_weights() {
        let inst = fig1();
        assert_eq!(edge_weight(&inst, 0, 0, 0), 0.0);
        assert_eq!(edge_weight(&inst, 0, 0, 1), C1);
        assert_eq!(edge_weight(&inst, 1, 0, 1), C2 + ALPHA);
        // equal steps on equal controls: no jump term
        assert_eq!(edge_weight(&inst, 1, 1, 1), C2);
        assert_eq!(edge_weight(&inst, 2, 1, 0), 0.0);
    }

    #[test]
    fn source_has_two_successors() {
        let inst = fig1();
        let succ: Vec<_> = successors(&inst, NodeRef::source(&inst)).map(|e| e.to).collect();
        assert_eq!(succ, vec![node(1, 0, 2), node(1, 1, 1)]);
    }

    #[test]
    fn successors_of_a_moved_node() {
        let inst = fig1();
        let succ: Vec<_> = successors(&inst, node(1, 1, 1)).collect();
        assert_eq!(succ.len(), 2);
        assert_eq!(succ[0].to, node(2, 0, 1));
        assert_eq!(succ[1].to, node(2, 1, 0));
        // weights follow the edge formula: jump back costs alpha, staying costs c_2
        assert_eq!(succ[0].weight, ALPHA);
        assert_eq!(succ[1].weight, C2);
        assert_eq!(succ[1].consumption, 1);
    }

    #[test]
    fn zero_capacity_keeps_only_the_zero_step() {
        let inst = TripInstance::new(vec![0.0; 3], 1.0, 3, vec![-1, 0, 1], vec![0; 3], vec![1; 3]).unwrap();
        let succ: Vec<_> = successors(&inst, node(1, 2, 0)).collect();
        assert_eq!(succ.len(), 1);
        assert_eq!(succ[0].to, node(2, 1, 0));
    }

    #[test]
    fn last_layer_goes_to_sink() {
        let inst = fig1();
        let succ: Vec<_> = successors(&inst, node(2, 1, 0)).collect();
        assert_eq!(succ.len(), 1);
        assert_eq!(succ[0].to, NodeRef::sink(&inst));
        assert_eq!(succ[0].weight, 0.0);
        assert_eq!(successors(&inst, NodeRef::sink(&inst)).count(), 0);
    }

    #[test]
    fn quotient_successors() {
        let inst = fig1();
        let q = q_successors(&inst, QNodeRef { layer: 1, value_index: 0 });
        assert_eq!(q.len(), 2);
        assert_eq!(q.iter().map(|e| e.consumption).collect::<Vec<_>>(), vec![0, 1]);
        let last = q_successors(&inst, QNodeRef { layer: 2, value_index: 1 });
        assert_eq!(last.len(), 1);
        assert_eq!((last[0].weight, last[0].consumption), (0.0, 0));

        let g3 = TripInstance::new(vec![0.0; 2], 1.0, 0, vec![0, 1], vec![0, 0], vec![1, 3]).unwrap();
        let q = q_successors(&g3, QNodeRef { layer: 1, value_index: 1 });
        assert_eq!(q.iter().map(|e| e.consumption).collect::<Vec<_>>(), vec![0, 3]);
    }

    #[test]
    fn pack_round_trip() {
        let inst = fig1();
        for v in [NodeRef::source(&inst), node(1, 1, 1), node(2, 0, 2), NodeRef::sink(&inst)] {
            assert_eq!(NodeRef::unpack(v.pack(&inst), &inst), v);
        }
    }

    #[test]
    fn explicit_figure_graph() {
        let inst = fig1();
        let g = build_explicit(&inst, DEFAULT_EXPLICIT_CAP).unwrap();
        assert!(g.nodes.len() as u128 <= ExplicitGraph::node_bound(&inst));
        assert_eq!(ExplicitGraph::<f64>::node_bound(&inst), 14);
        // s, (1,0,2), (1,1,1), (2,0,2), (2,1,1), (2,0,1), (2,1,0), t
        assert_eq!(g.nodes.len(), 8);
        let text = g.write_edge_list(&inst);
        assert!(text.lines().any(|l| l == format!("s 1:1:1 {C1} 1")));
    }

    #[test]
    fn zero_radius_graph_is_a_chain() {
        let inst = TripInstance::new(vec![1.0; 5], 1.0, 0, vec![0, 1, 2], vec![0, 1, 2, 1, 0], vec![2; 5]).unwrap();
        let g = build_explicit(&inst, DEFAULT_EXPLICIT_CAP).unwrap();
        assert_eq!(g.nodes.len(), 5 + 2);
        assert_eq!(g.edges.len(), 6);
    }

    #[test]
    fn explicit_counts_match_prefix_enumeration() {
        let inst = TripInstance::new(vec![0.0; 3], 1.0, 2, vec![0, 1], vec![0; 3], vec![1; 3]).unwrap();
        let g = build_explicit(&inst, DEFAULT_EXPLICIT_CAP).unwrap();
        // distinct (layer, d_i, remaining) over all feasible prefixes
        let mut states = BTreeSet::new();
        let mut edges = 0;
        for len in 1..=3u32 {
            for bits in 0..(1u32 << len) {
                let used = bits.count_ones() as u64;
                if used <= 2 {
                    states.insert((len, bits >> (len - 1) & 1, 2 - used));
                }
            }
        }
        for &(layer, _, rem) in &states {
            edges += if layer == 3 { 1 } else if rem > 0 { 2 } else { 1 };
        }
        edges += 2; // source edges
        assert_eq!(g.nodes.len(), states.len() + 2);
        assert_eq!(g.edges.len(), edges);
    }

    #[test]
    fn cap_is_enforced() {
        let inst = fig1();
        assert!(matches!(build_explicit(&inst, 5), Err(GraphError::CapExceeded { .. })));
    }

    #[test]
    fn path_conversion() {
        let inst = fig1();
        let p = vec![NodeRef::source(&inst), node(1, 1, 1), node(2, 0, 1), NodeRef::sink(&inst)];
        let d = path_to_step(&inst, &p).unwrap();
        assert_eq!(d.0, vec![1, 0]);
        assert!((path_weight(&inst, &p) - inst.objective(&d).unwrap()).abs() < 1e-15);
        assert!((path_weight(&inst, &p) - (C1 + ALPHA)).abs() < 1e-15);
        assert_eq!(step_to_path(&inst, &d).unwrap(), p);

        let zero = step_to_path(&inst, &[0, 0]).unwrap();
        assert_eq!(path_weight(&inst, &zero), 0.0);

        let mut broken = p.clone();
        broken[2] = node(2, 0, 2);
        assert!(path_to_step(&inst, &broken).is_err());
        assert!(path_to_step(&inst, &p[..3]).is_err());
    }
}
