//! Lagrangian relaxation of the budget constraint.
//!
//! Pricing each unit of resource at `lambda` turns the constrained problem
//! into an unconstrained shortest path on the quotient graph, solvable by a
//! backward sweep. A bisection on `lambda` then brackets an optimal
//! multiplier. Every table computed along the way is kept: together they
//! give lower bounds on the cost to go from any node, which is the A*
//! heuristic, plus feasible paths that serve as upper bounds.

use std::fmt::Write as _;

use crate::graph::NodeRef;
use crate::instance::{SolveStats, Solution, TripInstance};
use crate::scalar::Scalar;

/// Costs to the sink in the quotient graph with edge weights raised by
/// `lambda` times their resource consumption.
///
/// Per class the table stores the minimum relaxed cost, the smallest
/// resource among paths attaining it, and the next value on such a path.
#[derive(Debug, Clone)]
pub struct ZetaTable<S> {
    pub lambda: S,
    m: usize,
    cost: Vec<S>,
    resource: Vec<u64>,
    next: Vec<u32>,
    pub source_cost: S,
    pub source_resource: u64,
    source_next: u32,
}

impl<S: Scalar> ZetaTable<S> {
    /// Relaxed cost to the sink from class `(layer, j)`, `layer` in `1..=n`.
    #[inline]
    pub fn cost(&self, layer: usize, j: usize) -> S {
        self.cost[(layer - 1) * self.m + j]
    }

    #[inline]
    pub fn resource(&self, layer: usize, j: usize) -> u64 {
        self.resource[(layer - 1) * self.m + j]
    }

    /// `LR(s, t, delta, lambda)`: relaxed optimum minus the priced budget.
    pub fn dual_value(&self, delta: u64) -> S {
        self.source_cost - self.lambda * S::from_uint(delta)
    }

    /// Step vector of the stored minimum-cost, minimum-resource path from
    /// the source.
    pub fn path(&self, inst: &TripInstance<S>) -> Vec<i64> {
        let n = inst.n();
        let mut d = Vec::with_capacity(n);
        let mut j = self.source_next as usize;
        for layer in 1..=n {
            d.push(inst.step_for(layer - 1, j));
            if layer < n {
                j = self.next[(layer - 1) * self.m + j] as usize;
            }
        }
        d
    }

    /// Steps on intervals `layer + 1..=n` of the stored path leaving class
    /// `(layer, j)`.
    pub fn suffix(&self, inst: &TripInstance<S>, layer: usize, j: usize) -> Vec<i64> {
        let n = inst.n();
        let mut d = Vec::with_capacity(n - layer);
        let mut j = j;
        for l in layer..n {
            j = self.next[(l - 1) * self.m + j] as usize;
            d.push(inst.step_for(l, j));
        }
        d
    }
}

/// Bound on the rounding error of a path cost, used to recognize ties.
fn tie_tolerance<S: Scalar>(inst: &TripInstance<S>, lambda: S) -> S {
    let spread = S::from_int(inst.xi()[inst.m() - 1] - inst.xi()[0]);
    let per_layer: S = inst
        .c()
        .iter()
        .zip(inst.gamma())
        .map(|(&c, &g)| (c.abs() + lambda * S::from_uint(g) + inst.alpha()) * spread)
        .sum();
    S::lit(16.0) * S::from_uint(inst.n() as u64) * S::epsilon() * (per_layer + S::one())
}

/// Backward sweep over the quotient graph at multiplier `lambda`.
pub fn relaxed_costs_to_sink<S: Scalar>(inst: &TripInstance<S>, lambda: S) -> ZetaTable<S> {
    let n = inst.n();
    let m = inst.m();
    let xi = inst.xi();
    let alpha = inst.alpha();
    let tol = tie_tolerance(inst, lambda);
    let mut cost = vec![S::zero(); n * m];
    let mut resource = vec![0u64; n * m];
    let mut next = vec![0u32; n * m];

    let mut jump = vec![S::zero(); m * m];
    for ju in 0..m {
        for jv in 0..m {
            jump[ju * m + jv] = alpha * S::from_int((xi[jv] - xi[ju]).abs());
        }
    }
    let mut base = vec![S::zero(); m];
    let mut res_below = vec![0u64; m];
    let mut cand = vec![(S::zero(), 0u64); m];
    // layer n keeps (0, 0); fill layers n-1 down to 1
    for layer in (1..n).rev() {
        let i = layer; // 0-based interval of the next layer
        let below = layer * m;
        for jv in 0..m {
            let step = inst.step_for(i, jv);
            let cons = inst.gamma()[i] * step.unsigned_abs();
            base[jv] = inst.c()[i] * S::from_int(step) + lambda * S::from_uint(cons) + cost[below + jv];
            res_below[jv] = cons + resource[below + jv];
        }
        let here = (layer - 1) * m;
        for ju in 0..m {
            let row = &jump[ju * m..(ju + 1) * m];
            let mut best = S::infinity();
            for jv in 0..m {
                best = best.min(base[jv] + row[jv]);
            }
            let mut pick = (u64::MAX, 0usize);
            for jv in 0..m {
                if base[jv] + row[jv] <= best + tol && res_below[jv] < pick.0 {
                    pick = (res_below[jv], jv);
                }
            }
            cost[here + ju] = best;
            resource[here + ju] = pick.0;
            next[here + ju] = pick.1 as u32;
        }
    }

    for jv in 0..m {
        let step = inst.step_for(0, jv);
        let c0 = inst.gamma()[0] * step.unsigned_abs();
        let w = inst.c()[0] * S::from_int(step) + lambda * S::from_uint(c0);
        cand[jv] = (w + cost[jv], c0 + resource[jv]);
    }
    let (source_cost, source_resource, arg) = lexicographic_min(&cand, tol);
    ZetaTable {
        lambda,
        m,
        cost,
        resource,
        next,
        source_cost,
        source_resource,
        source_next: arg as u32,
    }
}

/// Exact minimum cost, plus the smallest resource (then smallest index)
/// among candidates within `tol` of it.
fn lexicographic_min<S: Scalar>(cand: &[(S, u64)], tol: S) -> (S, u64, usize) {
    let best = cand.iter().fold(S::infinity(), |a, &(c, _)| a.min(c));
    let mut pick = (u64::MAX, 0usize);
    for (j, &(c, r)) in cand.iter().enumerate() {
        if c <= best + tol && r < pick.0 {
            pick = (r, j);
        }
    }
    (best, pick.0, pick.1)
}

/// `C_lambda(d) = C(d) + lambda (sum_i gamma_i |d_i| - delta)`.
pub fn relaxed_objective<S: Scalar>(inst: &TripInstance<S>, d: &[i64], lambda: S) -> S {
    let c = inst.objective(d).expect("step length");
    let r = inst.resource(d).expect("step length");
    c + lambda * (S::from_uint(r) - S::from_uint(inst.delta()))
}

/// How one multiplier evaluation moved the bracket.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BracketMove {
    Initial,
    RaiseLower,
    LowerUpper,
    Optimal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchStep<S> {
    pub lambda: S,
    pub dual_value: S,
    pub resource: u64,
    pub action: BracketMove,
    /// Bracket after the step.
    pub lower: S,
    pub upper: S,
}

/// Everything the multiplier search produced.
#[derive(Debug, Clone)]
pub struct LagrangeTables<S> {
    /// One table per evaluated multiplier, ascending in `lambda`.
    pub tables: Vec<ZetaTable<S>>,
    /// Cost of the best feasible step seen.
    pub upper_bound: S,
    pub incumbent: Vec<i64>,
    /// Proven optimum when some relaxed path used exactly the budget, or
    /// the unrelaxed optimum already was feasible.
    pub early_exit: Option<Solution<S>>,
    pub lambda_star: S,
    /// Bisection steps, not counting the two endpoint evaluations.
    pub iterations: u64,
    pub evaluations: u64,
    pub trace: Vec<SearchStep<S>>,
}

impl<S: Scalar> LagrangeTables<S> {
    pub fn lambdas(&self) -> Vec<S> {
        self.tables.iter().map(|t| t.lambda).collect()
    }

    /// Best lower bound on the optimum, `max_lambda LR(s, t, delta, lambda)`.
    pub fn dual_bound(&self, delta: u64) -> S {
        self.tables
            .iter()
            .map(|t| t.dual_value(delta))
            .fold(S::neg_infinity(), S::max)
    }

    /// `lambda, dual_value, resource, action, lower, upper` per evaluation.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("lambda,dual_value,resource,action,lower,upper\n");
        for s in &self.trace {
            let _ = writeln!(
                out,
                "{},{},{},{:?},{},{}",
                s.lambda, s.dual_value, s.resource, s.action, s.lower, s.upper
            );
        }
        out
    }

    /// Heuristic with the tables rearranged per class for fast lookup.
    pub fn heuristic(&self, inst: &TripInstance<S>) -> Heuristic<S> {
        Heuristic::new(inst, &self.tables)
    }
}

/// Bisection for a multiplier maximizing the Lagrangian dual.
///
/// `lambda = 0` goes first: if its minimum-resource shortest path fits the
/// budget it is optimal and the search stops. Otherwise the bracket starts
/// at `[0, max|c| + 2 alpha]`, both endpoints evaluated, and is halved at
/// the midpoint until narrower than `epsilon`.
pub fn binary_search<S: Scalar>(inst: &TripInstance<S>, epsilon: S) -> LagrangeTables<S> {
    assert!(epsilon > S::zero(), "epsilon must be positive");
    let delta = inst.delta();
    let zero_step = vec![0i64; inst.n()];
    let mut out = LagrangeTables {
        tables: Vec::new(),
        upper_bound: inst.zero_step_objective(),
        incumbent: zero_step,
        early_exit: None,
        lambda_star: S::zero(),
        iterations: 0,
        evaluations: 0,
        trace: Vec::new(),
    };

    let mut lower = S::zero();
    let mut upper = inst.c_max() + S::two() * inst.alpha();

    let evaluate = |out: &mut LagrangeTables<S>, lambda: S| -> (Vec<i64>, u64, S) {
        let table = relaxed_costs_to_sink(inst, lambda);
        let d = table.path(inst);
        let r = inst.resource(&d).expect("step length");
        let dual = table.dual_value(delta);
        out.tables.push(table);
        out.evaluations += 1;
        (d, r, dual)
    };

    let finish_early = |out: &mut LagrangeTables<S>, d: Vec<i64>, lambda: S| {
        let stats = SolveStats { early_exit: true, preprocessing_iterations: out.evaluations, ..Default::default() };
        let sol = inst.solution(d.clone(), stats).expect("step length");
        out.upper_bound = sol.objective;
        out.incumbent = d;
        out.early_exit = Some(sol);
        out.lambda_star = lambda;
    };

    let (d0, r0, dual0) = evaluate(&mut out, S::zero());
    let action = if r0 <= delta { BracketMove::Optimal } else { BracketMove::Initial };
    out.trace.push(SearchStep { lambda: S::zero(), dual_value: dual0, resource: r0, action, lower, upper });
    if r0 <= delta {
        finish_early(&mut out, d0, S::zero());
        return out;
    }

    let offer = |out: &mut LagrangeTables<S>, d: Vec<i64>| {
        let c = inst.objective(&d).expect("step length");
        if c < out.upper_bound {
            out.upper_bound = c;
            out.incumbent = d;
        }
    };

    if upper > lower {
        let (du, ru, dualu) = evaluate(&mut out, upper);
        let action = if ru == delta { BracketMove::Optimal } else { BracketMove::Initial };
        out.trace.push(SearchStep { lambda: upper, dual_value: dualu, resource: ru, action, lower, upper });
        if ru == delta {
            finish_early(&mut out, du, upper);
            out.tables.sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).unwrap());
            return out;
        }
        if ru < delta {
            offer(&mut out, du);
        }
    }

    while upper - lower >= epsilon {
        let lambda = (lower + upper) / S::two();
        if lambda <= lower || lambda >= upper {
            break; // bracket below floating point resolution
        }
        out.iterations += 1;
        let (d, r, dual) = evaluate(&mut out, lambda);
        let action = if r > delta {
            lower = lambda;
            BracketMove::RaiseLower
        } else if r == delta {
            BracketMove::Optimal
        } else {
            upper = lambda;
            BracketMove::LowerUpper
        };
        out.trace.push(SearchStep { lambda, dual_value: dual, resource: r, action, lower, upper });
        if action == BracketMove::Optimal {
            finish_early(&mut out, d, lambda);
            out.tables.sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).unwrap());
            return out;
        }
        if r < delta {
            offer(&mut out, d);
        }
    }

    // both bracket ends were evaluated; report the better one
    let end_dual = |lam: S| {
        out.tables
            .iter()
            .find(|t| t.lambda == lam)
            .map(|t| t.dual_value(delta))
            .unwrap_or(S::neg_infinity())
    };
    let (dl, du) = (end_dual(lower), end_dual(upper));
    out.lambda_star = if du > dl { upper } else { lower };
    out.tables.sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).unwrap());
    out
}

/// `h_LR(v) = max over lambda of zeta([v], lambda) - lambda * capacity(v)`,
/// laid out per class so one lookup touches contiguous memory.
#[derive(Debug, Clone)]
pub struct Heuristic<S> {
    n: usize,
    m: usize,
    k: usize,
    lambdas: Vec<S>,
    // per class: k entries of (zeta, path resource)
    entries: Vec<(S, u64)>,
    source: Vec<(S, u64)>,
}

impl<S: Scalar> Heuristic<S> {
    pub fn new(inst: &TripInstance<S>, tables: &[ZetaTable<S>]) -> Self {
        let (n, m, k) = (inst.n(), inst.m(), tables.len());
        let mut entries = Vec::with_capacity(n * m * k);
        for layer in 1..=n {
            for j in 0..m {
                for t in tables {
                    entries.push((t.cost(layer, j), t.resource(layer, j)));
                }
            }
        }
        let source = tables.iter().map(|t| (t.source_cost, t.source_resource)).collect();
        Heuristic { n, m, k, lambdas: tables.iter().map(|t| t.lambda).collect(), entries, source }
    }

    fn class_entries(&self, node: NodeRef) -> &[(S, u64)] {
        if node.layer == 0 {
            &self.source
        } else {
            let base = ((node.layer as usize - 1) * self.m + node.value_index as usize) * self.k;
            &self.entries[base..base + self.k]
        }
    }

    /// Lower bound on the cost from `node` to the sink; zero at the sink.
    pub fn value(&self, node: NodeRef) -> S {
        self.evaluate(node).0
    }

    /// Heuristic value together with the cheapest true cost of a stored
    /// relaxed suffix that fits into the node's remaining capacity, and the
    /// index of the table holding that suffix.
    #[inline]
    pub fn evaluate(&self, node: NodeRef) -> (S, Option<(S, usize)>) {
        if node.layer as usize > self.n {
            return (S::zero(), None);
        }
        let cap = node.capacity;
        let capf = S::from_uint(cap);
        let mut h = S::neg_infinity();
        let mut suffix: Option<(S, usize)> = None;
        for (t, (&(zeta, res), &lambda)) in self.class_entries(node).iter().zip(&self.lambdas).enumerate() {
            let lb = zeta - lambda * capf;
            if lb > h {
                h = lb;
            }
            if res <= cap {
                let w = zeta - lambda * S::from_uint(res);
                if suffix.map_or(true, |(s, _)| w < s) {
                    suffix = Some((w, t));
                }
            }
        }
        (h, suffix)
    }
}

/// `h_LR` evaluated directly from a set of tables.
pub fn heuristic_h<S: Scalar>(inst: &TripInstance<S>, tables: &LagrangeTables<S>, node: NodeRef) -> S {
    if node.is_sink(inst) {
        return S::zero();
    }
    tables
        .tables
        .iter()
        .map(|t| {
            let zeta = if node.is_source() { t.source_cost } else { t.cost(node.layer as usize, node.value_index as usize) };
            zeta - t.lambda * S::from_uint(node.capacity)
        })
        .fold(S::neg_infinity(), S::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_explicit, DEFAULT_EXPLICIT_CAP};
    use crate::oracle::{for_each_step, gen_random, solve_bruteforce, DEFAULT_ENUMERATION_CAP};

    fn three() -> TripInstance<f64> {
        TripInstance::new(vec![-1.0, 2.0, -1.0], 0.5, 2, vec![0, 1], vec![0; 3], vec![1; 3]).unwrap()
    }

    /// Minimum of `C(d) + lambda R(d)` over the free suffix starting after
    /// interval `layer` with `d_layer` fixed to the value of index `j`.
    fn suffix_oracle(inst: &TripInstance<f64>, layer: usize, j: usize, lambda: f64) -> f64 {
        let fixed = inst.step_for(layer - 1, j);
        let mut best = f64::INFINITY;
        for_each_step(inst, DEFAULT_ENUMERATION_CAP, |d| {
            if d[layer - 1] != fixed {
                return;
            }
            let mut v = 0.0;
            for i in layer..inst.n() {
                v += inst.c()[i] * d[i] as f64
                    + lambda * (inst.gamma()[i] * d[i].unsigned_abs()) as f64
                    + inst.alpha() * ((inst.x()[i] + d[i] - inst.x()[i - 1] - d[i - 1]).abs() as f64);
            }
            best = best.min(v);
        })
        .unwrap();
        best
    }

    #[test]
    fn last_layer_is_free() {
        let inst = three();
        let t = relaxed_costs_to_sink(&inst, 0.7);
        for j in 0..inst.m() {
            assert_eq!((t.cost(3, j), t.resource(3, j)), (0.0, 0));
        }
    }

    #[test]
    fn zero_costs_give_zero_tables() {
        let inst = TripInstance::new(vec![0.0; 4], 0.0, 2, vec![-1, 0, 1], vec![0, 1, -1, 0], vec![1, 2, 1, 3]).unwrap();
        let t = relaxed_costs_to_sink(&inst, 0.5);
        for layer in 1..=4 {
            for j in 0..3 {
                assert_eq!(t.cost(layer, j), 0.0);
                assert_eq!(t.resource(layer, j), 0);
            }
        }
    }

    #[test]
    fn tables_match_suffix_enumeration() {
        let inst = three();
        // continuation from d_1 = 1 at lambda = 0: best is (0, 1) at cost 0
        assert_eq!(relaxed_costs_to_sink(&inst, 0.0).cost(1, 1), 0.0);
        for seed in 0..20 {
            let inst = gen_random::<f64>(5, 3, 4, 0.4, seed);
            for lambda in [0.0, 0.3, 1.7] {
                let t = relaxed_costs_to_sink(&inst, lambda);
                for layer in 1..=inst.n() {
                    for j in 0..inst.m() {
                        let want = suffix_oracle(&inst, layer, j, lambda);
                        assert!((t.cost(layer, j) - want).abs() < 1e-12, "seed {seed} layer {layer} j {j}");
                    }
                }
            }
        }
    }

    #[test]
    fn extracted_path_minimizes_resource_among_optima() {
        for seed in 0..40 {
            let inst = gen_random::<f64>(5, 3, 4, 0.0, seed);
            for lambda in [0.0, 0.5] {
                let t = relaxed_costs_to_sink(&inst, lambda);
                let mut best = (f64::INFINITY, u64::MAX);
                for_each_step(&inst, DEFAULT_ENUMERATION_CAP, |d| {
                    let v = relaxed_objective(&inst, d, lambda);
                    let r = inst.resource(d).unwrap();
                    if v < best.0 - 1e-12 || ((v - best.0).abs() <= 1e-12 && r < best.1) {
                        best = (v, r);
                    }
                })
                .unwrap();
                let d = t.path(&inst);
                assert!((t.dual_value(inst.delta()) - best.0).abs() < 1e-12);
                assert_eq!(inst.resource(&d).unwrap(), best.1, "seed {seed}");
            }
        }
    }

    #[test]
    fn initial_upper_endpoint() {
        // unrelaxed optimum (1, 1, 0) uses 2 > 1 units, so the search runs
        let inst = TripInstance::new(vec![-3.0, -3.0, 2.0], 0.5, 1, vec![0, 1], vec![0; 3], vec![1; 3]).unwrap();
        let tables = binary_search(&inst, 1e-6);
        assert!(tables.early_exit.is_none() || tables.evaluations > 1);
        assert!(tables.lambdas().contains(&4.0));
        assert!(tables.lambdas().contains(&0.0));
    }

    #[test]
    fn zero_costs_exit_immediately() {
        let inst = TripInstance::new(vec![0.0; 4], 0.25, 1, vec![0, 1, 2], vec![1; 4], vec![1; 4]).unwrap();
        let tables = binary_search(&inst, 1e-6);
        let sol = tables.early_exit.expect("early exit");
        assert_eq!(sol.d.0, vec![0; 4]);
        assert_eq!(sol.objective, 0.0);
        assert_eq!(tables.evaluations, 1);
    }

    #[test]
    fn relaxed_objective_examples() {
        let inst = three();
        let d = [1, 0, 1];
        assert_eq!(relaxed_objective(&inst, &d, 0.0), inst.objective(&d).unwrap());
        assert_eq!(relaxed_objective(&inst, &d, 3.3), inst.objective(&d).unwrap());
        let big = inst.c_max() + 2.0 * inst.alpha();
        let mut best = f64::INFINITY;
        for_each_step(&inst, 64, |d| best = best.min(relaxed_objective(&inst, d, big))).unwrap();
        assert!((best - relaxed_objective(&inst, &[0, 0, 0], big)).abs() < 1e-12);
    }

    #[test]
    fn heuristic_is_consistent_and_bounded() {
        for seed in 0..30 {
            let inst = gen_random::<f64>(5, 3, 4, 0.3, seed);
            let tables = binary_search(&inst, 1e-6);
            let opt = solve_bruteforce(&inst, DEFAULT_ENUMERATION_CAP).unwrap().objective;
            assert!(tables.dual_bound(inst.delta()) <= opt + 1e-9);
            assert!(tables.upper_bound >= opt - 1e-9);
            let h = tables.heuristic(&inst);
            let g = build_explicit(&inst, DEFAULT_EXPLICIT_CAP).unwrap();
            for e in &g.edges {
                let (u, v) = (g.nodes[e.from], g.nodes[e.to]);
                assert!(e.weight + h.value(v) - h.value(u) >= -1e-9, "seed {seed}");
                assert!((h.value(u) - heuristic_h(&inst, &tables, u)).abs() < 1e-12);
            }
            assert_eq!(h.value(crate::graph::NodeRef::sink(&inst)), 0.0);
        }
    }

    #[test]
    fn single_zero_multiplier_is_the_unconstrained_cost_to_go() {
        let inst = three();
        let t = relaxed_costs_to_sink(&inst, 0.0);
        let h = Heuristic::new(&inst, std::slice::from_ref(&t));
        let v = crate::graph::NodeRef { layer: 1, value_index: 1, capacity: 1 };
        assert_eq!(h.value(v), suffix_oracle(&inst, 1, 1, 0.0));
    }

    #[test]
    fn trace_csv_has_one_row_per_evaluation() {
        let inst = gen_random::<f64>(6, 3, 2, 0.1, 9);
        let tables = binary_search(&inst, 1e-3);
        let csv = tables.trace_csv();
        assert_eq!(csv.lines().count() as u64, tables.evaluations + 1);
    }
}
