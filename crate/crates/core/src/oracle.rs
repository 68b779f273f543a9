//! Ground truth: exhaustive enumeration, the knapsack reduction used to
//! generate hard instances, and a seeded random instance generator.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::instance::{InstanceError, SolveStats, Solution, TripInstance};
use crate::scalar::Scalar;

pub const DEFAULT_ENUMERATION_CAP: u128 = 1 << 20;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("enumeration of {count} step vectors exceeds the cap of {cap}")]
    CapExceeded { count: u128, cap: u128 },
    #[error("knapsack input: {0}")]
    BadKnapsack(String),
    #[error("value set of the reduction holds {0} twice")]
    DuplicateValue(i64),
    #[error("d_{index} = {value} is neither 0 nor the item weight {weight}")]
    NotASelection { index: usize, value: i64, weight: u64 },
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

/// Calls `visit` on every `d` with `x + d` in `Ξ^n`, feasible or not, in
/// lexicographic order of `d`.
pub fn for_each_step<S: Scalar>(
    inst: &TripInstance<S>,
    cap: u128,
    mut visit: impl FnMut(&[i64]),
) -> Result<(), OracleError> {
    let n = inst.n();
    let m = inst.m();
    let count = (m as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if count > cap {
        return Err(OracleError::CapExceeded { count, cap });
    }
    let mut digits = vec![0usize; n];
    let mut d: Vec<i64> = (0..n).map(|i| inst.step_for(i, 0)).collect();
    loop {
        visit(&d);
        // odometer with the last interval as the fastest digit
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok(());
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < m {
                d[pos] = inst.step_for(pos, digits[pos]);
                break;
            }
            digits[pos] = 0;
            d[pos] = inst.step_for(pos, 0);
        }
    }
}

/// Optimal step by exhaustive enumeration; ties go to the lexicographically
/// smallest `d`.
pub fn solve_bruteforce<S: Scalar>(inst: &TripInstance<S>, cap: u128) -> Result<Solution<S>, OracleError> {
    let start = std::time::Instant::now();
    let mut best: Option<(S, Vec<i64>)> = None;
    let mut visited = 0u64;
    for_each_step(inst, cap, |d| {
        visited += 1;
        if inst.resource(d).expect("length") > inst.delta() {
            return;
        }
        let val = inst.objective(d).expect("length");
        if best.as_ref().is_none_or(|(b, _)| val < *b) {
            best = Some((val, d.to_vec()));
        }
    })?;
    let (_, d) = best.expect("zero step is always feasible");
    let stats = SolveStats {
        nodes_expanded: visited,
        wall_seconds: start.elapsed().as_secs_f64(),
        ..SolveStats::default()
    };
    Ok(inst.solution(d, stats)?)
}

/// Program built from a knapsack instance, plus what is needed to map a
/// step back to an item selection.
#[derive(Debug, Clone)]
pub struct KnapsackReduction<S> {
    pub instance: TripInstance<S>,
    /// Original indices of the items that fit into the budget on their own.
    pub items: Vec<usize>,
    pub weights: Vec<u64>,
    pub values: Vec<S>,
}

/// Encodes a knapsack instance as a program with unit mesh weights.
///
/// With `k` usable items the program has `2k + 1` intervals and radius
/// `budget`. Odd intervals are pinned to zero and interval `2i` can only
/// stay or move up by `w_i`, at a net cost of `-v_i`.
pub fn knapsack_reduce<S: Scalar>(
    values: &[S],
    weights: &[u64],
    budget: u64,
    alpha: S,
) -> Result<KnapsackReduction<S>, OracleError> {
    if values.len() != weights.len() {
        return Err(OracleError::BadKnapsack("values and weights differ in length".into()));
    }
    if budget == 0 {
        return Err(OracleError::BadKnapsack("budget must be positive".into()));
    }
    if alpha <= S::zero() {
        return Err(OracleError::BadKnapsack("alpha must be positive".into()));
    }
    if values.iter().any(|v| *v <= S::zero() || !v.is_finite()) {
        return Err(OracleError::BadKnapsack("values must be positive".into()));
    }
    if weights.contains(&0) {
        return Err(OracleError::BadKnapsack("weights must be positive".into()));
    }
    let items: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] <= budget).collect();
    if items.is_empty() {
        return Err(OracleError::BadKnapsack("no item fits into the budget".into()));
    }
    let w: Vec<u64> = items.iter().map(|&i| weights[i]).collect();
    let v: Vec<S> = items.iter().map(|&i| values[i]).collect();
    let k = items.len();
    let gap = budget as i64 + 1;

    let mut prefix = vec![0i64; k + 1];
    for i in 0..k {
        prefix[i + 1] = prefix[i] + w[i] as i64;
    }
    let mut xi = Vec::with_capacity(2 * k + 1);
    for j in 0..k {
        xi.push(prefix[j] + (j as i64 + 1) * gap);
    }
    for j in 0..=k {
        xi.push(prefix[j] + j as i64 * gap);
    }
    xi.sort_unstable();
    if let Some(pair) = xi.windows(2).find(|p| p[0] == p[1]) {
        return Err(OracleError::DuplicateValue(pair[0]));
    }

    let n = 2 * k + 1;
    let mut x = vec![0i64; n];
    let mut c = vec![S::zero(); n];
    for item in 0..k {
        // interval 2(item+1) in 1-based numbering
        let pos = 2 * item + 1;
        x[pos] = prefix[item] + (item as i64 + 1) * gap;
        c[pos] = -(v[item] / S::from_uint(w[item])) - S::two() * alpha;
    }
    let instance = TripInstance::new(c, alpha, budget, xi, x, vec![1; n])?;
    Ok(KnapsackReduction { instance, items, weights: w, values: v })
}

impl<S: Scalar> KnapsackReduction<S> {
    /// Original indices of the items a step selects.
    pub fn extract(&self, d: &[i64]) -> Result<Vec<usize>, OracleError> {
        let mut chosen = Vec::new();
        for (item, &w) in self.weights.iter().enumerate() {
            let pos = 2 * item + 1;
            match d[pos] {
                0 => {}
                v if v == w as i64 => chosen.push(self.items[item]),
                v => return Err(OracleError::NotASelection { index: pos + 1, value: v, weight: w }),
            }
        }
        Ok(chosen)
    }

    /// Objective a selection of total value `value` has in the program.
    pub fn objective_for_value(&self, value: S) -> S {
        let inst = &self.instance;
        inst.zero_step_objective() - value
    }
}

pub fn extract_knapsack<S: Scalar>(red: &KnapsackReduction<S>, d: &[i64]) -> Result<Vec<usize>, OracleError> {
    red.extract(d)
}

/// Best knapsack value and a selection reaching it, by subset enumeration.
pub fn knapsack_bruteforce<S: Scalar>(values: &[S], weights: &[u64], budget: u64) -> (S, Vec<usize>) {
    let k = values.len();
    assert!(k < 32, "subset enumeration is limited to 31 items");
    let mut best = (S::zero(), Vec::new());
    for mask in 0u32..(1 << k) {
        let sel: Vec<usize> = (0..k).filter(|i| mask >> i & 1 == 1).collect();
        let w: u64 = sel.iter().map(|&i| weights[i]).sum();
        if w > budget {
            continue;
        }
        let v: S = sel.iter().map(|&i| values[i]).sum();
        if v > best.0 {
            best = (v, sel);
        }
    }
    best
}

/// Seeded random instance: `m` distinct values, `x` uniform over them,
/// standard normal costs and mesh weights in `{1, 2, 3}`.
pub fn gen_random<S: Scalar>(n: usize, m: usize, delta: u64, alpha: S, seed: u64) -> TripInstance<S> {
    assert!(n >= 1 && m >= 1, "need at least one interval and one value");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = 3 * m + 2;
    let mut xi: Vec<i64> = index::sample(&mut rng, span, m)
        .into_iter()
        .map(|v| v as i64 - (span as i64) / 2)
        .collect();
    xi.sort_unstable();
    let x = (0..n).map(|_| xi[rng.random_range(0..m)]).collect();
    let c = (0..n)
        .map(|_| S::lit(rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let gamma = (0..n).map(|_| rng.random_range(1..=3)).collect();
    TripInstance::new(c, alpha, delta, xi, x, gamma).expect("generated instance is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three() -> TripInstance<f64> {
        TripInstance::new(vec![-1.0, 2.0, -1.0], 0.5, 2, vec![0, 1], vec![0; 3], vec![1; 3]).unwrap()
    }

    #[test]
    fn enumerates_in_lexicographic_order() {
        let inst = three();
        let mut seen = Vec::new();
        for_each_step(&inst, 100, |d| seen.push(d.to_vec())).unwrap();
        assert_eq!(seen.len(), 8);
        assert_eq!(seen[0], vec![0, 0, 0]);
        assert_eq!(seen[1], vec![0, 0, 1]);
        assert_eq!(seen[7], vec![1, 1, 1]);
        assert!(seen.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn bruteforce_small_instance() {
        let sol = solve_bruteforce(&three(), DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(sol.d.0, vec![1, 0, 1]);
        assert_eq!(sol.objective, -1.0);
        let zero = solve_bruteforce(&three().with_delta(0), DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(zero.d.0, vec![0, 0, 0]);
    }

    #[test]
    fn bruteforce_figure_instance() {
        // candidates: (0,0) -> 0, (1,0) -> -1+1, (0,1) -> -1+1, (1,1) -> -2
        let inst = TripInstance::new(vec![-1.0, -1.0], 1.0, 2, vec![0, 1], vec![0, 0], vec![1, 1]).unwrap();
        let sol = solve_bruteforce(&inst, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(sol.d.0, vec![1, 1]);
        assert_eq!(sol.objective, -2.0);
    }

    #[test]
    fn bruteforce_cap() {
        let inst = gen_random::<f64>(12, 4, 5, 0.1, 3);
        assert!(matches!(solve_bruteforce(&inst, 1000), Err(OracleError::CapExceeded { .. })));
    }

    #[test]
    fn one_item_knapsack() {
        let red = knapsack_reduce(&[1.0], &[1], 1, 0.5).unwrap();
        assert_eq!(red.instance.n(), 3);
        assert_eq!(red.instance.delta(), 1);
        let sol = solve_bruteforce(&red.instance, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(red.extract(&sol.d).unwrap(), vec![0]);
    }

    #[test]
    fn two_item_knapsack() {
        let (values, weights) = ([6.0f64, 10.0], [1, 2]);
        assert_eq!(knapsack_bruteforce(&values, &weights, 2), (10.0, vec![1]));
        let red = knapsack_reduce(&values, &weights, 2, 0.3).unwrap();
        let sol = solve_bruteforce(&red.instance, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(red.extract(&sol.d).unwrap(), vec![1]);
        assert!((sol.objective - red.objective_for_value(10.0)).abs() < 1e-9);
        // odd intervals never move
        for i in (0..red.instance.n()).step_by(2) {
            assert_eq!(sol.d[i], 0);
        }
    }

    #[test]
    fn oversized_items_are_dropped() {
        let red = knapsack_reduce(&[5.0, 1.0, 2.0], &[9, 1, 2], 3, 1.0).unwrap();
        assert_eq!(red.items, vec![1, 2]);
        assert_eq!(red.instance.n(), 5);
        let sol = solve_bruteforce(&red.instance, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(red.extract(&sol.d).unwrap(), vec![1, 2]);
    }

    #[test]
    fn extract_rejects_foreign_steps() {
        let red = knapsack_reduce(&[1.0, 1.0], &[1, 2], 2, 1.0).unwrap();
        let mut d = vec![0; red.instance.n()];
        d[1] = 2;
        assert!(matches!(red.extract(&d), Err(OracleError::NotASelection { index: 2, .. })));
    }

    #[test]
    fn random_generation_is_reproducible() {
        let a = gen_random::<f64>(8, 3, 5, 0.2, 42);
        let b = gen_random::<f64>(8, 3, 5, 0.2, 42);
        let c = gen_random::<f64>(8, 3, 5, 0.2, 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.m(), 3);
        assert!(a.gamma().iter().all(|g| (1..=3).contains(g)));
    }
}
