//! Trust-region loop over integer controls.
//!
//! Each inner iteration linearizes the smooth part of `J = F + alpha TV`
//! at the current control, solves the resulting integer subproblem within
//! radius `delta`, and accepts the step when the actual decrease of `J` is
//! at least `rho` times the decrease the subproblem predicted. Rejections
//! halve the radius; a zero predicted decrease ends the run.

mod heat;
mod signal;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::astar::{solve_astar, AstarOptions};
use crate::instance::{InstanceError, SolveStats, Solution, TripInstance};
use crate::topo::solve_topo;

pub use heat::HeatProblem;
pub use signal::SignalProblem;

/// A discretized smooth objective over piecewise constant controls.
///
/// The real-valued methods evaluate the continuous relaxation; the integer
/// ones are what the trust-region loop calls.
pub trait ControlProblem: Sync {
    fn n(&self) -> usize;
    fn xi(&self) -> &[i64];
    fn gamma(&self) -> &[u64];
    fn value(&self, x: &[f64]) -> f64;
    /// Partial derivatives of [`ControlProblem::value`] in each control.
    fn gradient(&self, x: &[f64]) -> Vec<f64>;

    fn smooth_value(&self, x: &[i64]) -> f64 {
        self.value(&to_real(x))
    }

    /// Coefficients of the linear model `F(x + d) ~ F(x) + sum c_i d_i`.
    fn gradient_coeffs(&self, x: &[i64]) -> Vec<f64> {
        self.gradient(&to_real(x))
    }
}

fn to_real(x: &[i64]) -> Vec<f64> {
    x.iter().map(|&v| v as f64).collect()
}

pub fn make_heat_problem(n: usize) -> HeatProblem {
    HeatProblem::new(n, HeatProblem::DEFAULT_REFINEMENT)
}

pub fn make_signal_problem(n: usize, seed: u64) -> SignalProblem {
    SignalProblem::new(n, SignalProblem::DEFAULT_FINE_CELLS, seed)
}

/// `sum_i |x_{i+1} - x_i|`.
pub fn total_variation(x: &[i64]) -> f64 {
    crate::instance::total_variation_int(x) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubSolver {
    Topo,
    Astar,
    /// Layer sweep below the threshold radius, A* from it on.
    Hybrid { delta_d: u64 },
}

impl SubSolver {
    pub fn solve(&self, inst: &TripInstance<f64>, options: &AstarOptions<f64>) -> Solution<f64> {
        match *self {
            SubSolver::Topo => solve_topo(inst),
            SubSolver::Astar => solve_astar(inst, options),
            SubSolver::Hybrid { delta_d } if inst.delta() < delta_d => solve_topo(inst),
            SubSolver::Hybrid { .. } => solve_astar(inst, options),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SlipConfig {
    pub alpha: f64,
    /// Radius every outer iteration starts from.
    pub delta0: u64,
    pub rho: f64,
    /// Multiplier search tolerance handed to A*; `None` uses its default.
    pub epsilon: Option<f64>,
    pub solver: SubSolver,
    pub max_outer: usize,
    /// Predicted reductions at or below this count as zero.
    pub pred_tol: f64,
}

impl SlipConfig {
    pub fn new(alpha: f64, delta0: u64) -> Self {
        SlipConfig { alpha, delta0, rho: 0.1, epsilon: None, solver: SubSolver::Astar, max_outer: 10_000, pred_tol: 1e-12 }
    }
}

#[derive(Debug, Error)]
pub enum SlipError {
    #[error("x0 has length {got}, expected {expected}")]
    Length { expected: usize, got: usize },
    #[error("x0_{index} = {value} is not an admissible value")]
    Infeasible { index: usize, value: i64 },
    #[error("delta0 must be at least 1")]
    Radius,
    #[error("rho must lie in (0, 1), got {0}")]
    Ratio(f64),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("trace i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace record: {0}")]
    Json(#[from] serde_json::Error),
}

/// Counters of one subproblem solve, without timing so traces are
/// reproducible byte for byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordStats {
    pub nodes_expanded: u64,
    pub nodes_generated: u64,
    pub preprocessing_iterations: u64,
    pub early_exit: bool,
}

impl From<&SolveStats> for RecordStats {
    fn from(s: &SolveStats) -> Self {
        RecordStats {
            nodes_expanded: s.nodes_expanded,
            nodes_generated: s.nodes_generated,
            preprocessing_iterations: s.preprocessing_iterations,
            early_exit: s.early_exit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubproblemRecord {
    pub outer: usize,
    pub inner: usize,
    pub delta: u64,
    /// `J` at the iterate the subproblem was built from.
    pub objective_before: f64,
    pub predicted: f64,
    /// `None` when the run stopped on this subproblem.
    pub actual: Option<f64>,
    pub accepted: bool,
    pub d: Vec<i64>,
    pub stats: RecordStats,
    pub instance: TripInstance<f64>,
    #[serde(skip)]
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    PredictedZero,
    MaxOuter,
}

#[derive(Debug, Clone)]
pub struct SlipTrace {
    pub records: Vec<SubproblemRecord>,
    pub x: Vec<i64>,
    pub objective: f64,
    pub termination: Termination,
}

impl SlipTrace {
    /// `J` after each accepted step, starting with the initial value.
    pub fn accepted_objectives(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.records.first().map(|r| r.objective_before).into_iter().collect();
        for r in self.records.iter().filter(|r| r.accepted) {
            out.push(r.objective_before - r.actual.expect("accepted steps carry a reduction"));
        }
        out
    }

    pub fn final_predicted(&self) -> Option<f64> {
        self.records.last().map(|r| r.predicted)
    }

    /// One JSON record per subproblem.
    pub fn write_jsonl(&self, mut out: impl Write) -> Result<(), SlipError> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Parses a trace written by [`SlipTrace::write_jsonl`].
pub fn read_trace(input: impl BufRead) -> Result<Vec<SubproblemRecord>, SlipError> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn run_slip<P: ControlProblem + ?Sized>(problem: &P, x0: &[i64], config: &SlipConfig) -> Result<SlipTrace, SlipError> {
    let n = problem.n();
    let xi = problem.xi();
    if x0.len() != n {
        return Err(SlipError::Length { expected: n, got: x0.len() });
    }
    if let Some((index, &value)) = x0.iter().enumerate().find(|(_, v)| xi.binary_search(v).is_err()) {
        return Err(SlipError::Infeasible { index, value });
    }
    if config.delta0 == 0 {
        return Err(SlipError::Radius);
    }
    if !(config.rho > 0.0 && config.rho < 1.0) {
        return Err(SlipError::Ratio(config.rho));
    }
    let options = AstarOptions { epsilon: config.epsilon, ..AstarOptions::default() };
    let alpha = config.alpha;
    let objective = |x: &[i64]| problem.smooth_value(x) + alpha * total_variation(x);

    let mut x = x0.to_vec();
    let mut j = objective(&x);
    let mut records = Vec::new();
    for outer in 0..config.max_outer {
        let c = problem.gradient_coeffs(&x);
        let mut delta = config.delta0;
        let mut inner = 0;
        loop {
            let inst = TripInstance::new(c.clone(), alpha, delta, xi.to_vec(), x.clone(), problem.gamma().to_vec())?;
            let sol = config.solver.solve(&inst, &options);
            let predicted = inst.zero_step_objective() - sol.objective;
            let mut record = SubproblemRecord {
                outer,
                inner,
                delta,
                objective_before: j,
                predicted,
                actual: None,
                accepted: false,
                d: sol.d.0.clone(),
                stats: RecordStats::from(&sol.stats),
                instance: inst,
                wall_seconds: sol.stats.wall_seconds,
            };
            if predicted <= config.pred_tol {
                records.push(record);
                return Ok(SlipTrace { records, x, objective: j, termination: Termination::PredictedZero });
            }
            let trial: Vec<i64> = x.iter().zip(sol.d.iter()).map(|(a, b)| a + b).collect();
            let j_trial = objective(&trial);
            let actual = j - j_trial;
            record.actual = Some(actual);
            if actual >= config.rho * predicted {
                record.accepted = true;
                records.push(record);
                x = trial;
                j = j_trial;
                break;
            }
            records.push(record);
            // a radius of zero only admits the zero step, which ends the run
            delta /= 2;
            inner += 1;
        }
    }
    Ok(SlipTrace { records, x, objective: j, termination: Termination::MaxOuter })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialStrategy {
    Zero,
    RelaxRound,
    MeanRound,
}

/// Projected gradient descent on the box spanned by the admissible values,
/// ignoring the switching cost.
pub fn relaxed_minimizer<P: ControlProblem + ?Sized>(problem: &P, tol: f64, max_iter: usize) -> Vec<f64> {
    let xi = problem.xi();
    let (lo, hi) = (xi[0] as f64, xi[xi.len() - 1] as f64);
    let project = |v: f64| v.clamp(lo, hi);
    let mut x = vec![0.0f64.clamp(lo, hi); problem.n()];
    let mut fx = problem.value(&x);
    let mut step: f64 = 1.0;
    for _ in 0..max_iter {
        let g = problem.gradient(&x);
        let pg = x.iter().zip(&g).map(|(&a, &b)| (a - project(a - b)).abs()).fold(0.0, f64::max);
        if pg <= tol {
            break;
        }
        // scale the first trial so the largest move is one unit
        let gmax = g.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        step = (step * 4.0).min(1.0 / gmax.max(f64::MIN_POSITIVE) * (hi - lo)).max(f64::MIN_POSITIVE);
        loop {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(&a, &b)| project(a - step * b)).collect();
            let ft = problem.value(&trial);
            let decrease: f64 = x.iter().zip(&trial).zip(&g).map(|((a, t), b)| b * (a - t)).sum();
            if ft <= fx - 1e-4 * decrease || step < 1e-300 {
                x = trial;
                fx = ft;
                break;
            }
            step *= 0.5;
        }
    }
    x
}

/// Nearest admissible value, the smaller one on ties.
pub fn round_to_xi(v: f64, xi: &[i64]) -> i64 {
    let mut best = xi[0];
    for &c in xi {
        if (c as f64 - v).abs() < (best as f64 - v).abs() {
            best = c;
        }
    }
    best
}

pub fn mean_round(a: &[f64], b: &[f64], xi: &[i64]) -> Vec<i64> {
    a.iter().zip(b).map(|(&p, &q)| round_to_xi(0.5 * (p + q), xi)).collect()
}

pub const RELAX_TOL: f64 = 1e-4;
pub const RELAX_MAX_ITER: usize = 500;

pub fn initial_iterate<P: ControlProblem + ?Sized>(problem: &P, strategy: InitialStrategy) -> Vec<i64> {
    let xi = problem.xi();
    let zero = vec![round_to_xi(0.0, xi); problem.n()];
    match strategy {
        InitialStrategy::Zero => zero,
        InitialStrategy::RelaxRound => {
            relaxed_minimizer(problem, RELAX_TOL, RELAX_MAX_ITER).iter().map(|&v| round_to_xi(v, xi)).collect()
        }
        InitialStrategy::MeanRound => {
            let relaxed = relaxed_minimizer(problem, RELAX_TOL, RELAX_MAX_ITER);
            mean_round(&relaxed, &vec![0.0; problem.n()], xi)
        }
    }
}

pub fn initial_iterate_heat(problem: &HeatProblem, strategy: InitialStrategy) -> Vec<i64> {
    initial_iterate(problem, strategy)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `F(x) = beta / 2 |x - target|^2` on unit weights.
    struct Quadratic {
        xi: Vec<i64>,
        gamma: Vec<u64>,
        target: Vec<f64>,
        beta: f64,
    }

    impl Quadratic {
        fn new(target: Vec<f64>, beta: f64) -> Self {
            Quadratic { xi: (-3..=3).collect(), gamma: vec![1; target.len()], target, beta }
        }
    }

    impl ControlProblem for Quadratic {
        fn n(&self) -> usize {
            self.target.len()
        }
        fn xi(&self) -> &[i64] {
            &self.xi
        }
        fn gamma(&self) -> &[u64] {
            &self.gamma
        }
        fn value(&self, x: &[f64]) -> f64 {
            0.5 * self.beta * x.iter().zip(&self.target).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        }
        fn gradient(&self, x: &[f64]) -> Vec<f64> {
            x.iter().zip(&self.target).map(|(a, b)| self.beta * (a - b)).collect()
        }
    }

    #[test]
    fn total_variation_examples() {
        assert_eq!(total_variation(&[4, 4, 4]), 0.0);
        assert_eq!(total_variation(&[0, 1, 0]), 2.0);
        assert_eq!(total_variation(&[-2, 23]), 25.0);
    }

    #[test]
    fn flat_problem_stops_at_once() {
        let p = Quadratic::new(vec![1.0; 5], 1.0);
        let trace = run_slip(&p, &[1; 5], &SlipConfig::new(0.1, 2)).unwrap();
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.records[0].d, vec![0; 5]);
        assert_eq!(trace.final_predicted(), Some(0.0));
        assert_eq!(trace.termination, Termination::PredictedZero);
    }

    #[test]
    fn steep_model_error_rejects_and_halves() {
        // a unit step predicts 0.55 beta but only gains 0.05 beta
        let p = Quadratic::new(vec![0.55; 4], 10.0);
        let trace = run_slip(&p, &[0; 4], &SlipConfig::new(0.0, 4)).unwrap();
        let first = &trace.records[0];
        assert!(!first.accepted);
        assert_eq!(trace.records[1].delta, 2);
        assert_eq!(trace.records[1].inner, 1);
        assert_eq!(trace.x, vec![0; 4]);
        assert_eq!(trace.final_predicted(), Some(0.0));
    }

    #[test]
    fn accepted_steps_decrease_objective() {
        let p = Quadratic::new(vec![2.2, -1.4, 0.3, 2.9, 2.6, -0.2], 1.0);
        for solver in [SubSolver::Topo, SubSolver::Astar, SubSolver::Hybrid { delta_d: 2 }] {
            let mut cfg = SlipConfig::new(0.05, 3);
            cfg.solver = solver;
            let trace = run_slip(&p, &[0; 6], &cfg).unwrap();
            let js = trace.accepted_objectives();
            assert!(js.windows(2).all(|w| w[1] < w[0]));
            assert_eq!(trace.x, vec![2, -1, 0, 3, 3, 0]);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = Quadratic::new(vec![0.0; 3], 1.0);
        assert!(matches!(run_slip(&p, &[0, 9, 0], &SlipConfig::new(0.0, 1)), Err(SlipError::Infeasible { index: 1, .. })));
        assert!(matches!(run_slip(&p, &[0, 0], &SlipConfig::new(0.0, 1)), Err(SlipError::Length { .. })));
        assert!(matches!(run_slip(&p, &[0; 3], &SlipConfig::new(0.0, 0)), Err(SlipError::Radius)));
    }

    #[test]
    fn trace_round_trips_through_jsonl() {
        let p = Quadratic::new(vec![1.7, -0.6, 2.2], 1.0);
        let trace = run_slip(&p, &[0; 3], &SlipConfig::new(0.01, 2)).unwrap();
        let mut buf = Vec::new();
        trace.write_jsonl(&mut buf).unwrap();
        let back = read_trace(&buf[..]).unwrap();
        assert_eq!(back.len(), trace.records.len());
        for (a, b) in back.iter().zip(&trace.records) {
            assert_eq!(a.instance, b.instance);
            assert_eq!(a.d, b.d);
        }
    }

    #[test]
    fn relaxation_rounds_into_range() {
        let p = Quadratic::new(vec![5.0, -4.2, 0.4, 1.6], 1.0);
        let relaxed = relaxed_minimizer(&p, 1e-8, 500);
        let want = [3.0, -3.0, 0.4, 1.6];
        assert!(relaxed.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-6));
        assert_eq!(initial_iterate(&p, InitialStrategy::RelaxRound), vec![3, -3, 0, 2]);
        assert_eq!(initial_iterate(&p, InitialStrategy::MeanRound), vec![1, -2, 0, 1]);
        assert_eq!(initial_iterate(&p, InitialStrategy::Zero), vec![0; 4]);
        assert_eq!(mean_round(&[0.0; 3], &[0.0; 3], p.xi()), vec![0; 3]);
    }
}
