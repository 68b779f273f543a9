//! Exact solvers for integer trust-region subproblems with switching costs.
//!
//! A subproblem asks for an integer step `d` moving each control `x_i` to
//! an admissible value, minimizing `sum c_i d_i + alpha TV(x + d)` under the
//! budget `sum gamma_i |d_i| <= delta`. It is a resource-constrained
//! shortest path on a layered graph; [`topo`] sweeps that graph layer by
//! layer, [`astar`] searches it with bounds from a Lagrangian relaxation
//! ([`lagrange`]). [`slip`] wraps the solvers in a trust-region loop over
//! two model control problems and [`bench`] compares solvers on recorded
//! subproblems.
//!
//! Everything numeric is generic over [`Scalar`] (`f64` or `f32`); the
//! aliases below fix `f64`, which the control problems use.

pub mod astar;
pub mod bench;
pub mod graph;
pub mod instance;
pub mod lagrange;
pub mod oracle;
pub mod scalar;
pub mod slip;
pub mod topo;

pub use astar::{edge_dominated, solve_astar, AstarOptions};
pub use graph::{build_explicit, edge_weight, path_to_step, q_successors, successors, NodeRef, QNodeRef};
pub use instance::{read_instance, validate, write_instance, InstanceError, SolveStats, StepVector};
pub use lagrange::{binary_search, heuristic_h, relaxed_costs_to_sink, relaxed_objective};
pub use oracle::{extract_knapsack, gen_random, knapsack_reduce, solve_bruteforce};
pub use scalar::Scalar;
pub use slip::{run_slip, total_variation, ControlProblem, SlipConfig, SlipTrace};
pub use topo::solve_topo;

pub type Instance = instance::TripInstance<f64>;
pub type Solution = instance::Solution<f64>;
pub type LagrangeTables = lagrange::LagrangeTables<f64>;
pub type Instance32 = instance::TripInstance<f32>;
pub type Solution32 = instance::Solution<f32>;
