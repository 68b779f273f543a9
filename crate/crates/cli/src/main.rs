use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use tripsolve::astar::{solve_astar, AstarOptions};
use tripsolve::bench::{cumulative_seconds, hybrid_rows, replay, write_csv, BenchSolver, WORKERS_ENV};
use tripsolve::graph::{build_explicit, DEFAULT_EXPLICIT_CAP};
use tripsolve::instance::{read_instance, write_instance};
use tripsolve::oracle::{gen_random, knapsack_reduce, solve_bruteforce, DEFAULT_ENUMERATION_CAP};
use tripsolve::slip::{
    initial_iterate, make_heat_problem, make_signal_problem, read_trace, run_slip, ControlProblem, InitialStrategy,
    SlipConfig, SubSolver,
};
use tripsolve::topo::solve_topo;
use tripsolve::Instance;

#[derive(Parser)]
#[command(name = "tripsolve", version, about = "Integer trust-region subproblem solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance file and print the solution as JSON.
    Solve(SolveArgs),
    /// Run the trust-region loop on a built-in control problem.
    Slip(SlipArgs),
    /// Replay recorded subproblems through several solvers and emit CSV.
    Bench(BenchArgs),
    /// Write a seeded random instance.
    GenRandom(GenRandomArgs),
    /// Write the instance encoding a knapsack problem.
    GenKnapsack(GenKnapsackArgs),
    /// Print the explicit layered graph of an instance as an edge list.
    Graph(GraphArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverName {
    Topo,
    Astar,
    Oracle,
}

#[derive(Args)]
struct PruningArgs {
    /// Bisection tolerance for the multiplier search.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    no_edge_pruning: bool,
    #[arg(long)]
    no_upper_bound_pruning: bool,
    #[arg(long)]
    node_dominance: bool,
}

impl PruningArgs {
    fn options(&self) -> AstarOptions<f64> {
        AstarOptions {
            edge_pruning: !self.no_edge_pruning,
            upper_bound_pruning: !self.no_upper_bound_pruning,
            node_dominance: self.node_dominance,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "astar")]
    solver: SolverName,
    #[command(flatten)]
    pruning: PruningArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProblemName {
    Heat,
    Signal,
}

#[derive(Clone, Copy, ValueEnum)]
enum StartName {
    Zero,
    RelaxRound,
    MeanRound,
}

#[derive(Clone, Copy, ValueEnum)]
enum SubSolverName {
    Topo,
    Astar,
    Hybrid,
}

#[derive(Args)]
struct SlipArgs {
    #[arg(long, value_enum)]
    problem: ProblemName,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    alpha: f64,
    /// Kernel seed of the signal problem.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "zero")]
    x0: StartName,
    #[arg(long, value_enum, default_value = "astar")]
    solver: SubSolverName,
    /// Threshold radius of the hybrid solver; defaults to n / 4.
    #[arg(long)]
    delta_d: Option<u64>,
    #[arg(long, default_value_t = 0.1)]
    rho: f64,
    /// Reset radius; defaults to n / 8.
    #[arg(long)]
    delta0: Option<u64>,
    #[arg(long, default_value_t = 10_000)]
    max_outer: usize,
    #[arg(long)]
    epsilon: Option<f64>,
    /// JSON-lines trace, one record per subproblem.
    #[arg(long)]
    trace_out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(required = true)]
    traces: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "topo,astar")]
    solvers: Vec<String>,
    /// Add hybrid rows choosing topo below this radius and A* from it on.
    #[arg(long)]
    delta_d: Option<u64>,
    /// CSV destination; standard output when omitted.
    #[arg(long)]
    csv_out: Option<PathBuf>,
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
    #[command(flatten)]
    pruning: PruningArgs,
}

#[derive(Args)]
struct GenRandomArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    delta: u64,
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenKnapsackArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    weights: Vec<u64>,
    #[arg(long)]
    budget: u64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GraphArgs {
    instance: PathBuf,
    /// Largest `n (delta + 1) |Ξ|` to materialize.
    #[arg(long, default_value_t = DEFAULT_EXPLICIT_CAP)]
    cap: u128,
}

fn load_instance(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    read_instance(&text).with_context(|| format!("parsing {}", path.display()))
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let inst = load_instance(&args.instance)?;
    let sol = match args.solver {
        SolverName::Topo => solve_topo(&inst),
        SolverName::Astar => solve_astar(&inst, &args.pruning.options()),
        SolverName::Oracle => solve_bruteforce(&inst, DEFAULT_ENUMERATION_CAP)?,
    };
    println!("{}", sol.to_json());
    Ok(())
}

fn cmd_slip(args: &SlipArgs) -> Result<()> {
    if args.n == 0 {
        bail!("n must be positive");
    }
    let problem: Box<dyn ControlProblem> = match args.problem {
        ProblemName::Heat => Box::new(make_heat_problem(args.n)),
        ProblemName::Signal => {
            if tripsolve::slip::SignalProblem::DEFAULT_FINE_CELLS % args.n != 0 {
                bail!("n must divide {}", tripsolve::slip::SignalProblem::DEFAULT_FINE_CELLS);
            }
            Box::new(make_signal_problem(args.n, args.seed))
        }
    };
    let strategy = match args.x0 {
        StartName::Zero => InitialStrategy::Zero,
        StartName::RelaxRound => InitialStrategy::RelaxRound,
        StartName::MeanRound => InitialStrategy::MeanRound,
    };
    let x0 = initial_iterate(problem.as_ref(), strategy);
    let mut config = SlipConfig::new(args.alpha, args.delta0.unwrap_or((args.n as u64 / 8).max(1)));
    config.rho = args.rho;
    config.max_outer = args.max_outer;
    config.epsilon = args.epsilon;
    config.solver = match args.solver {
        SubSolverName::Topo => SubSolver::Topo,
        SubSolverName::Astar => SubSolver::Astar,
        SubSolverName::Hybrid => SubSolver::Hybrid { delta_d: args.delta_d.unwrap_or(args.n as u64 / 4) },
    };
    let trace = run_slip(problem.as_ref(), &x0, &config)?;
    let file = File::create(&args.trace_out).with_context(|| format!("creating {}", args.trace_out.display()))?;
    let mut w = BufWriter::new(file);
    trace.write_jsonl(&mut w)?;
    w.flush()?;
    let summary = json!({
        "subproblems": trace.records.len(),
        "accepted": trace.records.iter().filter(|r| r.accepted).count(),
        "objective": trace.objective,
        "termination": trace.termination,
        "x": trace.x,
    });
    println!("{summary}");
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let solvers: Vec<BenchSolver> =
        args.solvers.iter().map(|s| s.parse()).collect::<Result<_, String>>().map_err(anyhow::Error::msg)?;
    if solvers.is_empty() {
        bail!("no solvers given");
    }
    let mut instances = Vec::new();
    for path in &args.traces {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let records = read_trace(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
        instances.extend(records.into_iter().map(|r| r.instance));
    }
    let mut rows = replay(&instances, &solvers, &args.pruning.options(), args.workers)?;
    if let Some(delta_d) = args.delta_d {
        rows.extend(hybrid_rows(&rows, delta_d)?);
    }
    match &args.csv_out {
        Some(path) => write_csv(&rows, File::create(path).with_context(|| format!("creating {}", path.display()))?)?,
        None => write_csv(&rows, io::stdout().lock())?,
    }
    for (solver, seconds) in cumulative_seconds(&rows) {
        eprintln!("{solver}: {seconds:.6} s over {} subproblems", instances.len());
    }
    Ok(())
}

fn cmd_gen_random(args: &GenRandomArgs) -> Result<()> {
    if args.n == 0 || args.m == 0 {
        bail!("n and m must be positive");
    }
    let inst: Instance = gen_random(args.n, args.m, args.delta, args.alpha, args.seed);
    emit(&write_instance(&inst), args.out.as_deref())
}

fn cmd_gen_knapsack(args: &GenKnapsackArgs) -> Result<()> {
    let red = knapsack_reduce(&args.values, &args.weights, args.budget, args.alpha)?;
    emit(&write_instance(&red.instance), args.out.as_deref())
}

fn cmd_graph(args: &GraphArgs) -> Result<()> {
    let inst = load_instance(&args.instance)?;
    let g = build_explicit(&inst, args.cap)?;
    print!("{}", g.write_edge_list(&inst));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Slip(a) => cmd_slip(a),
        Command::Bench(a) => cmd_bench(a),
        Command::GenRandom(a) => cmd_gen_random(a),
        Command::GenKnapsack(a) => cmd_gen_knapsack(a),
        Command::Graph(a) => cmd_graph(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Library errors already embed their source text; skip repeats.
            let mut msg = String::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !msg.ends_with(&cause) {
                    msg.push_str(if msg.is_empty() { "" } else { ": " });
                    msg.push_str(&cause);
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
