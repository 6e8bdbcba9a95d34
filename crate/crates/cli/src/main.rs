//! Command-line front end: generate instances, solve designs by any method,
//! compare methods across budgets, and run the verification suite.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 infeasible instance,
//! 4 numeric failure; `verify` exits 1 when a property check fails.

mod verify;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use esp_design::data::{generate, load_csv, save_csv, ColumnSelector, Dataset, SyntheticSpec};
use esp_design::discretize::{
    fedorov_exchange, greedy_from_relaxation, sample_rounding, uniform_baseline, Method,
};
use esp_design::objective::f_discrete;
use esp_design::solver::{solve_relaxation, support, DEFAULT_SUPPORT_EPS};
use esp_design::{DesignMatrix, Error, ObjectiveOrder, SolverConfig, Subset};

/// Fedorov exchange runs to a fixed point well before this cap.
const MAX_SWEEPS: usize = 10_000;

#[derive(Parser)]
#[command(name = "esp-design", version, about = "Optimal design scored by elementary symmetric polynomials")]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Generate a synthetic instance and write it as CSV.
    Datagen(DatagenArgs),
    /// Select a design of size k by one or more methods.
    Solve(SolveArgs),
    /// Run several methods over a budget grid and write comparison tables.
    Compare(CompareArgs),
    /// Run the oracle and property verification suite.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    /// Rows drawn from N(0, K^{-1}) for a random sparse precision K.
    Sparse,
    /// Rows drawn from N(0, Diag(j^{-alpha})).
    Skewed,
}

#[derive(Args)]
struct DatagenArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Number of candidate experiments (rows).
    #[arg(long)]
    n: usize,
    /// Number of design parameters (columns).
    #[arg(long)]
    m: usize,
    /// Off-diagonal fill probability of the sparse precision, in (0, 1].
    #[arg(long, default_value_t = 0.5)]
    density: f64,
    /// Spectrum decay exponent of the skewed covariance, >= 0.
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

/// Where the design matrix comes from: a CSV file or a generator.
#[derive(Args)]
struct SourceArgs {
    /// CSV file of experiments (header row required).
    #[arg(long, conflicts_with = "kind")]
    input: Option<PathBuf>,
    /// Response column of the input CSV, by name or zero-based index.
    #[arg(long, requires = "input")]
    response: Option<String>,
    /// Rescale every feature column of the input CSV to unit norm.
    #[arg(long, requires = "input")]
    normalize: bool,
    /// Synthetic family to draw when no input file is given.
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    density: f64,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// ESP order of the objective, 1 <= l <= m.
    #[arg(long)]
    l: usize,
    /// Design budget.
    #[arg(long)]
    k: usize,
    /// Method to run; repeat the flag to run several.
    #[arg(long = "method", value_parser = parse_method, default_values = ["greedy"])]
    methods: Vec<Method>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    step_init: Option<f64>,
    #[arg(long)]
    tol_obj: Option<f64>,
    #[arg(long)]
    tol_grad: Option<f64>,
    /// Also write the records as a CSV table.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long)]
    l: usize,
    /// Budgets to sweep, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    ks: Vec<usize>,
    /// Methods to compare; repeat to add more.
    #[arg(
        long = "method",
        value_parser = parse_method,
        default_values = ["unif-fdv", "greedy", "greedy-fdv", "sample"]
    )]
    methods: Vec<Method>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving curves.csv, intersections.csv, and support.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Run only checks whose name starts with this prefix.
    #[arg(long)]
    only: Option<String>,
    /// Corrupt one check to demonstrate failure reporting.
    #[arg(long, hide = true)]
    inject_perturbation: bool,
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::from_str(s).map_err(|e| e.to_string())
}

/// One solved design, one output row.
#[derive(Serialize)]
struct RunRecord {
    method: &'static str,
    l: usize,
    k: usize,
    n: usize,
    m: usize,
    objective: f64,
    wall_time_s: f64,
    seed: u64,
    /// Total selected weight: exactly `k` for discrete methods, `||z||_1`
    /// for the relaxation.
    mass: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    support_size: Option<usize>,
    /// Zero-based row indices; the relaxation reports its support here.
    subset: Vec<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = init_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let outcome = match cli.command {
        Commands::Datagen(args) => cmd_datagen(&args).map(|()| 0),
        Commands::Solve(args) => cmd_solve(&args).map(|()| 0),
        Commands::Compare(args) => cmd_compare(&args).map(|()| 0),
        Commands::Verify(args) => Ok(verify::run(args.only.as_deref(), args.inject_perturbation)),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidInput(_) | Error::BudgetExceeded(_) | Error::Csv { .. } => 2,
        Error::NotPositiveDefinite(_)
        | Error::InfeasibleDesign(_)
        | Error::InfeasibleProblem(_)
        | Error::CannotRound(_)
        | Error::StuckInfeasible { .. } => 3,
        Error::NumericFailure { .. } => 4,
    }
}

/// Honors ESP_DESIGN_THREADS as a cap on library parallelism.
fn init_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("ESP_DESIGN_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t >= 1)
        .ok_or_else(|| format!("ESP_DESIGN_THREADS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| format!("failed to configure the thread pool: {e}"))
}

fn build_spec(
    kind: KindArg,
    n: usize,
    m: usize,
    density: f64,
    alpha: f64,
    seed: u64,
) -> Result<SyntheticSpec, Error> {
    match kind {
        KindArg::Sparse => SyntheticSpec::sparse_precision(n, m, density, seed),
        KindArg::Skewed => SyntheticSpec::skewed(n, m, alpha, seed),
    }
}

fn cmd_datagen(args: &DatagenArgs) -> Result<(), Error> {
    let spec = build_spec(args.kind, args.n, args.m, args.density, args.alpha, args.seed)?;
    let data = generate(&spec)?;
    save_csv(&data, &args.out)
}

fn load_instance(source: &SourceArgs, seed: u64) -> Result<Dataset, Error> {
    if let Some(path) = &source.input {
        let selector = source.response.as_ref().map(|raw| match raw.parse::<usize>() {
            Ok(idx) => ColumnSelector::Index(idx),
            Err(_) => ColumnSelector::Name(raw.clone()),
        });
        return load_csv(path, selector.as_ref(), source.normalize);
    }
    let (Some(kind), Some(n), Some(m)) = (source.kind, source.n, source.m) else {
        return Err(Error::InvalidInput(
            "provide --input FILE, or --kind with --n and --m".into(),
        ));
    };
    generate(&build_spec(kind, n, m, source.density, source.alpha, seed)?)
}

fn build_cfg(args: &SolveArgs) -> SolverConfig {
    let mut cfg = SolverConfig {
        seed: args.seed,
        ..SolverConfig::default()
    };
    if let Some(v) = args.max_iters {
        cfg.max_iters = v;
    }
    if let Some(v) = args.step_init {
        cfg.step_init = v;
    }
    if let Some(v) = args.tol_obj {
        cfg.tol_obj = v;
    }
    if let Some(v) = args.tol_grad {
        cfg.tol_grad = v;
    }
    cfg
}

/// Runs one method end to end (including any internal relaxation solve) and
/// reports its own wall time.
fn run_method(
    x: &DesignMatrix,
    method: Method,
    k: usize,
    order: ObjectiveOrder,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<RunRecord, Error> {
    let start = Instant::now();
    let (objective, mass, support_size, subset) = match method {
        Method::Relax => {
            let rep = solve_relaxation(x, k, order, cfg)?;
            let wall = start.elapsed().as_secs_f64();
            let supp: Vec<usize> = rep
                .final_weights
                .vector()
                .iter()
                .enumerate()
                .filter(|(_, &z)| z > DEFAULT_SUPPORT_EPS)
                .map(|(i, _)| i)
                .collect();
            return Ok(RunRecord {
                method: method.tag(),
                l: order.get(),
                k,
                n: x.n(),
                m: x.m(),
                objective: rep.objective(),
                wall_time_s: wall,
                seed,
                mass: rep.final_weights.mass(),
                support_size: Some(support(&rep.final_weights, DEFAULT_SUPPORT_EPS)),
                subset: supp,
            });
        }
        Method::Unif => {
            let s = uniform_baseline(x, k, seed)?;
            finish_discrete(x, s, order)?
        }
        Method::UnifFdv => {
            let s0 = uniform_baseline(x, k, seed)?;
            let s = fedorov_exchange(x, k, order, &s0, MAX_SWEEPS)?;
            finish_discrete(x, s, order)?
        }
        Method::Greedy => {
            let s = greedy_from_relaxation(x, k, order, cfg)?;
            finish_discrete(x, s, order)?
        }
        Method::GreedyFdv => {
            let s0 = greedy_from_relaxation(x, k, order, cfg)?;
            let s = fedorov_exchange(x, k, order, &s0, MAX_SWEEPS)?;
            finish_discrete(x, s, order)?
        }
        Method::Sample => {
            let rep = solve_relaxation(x, k, order, cfg)?;
            let s = sample_rounding(&rep.final_weights, k, seed)?.subset;
            finish_discrete(x, s, order)?
        }
    };
    Ok(RunRecord {
        method: method.tag(),
        l: order.get(),
        k,
        n: x.n(),
        m: x.m(),
        objective,
        wall_time_s: start.elapsed().as_secs_f64(),
        seed,
        mass,
        support_size,
        subset,
    })
}

type DiscreteOutcome = (f64, f64, Option<usize>, Vec<usize>);

fn finish_discrete(
    x: &DesignMatrix,
    s: Subset,
    order: ObjectiveOrder,
) -> Result<DiscreteOutcome, Error> {
    let objective = f_discrete(x, &s, order)?;
    Ok((objective, s.len() as f64, None, s.indices().to_vec()))
}

fn cmd_solve(args: &SolveArgs) -> Result<(), Error> {
    let data = load_instance(&args.source, args.seed)?;
    let x = data.x();
    let order = ObjectiveOrder::new(args.l, x.m())?;
    let cfg = build_cfg(args);
    let mut records = Vec::with_capacity(args.methods.len());
    for &method in &args.methods {
        let record = run_method(x, method, args.k, order, &cfg, args.seed)?;
        println!("{}", serde_json::to_string(&record).expect("record serializes"));
        records.push(record);
    }
    if let Some(path) = &args.out {
        write_records_csv(&records, path)?;
    }
    Ok(())
}

fn csv_error(e: impl std::fmt::Display) -> Error {
    Error::Csv {
        row: None,
        column: None,
        msg: e.to_string(),
    }
}

fn write_records_csv(records: &[RunRecord], path: &std::path::Path) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record([
        "method",
        "l",
        "k",
        "n",
        "m",
        "objective",
        "wall_time_s",
        "seed",
        "mass",
        "support_size",
        "subset",
    ])
    .map_err(csv_error)?;
    for r in records {
        let subset = r
            .subset
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        w.write_record([
            r.method.to_string(),
            r.l.to_string(),
            r.k.to_string(),
            r.n.to_string(),
            r.m.to_string(),
            format!("{}", r.objective),
            format!("{}", r.wall_time_s),
            r.seed.to_string(),
            format!("{}", r.mass),
            r.support_size.map(|v| v.to_string()).unwrap_or_default(),
            subset,
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(csv_error)
}

fn cmd_compare(args: &CompareArgs) -> Result<(), Error> {
    let data = load_instance(&args.source, args.seed)?;
    let x = data.x();
    let order = ObjectiveOrder::new(args.l, x.m())?;
    let cfg = SolverConfig {
        seed: args.seed,
        ..SolverConfig::default()
    };
    std::fs::create_dir_all(&args.out_dir).map_err(csv_error)?;

    let mut curves: Vec<RunRecord> = Vec::new();
    let mut subsets: Vec<(usize, Method, Subset)> = Vec::new();
    let mut supports: Vec<(usize, usize)> = Vec::new();
    for &k in &args.ks {
        for &method in &args.methods {
            let record = run_method(x, method, k, order, &cfg, args.seed)?;
            println!("{}", serde_json::to_string(&record).expect("record serializes"));
            if method != Method::Relax {
                let s = Subset::new(record.subset.clone(), k)?;
                subsets.push((k, method, s));
            }
            curves.push(record);
        }
        // Support-size table from the relaxation at each budget.
        let rep = solve_relaxation(x, k, order, &cfg)?;
        supports.push((k, support(&rep.final_weights, DEFAULT_SUPPORT_EPS)));
    }
    write_records_csv(&curves, &args.out_dir.join("curves.csv"))?;

    let mut w =
        csv::Writer::from_path(args.out_dir.join("intersections.csv")).map_err(csv_error)?;
    w.write_record(["k", "method_a", "method_b", "common"])
        .map_err(csv_error)?;
    for i in 0..subsets.len() {
        for j in i..subsets.len() {
            let (ka, ma, sa) = &subsets[i];
            let (kb, mb, sb) = &subsets[j];
            if ka != kb {
                continue;
            }
            w.write_record([
                ka.to_string(),
                ma.tag().to_string(),
                mb.tag().to_string(),
                sa.intersection_count(sb).to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush().map_err(csv_error)?;

    let mut w = csv::Writer::from_path(args.out_dir.join("support.csv")).map_err(csv_error)?;
    w.write_record(["k", "l", "n", "m", "support_size", "support_limit", "seed"])
        .map_err(csv_error)?;
    let limit = |k: usize| k + x.m() * (x.m() + 1) / 2;
    for (k, supp) in supports {
        w.write_record([
            k.to_string(),
            order.get().to_string(),
            x.n().to_string(),
            x.m().to_string(),
            supp.to_string(),
            limit(k).to_string(),
            args.seed.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(csv_error)
}
