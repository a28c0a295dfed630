//! Command-line front end.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use zr_stefan::harness::acceptance;
use zr_stefan::harness::config::{load_plan, ExperimentKind, ExperimentPlan};
use zr_stefan::harness::execute;
use zr_stefan::{Error, JumpRateSpec, Result, ThermoTable};

#[derive(Parser)]
#[command(name = "zr-stefan", version, about = "Two-species zero-range particle system, its reaction-diffusion limit and the Stefan problem")]
struct Cli {
    /// Worker threads for replicas and sweep rungs (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the per-replica event budget.
    #[arg(long)]
    budget: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RateArg {
    Linear,
    Affine,
}

#[derive(Subcommand)]
enum Command {
    /// Dump partition function, density and variance against the fugacity.
    Thermo {
        #[arg(long, value_enum, default_value = "linear")]
        rate: RateArg,
        /// Offset `a` of the affine rate `g(k) = k + a 1{k >= 1}`.
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        /// Largest density `M_u` covered by the table.
        #[arg(long, default_value_t = 5.0)]
        max_density: f64,
        #[arg(long, default_value_t = 201)]
        points: usize,
        /// Output CSV (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replica runs of the particle system.
    Simulate(RunArgs),
    /// Semi-discrete PDE runs with a priori estimates.
    Pde(RunArgs),
    /// Stefan refinement study with weak-form residuals.
    Stefan(RunArgs),
    /// Particles against the PDE along the grid list.
    HydroSweep(RunArgs),
    /// PDE along the (K, epsilon) ladder against the Stefan reference.
    FastReactionSweep(RunArgs),
    /// Runs acceptance criteria (all when none are given).
    Check {
        /// Criterion numbers 1-10.
        criteria: Vec<usize>,
        /// Also write the outcomes as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn resolve(args: &RunArgs, kinds: &[ExperimentKind]) -> Result<ExperimentPlan> {
    let mut plan = load_plan(&args.config)?;
    if !kinds.contains(&plan.kind) {
        return Err(Error::Config(format!(
            "{} holds a `{}` plan; this subcommand runs {}",
            args.config.display(),
            plan.kind.name(),
            kinds.iter().map(|k| k.name()).collect::<Vec<_>>().join(" or ")
        )));
    }
    if let Some(s) = args.seed {
        plan.seed = s;
    }
    if let Some(o) = &args.out {
        plan.output_dir = o.clone();
    }
    if let Some(b) = args.budget {
        plan.budget = b;
    }
    Ok(plan)
}

fn run(args: &RunArgs, kinds: &[ExperimentKind]) -> Result<()> {
    let plan = resolve(args, kinds)?;
    let (out, files) = execute(&plan)?;
    for row in &out.table.rows {
        let se = row.std_error.map(|s| format!(" ± {s:.2e}")).unwrap_or_default();
        println!("N={:<5} K={:<10.4e} eps={:<10.4e} {:<24} {:.6e}{se}", row.n, row.k, row.epsilon, row.metric, row.value);
    }
    println!("wrote {}", files.dir.display());
    Ok(())
}

fn thermo(rate: RateArg, a: f64, max_density: f64, points: usize, out: Option<PathBuf>) -> Result<()> {
    let spec = match rate {
        RateArg::Linear => JumpRateSpec::linear(),
        RateArg::Affine => JumpRateSpec::affine(a)?,
    };
    let table = ThermoTable::new(spec, max_density)?;
    match out {
        Some(path) => table.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?), points),
        None => table.write_csv(std::io::stdout().lock(), points),
    }
}

fn check(criteria: &[usize], out: Option<PathBuf>) -> Result<bool> {
    if let Some(&bad) = criteria.iter().find(|&&c| !(1..=acceptance::CRITERIA.len()).contains(&c)) {
        return Err(Error::Config(format!("no criterion {bad}; choose from 1-10")));
    }
    let outcomes = acceptance::run_selected(criteria, |o| println!("{o}"));
    if let Some(path) = out {
        std::fs::write(path, serde_json::to_string_pretty(&outcomes)?)?;
    }
    Ok(outcomes.iter().all(|o| o.passed))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size the thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    use ExperimentKind as K;
    let result = match cli.command {
        Command::Thermo { rate, a, max_density, points, out } => thermo(rate, a, max_density, points, out),
        Command::Simulate(args) => run(&args, &[K::Simulate, K::Stationarity]),
        Command::Pde(args) => run(&args, &[K::Pde]),
        Command::Stefan(args) => run(&args, &[K::Stefan]),
        Command::HydroSweep(args) => run(&args, &[K::Hydrodynamic]),
        Command::FastReactionSweep(args) => run(&args, &[K::FastReaction]),
        Command::Check { criteria, out } => match check(&criteria, out) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::FAILURE,
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ (Error::Config(_) | Error::Toml(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
