use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, ValueEnum};

use dlmc::conic::{ClarabelEngine, SolverTolerances};
use dlmc::coordinator::{
    dual_decomposition_baseline, init_schedules, resume_coordination, run_coordination, BaselineConfig, Checkpoint, CoordinatorConfig,
};
use dlmc::der::aggregate_to_nodes;
use dlmc::gen::{generate_feeder, generate_fleet, preset, spec_from_toml, GeneratorSpec};
use dlmc::io::{read_feeder, read_scenario, save_feeder, save_scenario, summarize};
use dlmc::opf::{LimitMode, SoftLimitConfig};
use dlmc::oracle::{backward_forward_sweep, centralized_benchmark, total_demand};
use dlmc::report;
use dlmc::scenario::Case;
use dlmc::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Coordinate,
    Centralized,
    BaselineDual,
    Loadflow,
    Generate,
    Validate,
    Report,
}

/// Day-ahead feeder coordination with distribution locational marginal costs.
///
/// Solver tolerances can be overridden through DLMC_SOLVER_TOL, for example
/// `DLMC_SOLVER_TOL="feas=1e-8,gap=1e-9,max_iter=300"`.
#[derive(Debug, Parser)]
#[command(name = "dlmc", version)]
struct Cli {
    #[arg(long, value_enum, default_value = "coordinate")]
    mode: Mode,

    /// Feeder TOML file. Without it the seeded desk feeder is generated.
    #[arg(long)]
    feeder: Option<PathBuf>,

    /// Scenario TOML file (prices, ambient, EVs, PVs). Requires --feeder.
    #[arg(long, requires = "feeder")]
    scenario: Option<PathBuf>,

    /// Generator spec for `generate`: a TOML path or one of desk, paper, paper-pv.
    #[arg(long, default_value = "desk")]
    spec: String,

    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Output directory (the run directory for `report`).
    #[arg(long, default_value = "run")]
    out: PathBuf,

    #[arg(long, default_value_t = 200)]
    max_iters: usize,

    /// Initial proximal weight σ.
    #[arg(long, default_value_t = 1e-4)]
    sigma: f64,

    /// Relaxation gap threshold τ (p.u.).
    #[arg(long, default_value_t = 1e-4)]
    tau: f64,

    /// Soft voltage-limit weight M^v.
    #[arg(long, default_value_t = 5000.0)]
    mv: f64,

    /// Soft current-limit weight M^l.
    #[arg(long, default_value_t = 1000.0)]
    ml: f64,

    /// Initial penalty weight ρ̄⁰ of the gap-recovery loop.
    #[arg(long, default_value_t = 0.005)]
    rho0: f64,

    /// Also solve the centralized benchmark and record its cost.
    #[arg(long)]
    compare: bool,

    /// Resume a coordination run from this checkpoint file.
    #[arg(long)]
    resume: Option<PathBuf>,
}

fn load_case(cli: &Cli) -> Result<Case> {
    match (&cli.feeder, &cli.scenario) {
        (Some(f), Some(s)) => {
            let model = read_feeder(f)?;
            let scenario = read_scenario(s, &model.base)?;
            Case::new(model, scenario)
        }
        (Some(f), None) => {
            let model = read_feeder(f)?;
            let spec = GeneratorSpec::desk(cli.seed);
            let scenario = generate_fleet(&spec, &model)?;
            Case::new(model, scenario)
        }
        _ => {
            let spec = GeneratorSpec::desk(cli.seed);
            let model = generate_feeder(&spec)?;
            let scenario = generate_fleet(&spec, &model)?;
            Case::new(model, scenario)
        }
    }
}

fn coordinator_config(cli: &Cli) -> Result<CoordinatorConfig> {
    let mut config = CoordinatorConfig::default();
    config.convergence.max_iterations = cli.max_iters;
    config.proximal.sigma = cli.sigma;
    config.exactness.tau = cli.tau;
    config.exactness.schedule.initial = cli.rho0;
    config.network.limits = LimitMode::Soft(SoftLimitConfig { voltage_weight: cli.mv, current_weight: cli.ml });
    config.checkpoint = Some(cli.out.join("checkpoint.toml"));
    for (name, value) in [("--sigma", cli.sigma), ("--tau", cli.tau), ("--mv", cli.mv), ("--ml", cli.ml), ("--rho0", cli.rho0)] {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::Invalid(format!("{name} must be positive, got {value}")));
        }
    }
    config.convergence.check()?;
    Ok(config)
}

fn spec_for(cli: &Cli) -> Result<GeneratorSpec> {
    let path = Path::new(&cli.spec);
    if path.extension().is_some_and(|e| e == "toml") || path.is_file() {
        let text = std::fs::read_to_string(path)?;
        spec_from_toml(&text)
    } else {
        preset(&cli.spec, cli.seed)
    }
}

/// Returns whether the run reached its goal.
fn run(cli: &Cli) -> Result<bool> {
    let started = Instant::now();
    let engine = || SolverTolerances::from_env().map(ClarabelEngine::new);
    match cli.mode {
        Mode::Generate => {
            let spec = spec_for(cli)?;
            let model = generate_feeder(&spec)?;
            let scenario = generate_fleet(&spec, &model)?;
            std::fs::create_dir_all(&cli.out)?;
            std::fs::write(cli.out.join("feeder.toml"), save_feeder(&model)?)?;
            std::fs::write(cli.out.join("scenario.toml"), save_scenario(&scenario)?)?;
            println!(
                "wrote {} and {} ({} nodes, {} EVs, {} PVs)",
                cli.out.join("feeder.toml").display(),
                cli.out.join("scenario.toml").display(),
                model.node_count(),
                scenario.evs.len(),
                scenario.pvs.len()
            );
            Ok(true)
        }
        Mode::Validate => {
            let case = load_case(cli)?;
            for (k, v) in summarize(&case.feeder) {
                println!("{k:>14} {v}");
            }
            println!("{:>14} {}", "evs", case.scenario.evs.len());
            println!("{:>14} {}", "pvs", case.scenario.pvs.len());
            println!("valid");
            Ok(true)
        }
        Mode::Report => {
            for path in report::build_report(&cli.out)? {
                println!("{}", path.display());
            }
            Ok(true)
        }
        Mode::Loadflow => {
            let case = load_case(cli)?;
            let schedule = init_schedules(&case)?;
            let inj = aggregate_to_nodes(&case.scenario, &schedule, case.feeder.node_count());
            let lf = backward_forward_sweep(&case, &total_demand(&case, &inj), case.feeder.root_voltage)?;
            report::write_loadflow(&cli.out, &case, &lf, started.elapsed().as_secs_f64())?;
            println!("load flow: {} sweeps, residual {:.2e}", lf.iterations, lf.residual);
            Ok(true)
        }
        Mode::Centralized => {
            let case = load_case(cli)?;
            let config = coordinator_config(cli)?;
            let bench = centralized_benchmark(&case, &config.network, &config.exactness, &engine()?)?;
            report::write_centralized(&cli.out, &case, &bench, started.elapsed().as_secs_f64())?;
            println!("centralized cost {:.6} $, gap {:.2e}", bench.cost, bench.gap.total);
            Ok(true)
        }
        Mode::BaselineDual => {
            let case = load_case(cli)?;
            let config = coordinator_config(cli)?;
            let baseline = BaselineConfig { max_iterations: cli.max_iters, ..BaselineConfig::default() };
            let trace = dual_decomposition_baseline(&case, &config.network, &baseline, &engine()?)?;
            report::write_baseline(&cli.out, &case, &trace, started.elapsed().as_secs_f64())?;
            let last = trace.records.last().map_or(f64::NAN, |r| r.imbalance);
            println!("baseline: {} iterations, final imbalance {:.2e}, best dual {:.6}", trace.records.len(), last, trace.best_dual());
            Ok(last <= baseline.imbalance_tol)
        }
        Mode::Coordinate => {
            let case = load_case(cli)?;
            let config = coordinator_config(cli)?;
            std::fs::create_dir_all(&cli.out)?;
            let solver = engine()?;
            let outcome = match &cli.resume {
                Some(path) => resume_coordination(&case, &Checkpoint::load(path)?, &config, &solver)?,
                None => run_coordination(&case, &config, &solver)?,
            };
            let benchmark = if cli.compare {
                Some(centralized_benchmark(&outcome.case, &config.network, &config.exactness, &solver)?.cost)
            } else {
                None
            };
            report::write_coordination(&cli.out, &outcome, benchmark, started.elapsed().as_secs_f64())?;
            let status = if outcome.converged { "converged" } else { "iteration cap" };
            println!("{status} after {} iterations, cost {:.6} $, gap {:.2e}", outcome.iterations, outcome.solution.cost.system(), outcome.gap.total);
            if let Some(b) = benchmark {
                println!("centralized benchmark {b:.6} $ (difference {:.2e})", outcome.solution.cost.system() - b);
            }
            Ok(outcome.converged)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("dlmc: {e}");
            ExitCode::from(2)
        }
    }
}
