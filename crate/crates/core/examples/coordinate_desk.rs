//! Full coordination run on the desk feeder, compared with the centralized
//! benchmark.
//!
//! `RUST_LOG=info cargo run --release --example coordinate_desk`

use dlmc::conic::{ClarabelEngine, SolverTolerances};
use dlmc::coordinator::{run_coordination, CoordinatorConfig};
use dlmc::gen::{generate_feeder, generate_fleet, GeneratorSpec};
use dlmc::oracle::centralized_benchmark;
use dlmc::scenario::Case;

fn main() -> dlmc::Result<()> {
    env_logger::init();
    let spec = GeneratorSpec::desk(42);
    let model = generate_feeder(&spec)?;
    let fleet = generate_fleet(&spec, &model)?;
    let case = Case::new(model, fleet)?;
    let engine = ClarabelEngine::new(SolverTolerances::from_env()?);
    let config = CoordinatorConfig::default();

    let outcome = run_coordination(&case, &config, &engine)?;
    println!(" iter       cost      energy   reactive    aging      gap      sigma   delta");
    for r in &outcome.trace.records {
        println!(
            "{:5} {:10.5} {:10.4} {:10.4} {:8.4} {:9.1e} {:9.1e} {:8.1e}{}",
            r.iteration,
            r.cost,
            r.real,
            r.reactive,
            r.degradation,
            r.gap,
            r.sigma,
            r.schedule_delta,
            if r.model_changed { "  breakpoints refined" } else { "" }
        );
    }
    let bench = centralized_benchmark(&outcome.case, &config.network, &config.exactness, &engine)?;
    let cost = outcome.solution.cost.system();
    println!("converged {} after {} iterations", outcome.converged, outcome.iterations);
    println!("decomposition {cost:.5} $, centralized {:.5} $, difference {:.2e} $", bench.cost, cost - bench.cost);
    Ok(())
}
