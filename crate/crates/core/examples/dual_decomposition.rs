//! The dual-decomposition baseline next to the proximal method: prices move
//! with the imbalance, so intermediate iterates violate the power balance.

use dlmc::conic::ClarabelEngine;
use dlmc::coordinator::{dual_decomposition_baseline, run_coordination, BaselineConfig, CoordinatorConfig};
use dlmc::gen::{generate_feeder, generate_fleet, GeneratorSpec};
use dlmc::opf::NetOptions;
use dlmc::scenario::Case;

fn main() -> dlmc::Result<()> {
    let spec = GeneratorSpec::desk(42);
    let model = generate_feeder(&spec)?;
    let fleet = generate_fleet(&spec, &model)?;
    let case = Case::new(model, fleet)?;
    let engine = ClarabelEngine::default();

    let baseline = dual_decomposition_baseline(&case, &NetOptions::default(), &BaselineConfig { max_iterations: 20, ..BaselineConfig::default() }, &engine)?;
    let proximal = run_coordination(&case, &CoordinatorConfig { convergence: dlmc::coordinator::ConvergenceConfig { max_iterations: 20, ..Default::default() }, ..Default::default() }, &engine)?;
    println!(" iter   dual imbalance   dual bound   proximal residual   proximal cost");
    for (b, p) in baseline.records.iter().zip(&proximal.trace.records) {
        println!("{:5} {:16.3e} {:12.4} {:19.3e} {:15.4}", b.iteration, b.imbalance, b.dual_value, p.balance_residual, p.cost);
    }
    Ok(())
}
