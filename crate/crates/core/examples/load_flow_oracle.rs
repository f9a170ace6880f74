//! Replays a network solution through the backward-forward sweep and reports
//! how far the convex solution is from exact power-flow physics.

use dlmc::conic::ClarabelEngine;
use dlmc::coordinator::init_schedules;
use dlmc::der::aggregate_to_nodes;
use dlmc::gen::{generate_feeder, generate_fleet, GeneratorSpec};
use dlmc::opf::{solve_netopt, NetOptions};
use dlmc::oracle::{backward_forward_sweep, total_demand};
use dlmc::scenario::Case;

fn main() -> dlmc::Result<()> {
    let spec = GeneratorSpec::desk(42);
    let model = generate_feeder(&spec)?;
    let fleet = generate_fleet(&spec, &model)?;
    let case = Case::new(model, fleet)?;
    let injections = aggregate_to_nodes(&case.scenario, &init_schedules(&case)?, case.feeder.node_count());

    let opf = solve_netopt(&case, &injections, &NetOptions::default(), &ClarabelEngine::default())?;
    let lf = backward_forward_sweep(&case, &total_demand(&case, &injections), case.feeder.root_voltage)?;
    println!("sweep: {} iterations in the slowest hour, residual {:.2e}", lf.iterations, lf.residual);
    println!("max |OPF - load flow| over P, Q, v, l: {:.2e}", opf.flows.max_deviation(&lf.flows));

    let lowest = (1..case.feeder.node_count())
        .flat_map(|j| (0..case.horizon()).map(move |t| (j, t)))
        .min_by(|a, b| lf.flows.v[a.0][a.1].total_cmp(&lf.flows.v[b.0][b.1]))
        .unwrap();
    println!("lowest voltage {:.5} p.u. at node {} hour {}", lf.flows.v[lowest.0][lowest.1].sqrt(), lowest.0, lowest.1 + 1);
    Ok(())
}
