//! One network solve at fixed DER schedules, then the marginal costs it
//! yields along the path from the substation to the farthest transformer.

use dlmc::conic::ClarabelEngine;
use dlmc::coordinator::init_schedules;
use dlmc::der::aggregate_to_nodes;
use dlmc::exactness::relaxation_gap;
use dlmc::gen::{generate_feeder, generate_fleet, GeneratorSpec};
use dlmc::opf::{extract_dlmc, solve_netopt, NetOptions};
use dlmc::scenario::Case;

fn main() -> dlmc::Result<()> {
    let spec = GeneratorSpec::desk(42);
    let model = generate_feeder(&spec)?;
    let fleet = generate_fleet(&spec, &model)?;
    let case = Case::new(model, fleet)?;

    let schedule = init_schedules(&case)?;
    let injections = aggregate_to_nodes(&case.scenario, &schedule, case.feeder.node_count());
    let solution = solve_netopt(&case, &injections, &NetOptions::default(), &ClarabelEngine::default())?;
    let gap = relaxation_gap(&case, &solution.flows, 1e-4);
    let dlmc = extract_dlmc(&solution)?;

    println!("cost {:.4} $ (energy {:.4}, reactive {:.4}, aging {:.4})", solution.cost.system(), solution.cost.real, solution.cost.reactive, solution.cost.degradation);
    println!("relaxation gap {:.2e} p.u., solve {:.3} s", gap.total, solution.solve_time);

    let far = (1..case.feeder.node_count()).max_by_key(|&j| {
        let (mut depth, mut k) = (0, j);
        while k != 0 {
            k = case.feeder.up(k);
            depth += 1;
        }
        depth
    });
    let mut path = vec![far.unwrap_or(1)];
    while *path.last().unwrap() != 0 {
        path.push(case.feeder.up(*path.last().unwrap()));
    }
    path.reverse();
    let peak = (0..case.horizon()).max_by(|&a, &b| case.scenario.price_p[a].total_cmp(&case.scenario.price_p[b])).unwrap();
    println!("hour {} (substation price {:.2} $/MWh):", peak + 1, case.scenario.price_p[peak]);
    for &j in path.iter().skip(1) {
        let kind = if case.feeder.transformer_at(j).is_some() { "transformer" } else { "line" };
        println!("  node {j:2} {kind:<11} lambda_p {:8.4} $/MWh  lambda_q {:7.4} $/MVARh", dlmc.p[j][peak], dlmc.q[j][peak]);
    }
    Ok(())
}
