//! A negative energy price makes the relaxed network problem burn power in
//! line losses. The penalty loop restores a physical operating point and the
//! marginal costs are re-derived from it.

use dlmc::conic::ClarabelEngine;
use dlmc::coordinator::init_schedules;
use dlmc::der::aggregate_to_nodes;
use dlmc::exactness::{solve_step_one, ExactnessConfig};
use dlmc::gen::{generate_feeder, generate_fleet, with_price, GeneratorSpec};
use dlmc::opf::NetOptions;
use dlmc::scenario::Case;

fn main() -> dlmc::Result<()> {
    let spec = GeneratorSpec::desk(42);
    let model = generate_feeder(&spec)?;
    let fleet = generate_fleet(&spec, &model)?;
    let hour = 3;
    let case = Case::new(model, with_price(&fleet, hour, -5.0))?;
    let injections = aggregate_to_nodes(&case.scenario, &init_schedules(&case)?, case.feeder.node_count());

    let step = solve_step_one(&case, &injections, &NetOptions::default(), &ExactnessConfig::default(), &ClarabelEngine::default())?;
    println!("relaxed gap {:.3e} p.u. (lines {:.3e}, transformers {:.3e})", step.relaxed_gap.total, step.relaxed_gap.line_total, step.relaxed_gap.transformer_total);
    for (i, g) in step.inner_gaps.iter().enumerate() {
        println!("  accepted iterate {i:2}: gap {:.3e}", g.total);
    }
    println!("{} penalized solves, final gap {:.3e}", step.inner_iterations, step.final_gap.total);

    let per_line = step.relaxed_gap.per_line();
    let mut worst: Vec<usize> = (1..per_line.len()).collect();
    worst.sort_by(|&a, &b| per_line[b].total_cmp(&per_line[a]));
    println!("largest initial gaps:");
    for &j in worst.iter().take(5) {
        let kind = if case.feeder.transformer_at(j).is_some() { "transformer" } else { "line" };
        println!("  node {j:2} {kind:<11} {:.3e}", per_line[j]);
    }
    let sol = &step.solution;
    println!("hour {} price at the substation {:.2} $/MWh, first-line lambda_p {:.3}", hour + 1, case.scenario.price_p[hour], sol.lambda_p[case.feeder.children[0][0]][hour]);
    Ok(())
}
