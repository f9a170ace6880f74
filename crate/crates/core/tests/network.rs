use dlmc::conic::ClarabelEngine;
use dlmc::coordinator::init_schedules;
use dlmc::der::aggregate_to_nodes;
use dlmc::exactness::relaxation_gap;
use dlmc::gen::{generate_feeder, generate_fleet, GeneratorSpec};
use dlmc::opf::{solve_netopt, LimitMode, NetOptions, NodalInjections};
use dlmc::oracle::replay_deviation;
use dlmc::scenario::Case;
use dlmc::thermal::{temperature_trajectory, ThermalMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn desk() -> Case {
    let spec = GeneratorSpec::desk(42);
    let model = generate_feeder(&spec).unwrap();
    let fleet = generate_fleet(&spec, &model).unwrap();
    Case::new(model, fleet).unwrap()
}

fn initial_injections(case: &Case) -> NodalInjections {
    let schedule = init_schedules(case).unwrap();
    aggregate_to_nodes(&case.scenario, &schedule, case.feeder.node_count())
}

#[test]
fn top_oil_recursion_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let horizon = rng.gen_range(1..48);
        let delta = rng.gen_range(0.5..0.99);
        let epsilon = rng.gen_range(0.1..30.0);
        let h0 = rng.gen_range(20.0..90.0);
        let l: Vec<f64> = (0..horizon).map(|_| rng.gen_range(0.0..1.5)).collect();
        let zeta: Vec<f64> = (0..horizon).map(|_| rng.gen_range(0.0..8.0)).collect();
        let traj = temperature_trajectory(h0, &l, &zeta, delta, epsilon).unwrap();
        let last = *traj.h.last().unwrap();
        assert!((last - traj.closed_form_final).abs() <= 1e-10 * last.abs().max(1.0));
    }
}

#[test]
fn opf_solution_replays_through_the_load_flow() {
    let case = desk();
    let inj = initial_injections(&case);
    let sol = solve_netopt(&case, &inj, &NetOptions::default(), &ClarabelEngine::default()).unwrap();
    assert!(relaxation_gap(&case, &sol.flows, 1e-4).exact);
    let dev = replay_deviation(&case, &sol, &inj).unwrap();
    assert!(dev <= 1e-6, "replay deviation {dev:.3e}");
}

#[test]
fn pinned_mode_with_cyclic_dual_reproduces_the_cyclic_solution() {
    let case = desk();
    let inj = initial_injections(&case);
    let engine = ClarabelEngine::default();
    let cyclic = solve_netopt(&case, &inj, &NetOptions::default(), &engine).unwrap();
    let pinned_options = NetOptions {
        thermal: ThermalMode::Pinned {
            rho: cyclic.thermal.rho.clone(),
            initial: Some(cyclic.thermal.h.iter().map(|h| h[0]).collect()),
        },
        ..NetOptions::default()
    };
    let pinned = solve_netopt(&case, &inj, &pinned_options, &engine).unwrap();
    assert!(pinned.flows.max_deviation(&cyclic.flows) <= 1e-5);
    for (a, b) in pinned.thermal.h.iter().zip(&cyclic.thermal.h) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-4, "top oil {x} vs {y}");
        }
    }
    assert!((pinned.cost.system() - cyclic.cost.system()).abs() <= 1e-5);
}

#[test]
fn soft_and_hard_limits_agree_when_no_limit_binds() {
    let case = desk();
    let inj = initial_injections(&case);
    let engine = ClarabelEngine::default();
    let soft = solve_netopt(&case, &inj, &NetOptions::default(), &engine).unwrap();
    assert!(soft.slack_v.iter().flatten().chain(soft.slack_l.iter().flatten()).all(|s| s.abs() <= 1e-7));
    let hard = solve_netopt(&case, &inj, &NetOptions { limits: LimitMode::Hard, ..NetOptions::default() }, &engine).unwrap();
    assert!((soft.cost.system() - hard.cost.system()).abs() <= 1e-5);
    for j in 1..case.feeder.node_count() {
        for t in 0..case.horizon() {
            assert!((soft.lambda_p[j][t] - hard.lambda_p[j][t]).abs() <= 1e-3, "λP at ({j},{t})");
            assert!((soft.lambda_q[j][t] - hard.lambda_q[j][t]).abs() <= 1e-3, "λQ at ({j},{t})");
        }
    }
}

#[test]
fn network_duals_are_balance_feasible_every_hour() {
    let case = desk();
    let inj = initial_injections(&case);
    let sol = solve_netopt(&case, &inj, &NetOptions::default(), &ClarabelEngine::default()).unwrap();
    assert!(sol.balance_residual <= 1e-7);
    assert!(sol.duals_valid);
    let root = case.feeder.children[0][0];
    for t in 0..case.horizon() {
        // The first line's receiving end is priced at the substation price plus losses.
        assert!(sol.lambda_p[root][t] >= case.scenario.price_p[t] - 1e-3);
    }
}
