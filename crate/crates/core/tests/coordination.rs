use dlmc::conic::ClarabelEngine;
use dlmc::coordinator::{
    dual_decomposition_baseline, init_schedules, resume_coordination, run_coordination, BaselineConfig, Checkpoint, CoordinatorConfig,
};
use dlmc::exactness::ExactnessConfig;
use dlmc::gen::{generate_feeder, generate_fleet, GeneratorSpec};
use dlmc::opf::{solve_netopt, NetOptions, NodalInjections};
use dlmc::oracle::centralized_benchmark;
use dlmc::scenario::{Case, EvParams, PvParams, Scenario};

fn desk() -> Case {
    let spec = GeneratorSpec::desk(42);
    let model = generate_feeder(&spec).unwrap();
    let fleet = generate_fleet(&spec, &model).unwrap();
    Case::new(model, fleet).unwrap()
}

fn desk_with(price_p: Vec<f64>, evs: Vec<EvParams>, pvs: Vec<PvParams>) -> Case {
    let base = desk();
    let mut scenario = Scenario::network_only(price_p, base.scenario.ambient.clone());
    scenario.evs = evs;
    scenario.pvs = pvs;
    Case::new(base.feeder, scenario).unwrap()
}

fn ev(window: Vec<usize>, energy: f64) -> EvParams {
    EvParams { node: 3, window, energy, charger: 0.0066, inverter: 0.0072 }
}

#[test]
fn flat_prices_spread_initial_charging_uniformly() {
    let case = desk_with(vec![40.0; 24], vec![ev((18..24).collect(), 0.012)], vec![]);
    let s = init_schedules(&case).unwrap();
    for t in 18..24 {
        assert!((s.ev[0].p[t] - 0.002).abs() <= 1e-12, "hour {t}: {}", s.ev[0].p[t]);
    }
    assert!(s.ev[0].p[..18].iter().all(|&p| p == 0.0));
}

#[test]
fn cheap_valley_is_filled_to_the_charger_limit_first() {
    let mut prices = vec![40.0; 24];
    prices[2] = 20.0;
    prices[3] = 20.0;
    prices[4] = 30.0;
    let case = desk_with(prices, vec![ev((0..8).collect(), 2.5 * 0.0066)], vec![]);
    let s = init_schedules(&case).unwrap();
    assert!((s.ev[0].p[2] - 0.0066).abs() <= 1e-12);
    assert!((s.ev[0].p[3] - 0.0066).abs() <= 1e-12);
    assert!((s.ev[0].p[4] - 0.0033).abs() <= 1e-12);
    let others: f64 = [0, 1, 5, 6, 7].iter().map(|&t| s.ev[0].p[t]).sum();
    assert!(others.abs() <= 1e-12);
}

#[test]
fn initial_pv_output_is_available_power_at_unit_power_factor() {
    let irradiance: Vec<f64> = (0..24).map(|t| if (7..18).contains(&t) { ((t - 6) as f64 / 12.0 * std::f64::consts::PI).sin() } else { 0.0 }).collect();
    let pv = PvParams { node: 5, nameplate: 0.01, irradiance: irradiance.clone() };
    let case = desk_with(vec![40.0; 24], vec![], vec![pv]);
    let s = init_schedules(&case).unwrap();
    for t in 0..24 {
        assert!((s.pv[0].p[t] - 0.01 * irradiance[t]).abs() <= 1e-15);
        assert_eq!(s.pv[0].q[t], 0.0);
    }
}

#[test]
fn zero_der_scenario_converges_in_one_iteration_to_the_network_solve() {
    let case = desk().without_ders();
    let engine = ClarabelEngine::default();
    let out = run_coordination(&case, &CoordinatorConfig::default(), &engine).unwrap();
    assert!(out.converged);
    assert_eq!(out.iterations, 1);
    let zero = NodalInjections::zeros(case.feeder.node_count(), case.horizon());
    let plain = solve_netopt(&case, &zero, &NetOptions::default(), &engine).unwrap();
    assert!((out.solution.cost.system() - plain.cost.system()).abs() <= 1e-6);

    let bench = centralized_benchmark(&case, &NetOptions::default(), &ExactnessConfig::default(), &engine).unwrap();
    assert!((bench.cost - plain.cost.system()).abs() <= 1e-6);

    let baseline = dual_decomposition_baseline(&case, &NetOptions::default(), &BaselineConfig::default(), &engine).unwrap();
    assert!(baseline.records[0].imbalance <= 1e-9, "imbalance {}", baseline.records[0].imbalance);
}

#[test]
fn resuming_from_a_checkpoint_matches_an_uninterrupted_run() {
    let case = desk();
    let engine = ClarabelEngine::default();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("checkpoint.toml");

    let full = run_coordination(&case, &CoordinatorConfig::default(), &engine).unwrap();
    assert!(full.converged);

    let mut short = CoordinatorConfig { checkpoint: Some(path.clone()), ..CoordinatorConfig::default() };
    short.convergence.max_iterations = 8;
    let partial = run_coordination(&case, &short, &engine).unwrap();
    assert!(!partial.converged);

    let checkpoint = Checkpoint::load(&path).unwrap();
    assert_eq!(checkpoint.iteration, 8);
    let resumed = resume_coordination(&case, &checkpoint, &CoordinatorConfig::default(), &engine).unwrap();
    assert!(resumed.converged);
    assert_eq!(resumed.iterations, full.iterations);
    assert!((resumed.solution.cost.system() - full.solution.cost.system()).abs() <= 1e-6);
    assert!(resumed.schedule.max_change(&full.schedule) <= 1e-6);
}

#[test]
fn converged_pair_is_a_fixed_point() {
    let case = desk();
    let engine = ClarabelEngine::default();
    let config = CoordinatorConfig::default();
    let out = run_coordination(&case, &config, &engine).unwrap();
    let last = out.trace.records.len() - 1;
    let (a, b) = (&out.trace.records[last - 1], &out.trace.records[last]);
    assert!((a.cost - b.cost).abs() <= config.convergence.cost_tol);
    assert!(b.schedule_delta <= config.convergence.schedule_tol);
}
