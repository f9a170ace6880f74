//! The two-step coordination loop: a network solve at fixed DER setpoints
//! produces nodal prices, then every resource re-plans against those prices
//! with a proximal term. A dual-decomposition baseline is included for
//! comparison of per-iteration feasibility.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::conic::ConicSolver;
use crate::der::{aggregate_to_nodes, solve_all, DerSchedule, ProximalConfig, StepMode};
use crate::error::{Error, Result};
use crate::exactness::{solve_step_one, ExactnessConfig, GapReport};
use crate::opf::{balance_mismatch, build_netopt, extract_dlmc, interpret, DlmcSchedule, NetOptions, NodalInjections, OpfSolution};
use crate::scenario::Case;
use crate::thermal::{aging_tangent_segments, densify_breakpoints};

/// Stopping rule of the outer loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceConfig {
    /// Largest cost change between consecutive iterations ($).
    pub cost_tol: f64,
    /// Largest setpoint change between consecutive schedules (p.u.).
    pub schedule_tol: f64,
    pub max_iterations: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig { cost_tol: 0.01, schedule_tol: 1e-5, max_iterations: 200 }
    }
}

impl ConvergenceConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.cost_tol > 0.0) || !(self.schedule_tol > 0.0) || self.max_iterations == 0 {
            return Err(Error::Invalid(format!("bad convergence settings {self:?}")));
        }
        Ok(())
    }
}

/// Staged refinement of the degradation breakpoints around each
/// transformer's peak hot spot. After the last stage the model is frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct DensifyConfig {
    /// A stage fires after this many iterations on the same model, or earlier
    /// once the loop stalls.
    pub every: usize,
    /// Half-widths (°C) of the successive stages.
    pub half_widths: Vec<f64>,
    pub max_points: usize,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        DensifyConfig { every: 10, half_widths: vec![2.5, 0.5], max_points: 40 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CoordinatorConfig {
    pub convergence: ConvergenceConfig,
    pub densify: DensifyConfig,
    pub proximal: ProximalConfig,
    pub exactness: ExactnessConfig,
    pub network: NetOptions,
    /// Written after every iteration when set.
    pub checkpoint: Option<PathBuf>,
}

/// One outer iteration: the network solve at `y^{k−1}` and the DER update that follows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// System cost of the network solve ($).
    pub cost: f64,
    pub real: f64,
    pub reactive: f64,
    pub degradation: f64,
    pub penalty: f64,
    /// Relaxation gap of the accepted network point (p.u.).
    pub gap: f64,
    pub gap_transformer: f64,
    pub gap_line: f64,
    /// Relaxation gap of the plain relaxed solve before any remedy.
    pub relaxed_gap: f64,
    /// Proximal weight of the DER update (0 in free mode).
    pub sigma: f64,
    pub inner_iterations: usize,
    pub remedied: bool,
    /// `max |y^k − y^{k−1}|` (p.u.).
    pub schedule_delta: f64,
    pub balance_residual: f64,
    /// Breakpoints were densified after this iteration.
    pub model_changed: bool,
    pub substation_p: Vec<f64>,
    pub substation_q: Vec<f64>,
    /// Seconds since the loop started.
    pub wall_time: f64,
    pub solver_time: f64,
}

#[derive(Debug, Clone, Default)]
pub struct CoordinationTrace {
    pub records: Vec<IterationRecord>,
    /// Prices of iteration `k` at index `k − 1`.
    pub dlmc: Vec<DlmcSchedule>,
}

impl CoordinationTrace {
    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn costs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.cost).collect()
    }
}

#[derive(Debug, Clone)]
pub struct CoordinationOutcome {
    /// Network solution of the last iteration.
    pub solution: OpfSolution,
    /// Schedule the last network solve was evaluated at.
    pub schedule: DerSchedule,
    pub dlmc: DlmcSchedule,
    pub gap: GapReport,
    pub trace: CoordinationTrace,
    /// The case with the final breakpoints.
    pub case: Case,
    pub converged: bool,
    pub iterations: usize,
    /// Accepted inner-loop gaps of the latest remedied iteration (or of the
    /// last iteration when none was remedied), with that iteration's index.
    pub inner_gaps: Vec<GapReport>,
    pub inner_gaps_iteration: usize,
}

/// Starting schedule: EVs respond to the substation energy price alone and
/// PVs inject all available power at unit power factor.
pub fn init_schedules(case: &Case) -> Result<DerSchedule> {
    let scenario = &case.scenario;
    let n = case.feeder.node_count();
    let prices = DlmcSchedule {
        p: vec![scenario.price_p.clone(); n],
        q: vec![vec![0.0; scenario.horizon]; n],
    };
    let empty = DerSchedule::empty(scenario);
    let mut schedule = solve_all(scenario, &prices, case.feeder.base.mwh_per_pu_hour(), &empty, StepMode::Free)?;
    for (pv, s) in scenario.pvs.iter().zip(&mut schedule.pv) {
        for t in 0..scenario.horizon {
            s.p[t] = pv.available(t);
            s.q[t] = 0.0;
        }
    }
    schedule.iteration = 0;
    Ok(schedule)
}

/// Proximal weight for the DER update following the latest record.
///
/// `σ` stays at its initial value until the cost change has been below
/// `10·cost_tol` for three consecutive iterations on the current model; from
/// that iteration on it shrinks geometrically down to the floor. Densifying
/// the model restarts the rule.
pub fn sigma_schedule(trace: &CoordinationTrace, proximal: &ProximalConfig, cost_tol: f64) -> f64 {
    match shrink_trigger(&trace.records, cost_tol) {
        Some(trigger) => {
            let k = trace.records.last().map_or(trigger, |r| r.iteration);
            let n = (k - trigger + 1) as i32;
            (proximal.sigma * proximal.shrink.powi(n)).max(proximal.floor)
        }
        None => proximal.sigma,
    }
}

/// Iteration at which three consecutive small cost changes were first seen on the current model.
fn shrink_trigger(records: &[IterationRecord], cost_tol: f64) -> Option<usize> {
    let start = records.iter().rposition(|r| r.model_changed).map_or(0, |i| i + 1);
    let mut run = 0;
    for w in records[start..].windows(2) {
        if (w[1].cost - w[0].cost).abs() < 10.0 * cost_tol {
            run += 1;
            if run == 3 {
                return Some(w[1].iteration);
            }
        } else {
            run = 0;
        }
    }
    None
}

/// Resumable loop state, stored as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Last completed iteration.
    pub iteration: usize,
    /// Proximal weight used by that iteration's DER update.
    pub sigma: f64,
    pub shrink_started: Option<usize>,
    /// Densification stages already applied.
    pub stage: usize,
    pub last_change: usize,
    /// Breakpoints per transformer.
    pub breakpoints: Vec<Vec<f64>>,
    /// `y^k`, the schedule the next network solve will use.
    pub schedule: DerSchedule,
    pub records: Vec<IterationRecord>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Parse(format!("checkpoint: {e}")))?;
        let tmp = path.with_extension("toml.tmp");
        std::fs::write(&tmp, text)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

struct LoopState {
    case: Case,
    schedule: DerSchedule,
    trace: CoordinationTrace,
    stage: usize,
    last_change: usize,
    next: usize,
}

/// Runs the decomposition from the initial price response.
pub fn run_coordination(case: &Case, config: &CoordinatorConfig, solver: &dyn ConicSolver) -> Result<CoordinationOutcome> {
    config.convergence.check()?;
    let state = LoopState {
        case: case.clone(),
        schedule: init_schedules(case)?,
        trace: CoordinationTrace::default(),
        stage: 0,
        last_change: 0,
        next: 1,
    };
    drive(state, config, solver)
}

/// Continues a run from a checkpoint written by [`run_coordination`].
pub fn resume_coordination(case: &Case, checkpoint: &Checkpoint, config: &CoordinatorConfig, solver: &dyn ConicSolver) -> Result<CoordinationOutcome> {
    config.convergence.check()?;
    if checkpoint.breakpoints.len() != case.feeder.transformers.len() {
        return Err(Error::Dimension("checkpoint breakpoints do not match the transformers".into()));
    }
    if checkpoint.schedule.ev.len() != case.scenario.evs.len() || checkpoint.schedule.pv.len() != case.scenario.pvs.len() {
        return Err(Error::Dimension("checkpoint schedule does not match the fleet".into()));
    }
    let mut resumed = case.clone();
    for (k, bps) in checkpoint.breakpoints.iter().enumerate() {
        let mut params = resumed.feeder.transformers[k].thermal.clone();
        if let Some(gain) = params.hotspot_gain {
            params.segments = aging_tangent_segments(bps, gain);
            params.breakpoints = bps.clone();
            resumed.feeder.set_thermal(k, params);
        }
    }
    let state = LoopState {
        case: resumed,
        schedule: checkpoint.schedule.clone(),
        trace: CoordinationTrace { records: checkpoint.records.clone(), dlmc: Vec::new() },
        stage: checkpoint.stage,
        last_change: checkpoint.last_change,
        next: checkpoint.iteration + 1,
    };
    drive(state, config, solver)
}

fn drive(mut st: LoopState, config: &CoordinatorConfig, solver: &dyn ConicSolver) -> Result<CoordinationOutcome> {
    let conv = &config.convergence;
    let n = st.case.feeder.node_count();
    let mva = st.case.feeder.base.mwh_per_pu_hour();
    let no_ders = st.case.scenario.evs.is_empty() && st.case.scenario.pvs.is_empty();
    let started = Instant::now();
    let mut last: Option<(OpfSolution, DerSchedule, DlmcSchedule, GapReport)> = None;
    let mut converged = false;
    let mut inner: Option<(usize, bool, Vec<GapReport>)> = None;

    for k in st.next..=conv.max_iterations {
        let injections = aggregate_to_nodes(&st.case.scenario, &st.schedule, n);
        let step = solve_step_one(&st.case, &injections, &config.network, &config.exactness, solver).map_err(|e| e.at_iteration(k))?;
        let dlmc = extract_dlmc(&step.solution).map_err(|e| e.at_iteration(k))?;

        let sigma = sigma_schedule(&st.trace, &config.proximal, conv.cost_tol);
        let mode = if k == 1 && config.proximal.free_first { StepMode::Free } else { StepMode::Proximal { sigma } };
        let next = solve_all(&st.case.scenario, &dlmc, mva, &st.schedule, mode).map_err(|e| e.at_iteration(k))?;
        let delta = next.max_change(&st.schedule);

        if step.remedied || !inner.as_ref().is_some_and(|i| i.1) {
            inner = Some((k, step.remedied, step.inner_gaps.clone()));
        }
        let sol = &step.solution;
        let (sub_p, sub_q) = sol.substation(&st.case);
        let cost = sol.cost.system();
        let cost_change = st.trace.last().map(|r| (cost - r.cost).abs());
        let stalled = no_ders || (cost_change.is_some_and(|d| d <= conv.cost_tol) && delta <= conv.schedule_tol && k > st.last_change + 1);
        let frozen = st.stage >= config.densify.half_widths.len();

        let mut model_changed = false;
        if !no_ders && !frozen && (stalled || k - st.last_change >= config.densify.every) {
            model_changed = densify(&mut st.case, sol, config.densify.half_widths[st.stage], config.densify.max_points);
            st.stage += 1;
            if model_changed {
                st.last_change = k;
            }
        }

        st.trace.records.push(IterationRecord {
            iteration: k,
            cost,
            real: sol.cost.real,
            reactive: sol.cost.reactive,
            degradation: sol.cost.degradation,
            penalty: sol.cost.penalty,
            gap: step.final_gap.total,
            gap_transformer: step.final_gap.transformer_total,
            gap_line: step.final_gap.line_total,
            relaxed_gap: step.relaxed_gap.total,
            sigma: match mode {
                StepMode::Free => 0.0,
                StepMode::Proximal { sigma } => sigma,
            },
            inner_iterations: step.inner_iterations,
            remedied: step.remedied,
            schedule_delta: delta,
            balance_residual: sol.balance_residual,
            model_changed,
            substation_p: sub_p,
            substation_q: sub_q,
            wall_time: started.elapsed().as_secs_f64(),
            solver_time: sol.solve_time,
        });
        st.trace.dlmc.push(dlmc.clone());
        log::info!(
            "iter {k:3}  cost {cost:.4}  gap {:.2e}  delta {delta:.2e}  sigma {:.2e}{}",
            step.final_gap.total,
            match mode {
                StepMode::Free => 0.0,
                StepMode::Proximal { sigma } => sigma,
            },
            if model_changed { "  densified" } else { "" }
        );

        let evaluated = std::mem::replace(&mut st.schedule, next);
        last = Some((step.solution, evaluated, dlmc, step.final_gap));

        if let Some(path) = &config.checkpoint {
            checkpoint_of(&st, k, &config.proximal, conv.cost_tol).save(path).map_err(|e| e.at_iteration(k))?;
        }
        if stalled && !model_changed && (no_ders || frozen || st.stage >= config.densify.half_widths.len()) {
            converged = true;
            break;
        }
    }

    let (solution, schedule, dlmc, gap) = last.ok_or_else(|| Error::Invalid("no iterations left to run".into()))?;
    if !converged {
        log::warn!("stopped at the iteration cap ({}) without meeting the convergence criteria", conv.max_iterations);
    }
    let iterations = st.trace.last().map_or(0, |r| r.iteration);
    let (inner_gaps_iteration, _, inner_gaps) = inner.unwrap_or_default();
    Ok(CoordinationOutcome { solution, schedule, dlmc, gap, trace: st.trace, case: st.case, converged, iterations, inner_gaps, inner_gaps_iteration })
}

fn checkpoint_of(st: &LoopState, k: usize, proximal: &ProximalConfig, cost_tol: f64) -> Checkpoint {
    Checkpoint {
        iteration: k,
        sigma: st.trace.last().map_or(proximal.sigma, |r| r.sigma),
        shrink_started: shrink_trigger(&st.trace.records, cost_tol),
        stage: st.stage,
        last_change: st.last_change,
        breakpoints: st.case.feeder.transformers.iter().map(|t| t.thermal.breakpoints.clone()).collect(),
        schedule: st.schedule.clone(),
        records: st.trace.records.clone(),
    }
}

/// Adds breakpoints around every transformer's peak hot spot. Returns whether any segment changed.
fn densify(case: &mut Case, solution: &OpfSolution, half_width: f64, max_points: usize) -> bool {
    let horizon = case.horizon();
    let mut changed = false;
    for k in 0..case.feeder.transformers.len() {
        let tr = &case.feeder.transformers[k];
        let Some(gain) = tr.thermal.hotspot_gain else { continue };
        let node = tr.node;
        let peak = (0..horizon)
            .map(|t| solution.thermal.h[k][t + 1] + gain * solution.flows.l[node][t])
            .fold(f64::NEG_INFINITY, f64::max);
        let bps = densify_breakpoints(&tr.thermal.breakpoints, peak, half_width, max_points);
        if bps != tr.thermal.breakpoints {
            let mut params = tr.thermal.clone();
            params.segments = aging_tangent_segments(&bps, gain);
            params.breakpoints = bps;
            case.feeder.set_thermal(k, params);
            changed = true;
        }
    }
    changed
}

/// Price-update settings of the dual-decomposition baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    /// Price step ($/MWh per MW of imbalance).
    pub step: f64,
    /// Divide the step by `√k`.
    pub diminishing: bool,
    pub max_iterations: usize,
    /// Stop once the imbalance falls below this (p.u.).
    pub imbalance_tol: f64,
    /// Consecutive growing imbalances that count as divergence.
    pub divergence_window: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig { step: 2.0, diminishing: true, max_iterations: 200, imbalance_tol: 1e-7, divergence_window: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub iteration: usize,
    /// Largest balance violation of `(x^k, y^k)` (p.u.).
    pub imbalance: f64,
    /// Lagrangian value at the current prices, a lower bound on the optimum ($).
    pub dual_value: f64,
    /// System cost of the network update alone ($).
    pub network_cost: f64,
    pub step: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct BaselineTrace {
    pub records: Vec<BaselineRecord>,
    pub lambda_p: Vec<Vec<f64>>,
    pub lambda_q: Vec<Vec<f64>>,
    pub schedule: DerSchedule,
}

impl BaselineTrace {
    pub fn best_dual(&self) -> f64 {
        self.records.iter().map(|r| r.dual_value).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Classic price coordination: the network and the DERs each respond to the
/// current nodal prices without coupling, and prices move with the imbalance.
/// Only balance rows where some DER can inject are priced; the others stay
/// hard constraints of the network problem.
pub fn dual_decomposition_baseline(case: &Case, options: &NetOptions, config: &BaselineConfig, solver: &dyn ConicSolver) -> Result<BaselineTrace> {
    let n = case.feeder.node_count();
    let horizon = case.horizon();
    let mva = case.feeder.base.mwh_per_pu_hour();
    let scenario = &case.scenario;
    let mut lambda_p = vec![scenario.price_p.clone(); n];
    let mut lambda_q = vec![scenario.price_q.clone(); n];
    let mut schedule = DerSchedule::empty(scenario);
    let mut records: Vec<BaselineRecord> = Vec::new();
    let started = Instant::now();
    let mut coupled = vec![vec![false; horizon]; n];
    for ev in &scenario.evs {
        for &t in &ev.window {
            coupled[ev.node][t] = true;
        }
    }
    for pv in &scenario.pvs {
        for t in (0..horizon).filter(|&t| pv.is_sunny(t)) {
            coupled[pv.node][t] = true;
        }
    }

    for k in 1..=config.max_iterations {
        let zero = NodalInjections::zeros(n, horizon);
        let (mut prog, vars) = build_netopt(case, &zero, options).map_err(|e| e.at_iteration(k))?;
        for j in 1..n {
            for t in (0..horizon).filter(|&t| coupled[j][t]) {
                for (row, price) in [(vars.balance_p[j][t], lambda_p[j][t]), (vars.balance_q[j][t], lambda_q[j][t])] {
                    let s = prog.add_var(format!("mismatch[{j},{}]", t + 1), None, None);
                    prog.equalities[row].terms.push((s, -1.0));
                    prog.add_cost(s, -price * mva);
                }
            }
        }
        let raw = solver.solve(&prog).map_err(|e| e.at_iteration(k))?;
        let prices = DlmcSchedule { p: lambda_p.clone(), q: lambda_q.clone() };
        schedule = solve_all(scenario, &prices, mva, &schedule, StepMode::Free).map_err(|e| e.at_iteration(k))?;
        let injections = aggregate_to_nodes(scenario, &schedule, n);
        let sol = interpret(case, &injections, options, &vars, &raw);

        let mut dual_value = raw.objective;
        for j in 1..n {
            for t in 0..horizon {
                dual_value += mva * (lambda_p[j][t] * injections.p[j][t] + lambda_q[j][t] * injections.q[j][t]);
            }
        }
        let (mp, mq) = balance_mismatch(case, &sol.flows, &injections);
        let imbalance = mp.iter().chain(&mq).flatten().fold(0.0, |m: f64, r| m.max(r.abs()));
        let step = if config.diminishing { config.step / (k as f64).sqrt() } else { config.step };
        for j in 1..n {
            for t in 0..horizon {
                lambda_p[j][t] -= step * mva * mp[j][t];
                lambda_q[j][t] -= step * mva * mq[j][t];
            }
        }
        records.push(BaselineRecord {
            iteration: k,
            imbalance,
            dual_value,
            network_cost: sol.cost.system(),
            step,
            wall_time: started.elapsed().as_secs_f64(),
        });
        log::info!("baseline iter {k:3}  imbalance {imbalance:.3e}  dual {dual_value:.4}");
        if imbalance <= config.imbalance_tol {
            break;
        }
        let w = config.divergence_window;
        if records.len() > w && records[records.len() - w - 1..].windows(2).all(|p| p[1].imbalance > p[0].imbalance) {
            return Err(Error::NonConvergence(format!("price updates diverge: imbalance grew for {w} iterations")).at_iteration(k));
        }
    }
    Ok(BaselineTrace { records, lambda_p, lambda_q, schedule })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::ClarabelEngine;
    use crate::feeder::tests::path_model;
    use crate::scenario::{EvParams, Scenario};

    fn tiny_case() -> Case {
        let horizon = 4;
        let mut m = path_model(3, 0.05, 0.03, horizon);
        for t in 0..horizon {
            m.load_p[1][t] = 0.10 + 0.02 * t as f64;
            m.load_q[1][t] = 0.03;
            m.load_p[2][t] = 0.20 - 0.03 * t as f64;
            m.load_q[2][t] = 0.05;
        }
        let mut s = Scenario::network_only(vec![30.0, 45.0, 38.0, 52.0], vec![25.0; horizon]);
        s.evs.push(EvParams { node: 2, window: vec![0, 1, 2, 3], energy: 0.3, charger: 0.12, inverter: 0.15 });
        Case::new(m, s).unwrap()
    }

    #[test]
    fn baseline_long_run_matches_proximal_cost() {
        let case = tiny_case();
        let engine = ClarabelEngine::default();
        let prox = run_coordination(&case, &CoordinatorConfig::default(), &engine).unwrap();
        assert!(prox.converged);
        let cfg = BaselineConfig { step: 2.0, diminishing: true, max_iterations: 400, ..BaselineConfig::default() };
        let base = dual_decomposition_baseline(&case, &NetOptions::default(), &cfg, &engine).unwrap();
        let best = base.best_dual();
        eprintln!("prox {} best dual {} iters {} last imb {}", prox.solution.cost.system(), best, base.records.len(), base.records.last().unwrap().imbalance);
        assert!((best - prox.solution.cost.system()).abs() <= 0.02);
    }

    fn record(iteration: usize, cost: f64, model_changed: bool) -> IterationRecord {
        IterationRecord {
            iteration,
            cost,
            real: 0.0,
            reactive: 0.0,
            degradation: 0.0,
            penalty: 0.0,
            gap: 0.0,
            gap_transformer: 0.0,
            gap_line: 0.0,
            relaxed_gap: 0.0,
            sigma: 0.0,
            inner_iterations: 0,
            remedied: false,
            schedule_delta: 0.0,
            balance_residual: 0.0,
            model_changed,
            substation_p: vec![],
            substation_q: vec![],
            wall_time: 0.0,
            solver_time: 0.0,
        }
    }

    fn trace(costs: &[f64]) -> CoordinationTrace {
        CoordinationTrace { records: costs.iter().enumerate().map(|(i, &c)| record(i + 1, c, false)).collect(), dlmc: vec![] }
    }

    #[test]
    fn sigma_constant_early() {
        let cfg = ProximalConfig::default();
        assert_eq!(sigma_schedule(&trace(&[100.0, 90.0, 85.0]), &cfg, 0.01), 1e-4);
    }

    #[test]
    fn sigma_shrinks_after_three_small_changes() {
        let cfg = ProximalConfig::default();
        // Changes 10, 0.05, 0.05, 0.05: the trigger is iteration 5.
        let t = trace(&[100.0, 90.0, 89.95, 89.9, 89.85]);
        assert!((sigma_schedule(&t, &cfg, 0.01) - 1e-4 * (2.0 / 3.0)).abs() < 1e-18);
        let t = trace(&[100.0, 90.0, 89.95, 89.9, 89.85, 80.0, 70.0]);
        assert!((sigma_schedule(&t, &cfg, 0.01) - 1e-4 * (2.0f64 / 3.0).powi(3)).abs() < 1e-18);
    }

    #[test]
    fn sigma_floor() {
        let cfg = ProximalConfig::default();
        let t = trace(&vec![50.0; 60]);
        assert_eq!(sigma_schedule(&t, &cfg, 0.01), 1e-7);
    }

    #[test]
    fn densification_restarts_the_rule() {
        let cfg = ProximalConfig::default();
        let mut t = trace(&[50.0, 50.0, 50.0, 50.0, 50.0]);
        t.records[3].model_changed = true;
        assert_eq!(sigma_schedule(&t, &cfg, 0.01), 1e-4);
    }
}
