//! Detection of inexact cone relaxations and recovery of a physical operating
//! point with correct marginal costs.
//!
//! When the relaxed Net-opt leaves slack in `v_u·l ≥ P² + Q²` (typically under
//! negative energy prices, where burning losses is profitable) the coordinator
//! runs a penalty loop that linearizes the reverse inequality around the latest
//! iterate, then re-solves once with the current relation linearized as an
//! equality so the balance multipliers price the physical network.

use crate::conic::ConicSolver;
use crate::error::{Error, Result};
use crate::opf::{solve_netopt, CurrentModel, FlowPoint, NetOptions, NodalInjections, OpfSolution};
use crate::scenario::Case;

/// Default gap tolerance τ (p.u.).
pub const DEFAULT_TAU: f64 = 1e-4;

/// Default bound on the primal movement of the linearized re-solve (p.u.).
pub const DEFAULT_DRIFT_BOUND: f64 = 1e-5;

/// Per-line, per-hour relaxation gaps `v_u·l − P² − Q²`.
#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    /// `[node][hour]`, row 0 empty.
    pub terms: Vec<Vec<f64>>,
    pub total: f64,
    /// Sum over service-transformer lines.
    pub transformer_total: f64,
    /// Sum over the remaining distribution lines.
    pub line_total: f64,
    pub tau: f64,
    pub exact: bool,
}

impl GapReport {
    pub fn max_term(&self) -> f64 {
        self.terms.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// Gap per line summed over hours, row 0 empty.
    pub fn per_line(&self) -> Vec<f64> {
        self.terms.iter().map(|r| r.iter().sum()).collect()
    }
}

/// Gap of a single line-hour.
pub fn gap_term(v_up: f64, l: f64, p: f64, q: f64) -> f64 {
    v_up * l - p * p - q * q
}

/// Measures the relaxation gap. A point is exact when the total is at most
/// `tau` and no single term exceeds `tau` divided by the number of terms.
pub fn relaxation_gap(case: &Case, flows: &FlowPoint, tau: f64) -> GapReport {
    let model = &case.feeder;
    let n = model.node_count();
    let horizon = case.horizon();
    let mut terms = vec![Vec::new(); n];
    let (mut total, mut tr, mut ln) = (0.0, 0.0, 0.0);
    for j in 1..n {
        let u = model.up(j);
        terms[j] = (0..horizon)
            .map(|t| gap_term(flows.v[u][t], flows.l[j][t], flows.p[j][t], flows.q[j][t]))
            .collect();
        let s: f64 = terms[j].iter().sum();
        total += s;
        if model.transformer_at(j).is_some() {
            tr += s;
        } else {
            ln += s;
        }
    }
    let count = ((n - 1) * horizon).max(1) as f64;
    let per_term = tau / count;
    let exact = total <= tau && terms.iter().flatten().all(|&g| g <= per_term);
    GapReport { terms, total, transformer_total: tr, line_total: ln, tau, exact }
}

/// Growth schedule of the concave-cut penalty `ρ̄`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltySchedule {
    pub initial: f64,
    pub growth: f64,
    pub max_inner: usize,
}

impl Default for PenaltySchedule {
    fn default() -> Self {
        PenaltySchedule { initial: 0.005, growth: 1.5, max_inner: 25 }
    }
}

impl PenaltySchedule {
    pub fn check(&self) -> Result<()> {
        if !(self.initial > 0.0) || !(self.growth > 1.0) || self.max_inner == 0 {
            return Err(Error::Invalid(format!("bad penalty schedule {self:?}")));
        }
        Ok(())
    }
}

/// Result of [`penalty_recovery_loop`].
#[derive(Debug, Clone)]
pub struct Recovery {
    /// Last accepted iterate.
    pub solution: OpfSolution,
    /// Solves performed, rejected ones included.
    pub inner_iterations: usize,
    /// Gap of the start point followed by every accepted iterate.
    pub gaps: Vec<GapReport>,
    /// Penalty used for each solve.
    pub penalties: Vec<f64>,
    pub converged: bool,
}

/// Drives the relaxation gap below `tau` by solving the penalized problem with
/// the reverse cone inequality linearized around the latest accepted iterate.
/// An iterate that increases the total gap is rejected and the penalty grows.
pub fn penalty_recovery_loop(
    case: &Case,
    injections: &NodalInjections,
    start: &OpfSolution,
    schedule: &PenaltySchedule,
    tau: f64,
    options: &NetOptions,
    solver: &dyn ConicSolver,
) -> Result<Recovery> {
    schedule.check()?;
    let first = relaxation_gap(case, &start.flows, tau);
    let mut out = Recovery {
        solution: start.clone(),
        inner_iterations: 0,
        converged: first.exact,
        gaps: vec![first],
        penalties: Vec::new(),
    };
    if out.converged {
        return Ok(out);
    }
    let mut penalty = schedule.initial;
    while out.inner_iterations < schedule.max_inner {
        out.inner_iterations += 1;
        out.penalties.push(penalty);
        let opts = NetOptions {
            current: CurrentModel::ConcaveCut { around: onto_cone_surface(case, &out.solution.flows), penalty },
            ..options.clone()
        };
        let sol = solve_netopt(case, injections, &opts, solver)?;
        let gap = relaxation_gap(case, &sol.flows, tau);
        let previous = out.gaps.last().map_or(f64::INFINITY, |g| g.total);
        penalty *= schedule.growth;
        if gap.total > previous + 1e-9 {
            log::debug!("inner iterate raised the gap {previous:.3e} -> {:.3e}; escalating", gap.total);
            continue;
        }
        let exact = gap.exact;
        out.solution = sol;
        out.gaps.push(gap);
        if exact {
            out.converged = true;
            break;
        }
    }
    Ok(out)
}

/// Copy of `flows` with every squared current reset to `(P² + Q²)/v_u`, where
/// the cut's tangent is exact. Linearizing at an inflated current makes the
/// tangent so steep that each penalized solve only moves a short distance.
fn onto_cone_surface(case: &Case, flows: &FlowPoint) -> FlowPoint {
    let model = &case.feeder;
    let mut out = flows.clone();
    for j in 1..model.node_count() {
        let u = model.up(j);
        for t in 0..case.horizon() {
            let v = flows.v[u][t];
            if v > 0.0 {
                out.l[j][t] = (flows.p[j][t].powi(2) + flows.q[j][t].powi(2)) / v;
            }
        }
    }
    out
}

/// Re-solves Net-opt with the current relation replaced by its tangent at the
/// physical point, returning a solution whose multipliers are marginal costs.
/// If the primal moves more than `drift_bound`, the expansion is redone once
/// around the new point; persistent drift is an error.
pub fn linearized_dual_resolve(
    case: &Case,
    injections: &NodalInjections,
    physical: &OpfSolution,
    options: &NetOptions,
    drift_bound: f64,
    solver: &dyn ConicSolver,
) -> Result<OpfSolution> {
    let mut around = physical.flows.clone();
    let mut last_drift = f64::INFINITY;
    for _ in 0..2 {
        let opts = NetOptions { current: CurrentModel::Linearized { around: around.clone() }, ..options.clone() };
        let sol = solve_netopt(case, injections, &opts, solver)?;
        last_drift = sol.flows.max_deviation(&around);
        if last_drift <= drift_bound {
            return Ok(sol);
        }
        around = sol.flows;
    }
    Err(Error::Drift { drift: last_drift, bound: drift_bound })
}

/// Settings for [`solve_step_one`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactnessConfig {
    pub tau: f64,
    pub schedule: PenaltySchedule,
    pub drift_bound: f64,
}

impl Default for ExactnessConfig {
    fn default() -> Self {
        ExactnessConfig { tau: DEFAULT_TAU, schedule: PenaltySchedule::default(), drift_bound: DEFAULT_DRIFT_BOUND }
    }
}

/// Outcome of one network step.
#[derive(Debug, Clone)]
pub struct StepOne {
    /// Physical solution whose multipliers are the marginal costs.
    pub solution: OpfSolution,
    /// Gap of the plain relaxed solve.
    pub relaxed_gap: GapReport,
    /// Gap of `solution`.
    pub final_gap: GapReport,
    /// Accepted inner iterates' gaps, starting with the relaxed one.
    pub inner_gaps: Vec<GapReport>,
    pub inner_iterations: usize,
    pub remedied: bool,
}

/// Solves the relaxed Net-opt and, when it is not exact, recovers a physical
/// point and re-derives its multipliers.
pub fn solve_step_one(
    case: &Case,
    injections: &NodalInjections,
    options: &NetOptions,
    config: &ExactnessConfig,
    solver: &dyn ConicSolver,
) -> Result<StepOne> {
    let base = NetOptions { current: CurrentModel::Cone, ..options.clone() };
    let relaxed = solve_netopt(case, injections, &base, solver)?;
    let relaxed_gap = relaxation_gap(case, &relaxed.flows, config.tau);
    if relaxed_gap.exact {
        return Ok(StepOne {
            final_gap: relaxed_gap.clone(),
            inner_gaps: vec![relaxed_gap.clone()],
            relaxed_gap,
            solution: relaxed,
            inner_iterations: 0,
            remedied: false,
        });
    }
    let recovery = penalty_recovery_loop(case, injections, &relaxed, &config.schedule, config.tau, &base, solver)?;
    if !recovery.converged {
        let last = recovery.gaps.last().map_or(f64::NAN, |g| g.total);
        return Err(Error::NonConvergence(format!(
            "relaxation gap {last:.3e} still above {:.1e} after {} inner iterations",
            config.tau, recovery.inner_iterations
        )));
    }
    let solution = linearized_dual_resolve(case, injections, &recovery.solution, &base, config.drift_bound, solver)?;
    let final_gap = relaxation_gap(case, &solution.flows, config.tau);
    Ok(StepOne {
        solution,
        relaxed_gap,
        final_gap,
        inner_gaps: recovery.gaps,
        inner_iterations: recovery.inner_iterations,
        remedied: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::ClarabelEngine;
    use crate::feeder::tests::path_model;
    use crate::scenario::Scenario;

    #[test]
    fn gap_arithmetic() {
        assert!((gap_term(1.0, 0.5, 0.6, 0.3) - 0.05).abs() < 1e-15);
    }

    fn three_bus(price: f64) -> Case {
        let mut m = path_model(3, 0.02, 0.01, 2);
        for t in 0..2 {
            m.load_p[2][t] = 0.2;
            m.load_q[2][t] = 0.05;
        }
        Case::new(m, Scenario::network_only(vec![40.0, price], vec![20.0; 2])).unwrap()
    }

    #[test]
    fn exact_input_returns_immediately() {
        let case = three_bus(40.0);
        let inj = NodalInjections::zeros(3, 2);
        let engine = ClarabelEngine::default();
        let relaxed = solve_netopt(&case, &inj, &NetOptions::default(), &engine).unwrap();
        let rec = penalty_recovery_loop(&case, &inj, &relaxed, &PenaltySchedule::default(), DEFAULT_TAU, &NetOptions::default(), &engine).unwrap();
        assert_eq!(rec.inner_iterations, 0);
        assert!(rec.converged);
    }

    #[test]
    fn negative_price_is_remedied() {
        let case = three_bus(-5.0);
        let inj = NodalInjections::zeros(3, 2);
        let engine = ClarabelEngine::default();
        let step = solve_step_one(&case, &inj, &NetOptions::default(), &ExactnessConfig::default(), &engine).unwrap();
        assert!(step.remedied);
        assert!(step.relaxed_gap.total > DEFAULT_TAU);
        assert!(step.final_gap.total <= DEFAULT_TAU);
        assert!(step.inner_iterations <= 25);
        assert!(step.solution.balance_residual < 1e-7);
        assert!(step.solution.lambda_p[1][1] < 0.0);
    }

    #[test]
    fn linearized_equality_holds_at_its_point() {
        let case = three_bus(40.0);
        let inj = NodalInjections::zeros(3, 2);
        let engine = ClarabelEngine::default();
        let exact = solve_netopt(&case, &inj, &NetOptions::default(), &engine).unwrap();
        let lin = linearized_dual_resolve(&case, &inj, &exact, &NetOptions::default(), DEFAULT_DRIFT_BOUND, &engine).unwrap();
        for j in 1..3 {
            for t in 0..2 {
                assert!((lin.lambda_p[j][t] - exact.lambda_p[j][t]).abs() < 0.01);
            }
        }
    }
}
