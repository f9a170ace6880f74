//! Independent references: an exact radial load flow, and the centralized
//! program with every DER decision inside the network optimization.

use crate::conic::{Affine, ConeTag, ConicSolver, RowTag, VarId};
use crate::der::{aggregate_to_nodes, DerSchedule, HourlyPQ};
use crate::error::{Error, Result};
use crate::exactness::{relaxation_gap, solve_step_one, ExactnessConfig, GapReport};
use crate::opf::{build_netopt, extract_dlmc, interpret, CurrentModel, DlmcSchedule, FlowPoint, NetOptions, NodalInjections, OpfSolution};
use crate::scenario::Case;

/// Sweep stopping rule: largest update of any state variable (p.u.).
pub const SWEEP_TOLERANCE: f64 = 1e-12;
pub const MAX_SWEEPS: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct LoadFlowResult {
    pub flows: FlowPoint,
    /// Sweeps used by the slowest hour.
    pub iterations: usize,
    /// Largest violation of the balances or of `v_u·l = P² + Q²`.
    pub residual: f64,
}

/// Constant-power radial load flow. `demand` is the total nodal consumption
/// `[node][hour]` (loads plus net DER draw).
pub fn backward_forward_sweep(case: &Case, demand: &NodalInjections, root_voltage: f64) -> Result<LoadFlowResult> {
    let model = &case.feeder;
    let n = model.node_count();
    let horizon = case.horizon();
    if demand.p.len() != n || demand.q.len() != n {
        return Err(Error::Dimension(format!("demand covers {} nodes, feeder has {n}", demand.p.len())));
    }
    let mut flows = FlowPoint::zeros(n, horizon);
    let mut worst_iters = 0;
    for t in 0..horizon {
        let mut v = vec![root_voltage; n];
        let mut l = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        let mut converged = false;
        for sweep in 1..=MAX_SWEEPS {
            let mut change: f64 = 0.0;
            for j in (1..n).rev() {
                let line = model.line(j);
                let mut np = demand.p[j][t] + line.r * l[j];
                let mut nq = demand.q[j][t] + line.x * l[j];
                for &c in &model.children[j] {
                    np += p[c];
                    nq += q[c];
                }
                change = change.max((np - p[j]).abs()).max((nq - q[j]).abs());
                p[j] = np;
                q[j] = nq;
            }
            for j in 1..n {
                let line = model.line(j);
                let vu = v[model.up(j)];
                if !(vu > 0.0) {
                    return Err(Error::NonConvergence(format!("voltage collapse at node {} hour {}", model.up(j), t + 1)));
                }
                let nl = (p[j] * p[j] + q[j] * q[j]) / vu;
                let nv = vu - 2.0 * (line.r * p[j] + line.x * q[j]) + (line.r * line.r + line.x * line.x) * nl;
                change = change.max((nl - l[j]).abs()).max((nv - v[j]).abs());
                l[j] = nl;
                v[j] = nv;
            }
            if change <= SWEEP_TOLERANCE {
                worst_iters = worst_iters.max(sweep);
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonConvergence(format!("load flow for hour {} did not settle in {MAX_SWEEPS} sweeps", t + 1)));
        }
        for j in 0..n {
            flows.p[j][t] = if j == 0 { 0.0 } else { p[j] };
            flows.q[j][t] = if j == 0 { 0.0 } else { q[j] };
            flows.v[j][t] = v[j];
            flows.l[j][t] = l[j];
        }
    }
    let residual = load_flow_residual(case, &flows, demand);
    Ok(LoadFlowResult { flows, iterations: worst_iters, residual })
}

fn load_flow_residual(case: &Case, flows: &FlowPoint, demand: &NodalInjections) -> f64 {
    let model = &case.feeder;
    let mut worst: f64 = 0.0;
    for j in 1..model.node_count() {
        let line = model.line(j);
        let u = model.up(j);
        for t in 0..case.horizon() {
            let mut rp = flows.p[j][t] - line.r * flows.l[j][t] - demand.p[j][t];
            let mut rq = flows.q[j][t] - line.x * flows.l[j][t] - demand.q[j][t];
            for &c in &model.children[j] {
                rp -= flows.p[c][t];
                rq -= flows.q[c][t];
            }
            let cone = flows.v[u][t] * flows.l[j][t] - flows.p[j][t].powi(2) - flows.q[j][t].powi(2);
            worst = worst.max(rp.abs()).max(rq.abs()).max(cone.abs());
        }
    }
    worst
}

/// Loads plus net DER consumption, the demand seen by the load flow.
pub fn total_demand(case: &Case, injections: &NodalInjections) -> NodalInjections {
    let model = &case.feeder;
    let add = |a: &Vec<Vec<f64>>, b: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(u, w)| u + w).collect()).collect()
    };
    NodalInjections { p: add(&model.load_p, &injections.p), q: add(&model.load_q, &injections.q) }
}

/// Largest difference between an OPF solution and the load flow of the same demand.
pub fn replay_deviation(case: &Case, solution: &OpfSolution, injections: &NodalInjections) -> Result<f64> {
    let lf = backward_forward_sweep(case, &total_demand(case, injections), case.feeder.root_voltage)?;
    Ok(lf.flows.max_deviation(&solution.flows))
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub solution: OpfSolution,
    pub schedule: DerSchedule,
    pub dlmc: DlmcSchedule,
    /// System cost (energy, reactive, degradation, soft penalties), $.
    pub cost: f64,
    pub gap: GapReport,
    /// Whether the relaxation remedy was needed.
    pub remedied: bool,
}

/// Solves the joint problem with EV and PV setpoints as decision variables,
/// using the same network builder as the coordinator. If the relaxation is
/// not exact, the DER optimum is held fixed and the network step is remedied.
pub fn centralized_benchmark(case: &Case, options: &NetOptions, exactness: &ExactnessConfig, solver: &dyn ConicSolver) -> Result<Benchmark> {
    let model = &case.feeder;
    let horizon = case.horizon();
    let n = model.node_count();
    let options = NetOptions { current: CurrentModel::Cone, ..options.clone() };
    let (mut prog, vars) = build_netopt(case, &NodalInjections::zeros(n, horizon), &options)?;

    let mut ev_vars: Vec<Vec<Option<(VarId, VarId)>>> = Vec::with_capacity(case.scenario.evs.len());
    for (e, ev) in case.scenario.evs.iter().enumerate() {
        let mut per_hour = vec![None; horizon];
        let mut energy = Affine::default();
        for &t in &ev.window {
            let p = prog.add_var(format!("ev_p[{e},{}]", t + 1), Some(0.0), Some(ev.max_rate()));
            let q = prog.add_var(format!("ev_q[{e},{}]", t + 1), None, None);
            prog.add_soc(Affine::constant(ev.inverter), vec![Affine::var(p), Affine::var(q)], ConeTag::Inverter);
            prog.equalities[vars.balance_p[ev.node][t]].terms.push((p, -1.0));
            prog.equalities[vars.balance_q[ev.node][t]].terms.push((q, -1.0));
            energy = energy.term(p, 1.0);
            per_hour[t] = Some((p, q));
        }
        prog.add_eq(energy.plus(-ev.energy), RowTag::EvEnergy { ev: e });
        ev_vars.push(per_hour);
    }
    let mut pv_vars: Vec<Vec<Option<(VarId, VarId)>>> = Vec::with_capacity(case.scenario.pvs.len());
    for (s, pv) in case.scenario.pvs.iter().enumerate() {
        let mut per_hour = vec![None; horizon];
        for t in (0..horizon).filter(|&t| pv.is_sunny(t)) {
            let p = prog.add_var(format!("pv_p[{s},{}]", t + 1), Some(0.0), Some(pv.available(t)));
            let q = prog.add_var(format!("pv_q[{s},{}]", t + 1), None, None);
            prog.add_soc(Affine::constant(pv.nameplate), vec![Affine::var(p), Affine::var(q)], ConeTag::Inverter);
            prog.equalities[vars.balance_p[pv.node][t]].terms.push((p, 1.0));
            prog.equalities[vars.balance_q[pv.node][t]].terms.push((q, 1.0));
            per_hour[t] = Some((p, q));
        }
        pv_vars.push(per_hour);
    }

    let raw = solver.solve(&prog)?;
    let read = |table: &Vec<Vec<Option<(VarId, VarId)>>>| -> Vec<HourlyPQ> {
        table
            .iter()
            .map(|hours| {
                let mut s = HourlyPQ::zeros(horizon);
                for (t, pair) in hours.iter().enumerate() {
                    if let Some((p, q)) = pair {
                        s.p[t] = raw.value(*p);
                        s.q[t] = raw.value(*q);
                    }
                }
                s
            })
            .collect()
    };
    let schedule = DerSchedule { iteration: 0, ev: read(&ev_vars), pv: read(&pv_vars) };
    let injections = aggregate_to_nodes(&case.scenario, &schedule, n);
    let solution = interpret(case, &injections, &options, &vars, &raw);
    let gap = relaxation_gap(case, &solution.flows, exactness.tau);
    let (solution, gap, remedied) = if gap.exact {
        (solution, gap, false)
    } else {
        let step = solve_step_one(case, &injections, &options, exactness, solver)?;
        (step.solution, step.final_gap, true)
    };
    let dlmc = extract_dlmc(&solution)?;
    Ok(Benchmark { cost: solution.cost.system(), solution, schedule, dlmc, gap, remedied })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::tests::path_model;
    use crate::scenario::Scenario;

    fn two_bus(p: f64, q: f64) -> (Case, NodalInjections) {
        let mut m = path_model(2, 0.01, 0.01, 1);
        m.load_p[1][0] = p;
        m.load_q[1][0] = q;
        let case = Case::new(m, Scenario::network_only(vec![40.0], vec![20.0])).unwrap();
        let d = total_demand(&case, &NodalInjections::zeros(2, 1));
        (case, d)
    }

    #[test]
    fn zero_injection_flat_profile() {
        let (case, d) = two_bus(0.0, 0.0);
        let lf = backward_forward_sweep(&case, &d, 1.0).unwrap();
        assert_eq!(lf.flows.v[1][0], 1.0);
        assert_eq!(lf.flows.l[1][0], 0.0);
    }

    #[test]
    fn two_bus_matches_quadratic_closed_form() {
        let (case, d) = two_bus(0.1, 0.05);
        let lf = backward_forward_sweep(&case, &d, 1.0).unwrap();
        // l·v0 = (p + r l)² + (q + x l)² rearranged to a quadratic in l.
        let (r, x, p, q, v0) = (0.01f64, 0.01f64, 0.1f64, 0.05f64, 1.0f64);
        let a = r * r + x * x;
        let b = 2.0 * p * r + 2.0 * q * x - v0;
        let c = p * p + q * q;
        let l = (-b - (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
        assert!((lf.flows.l[1][0] - l).abs() < 1e-13);
        assert!(lf.residual < 1e-12);
    }
}
