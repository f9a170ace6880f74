//! The fixed-injection network problem (Net-opt): branch-flow AC OPF with a
//! second-order cone relaxation, soft voltage/current limits and transformer
//! thermal dynamics, plus extraction of the nodal marginal costs.
//!
//! Per line `j` (the line into node `j`) and hour `t` the program carries the
//! sending-end flows `P, Q`, squared current `l` and the downstream squared
//! voltage `v_j`. The balance row for `(j, t)` reads
//!
//! ```text
//! P_j − r_j·l_j − Σ_{c ∈ C_j} P_c = p^d_j + net DER consumption at j
//! ```
//!
//! so its equality marginal is the cost of one more p.u. of demand at `j`.
//! [`OpfSolution::lambda_p`] reports it in $/MWh.

use crate::conic::{Affine, ConeTag, ConicProgram, ConicSolution, ConicSolver, RowTag, SolveStatus, VarId};
use crate::error::{Error, Result};
use crate::feeder::NodeId;
use crate::scenario::Case;
use crate::thermal::{build_thermal_constraints, ThermalInput, ThermalMode, ThermalState, ThermalVars};

/// Quadratic penalty weights on the soft-limit slacks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftLimitConfig {
    /// `M^v`, $ per (p.u.²)² of squared-voltage violation.
    pub voltage_weight: f64,
    /// `M^l`, $ per (p.u.²)² of squared-current violation.
    pub current_weight: f64,
}

impl Default for SoftLimitConfig {
    fn default() -> Self {
        SoftLimitConfig { voltage_weight: 5000.0, current_weight: 1000.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LimitMode {
    Soft(SoftLimitConfig),
    Hard,
}

/// Per-line, per-hour electrical state. Vectors are indexed `[node][hour]`;
/// row 0 of `p`, `q`, `l` is unused and `v[0]` holds the root voltage.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowPoint {
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub l: Vec<Vec<f64>>,
}

impl FlowPoint {
    pub fn zeros(nodes: usize, horizon: usize) -> Self {
        let z = vec![vec![0.0; horizon]; nodes];
        FlowPoint { p: z.clone(), q: z.clone(), v: z.clone(), l: z }
    }

    /// Largest absolute difference in any of `P, Q, v, l`.
    pub fn max_deviation(&self, other: &FlowPoint) -> f64 {
        [(&self.p, &other.p), (&self.q, &other.q), (&self.v, &other.v), (&self.l, &other.l)]
            .iter()
            .flat_map(|(a, b)| a.iter().zip(b.iter()).flat_map(|(x, y)| x.iter().zip(y).map(|(u, w)| (u - w).abs())))
            .fold(0.0, f64::max)
    }
}

/// How the apparent-power relation `v_u·l = P² + Q²` enters the program.
#[derive(Debug, Clone, PartialEq)]
pub enum CurrentModel {
    /// The convex relaxation `v_u·l ≥ P² + Q²`.
    Cone,
    /// Relaxation plus the linearized reverse inequality around `around`,
    /// violated by at most `w ≥ 0` at cost `penalty·Σw`.
    ConcaveCut { around: FlowPoint, penalty: f64 },
    /// First-order expansion of `l = (P² + Q²)/v_u` around `around`, as an equality.
    Linearized { around: FlowPoint },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetOptions {
    pub limits: LimitMode,
    pub thermal: ThermalMode,
    pub current: CurrentModel,
}

impl Default for NetOptions {
    fn default() -> Self {
        NetOptions { limits: LimitMode::Soft(SoftLimitConfig::default()), thermal: ThermalMode::Cyclic, current: CurrentModel::Cone }
    }
}

/// Net DER consumption per `[node][hour]` (EV draw minus PV output), p.u.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalInjections {
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
}

impl NodalInjections {
    pub fn zeros(nodes: usize, horizon: usize) -> Self {
        NodalInjections { p: vec![vec![0.0; horizon]; nodes], q: vec![vec![0.0; horizon]; nodes] }
    }
}

/// Handles into a built Net-opt program. Per-line tables are indexed
/// `[node][hour]` with an empty row 0.
#[derive(Debug, Clone)]
pub struct NetVars {
    pub p: Vec<Vec<VarId>>,
    pub q: Vec<Vec<VarId>>,
    pub l: Vec<Vec<VarId>>,
    pub v: Vec<Vec<VarId>>,
    pub slack_v: Vec<Vec<VarId>>,
    pub slack_l: Vec<Vec<VarId>>,
    pub w: Vec<Vec<VarId>>,
    pub balance_p: Vec<Vec<usize>>,
    pub balance_q: Vec<Vec<usize>>,
    pub voltage_upper: Vec<Vec<usize>>,
    pub voltage_lower: Vec<Vec<usize>>,
    pub ampacity: Vec<Vec<usize>>,
    pub thermal: ThermalVars,
    root_voltage: f64,
}

impl NetVars {
    /// Squared voltage at node `j` as an affine expression (constant at the root).
    pub fn voltage(&self, j: NodeId, t: usize) -> Affine {
        if j == 0 {
            Affine::constant(self.root_voltage)
        } else {
            Affine::var(self.v[j][t])
        }
    }
}

/// Assembles Net-opt for fixed DER injections.
pub fn build_netopt(case: &Case, injections: &NodalInjections, options: &NetOptions) -> Result<(ConicProgram, NetVars)> {
    let model = &case.feeder;
    let n = model.node_count();
    let horizon = case.horizon();
    if injections.p.len() != n || injections.q.len() != n {
        return Err(Error::Dimension(format!("injections cover {} nodes, feeder has {n}", injections.p.len())));
    }
    if injections.p.iter().chain(&injections.q).any(|row| row.len() != horizon) {
        return Err(Error::Dimension(format!("injection series must have {horizon} hours")));
    }
    if let CurrentModel::ConcaveCut { around, .. } | CurrentModel::Linearized { around } = &options.current {
        if around.p.len() != n || around.p.iter().skip(1).any(|r| r.len() != horizon) {
            return Err(Error::Dimension("linearization point does not match the feeder".into()));
        }
    }

    let mut prog = ConicProgram::new();
    let mut vars = NetVars {
        p: vec![Vec::new()],
        q: vec![Vec::new()],
        l: vec![Vec::new()],
        v: vec![Vec::new()],
        slack_v: vec![Vec::new()],
        slack_l: vec![Vec::new()],
        w: vec![Vec::new()],
        balance_p: vec![Vec::new()],
        balance_q: vec![Vec::new()],
        voltage_upper: vec![Vec::new()],
        voltage_lower: vec![Vec::new()],
        ampacity: vec![Vec::new()],
        thermal: ThermalVars { h: vec![], d: vec![], cyclic_rows: vec![] },
        root_voltage: model.root_voltage,
    };
    let soft = match options.limits {
        LimitMode::Soft(cfg) => Some(cfg),
        LimitMode::Hard => None,
    };
    for j in 1..n {
        let mk = |prog: &mut ConicProgram, name: &str, lo: Option<f64>| -> Vec<VarId> {
            (0..horizon).map(|t| prog.add_var(format!("{name}[{j},{}]", t + 1), lo, None)).collect()
        };
        vars.p.push(mk(&mut prog, "P", None));
        vars.q.push(mk(&mut prog, "Q", None));
        vars.l.push(mk(&mut prog, "l", Some(0.0)));
        vars.v.push(mk(&mut prog, "v", Some(0.0)));
        if soft.is_some() {
            vars.slack_v.push(mk(&mut prog, "dv", Some(0.0)));
            vars.slack_l.push(mk(&mut prog, "dl", Some(0.0)));
        } else {
            vars.slack_v.push(Vec::new());
            vars.slack_l.push(Vec::new());
        }
        if matches!(options.current, CurrentModel::ConcaveCut { .. }) {
            vars.w.push(mk(&mut prog, "w", Some(0.0)));
        } else {
            vars.w.push(Vec::new());
        }
    }

    let base = model.base.mwh_per_pu_hour();
    let child_of_root = model.children[0][0];
    for t in 0..horizon {
        prog.add_cost(vars.p[child_of_root][t], case.scenario.price_p[t] * base);
        prog.add_cost(vars.q[child_of_root][t], case.scenario.price_q[t] * base);
    }

    for j in 1..n {
        let line = *model.line(j);
        let u = model.up(j);
        let mut bp = Vec::with_capacity(horizon);
        let mut bq = Vec::with_capacity(horizon);
        let (mut vu_rows, mut vl_rows, mut amp_rows) = (Vec::new(), Vec::new(), Vec::new());
        for t in 0..horizon {
            let (p, q, l, v) = (vars.p[j][t], vars.q[j][t], vars.l[j][t], vars.v[j][t]);
            let mut real = Affine::var(p).term(l, -line.r);
            let mut reactive = Affine::var(q).term(l, -line.x);
            for &c in &model.children[j] {
                real = real.term(vars.p[c][t], -1.0);
                reactive = reactive.term(vars.q[c][t], -1.0);
            }
            let rp = real.plus(-(model.load_p[j][t] + injections.p[j][t]));
            let rq = reactive.plus(-(model.load_q[j][t] + injections.q[j][t]));
            bp.push(prog.add_eq(rp, RowTag::BalanceP { node: j, hour: t }));
            bq.push(prog.add_eq(rq, RowTag::BalanceQ { node: j, hour: t }));

            let vu = vars.voltage(u, t);
            let drop = Affine::var(v)
                .add(&vu.clone().scaled(-1.0))
                .term(p, 2.0 * line.r)
                .term(q, 2.0 * line.x)
                .term(l, -(line.r * line.r + line.x * line.x));
            prog.add_eq(drop, RowTag::VoltageDrop { node: j, hour: t });

            let mut upper = Affine::var(v).plus(-model.v_max[j]);
            let mut lower = Affine::constant(model.v_min[j]).term(v, -1.0);
            let mut amp = Affine::var(l).plus(-line.l_max);
            if let Some(cfg) = soft {
                let (dv, dl) = (vars.slack_v[j][t], vars.slack_l[j][t]);
                upper = upper.term(dv, -1.0);
                lower = lower.term(dv, -1.0);
                amp = amp.term(dl, -1.0);
                prog.add_quadratic_cost(dv, cfg.voltage_weight);
                prog.add_quadratic_cost(dl, cfg.current_weight);
            }
            vu_rows.push(prog.add_le(upper, RowTag::VoltageUpper { node: j, hour: t }));
            vl_rows.push(prog.add_le(lower, RowTag::VoltageLower { node: j, hour: t }));
            amp_rows.push(prog.add_le(amp, RowTag::Ampacity { node: j, hour: t }));

            match &options.current {
                CurrentModel::Cone => {
                    prog.add_rotated_soc(vu, Affine::var(l), vec![Affine::var(p), Affine::var(q)], ConeTag::Current { node: j, hour: t });
                }
                CurrentModel::ConcaveCut { around, penalty } => {
                    prog.add_rotated_soc(vu.clone(), Affine::var(l), vec![Affine::var(p), Affine::var(q)], ConeTag::Current { node: j, hour: t });
                    let w = vars.w[j][t];
                    prog.add_cost(w, *penalty);
                    let (pk, qk, vk, lk) = (around.p[j][t], around.q[j][t], around.v[u][t], around.l[j][t]);
                    // g = (v−l)² + 4P² + 4Q²; its tangent plane is ∇g(x_k)·x − g(x_k).
                    let g = (vk - lk).powi(2) + 4.0 * pk * pk + 4.0 * qk * qk;
                    let lin = vu
                        .clone()
                        .scaled(2.0 * (vk - lk))
                        .term(l, -2.0 * (vk - lk))
                        .term(p, 8.0 * pk)
                        .term(q, 8.0 * qk)
                        .plus(-g)
                        .term(w, 1.0);
                    let sum = vu.add(&Affine::var(l));
                    prog.add_rotated_soc(lin, Affine::constant(1.0), vec![sum], ConeTag::ConcaveCut { node: j, hour: t });
                }
                CurrentModel::Linearized { around } => {
                    let (pk, qk, vk) = (around.p[j][t], around.q[j][t], around.v[u][t]);
                    if !(vk > 0.0) {
                        return Err(Error::Invalid(format!("linearization point has nonpositive voltage at node {u}")));
                    }
                    let expr = Affine::var(l)
                        .term(p, -2.0 * pk / vk)
                        .term(q, -2.0 * qk / vk)
                        .add(&vu.scaled((pk * pk + qk * qk) / (vk * vk)));
                    prog.add_eq(expr, RowTag::LinearizedCurrent { node: j, hour: t });
                }
            }
        }
        vars.balance_p.push(bp);
        vars.balance_q.push(bq);
        vars.voltage_upper.push(vu_rows);
        vars.voltage_lower.push(vl_rows);
        vars.ampacity.push(amp_rows);
    }

    let currents: Vec<Vec<VarId>> = model.transformers.iter().map(|tr| vars.l[tr.node].clone()).collect();
    let inputs: Vec<ThermalInput<'_>> = model
        .transformers
        .iter()
        .zip(&case.zeta)
        .zip(&currents)
        .map(|((tr, zeta), current)| ThermalInput { params: &tr.thermal, zeta, current })
        .collect();
    vars.thermal = build_thermal_constraints(&mut prog, &inputs, &options.thermal)?;
    Ok((prog, vars))
}

/// Objective split into its economic parts ($).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    pub real: f64,
    pub reactive: f64,
    pub degradation: f64,
    /// Soft-limit quadratic penalties.
    pub penalty: f64,
    /// Linear penalty on the concave-cut violations.
    pub cut_penalty: f64,
    /// Pinned-mode end-of-horizon temperature value.
    pub terminal: f64,
}

impl CostBreakdown {
    /// The system cost: energy, reactive, degradation and soft-limit penalties.
    pub fn system(&self) -> f64 {
        self.real + self.reactive + self.degradation + self.penalty
    }
}

/// Marginal costs per `[node][hour]`: `p` in $/MWh, `q` in $/MVARh.
#[derive(Debug, Clone, PartialEq)]
pub struct DlmcSchedule {
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct OpfSolution {
    pub flows: FlowPoint,
    pub slack_v: Vec<Vec<f64>>,
    pub slack_l: Vec<Vec<f64>>,
    /// Concave-cut violations (empty unless solved with the cut model).
    pub w: Vec<Vec<f64>>,
    pub thermal: ThermalState,
    pub lambda_p: Vec<Vec<f64>>,
    pub lambda_q: Vec<Vec<f64>>,
    /// Whether `lambda_*` are marginal costs of the physical problem.
    pub duals_valid: bool,
    pub cost: CostBreakdown,
    pub objective: f64,
    pub status: SolveStatus,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Largest balance violation recomputed from the primal values (p.u.).
    pub balance_residual: f64,
    pub solver_iterations: u32,
    pub solve_time: f64,
}

impl OpfSolution {
    /// Substation real and reactive imports per hour.
    pub fn substation(&self, case: &Case) -> (Vec<f64>, Vec<f64>) {
        let c = case.feeder.children[0][0];
        (self.flows.p[c].clone(), self.flows.q[c].clone())
    }
}

/// Reads primal values, multipliers and the cost split out of a raw solution.
pub fn interpret(case: &Case, injections: &NodalInjections, options: &NetOptions, vars: &NetVars, raw: &ConicSolution) -> OpfSolution {
    let model = &case.feeder;
    let n = model.node_count();
    let horizon = case.horizon();
    let base = model.base.mwh_per_pu_hour();
    let read = |table: &Vec<Vec<VarId>>| -> Vec<Vec<f64>> {
        table.iter().map(|row| row.iter().map(|&v| raw.value(v)).collect()).collect()
    };
    let pad = |mut m: Vec<Vec<f64>>| {
        if m.first().is_some_and(Vec::is_empty) {
            m[0] = vec![0.0; horizon];
        }
        m
    };
    let mut flows = FlowPoint { p: pad(read(&vars.p)), q: pad(read(&vars.q)), v: pad(read(&vars.v)), l: pad(read(&vars.l)) };
    flows.v[0] = vec![model.root_voltage; horizon];

    let mut lambda_p = vec![case.scenario.price_p.clone()];
    let mut lambda_q = vec![case.scenario.price_q.clone()];
    for j in 1..n {
        lambda_p.push(vars.balance_p[j].iter().map(|&r| raw.eq_marginal[r] / base).collect());
        lambda_q.push(vars.balance_q[j].iter().map(|&r| raw.eq_marginal[r] / base).collect());
    }

    let thermal = ThermalState {
        h: read(&vars.thermal.h),
        d: read(&vars.thermal.d),
        rho: match &options.thermal {
            ThermalMode::Cyclic => vars.thermal.cyclic_rows.iter().map(|r| r.map_or(0.0, |r| -raw.eq_marginal[r])).collect(),
            ThermalMode::Pinned { rho, .. } => rho.clone(),
        },
    };

    let c1 = model.children[0][0];
    let mut cost = CostBreakdown::default();
    for t in 0..horizon {
        cost.real += case.scenario.price_p[t] * base * flows.p[c1][t];
        cost.reactive += case.scenario.price_q[t] * base * flows.q[c1][t];
    }
    for (k, tr) in model.transformers.iter().enumerate() {
        cost.degradation += tr.thermal.cost_per_hour * thermal.d[k].iter().sum::<f64>();
        if let ThermalMode::Pinned { rho, .. } = &options.thermal {
            cost.terminal += rho[k] * thermal.h[k][horizon];
        }
    }
    let slack_v = read(&vars.slack_v);
    let slack_l = read(&vars.slack_l);
    if let LimitMode::Soft(cfg) = options.limits {
        let sq = |m: &Vec<Vec<f64>>| m.iter().flatten().map(|x| x * x).sum::<f64>();
        cost.penalty = cfg.voltage_weight * sq(&slack_v) + cfg.current_weight * sq(&slack_l);
    }
    let w = read(&vars.w);
    if let CurrentModel::ConcaveCut { penalty, .. } = &options.current {
        cost.cut_penalty = penalty * w.iter().flatten().sum::<f64>();
    }

    let balance_residual = balance_residual(case, &flows, injections);
    OpfSolution {
        flows,
        slack_v,
        slack_l,
        w,
        thermal,
        lambda_p,
        lambda_q,
        duals_valid: !matches!(options.current, CurrentModel::ConcaveCut { .. }),
        cost,
        objective: raw.objective,
        status: raw.status,
        primal_residual: raw.primal_residual,
        dual_residual: raw.dual_residual,
        balance_residual,
        solver_iterations: raw.iterations,
        solve_time: raw.solve_time,
    }
}

/// Builds and solves Net-opt.
pub fn solve_netopt(
    case: &Case,
    injections: &NodalInjections,
    options: &NetOptions,
    solver: &dyn ConicSolver,
) -> Result<OpfSolution> {
    let (program, vars) = build_netopt(case, injections, options)?;
    let raw = solver.solve(&program)?;
    Ok(interpret(case, injections, options, &vars, &raw))
}

/// Signed balance mismatch `[node][hour]` (supply minus demand) for real and
/// reactive power. Row 0 is empty.
pub fn balance_mismatch(case: &Case, flows: &FlowPoint, injections: &NodalInjections) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let model = &case.feeder;
    let n = model.node_count();
    let mut mp = vec![Vec::new(); n];
    let mut mq = vec![Vec::new(); n];
    for j in 1..n {
        let line = model.line(j);
        for t in 0..case.horizon() {
            let mut rp = flows.p[j][t] - line.r * flows.l[j][t] - model.load_p[j][t] - injections.p[j][t];
            let mut rq = flows.q[j][t] - line.x * flows.l[j][t] - model.load_q[j][t] - injections.q[j][t];
            for &c in &model.children[j] {
                rp -= flows.p[c][t];
                rq -= flows.q[c][t];
            }
            mp[j].push(rp);
            mq[j].push(rq);
        }
    }
    (mp, mq)
}

/// Largest real or reactive balance violation of `flows` under `injections`.
pub fn balance_residual(case: &Case, flows: &FlowPoint, injections: &NodalInjections) -> f64 {
    let (mp, mq) = balance_mismatch(case, flows, injections);
    mp.iter().chain(&mq).flatten().fold(0.0, |m, r| m.max(r.abs()))
}

/// The nodal marginal costs of a solution whose duals are physical.
pub fn extract_dlmc(solution: &OpfSolution) -> Result<DlmcSchedule> {
    if !solution.duals_valid {
        return Err(Error::Invalid("solution comes from a penalized iterate; its multipliers are not marginal costs".into()));
    }
    if solution.status != SolveStatus::Optimal && solution.status != SolveStatus::AlmostOptimal {
        return Err(Error::Invalid("solution is not optimal".into()));
    }
    Ok(DlmcSchedule { p: solution.lambda_p.clone(), q: solution.lambda_q.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::ClarabelEngine;
    use crate::feeder::tests::path_model;
    use crate::scenario::Scenario;

    fn two_bus(r: f64, x: f64, load: f64, price: f64) -> Case {
        let mut m = path_model(2, r, x, 1);
        m.load_p[1][0] = load;
        m.load_q[1][0] = 0.3 * load;
        Case::new(m, Scenario::network_only(vec![price], vec![20.0])).unwrap()
    }

    #[test]
    fn two_node_program_counts() {
        let case = two_bus(0.01, 0.01, 0.1, 40.0);
        let (prog, _) = build_netopt(&case, &NodalInjections::zeros(2, 1), &NetOptions::default()).unwrap();
        let balances = prog.equalities.iter().filter(|r| matches!(r.tag, RowTag::BalanceP { .. } | RowTag::BalanceQ { .. })).count();
        let drops = prog.equalities.iter().filter(|r| matches!(r.tag, RowTag::VoltageDrop { .. })).count();
        assert_eq!((balances, drops, prog.cones.len()), (2, 1, 1));
        assert_eq!(prog.inequalities.len(), 3);
    }

    #[test]
    fn lossless_line_prices_equal_substation() {
        let case = two_bus(0.0, 0.0, 0.4, 40.0);
        let sol = solve_netopt(&case, &NodalInjections::zeros(2, 1), &NetOptions::default(), &ClarabelEngine::default()).unwrap();
        assert!((sol.lambda_p[1][0] - 40.0).abs() < 1e-5, "{}", sol.lambda_p[1][0]);
        assert!((sol.lambda_q[1][0] - 4.0).abs() < 1e-5);
    }

    #[test]
    fn losses_raise_the_load_bus_price() {
        let case = two_bus(0.05, 0.02, 0.4, 40.0);
        let sol = solve_netopt(&case, &NodalInjections::zeros(2, 1), &NetOptions::default(), &ClarabelEngine::default()).unwrap();
        assert!(sol.lambda_p[1][0] > 40.0);
        assert!(sol.balance_residual < 1e-8);
    }

    #[test]
    fn penalized_solution_has_no_dlmc() {
        let case = two_bus(0.01, 0.01, 0.1, 40.0);
        let around = solve_netopt(&case, &NodalInjections::zeros(2, 1), &NetOptions::default(), &ClarabelEngine::default()).unwrap().flows;
        let opts = NetOptions { current: CurrentModel::ConcaveCut { around, penalty: 0.005 }, ..NetOptions::default() };
        let sol = solve_netopt(&case, &NodalInjections::zeros(2, 1), &opts, &ClarabelEngine::default()).unwrap();
        assert!(extract_dlmc(&sol).is_err());
    }

    #[test]
    fn injection_shape_checked() {
        let case = two_bus(0.01, 0.01, 0.1, 40.0);
        assert!(matches!(build_netopt(&case, &NodalInjections::zeros(3, 1), &NetOptions::default()), Err(Error::Dimension(_))));
    }
}
