//! Conic program container and the solver contract.
//!
//! A [`ConicProgram`] holds named variables with optional bounds, a linear
//! plus diagonal-quadratic objective, tagged linear equality / inequality rows
//! and second-order cones `‖tail‖₂ ≤ head` over affine expressions. Any engine
//! implementing [`ConicSolver`] can solve it; the bundled engine is Clarabel.
//!
//! Dual convention: `ConicSolution::eq_marginal[i]` is the derivative of the
//! optimal objective with respect to the right-hand side of equality row `i`,
//! and `ConicSolution::ineq_dual[i] ≥ 0` is the shadow price of inequality row
//! `i` (objective decrease per unit relaxation of its right-hand side).

mod clarabel_engine;
mod dump;

pub use clarabel_engine::{ClarabelEngine, SolverTolerances};

use crate::error::Result;
use crate::feeder::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

/// `Σ coef·var + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Affine {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn var(v: VarId) -> Self {
        Affine { terms: vec![(v, 1.0)], constant: 0.0 }
    }

    pub fn constant(c: f64) -> Self {
        Affine { terms: Vec::new(), constant: c }
    }

    pub fn term(mut self, v: VarId, coef: f64) -> Self {
        if coef != 0.0 {
            self.terms.push((v, coef));
        }
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= s;
        }
        self.constant *= s;
        self
    }

    pub fn add(mut self, other: &Affine) -> Self {
        self.terms.extend_from_slice(&other.terms);
        self.constant += other.constant;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * x[v.0]).sum::<f64>() + self.constant
    }
}

/// Identifies a constraint row so its multiplier can be looked up after a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowTag {
    BalanceP { node: NodeId, hour: usize },
    BalanceQ { node: NodeId, hour: usize },
    VoltageDrop { node: NodeId, hour: usize },
    LinearizedCurrent { node: NodeId, hour: usize },
    Thermal { transformer: usize, hour: usize },
    Cyclic { transformer: usize },
    InitialTemperature { transformer: usize },
    Epigraph { transformer: usize, hour: usize, segment: usize },
    VoltageUpper { node: NodeId, hour: usize },
    VoltageLower { node: NodeId, hour: usize },
    Ampacity { node: NodeId, hour: usize },
    EvEnergy { ev: usize },
    Bound { var: VarId, upper: bool },
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeTag {
    Current { node: NodeId, hour: usize },
    ConcaveCut { node: NodeId, hour: usize },
    Inverter,
    QuadraticEpigraph,
}

/// `expr = rhs` or `expr ≤ rhs` depending on the list it is stored in.
#[derive(Debug, Clone)]
pub struct Row {
    pub terms: Vec<(VarId, f64)>,
    pub rhs: f64,
    pub tag: RowTag,
}

/// `‖tail‖₂ ≤ head`.
#[derive(Debug, Clone)]
pub struct SecondOrderCone {
    pub head: Affine,
    pub tail: Vec<Affine>,
    pub tag: ConeTag,
}

#[derive(Debug, Clone, Default)]
pub struct ConicProgram {
    pub vars: Vec<Variable>,
    pub linear: Vec<f64>,
    /// Diagonal quadratic objective terms `coef·x²` (convex, coef ≥ 0).
    pub quadratic: Vec<(VarId, f64)>,
    pub constant: f64,
    pub equalities: Vec<Row>,
    pub inequalities: Vec<Row>,
    pub cones: Vec<SecondOrderCone>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: Option<f64>, upper: Option<f64>) -> VarId {
        let id = VarId(self.vars.len());
        self.vars.push(Variable { name: name.into(), lower, upper });
        self.linear.push(0.0);
        id
    }

    pub fn var_count(&self) -> usize {
        self.vars.len()
    }

    pub fn add_cost(&mut self, v: VarId, coef: f64) {
        self.linear[v.0] += coef;
    }

    pub fn add_quadratic_cost(&mut self, v: VarId, coef: f64) {
        assert!(coef >= 0.0, "quadratic objective must be convex");
        self.quadratic.push((v, coef));
    }

    /// Adds `expr = 0`, folding the constant into the right-hand side. Returns the row index.
    pub fn add_eq(&mut self, expr: Affine, tag: RowTag) -> usize {
        self.equalities.push(Row { terms: expr.terms, rhs: -expr.constant, tag });
        self.equalities.len() - 1
    }

    /// Adds `expr ≤ 0`. Returns the row index.
    pub fn add_le(&mut self, expr: Affine, tag: RowTag) -> usize {
        self.inequalities.push(Row { terms: expr.terms, rhs: -expr.constant, tag });
        self.inequalities.len() - 1
    }

    pub fn add_soc(&mut self, head: Affine, tail: Vec<Affine>, tag: ConeTag) {
        self.cones.push(SecondOrderCone { head, tail, tag });
    }

    /// Rotated cone `a·b ≥ ‖tail‖²` with `a, b ≥ 0`, as `‖(2·tail, a−b)‖ ≤ a+b`.
    pub fn add_rotated_soc(&mut self, a: Affine, b: Affine, tail: Vec<Affine>, tag: ConeTag) {
        let head = a.clone().add(&b);
        let mut t: Vec<Affine> = tail.into_iter().map(|e| e.scaled(2.0)).collect();
        t.push(a.add(&b.scaled(-1.0)));
        self.add_soc(head, t, tag);
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.linear.iter().zip(x).map(|(c, v)| c * v).sum();
        let quad: f64 = self.quadratic.iter().map(|&(v, c)| c * x[v.0] * x[v.0]).sum();
        lin + quad + self.constant
    }

    /// Rewrites every quadratic term `c·x²` as `c·t` with `t ≥ x²` (a rotated cone),
    /// for engines without native quadratic objectives.
    pub fn with_quadratic_as_cones(&self) -> ConicProgram {
        let mut out = self.clone();
        out.quadratic.clear();
        for &(v, c) in &self.quadratic {
            let name = format!("epi[{}]", self.vars[v.0].name);
            let t = out.add_var(name, Some(0.0), None);
            out.add_cost(t, c);
            out.add_rotated_soc(
                Affine::var(t),
                Affine::constant(1.0),
                vec![Affine::var(v)],
                ConeTag::QuadraticEpigraph,
            );
        }
        out
    }

    pub fn find_eq(&self, tag: RowTag) -> Option<usize> {
        self.equalities.iter().position(|r| r.tag == tag)
    }

    pub fn write_dump<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        dump::write(self, w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// Converged to the engine's reduced accuracy thresholds.
    AlmostOptimal,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub eq_marginal: Vec<f64>,
    pub ineq_dual: Vec<f64>,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: u32,
    pub solve_time: f64,
}

impl ConicSolution {
    pub fn value(&self, v: VarId) -> f64 {
        self.x[v.0]
    }
}

/// Capabilities required of a conic engine: second-order cones, convex
/// quadratic objectives (natively or by reformulation) and equality duals.
pub trait ConicSolver: Sync {
    fn supports_quadratic_objective(&self) -> bool {
        true
    }

    fn solve_native(&self, program: &ConicProgram) -> Result<ConicSolution>;

    fn solve(&self, program: &ConicProgram) -> Result<ConicSolution> {
        if self.supports_quadratic_objective() || program.quadratic.is_empty() {
            self.solve_native(program)
        } else {
            let reformulated = program.with_quadratic_as_cones();
            let mut sol = self.solve_native(&reformulated)?;
            sol.x.truncate(program.var_count());
            Ok(sol)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct NoQuadratic(ClarabelEngine);

    impl ConicSolver for NoQuadratic {
        fn supports_quadratic_objective(&self) -> bool {
            false
        }
        fn solve_native(&self, program: &ConicProgram) -> Result<ConicSolution> {
            assert!(program.quadratic.is_empty());
            self.0.solve_native(program)
        }
    }

    fn small_qp() -> (ConicProgram, VarId, VarId) {
        // min x + 3 y²  s.t. x + y = 2, ‖(x)‖ ≤ 1.5
        let mut p = ConicProgram::new();
        let x = p.add_var("x", None, None);
        let y = p.add_var("y", None, None);
        p.add_cost(x, 1.0);
        p.add_quadratic_cost(y, 3.0);
        p.add_eq(Affine::var(x).term(y, 1.0).plus(-2.0), RowTag::Other);
        p.add_soc(Affine::constant(1.5), vec![Affine::var(x)], ConeTag::Inverter);
        (p, x, y)
    }

    #[test]
    fn quadratic_reformulation_gives_same_objective() {
        let (p, x, y) = small_qp();
        let engine = ClarabelEngine::default();
        let native = engine.solve(&p).unwrap();
        let cones = NoQuadratic(ClarabelEngine::default()).solve(&p).unwrap();
        // optimum: y = 1/6, x = 11/6 > 1.5 so x = 1.5, y = 0.5
        assert!((native.value(x) - 1.5).abs() < 1e-6);
        assert!((native.value(y) - 0.5).abs() < 1e-6);
        assert!((native.objective - cones.objective).abs() < 1e-6);
        assert!((p.objective_value(&native.x) - native.objective).abs() < 1e-7);
    }

    #[test]
    fn equality_marginal_matches_finite_difference() {
        let (p, _, _) = small_qp();
        let engine = ClarabelEngine::default();
        let base = engine.solve(&p).unwrap();
        let mut bumped = p.clone();
        let h = 1e-4;
        bumped.equalities[0].rhs += h;
        let up = engine.solve(&bumped).unwrap();
        bumped.equalities[0].rhs -= 2.0 * h;
        let down = engine.solve(&bumped).unwrap();
        let fd = (up.objective - down.objective) / (2.0 * h);
        assert!((base.eq_marginal[0] - fd).abs() < 1e-4, "{} vs {fd}", base.eq_marginal[0]);
    }

    #[test]
    fn rotated_cone_is_enforced() {
        // min a + b  s.t. a·b ≥ 4, so a = b = 2
        let mut p = ConicProgram::new();
        let a = p.add_var("a", Some(0.0), None);
        let b = p.add_var("b", Some(0.0), None);
        p.add_cost(a, 1.0);
        p.add_cost(b, 1.0);
        p.add_rotated_soc(Affine::var(a), Affine::var(b), vec![Affine::constant(2.0)], ConeTag::Inverter);
        let s = ClarabelEngine::default().solve(&p).unwrap();
        assert!((s.value(a) - 2.0).abs() < 1e-6 && (s.value(b) - 2.0).abs() < 1e-6);
    }
}
