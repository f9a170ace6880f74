use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use super::{ConicProgram, ConicSolution, ConicSolver, SolveStatus};
use crate::error::{Error, Result};

/// Accuracy targets handed to the interior-point engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverTolerances {
    pub feasibility: f64,
    pub gap_abs: f64,
    pub gap_rel: f64,
    pub max_iter: u32,
    /// Pivots smaller than this are replaced by `dynamic_reg_delta` during factorization.
    pub dynamic_reg_eps: f64,
    pub dynamic_reg_delta: f64,
}

impl Default for SolverTolerances {
    fn default() -> Self {
        SolverTolerances { feasibility: 1e-10, gap_abs: 1e-10, gap_rel: 1e-10, max_iter: 400, dynamic_reg_eps: 1e-9, dynamic_reg_delta: 1e-3 }
    }
}

/// Name of the environment variable read by [`SolverTolerances::from_env`].
pub const TOLERANCE_ENV: &str = "DLMC_SOLVER_TOL";

impl SolverTolerances {
    /// Applies overrides such as `feas=1e-9,gap=1e-10,max_iter=300,dyn_eps=1e-10` from
    /// `DLMC_SOLVER_TOL`; unknown keys are an error.
    pub fn from_env() -> Result<Self> {
        match std::env::var(TOLERANCE_ENV) {
            Ok(spec) => Self::default().with_overrides(&spec),
            Err(_) => Ok(Self::default()),
        }
    }

    pub fn with_overrides(mut self, spec: &str) -> Result<Self> {
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad tolerance override '{item}'")))?;
            let bad = || Error::Parse(format!("bad value in tolerance override '{item}'"));
            match key.trim() {
                "feas" => self.feasibility = value.trim().parse().map_err(|_| bad())?,
                "gap" => {
                    let g: f64 = value.trim().parse().map_err(|_| bad())?;
                    self.gap_abs = g;
                    self.gap_rel = g;
                }
                "gap_abs" => self.gap_abs = value.trim().parse().map_err(|_| bad())?,
                "gap_rel" => self.gap_rel = value.trim().parse().map_err(|_| bad())?,
                "max_iter" => self.max_iter = value.trim().parse().map_err(|_| bad())?,
                "dyn_eps" => self.dynamic_reg_eps = value.trim().parse().map_err(|_| bad())?,
                "dyn_delta" => self.dynamic_reg_delta = value.trim().parse().map_err(|_| bad())?,
                other => return Err(Error::Parse(format!("unknown tolerance key '{other}'"))),
            }
        }
        Ok(self)
    }
}

/// Clarabel interior-point engine.
#[derive(Debug, Clone, Default)]
pub struct ClarabelEngine {
    pub tolerances: SolverTolerances,
}

impl ClarabelEngine {
    pub fn new(tolerances: SolverTolerances) -> Self {
        ClarabelEngine { tolerances }
    }
}

impl ConicSolver for ClarabelEngine {
    fn solve_native(&self, program: &ConicProgram) -> Result<ConicSolution> {
        let n = program.var_count();
        let mut rows_i = Vec::new();
        let mut cols_j = Vec::new();
        let mut vals = Vec::new();
        let mut b = Vec::new();
        let mut cones = Vec::new();

        // Zero cone: equalities.
        for row in &program.equalities {
            let r = b.len();
            for &(v, c) in &row.terms {
                rows_i.push(r);
                cols_j.push(v.0);
                vals.push(c);
            }
            b.push(row.rhs);
        }
        if !program.equalities.is_empty() {
            cones.push(SupportedConeT::ZeroConeT(program.equalities.len()));
        }

        // Nonnegative cone: user inequalities, then variable bounds.
        let ineq_start = b.len();
        for row in &program.inequalities {
            let r = b.len();
            for &(v, c) in &row.terms {
                rows_i.push(r);
                cols_j.push(v.0);
                vals.push(c);
            }
            b.push(row.rhs);
        }
        for (j, var) in program.vars.iter().enumerate() {
            if let Some(lo) = var.lower {
                rows_i.push(b.len());
                cols_j.push(j);
                vals.push(-1.0);
                b.push(-lo);
            }
            if let Some(hi) = var.upper {
                rows_i.push(b.len());
                cols_j.push(j);
                vals.push(1.0);
                b.push(hi);
            }
        }
        let nonneg = b.len() - ineq_start;
        if nonneg > 0 {
            cones.push(SupportedConeT::NonnegativeConeT(nonneg));
        }

        // Second-order cones: s = affine(x) = b - A x.
        for cone in &program.cones {
            let dim = 1 + cone.tail.len();
            for expr in std::iter::once(&cone.head).chain(&cone.tail) {
                let r = b.len();
                for &(v, c) in &expr.terms {
                    rows_i.push(r);
                    cols_j.push(v.0);
                    vals.push(-c);
                }
                b.push(expr.constant);
            }
            cones.push(SupportedConeT::SecondOrderConeT(dim));
        }

        let m = b.len();
        let a = CscMatrix::new_from_triplets(m, n, rows_i, cols_j, vals);
        let (pi, pj, pv): (Vec<usize>, Vec<usize>, Vec<f64>) = program
            .quadratic
            .iter()
            .map(|&(v, c)| (v.0, v.0, 2.0 * c))
            .fold((vec![], vec![], vec![]), |mut acc, (i, j, v)| {
                acc.0.push(i);
                acc.1.push(j);
                acc.2.push(v);
                acc
            });
        let p = CscMatrix::new_from_triplets(n, n, pi, pj, pv);

        let tol = self.tolerances;
        let settings = DefaultSettings {
            verbose: std::env::var("DLMC_VERBOSE").is_ok(),
            tol_feas: tol.feasibility,
            tol_gap_abs: tol.gap_abs,
            tol_gap_rel: tol.gap_rel,
            max_iter: tol.max_iter,
            dynamic_regularization_eps: tol.dynamic_reg_eps,
            dynamic_regularization_delta: tol.dynamic_reg_delta,
            presolve_enable: false,
            ..DefaultSettings::default()
        };

        let mut solver = DefaultSolver::new(&p, &program.linear, &a, &b, &cones, settings)
            .map_err(|e| Error::Solver { status: "setup".into(), detail: format!("{e:?}") })?;
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved => SolveStatus::Optimal,
            SolverStatus::AlmostSolved => SolveStatus::AlmostOptimal,
            other => {
                return Err(Error::Solver {
                    status: format!("{other:?}"),
                    detail: format!(
                        "{} vars, {} rows after {} iterations (primal res {:.2e}, dual res {:.2e})",
                        n, m, sol.iterations, sol.r_prim, sol.r_dual
                    ),
                })
            }
        };
        let eq_count = program.equalities.len();
        let eq_marginal = sol.z[..eq_count].iter().map(|z| -z).collect();
        let ineq_dual = sol.z[ineq_start..ineq_start + program.inequalities.len()].to_vec();
        Ok(ConicSolution {
            status,
            objective: sol.obj_val + program.constant,
            x: sol.x.clone(),
            eq_marginal,
            ineq_dual,
            primal_residual: sol.r_prim,
            dual_residual: sol.r_dual,
            iterations: sol.iterations,
            solve_time: sol.solve_time,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_parse() {
        let t = SolverTolerances::default().with_overrides("feas=1e-7, gap=1e-6,max_iter=50").unwrap();
        assert_eq!(t.feasibility, 1e-7);
        assert_eq!(t.gap_abs, 1e-6);
        assert_eq!(t.gap_rel, 1e-6);
        assert_eq!(t.max_iter, 50);
        assert!(SolverTolerances::default().with_overrides("speed=3").is_err());
    }
}
