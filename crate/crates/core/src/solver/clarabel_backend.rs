//! Binding to the Clarabel interior-point conic solver.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use super::backend::{ConicBackend, RawSolution, RawStatus};
use super::standard::StandardForm;
use crate::error::SolverError;

#[derive(Clone, Debug)]
pub struct ClarabelBackend {
    pub tol: f64,
    pub max_iter: u32,
}

impl Default for ClarabelBackend {
    fn default() -> Self {
        ClarabelBackend { tol: 1e-9, max_iter: 200 }
    }
}

impl ConicBackend for ClarabelBackend {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn solve(&self, sf: &StandardForm) -> Result<RawSolution, SolverError> {
        let n = sf.n;
        let p = sf.p();
        let m = sf.m();
        let (mut ii, mut jj, mut vv) = (Vec::new(), Vec::new(), Vec::new());
        for (r, row) in sf.a.iter().chain(sf.g.iter()).enumerate() {
            for &(j, v) in row {
                ii.push(r);
                jj.push(j);
                vv.push(v);
            }
        }
        let a = CscMatrix::new_from_triplets(p + m, n, ii, jj, vv);
        let pmat = CscMatrix::<f64>::zeros((n, n));
        let mut b = sf.b.clone();
        b.extend_from_slice(&sf.h);

        let mut cones = Vec::new();
        if p > 0 {
            cones.push(SupportedConeT::ZeroConeT(p));
        }
        if sf.nonneg > 0 {
            cones.push(SupportedConeT::NonnegativeConeT(sf.nonneg));
        }
        for &d in &sf.soc_dims {
            cones.push(SupportedConeT::SecondOrderConeT(d));
        }

        let settings = DefaultSettings {
            verbose: false,
            presolve_enable: false,
            max_iter: self.max_iter,
            tol_gap_abs: self.tol,
            tol_gap_rel: self.tol,
            tol_feas: self.tol,
            tol_ktratio: 1e-7,
            ..DefaultSettings::default()
        };
        let mut solver = DefaultSolver::new(&pmat, &sf.c, &a, &b, &cones, settings).map_err(|e| {
            SolverError::Backend { backend: "clarabel".into(), message: format!("{e:?}") }
        })?;
        solver.solve();
        let sol = &solver.solution;
        let (status, reduced) = match sol.status {
            SolverStatus::Solved => (RawStatus::Optimal, false),
            SolverStatus::AlmostSolved => (RawStatus::Optimal, true),
            SolverStatus::PrimalInfeasible => (RawStatus::PrimalInfeasible, false),
            SolverStatus::AlmostPrimalInfeasible => (RawStatus::PrimalInfeasible, true),
            SolverStatus::DualInfeasible => (RawStatus::DualInfeasible, false),
            SolverStatus::AlmostDualInfeasible => (RawStatus::DualInfeasible, true),
            other => {
                return Err(SolverError::Backend {
                    backend: "clarabel".into(),
                    message: format!(
                        "status {other:?} after {} iterations (r_prim {:.3e}, r_dual {:.3e})",
                        sol.iterations, sol.r_prim, sol.r_dual
                    ),
                })
            }
        };
        Ok(RawSolution {
            status,
            x: sol.x.clone(),
            y: sol.z[..p].to_vec(),
            z: sol.z[p..].to_vec(),
            s: sol.s[p..].to_vec(),
            primal_objective: sol.obj_val + sf.c0,
            dual_objective: sol.obj_val_dual + sf.c0,
            iterations: sol.iterations,
            reduced_accuracy: reduced,
        })
    }
}
