//! Continuous conic solves through a pluggable backend, dual recovery per
//! labeled block, cone tightness reporting, and branch-and-bound.

mod backend;
mod bnb;
mod clarabel_backend;
mod dense;
mod standard;

use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

pub use backend::{BackendKind, ConicBackend, RawSolution, RawStatus};
pub use bnb::{BnbOptions, NodeRecord};
pub use clarabel_backend::ClarabelBackend;
pub use dense::DenseIpm;
pub use standard::{program_bounds, RowOrigin, StandardForm};

use crate::error::SolverError;
use crate::program::{ConeFamily, ConicProgram, VarKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    /// Branch-and-bound stopped at its node limit; the incumbent is returned with its gap.
    GapLimit,
}

/// Primal/dual result of a solve.
///
/// Every dual is reported as a shadow price: the derivative of the optimal
/// value with respect to the right-hand side of the row (or the bound).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Solution {
    pub status: Status,
    pub objective: f64,
    pub x: Vec<f64>,
    /// Shadow price of every row, keyed by block label.
    pub duals: IndexMap<String, Vec<f64>>,
    /// Shadow prices of the `(lower, upper)` bound of every variable.
    pub bound_duals: Vec<(f64, f64)>,
    pub dual_objective: f64,
    /// Largest linear-row or bound violation.
    pub primal_residual: f64,
    /// Largest cone violation.
    pub cone_residual: f64,
    pub mip_gap: Option<f64>,
    pub best_bound: Option<f64>,
    pub nodes: usize,
    pub iterations: u32,
    pub backend: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub node_log: Vec<NodeRecord>,
}

impl Solution {
    fn infeasible(status: Status, backend: &str) -> Solution {
        Solution {
            status,
            objective: match status {
                Status::Unbounded => f64::NEG_INFINITY,
                _ => f64::INFINITY,
            },
            x: Vec::new(),
            duals: IndexMap::new(),
            bound_duals: Vec::new(),
            dual_objective: f64::NAN,
            primal_residual: f64::NAN,
            cone_residual: f64::NAN,
            mip_gap: None,
            best_bound: None,
            nodes: 0,
            iterations: 0,
            backend: backend.to_string(),
            node_log: Vec::new(),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    pub fn has_primal(&self) -> bool {
        matches!(self.status, Status::Optimal | Status::GapLimit)
    }

    pub fn dual(&self, block: &str, row: usize) -> Option<f64> {
        self.duals.get(block).and_then(|d| d.get(row)).copied()
    }
}

/// Solver entry point bundling a backend with branch-and-bound settings.
#[derive(Clone)]
pub struct ConicSolver {
    pub backend: Arc<dyn ConicBackend>,
    pub bnb: BnbOptions,
}

impl std::fmt::Debug for ConicSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConicSolver")
            .field("backend", &self.backend.name())
            .field("bnb", &self.bnb)
            .finish()
    }
}

impl Default for ConicSolver {
    fn default() -> Self {
        ConicSolver::new(BackendKind::default())
    }
}

impl ConicSolver {
    pub fn new(kind: BackendKind) -> Self {
        ConicSolver { backend: kind.instantiate(), bnb: BnbOptions::default() }
    }

    pub fn with_backend(backend: Arc<dyn ConicBackend>) -> Self {
        ConicSolver { backend, bnb: BnbOptions::default() }
    }

    /// Backend chosen by the environment, falling back to the default.
    pub fn from_env() -> Result<Self, SolverError> {
        Ok(ConicSolver::new(BackendKind::from_env()?))
    }

    /// Solves a program whose binaries are all fixed (or absent).
    pub fn solve_continuous(&self, prog: &ConicProgram) -> Result<Solution, SolverError> {
        let free = prog
            .variables
            .iter()
            .filter(|v| v.kind == VarKind::Binary && v.lower < v.upper)
            .count();
        if free > 0 {
            return Err(SolverError::FreeBinaries(free));
        }
        let (lo, hi) = program_bounds(prog);
        self.solve_relaxation(prog, &lo, &hi)
    }

    /// Continuous relaxation with the given bounds (binaries relaxed to their interval).
    pub fn solve_relaxation(
        &self,
        prog: &ConicProgram,
        lower: &[f64],
        upper: &[f64],
    ) -> Result<Solution, SolverError> {
        let name = self.backend.name();
        if lower.iter().zip(upper).any(|(l, u)| l > u) {
            return Ok(Solution::infeasible(Status::Infeasible, name));
        }
        let sf = StandardForm::from_program(prog, lower, upper)?;
        let raw = self.backend.solve(&sf)?;
        match raw.status {
            RawStatus::PrimalInfeasible => Ok(Solution::infeasible(Status::Infeasible, name)),
            RawStatus::DualInfeasible => Ok(Solution::infeasible(Status::Unbounded, name)),
            RawStatus::Optimal => Ok(recover(prog, &sf, &raw, name)),
        }
    }

    /// Solves `prog`, branching on binaries when any are free.
    pub fn solve(&self, prog: &ConicProgram) -> Result<Solution, SolverError> {
        let free = prog.variables.iter().any(|v| v.kind == VarKind::Binary && v.lower < v.upper);
        if free {
            self.branch_and_bound(prog)
        } else {
            self.solve_continuous(prog)
        }
    }

    pub fn branch_and_bound(&self, prog: &ConicProgram) -> Result<Solution, SolverError> {
        bnb::run(self, prog)
    }
}

fn recover(prog: &ConicProgram, sf: &StandardForm, raw: &RawSolution, backend: &str) -> Solution {
    let mut duals: IndexMap<String, Vec<f64>> = prog
        .blocks
        .iter()
        .map(|(k, b)| (k.clone(), vec![0.0; b.rows.len()]))
        .collect();
    let mut bound_duals = vec![(0.0, 0.0); prog.num_vars()];
    let labels: Vec<&String> = prog.blocks.keys().collect();

    for (i, origin) in sf.eq_origin.iter().enumerate() {
        let price = -raw.y[i];
        match *origin {
            RowOrigin::Linear { block, row, sign } => duals[labels[block]][row] = price * sign,
            // a fixed variable's bound pair collapses into one equality
            RowOrigin::Fixed(v) => bound_duals[v.0] = (price, 0.0),
            _ => {}
        }
    }
    for (i, origin) in sf.ineq_origin.iter().enumerate() {
        let price = -raw.z[i];
        match *origin {
            RowOrigin::Linear { block, row, sign } => duals[labels[block]][row] = price * sign,
            RowOrigin::Upper(v) => bound_duals[v.0].1 = price,
            RowOrigin::Lower(v) => bound_duals[v.0].0 = -price,
            _ => {}
        }
    }
    let x = raw.x.clone();
    Solution {
        status: Status::Optimal,
        objective: prog.objective_value(&x),
        primal_residual: prog.max_linear_violation(&x),
        cone_residual: prog.max_cone_violation(&x),
        x,
        duals,
        bound_duals,
        dual_objective: raw.dual_objective,
        mip_gap: None,
        best_bound: None,
        nodes: 0,
        iterations: raw.iterations,
        backend: backend.to_string(),
        node_log: Vec::new(),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeResidual {
    pub label: String,
    pub family: ConeFamily,
    /// `t − ‖x‖` or `y·z − ‖x‖²`.
    pub slack: f64,
    pub relative_slack: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeReport {
    pub tolerance: f64,
    pub cones: Vec<ConeResidual>,
    /// Largest relative slack over the cones that relax a physical equality.
    pub max_relative_slack: f64,
    pub flagged: Vec<String>,
}

impl ConeReport {
    pub fn is_tight(&self) -> bool {
        self.flagged.is_empty()
    }
}

/// Per-cone slack at the solution. Cones that relax an equality (and
/// generic cones) are flagged when their relative slack exceeds `tolerance`;
/// objective epigraphs and the lower half of the current envelope are
/// inequalities by design and only reported.
pub fn check_cone_residuals(sol: &Solution, prog: &ConicProgram, tolerance: f64) -> ConeReport {
    let mut cones = Vec::with_capacity(prog.cones.len());
    let mut max_rel = 0.0_f64;
    let mut flagged = Vec::new();
    if sol.x.len() == prog.num_vars() {
        for c in &prog.cones {
            let (slack, rel) = c.slack(&sol.x);
            let checked = c.family.is_physical_relaxation() || c.family == ConeFamily::Generic;
            if c.family.is_physical_relaxation() {
                max_rel = max_rel.max(rel);
            }
            let flag = checked && rel > tolerance;
            if flag {
                flagged.push(c.label.clone());
            }
            cones.push(ConeResidual {
                label: c.label.clone(),
                family: c.family,
                slack,
                relative_slack: rel,
                flagged: flag,
            });
        }
    }
    ConeReport { tolerance, cones, max_relative_slack: max_rel, flagged }
}
