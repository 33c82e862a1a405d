use std::fmt::Write;

use serde::{Deserialize, Serialize};

/// State after one master iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Sum of the latest subproblem values (stale ones kept).
    pub upper_bound: f64,
    pub best_upper_bound: f64,
    /// Best master value so far.
    pub lower_bound: f64,
    /// `Σz` at this iteration's master optimum.
    pub master_value: f64,
    /// Subproblems whose results entered this iteration.
    pub active: Vec<usize>,
    /// Subproblems still evaluating an older proposal.
    pub busy: Vec<usize>,
    pub feasible: Vec<bool>,
    /// `‖b̂ − b̂′‖∞` per subproblem against the new proposal.
    pub residuals: Vec<f64>,
    pub time: f64,
    pub cuts: usize,
}

impl IterationRecord {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GbdTrace {
    pub records: Vec<IterationRecord>,
}

impl GbdTrace {
    pub fn lower_bounds(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.lower_bound).collect()
    }

    pub fn to_csv(&self) -> String {
        let n = self.records.first().map_or(0, |r| r.residuals.len());
        let mut out = String::from("iteration,time,upper_bound,best_upper_bound,lower_bound,master_value");
        for k in 0..n {
            let _ = write!(out, ",residual_{k}");
        }
        out.push_str(",active,busy,cuts\n");
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        for r in &self.records {
            let _ = write!(
                out,
                "{},{},{:.10e},{:.10e},{:.10e},{:.10e}",
                r.iteration, r.time, r.upper_bound, r.best_upper_bound, r.lower_bound, r.master_value
            );
            for x in &r.residuals {
                let _ = write!(out, ",{x:.6e}");
            }
            let _ = writeln!(out, ",{},{},{}", join(&r.active), join(&r.busy), r.cuts);
        }
        out
    }
}
