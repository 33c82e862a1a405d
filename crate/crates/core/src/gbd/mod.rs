//! Generalized Benders decomposition of the hybrid OPF.
//!
//! The master holds the MTDC grid, the converters (with every line-status
//! and envelope binary) and a copy `b′` of each AC system's boundary. Each
//! AC system is a continuous subproblem evaluated at the master's proposal:
//! an optimality subproblem with the boundary pinned, or, if that is
//! infeasible, an ℓ1-relaxed one whose measure yields a feasibility cut.
//!
//! Subproblem evaluations are scheduled on a virtual clock. The master
//! iterates once at least `n_min` results have arrived and no subproblem is
//! more than `staleness` iterations behind; synchronous operation is the
//! special case of equal latencies and `n_min` = all subproblems. Results
//! computed against an older proposal still contribute their cuts.
//!
//! Convergence is declared when every subproblem's last evaluation was
//! feasible and its boundary values agree with the master's newest proposal
//! to within the tolerance (the coupling residual). Optionally the master
//! breaks ties among its optimal solutions toward the subproblems' boundary
//! values, which keeps the proposal from wandering along flat directions.

mod cuts;
mod decompose;
mod master;
mod trace;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cuts::{evaluate_subproblem, solve_osp, solve_rsp, BendersCut, CutKind, SpOutcome, FEASIBILITY_TOL};
pub use decompose::{decompose, Coupling, Decomposition, Subproblem};
pub use master::{solve_mp, MasterProblem, MpOutcome, PROXIMITY_SLACK};
pub use trace::{GbdTrace, IterationRecord};

use crate::error::{Error, ModelError};
use crate::solver::ConicSolver;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CutMode {
    /// One aggregated cost-to-go and one aggregated cut per iteration.
    Single,
    /// One cost-to-go and one cut per subproblem.
    Multi,
}

/// Virtual-time schedule of subproblem evaluations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Evaluation latency per subproblem.
    pub latencies: Vec<f64>,
    /// Results required before the master iterates.
    pub n_min: usize,
    /// Maximum number of master iterations a subproblem may lag.
    pub staleness: usize,
    /// Relative latency perturbation drawn uniformly from `[−jitter, jitter]`.
    pub jitter: f64,
    pub seed: u64,
}

impl Schedule {
    pub fn synchronous(n: usize) -> Self {
        Schedule { latencies: vec![1.0; n], n_min: n, staleness: 1, jitter: 0.0, seed: 0 }
    }

    pub fn is_synchronous(&self) -> bool {
        self.n_min == self.latencies.len()
    }

    fn validate(&self, n: usize) -> Result<(), ModelError> {
        if self.latencies.len() != n {
            return Err(ModelError::Config(format!("{} latencies for {n} subproblems", self.latencies.len())));
        }
        if self.latencies.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(ModelError::Config("latencies must be positive".into()));
        }
        if self.n_min == 0 || self.n_min > n {
            return Err(ModelError::Config(format!("n_min must lie in 1..={n}, got {}", self.n_min)));
        }
        if self.staleness == 0 {
            return Err(ModelError::Config("staleness bound must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return Err(ModelError::Config("jitter must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Preset latency ratios (grid : unit 1 : unit 2) and quorum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Situation {
    /// 1:1:1, all subproblems required.
    S1,
    /// 1:1:2, two required.
    S2,
    /// 1:2:4, two required.
    S3,
}

/// Staleness bound used by the presets.
pub const PRESET_STALENESS: usize = 3;

impl Situation {
    pub fn from_index(i: u8) -> Option<Situation> {
        match i {
            1 => Some(Situation::S1),
            2 => Some(Situation::S2),
            3 => Some(Situation::S3),
            _ => None,
        }
    }

    pub fn schedule(self, seed: u64) -> Schedule {
        let (latencies, n_min) = match self {
            Situation::S1 => (vec![1.0, 1.0, 1.0], 3),
            Situation::S2 => (vec![1.0, 1.0, 2.0], 2),
            Situation::S3 => (vec![1.0, 2.0, 4.0], 2),
        };
        Schedule { latencies, n_min, staleness: PRESET_STALENESS, jitter: 0.0, seed }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdOptions {
    pub cut_mode: CutMode,
    pub schedule: Option<Schedule>,
    /// Coupling-residual threshold.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Break master ties toward the subproblems' boundary values.
    pub stabilize: bool,
}

impl Default for GbdOptions {
    fn default() -> Self {
        GbdOptions { cut_mode: CutMode::Multi, schedule: None, tolerance: 1e-5, max_iterations: 200, stabilize: false }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GbdResult {
    pub converged: bool,
    pub iterations: usize,
    /// Sum of the subproblem values at termination.
    pub objective: f64,
    pub lower_bound: f64,
    /// Best sum of subproblem values evaluated at one common proposal.
    pub best_upper_bound: f64,
    pub proposal: Vec<Vec<f64>>,
    /// Master variables at the final proposal.
    pub master_x: Vec<f64>,
    pub alpha: Vec<(String, f64)>,
    pub cuts: Vec<BendersCut>,
    pub virtual_time: f64,
    pub trace: GbdTrace,
}

impl GbdResult {
    /// `(UB − LB) / |LB|` at termination.
    pub fn gap(&self) -> f64 {
        (self.objective - self.lower_bound) / self.lower_bound.abs().max(1e-12)
    }
}

struct Job {
    finish: f64,
    version: usize,
    outcome: SpOutcome,
}

struct Arrival {
    sp: usize,
    version: usize,
    outcome: SpOutcome,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Runs the decomposition to convergence or the iteration limit.
pub fn run_gbd(dec: &Decomposition, opts: &GbdOptions, solver: &ConicSolver) -> Result<GbdResult, Error> {
    let n = dec.num_subproblems();
    let sched = opts.schedule.clone().unwrap_or_else(|| Schedule::synchronous(n));
    sched.validate(n)?;
    let single = opts.cut_mode == CutMode::Single;
    let mp = MasterProblem::new(dec, single)?;
    let mut rng = ChaCha8Rng::seed_from_u64(sched.seed);

    let mut proposal = dec.initial.clone();
    let mut pool: Vec<BendersCut> = Vec::new();
    let mut values = vec![f64::INFINITY; n];
    let mut sp_boundary = proposal.clone();
    let mut sp_feasible = vec![false; n];
    let mut sp_version = vec![usize::MAX; n];
    let mut latest_opt: Vec<Option<BendersCut>> = vec![None; n];
    let mut last_update = vec![0usize; n];
    let mut jobs: Vec<Option<Job>> = (0..n).map(|_| None).collect();
    let mut pending: Vec<Arrival> = Vec::new();
    let mut trace = GbdTrace::default();
    let mut best_ub = f64::INFINITY;
    let mut lower_bound = dec.z_min * n as f64;
    let mut master_x = Vec::new();
    let mut converged = false;
    let mut clock = 0.0;
    let mut m = 0usize;

    let dispatch = |who: &[usize],
                    at: f64,
                    version: usize,
                    proposal: &[Vec<f64>],
                    jobs: &mut Vec<Option<Job>>,
                    rng: &mut ChaCha8Rng|
     -> Result<(), Error> {
        let outcomes: Vec<Result<SpOutcome, Error>> = who
            .par_iter()
            .map(|&s| evaluate_subproblem(&dec.subproblems[s], &proposal[s], s, version, solver))
            .collect();
        for (&s, out) in who.iter().zip(outcomes) {
            let mut lat = sched.latencies[s];
            if sched.jitter > 0.0 {
                lat *= 1.0 + sched.jitter * rng.gen_range(-1.0..=1.0);
            }
            jobs[s] = Some(Job { finish: at + lat, version, outcome: out? });
        }
        Ok(())
    };
    let all: Vec<usize> = (0..n).collect();
    dispatch(&all, 0.0, 0, &proposal, &mut jobs, &mut rng)?;

    while m < opts.max_iterations {
        // next completion, ties broken by subproblem index
        let next = (0..n)
            .filter_map(|s| jobs[s].as_ref().map(|j| (j.finish, s)))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let Some((t, s)) = next else {
            return Err(Error::Decomposition("no subproblem in flight".into()));
        };
        clock = t;
        let job = jobs[s].take().expect("job present");
        pending.push(Arrival { sp: s, version: job.version, outcome: job.outcome });
        let fresh = |k: usize| pending.iter().any(|a| a.sp == k) || m - last_update[k] < sched.staleness;
        if pending.len() < sched.n_min || !(0..n).all(fresh) {
            continue;
        }

        pending.sort_by_key(|a| a.sp);
        let active: Vec<usize> = pending.iter().map(|a| a.sp).collect();
        let busy: Vec<usize> = (0..n).filter(|k| jobs[*k].is_some()).collect();
        let mut new_cuts = Vec::new();
        let any_infeasible = pending.iter().any(|a| !a.outcome.feasible);
        for a in &pending {
            let o = &a.outcome;
            sp_boundary[a.sp] = o.boundary.clone();
            sp_feasible[a.sp] = o.feasible;
            sp_version[a.sp] = a.version;
            // in single-cut mode an infeasible round degrades every
            // subproblem to its relaxation, so no optimality data is kept
            if o.feasible && !(single && any_infeasible) {
                values[a.sp] = o.value;
                latest_opt[a.sp] = o.cut.clone();
            }
            if !single {
                new_cuts.extend(o.cut.clone());
            }
        }
        if single {
            if any_infeasible {
                // every subproblem contributes its relaxation; a feasible one
                // has zero measure and zero as a valid subgradient
                let mut parts = Vec::with_capacity(n);
                for k in 0..n {
                    let a = pending.iter().find(|a| a.sp == k);
                    let cut = a.filter(|a| !a.outcome.feasible).and_then(|a| a.outcome.cut.clone());
                    let dim = dec.subproblems[k].boundary.len();
                    parts.push(cut.unwrap_or(BendersCut {
                        kind: CutKind::Feasibility,
                        sp: Some(k),
                        iteration: m,
                        point: vec![0.0; dim],
                        gradient: vec![0.0; dim],
                        value: 0.0,
                    }));
                }
                let agg = BendersCut::aggregate(CutKind::Feasibility, m, &parts);
                if agg.value > FEASIBILITY_TOL {
                    new_cuts.push(agg);
                }
            } else if latest_opt.iter().all(|c| c.is_some()) {
                let parts: Vec<BendersCut> = latest_opt.iter().map(|c| c.clone().expect("checked")).collect();
                new_cuts.push(BendersCut::aggregate(CutKind::Optimality, m, &parts));
            }
        }
        pool.extend(new_cuts);

        let ub = if values.iter().all(|v| v.is_finite()) { values.iter().sum() } else { f64::INFINITY };
        let consistent = sp_feasible.iter().all(|&f| f) && sp_version.iter().all(|&v| v == sp_version[0]);
        if consistent {
            best_ub = best_ub.min(ub);
        }

        let out = solve_mp(&mp, &pool, opts.stabilize.then_some(sp_boundary.as_slice()), solver)?;
        // the pool only grows, so every master value bounds the optimum; the
        // running maximum absorbs interior-point noise around flat stretches
        lower_bound = lower_bound.max(out.lower_bound);
        master_x = out.x;
        proposal = out.proposal;
        let residuals: Vec<f64> = (0..n).map(|k| max_abs_diff(&sp_boundary[k], &proposal[k])).collect();
        let max_res = residuals.iter().copied().fold(0.0, f64::max);
        trace.records.push(IterationRecord {
            iteration: m,
            upper_bound: ub,
            best_upper_bound: best_ub,
            lower_bound,
            master_value: out.lower_bound,
            active: active.clone(),
            busy,
            feasible: sp_feasible.clone(),
            residuals,
            time: clock,
            cuts: pool.len(),
        });
        log::debug!("gbd iter {m}: UB {ub:.8} LB {lower_bound:.8} residual {max_res:.2e} active {active:?}");
        m += 1;
        pending.clear();
        for &k in &active {
            last_update[k] = m;
        }
        if max_res <= opts.tolerance && sp_feasible.iter().all(|&f| f) {
            converged = true;
            break;
        }
        dispatch(&active, clock, m, &proposal, &mut jobs, &mut rng)?;
    }

    let objective = if values.iter().all(|v| v.is_finite()) { values.iter().sum() } else { f64::INFINITY };
    let alpha = mp
        .program
        .variables
        .iter()
        .enumerate()
        .filter(|(_, v)| v.name.starts_with("dc.alpha["))
        .map(|(i, v)| (v.name.clone(), master_x.get(i).copied().unwrap_or(f64::NAN)))
        .collect();
    Ok(GbdResult {
        converged,
        iterations: m,
        objective,
        lower_bound,
        best_upper_bound: best_ub,
        proposal,
        master_x,
        alpha,
        cuts: pool,
        virtual_time: clock,
        trace,
    })
}
