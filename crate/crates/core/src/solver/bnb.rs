//! Best-bound branch-and-bound over continuous conic relaxations.
//!
//! Branching picks the most fractional loose binary (lowest index on ties),
//! then splits ordered binary groups by position. The search dives
//! depth-first until the first incumbent and is best-bound afterwards. Nodes
//! may be evaluated in parallel batches, but batches are drained from the
//! frontier and merged back in node-id order, so the search trace does not
//! depend on thread scheduling.

use std::cmp::Ordering;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{program_bounds, ConicSolver, Solution, Status};
use crate::error::SolverError;
use crate::program::{ConicProgram, VarKind};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BnbOptions {
    /// Relative optimality gap `(UB − LB) / max(|UB|, 1)`.
    pub rel_gap: f64,
    pub node_limit: usize,
    /// Distance from {0, 1} below which a binary counts as integral.
    pub int_tol: f64,
    /// Nodes evaluated concurrently per round (1 = serial).
    pub batch: usize,
    pub record_log: bool,
}

impl Default for BnbOptions {
    fn default() -> Self {
        BnbOptions { rel_gap: 1e-6, node_limit: 20_000, int_tol: 1e-6, batch: 1, record_log: false }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub depth: usize,
    pub bound: f64,
    pub outcome: String,
}

struct Node {
    id: usize,
    depth: usize,
    parent_bound: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

/// How to split a node.
enum Branch {
    /// Fix one binary to 0 and to 1; `up_first` explores the 1-child first when diving.
    Var { j: usize, up_first: bool },
    /// Zero the members of an ordered group after / up to a position.
    Split { left: Vec<usize>, right: Vec<usize>, right_first: bool },
}

fn fractional(v: f64, tol: f64) -> f64 {
    let f = (v - v.floor()).min(v.ceil() - v);
    if f > tol {
        f
    } else {
        0.0
    }
}

/// Loose binaries first (most fractional, lowest index on ties), then the
/// most fractional ordered group, split at its weighted mean position.
fn choose_branch(prog: &ConicProgram, x: &[f64], lower: &[f64], upper: &[f64], tol: f64) -> Option<Branch> {
    let mut grouped = vec![false; prog.variables.len()];
    for g in &prog.sos1 {
        for v in g {
            grouped[v.0] = true;
        }
    }
    let mut best: Option<(usize, f64)> = None;
    for (j, v) in prog.variables.iter().enumerate() {
        if v.kind != VarKind::Binary || lower[j] >= upper[j] || grouped[j] {
            continue;
        }
        let frac = fractional(x[j], tol);
        if frac > 0.0 && best.is_none_or(|(_, f)| frac > f + 1e-12) {
            best = Some((j, frac));
        }
    }
    if let Some((j, _)) = best {
        return Some(Branch::Var { j, up_first: x[j] >= 0.5 });
    }
    let mut pick: Option<(usize, f64)> = None;
    for (gi, g) in prog.sos1.iter().enumerate() {
        let frac = g.iter().map(|v| fractional(x[v.0], tol)).fold(0.0, f64::max);
        if frac > 0.0 && pick.is_none_or(|(_, f)| frac > f + 1e-12) {
            pick = Some((gi, frac));
        }
    }
    if let Some((gi, _)) = pick {
        let free: Vec<usize> = prog.sos1[gi].iter().map(|v| v.0).filter(|&j| upper[j] > 0.5).collect();
        if free.len() >= 2 {
            let mass: f64 = free.iter().map(|&j| x[j].max(0.0)).sum::<f64>().max(1e-12);
            let mean = free.iter().enumerate().map(|(p, &j)| p as f64 * x[j].max(0.0)).sum::<f64>() / mass;
            let r = (mean.floor() as usize).min(free.len() - 2);
            let left_mass: f64 = free[..=r].iter().map(|&j| x[j]).sum();
            return Some(Branch::Split {
                left: free[r + 1..].to_vec(),
                right: free[..=r].to_vec(),
                right_first: left_mass < 0.5,
            });
        }
    }
    // a fractional binary fixed by neither rule (e.g. a group with one free member)
    prog.variables.iter().enumerate().find_map(|(j, v)| {
        (v.kind == VarKind::Binary && lower[j] < upper[j] && fractional(x[j], tol) > 0.0)
            .then(|| Branch::Var { j, up_first: x[j] >= 0.5 })
    })
}

/// Depth-first (newest child) until an incumbent exists, best bound after.
fn select(frontier: &[Node], diving: bool) -> usize {
    let mut best = 0;
    for (i, n) in frontier.iter().enumerate().skip(1) {
        let b = &frontier[best];
        let better = if diving {
            (n.depth, n.id) > (b.depth, b.id)
        } else {
            n.parent_bound.total_cmp(&b.parent_bound).then(b.id.cmp(&n.id)) == Ordering::Less
        };
        if better {
            best = i;
        }
    }
    best
}

fn gap(ub: f64, lb: f64) -> f64 {
    if ub.is_infinite() {
        return f64::INFINITY;
    }
    ((ub - lb) / ub.abs().max(1.0)).max(0.0)
}

pub(super) fn run(solver: &ConicSolver, prog: &ConicProgram) -> Result<Solution, SolverError> {
    let opts = &solver.bnb;
    let (lo, hi) = program_bounds(prog);
    let mut frontier = vec![Node { id: 0, depth: 0, parent_bound: f64::NEG_INFINITY, lower: lo, upper: hi }];
    let mut next_id = 1;
    let mut incumbent: Option<Solution> = None;
    let mut ub = f64::INFINITY;
    let mut nodes = 0usize;
    let mut log = Vec::new();
    let mut failures = 0usize;
    let mut root_bound = f64::NEG_INFINITY;

    let prune_level = |ub: f64| {
        if ub.is_finite() {
            ub - opts.rel_gap * ub.abs().max(1.0)
        } else {
            f64::INFINITY
        }
    };

    while !frontier.is_empty() {
        if nodes >= opts.node_limit {
            break;
        }
        // global lower bound is the smallest parent bound on the frontier
        let cut = prune_level(ub);
        frontier.retain(|n| n.parent_bound < cut);
        let mut batch = Vec::new();
        while batch.len() < opts.batch.max(1) && nodes + batch.len() < opts.node_limit && !frontier.is_empty() {
            let i = select(&frontier, incumbent.is_none());
            batch.push(frontier.swap_remove(i));
        }
        if batch.is_empty() {
            break;
        }
        let results: Vec<Result<Solution, SolverError>> = if batch.len() > 1 {
            batch.par_iter().map(|n| solver.solve_relaxation(prog, &n.lower, &n.upper)).collect()
        } else {
            batch.iter().map(|n| solver.solve_relaxation(prog, &n.lower, &n.upper)).collect()
        };
        for (node, res) in batch.into_iter().zip(results) {
            nodes += 1;
            let rel = match res {
                Ok(s) => s,
                Err(e) if node.id == 0 => return Err(e),
                Err(e) => {
                    // numerical trouble at a node: drop it but keep count so the
                    // caller can tell the search was not exhaustive
                    warn!("branch-and-bound node {} failed: {e}", node.id);
                    failures += 1;
                    continue;
                }
            };
            let mut record = |outcome: &str, bound: f64| {
                if opts.record_log {
                    log.push(NodeRecord { id: node.id, depth: node.depth, bound, outcome: outcome.into() });
                }
            };
            match rel.status {
                Status::Infeasible => {
                    record("infeasible", f64::INFINITY);
                    continue;
                }
                Status::Unbounded => {
                    return Err(SolverError::Malformed("relaxation is unbounded".into()));
                }
                _ => {}
            }
            // the child bound can never be weaker than its parent's
            let bound = rel.objective.max(node.parent_bound);
            if node.id == 0 {
                root_bound = bound;
            }
            if bound >= prune_level(ub) {
                record("pruned", bound);
                continue;
            }
            match choose_branch(prog, &rel.x, &node.lower, &node.upper, opts.int_tol) {
                None => {
                    record("integral", bound);
                    debug!("incumbent {:.8} at node {}", rel.objective, node.id);
                    ub = rel.objective;
                    let mut sol = rel;
                    // snap binaries onto {0, 1}
                    for (j, v) in prog.variables.iter().enumerate() {
                        if v.kind == VarKind::Binary {
                            sol.x[j] = sol.x[j].round();
                        }
                    }
                    incumbent = Some(sol);
                }
                Some(branch) => {
                    record("branched", bound);
                    // the child to dive into is pushed last
                    let children: Vec<Vec<(usize, f64)>> = match branch {
                        Branch::Var { j, up_first } => {
                            let (a, b) = if up_first { (0.0, 1.0) } else { (1.0, 0.0) };
                            vec![vec![(j, a)], vec![(j, b)]]
                        }
                        Branch::Split { left, right, right_first } => {
                            let l: Vec<_> = left.into_iter().map(|j| (j, 0.0)).collect();
                            let r: Vec<_> = right.into_iter().map(|j| (j, 0.0)).collect();
                            if right_first {
                                vec![l, r]
                            } else {
                                vec![r, l]
                            }
                        }
                    };
                    for fixes in children {
                        let mut lower = node.lower.clone();
                        let mut upper = node.upper.clone();
                        for (j, val) in fixes {
                            lower[j] = val;
                            upper[j] = val;
                        }
                        frontier.push(Node { id: next_id, depth: node.depth + 1, parent_bound: bound, lower, upper });
                        next_id += 1;
                    }
                }
            }
        }
    }

    let best_bound = frontier
        .iter()
        .map(|n| n.parent_bound)
        .fold(ub, f64::min)
        .max(root_bound.min(ub));
    if failures > 0 {
        warn!("branch-and-bound skipped {failures} nodes after backend failures");
    }
    match incumbent {
        None => {
            let mut s = Solution::infeasible(Status::Infeasible, solver.backend.name());
            s.nodes = nodes;
            s.node_log = log;
            if !frontier.is_empty() {
                s.status = Status::GapLimit;
            }
            Ok(s)
        }
        Some(mut sol) => {
            let g = gap(ub, best_bound);
            sol.status = if g <= opts.rel_gap || frontier.is_empty() { Status::Optimal } else { Status::GapLimit };
            sol.mip_gap = Some(if frontier.is_empty() { 0.0 } else { g });
            sol.best_bound = Some(if frontier.is_empty() { ub } else { best_bound });
            sol.nodes = nodes;
            sol.node_log = log;
            Ok(sol)
        }
    }
}
