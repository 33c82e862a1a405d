//! Nonlinear AC power flow and its successive linear approximation.
//!
//! Branch flows in squared-voltage coordinates,
//!
//! ```text
//!   p_ij = g·u_i − √(u_i u_j)·(g cos θ_ij + b sin θ_ij)
//!   q_ij = −b·u_i − √(u_i u_j)·(g sin θ_ij − b cos θ_ij)
//! ```
//!
//! are linearized by their first-order Taylor expansion in `(u_i, u_j, θ_ij)`.
//! Both are homogeneous of degree one in `(u_i, u_j)`, so the expansion has
//! no constant term:
//! `p ≈ ∂p/∂u_i·u_i + ∂p/∂u_j·u_j + ∂p/∂θ·(θ_ij − θ_ij^k)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::case::NetworkCase;
use crate::error::PowerFlowError;

pub const NEWTON_TOL: f64 = 1e-8;
pub const NEWTON_MAX_ITER: usize = 50;

/// Value and gradient of one branch flow at the expansion point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowTangent {
    pub value: f64,
    pub d_u_from: f64,
    pub d_u_to: f64,
    pub d_theta: f64,
}

impl FlowTangent {
    /// Linear model evaluated at `(u_i, u_j, θ_ij)`.
    pub fn eval(&self, u_i: f64, u_j: f64, theta: f64, theta_k: f64) -> f64 {
        self.d_u_from * u_i + self.d_u_to * u_j + self.d_theta * (theta - theta_k)
    }
}

/// The tangent arranged as
///
/// ```text
///   p_ij = g u_i − gᴾ (u_i+u_j)/2 − bᴾ (θ_ij − θᵏ) + gˢ v/2
///   q_ij = bᵠ (u_i+u_j)/2 − b u_i − gᵠ (θ_ij − θᵏ) − bˢ v/2
/// ```
///
/// with the cross term `v = u_i − u_j` carrying the asymmetric part of the
/// voltage sensitivities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateCoefficients {
    pub g_p: f64,
    pub b_p: f64,
    pub g_s: f64,
    pub b_q: f64,
    pub g_q: f64,
    pub b_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchLinearization {
    pub from: usize,
    pub to: usize,
    /// `θ_from − θ_to` at the expansion point.
    pub theta_k: f64,
    /// Flows leaving the `from` end.
    pub p: FlowTangent,
    pub q: FlowTangent,
    /// Flows leaving the `to` end, as functions of `(u_to, u_from, θ_to − θ_from)`.
    pub p_rev: FlowTangent,
    pub q_rev: FlowTangent,
    pub template: TemplateCoefficients,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// Squared voltage magnitude per AC node.
    pub u: Vec<f64>,
    pub theta: Vec<f64>,
    pub branches: Vec<BranchLinearization>,
    /// Largest nodal power mismatch of the Newton solve.
    pub residual: f64,
    pub iterations: usize,
}

/// Exact branch flows `(p_ij, q_ij)`.
pub fn branch_flow(g: f64, b: f64, u_i: f64, u_j: f64, theta: f64) -> (f64, f64) {
    let vv = (u_i * u_j).sqrt();
    let (s, c) = theta.sin_cos();
    (g * u_i - vv * (g * c + b * s), -b * u_i - vv * (g * s - b * c))
}

/// Tangent of both flows of one branch at `(u_i, u_j, θ)`.
pub fn branch_tangent(
    g: f64,
    b: f64,
    u_i: f64,
    u_j: f64,
    theta: f64,
) -> (FlowTangent, FlowTangent, TemplateCoefficients) {
    let vv = (u_i * u_j).sqrt();
    let rho = (u_j / u_i).sqrt();
    let (s, c) = theta.sin_cos();
    let cp = g * c + b * s;
    let dq = g * s - b * c;
    let (pv, qv) = branch_flow(g, b, u_i, u_j, theta);
    let p = FlowTangent {
        value: pv,
        d_u_from: g - 0.5 * cp * rho,
        d_u_to: -0.5 * cp / rho,
        d_theta: vv * (g * s - b * c),
    };
    let q = FlowTangent {
        value: qv,
        d_u_from: -b - 0.5 * dq * rho,
        d_u_to: -0.5 * dq / rho,
        d_theta: -vv * cp,
    };
    let template = TemplateCoefficients {
        g_p: 0.5 * cp * (rho + 1.0 / rho),
        b_p: -p.d_theta,
        g_s: 0.5 * cp * (1.0 / rho - rho),
        b_q: -0.5 * dq * (rho + 1.0 / rho),
        g_q: -q.d_theta,
        b_s: 0.5 * dq * (rho - 1.0 / rho),
    };
    (p, q, template)
}

/// Per-branch linearization around a state.
pub fn linearize(
    case: &NetworkCase,
    u: &[f64],
    theta: &[f64],
) -> Result<Vec<BranchLinearization>, PowerFlowError> {
    if let Some((node, &value)) = u.iter().enumerate().find(|(_, &v)| v.is_nan() || v <= 0.0) {
        return Err(PowerFlowError::InvalidExpansionPoint { node, value });
    }
    Ok(case
        .ac_branches
        .iter()
        .map(|br| {
            let i = case.ac_index(br.from).expect("validated case");
            let j = case.ac_index(br.to).expect("validated case");
            let th = theta[i] - theta[j];
            let (p, q, template) = branch_tangent(br.g, br.b, u[i], u[j], th);
            let (p_rev, q_rev, _) = branch_tangent(br.g, br.b, u[j], u[i], -th);
            BranchLinearization { from: i, to: j, theta_k: th, p, q, p_rev, q_rev, template }
        })
        .collect())
}

/// Net nodal injections `(p, q)` of the base dispatch (PCC injections zero).
pub fn base_injections(case: &NetworkCase) -> Vec<(f64, f64)> {
    let mut inj: Vec<(f64, f64)> = case.ac_nodes.iter().map(|n| (-n.load_p, -n.load_q)).collect();
    for g in &case.generators {
        let i = case.ac_index(g.node).expect("validated case");
        inj[i].0 += g.p_base;
        inj[i].1 += g.q_base;
    }
    inj
}

/// Nodal injections implied by `(v, θ)` on the full admittance matrix.
fn injections(gm: &DMatrix<f64>, bm: &DMatrix<f64>, v: &[f64], th: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = v.len();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let (s, c) = (th[i] - th[j]).sin_cos();
            p[i] += v[i] * v[j] * (gm[(i, j)] * c + bm[(i, j)] * s);
            q[i] += v[i] * v[j] * (gm[(i, j)] * s - bm[(i, j)] * c);
        }
    }
    (p, q)
}

/// Newton–Raphson power flow from a flat start with every non-slack node
/// treated as a PQ node. `slack_v` overrides the slack setpoint.
pub fn solve_power_flow(
    case: &NetworkCase,
    inj: &[(f64, f64)],
    slack_v: Option<f64>,
) -> Result<OperatingPoint, PowerFlowError> {
    let n = case.ac_nodes.len();
    if inj.len() != n {
        return Err(PowerFlowError::InjectionLength { got: inj.len(), expected: n });
    }
    let slack = case.slack_index().ok_or(PowerFlowError::NoSlack)?;
    let (g, b) = case.admittance();
    let gm = DMatrix::from_fn(n, n, |i, j| g[i][j]);
    let bm = DMatrix::from_fn(n, n, |i, j| b[i][j]);
    let mut v = vec![1.0; n];
    let mut th = vec![0.0; n];
    v[slack] = slack_v.unwrap_or(case.ac_nodes[slack].v_set);
    let pq: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let m = pq.len();
    let mut trace = Vec::new();

    for it in 0..=NEWTON_MAX_ITER {
        let (p, q) = injections(&gm, &bm, &v, &th);
        let mut f = DVector::zeros(2 * m);
        for (k, &i) in pq.iter().enumerate() {
            f[k] = inj[i].0 - p[i];
            f[m + k] = inj[i].1 - q[i];
        }
        let mis = f.amax();
        trace.push(mis);
        if mis <= NEWTON_TOL {
            let u: Vec<f64> = v.iter().map(|x| x * x).collect();
            let branches = linearize(case, &u, &th)?;
            return Ok(OperatingPoint { u, theta: th, branches, residual: mis, iterations: it });
        }
        if it == NEWTON_MAX_ITER || !mis.is_finite() {
            break;
        }
        // Jacobian of (P, Q) w.r.t. (θ, v) on the PQ nodes
        let mut jac = DMatrix::zeros(2 * m, 2 * m);
        for (a, &i) in pq.iter().enumerate() {
            for (c, &j) in pq.iter().enumerate() {
                if i == j {
                    jac[(a, c)] = -q[i] - bm[(i, i)] * v[i] * v[i];
                    jac[(a, m + c)] = p[i] / v[i] + gm[(i, i)] * v[i];
                    jac[(m + a, c)] = p[i] - gm[(i, i)] * v[i] * v[i];
                    jac[(m + a, m + c)] = q[i] / v[i] - bm[(i, i)] * v[i];
                } else {
                    let (s, co) = (th[i] - th[j]).sin_cos();
                    let (gij, bij) = (gm[(i, j)], bm[(i, j)]);
                    jac[(a, c)] = v[i] * v[j] * (gij * s - bij * co);
                    jac[(a, m + c)] = v[i] * (gij * co + bij * s);
                    jac[(m + a, c)] = -v[i] * v[j] * (gij * co + bij * s);
                    jac[(m + a, m + c)] = v[i] * (gij * s - bij * co);
                }
            }
        }
        let dx = jac.lu().solve(&f).ok_or(PowerFlowError::SingularJacobian { iteration: it })?;
        for (k, &i) in pq.iter().enumerate() {
            th[i] += dx[k];
            v[i] += dx[m + k];
        }
    }
    Err(PowerFlowError::NonConvergence { iterations: NEWTON_MAX_ITER, trace })
}

/// Base operating point from the case's base dispatch.
pub fn solve_base_power_flow(case: &NetworkCase) -> Result<OperatingPoint, PowerFlowError> {
    solve_power_flow(case, &base_injections(case), None)
}

/// AC-grid quantities of an OPF solution needed to move the expansion point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcDispatch {
    /// Net nodal injections `(p, q)` (generation − load − PCC export).
    pub injections: Vec<(f64, f64)>,
    /// Squared voltages predicted by the linear model.
    pub u: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeAccuracy {
    pub node: u32,
    pub u_linear: f64,
    pub u_nonlinear: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointUpdate {
    pub point: OperatingPoint,
    pub max_u_error: f64,
    pub nodes: Vec<NodeAccuracy>,
}

/// Re-solves the nonlinear power flow with the OPF injections (slack voltage
/// taken from the OPF) and re-linearizes there. On divergence the error is
/// returned and the caller keeps its previous point.
pub fn update_operating_point(
    case: &NetworkCase,
    dispatch: &AcDispatch,
) -> Result<PointUpdate, PowerFlowError> {
    let slack = case.slack_index().ok_or(PowerFlowError::NoSlack)?;
    let point = solve_power_flow(case, &dispatch.injections, Some(dispatch.u[slack].sqrt()))?;
    let nodes: Vec<NodeAccuracy> = case
        .ac_nodes
        .iter()
        .enumerate()
        .map(|(i, n)| NodeAccuracy { node: n.id, u_linear: dispatch.u[i], u_nonlinear: point.u[i] })
        .collect();
    let max_u_error = nodes.iter().map(|a| (a.u_linear - a.u_nonlinear).abs()).fold(0.0, f64::max);
    Ok(PointUpdate { point, max_u_error, nodes })
}

/// Per-node comparison as CSV.
pub fn accuracy_csv(rounds: &[PointUpdate]) -> String {
    let mut out = String::from("round,node,u_linear,u_nonlinear,abs_error\n");
    for (r, upd) in rounds.iter().enumerate() {
        for a in &upd.nodes {
            out.push_str(&format!(
                "{r},{},{:.10},{:.10},{:.3e}\n",
                a.node,
                a.u_linear,
                a.u_nonlinear,
                (a.u_linear - a.u_nonlinear).abs()
            ));
        }
    }
    out
}
