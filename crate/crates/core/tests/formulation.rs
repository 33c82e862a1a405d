mod common;

use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mtdc_opf::case::{DcLine, DcNode, NetworkCase, Pcc};
use mtdc_opf::formulation::{
    add_polygon, assemble_centralized, build_ac_block, build_mtdc_block, build_res_block, build_vsc_block, names,
    FormulationOptions, Mode, ScenarioSet,
};
use mtdc_opf::powerflow::solve_base_power_flow;
use mtdc_opf::program::{ConicProgram, LinExpr, Owner, Sense};
use mtdc_opf::solver::{ConicSolver, DenseIpm, Status};

fn extremum(p: &ConicProgram, v: &str, sign: f64) -> f64 {
    let mut q = p.clone();
    let id = q.var(v).unwrap();
    q.objective = LinExpr::term(id, sign);
    let sol = ConicSolver::default().solve(&q).unwrap();
    assert_eq!(sol.status, Status::Optimal, "{v}");
    sol.x[id.0]
}

#[test]
fn power_factor_wedge_at_full_output() {
    let case = common::two_bus(1.0, -10.0, 0.1);
    let op = solve_base_power_flow(&case).unwrap();
    let p = build_ac_block(&case, &op).unwrap();
    let pg = p.var(&names::pg(0)).unwrap();
    let qg = p.var(&names::qg(0)).unwrap();
    let rows = &p.block("ac.gen_pf").unwrap().rows;
    let tan = 0.9f64.acos().tan();
    assert!((tan - 0.4843).abs() < 1e-4);
    let worst = |q: f64| {
        let mut x = vec![0.0; p.variables.len()];
        x[pg.0] = 1.0;
        x[qg.0] = q;
        rows.iter().map(|r| r.violation(&x)).fold(0.0, f64::max)
    };
    for q in [-tan, 0.0, tan] {
        assert!(worst(q) <= 1e-12, "q={q}");
    }
    assert!(worst(tan + 1e-6) > 0.0 && worst(-tan - 1e-6) > 0.0);
}

#[test]
fn converter_loss_arithmetic() {
    let mut case = NetworkCase::fig4();
    let v = &mut case.vsc_stations[0];
    (v.a1, v.a2, v.a3) = (0.01, 0.01, 0.01);
    let mut p = build_vsc_block(&case, 0, 4).unwrap();
    let ic = p.var("vsc1.ic").unwrap();
    let lc = p.var("vsc1.lc").unwrap();
    p.fix(ic, 1.0);
    p.fix(lc, 1.0);
    let loss = extremum(&p, "vsc1.ploss", 1.0);
    assert!((loss - 0.03).abs() < 1e-7, "{loss}");
    assert!((extremum(&p, "vsc1.ploss", -1.0) - 0.03).abs() < 1e-7);
}

fn lc_range(case: &NetworkCase, k: usize, i: f64) -> (f64, f64) {
    let mut p = build_vsc_block(case, 0, k).unwrap();
    let ic = p.var("vsc1.ic").unwrap();
    p.fix(ic, i);
    (extremum(&p, "vsc1.lc", 1.0), extremum(&p, "vsc1.lc", -1.0))
}

#[test]
fn single_segment_secant_is_tight_at_the_ends() {
    let case = NetworkCase::fig4();
    for i in [0.0, 1.0] {
        let (lo, hi) = lc_range(&case, 1, i);
        assert!((lo - i * i).abs() < 1e-6 && (hi - i * i).abs() < 1e-6, "i={i}: [{lo}, {hi}]");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn envelope_sandwich(i in 0.0f64..1.0, k in prop::sample::select(vec![1usize, 2, 3, 4, 8])) {
        let case = NetworkCase::fig4();
        let w = case.vsc_stations[0].i_max / k as f64;
        let (lo, hi) = lc_range(&case, k, i);
        prop_assert!((lo - i * i).abs() < 1e-6);
        prop_assert!(hi <= i * i + w * w / 4.0 + 1e-6);
    }
}

/// Fig. 4 converters 1 and 2 on a two-node DC grid.
fn two_node_dc(r: f64) -> NetworkCase {
    let mut case = NetworkCase::fig4();
    case.dc_nodes = vec![DcNode { id: 1, v_min: 0.5, v_max: 1.5 }, DcNode { id: 2, v_min: 0.5, v_max: 1.5 }];
    case.dc_lines = vec![DcLine { from: 1, to: 2, r, switchable: true, closed: true }];
    case.vsc_stations.truncate(2);
    case.vsc_stations[0].dc_node = 1;
    case.vsc_stations[1].dc_node = 2;
    case
}

/// Minimal line loading `l` for sending `p12` from `u1` over resistance `r`,
/// by scanning and bisecting the hand-written feasibility conditions.
fn two_node_oracle(r: f64, u1: f64, p12: f64) -> (f64, f64, f64) {
    let feasible = |l: f64| {
        let p21 = r * l - p12;
        let u2 = u1 - r * (p12 - p21);
        p12 * p12 <= l * u1 + 1e-15 && p21 * p21 <= l * u2 + 1e-15 && u2 > 0.0
    };
    let mut hi = (0..200_000).map(|s| s as f64 * 1e-5).find(|&l| feasible(l)).unwrap();
    let mut lo = hi - 1e-5;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid
        } else {
            lo = mid
        }
    }
    let p21 = r * hi - p12;
    (hi, p21, u1 - r * (p12 - p21))
}

#[test]
fn two_node_dc_matches_oracle_on_both_backends() {
    let (r, p12) = (0.01, 0.5);
    let case = two_node_dc(r);
    let mut p = build_mtdc_block(&case, true).unwrap();
    let a = p.var(&names::alpha(0)).unwrap();
    p.fix(a, 1.0);
    let u1 = p.var(&names::dc_u(1)).unwrap();
    p.fix(u1, 1.0);
    let f = p.var("dc.p[0]").unwrap();
    p.fix(f, p12);
    let l = p.var("dc.l[0]").unwrap();
    p.add_objective(LinExpr::term(l, 1.0));
    let (l_star, p21, u2) = two_node_oracle(r, 1.0, p12);
    assert!(l_star >= 0.25 - 1e-12);
    let dense = ConicSolver::with_backend(std::sync::Arc::new(DenseIpm::default()));
    for solver in [ConicSolver::default(), dense] {
        let sol = solver.solve_continuous(&p).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        let x = |n: &str| sol.x[p.var(n).unwrap().0];
        assert!((x("dc.l[0]") - l_star).abs() < 1e-5, "{}: {} vs {l_star}", sol.backend, x("dc.l[0]"));
        assert!((x("dc.pr[0]") - p21).abs() < 1e-5);
        assert!((x(&names::dc_u(2)) - u2).abs() < 1e-5);
    }
}

/// Triangle DC grid with a converter on every node.
fn triangle_dc() -> NetworkCase {
    let mut case = NetworkCase::fig4();
    case.dc_nodes.truncate(3);
    case.dc_lines = vec![
        DcLine { from: 1, to: 2, r: 0.02, switchable: true, closed: true },
        DcLine { from: 2, to: 3, r: 0.03, switchable: true, closed: true },
        DcLine { from: 3, to: 1, r: 0.05, switchable: true, closed: true },
    ];
    case.vsc_stations.truncate(3);
    case
}

/// Hand-derived line equations: an open line carries nothing; a closed one
/// obeys the drop equation, the loss equation and both flow cones.
fn hand_feasible(closed: bool, r: f64, ui: f64, uj: f64, pij: f64) -> Option<bool> {
    if !closed {
        return Some(pij == 0.0);
    }
    let d = (ui - uj) / r;
    let pji = pij - d;
    let l = (pij + pji) / r;
    let margin = l.min(l * ui - pij * pij).min(l * uj - pji * pji);
    // skip points too close to the boundary to classify numerically
    (margin.abs() > 1e-4).then_some(margin >= 0.0)
}

#[test]
fn big_m_gating_matches_line_equations_for_every_topology() {
    let case = triangle_dc();
    let base = build_mtdc_block(&case, true).unwrap();
    let solver = ConicSolver::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = [0usize; 2];
    for mask in 0..8u32 {
        for _ in 0..6 {
            let mut p = base.clone();
            let u: Vec<f64> = case
                .dc_nodes
                .iter()
                .map(|n| {
                    let (lo, hi) = n.u_bounds();
                    rng.gen_range(lo..hi)
                })
                .collect();
            for (i, n) in case.dc_nodes.iter().enumerate() {
                let v = p.var(&names::dc_u(n.id)).unwrap();
                p.fix(v, u[i]);
            }
            let mut expect = Some(true);
            for (k, line) in case.dc_lines.iter().enumerate() {
                let closed = mask >> k & 1 == 1;
                let (i, j) = (case.dc_index(line.from).unwrap(), case.dc_index(line.to).unwrap());
                let pij = if closed {
                    (u[i] - u[j]) / (2.0 * line.r) + rng.gen_range(-0.2..0.2)
                } else if rng.gen_bool(0.5) {
                    0.0
                } else {
                    0.05
                };
                let a = p.var(&names::alpha(k)).unwrap();
                p.fix(a, if closed { 1.0 } else { 0.0 });
                let f = p.var(&format!("dc.p[{k}]")).unwrap();
                p.fix(f, pij);
                expect = match (expect, hand_feasible(closed, line.r, u[i], u[j], pij)) {
                    (Some(a), Some(b)) => Some(a && b),
                    (Some(false), None) => Some(false),
                    _ => None,
                };
            }
            let Some(expect) = expect else { continue };
            let status = solver.solve_continuous(&p).unwrap().status;
            assert_eq!(status == Status::Optimal, expect, "mask {mask:03b}, u {u:?}");
            checked[expect as usize] += 1;
        }
    }
    assert!(checked[0] > 5 && checked[1] > 5, "{checked:?}");
}

#[test]
fn polygon_sits_between_inner_and_outer_disk() {
    for n in [1usize, 2, 3, 8] {
        let mut p = ConicProgram::new("t");
        let x = p.continuous("p", -5.0, 5.0, Owner::Auxiliary).unwrap();
        let y = p.continuous("q", -5.0, 5.0, Owner::Auxiliary).unwrap();
        add_polygon(&mut p, "cap", x.into(), y.into(), 1.0, n);
        let rows = &p.block("cap").unwrap().rows;
        // cut normals as unit vectors; adjacent ones meet at the vertices
        let mut normals: Vec<(f64, f64)> = rows
            .iter()
            .map(|r| {
                let s = if r.sense == Sense::Le { 1.0 } else { -1.0 };
                let c = |v| r.terms.iter().find(|t| t.0 == v).map_or(0.0, |t| t.1) * s;
                (c(x), c(y))
            })
            .collect();
        normals.sort_by(|a, b| a.1.atan2(a.0).total_cmp(&b.1.atan2(b.0)));
        let gap = normals
            .iter()
            .zip(normals.iter().cycle().skip(1))
            .map(|(a, b)| {
                let d = b.1.atan2(b.0) - a.1.atan2(a.0);
                if d <= 0.0 {
                    d + 2.0 * PI
                } else {
                    d
                }
            })
            .fold(0.0, f64::max);
        let outer = 1.0 / (gap / 2.0).cos();
        for (a, b) in normals.iter().zip(normals.iter().cycle().skip(1)) {
            let det = a.0 * b.1 - a.1 * b.0;
            let vx = (b.1 - a.1) / det;
            let vy = (a.0 - b.0) / det;
            let radius = vx.hypot(vy);
            assert!(radius >= 1.0 - 1e-12 && radius <= outer + 1e-12, "N={n}: {radius}");
            assert!(rows.iter().all(|r| r.violation(&[vx, vy]) <= 1e-9));
        }
        for k in 0..360 {
            let t = k as f64 * PI / 180.0;
            assert!(rows.iter().all(|r| r.violation(&[t.cos(), t.sin()]) <= 1e-12));
        }
    }
}

#[test]
fn res_endpoints_give_distinct_blocks() {
    let case = NetworkCase::fig4();
    let hi = build_res_block(&case, 0, 0.5).unwrap();
    let lo = build_res_block(&case, 0, 0.3).unwrap();
    assert_ne!(hi.blocks, lo.blocks);
    let id = case.res_units[0].id;
    assert!((extremum(&lo, &names::res_p(id), -1.0) - 0.3).abs() < 1e-7);
    assert!((extremum(&hi, &names::res_p(id), -1.0) - 0.5).abs() < 1e-7);
}

#[test]
fn deterministic_model_has_one_copy_of_everything() {
    let case = NetworkCase::fig4();
    let op = solve_base_power_flow(&case).unwrap();
    let d = assemble_centralized(&case, &op, &ScenarioSet::forecast(&case), Mode::Dopf, &FormulationOptions::default())
        .unwrap();
    assert!(d.variables.iter().all(|v| !v.name.contains('/')));
    assert_eq!(d.num_binaries(), case.dc_lines.len() + case.vsc_stations.len() * case.options.envelope_k);
    let grid_pcc = case.vsc_stations.iter().filter(|v| matches!(v.pcc, Pcc::Ac(_))).count();
    assert_eq!(d.boundary[0].vars.len(), 3 * grid_pcc);
}

#[test]
fn scenario_order_does_not_change_the_optimum() {
    let case = NetworkCase::fig4();
    let op = solve_base_power_flow(&case).unwrap();
    let opts = FormulationOptions::default();
    let ex = ScenarioSet::extremes(&case);
    let mut within = ex.clone();
    within.per_res.iter_mut().for_each(|v| v.reverse());
    let solver = ConicSolver::default();
    for mode in [Mode::Eropf, Mode::Ropf] {
        let a = solver.solve(&assemble_centralized(&case, &op, &ex, mode, &opts).unwrap()).unwrap();
        let b = solver.solve(&assemble_centralized(&case, &op, &within, mode, &opts).unwrap()).unwrap();
        assert!(common::rel(a.objective, b.objective) < 1e-6, "{mode:?}: {} vs {}", a.objective, b.objective);
    }
}
