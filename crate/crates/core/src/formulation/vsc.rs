use crate::case::NetworkCase;
use crate::error::ModelError;
use crate::program::{ConeFamily, ConicProgram, LinExpr, Owner, Sense};

use super::names;

/// Converter station `idx`: W-model of the transformer / filter / phase
/// reactor branches, modulation limit, current relaxation and the
/// piecewise envelope of the squared current that drives the losses.
///
/// Boundary `(p_s, q_s, c_ss)` shares names with the attached AC system;
/// the DC side couples through `dc.pm2v` and `dc.u` of the hosting node.
pub fn build_vsc_block(case: &NetworkCase, idx: usize, envelope_k: usize) -> Result<ConicProgram, ModelError> {
    if envelope_k == 0 {
        return Err(ModelError::Config("current envelope needs at least one segment".into()));
    }
    let vsc = &case.vsc_stations[idx];
    let own = Owner::Vsc(idx);
    let inf = f64::INFINITY;
    let tag = format!("vsc{}", vsc.id);
    let mut p = ConicProgram::new(tag.clone());
    let v = |s: &str| format!("{tag}.{s}");

    let sys = names::system_of(case, vsc);
    let bnd = Owner::Boundary(sys);
    let [pn, qn, un] = names::boundary(case, vsc);
    let ps = p.continuous(pn, -inf, inf, bnd)?;
    let qs = p.continuous(qn, -inf, inf, bnd)?;
    let css = p.continuous(un, 0.0, inf, bnd)?;
    let dc = case.dc_nodes.iter().find(|n| n.id == vsc.dc_node).expect("validated case");
    let (dl, dh) = dc.u_bounds();
    let udc = p.continuous(names::dc_u(dc.id), dl, dh, Owner::Mtdc)?;
    let m2v = p.continuous(names::dc_m2v(dc.id), -inf, inf, Owner::Mtdc)?;

    let (ul, uh) = vsc.u_bounds();
    let cff = p.continuous(v("cff"), ul, uh, own)?;
    let ccc = p.continuous(v("ccc"), ul, uh, own)?;
    let csf = p.continuous(v("csf"), 0.0, inf, own)?;
    let ssf = p.continuous(v("ssf"), -inf, inf, own)?;
    let cfc = p.continuous(v("cfc"), 0.0, inf, own)?;
    let sfc = p.continuous(v("sfc"), -inf, inf, own)?;
    let imax = vsc.i_max;
    let pc = p.continuous(v("pc"), -inf, inf, own)?;
    let qc = p.continuous(v("qc"), -inf, inf, own)?;
    let lc = p.continuous(v("lc"), 0.0, imax * imax, own)?;
    let ic = p.continuous(v("ic"), 0.0, imax, own)?;
    let ploss = p.continuous(v("ploss"), 0.0, inf, own)?;

    let [(g1, b1), (g2, b2)] = vsc.branch_admittances();
    // P_ij = g u_i − g c_ij − b s_ij,  Q_ij = −b u_i + b c_ij − g s_ij
    // P_ji = g u_j − g c_ij + b s_ij,  Q_ji = −b u_j + b c_ij + g s_ij
    let p_sf = LinExpr::term(css, g1).with(csf, -g1).with(ssf, -b1);
    let q_sf = LinExpr::term(css, -b1).with(csf, b1).with(ssf, -g1);
    let p_fs = LinExpr::term(cff, g1).with(csf, -g1).with(ssf, b1);
    let q_fs = LinExpr::term(cff, -b1).with(csf, b1).with(ssf, g1);
    let p_fc = LinExpr::term(cff, g2).with(cfc, -g2).with(sfc, -b2);
    let q_fc = LinExpr::term(cff, -b2).with(cfc, b2).with(sfc, -g2);
    let p_cf = LinExpr::term(ccc, g2).with(cfc, -g2).with(sfc, b2);
    let q_cf = LinExpr::term(ccc, -b2).with(cfc, b2).with(sfc, g2);

    let bal = v("balance");
    p.eq(&bal, p_sf - LinExpr::from(ps), 0.0);
    p.eq(&bal, q_sf - LinExpr::from(qs), 0.0);
    p.eq(&bal, p_fs + p_fc, 0.0);
    // filter capacitor supplies b_f·u_f
    p.eq(&bal, (q_fs + q_fc).with(cff, -vsc.b_f), 0.0);
    // converter injection into node c
    p.eq(&bal, p_cf - LinExpr::from(pc), 0.0);
    p.eq(&bal, q_cf - LinExpr::from(qc), 0.0);

    p.rotated_cone(&v("w_sf"), ConeFamily::VscVoltageProduct, css, cff, vec![csf.into(), ssf.into()]);
    p.rotated_cone(&v("w_fc"), ConeFamily::VscVoltageProduct, cff, ccc, vec![cfc.into(), sfc.into()]);

    let dm = vsc.delta_max * vsc.delta_max;
    p.le(&v("modulation"), LinExpr::from(ccc).with(udc, -dm), 0.0);

    // DC side: p_m2v = p_c + p_loss
    p.eq(&v("dc_link"), LinExpr::from(pc).with(m2v, -1.0).with(ploss, 1.0), 0.0);
    p.eq(&v("loss"), LinExpr::from(ploss).with(lc, -vsc.a1).with(ic, -vsc.a2), vsc.a3);
    p.rotated_cone(&v("current"), ConeFamily::ConverterCurrent, lc, ccc, vec![pc.into(), qc.into()]);

    // piecewise envelope of l_c = i_c² over K equal segments of [0, ī]
    let mut sum_b = LinExpr::new();
    let mut sum_i = LinExpr::term(ic, -1.0);
    let mut chord = LinExpr::term(lc, 1.0);
    let mut parts = Vec::with_capacity(envelope_k);
    let mut group = Vec::with_capacity(envelope_k);
    let env = v("envelope");
    for k in 0..envelope_k {
        let lo = imax * k as f64 / envelope_k as f64;
        let hi = imax * (k + 1) as f64 / envelope_k as f64;
        let ik = p.continuous(format!("{tag}.ik[{k}]"), 0.0, hi, own)?;
        let bk = p.binary(format!("{tag}.bk[{k}]"), own)?;
        p.add_row(&env, LinExpr::from(ik).with(bk, -lo), Sense::Ge, 0.0);
        p.add_row(&env, LinExpr::from(ik).with(bk, -hi), Sense::Le, 0.0);
        sum_b.add_term(bk, 1.0);
        group.push(bk);
        sum_i.add_term(ik, 1.0);
        chord.add_term(ik, -(lo + hi));
        chord.add_term(bk, lo * hi);
        parts.push(LinExpr::from(ik));
    }
    p.eq(&env, sum_b, 1.0);
    p.eq(&env, sum_i, 0.0);
    p.le(&env, chord, 0.0);
    p.rotated_cone(&env, ConeFamily::CurrentEnvelope, lc, 1.0, parts);
    p.sos1.push(group);
    Ok(p)
}
