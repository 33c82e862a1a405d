use crate::case::NetworkCase;
use crate::error::ModelError;
use crate::program::{BoundaryGroup, ConicProgram, LinExpr, Owner, ParamTag, Sense};

use super::{add_polygon, names, res_system};

/// Renewable unit `res_idx` with available power `p_avail`: polygonal
/// apparent-power cap, `0 ≤ p ≤ p̄` and pass-through to the converter.
pub fn build_res_block(case: &NetworkCase, res_idx: usize, p_avail: f64) -> Result<ConicProgram, ModelError> {
    let res = &case.res_units[res_idx];
    let sys = res_system(res_idx);
    let own = Owner::AcSystem(sys);
    let bnd = Owner::Boundary(sys);
    let mut p = ConicProgram::new(format!("res{}", res.id));
    let pr = p.continuous(format!("res{}.p", res.id), 0.0, f64::INFINITY, own)?;
    let qr = p.continuous(format!("res{}.q", res.id), f64::NEG_INFINITY, f64::INFINITY, own)?;
    let vsc = case
        .res_vsc(res.id)
        .ok_or_else(|| ModelError::Config(format!("res unit {} has no converter", res.id)))?
        .1;
    let [pn, qn, un] = names::boundary(case, vsc);
    let (ul, uh) = res.u_bounds();
    let pb = p.continuous(pn, f64::NEG_INFINITY, f64::INFINITY, bnd)?;
    let qb = p.continuous(qn, f64::NEG_INFINITY, f64::INFINITY, bnd)?;
    let ub = p.continuous(un, ul, uh, bnd)?;

    let label = format!("res{}", res.id);
    add_polygon(&mut p, &format!("{label}.cap"), pr.into(), qr.into(), res.s_max, res.polygon_n);
    p.add_row_tagged(
        &format!("{label}.avail"),
        pr.into(),
        Sense::Le,
        p_avail,
        Some(ParamTag(names::avail_param(res.id))),
    );
    p.eq(&format!("{label}.link"), LinExpr::from(pr) - LinExpr::from(pb), 0.0);
    p.eq(&format!("{label}.link"), LinExpr::from(qr) - LinExpr::from(qb), 0.0);
    p.boundary.push(BoundaryGroup { system: sys, vars: vec![pb, qb, ub] });
    Ok(p)
}
