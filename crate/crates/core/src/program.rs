//! Mixed-binary conic program model shared by the formulation, the solvers
//! and the decomposition engine.
//!
//! A [`ConicProgram`] holds named variables (continuous or binary, each
//! tagged with the subsystem that owns it), a linear objective with a
//! constant offset, labeled blocks of linear rows, and second-order /
//! rotated second-order cones over affine expressions. Quadratic objective
//! terms are lifted into rotated-cone epigraphs on insertion so every solver
//! only ever sees a conic program.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Binary,
}

/// Subsystem a variable belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Owner {
    /// AC system `#n` (the AC grid or a RES unit).
    AcSystem(usize),
    Mtdc,
    /// Converter station by index.
    Vsc(usize),
    /// Boundary (PCC) variable of AC system `#n`.
    Boundary(usize),
    /// Epigraph, cut and other solver-side auxiliaries.
    Auxiliary,
}

impl Owner {
    pub fn is_mtdc_or_vsc(self) -> bool {
        matches!(self, Owner::Mtdc | Owner::Vsc(_))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    #[serde(with = "extended_float")]
    pub lower: f64,
    #[serde(with = "extended_float")]
    pub upper: f64,
    pub owner: Owner,
}

/// JSON has no infinities; unbounded sides are written as `"inf"` / `"-inf"`.
pub(crate) mod extended_float {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(de::Error::custom(format!("invalid number `{other}`"))),
            },
        }
    }
}

/// Affine expression `Σ coef·x + constant`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        LinExpr { terms: Vec::new(), constant: c }
    }

    pub fn term(v: VarId, coef: f64) -> Self {
        LinExpr { terms: vec![(v, coef)], constant: 0.0 }
    }

    pub fn add_term(&mut self, v: VarId, coef: f64) -> &mut Self {
        if coef != 0.0 {
            self.terms.push((v, coef));
        }
        self
    }

    pub fn with(mut self, v: VarId, coef: f64) -> Self {
        self.add_term(v, coef);
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * x[v.0]).sum::<f64>() + self.constant
    }

    /// Merges duplicate variables and drops zero coefficients.
    pub fn compact(&self) -> LinExpr {
        let mut acc: IndexMap<VarId, f64> = IndexMap::new();
        for &(v, c) in &self.terms {
            *acc.entry(v).or_insert(0.0) += c;
        }
        LinExpr {
            terms: acc.into_iter().filter(|&(_, c)| c != 0.0).collect(),
            constant: self.constant,
        }
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.terms.iter().map(|&(v, _)| v)
    }
}

impl From<VarId> for LinExpr {
    fn from(v: VarId) -> Self {
        LinExpr::term(v, 1.0)
    }
}

impl From<f64> for LinExpr {
    fn from(c: f64) -> Self {
        LinExpr::constant(c)
    }
}

impl Add for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: LinExpr) -> LinExpr {
        self.terms.extend(rhs.terms);
        self.constant += rhs.constant;
        self
    }
}

impl AddAssign for LinExpr {
    fn add_assign(&mut self, rhs: LinExpr) {
        self.terms.extend(rhs.terms);
        self.constant += rhs.constant;
    }
}

impl Sub for LinExpr {
    type Output = LinExpr;
    fn sub(self, rhs: LinExpr) -> LinExpr {
        self + (-rhs)
    }
}

impl Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self * -1.0
    }
}

impl Mul<f64> for LinExpr {
    type Output = LinExpr;
    fn mul(mut self, k: f64) -> LinExpr {
        for t in &mut self.terms {
            t.1 *= k;
        }
        self.constant *= k;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Eq,
    Le,
    Ge,
}

/// Marks data that depends on an uncertain parameter.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamTag(pub String);

/// One linear row `Σ coef·x  (=|≤|≥)  rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    /// Uncertain parameter entering the right-hand side.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rhs_param: Option<ParamTag>,
    /// Uncertain parameters multiplying a variable in this row.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coef_params: Vec<(VarId, ParamTag)>,
}

impl LinearRow {
    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * x[v.0]).sum()
    }

    /// Positive amount by which the row is violated at `x`.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.lhs(x);
        match self.sense {
            Sense::Eq => (lhs - self.rhs).abs(),
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearBlock {
    pub label: String,
    pub rows: Vec<LinearRow>,
}

/// Physical meaning of a cone, used for tightness reporting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConeFamily {
    /// DC line flow relaxation `p_ij² ≤ l_ij·u_i`.
    DcLineFlow,
    /// VSC internal branch `c_ij² + s_ij² ≤ c_ii·c_jj`.
    VscVoltageProduct,
    /// Converter current `p_c² + q_c² ≤ l_c·u_c`.
    ConverterCurrent,
    /// Lower half of the piecewise current envelope `Σ i_k² ≤ l_c`.
    CurrentEnvelope,
    /// Epigraph of a convex quadratic objective term.
    CostEpigraph,
    Generic,
}

impl ConeFamily {
    /// Cones that relax a physical equality; slack there means the relaxation is inexact.
    pub fn is_physical_relaxation(self) -> bool {
        matches!(
            self,
            ConeFamily::DcLineFlow | ConeFamily::VscVoltageProduct | ConeFamily::ConverterCurrent
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ConeShape {
    /// `‖x‖₂ ≤ t`
    SecondOrder { t: LinExpr, x: Vec<LinExpr> },
    /// `‖x‖₂² ≤ y·z`, `y, z ≥ 0`
    Rotated { y: LinExpr, z: LinExpr, x: Vec<LinExpr> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cone {
    pub label: String,
    pub family: ConeFamily,
    pub shape: ConeShape,
}

impl Cone {
    /// Affine rows `(t, x...)` of the equivalent standard second-order cone.
    pub fn standard_rows(&self) -> Vec<LinExpr> {
        match &self.shape {
            ConeShape::SecondOrder { t, x } => {
                let mut rows = vec![t.clone()];
                rows.extend(x.iter().cloned());
                rows
            }
            ConeShape::Rotated { y, z, x } => {
                let mut rows = vec![y.clone() + z.clone()];
                rows.extend(x.iter().map(|e| e.clone() * 2.0));
                rows.push(y.clone() - z.clone());
                rows
            }
        }
    }

    /// Slack `t − ‖x‖` (or `y·z − ‖x‖²`) and a scale-relative version of it.
    pub fn slack(&self, x: &[f64]) -> (f64, f64) {
        match &self.shape {
            ConeShape::SecondOrder { t, x: xs } => {
                let tv = t.eval(x);
                let n = xs.iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
                let s = tv - n;
                (s, s / tv.abs().max(1.0))
            }
            ConeShape::Rotated { y, z, x: xs } => {
                let (yv, zv) = (y.eval(x), z.eval(x));
                let n2 = xs.iter().map(|e| e.eval(x).powi(2)).sum::<f64>();
                let s = yv * zv - n2;
                // dividing by the larger side gives e.g. l − p²/u for a line
                let rel = s / yv.abs().max(zv.abs()).max(1.0);
                (s, rel)
            }
        }
    }
}

/// Nonconvex `x·y = z` relation. No backend accepts it; it exists so that
/// structural checks can be exercised against non-conic models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BilinearEquality {
    pub label: String,
    pub x: VarId,
    pub y: VarId,
    pub z: VarId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryGroup {
    /// AC system index `#n`.
    pub system: usize,
    /// Ordered boundary variables, `(p, q, u)` per converter station.
    pub vars: Vec<VarId>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ConicProgram {
    pub name: String,
    pub variables: Vec<Variable>,
    pub objective: LinExpr,
    pub blocks: IndexMap<String, LinearBlock>,
    pub cones: Vec<Cone>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bilinear: Vec<BilinearEquality>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub boundary: Vec<BoundaryGroup>,
    /// Ordered binary groups with `Σ = 1`; branch-and-bound splits them
    /// by position instead of one variable at a time.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sos1: Vec<Vec<VarId>>,
    #[serde(skip)]
    index: HashMap<String, VarId>,
}

impl ConicProgram {
    pub fn new(name: impl Into<String>) -> Self {
        ConicProgram { name: name.into(), ..Default::default() }
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.variables.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        kind: VarKind,
        lower: f64,
        upper: f64,
        owner: Owner,
    ) -> Result<VarId, ModelError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(ModelError::DuplicateVariable(name));
        }
        if lower > upper {
            return Err(ModelError::EmptyBounds { name, lower, upper });
        }
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            VarKind::Continuous => (lower, upper),
        };
        let id = VarId(self.variables.len());
        self.index.insert(name.clone(), id);
        self.variables.push(Variable { name, kind, lower, upper, owner });
        Ok(id)
    }

    pub fn continuous(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        owner: Owner,
    ) -> Result<VarId, ModelError> {
        self.add_var(name, VarKind::Continuous, lower, upper, owner)
    }

    pub fn binary(&mut self, name: impl Into<String>, owner: Owner) -> Result<VarId, ModelError> {
        self.add_var(name, VarKind::Binary, 0.0, 1.0, owner)
    }

    /// Returns the existing variable of that name or creates it.
    pub fn shared_continuous(
        &mut self,
        name: &str,
        lower: f64,
        upper: f64,
        owner: Owner,
    ) -> Result<VarId, ModelError> {
        match self.index.get(name) {
            Some(&v) => Ok(v),
            None => self.continuous(name, lower, upper, owner),
        }
    }

    pub fn var(&self, name: &str) -> Option<VarId> {
        self.index.get(name).copied()
    }

    pub fn var_checked(&self, name: &str) -> Result<VarId, ModelError> {
        self.var(name).ok_or_else(|| ModelError::UnknownVariable(name.to_string()))
    }

    pub fn variable(&self, v: VarId) -> &Variable {
        &self.variables[v.0]
    }

    pub fn set_bounds(&mut self, v: VarId, lower: f64, upper: f64) {
        let var = &mut self.variables[v.0];
        var.lower = lower;
        var.upper = upper;
    }

    pub fn fix(&mut self, v: VarId, value: f64) {
        self.set_bounds(v, value, value);
    }

    /// Rebuilds the name index, e.g. after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .variables
            .iter()
            .enumerate()
            .map(|(i, v)| (v.name.clone(), VarId(i)))
            .collect();
    }

    pub fn add_objective(&mut self, e: LinExpr) {
        self.objective += e;
    }

    /// Adds `coef·v²` to the objective through a rotated-cone epigraph `v² ≤ w·1`.
    pub fn add_quadratic_objective(
        &mut self,
        v: VarId,
        coef: f64,
        label: &str,
    ) -> Result<Option<VarId>, ModelError> {
        if coef < 0.0 {
            return Err(ModelError::Nonconvex(format!(
                "negative quadratic coefficient {coef} on {label}"
            )));
        }
        if coef == 0.0 {
            return Ok(None);
        }
        let w = self.continuous(format!("{label}.sq"), 0.0, f64::INFINITY, Owner::Auxiliary)?;
        self.add_cone(
            label,
            ConeFamily::CostEpigraph,
            ConeShape::Rotated { y: w.into(), z: LinExpr::constant(1.0), x: vec![v.into()] },
        );
        self.objective.add_term(w, coef);
        Ok(Some(w))
    }

    /// Adds `expr (sense) rhs`, folding the expression constant into the right-hand side.
    pub fn add_row(&mut self, label: &str, expr: LinExpr, sense: Sense, rhs: f64) -> usize {
        self.add_row_tagged(label, expr, sense, rhs, None)
    }

    pub fn add_row_tagged(
        &mut self,
        label: &str,
        expr: LinExpr,
        sense: Sense,
        rhs: f64,
        rhs_param: Option<ParamTag>,
    ) -> usize {
        let e = expr.compact();
        let block = self
            .blocks
            .entry(label.to_string())
            .or_insert_with(|| LinearBlock { label: label.to_string(), rows: Vec::new() });
        block.rows.push(LinearRow {
            terms: e.terms,
            sense,
            rhs: rhs - e.constant,
            rhs_param,
            coef_params: Vec::new(),
        });
        block.rows.len() - 1
    }

    pub fn eq(&mut self, label: &str, expr: LinExpr, rhs: f64) -> usize {
        self.add_row(label, expr, Sense::Eq, rhs)
    }

    pub fn le(&mut self, label: &str, expr: LinExpr, rhs: f64) -> usize {
        self.add_row(label, expr, Sense::Le, rhs)
    }

    pub fn ge(&mut self, label: &str, expr: LinExpr, rhs: f64) -> usize {
        self.add_row(label, expr, Sense::Ge, rhs)
    }

    pub fn add_cone(&mut self, label: &str, family: ConeFamily, shape: ConeShape) {
        let shape = match shape {
            ConeShape::SecondOrder { t, x } => ConeShape::SecondOrder {
                t: t.compact(),
                x: x.into_iter().map(|e| e.compact()).collect(),
            },
            ConeShape::Rotated { y, z, x } => ConeShape::Rotated {
                y: y.compact(),
                z: z.compact(),
                x: x.into_iter().map(|e| e.compact()).collect(),
            },
        };
        self.cones.push(Cone { label: label.to_string(), family, shape });
    }

    /// `‖x‖² ≤ y·z`
    pub fn rotated_cone(
        &mut self,
        label: &str,
        family: ConeFamily,
        y: impl Into<LinExpr>,
        z: impl Into<LinExpr>,
        x: Vec<LinExpr>,
    ) {
        self.add_cone(label, family, ConeShape::Rotated { y: y.into(), z: z.into(), x });
    }

    pub fn block(&self, label: &str) -> Option<&LinearBlock> {
        self.blocks.get(label)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.eval(x)
    }

    /// Largest linear-row or bound violation at `x`.
    pub fn max_linear_violation(&self, x: &[f64]) -> f64 {
        let rows = self
            .blocks
            .values()
            .flat_map(|b| b.rows.iter())
            .map(|r| r.violation(x))
            .fold(0.0, f64::max);
        let bounds = self
            .variables
            .iter()
            .zip(x)
            .map(|(v, &xv)| (v.lower - xv).max(xv - v.upper).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    /// Largest cone violation `max(0, −slack)` in the standard second-order form.
    pub fn max_cone_violation(&self, x: &[f64]) -> f64 {
        self.cones
            .iter()
            .map(|c| {
                let rows: Vec<f64> = c.standard_rows().iter().map(|e| e.eval(x)).collect();
                let n = rows[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                (n - rows[0]).max(0.0)
            })
            .fold(0.0, f64::max)
    }

    /// Checks every referenced variable exists and labels are non-empty.
    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.variables.len();
        let check = |v: VarId, ctx: &str| {
            if v.0 >= n {
                Err(ModelError::UndeclaredVariable { var: v.0, context: ctx.to_string() })
            } else {
                Ok(())
            }
        };
        for v in self.objective.vars() {
            check(v, "objective")?;
        }
        for b in self.blocks.values() {
            for r in &b.rows {
                for &(v, _) in &r.terms {
                    check(v, &b.label)?;
                }
            }
        }
        for c in &self.cones {
            for e in c.standard_rows() {
                for v in e.vars() {
                    check(v, &c.label)?;
                }
            }
        }
        for g in &self.boundary {
            for &v in &g.vars {
                check(v, "boundary")?;
            }
        }
        for g in &self.sos1 {
            for &v in g {
                check(v, "sos1")?;
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, serde_json::Error> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        let mut p: ConicProgram = serde_json::from_str(s)?;
        p.reindex();
        Ok(p)
    }

    /// Appends all of `other` into `self`, renaming nothing: variables that
    /// share a name are merged (bounds intersected).
    pub fn merge(&mut self, other: &ConicProgram) -> Result<Vec<VarId>, ModelError> {
        let mut map = Vec::with_capacity(other.variables.len());
        for v in &other.variables {
            let id = match self.var(&v.name) {
                Some(id) => {
                    let cur = &mut self.variables[id.0];
                    cur.lower = cur.lower.max(v.lower);
                    cur.upper = cur.upper.min(v.upper);
                    id
                }
                None => self.add_var(v.name.clone(), v.kind, v.lower, v.upper, v.owner)?,
            };
            map.push(id);
        }
        let remap = |e: &LinExpr| LinExpr {
            terms: e.terms.iter().map(|&(v, c)| (map[v.0], c)).collect(),
            constant: e.constant,
        };
        self.objective += remap(&other.objective);
        for b in other.blocks.values() {
            let dst = self
                .blocks
                .entry(b.label.clone())
                .or_insert_with(|| LinearBlock { label: b.label.clone(), rows: Vec::new() });
            for r in &b.rows {
                dst.rows.push(LinearRow {
                    terms: r.terms.iter().map(|&(v, c)| (map[v.0], c)).collect(),
                    sense: r.sense,
                    rhs: r.rhs,
                    rhs_param: r.rhs_param.clone(),
                    coef_params: r.coef_params.iter().map(|(v, p)| (map[v.0], p.clone())).collect(),
                });
            }
        }
        for c in &other.cones {
            let shape = match &c.shape {
                ConeShape::SecondOrder { t, x } => {
                    ConeShape::SecondOrder { t: remap(t), x: x.iter().map(remap).collect() }
                }
                ConeShape::Rotated { y, z, x } => ConeShape::Rotated {
                    y: remap(y),
                    z: remap(z),
                    x: x.iter().map(remap).collect(),
                },
            };
            self.cones.push(Cone { label: c.label.clone(), family: c.family, shape });
        }
        for b in &other.bilinear {
            self.bilinear.push(BilinearEquality {
                label: b.label.clone(),
                x: map[b.x.0],
                y: map[b.y.0],
                z: map[b.z.0],
            });
        }
        for g in &other.sos1 {
            self.sos1.push(g.iter().map(|v| map[v.0]).collect());
        }
        for g in &other.boundary {
            self.boundary.push(BoundaryGroup {
                system: g.system,
                vars: g.vars.iter().map(|v| map[v.0]).collect(),
            });
        }
        Ok(map)
    }
}
