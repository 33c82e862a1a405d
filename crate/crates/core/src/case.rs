//! Network case data: schema, per-unit normalization and validation.
//!
//! Case files are TOML documents. Every element refers to others by id;
//! quantities are either per-unit (`units = "pu"`) or physical
//! (`units = "si"`: MW / MVAr / MVA, kV, Ω, S, kA) and are normalized to
//! per-unit on load. See `docs/case-format.md` for the full schema.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CaseError;

pub const FORMAT_VERSION: u32 = 1;

/// Bundled test system: one meshed AC grid, two renewable units and a
/// four-terminal meshed MTDC grid.
pub const FIG4_CASE: &str = include_str!("../cases/fig4.case");
/// Same system with the fixed-topology DC ring unable to hold the DC
/// voltage band.
pub const FIG4_TIGHT_CASE: &str = include_str!("../cases/fig4_tight.case");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    #[default]
    Pu,
    Si,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Base {
    #[serde(default = "default_s_base")]
    pub s_mva: f64,
    #[serde(default = "default_v_base")]
    pub v_kv: f64,
}

impl Default for Base {
    fn default() -> Self {
        Base { s_mva: default_s_base(), v_kv: default_v_base() }
    }
}

impl Base {
    pub fn z_ohm(&self) -> f64 {
        self.v_kv * self.v_kv / self.s_mva
    }

    /// Three-phase current base in kA.
    pub fn i_ka(&self) -> f64 {
        self.s_mva / (3f64.sqrt() * self.v_kv)
    }
}

fn default_s_base() -> f64 {
    100.0
}
fn default_v_base() -> f64 {
    345.0
}
fn default_v_min() -> f64 {
    0.955
}
fn default_v_max() -> f64 {
    1.045
}
fn default_one() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}
fn default_pf() -> f64 {
    0.9
}
fn default_polygon() -> usize {
    8
}
fn default_envelope() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcNode {
    pub id: u32,
    /// Voltage magnitude bounds; the model works with their squares.
    #[serde(default = "default_v_min")]
    pub v_min: f64,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
    #[serde(default)]
    pub load_p: f64,
    #[serde(default)]
    pub load_q: f64,
    /// Shunt admittance `G_sh + jB_sh` (diagonal contribution to the nodal admittance matrix).
    #[serde(default)]
    pub shunt_g: f64,
    #[serde(default)]
    pub shunt_b: f64,
    #[serde(default)]
    pub slack: bool,
    /// Voltage setpoint used by the power flow at the slack node.
    #[serde(default = "default_one")]
    pub v_set: f64,
}

impl AcNode {
    pub fn u_bounds(&self) -> (f64, f64) {
        (self.v_min * self.v_min, self.v_max * self.v_max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcBranch {
    pub from: u32,
    pub to: u32,
    /// Series admittance `g + jb` (for an inductive line `b < 0`).
    pub g: f64,
    pub b: f64,
    #[serde(default = "default_one")]
    pub s_max: f64,
    #[serde(default = "default_polygon")]
    pub polygon_n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub node: u32,
    pub p_max: f64,
    /// Capacitive / inductive power-factor limits.
    #[serde(default = "default_pf")]
    pub pf_cap: f64,
    #[serde(default = "default_pf")]
    pub pf_ind: f64,
    /// Cost `c1·p² + c2·p + c3`.
    #[serde(default)]
    pub c1: f64,
    #[serde(default)]
    pub c2: f64,
    #[serde(default)]
    pub c3: f64,
    /// Dispatch used for the base power flow.
    #[serde(default)]
    pub p_base: f64,
    #[serde(default)]
    pub q_base: f64,
}

impl Generator {
    /// `tan φ` for the capacitive and inductive limits.
    pub fn q_ratios(&self) -> (f64, f64) {
        (self.pf_cap.acos().tan(), self.pf_ind.acos().tan())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResUnit {
    pub id: u32,
    pub s_max: f64,
    /// Box of the available active power.
    pub p_avail_min: f64,
    pub p_avail_max: f64,
    #[serde(default = "default_v_min")]
    pub v_min: f64,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
    #[serde(default = "default_polygon")]
    pub polygon_n: usize,
}

impl ResUnit {
    pub fn u_bounds(&self) -> (f64, f64) {
        (self.v_min * self.v_min, self.v_max * self.v_max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcNode {
    pub id: u32,
    #[serde(default = "default_v_min")]
    pub v_min: f64,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
}

impl DcNode {
    pub fn u_bounds(&self) -> (f64, f64) {
        (self.v_min * self.v_min, self.v_max * self.v_max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcLine {
    pub from: u32,
    pub to: u32,
    pub r: f64,
    #[serde(default = "default_true")]
    pub switchable: bool,
    /// Status used when topology switching is disabled.
    #[serde(default = "default_true")]
    pub closed: bool,
}

/// AC-side system a converter station attaches to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pcc {
    /// AC grid node id.
    Ac(u32),
    /// Renewable unit id.
    Res(u32),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VscStation {
    pub id: u32,
    pub pcc: Pcc,
    pub dc_node: u32,
    /// Filter susceptance.
    pub b_f: f64,
    /// Loss `a1·i² + a2·i + a3`.
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    #[serde(default = "default_one")]
    pub i_max: f64,
    #[serde(default = "default_one")]
    pub delta_max: f64,
    /// Transformer impedance between the PCC (s) and filter (f) nodes.
    pub r_tf: f64,
    pub x_tf: f64,
    /// Phase reactor impedance between the filter (f) and converter (c) nodes.
    pub r_c: f64,
    pub x_c: f64,
    #[serde(default = "default_v_min")]
    pub v_min: f64,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
}

impl VscStation {
    pub fn u_bounds(&self) -> (f64, f64) {
        (self.v_min * self.v_min, self.v_max * self.v_max)
    }

    /// Series admittances `(g, b)` of the s–f and f–c branches.
    pub fn branch_admittances(&self) -> [(f64, f64); 2] {
        let y = |r: f64, x: f64| {
            let d = r * r + x * x;
            (r / d, -x / d)
        };
        [y(self.r_tf, self.x_tf), y(self.r_c, self.x_c)]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOptions {
    /// Segments of the converter-current envelope.
    #[serde(default = "default_envelope")]
    pub envelope_k: usize,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions { envelope_k: default_envelope() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkCase {
    pub format_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub units: Units,
    #[serde(default)]
    pub base: Base,
    #[serde(default)]
    pub options: ModelOptions,
    #[serde(default)]
    pub ac_nodes: Vec<AcNode>,
    #[serde(default)]
    pub ac_branches: Vec<AcBranch>,
    #[serde(default)]
    pub generators: Vec<Generator>,
    #[serde(default)]
    pub res_units: Vec<ResUnit>,
    #[serde(default)]
    pub dc_nodes: Vec<DcNode>,
    #[serde(default)]
    pub dc_lines: Vec<DcLine>,
    #[serde(default)]
    pub vsc_stations: Vec<VscStation>,
}

/// One failed invariant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: String,
    pub element: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, rule: impl Into<String>, element: impl Into<String>) {
        self.violations.push(Violation { rule: rule.into(), element: element.into() });
    }
}

impl NetworkCase {
    pub fn from_toml_str(text: &str) -> Result<NetworkCase, CaseError> {
        let mut case: NetworkCase = toml::from_str(text).map_err(|e| schema_error(text, e))?;
        if case.format_version != FORMAT_VERSION {
            return Err(CaseError::Version(case.format_version));
        }
        if case.units == Units::Si {
            case.si_to_pu();
        }
        if let Some(v) = case.validate().violations.into_iter().next() {
            return Err(CaseError::Invariant { rule: v.rule, element: v.element });
        }
        Ok(case)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("case serialization cannot fail")
    }

    /// Bundled reference case.
    pub fn fig4() -> NetworkCase {
        NetworkCase::from_toml_str(FIG4_CASE).expect("bundled case is valid")
    }

    /// Bundled case with the tight DC voltage band.
    pub fn fig4_tight() -> NetworkCase {
        NetworkCase::from_toml_str(FIG4_TIGHT_CASE).expect("bundled case is valid")
    }

    pub fn ac_index(&self, id: u32) -> Option<usize> {
        self.ac_nodes.iter().position(|n| n.id == id)
    }

    pub fn dc_index(&self, id: u32) -> Option<usize> {
        self.dc_nodes.iter().position(|n| n.id == id)
    }

    pub fn res_index(&self, id: u32) -> Option<usize> {
        self.res_units.iter().position(|r| r.id == id)
    }

    pub fn slack_index(&self) -> Option<usize> {
        self.ac_nodes.iter().position(|n| n.slack)
    }

    /// Converter stations attached to AC grid nodes, in declaration order.
    pub fn grid_vscs(&self) -> impl Iterator<Item = (usize, &VscStation)> {
        self.vsc_stations.iter().enumerate().filter(|(_, v)| matches!(v.pcc, Pcc::Ac(_)))
    }

    /// Converter station of a renewable unit.
    pub fn res_vsc(&self, res_id: u32) -> Option<(usize, &VscStation)> {
        self.vsc_stations.iter().enumerate().find(|(_, v)| v.pcc == Pcc::Res(res_id))
    }

    /// Sum of rated converter powers, used as the DC big-M.
    pub fn big_m(&self) -> f64 {
        self.vsc_stations.iter().map(|v| v.i_max * v.v_max).sum()
    }

    /// Nodal admittance matrix of the AC grid as dense `(G, B)`.
    pub fn admittance(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n = self.ac_nodes.len();
        let mut g = vec![vec![0.0; n]; n];
        let mut b = vec![vec![0.0; n]; n];
        for (i, node) in self.ac_nodes.iter().enumerate() {
            g[i][i] += node.shunt_g;
            b[i][i] += node.shunt_b;
        }
        for br in &self.ac_branches {
            let (Some(i), Some(j)) = (self.ac_index(br.from), self.ac_index(br.to)) else { continue };
            g[i][i] += br.g;
            b[i][i] += br.b;
            g[j][j] += br.g;
            b[j][j] += br.b;
            g[i][j] -= br.g;
            b[i][j] -= br.b;
            g[j][i] -= br.g;
            b[j][i] -= br.b;
        }
        (g, b)
    }

    /// Checks every invariant without modifying the case.
    pub fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        let ids = |kind: &str, it: &mut dyn Iterator<Item = u32>, r: &mut ValidationReport| {
            let mut seen = BTreeSet::new();
            for id in it {
                if !seen.insert(id) {
                    r.push("ids must be unique", format!("{kind} {id}"));
                }
            }
            seen
        };
        let ac_ids = ids("ac node", &mut self.ac_nodes.iter().map(|n| n.id), &mut r);
        let dc_ids = ids("dc node", &mut self.dc_nodes.iter().map(|n| n.id), &mut r);
        let res_ids = ids("res unit", &mut self.res_units.iter().map(|n| n.id), &mut r);
        ids("vsc", &mut self.vsc_stations.iter().map(|n| n.id), &mut r);

        if self.ac_nodes.is_empty() {
            r.push("an AC grid is required", "ac_nodes");
        }
        match self.ac_nodes.iter().filter(|n| n.slack).count() {
            1 => {}
            0 if self.ac_nodes.is_empty() => {}
            k => r.push(format!("exactly one slack node is required (found {k})"), "ac_nodes"),
        }
        // negated comparisons so that NaN counts as a violation
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        let bound = |r: &mut ValidationReport, lo: f64, hi: f64, what: String| {
            if !(lo <= hi) {
                r.push("lower bound must not exceed upper bound", what);
            }
        };
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        let positive = |r: &mut ValidationReport, v: f64, name: &str, what: String| {
            if !(v > 0.0) {
                r.push(format!("{name} must be positive"), what);
            }
        };
        for n in &self.ac_nodes {
            bound(&mut r, n.v_min, n.v_max, format!("ac node {} voltage", n.id));
            positive(&mut r, n.v_min, "voltage bound", format!("ac node {}", n.id));
        }
        for (k, br) in self.ac_branches.iter().enumerate() {
            let el = format!("ac branch {k} ({}-{})", br.from, br.to);
            for end in [br.from, br.to] {
                if !ac_ids.contains(&end) {
                    r.push(format!("references unknown ac node {end}"), el.clone());
                }
            }
            if br.from == br.to {
                r.push("branch endpoints must differ", el.clone());
            }
            if br.g == 0.0 && br.b == 0.0 {
                r.push("admittance must be nonzero", el.clone());
            }
            positive(&mut r, br.s_max, "capacity", el.clone());
            if br.polygon_n == 0 {
                r.push("polygon segment count must be positive", el);
            }
        }
        for (k, gen) in self.generators.iter().enumerate() {
            let el = format!("generator {k} at node {}", gen.node);
            if !ac_ids.contains(&gen.node) {
                r.push(format!("references unknown ac node {}", gen.node), el.clone());
            }
            if gen.p_max < 0.0 {
                r.push("capacity must be non-negative", el.clone());
            }
            for pf in [gen.pf_cap, gen.pf_ind] {
                if !(pf > 0.0 && pf <= 1.0) {
                    r.push("power factor must lie in (0, 1]", el.clone());
                }
            }
            if gen.c1 < 0.0 {
                r.push("quadratic cost must be non-negative", el);
            }
        }
        for res in &self.res_units {
            let el = format!("res unit {}", res.id);
            positive(&mut r, res.s_max, "capacity", el.clone());
            bound(&mut r, res.p_avail_min, res.p_avail_max, format!("{el} available power"));
            if res.p_avail_min < 0.0 {
                r.push("available power must be non-negative", el.clone());
            }
            bound(&mut r, res.v_min, res.v_max, format!("{el} voltage"));
            if res.polygon_n == 0 {
                r.push("polygon segment count must be positive", el.clone());
            }
            match self.vsc_stations.iter().filter(|v| v.pcc == Pcc::Res(res.id)).count() {
                1 => {}
                k => r.push(format!("must connect to exactly one VSC (found {k})"), el),
            }
        }
        for n in &self.dc_nodes {
            bound(&mut r, n.v_min, n.v_max, format!("dc node {} voltage", n.id));
            positive(&mut r, n.v_min, "voltage bound", format!("dc node {}", n.id));
        }
        for (k, l) in self.dc_lines.iter().enumerate() {
            let el = format!("dc line {k} ({}-{})", l.from, l.to);
            for end in [l.from, l.to] {
                if !dc_ids.contains(&end) {
                    r.push(format!("references unknown dc node {end}"), el.clone());
                }
            }
            if l.from == l.to {
                r.push("line endpoints must differ", el.clone());
            }
            positive(&mut r, l.r, "resistance", el);
        }
        let mut hosted: BTreeMap<u32, usize> = BTreeMap::new();
        for v in &self.vsc_stations {
            let el = format!("vsc {}", v.id);
            match v.pcc {
                Pcc::Ac(id) if !ac_ids.contains(&id) => {
                    r.push(format!("references unknown ac node {id}"), el.clone())
                }
                Pcc::Res(id) if !res_ids.contains(&id) => {
                    r.push(format!("references unknown res unit {id}"), el.clone())
                }
                _ => {}
            }
            if !dc_ids.contains(&v.dc_node) {
                r.push(format!("references unknown dc node {}", v.dc_node), el.clone());
            }
            *hosted.entry(v.dc_node).or_default() += 1;
            positive(&mut r, v.i_max, "current cap", el.clone());
            positive(&mut r, v.delta_max, "modulation cap", el.clone());
            positive(&mut r, v.x_tf, "transformer reactance", el.clone());
            positive(&mut r, v.x_c, "phase reactor reactance", el.clone());
            if v.r_tf < 0.0 || v.r_c < 0.0 {
                r.push("resistance must be non-negative", el.clone());
            }
            if v.a1 < 0.0 || v.a2 < 0.0 || v.a3 < 0.0 {
                r.push("loss coefficients must be non-negative", el.clone());
            }
            bound(&mut r, v.v_min, v.v_max, format!("{el} voltage"));
        }
        for (id, k) in hosted {
            if k > 1 {
                r.push(format!("hosts {k} VSC stations (at most one allowed)"), format!("dc node {id}"));
            }
        }
        if options_invalid(&self.options) {
            r.push("envelope segment count must be positive", "options.envelope_k");
        }
        let ac_edges: Vec<(u32, u32)> = self.ac_branches.iter().map(|b| (b.from, b.to)).collect();
        for id in disconnected(&ac_ids, &ac_edges) {
            r.push("AC grid must be connected", format!("ac node {id}"));
        }
        let dc_edges: Vec<(u32, u32)> = self.dc_lines.iter().map(|l| (l.from, l.to)).collect();
        for id in disconnected(&dc_ids, &dc_edges) {
            r.push("DC grid must be connected", format!("dc node {id}"));
        }
        r
    }

    fn si_to_pu(&mut self) {
        self.scale(false);
        self.units = Units::Pu;
    }

    /// Copy of the case expressed in physical units.
    pub fn to_si(&self) -> NetworkCase {
        let mut c = self.clone();
        if c.units == Units::Pu {
            c.scale(true);
            c.units = Units::Si;
        }
        c
    }

    /// Converts between per-unit and physical quantities.
    fn scale(&mut self, to_si: bool) {
        let s = self.base.s_mva;
        let v = self.base.v_kv;
        let z = self.base.z_ohm();
        let i = self.base.i_ka();
        // factor such that physical = pu · factor
        let conv = |x: &mut f64, factor: f64| {
            if to_si {
                *x *= factor
            } else {
                *x /= factor
            }
        };
        for n in &mut self.ac_nodes {
            for f in [&mut n.v_min, &mut n.v_max, &mut n.v_set] {
                conv(f, v);
            }
            for f in [&mut n.load_p, &mut n.load_q] {
                conv(f, s);
            }
            for f in [&mut n.shunt_g, &mut n.shunt_b] {
                conv(f, 1.0 / z);
            }
        }
        for b in &mut self.ac_branches {
            conv(&mut b.g, 1.0 / z);
            conv(&mut b.b, 1.0 / z);
            conv(&mut b.s_max, s);
        }
        for g in &mut self.generators {
            for f in [&mut g.p_max, &mut g.p_base, &mut g.q_base] {
                conv(f, s);
            }
            // cost in currency: c1·P² with P = p·S
            conv(&mut g.c1, 1.0 / (s * s));
            conv(&mut g.c2, 1.0 / s);
        }
        for r in &mut self.res_units {
            for f in [&mut r.s_max, &mut r.p_avail_min, &mut r.p_avail_max] {
                conv(f, s);
            }
            for f in [&mut r.v_min, &mut r.v_max] {
                conv(f, v);
            }
        }
        for n in &mut self.dc_nodes {
            for f in [&mut n.v_min, &mut n.v_max] {
                conv(f, v);
            }
        }
        for l in &mut self.dc_lines {
            conv(&mut l.r, z);
        }
        for c in &mut self.vsc_stations {
            conv(&mut c.b_f, 1.0 / z);
            // loss in MW: a1·I² + a2·I + a3 with I = i·I_base
            conv(&mut c.a1, s / (i * i));
            conv(&mut c.a2, s / i);
            conv(&mut c.a3, s);
            conv(&mut c.i_max, i);
            for f in [&mut c.r_tf, &mut c.x_tf, &mut c.r_c, &mut c.x_c] {
                conv(f, z);
            }
            for f in [&mut c.v_min, &mut c.v_max] {
                conv(f, v);
            }
        }
    }
}

fn options_invalid(o: &ModelOptions) -> bool {
    o.envelope_k == 0
}

/// Nodes not reachable from the first node.
fn disconnected(ids: &BTreeSet<u32>, edges: &[(u32, u32)]) -> Vec<u32> {
    let Some(&start) = ids.iter().next() else { return Vec::new() };
    let mut seen = BTreeSet::from([start]);
    let mut stack = vec![start];
    while let Some(n) = stack.pop() {
        for &(a, b) in edges {
            let other = if a == n {
                b
            } else if b == n {
                a
            } else {
                continue;
            };
            if ids.contains(&other) && seen.insert(other) {
                stack.push(other);
            }
        }
    }
    ids.iter().filter(|id| !seen.contains(id)).copied().collect()
}

fn schema_error(text: &str, e: toml::de::Error) -> CaseError {
    let message = e.message().to_string();
    if message.contains("unknown variant") && message.contains("pu") && message.contains("si") {
        return CaseError::UnitMismatch(message);
    }
    let location = match e.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let col = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
            format!("line {line}, column {col}")
        }
        None => "document".to_string(),
    };
    CaseError::Schema { location, message }
}

/// Reads and normalizes a case file.
pub fn load_case(path: impl AsRef<Path>) -> Result<NetworkCase, CaseError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| CaseError::Io { path: path.display().to_string(), source })?;
    NetworkCase::from_toml_str(&text)
}

/// Validation report for a case; an empty list means the case is valid.
pub fn validate_case(case: &NetworkCase) -> ValidationReport {
    case.validate()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
format_version = 1

[[ac_nodes]]
id = 1
slack = true

[[ac_nodes]]
id = 2
load_p = 0.1

[[ac_branches]]
from = 1
to = 2
g = 1.0
b = -10.0

[[generators]]
node = 1
p_max = 1.0

[[dc_nodes]]
id = 1

[[dc_nodes]]
id = 2

[[dc_lines]]
from = 1
to = 2
r = 0.01

[[vsc_stations]]
id = 1
pcc = { ac = 2 }
dc_node = 1
b_f = 0.08
a1 = 0.01
a2 = 0.01
a3 = 0.01
r_tf = 0.001
x_tf = 0.1
r_c = 0.001
x_c = 0.15
"#;

    #[test]
    fn minimal_case_gets_defaults() {
        let c = NetworkCase::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.base, Base { s_mva: 100.0, v_kv: 345.0 });
        assert_eq!(c.ac_branches[0].polygon_n, 8);
        assert_eq!(c.ac_branches[0].s_max, 1.0);
        assert_eq!(c.generators[0].pf_cap, 0.9);
        assert!(c.dc_lines[0].switchable && c.dc_lines[0].closed);
        assert_eq!(c.options.envelope_k, 4);
        assert_eq!(c.ac_nodes[0].v_min, 0.955);
    }

    #[test]
    fn zero_resistance_rejected() {
        let text = MINIMAL.replace("r = 0.01", "r = 0.0");
        match NetworkCase::from_toml_str(&text) {
            Err(CaseError::Invariant { rule, .. }) => assert_eq!(rule, "resistance must be positive"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_field_reports_location() {
        let text = MINIMAL.replace("load_p = 0.1", "load_pp = 0.1");
        match NetworkCase::from_toml_str(&text) {
            Err(CaseError::Schema { location, message }) => {
                assert!(location.starts_with("line "), "{location}");
                assert!(message.contains("load_pp"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_units_is_a_unit_mismatch() {
        let text = MINIMAL.replace("format_version = 1", "format_version = 1\nunits = \"kw\"");
        assert!(matches!(NetworkCase::from_toml_str(&text), Err(CaseError::UnitMismatch(_))));
    }

    #[test]
    fn bundled_cases_are_valid() {
        for c in [NetworkCase::fig4(), NetworkCase::fig4_tight()] {
            assert!(validate_case(&c).is_valid());
            assert_eq!(c.res_units.len(), 2);
            assert_eq!(c.dc_nodes.len(), 4);
            let lines: Vec<(u32, u32)> = c.dc_lines.iter().map(|l| (l.from, l.to)).collect();
            assert_eq!(lines, vec![(1, 2), (2, 3), (3, 4), (4, 1), (1, 3), (2, 4)]);
        }
    }

    #[test]
    fn disconnected_dc_node_is_one_violation() {
        let mut c = NetworkCase::from_toml_str(MINIMAL).unwrap();
        c.dc_nodes.push(DcNode { id: 9, v_min: 0.95, v_max: 1.05 });
        let rep = validate_case(&c);
        assert_eq!(rep.violations.len(), 1);
        assert_eq!(rep.violations[0].rule, "DC grid must be connected");
    }

    #[test]
    fn inverted_bounds_is_one_violation() {
        let mut c = NetworkCase::from_toml_str(MINIMAL).unwrap();
        c.ac_nodes[1].v_min = 1.1;
        c.ac_nodes[1].v_max = 1.0;
        let rep = validate_case(&c);
        assert_eq!(rep.violations.len(), 1, "{rep:?}");
        assert_eq!(rep.violations[0].rule, "lower bound must not exceed upper bound");
    }

    #[test]
    fn toml_round_trip_is_identical() {
        let c = NetworkCase::fig4();
        let again = NetworkCase::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn si_round_trip() {
        let c = NetworkCase::fig4();
        let si = c.to_si();
        let back = NetworkCase::from_toml_str(&si.to_toml_string()).unwrap();
        let a = serde_json::to_value(&c).unwrap();
        let b = serde_json::to_value(&back).unwrap();
        assert_close(&a, &b);
        // and the physical values survive pu → si → pu → si
        let si2 = back.to_si();
        assert_close(&serde_json::to_value(&si).unwrap(), &serde_json::to_value(&si2).unwrap());
    }

    fn assert_close(a: &serde_json::Value, b: &serde_json::Value) {
        use serde_json::Value;
        match (a, b) {
            (Value::Number(x), Value::Number(y)) => {
                let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
                assert!((x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1e-300), "{x} vs {y}");
            }
            (Value::Array(x), Value::Array(y)) => {
                assert_eq!(x.len(), y.len());
                x.iter().zip(y).for_each(|(p, q)| assert_close(p, q));
            }
            (Value::Object(x), Value::Object(y)) => {
                assert_eq!(x.len(), y.len());
                for (k, v) in x {
                    assert_close(v, &y[k]);
                }
            }
            _ => assert_eq!(a, b),
        }
    }
}
