#![allow(dead_code)]

use mtdc_opf::case::NetworkCase;

/// Two AC buses (slack at 1) joined by `g + jb`, a load at bus 2, and a
/// two-terminal DC link whose first converter sits at bus 2.
pub fn two_bus(g: f64, b: f64, load_p: f64) -> NetworkCase {
    let text = format!(
        r#"
format_version = 1

[[ac_nodes]]
id = 1
slack = true

[[ac_nodes]]
id = 2
load_p = {load_p}

[[ac_branches]]
from = 1
to = 2
g = {g}
b = {b}

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
pcc = {{ ac = 2 }}
dc_node = 1
b_f = 0.08
a1 = 0.01
a2 = 0.0
a3 = 0.01
r_tf = 0.001
x_tf = 0.1
r_c = 0.001
x_c = 0.15
"#
    );
    NetworkCase::from_toml_str(&text).expect("valid two-bus case")
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}
