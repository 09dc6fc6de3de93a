//! C++ residual function for the DAETS solver, in the layout of the reference
//! listing: element constants, port variables, then one residual per edge.

use std::fmt::Write;

use crate::cph::CphDae;
use crate::error::CphError;
use crate::netlist::{ElementKind, Param};

/// Identifiers the emitted function already uses.
const RESERVED: [&str; 11] = ["t", "x", "f", "v", "i", "T", "param", "fcn", "Diff", "sin", "cos"];

/// Width of the voltage half of each port-variable line.
const PORT_COLUMN: usize = 24;

fn literal(x: f64) -> String {
    // shortest representation that reads back to the same double
    let s = format!("{x}");
    if s.contains(['e', 'E']) || s.len() <= 24 {
        s
    } else {
        format!("{x:e}")
    }
}

fn term(sign: i64, name: &str, first: bool) -> String {
    match (sign, first) {
        (s, true) if s > 0 => format!(" {name}"),
        (s, _) if s < 0 => format!("-{name}"),
        _ => format!("+{name}"),
    }
}

/// Emits `template <typename T> void fcn(...)` for an uncoupled circuit.
/// Tree rows are written as `-(KCL residual)`, matching the reference listing.
pub fn generate(dae: &CphDae, name: &str) -> Result<String, CphError> {
    if dae.is_coupled() {
        return Err(CphError::Codegen("coupled element blocks are not supported".into()));
    }
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(CphError::Codegen(format!("invalid circuit name '{name}'")));
    }
    let c = dae.circuit();
    if let Some(el) = c.elements().iter().find(|e| RESERVED.contains(&e.label.as_str())) {
        return Err(CphError::Codegen(format!(
            "label '{}' collides with a name used in the generated code",
            el.label
        )));
    }
    let m = c.edge_count();
    let mut out = String::new();
    let w = &mut out;
    // fmt::Write into a String cannot fail
    let _ = writeln!(w, "template <typename T>");
    let _ = writeln!(w, "void fcn(T t, const T *x, T *f, void *param) {{");
    let _ = writeln!(w, "  // Function to specify circuit {name} for DAETS");
    for el in c.elements() {
        match &el.param {
            Param::Value(v) => {
                let _ = writeln!(w, "  const double {} = {};", el.label, literal(*v));
            }
            Param::Source(wf) => {
                let _ = writeln!(w, "  const auto {} = [](T t) -> T {{return {wf};}};", el.label);
            }
        }
    }
    let _ = writeln!(w, "  // Port variables");
    let _ = writeln!(w, "  T v[{m}], i[{m}];");
    for (k, el) in c.elements().iter().enumerate() {
        let l = &el.label;
        let (v, i) = match el.kind {
            ElementKind::Resistor => (format!("x[{k}]"), format!("x[{k}]/{l}")),
            ElementKind::VoltageSource => (format!("{l}(t)"), format!("x[{k}]")),
            ElementKind::Capacitor => (format!("x[{k}]/{l}"), format!("Diff(x[{k}],1)")),
            ElementKind::Inductor => (format!("Diff(x[{k}],1)"), format!("x[{k}]/{l}")),
            ElementKind::CurrentSource => (format!("x[{k}]"), format!("{l}(t)")),
        };
        let vpart = format!("v[{k}] = {v};");
        let width = PORT_COLUMN.max(vpart.len() + 1);
        let _ = writeln!(w, "  {vpart:<width$}i[{k}] = {i};");
    }
    let f = dae.loop_cutset();
    let list = |e: &[usize]| e.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
    let _ = writeln!(
        w,
        "  // Dirac structure, CpH model, tree={{{}}}, cotree={{{}}}",
        list(f.twigs()),
        list(f.links())
    );
    for e in 0..m {
        let mut line = format!("  f[{e}] = ");
        if f.twigs().contains(&e) {
            line += &term(-1, &format!("i[{e}]"), true);
            for (link, sign) in f.cutset_of(e) {
                line += &term(sign, &format!("i[{link}]"), false);
            }
        } else {
            line += &term(1, &format!("v[{e}]"), true);
            for (twig, sign) in f.loop_of(e) {
                line += &term(sign, &format!("v[{twig}]"), false);
            }
        }
        line.push(';');
        let _ = writeln!(w, "{line}");
    }
    let _ = writeln!(w, "}}");
    Ok(out)
}
