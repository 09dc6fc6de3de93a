//! Netlist parsing and the validated [`Circuit`] value.
//!
//! One element per line: `<LABEL> <from> <to> <param>`. The first letter of
//! the label selects the element kind. Passive parameters are decimals;
//! source parameters are waveform expressions in `t`. `#` starts a comment.

use std::collections::HashSet;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::waveform::Waveform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ElementKind {
    Capacitor,
    Inductor,
    Resistor,
    VoltageSource,
    CurrentSource,
}

impl ElementKind {
    pub const ALL: [ElementKind; 5] = [
        ElementKind::Capacitor,
        ElementKind::Inductor,
        ElementKind::Resistor,
        ElementKind::VoltageSource,
        ElementKind::CurrentSource,
    ];

    pub fn from_letter(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'C' => Some(ElementKind::Capacitor),
            'L' => Some(ElementKind::Inductor),
            'R' => Some(ElementKind::Resistor),
            'V' => Some(ElementKind::VoltageSource),
            'I' => Some(ElementKind::CurrentSource),
            _ => None,
        }
    }

    pub fn letter(self) -> char {
        match self {
            ElementKind::Capacitor => 'C',
            ElementKind::Inductor => 'L',
            ElementKind::Resistor => 'R',
            ElementKind::VoltageSource => 'V',
            ElementKind::CurrentSource => 'I',
        }
    }

    pub fn is_source(self) -> bool {
        matches!(self, ElementKind::VoltageSource | ElementKind::CurrentSource)
    }

    /// Name of the per-edge state variable: charge, flux linkage, current or voltage.
    pub fn state_symbol(self) -> &'static str {
        match self {
            ElementKind::Capacitor => "q",
            ElementKind::Inductor => "phi",
            ElementKind::VoltageSource => "i",
            ElementKind::CurrentSource | ElementKind::Resistor => "v",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Param {
    /// Capacitance (F), inductance (H) or resistance (ohm).
    Value(f64),
    Source(Waveform),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Element {
    pub label: String,
    pub kind: ElementKind,
    /// One-based start node.
    pub from: usize,
    /// One-based end node.
    pub to: usize,
    pub param: Param,
}

impl Element {
    /// Numeric parameter of a passive element.
    pub fn value(&self) -> Option<f64> {
        match &self.param {
            Param::Value(v) => Some(*v),
            Param::Source(_) => None,
        }
    }

    pub fn waveform(&self) -> Option<&Waveform> {
        match &self.param {
            Param::Source(w) => Some(w),
            Param::Value(_) => None,
        }
    }
}

/// A connected circuit graph; edge `k` (zero-based here) is the `k`-th element.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Circuit {
    nodes: usize,
    elements: Vec<Element>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetlistError {
    #[error("line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("line {line}: duplicate label '{label}'")]
    DuplicateLabel { line: usize, label: String },
    #[error("line {line}: element '{label}' is a self-loop on node {node}")]
    SelfLoop {
        line: usize,
        label: String,
        node: usize,
    },
    #[error("line {line}: element '{label}' must have a positive value, got {value}")]
    NonPositive {
        line: usize,
        label: String,
        value: f64,
    },
    #[error("netlist has no elements")]
    Empty,
    #[error("node {0} is not used by any element (node ids must be dense in 1..n)")]
    MissingNode(usize),
    #[error("circuit graph is disconnected: node {0} is unreachable from node 1")]
    Disconnected(usize),
}

impl Circuit {
    /// Builds a circuit from elements, enforcing the same invariants as the parser.
    pub fn new(elements: Vec<Element>) -> Result<Self, NetlistError> {
        let mut seen = HashSet::new();
        for (k, e) in elements.iter().enumerate() {
            let line = k + 1;
            if !seen.insert(e.label.clone()) {
                return Err(NetlistError::DuplicateLabel {
                    line,
                    label: e.label.clone(),
                });
            }
            if e.from == e.to {
                return Err(NetlistError::SelfLoop {
                    line,
                    label: e.label.clone(),
                    node: e.from,
                });
            }
            if e.from == 0 || e.to == 0 {
                return Err(NetlistError::Syntax {
                    line,
                    col: 1,
                    msg: "node ids start at 1".into(),
                });
            }
            match (&e.param, e.kind.is_source()) {
                (Param::Value(v), false) if !(*v > 0.0 && v.is_finite()) => {
                    return Err(NetlistError::NonPositive {
                        line,
                        label: e.label.clone(),
                        value: *v,
                    })
                }
                (Param::Value(_), true) | (Param::Source(_), false) => {
                    return Err(NetlistError::Syntax {
                        line,
                        col: 1,
                        msg: format!("parameter type does not match element '{}'", e.label),
                    })
                }
                _ => {}
            }
        }
        if elements.is_empty() {
            return Err(NetlistError::Empty);
        }
        let nodes = elements.iter().map(|e| e.from.max(e.to)).max().unwrap_or(0);
        let mut used = vec![false; nodes + 1];
        for e in &elements {
            used[e.from] = true;
            used[e.to] = true;
        }
        if let Some(missing) = (1..=nodes).find(|&k| !used[k]) {
            return Err(NetlistError::MissingNode(missing));
        }
        let circuit = Circuit { nodes, elements };
        if let Some(node) = circuit.unreachable_node() {
            return Err(NetlistError::Disconnected(node));
        }
        Ok(circuit)
    }

    fn unreachable_node(&self) -> Option<usize> {
        let mut adj = vec![Vec::new(); self.nodes + 1];
        for e in &self.elements {
            adj[e.from].push(e.to);
            adj[e.to].push(e.from);
        }
        let mut seen = vec![false; self.nodes + 1];
        let mut stack = vec![1];
        seen[1] = true;
        while let Some(u) = stack.pop() {
            for &w in &adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        (1..=self.nodes).find(|&k| !seen[k])
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn edge_count(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn element(&self, edge: usize) -> &Element {
        &self.elements[edge]
    }

    pub fn kinds(&self) -> Vec<ElementKind> {
        self.elements.iter().map(|e| e.kind).collect()
    }

    pub fn labels(&self) -> Vec<String> {
        self.elements.iter().map(|e| e.label.clone()).collect()
    }

    pub fn edge_by_label(&self, label: &str) -> Option<usize> {
        self.elements.iter().position(|e| e.label == label)
    }

    pub fn count(&self, kind: ElementKind) -> usize {
        self.elements.iter().filter(|e| e.kind == kind).count()
    }
}

impl fmt::Display for Circuit {
    /// Serializes back to netlist text that parses to an equal circuit.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.elements {
            match &e.param {
                Param::Value(v) => writeln!(f, "{} {} {} {}", e.label, e.from, e.to, v)?,
                Param::Source(w) => writeln!(f, "{} {} {} {}", e.label, e.from, e.to, w)?,
            }
        }
        Ok(())
    }
}

fn syntax(line: usize, col: usize, msg: impl Into<String>) -> NetlistError {
    NetlistError::Syntax {
        line,
        col,
        msg: msg.into(),
    }
}

/// Splits off the next whitespace-delimited token, returning it with its byte offset.
fn next_token(s: &str, from: usize) -> Option<(usize, &str)> {
    let rest = &s[from..];
    let start = from + (rest.len() - rest.trim_start().len());
    let tail = &s[start..];
    if tail.is_empty() {
        return None;
    }
    let len = tail.find(char::is_whitespace).unwrap_or(tail.len());
    Some((start, &tail[..len]))
}

pub fn parse_netlist(text: &str) -> Result<Circuit, NetlistError> {
    let mut elements = Vec::new();
    let mut seen = HashSet::new();
    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = raw.split('#').next().unwrap_or("");
        let Some((label_at, label)) = next_token(line, 0) else {
            continue;
        };
        let mut chars = label.chars();
        let first = chars.next().unwrap_or(' ');
        let kind = ElementKind::from_letter(first).ok_or_else(|| {
            syntax(
                line_no,
                label_at + 1,
                format!("unknown element letter '{first}' in '{label}'"),
            )
        })?;
        if !chars.all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(syntax(
                line_no,
                label_at + 1,
                format!("label '{label}' must be alphanumeric"),
            ));
        }
        let mut cursor = label_at + label.len();
        let mut node = |what: &str| -> Result<usize, NetlistError> {
            let (at, tok) = next_token(line, cursor)
                .ok_or_else(|| syntax(line_no, line.len() + 1, format!("missing {what} node")))?;
            cursor = at + tok.len();
            let id: usize = tok
                .parse()
                .map_err(|_| syntax(line_no, at + 1, format!("bad {what} node '{tok}'")))?;
            if id == 0 {
                return Err(syntax(line_no, at + 1, "node ids start at 1"));
            }
            Ok(id)
        };
        let from = node("start")?;
        let to = node("end")?;
        let rest = &line[cursor..];
        let param_at = cursor + (rest.len() - rest.trim_start().len());
        let param_text = rest.trim();
        if param_text.is_empty() {
            return Err(syntax(line_no, line.len() + 1, "missing parameter"));
        }
        let param = if kind.is_source() {
            let w = Waveform::parse(param_text)
                .map_err(|e| syntax(line_no, param_at + e.col, e.msg))?;
            Param::Source(w)
        } else {
            if param_text.contains(char::is_whitespace) {
                return Err(syntax(line_no, param_at + 1, "trailing input after value"));
            }
            let v: f64 = param_text.parse().map_err(|_| {
                syntax(
                    line_no,
                    param_at + 1,
                    format!("bad value '{param_text}'"),
                )
            })?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(NetlistError::NonPositive {
                    line: line_no,
                    label: label.to_string(),
                    value: v,
                });
            }
            Param::Value(v)
        };
        if from == to {
            return Err(NetlistError::SelfLoop {
                line: line_no,
                label: label.to_string(),
                node: from,
            });
        }
        if !seen.insert(label.to_string()) {
            return Err(NetlistError::DuplicateLabel {
                line: line_no,
                label: label.to_string(),
            });
        }
        elements.push(Element {
            label: label.to_string(),
            kind,
            from,
            to,
            param,
        });
    }
    Circuit::new(elements)
}

/// The 8-edge, 5-node running example used throughout the test suites.
pub const P8BY5: &str = "\
# 8-edge, 5-node example circuit
R1 1 2 0.8666
V2 1 3 cos(t)
C3 1 4 0.50689
L4 1 5 0.91901
R5 2 3 0.58256
C6 3 4 0.48617
L7 4 5 0.57219
I8 5 2 2*sin(3*t)
";
