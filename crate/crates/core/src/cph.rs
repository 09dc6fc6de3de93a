//! Assembly of the compact port-Hamiltonian DAE.
//!
//! Every edge carries one state: charge for capacitors, flux linkage for
//! inductors, current for voltage sources and voltage for current sources and
//! resistors. Edge voltages and currents are affine in `(x, x')` and the source
//! waveforms; the residual is KCL across each twig's cutset and KVL round each
//! link's loop.
//!
//! Vectors passed to the evaluators are indexed by edge number (`x[e]` is the
//! state of edge `e`). Residual `f[e]` is the equation owned by edge `e`.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::CphError;
use crate::graph::{incidence_matrix, optimal_tree};
use crate::loopcut::{
    block_view, compute_f, partition_edges, BlockF, EdgePartition, Group, LoopCutsetMatrix,
};
use crate::netlist::{Circuit, ElementKind};
use crate::waveform::Waveform;

/// A symmetric matrix over a named subset of elements, as given in a sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledBlock {
    pub rows: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
}

/// Optional coupled element blocks. Elements not named in a block keep their
/// scalar netlist value and are uncoupled from everything else.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingBlocks {
    /// Capacitance matrix (farads) over capacitor labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacitance: Option<LabeledBlock>,
    /// Inductance matrix (henries) over inductor labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inductance: Option<LabeledBlock>,
    /// Conductance matrix (siemens) over resistor labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conductance: Option<LabeledBlock>,
}

impl CouplingBlocks {
    pub fn from_json(text: &str) -> Result<Self, CphError> {
        serde_json::from_str(text).map_err(|e| CphError::Config(e.to_string()))
    }

    pub fn is_empty(&self) -> bool {
        self.capacitance.is_none() && self.inductance.is_none() && self.conductance.is_none()
    }
}

/// One element family (capacitors, inductors or resistors) with its parameter
/// matrix and the matrix mapping states to port quantities.
#[derive(Debug, Clone)]
pub struct Family {
    edges: Vec<usize>,
    pos: HashMap<usize, usize>,
    /// Capacitance, inductance or conductance.
    param: DMatrix<f64>,
    /// Hessian of H for storage families (inverse of `param`); `param` itself for resistors.
    port: DMatrix<f64>,
    /// Structural nonzero pattern of `port`.
    pattern: Vec<Vec<bool>>,
}

impl Family {
    fn build(
        circuit: &Circuit,
        kind: ElementKind,
        block: Option<&LabeledBlock>,
        name: &str,
    ) -> Result<Family, CphError> {
        let edges: Vec<usize> = (0..circuit.edge_count())
            .filter(|&e| circuit.element(e).kind == kind)
            .collect();
        let pos: HashMap<usize, usize> = edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let k = edges.len();
        let mut param = DMatrix::zeros(k, k);
        for (i, &e) in edges.iter().enumerate() {
            let v = circuit.element(e).value().unwrap_or(f64::NAN);
            param[(i, i)] = if kind == ElementKind::Resistor { 1.0 / v } else { v };
        }
        if let Some(b) = block {
            let idx: Vec<usize> = b
                .rows
                .iter()
                .map(|l| {
                    circuit
                        .edge_by_label(l)
                        .filter(|&e| circuit.element(e).kind == kind)
                        .map(|e| pos[&e])
                        .ok_or_else(|| {
                            CphError::Coupling(format!("{name}: '{l}' is not a {kind:?} label"))
                        })
                })
                .collect::<Result<_, _>>()?;
            let mut uniq = idx.clone();
            uniq.sort_unstable();
            uniq.dedup();
            if uniq.len() != idx.len() {
                return Err(CphError::Coupling(format!("{name}: repeated label")));
            }
            if b.matrix.len() != idx.len() || b.matrix.iter().any(|r| r.len() != idx.len()) {
                return Err(CphError::Coupling(format!(
                    "{name}: matrix must be {n}x{n}",
                    n = idx.len()
                )));
            }
            for (a, &i) in idx.iter().enumerate() {
                for (c, &j) in idx.iter().enumerate() {
                    let v = b.matrix[a][c];
                    let vt = b.matrix[c][a];
                    if !v.is_finite() || (v - vt).abs() > 1e-12 * (v.abs() + vt.abs()) {
                        return Err(CphError::Coupling(format!("{name}: matrix is not symmetric")));
                    }
                    param[(i, j)] = v;
                }
            }
        }
        let chol = param.clone().cholesky().ok_or_else(|| {
            CphError::Coupling(format!("{name}: matrix is not positive definite"))
        })?;
        let port = if kind == ElementKind::Resistor {
            param.clone()
        } else {
            chol.inverse()
        };
        let pattern = if kind == ElementKind::Resistor {
            (0..k)
                .map(|i| (0..k).map(|j| param[(i, j)] != 0.0).collect())
                .collect()
        } else {
            cluster_pattern(&param)
        };
        Ok(Family {
            edges,
            pos,
            param,
            port,
            pattern,
        })
    }

    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    pub fn param(&self) -> &DMatrix<f64> {
        &self.param
    }

    pub fn port(&self) -> &DMatrix<f64> {
        &self.port
    }

    /// Sub-block of the port matrix for edge lists `rows` x `cols`.
    pub fn port_block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
            self.port[(self.pos[&rows[i]], self.pos[&cols[j]])]
        })
    }

    fn is_coupled(&self) -> bool {
        let k = self.edges.len();
        (0..k).any(|i| (0..k).any(|j| i != j && self.param[(i, j)] != 0.0))
    }

    /// `port * x` restricted to one edge, as a linear expression in the family's states.
    fn row_expr(&self, edge: usize, order: u8) -> LinExpr {
        let i = self.pos[&edge];
        let mut e = LinExpr::default();
        for (j, &other) in self.edges.iter().enumerate() {
            if self.pattern[i][j] {
                e.terms.insert((other, order), self.port[(i, j)]);
            }
        }
        e
    }

    fn quadratic(&self, x: &[f64]) -> f64 {
        let v: Vec<f64> = self.edges.iter().map(|&e| x[e]).collect();
        let mut s = 0.0;
        for i in 0..v.len() {
            for j in 0..v.len() {
                s += v[i] * self.port[(i, j)] * v[j];
            }
        }
        0.5 * s
    }
}

/// Parameter matrix of one element family (capacitance, inductance or
/// conductance) over the family's edges, with any sidecar block applied.
pub fn element_matrix(
    circuit: &Circuit,
    kind: ElementKind,
    coupling: Option<&CouplingBlocks>,
) -> Result<(Vec<usize>, DMatrix<f64>), CphError> {
    let (block, name) = match kind {
        ElementKind::Capacitor => (coupling.and_then(|c| c.capacitance.as_ref()), "capacitance"),
        ElementKind::Inductor => (coupling.and_then(|c| c.inductance.as_ref()), "inductance"),
        ElementKind::Resistor => (coupling.and_then(|c| c.conductance.as_ref()), "conductance"),
        _ => return Err(CphError::Coupling(format!("{kind:?} has no parameter matrix"))),
    };
    let f = Family::build(circuit, kind, block, name)?;
    Ok((f.edges, f.param))
}

/// Entries of an SPD matrix's inverse that are structurally nonzero: pairs in the
/// same connected component of the matrix's nonzero graph.
fn cluster_pattern(m: &DMatrix<f64>) -> Vec<Vec<bool>> {
    let k = m.nrows();
    let mut comp: Vec<usize> = (0..k).collect();
    fn root(c: &mut [usize], mut x: usize) -> usize {
        while c[x] != x {
            c[x] = c[c[x]];
            x = c[x];
        }
        x
    }
    for i in 0..k {
        for j in 0..k {
            if m[(i, j)] != 0.0 {
                let (a, b) = (root(&mut comp, i), root(&mut comp, j));
                comp[a] = b;
            }
        }
    }
    let roots: Vec<usize> = (0..k).map(|i| root(&mut comp, i)).collect();
    (0..k)
        .map(|i| (0..k).map(|j| roots[i] == roots[j]).collect())
        .collect()
}

/// Affine expression: `sum coef * x_e^(order) + sum coef * w_s(t)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    /// Keyed by `(edge, derivative order)`; presence is structural, the value may be 0.
    pub terms: BTreeMap<(usize, u8), f64>,
    /// Keyed by source edge.
    pub sources: BTreeMap<usize, f64>,
}

impl LinExpr {
    fn state(edge: usize, order: u8) -> Self {
        let mut e = LinExpr::default();
        e.terms.insert((edge, order), 1.0);
        e
    }

    fn source(edge: usize) -> Self {
        let mut e = LinExpr::default();
        e.sources.insert(edge, 1.0);
        e
    }

    fn add_scaled(&mut self, other: &LinExpr, k: f64) {
        for (&key, &v) in &other.terms {
            *self.terms.entry(key).or_insert(0.0) += k * v;
        }
        for (&key, &v) in &other.sources {
            *self.sources.entry(key).or_insert(0.0) += k * v;
        }
    }

    /// Highest derivative order of `edge`'s state, if it occurs.
    pub fn order_of(&self, edge: usize) -> Option<u8> {
        self.terms
            .keys()
            .filter(|(e, _)| *e == edge)
            .map(|&(_, o)| o)
            .max()
    }

    pub fn coefficient(&self, edge: usize, order: u8) -> f64 {
        self.terms.get(&(edge, order)).copied().unwrap_or(0.0)
    }

    pub fn eval(&self, x: &[f64], xdot: &[f64], sources: &[f64]) -> f64 {
        let mut s = 0.0;
        for (&(e, o), &v) in &self.terms {
            s += v * if o == 0 { x[e] } else { xdot[e] };
        }
        for (&e, &v) in &self.sources {
            s += v * sources[e];
        }
        s
    }
}

/// State ordering by partition group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StateLayout {
    /// All edges in the order `c, l, v, r, L, C, I, R`.
    pub full: Vec<usize>,
    /// The same without the source edges `v` and `I`.
    pub reduced: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct CphDae {
    circuit: Circuit,
    f: LoopCutsetMatrix,
    blocks: BlockF,
    partition: EdgePartition,
    caps: Family,
    inds: Family,
    ress: Family,
    volt: Vec<LinExpr>,
    curr: Vec<LinExpr>,
    residuals: Vec<LinExpr>,
    waveforms: Vec<Option<Waveform>>,
    coupled: bool,
}

/// Incidence matrix, optimal tree, F, partition and assembly in one call.
pub fn build_dae(circuit: &Circuit, coupling: Option<&CouplingBlocks>) -> Result<CphDae, CphError> {
    let a = incidence_matrix(circuit);
    let kinds = circuit.kinds();
    let td = optimal_tree(&a, &kinds)?;
    let f = compute_f(&a, &td)?;
    let p = partition_edges(&td, &kinds, &circuit.labels())?;
    assemble_dae(circuit, &f, &p, coupling)
}

pub fn assemble_dae(
    circuit: &Circuit,
    f: &LoopCutsetMatrix,
    partition: &EdgePartition,
    coupling: Option<&CouplingBlocks>,
) -> Result<CphDae, CphError> {
    let m = circuit.edge_count();
    if f.links().len() + f.twigs().len() != m || partition.edge_count() != m {
        return Err(CphError::Dimension(format!(
            "circuit has {m} edges, F covers {}, partition {}",
            f.links().len() + f.twigs().len(),
            partition.edge_count()
        )));
    }
    let blocks = block_view(f, partition)?;
    let caps = Family::build(
        circuit,
        ElementKind::Capacitor,
        coupling.and_then(|c| c.capacitance.as_ref()),
        "capacitance",
    )?;
    let inds = Family::build(
        circuit,
        ElementKind::Inductor,
        coupling.and_then(|c| c.inductance.as_ref()),
        "inductance",
    )?;
    let ress = Family::build(
        circuit,
        ElementKind::Resistor,
        coupling.and_then(|c| c.conductance.as_ref()),
        "conductance",
    )?;

    let mut volt = Vec::with_capacity(m);
    let mut curr = Vec::with_capacity(m);
    for e in 0..m {
        let (v, i) = match circuit.element(e).kind {
            ElementKind::Capacitor => (caps.row_expr(e, 0), LinExpr::state(e, 1)),
            ElementKind::Inductor => (LinExpr::state(e, 1), inds.row_expr(e, 0)),
            ElementKind::Resistor => (LinExpr::state(e, 0), ress.row_expr(e, 0)),
            ElementKind::VoltageSource => (LinExpr::source(e), LinExpr::state(e, 0)),
            ElementKind::CurrentSource => (LinExpr::state(e, 0), LinExpr::source(e)),
        };
        volt.push(v);
        curr.push(i);
    }

    let mut residuals = vec![LinExpr::default(); m];
    for &twig in f.twigs() {
        let mut r = curr[twig].clone();
        for (link, sign) in f.cutset_of(twig) {
            r.add_scaled(&curr[link], -(sign as f64));
        }
        residuals[twig] = r;
    }
    for &link in f.links() {
        let mut r = volt[link].clone();
        for (twig, sign) in f.loop_of(link) {
            r.add_scaled(&volt[twig], sign as f64);
        }
        residuals[link] = r;
    }

    let waveforms = circuit
        .elements()
        .iter()
        .map(|e| e.waveform().cloned())
        .collect();
    let coupled = coupling.is_some_and(|c| !c.is_empty())
        || caps.is_coupled()
        || inds.is_coupled()
        || ress.is_coupled();
    Ok(CphDae {
        circuit: circuit.clone(),
        f: f.clone(),
        blocks,
        partition: partition.clone(),
        caps,
        inds,
        ress,
        volt,
        curr,
        residuals,
        waveforms,
        coupled,
    })
}

impl CphDae {
    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    pub fn loop_cutset(&self) -> &LoopCutsetMatrix {
        &self.f
    }

    pub fn blocks(&self) -> &BlockF {
        &self.blocks
    }

    pub fn partition(&self) -> &EdgePartition {
        &self.partition
    }

    pub fn edge_count(&self) -> usize {
        self.circuit.edge_count()
    }

    pub fn capacitors(&self) -> &Family {
        &self.caps
    }

    pub fn inductors(&self) -> &Family {
        &self.inds
    }

    pub fn resistors(&self) -> &Family {
        &self.ress
    }

    /// True when a sidecar was applied or any family has off-diagonal coupling.
    pub fn is_coupled(&self) -> bool {
        self.coupled
    }

    pub fn layout(&self) -> StateLayout {
        let p = &self.partition;
        StateLayout {
            full: p.concat(&Group::ALL),
            reduced: p.concat(&[
                Group::TreeC,
                Group::TreeL,
                Group::TreeR,
                Group::LinkL,
                Group::LinkC,
                Group::LinkR,
            ]),
        }
    }

    /// Voltage expression of an edge.
    pub fn voltage_expr(&self, edge: usize) -> &LinExpr {
        &self.volt[edge]
    }

    pub fn current_expr(&self, edge: usize) -> &LinExpr {
        &self.curr[edge]
    }

    /// Residual expression owned by an edge (KCL for twigs, KVL for links).
    pub fn residual_expr(&self, edge: usize) -> &LinExpr {
        &self.residuals[edge]
    }

    pub fn waveform(&self, edge: usize) -> Option<&Waveform> {
        self.waveforms[edge].as_ref()
    }

    /// Source values `w_e(t)` indexed by edge (zero for non-sources).
    pub fn source_values(&self, t: f64) -> Vec<f64> {
        self.waveforms
            .iter()
            .map(|w| w.as_ref().map_or(0.0, |w| w.eval(t)))
            .collect()
    }

    fn check_dims(&self, x: &[f64], xdot: &[f64]) -> Result<(), CphError> {
        let m = self.edge_count();
        if x.len() != m || xdot.len() != m {
            return Err(CphError::Dimension(format!(
                "expected state vectors of length {m}, got {} and {}",
                x.len(),
                xdot.len()
            )));
        }
        Ok(())
    }

    /// Edge voltages and currents.
    pub fn eval_ports(
        &self,
        t: f64,
        x: &[f64],
        xdot: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>), CphError> {
        self.check_dims(x, xdot)?;
        let w = self.source_values(t);
        let v = self.volt.iter().map(|e| e.eval(x, xdot, &w)).collect();
        let i = self.curr.iter().map(|e| e.eval(x, xdot, &w)).collect();
        Ok((v, i))
    }

    /// All `m` residuals, indexed by owning edge.
    pub fn residual(&self, t: f64, x: &[f64], xdot: &[f64]) -> Result<Vec<f64>, CphError> {
        self.check_dims(x, xdot)?;
        let w = self.source_values(t);
        Ok(self.residuals.iter().map(|e| e.eval(x, xdot, &w)).collect())
    }

    /// Voltage-source currents and current-source voltages, recovered from the
    /// KCL rows of `v` twigs and KVL rows of `I` links. The returned vectors
    /// follow the partition order of `v` and `I`.
    pub fn output_variables(
        &self,
        t: f64,
        x: &[f64],
        xdot: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>), CphError> {
        self.check_dims(x, xdot)?;
        let w = self.source_values(t);
        let solve = |e: usize| {
            let row = &self.residuals[e];
            let own = row.coefficient(e, 0);
            let rest = row.eval(x, xdot, &w) - own * x[e];
            -rest / own
        };
        let xv = self.partition.edges(Group::TreeV).iter().map(|&e| solve(e)).collect();
        let xi = self.partition.edges(Group::LinkI).iter().map(|&e| solve(e)).collect();
        Ok((xv, xi))
    }

    /// Stored energy `1/2 q^T C^{-1} q + 1/2 phi^T L^{-1} phi`.
    pub fn hamiltonian(&self, x: &[f64]) -> f64 {
        self.caps.quadratic(x) + self.inds.quadratic(x)
    }

    /// `dH/dx` per edge: capacitor voltages and inductor currents, zero elsewhere.
    pub fn hamiltonian_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.edge_count()];
        for fam in [&self.caps, &self.inds] {
            for (i, &e) in fam.edges.iter().enumerate() {
                g[e] = fam
                    .edges
                    .iter()
                    .enumerate()
                    .map(|(j, &k)| fam.port[(i, j)] * x[k])
                    .sum();
            }
        }
        g
    }

    /// Column-style name of an edge's state, e.g. `q_C6`, `phi_L7`, `v_R5`.
    pub fn state_label(&self, edge: usize) -> String {
        let e = self.circuit.element(edge);
        format!("{}_{}", e.kind.state_symbol(), e.label)
    }
}
