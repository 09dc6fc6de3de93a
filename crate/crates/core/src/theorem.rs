//! Per-circuit check of the SA-amenability theorem and its lemmas.

use serde::Serialize;

use crate::analysis::analyze;
use crate::cph::{CouplingBlocks, CphDae};
use crate::loopcut::{EdgePartition, Group};
use crate::netlist::Circuit;
use crate::sigma::{block_ranges, Offsets};

/// Offsets predicted in closed form: `c = 1` on the `f_C`, `f_l` rows and
/// `d = 1` on the storage columns, in Σ order, zeros for the outputs.
pub fn closed_form_offsets(p: &EdgePartition) -> Offsets {
    let sizes = |gs: &[Group]| gs.iter().map(|&g| p.size(g)).sum::<usize>();
    let (n_cap, n_c) = (p.size(Group::LinkC), p.size(Group::TreeC));
    let (n_l, n_ind) = (p.size(Group::TreeL), p.size(Group::LinkL));
    let n_res = sizes(&[Group::TreeR, Group::LinkR]);
    let n_out = sizes(&[Group::TreeV, Group::LinkI]);
    let mut c = Vec::new();
    c.extend(std::iter::repeat_n(1, n_cap));
    c.extend(std::iter::repeat_n(0, n_c));
    c.extend(std::iter::repeat_n(1, n_l));
    c.extend(std::iter::repeat_n(0, n_ind + n_res + n_out));
    let mut d = vec![1; n_cap + n_c + n_l + n_ind];
    d.extend(std::iter::repeat_n(0, n_res + n_out));
    Offsets { c, d }
}

/// Tree inductors whose fundamental cutset has no links. Such an inductor is
/// a bridge of the graph: its current is zero and its flux is algebraic, so
/// the `f_l` row gets `c = 0` and the flux column `d = 0`.
pub fn bridge_inductors(dae: &CphDae) -> Vec<usize> {
    let f = dae.loop_cutset();
    dae.partition()
        .edges(Group::TreeL)
        .iter()
        .copied()
        .filter(|&e| f.cutset_of(e).is_empty())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremCheck {
    pub edges: usize,
    pub hvt_value: i64,
    pub expected_value: i64,
    pub hvt_in_diagonal_blocks: bool,
    pub offsets_canonical: bool,
    pub singular_value_ratio: f64,
    pub det: f64,
    pub det_product: f64,
    pub index: u8,
    pub classifier_index: u8,
    pub sa_amenable: bool,
    pub bridge_inductors: Vec<String>,
    pub error: Option<String>,
}

impl TheoremCheck {
    /// Nonsingular Jacobian, HVT value and position, determinant product.
    pub fn sa_passed(&self) -> bool {
        self.error.is_none()
            && self.sa_amenable
            && self.hvt_value == self.expected_value
            && self.hvt_in_diagonal_blocks
            && self.det_relative_error() <= 1e-8
    }

    /// Everything in [`sa_passed`](Self::sa_passed), plus the closed-form
    /// offsets and the partition index formula.
    pub fn passed(&self) -> bool {
        self.sa_passed() && self.offsets_canonical && self.index == self.classifier_index
    }

    /// `|det J - prod det J_k| / |det J|`.
    pub fn det_relative_error(&self) -> f64 {
        (self.det - self.det_product).abs() / self.det.abs().max(f64::MIN_POSITIVE)
    }

    fn failed(edges: usize, msg: String) -> Self {
        TheoremCheck {
            edges,
            hvt_value: -1,
            expected_value: -1,
            hvt_in_diagonal_blocks: false,
            offsets_canonical: false,
            singular_value_ratio: 0.0,
            det: 0.0,
            det_product: 0.0,
            index: 0,
            classifier_index: 0,
            sa_amenable: false,
            bridge_inductors: Vec::new(),
            error: Some(msg),
        }
    }
}

pub fn check_circuit(circuit: &Circuit, coupling: Option<&CouplingBlocks>) -> TheoremCheck {
    let m = circuit.edge_count();
    let a = match analyze(circuit, coupling) {
        Ok(a) => a,
        Err(e) => return TheoremCheck::failed(m, e.to_string()),
    };
    let p = a.dae.partition();
    let st = &a.structure;
    let ranges = block_ranges(p);
    let block_of = |k: usize| ranges.iter().position(|&(s, n)| k >= s && k < s + n);
    TheoremCheck {
        edges: m,
        hvt_value: st.hvt.value,
        expected_value: (p.size(Group::TreeC) + p.size(Group::LinkL)) as i64,
        hvt_in_diagonal_blocks: st.hvt.cols.iter().enumerate().all(|(i, &j)| block_of(i) == block_of(j)),
        offsets_canonical: st.offsets == closed_form_offsets(p),
        singular_value_ratio: st.report.ratio,
        det: st.report.det,
        det_product: st.report.block_dets.iter().product(),
        index: st.index,
        classifier_index: a.report.classifier_index,
        sa_amenable: st.report.nonsingular(),
        bridge_inductors: bridge_inductors(&a.dae)
            .into_iter()
            .map(|e| p.label(e).to_string())
            .collect(),
        error: None,
    }
}
