//! Structural analysis by the signature-matrix method: signature matrix,
//! highest-value transversal, canonical offsets, System Jacobian, DOF and index.

use nalgebra::DMatrix;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};
use serde_json::{json, Value};

use crate::assign::max_weight_assignment;
use crate::cph::CphDae;
use crate::error::CphError;
use crate::loopcut::{EdgePartition, Group};

/// Reduced equation and variable order.
pub const SIGMA_GROUPS: [Group; 6] = [
    Group::LinkC,
    Group::TreeC,
    Group::TreeL,
    Group::LinkL,
    Group::TreeR,
    Group::LinkR,
];

/// Smallest admissible `sigma_min / sigma_max` of the System Jacobian.
pub const SINGULAR_RATIO: f64 = 1e-10;

/// `sigma[i][j]` is the highest derivative order of variable `j` in equation `i`;
/// `None` stands for minus infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureMatrix {
    /// Edge owning each equation.
    pub rows: Vec<usize>,
    /// Edge whose state each column holds.
    pub cols: Vec<usize>,
    pub entries: Vec<Vec<Option<i32>>>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
}

impl SignatureMatrix {
    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<i32> {
        self.entries[i][j]
    }

    /// Entries with `-inf` written as the string `"-inf"`.
    pub fn entries_json(&self) -> Value {
        Value::Array(
            self.entries
                .iter()
                .map(|r| {
                    Value::Array(
                        r.iter()
                            .map(|e| e.map_or_else(|| json!("-inf"), |v| json!(v)))
                            .collect(),
                    )
                })
                .collect(),
        )
    }
}

impl Serialize for SignatureMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("SignatureMatrix", 3)?;
        st.serialize_field("rows", &self.row_labels)?;
        st.serialize_field("cols", &self.col_labels)?;
        st.serialize_field("entries", &self.entries_json())?;
        st.end()
    }
}

fn sigma_over(dae: &CphDae, groups: &[Group]) -> SignatureMatrix {
    let p = dae.partition();
    let edges = p.concat(groups);
    let entries = edges
        .iter()
        .map(|&row| {
            let expr = dae.residual_expr(row);
            edges
                .iter()
                .map(|&col| expr.order_of(col).map(i32::from))
                .collect()
        })
        .collect();
    let c = dae.circuit();
    SignatureMatrix {
        row_labels: edges.iter().map(|&e| format!("f_{}", p.role_label(e))).collect(),
        col_labels: edges
            .iter()
            .map(|&e| format!("{}_{}", c.element(e).kind.state_symbol(), p.role_label(e)))
            .collect(),
        rows: edges.clone(),
        cols: edges,
        entries,
    }
}

/// Signature matrix of the reduced system, rows and columns in `C, c, l, L, r, R` order.
pub fn build_sigma(dae: &CphDae) -> SignatureMatrix {
    sigma_over(dae, &SIGMA_GROUPS)
}

/// The same with the output variables appended: `v` then `I`.
pub fn build_display_sigma(dae: &CphDae) -> SignatureMatrix {
    let mut groups = SIGMA_GROUPS.to_vec();
    groups.extend([Group::TreeV, Group::LinkI]);
    sigma_over(dae, &groups)
}

/// A transversal given as the column chosen for each row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Transversal {
    pub cols: Vec<usize>,
    pub value: i64,
}

/// Highest-value transversal, or an error when every transversal meets `-inf`.
pub fn find_hvt(sigma: &SignatureMatrix) -> Result<Transversal, CphError> {
    let w: Vec<Vec<Option<i64>>> = sigma
        .entries
        .iter()
        .map(|r| r.iter().map(|e| e.map(i64::from)).collect())
        .collect();
    let (cols, value) = max_weight_assignment(&w).ok_or(CphError::StructurallyIllPosed)?;
    Ok(Transversal { cols, value })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Offsets {
    pub c: Vec<i64>,
    pub d: Vec<i64>,
}

impl Offsets {
    /// `d_j - c_i >= sigma_ij` everywhere and `c >= 0`.
    pub fn is_valid(&self, sigma: &SignatureMatrix) -> bool {
        self.c.iter().all(|&c| c >= 0)
            && sigma.entries.iter().enumerate().all(|(i, r)| {
                r.iter()
                    .enumerate()
                    .all(|(j, e)| e.is_none_or(|s| self.d[j] - self.c[i] >= i64::from(s)))
            })
    }

    pub fn dof(&self) -> i64 {
        self.d.iter().sum::<i64>() - self.c.iter().sum::<i64>()
    }

    /// Largest `c_i`, plus one if some `d_j` among the first `vars` columns is zero.
    pub fn index_over(&self, vars: usize) -> u8 {
        let max_c = self.c.iter().copied().max().unwrap_or(0);
        (max_c + i64::from(self.d[..vars].contains(&0))) as u8
    }
}

/// Smallest offsets by the fixed-point iteration started from `c = 0`.
pub fn canonical_offsets(sigma: &SignatureMatrix, hvt: &Transversal) -> Offsets {
    let n = sigma.size();
    let mut c = vec![0i64; n];
    loop {
        let d: Vec<i64> = (0..n)
            .map(|j| {
                (0..n)
                    .filter_map(|i| sigma.entries[i][j].map(|s| i64::from(s) + c[i]))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let next: Vec<i64> = (0..n)
            .map(|i| {
                let j = hvt.cols[i];
                d[j] - i64::from(sigma.entries[i][j].expect("finite transversal"))
            })
            .collect();
        if next == c {
            return Offsets { c, d };
        }
        c = next;
    }
}

/// `J_ij` is the coefficient of `x_j^(d_j - c_i)` in `f_i`. The circuits are
/// linear, so `J` does not depend on `(t, x, x')`.
pub fn system_jacobian(dae: &CphDae, sigma: &SignatureMatrix, offsets: &Offsets) -> DMatrix<f64> {
    let n = sigma.size();
    DMatrix::from_fn(n, n, |i, j| {
        let k = offsets.d[j] - offsets.c[i];
        if (0..=1).contains(&k) {
            dae.residual_expr(sigma.rows[i])
                .coefficient(sigma.cols[j], k as u8)
        } else {
            0.0
        }
    })
}

/// `P = [[M11 - N^T M21, M12 - N^T M22], [N, I]]` where `N` is `n2 x n1` and `M`
/// is split after row/column `n1`.
pub fn bordered(m: &DMatrix<f64>, n: &DMatrix<f64>) -> DMatrix<f64> {
    let (n2, n1) = n.shape();
    assert_eq!(m.shape(), (n1 + n2, n1 + n2), "bordered: dimension mismatch");
    let nt = n.transpose();
    let top = m.rows(0, n1) - &nt * m.rows(n1, n2);
    let mut p = DMatrix::zeros(n1 + n2, n1 + n2);
    p.rows_mut(0, n1).copy_from(&top);
    p.view_mut((n1, 0), (n2, n1)).copy_from(n);
    p.view_mut((n1, n1), (n2, n2)).fill_with_identity();
    p
}

fn block_f(dae: &CphDae, link: Group, twig: Group) -> DMatrix<f64> {
    dae.blocks().block(link, twig).to_f64()
}

/// The three diagonal blocks of `J` built directly from the element matrices and F.
pub fn closed_form_blocks(dae: &CphDae) -> [DMatrix<f64>; 3] {
    let p = dae.partition();
    let cap = p.concat(&[Group::LinkC, Group::TreeC]);
    let ind = p.concat(&[Group::TreeL, Group::LinkL]);
    let res = p.concat(&[Group::TreeR, Group::LinkR]);
    let j_c = bordered(
        &dae.capacitors().port_block(&cap, &cap),
        &(-block_f(dae, Group::LinkC, Group::TreeC).transpose()),
    );
    let j_l = bordered(
        &dae.inductors().port_block(&ind, &ind),
        &block_f(dae, Group::LinkL, Group::TreeL),
    );
    let j_g = bordered(
        &dae.resistors().port_block(&res, &res),
        &block_f(dae, Group::LinkR, Group::TreeR),
    );
    [j_c, j_l, j_g]
}

/// `(start, len)` of the capacitor, inductor, resistor and output blocks in Σ order.
pub fn block_ranges(p: &EdgePartition) -> [(usize, usize); 4] {
    let nc = p.size(Group::LinkC) + p.size(Group::TreeC);
    let nl = p.size(Group::TreeL) + p.size(Group::LinkL);
    let nr = p.size(Group::TreeR) + p.size(Group::LinkR);
    let no = p.size(Group::TreeV) + p.size(Group::LinkI);
    [(0, nc), (nc, nl), (nc + nl, nr), (nc + nl + nr, no)]
}

/// `sigma_min / sigma_max`; 1 for an empty matrix.
pub fn singular_ratio(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.singular_values();
    let max = sv.max();
    if max == 0.0 {
        0.0
    } else {
        sv.min() / max
    }
}

/// Index predicted from the partition alone: 0, 1 or 2.
pub fn classify_index(p: &EdgePartition) -> u8 {
    let a = p.size(Group::LinkC) == 0 && p.size(Group::TreeL) == 0;
    let b = p.size(Group::TreeR) == 0 && p.size(Group::LinkR) == 0;
    u8::from(!a) + u8::from(!b)
}

pub const BLOCK_NAMES: [&str; 3] = ["J_C", "J_L", "J_G"];

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianReport {
    pub det: f64,
    pub ratio: f64,
    pub block_dets: [f64; 3],
    pub block_ratios: [f64; 3],
}

impl JacobianReport {
    pub fn nonsingular(&self) -> bool {
        self.ratio > SINGULAR_RATIO
    }
}

/// Analysis of the system with the output variables `x_v`, `x_I` kept as
/// unknowns (last rows and columns of `sigma`). Including them makes the
/// canonical offsets follow the block pattern even when a capacitor link's loop
/// or an inductor twig's cutset meets only sources. An inductor twig with an
/// empty cutset still gets `c = 0`.
#[derive(Debug, Clone)]
pub struct StructuralResult {
    pub sigma: SignatureMatrix,
    /// Number of leading rows/columns belonging to the reduced system.
    pub reduced: usize,
    pub hvt: Transversal,
    pub offsets: Offsets,
    pub dof: i64,
    pub index: u8,
    pub jacobian: DMatrix<f64>,
    /// `J_C`, `J_L`, `J_G` cut from the diagonal of `jacobian`.
    pub blocks: [DMatrix<f64>; 3],
    pub report: JacobianReport,
}

fn det(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        1.0
    } else {
        m.determinant()
    }
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Full structural analysis. Fails if there is no finite transversal, if its
/// value differs from `n_c + n_L`, or if `J` is singular. The index is taken
/// over the reduced system.
pub fn analyze_structure(dae: &CphDae) -> Result<StructuralResult, CphError> {
    let sigma = build_display_sigma(dae);
    let hvt = find_hvt(&sigma)?;
    let p = dae.partition();
    let expected = (p.size(Group::TreeC) + p.size(Group::LinkL)) as i64;
    if hvt.value != expected {
        return Err(CphError::TransversalValue {
            found: hvt.value,
            expected,
        });
    }
    let offsets = canonical_offsets(&sigma, &hvt);
    let jacobian = system_jacobian(dae, &sigma, &offsets);
    let r = block_ranges(p);
    let reduced = r[3].0;
    let blocks = [r[0], r[1], r[2]].map(|(s, n)| jacobian.view((s, s), (n, n)).into_owned());
    let report = JacobianReport {
        det: det(&jacobian),
        ratio: singular_ratio(&jacobian),
        block_dets: [det(&blocks[0]), det(&blocks[1]), det(&blocks[2])],
        block_ratios: [
            singular_ratio(&blocks[0]),
            singular_ratio(&blocks[1]),
            singular_ratio(&blocks[2]),
        ],
    };
    if !report.nonsingular() {
        let worst = (0..3)
            .min_by(|&a, &b| report.block_ratios[a].total_cmp(&report.block_ratios[b]))
            .unwrap_or(0);
        return Err(CphError::SingularJacobian {
            block: BLOCK_NAMES[worst],
            ratio: report.ratio,
        });
    }
    Ok(StructuralResult {
        dof: offsets.dof(),
        index: offsets.index_over(reduced),
        sigma,
        reduced,
        hvt,
        offsets,
        jacobian,
        blocks,
        report,
    })
}

impl StructuralResult {
    pub fn to_json(&self) -> Value {
        let s = &self.sigma;
        json!({
            "sigma": s,
            "offsets": {
                "c": s.row_labels.iter().cloned().zip(self.offsets.c.iter().map(|&c| json!(c)))
                    .collect::<serde_json::Map<String, Value>>(),
                "d": s.col_labels.iter().cloned().zip(self.offsets.d.iter().map(|&d| json!(d)))
                    .collect::<serde_json::Map<String, Value>>(),
            },
            "hvt": {
                "value": self.hvt.value,
                "entries": self.hvt.cols.iter().enumerate()
                    .map(|(i, &j)| json!([s.row_labels[i], s.col_labels[j]]))
                    .collect::<Vec<_>>(),
            },
            "reduced_size": self.reduced,
            "dof": self.dof,
            "index": self.index,
            "jacobian": rows_of(&self.jacobian),
            "det_j": self.report.det,
            "block_dets": {
                "J_C": self.report.block_dets[0],
                "J_L": self.report.block_dets[1],
                "J_G": self.report.block_dets[2],
            },
            "singular_value_ratio": self.report.ratio,
            "sa_amenable": self.report.nonsingular(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cph::assemble_dae;
    use crate::graph::{incidence_matrix, optimal_tree};
    use crate::loopcut::{compute_f, partition_edges};
    use crate::netlist::{parse_netlist, P8BY5};

    fn dae(text: &str) -> CphDae {
        let c = parse_netlist(text).unwrap();
        let a = incidence_matrix(&c);
        let td = optimal_tree(&a, &c.kinds()).unwrap();
        let f = compute_f(&a, &td).unwrap();
        let p = partition_edges(&td, &c.kinds(), &c.labels()).unwrap();
        assemble_dae(&c, &f, &p, None).unwrap()
    }

    const N: Option<i32> = None;

    #[test]
    fn running_example_display_sigma() {
        let s = build_display_sigma(&dae(P8BY5));
        assert_eq!(
            s.col_labels,
            ["q_C6", "q_c3", "phi_l4", "phi_L7", "v_r1", "v_R5", "i_v2", "v_I8"]
        );
        assert_eq!(
            s.row_labels,
            ["f_C6", "f_c3", "f_l4", "f_L7", "f_r1", "f_R5", "f_v2", "f_I8"]
        );
        let want = vec![
            vec![Some(0), Some(0), N, N, N, N, N, N],
            vec![Some(1), Some(1), N, Some(0), N, N, N, N],
            vec![N, N, Some(0), Some(0), N, N, N, N],
            vec![N, Some(0), Some(1), Some(1), N, N, N, N],
            vec![N, N, N, N, Some(0), Some(0), N, N],
            vec![N, N, N, N, Some(0), Some(0), N, N],
            vec![Some(1), N, N, N, N, Some(0), Some(0), N],
            vec![N, N, Some(1), N, Some(0), N, N, Some(0)],
        ];
        assert_eq!(s.entries, want);
    }

    #[test]
    fn running_example_offsets() {
        let r = analyze_structure(&dae(P8BY5)).unwrap();
        assert_eq!(r.offsets.c, vec![1, 0, 1, 0, 0, 0, 0, 0]);
        assert_eq!(r.offsets.d, vec![1, 1, 1, 1, 0, 0, 0, 0]);
        assert_eq!(r.reduced, 6);
        assert_eq!(r.hvt.value, 2);
        assert_eq!(r.dof, 2);
        assert_eq!(r.index, 2);
        assert!(r.report.block_dets.iter().all(|d| d.abs() > 1e-6));
        let prod: f64 = r.report.block_dets.iter().product();
        assert!((r.report.det - prod).abs() <= 1e-8 * prod.abs());
    }

    #[test]
    fn closed_form_blocks_match_jacobian() {
        let d = dae(P8BY5);
        let r = analyze_structure(&d).unwrap();
        for (got, want) in r.blocks.iter().zip(closed_form_blocks(&d)) {
            assert!((got - want).abs().max() < 1e-12);
        }
    }

    #[test]
    fn pure_resistor_bridge_is_all_zero() {
        let d = dae("R1 1 2 1\nR2 1 3 2\nR3 2 3 3\nR4 2 4 1\nR5 3 4 2\nV6 4 1 1");
        let s = build_sigma(&d);
        assert!(s.entries.iter().flatten().flatten().all(|&v| v == 0));
        let r = analyze_structure(&d).unwrap();
        assert_eq!(r.offsets.c, vec![0; r.sigma.size()]);
        assert_eq!(r.offsets.d, vec![0; r.sigma.size()]);
        assert_eq!(r.dof, 0);
    }

    #[test]
    fn capacitor_loop_through_sources_only() {
        // C2's loop holds only V1, so its column has a 1 only in the f_v1 row
        let d = dae("V1 1 2 sin(t)\nC2 1 2 1\nR3 1 2 1");
        let reduced = build_sigma(&d);
        assert_eq!(reduced.entries[0], vec![Some(0), None]);
        let r = analyze_structure(&d).unwrap();
        assert_eq!(r.sigma.col_labels, ["q_C2", "v_R3", "i_v1"]);
        assert_eq!(r.offsets.c, vec![1, 0, 0]);
        assert_eq!(r.offsets.d, vec![1, 0, 0]);
        assert_eq!(r.index, 2);
        assert_eq!(classify_index(d.partition()), 2);
    }

    #[test]
    fn lc_ladder_has_only_diagonal_ones() {
        let d = dae("C1 1 2 1\nL2 2 3 1\nC3 3 1 1\nL4 3 1 2");
        let p = d.partition();
        assert_eq!(p.size(Group::LinkC) + p.size(Group::TreeL), 0);
        let s = build_sigma(&d);
        for (i, row) in s.entries.iter().enumerate() {
            for (j, &e) in row.iter().enumerate() {
                if e == Some(1) {
                    assert_eq!(i, j);
                }
            }
        }
        let r = analyze_structure(&d).unwrap();
        assert_eq!(r.index, 0);
        assert_eq!(classify_index(p), 0);
    }

    #[test]
    fn index_classifier() {
        assert_eq!(classify_index(dae(P8BY5).partition()), 2);
        let rc = dae("R1 1 2 1\nC2 2 1 1");
        assert_eq!(classify_index(rc.partition()), 1);
        assert_eq!(analyze_structure(&rc).unwrap().index, 1);
    }

    #[test]
    fn trivial_offsets() {
        let s = SignatureMatrix {
            rows: vec![0],
            cols: vec![0],
            entries: vec![vec![Some(0)]],
            row_labels: vec!["f".into()],
            col_labels: vec!["x".into()],
        };
        let t = find_hvt(&s).unwrap();
        assert_eq!(t.value, 0);
        assert_eq!(canonical_offsets(&s, &t), Offsets { c: vec![0], d: vec![0] });
        let bad = SignatureMatrix {
            entries: vec![vec![None]],
            ..s
        };
        assert_eq!(find_hvt(&bad), Err(CphError::StructurallyIllPosed));
    }

    #[test]
    fn bordered_layout() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0]);
        let n = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let p = bordered(&m, &n);
        let want = DMatrix::from_row_slice(
            3,
            3,
            &[2.0, 0.0, -2.0, 1.0, 3.0, 3.0, 1.0, -1.0, 1.0],
        );
        assert_eq!(p, want);
    }

    #[test]
    fn json_uses_minus_inf_strings() {
        let r = analyze_structure(&dae(P8BY5)).unwrap();
        let v = r.to_json();
        assert_eq!(v["sigma"]["entries"][0][2], json!("-inf"));
        assert_eq!(v["dof"], json!(2));
        assert_eq!(v["offsets"]["c"]["f_C6"], json!(1));
    }
}
