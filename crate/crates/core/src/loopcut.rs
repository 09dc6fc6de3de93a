//! The loop-cutset matrix `F`, the eight-way edge partition, and its block view.
//!
//! `F` has one row per link and one column per twig. Row `e` lists the twigs of
//! the fundamental loop closed by link `e` (KVL: `v_N = -F v_T`); column `f` lists
//! the links of the fundamental cutset of twig `f` (KCL: `i_T = F^T i_N`).

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::error::CphError;
use crate::exact::IntMatrix;
use crate::graph::{IncidenceMatrix, TreeDecomposition};
use crate::netlist::ElementKind;

#[derive(Debug, Clone, PartialEq)]
pub struct LoopCutsetMatrix {
    f: IntMatrix,
    links: Vec<usize>,
    twigs: Vec<usize>,
    labels: Vec<String>,
    /// Row of each edge that is a link, or column of each twig.
    slot: Vec<usize>,
}

impl LoopCutsetMatrix {
    pub fn matrix(&self) -> &IntMatrix {
        &self.f
    }

    pub fn links(&self) -> &[usize] {
        &self.links
    }

    pub fn twigs(&self) -> &[usize] {
        &self.twigs
    }

    pub fn link_labels(&self) -> Vec<String> {
        self.links.iter().map(|&e| self.labels[e].clone()).collect()
    }

    pub fn twig_labels(&self) -> Vec<String> {
        self.twigs.iter().map(|&e| self.labels[e].clone()).collect()
    }

    /// `F[link, twig]` addressed by edge indices.
    pub fn entry(&self, link: usize, twig: usize) -> i64 {
        self.f.get(self.slot[link], self.slot[twig])
    }

    /// Nonzero `(twig, sign)` pairs of a link's fundamental loop.
    pub fn loop_of(&self, link: usize) -> Vec<(usize, i64)> {
        let row = self.slot[link];
        self.twigs
            .iter()
            .enumerate()
            .filter_map(|(j, &t)| {
                let v = self.f.get(row, j);
                (v != 0).then_some((t, v))
            })
            .collect()
    }

    /// Nonzero `(link, sign)` pairs of a twig's fundamental cutset.
    pub fn cutset_of(&self, twig: usize) -> Vec<(usize, i64)> {
        let col = self.slot[twig];
        self.links
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| {
                let v = self.f.get(i, col);
                (v != 0).then_some((l, v))
            })
            .collect()
    }
}

/// `F = -A[N, 1..n-1] * A[T, 1..n-1]^{-1}` by fraction-free elimination.
pub fn compute_f(a: &IncidenceMatrix, td: &TreeDecomposition) -> Result<LoopCutsetMatrix, CphError> {
    let cols: Vec<usize> = (0..a.node_count() - 1).collect();
    let a_tree = a.matrix().select(&td.tree, &cols);
    let a_links = a.matrix().select(&td.cotree, &cols);
    let f = a_links.neg().right_divide(&a_tree).map_err(|e| {
        CphError::Internal(format!("tree rows of the incidence matrix: {e}"))
    })?;
    let labels = a.labels().to_vec();
    for i in 0..f.nrows() {
        for j in 0..f.ncols() {
            let v = f.get(i, j);
            if !(-1..=1).contains(&v) {
                return Err(CphError::LoopCutsetEntry {
                    link: labels[td.cotree[i]].clone(),
                    twig: labels[td.tree[j]].clone(),
                    value: v,
                });
            }
        }
    }
    let mut slot = vec![0; a.edge_count()];
    for (i, &e) in td.cotree.iter().enumerate() {
        slot[e] = i;
    }
    for (j, &e) in td.tree.iter().enumerate() {
        slot[e] = j;
    }
    Ok(LoopCutsetMatrix {
        f,
        links: td.cotree.clone(),
        twigs: td.tree.clone(),
        labels,
        slot,
    })
}

/// The eight edge classes: element kind crossed with tree membership.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    TreeC,
    TreeL,
    TreeV,
    TreeR,
    LinkL,
    LinkC,
    LinkI,
    LinkR,
}

impl Group {
    pub const ALL: [Group; 8] = [
        Group::TreeC,
        Group::TreeL,
        Group::TreeV,
        Group::TreeR,
        Group::LinkL,
        Group::LinkC,
        Group::LinkI,
        Group::LinkR,
    ];
    pub const TREE: [Group; 4] = [Group::TreeC, Group::TreeL, Group::TreeV, Group::TreeR];
    pub const LINK: [Group; 4] = [Group::LinkL, Group::LinkC, Group::LinkI, Group::LinkR];

    /// Lowercase for twigs, uppercase for links.
    pub fn symbol(self) -> &'static str {
        match self {
            Group::TreeC => "c",
            Group::TreeL => "l",
            Group::TreeV => "v",
            Group::TreeR => "r",
            Group::LinkL => "L",
            Group::LinkC => "C",
            Group::LinkI => "I",
            Group::LinkR => "R",
        }
    }

    pub fn is_tree(self) -> bool {
        (self as usize) < 4
    }

    fn of(kind: ElementKind, twig: bool) -> Option<Group> {
        use ElementKind::*;
        match (kind, twig) {
            (Capacitor, true) => Some(Group::TreeC),
            (Inductor, true) => Some(Group::TreeL),
            (VoltageSource, true) => Some(Group::TreeV),
            (Resistor, true) => Some(Group::TreeR),
            (Inductor, false) => Some(Group::LinkL),
            (Capacitor, false) => Some(Group::LinkC),
            (CurrentSource, false) => Some(Group::LinkI),
            (Resistor, false) => Some(Group::LinkR),
            (VoltageSource, false) | (CurrentSource, true) => None,
        }
    }
}

/// Disjoint ordered edge sets `c, l, v, r` (twigs) and `L, C, I, R` (links).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgePartition {
    sets: [Vec<usize>; 8],
    group_of: Vec<Group>,
    labels: Vec<String>,
}

impl EdgePartition {
    pub fn edges(&self, g: Group) -> &[usize] {
        &self.sets[g as usize]
    }

    pub fn size(&self, g: Group) -> usize {
        self.sets[g as usize].len()
    }

    pub fn group_of(&self, edge: usize) -> Group {
        self.group_of[edge]
    }

    pub fn edge_count(&self) -> usize {
        self.group_of.len()
    }

    /// Edges of several groups concatenated in the given group order.
    pub fn concat(&self, groups: &[Group]) -> Vec<usize> {
        groups.iter().flat_map(|&g| self.edges(g).iter().copied()).collect()
    }

    pub fn labels(&self, g: Group) -> Vec<String> {
        self.edges(g).iter().map(|&e| self.labels[e].clone()).collect()
    }

    pub fn label(&self, edge: usize) -> &str {
        &self.labels[edge]
    }

    /// Label with its first letter cased by tree membership (`r1` twig, `R5` link).
    pub fn role_label(&self, edge: usize) -> String {
        let label = &self.labels[edge];
        let mut chars = label.chars();
        let first = chars.next().unwrap_or('?');
        let first = if self.group_of[edge].is_tree() {
            first.to_ascii_lowercase()
        } else {
            first.to_ascii_uppercase()
        };
        std::iter::once(first).chain(chars).collect()
    }
}

impl Serialize for EdgePartition {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(8))?;
        for g in Group::ALL {
            map.serialize_entry(g.symbol(), &self.labels(g))?;
        }
        map.end()
    }
}

pub fn partition_edges(
    td: &TreeDecomposition,
    kinds: &[ElementKind],
    labels: &[String],
) -> Result<EdgePartition, CphError> {
    let mut sets: [Vec<usize>; 8] = Default::default();
    let mut group_of = Vec::with_capacity(kinds.len());
    for (e, &kind) in kinds.iter().enumerate() {
        let g = Group::of(kind, td.is_twig(e))
            .ok_or_else(|| CphError::SourcePlacement(labels[e].clone()))?;
        sets[g as usize].push(e);
        group_of.push(g);
    }
    Ok(EdgePartition {
        sets,
        group_of,
        labels: labels.to_vec(),
    })
}

/// `F` cut into its 4x4 blocks (link groups `L, C, I, R` by twig groups `c, l, v, r`).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockF {
    blocks: Vec<IntMatrix>,
}

/// Blocks that an optimal tree forces to vanish.
pub const FORBIDDEN_BLOCKS: [(Group, Group); 3] = [
    (Group::LinkC, Group::TreeL),
    (Group::LinkC, Group::TreeR),
    (Group::LinkR, Group::TreeL),
];

impl BlockF {
    pub fn block(&self, link: Group, twig: Group) -> &IntMatrix {
        assert!(!link.is_tree() && twig.is_tree(), "block({link:?}, {twig:?})");
        &self.blocks[(link as usize - 4) * 4 + twig as usize]
    }

    /// The full matrix with rows ordered `L, C, I, R` and columns `c, l, v, r`.
    pub fn assembled(&self) -> IntMatrix {
        let rows: usize = Group::LINK.iter().map(|&g| self.block(g, Group::TreeC).nrows()).sum();
        let cols: usize = Group::TREE.iter().map(|&g| self.block(Group::LinkL, g).ncols()).sum();
        let mut out = IntMatrix::zeros(rows, cols);
        let mut r0 = 0;
        for lg in Group::LINK {
            let mut c0 = 0;
            let h = self.block(lg, Group::TreeC).nrows();
            for tg in Group::TREE {
                let b = self.block(lg, tg);
                for i in 0..b.nrows() {
                    for j in 0..b.ncols() {
                        out.set(r0 + i, c0 + j, b.get(i, j));
                    }
                }
                c0 += b.ncols();
            }
            r0 += h;
        }
        out
    }
}

pub fn block_view(f: &LoopCutsetMatrix, p: &EdgePartition) -> Result<BlockF, CphError> {
    let mut blocks = Vec::with_capacity(16);
    for lg in Group::LINK {
        for tg in Group::TREE {
            let mut b = IntMatrix::zeros(p.size(lg), p.size(tg));
            for (i, &link) in p.edges(lg).iter().enumerate() {
                for (j, &twig) in p.edges(tg).iter().enumerate() {
                    b.set(i, j, f.entry(link, twig));
                }
            }
            blocks.push(b);
        }
    }
    for (lg, tg) in FORBIDDEN_BLOCKS {
        for &link in p.edges(lg) {
            for &twig in p.edges(tg) {
                if f.entry(link, twig) != 0 {
                    return Err(CphError::ForbiddenBlock {
                        block: forbidden_name(lg, tg),
                        link: p.label(link).to_string(),
                        twig: p.label(twig).to_string(),
                    });
                }
            }
        }
    }
    Ok(BlockF { blocks })
}

fn forbidden_name(link: Group, twig: Group) -> &'static str {
    match (link, twig) {
        (Group::LinkC, Group::TreeL) => "Cl",
        (Group::LinkC, Group::TreeR) => "Cr",
        _ => "Rl",
    }
}
