//! Incidence matrix, the two topological well-posedness conditions, and
//! optimal spanning-tree selection.

use serde::Serialize;

use crate::error::CphError;
use crate::exact::IntMatrix;
use crate::netlist::{Circuit, ElementKind};

/// Edge-by-node incidence matrix: `+1` at the start node, `-1` at the end node.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix {
    matrix: IntMatrix,
    labels: Vec<String>,
}

impl IncidenceMatrix {
    pub fn matrix(&self) -> &IntMatrix {
        &self.matrix
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn edge_count(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn node_count(&self) -> usize {
        self.matrix.ncols()
    }

    /// Zero-based `(start, end)` nodes of an edge.
    pub fn endpoints(&self, edge: usize) -> (usize, usize) {
        let row = self.matrix.row(edge);
        let start = row.iter().position(|&v| v == 1).expect("row has a +1");
        let end = row.iter().position(|&v| v == -1).expect("row has a -1");
        (start, end)
    }

    /// Reduced incidence matrix: all columns except the grounded node (last).
    pub fn reduced(&self) -> IntMatrix {
        let rows: Vec<usize> = (0..self.edge_count()).collect();
        let cols: Vec<usize> = (0..self.node_count() - 1).collect();
        self.matrix.select(&rows, &cols)
    }
}

pub fn incidence_matrix(circuit: &Circuit) -> IncidenceMatrix {
    let mut a = IntMatrix::zeros(circuit.edge_count(), circuit.node_count());
    for (k, e) in circuit.elements().iter().enumerate() {
        a.set(k, e.from - 1, 1);
        a.set(k, e.to - 1, -1);
    }
    IncidenceMatrix {
        matrix: a,
        labels: circuit.labels(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessKind {
    VLoop,
    ICutset,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub kind: WitnessKind,
    pub edges: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WellPosednessReport {
    /// No loop consisting of voltage sources only.
    pub a1: bool,
    /// No cutset consisting of current sources only.
    pub a2: bool,
    pub witnesses: Vec<Witness>,
}

impl WellPosednessReport {
    pub fn holds(&self) -> bool {
        self.a1 && self.a2
    }
}

/// Disjoint-set forest over nodes.
#[derive(Debug, Clone)]
pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when `a` and `b` were already joined.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

/// Edges on the path between two nodes in a forest given as an edge list.
pub(crate) fn forest_path(
    a: &IncidenceMatrix,
    forest: &[usize],
    from: usize,
    to: usize,
) -> Option<Vec<usize>> {
    let n = a.node_count();
    let mut adj = vec![Vec::new(); n];
    for &e in forest {
        let (s, t) = a.endpoints(e);
        adj[s].push((t, e));
        adj[t].push((s, e));
    }
    let mut via = vec![None; n];
    let mut seen = vec![false; n];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(u) = stack.pop() {
        if u == to {
            break;
        }
        for &(w, e) in &adj[u] {
            if !seen[w] {
                seen[w] = true;
                via[w] = Some((u, e));
                stack.push(w);
            }
        }
    }
    if !seen[to] {
        return None;
    }
    let mut path = Vec::new();
    let mut cur = to;
    while cur != from {
        let (prev, e) = via[cur]?;
        path.push(e);
        cur = prev;
    }
    path.reverse();
    Some(path)
}

/// Checks the no-V-loop and no-I-cutset conditions by exact rank computation on
/// the reduced incidence matrix, and reports a witness for each violation.
pub fn check_a1_a2(a: &IncidenceMatrix, kinds: &[ElementKind]) -> WellPosednessReport {
    let b = a.reduced();
    let cols: Vec<usize> = (0..b.ncols()).collect();
    let v_edges: Vec<usize> = edges_of(kinds, |k| k == ElementKind::VoltageSource);
    let non_i: Vec<usize> = edges_of(kinds, |k| k != ElementKind::CurrentSource);

    // incidence submatrices are totally unimodular; Bareiss never overflows here
    let a1 = b.select(&v_edges, &cols).rank().expect("unimodular rank") == v_edges.len();
    let a2 = b.select(&non_i, &cols).rank().expect("unimodular rank") == b.ncols();

    let mut witnesses = Vec::new();
    if !a1 {
        let mut uf = UnionFind::new(a.node_count());
        let mut forest = Vec::new();
        for &e in &v_edges {
            let (s, t) = a.endpoints(e);
            if uf.union(s, t) {
                forest.push(e);
            } else {
                let mut cycle = forest_path(a, &forest, s, t).unwrap_or_default();
                cycle.push(e);
                cycle.sort_unstable();
                witnesses.push(Witness {
                    kind: WitnessKind::VLoop,
                    edges: cycle.iter().map(|&k| a.labels[k].clone()).collect(),
                });
            }
        }
    }
    if !a2 {
        let mut uf = UnionFind::new(a.node_count());
        for &e in &non_i {
            let (s, t) = a.endpoints(e);
            uf.union(s, t);
        }
        let root0 = uf.find(0);
        let mut roots: Vec<usize> = (0..a.node_count())
            .map(|v| uf.find(v))
            .filter(|&r| r != root0)
            .collect();
        roots.sort_unstable();
        roots.dedup();
        for r in roots {
            let cut: Vec<String> = (0..a.edge_count())
                .filter(|&e| {
                    let (s, t) = a.endpoints(e);
                    (uf.find(s) == r) != (uf.find(t) == r)
                })
                .map(|e| a.labels[e].clone())
                .collect();
            witnesses.push(Witness {
                kind: WitnessKind::ICutset,
                edges: cut,
            });
        }
    }
    WellPosednessReport { a1, a2, witnesses }
}

fn edges_of(kinds: &[ElementKind], pred: impl Fn(ElementKind) -> bool) -> Vec<usize> {
    (0..kinds.len()).filter(|&k| pred(kinds[k])).collect()
}

/// Ranking used for tree selection: sources and capacitors first, inductors and
/// current sources last.
pub fn kind_weight(kind: ElementKind) -> u32 {
    match kind {
        ElementKind::VoltageSource => 5,
        ElementKind::Capacitor => 4,
        ElementKind::Resistor => 3,
        ElementKind::Inductor => 2,
        ElementKind::CurrentSource => 1,
    }
}

/// Twig and link index sets of a spanning tree, each in ascending edge order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TreeDecomposition {
    pub tree: Vec<usize>,
    pub cotree: Vec<usize>,
}

impl TreeDecomposition {
    /// Builds a decomposition from an arbitrary twig set, checking it spans.
    pub fn from_twigs(a: &IncidenceMatrix, twigs: &[usize]) -> Result<Self, CphError> {
        let mut tree = twigs.to_vec();
        tree.sort_unstable();
        tree.dedup();
        let mut uf = UnionFind::new(a.node_count());
        let spans = tree.len() + 1 == a.node_count()
            && tree.iter().all(|&e| {
                e < a.edge_count() && {
                    let (s, t) = a.endpoints(e);
                    uf.union(s, t)
                }
            });
        if !spans {
            return Err(CphError::NotSpanningTree);
        }
        let cotree = (0..a.edge_count()).filter(|e| !tree.contains(e)).collect();
        Ok(TreeDecomposition { tree, cotree })
    }

    pub fn weight(&self, kinds: &[ElementKind]) -> u32 {
        self.tree.iter().map(|&e| kind_weight(kinds[e])).sum()
    }

    pub fn is_twig(&self, edge: usize) -> bool {
        self.tree.binary_search(&edge).is_ok()
    }
}

/// Maximum-weight spanning tree by Kruskal's greedy rule; ties go to the lower
/// edge index.
pub fn optimal_tree(
    a: &IncidenceMatrix,
    kinds: &[ElementKind],
) -> Result<TreeDecomposition, CphError> {
    let report = check_a1_a2(a, kinds);
    if !report.holds() {
        return Err(CphError::IllPosed(report));
    }
    let mut order: Vec<usize> = (0..a.edge_count()).collect();
    order.sort_by_key(|&e| (std::cmp::Reverse(kind_weight(kinds[e])), e));
    let mut uf = UnionFind::new(a.node_count());
    let mut tree: Vec<usize> = order
        .into_iter()
        .filter(|&e| {
            let (s, t) = a.endpoints(e);
            uf.union(s, t)
        })
        .collect();
    tree.sort_unstable();
    let td = TreeDecomposition::from_twigs(a, &tree)?;
    for &e in &td.cotree {
        if kinds[e] == ElementKind::VoltageSource {
            return Err(CphError::SourcePlacement(a.labels[e].clone()));
        }
    }
    for &e in &td.tree {
        if kinds[e] == ElementKind::CurrentSource {
            return Err(CphError::SourcePlacement(a.labels[e].clone()));
        }
    }
    Ok(td)
}
