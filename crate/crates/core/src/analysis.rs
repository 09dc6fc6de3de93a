//! The whole pipeline for one circuit, with a serializable summary.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

use crate::cph::{assemble_dae, CouplingBlocks, CphDae};
use crate::error::CphError;
use crate::graph::{check_a1_a2, incidence_matrix, optimal_tree, WellPosednessReport};
use crate::loopcut::{compute_f, partition_edges, Group};
use crate::netlist::Circuit;
use crate::sigma::{analyze_structure, classify_index, StructuralResult};

#[derive(Debug, Clone, Serialize)]
pub struct LoopCutsetReport {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub matrix: Vec<Vec<i64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub nodes: usize,
    pub edges: usize,
    pub well_posedness: WellPosednessReport,
    pub tree: Vec<String>,
    pub cotree: Vec<String>,
    pub partition: BTreeMap<String, Vec<String>>,
    pub partition_sizes: BTreeMap<String, usize>,
    pub loop_cutset: LoopCutsetReport,
    pub coupled: bool,
    pub structure: Value,
    pub dof: i64,
    pub index: u8,
    pub classifier_index: u8,
    pub sa_amenable: bool,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub dae: CphDae,
    pub structure: StructuralResult,
    pub report: AnalysisReport,
}

/// Graph checks, tree, F, assembly and structural analysis.
pub fn analyze(circuit: &Circuit, coupling: Option<&CouplingBlocks>) -> Result<Analysis, CphError> {
    let a = incidence_matrix(circuit);
    let kinds = circuit.kinds();
    let wp = check_a1_a2(&a, &kinds);
    if !wp.holds() {
        return Err(CphError::IllPosed(wp));
    }
    let td = optimal_tree(&a, &kinds)?;
    let f = compute_f(&a, &td)?;
    let p = partition_edges(&td, &kinds, &circuit.labels())?;
    let dae = assemble_dae(circuit, &f, &p, coupling)?;
    let structure = analyze_structure(&dae)?;
    let classifier_index = classify_index(&p);
    let labels = circuit.labels();
    let names = |edges: &[usize]| edges.iter().map(|&e| labels[e].clone()).collect::<Vec<_>>();
    let report = AnalysisReport {
        nodes: circuit.node_count(),
        edges: circuit.edge_count(),
        well_posedness: wp,
        tree: names(&td.tree),
        cotree: names(&td.cotree),
        partition: Group::ALL
            .iter()
            .map(|&g| (g.symbol().to_string(), names(p.edges(g))))
            .collect(),
        partition_sizes: Group::ALL
            .iter()
            .map(|&g| (format!("n_{}", g.symbol()), p.size(g)))
            .collect(),
        loop_cutset: LoopCutsetReport {
            rows: f.link_labels(),
            cols: f.twig_labels(),
            matrix: f.matrix().to_rows(),
        },
        coupled: dae.is_coupled(),
        structure: structure.to_json(),
        dof: structure.dof,
        index: structure.index,
        classifier_index,
        sa_amenable: structure.report.nonsingular(),
    };
    Ok(Analysis {
        dae,
        structure,
        report,
    })
}
