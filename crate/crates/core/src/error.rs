use thiserror::Error;

use crate::exact::ExactError;
use crate::graph::WellPosednessReport;
use crate::netlist::NetlistError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CphError {
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error("circuit is not well-posed (a1={}, a2={})", .0.a1, .0.a2)]
    IllPosed(WellPosednessReport),
    #[error("edge set is not a spanning tree")]
    NotSpanningTree,
    #[error("source '{0}' is on the wrong side of the tree")]
    SourcePlacement(String),
    #[error("exact arithmetic: {0}")]
    Exact(#[from] ExactError),
    #[error("loop-cutset entry F[{link},{twig}] = {value} is outside {{-1,0,1}}")]
    LoopCutsetEntry {
        link: String,
        twig: String,
        value: i64,
    },
    #[error("tree is not optimal: block {block} has nonzero F[{link},{twig}]")]
    ForbiddenBlock {
        block: &'static str,
        link: String,
        twig: String,
    },
    #[error("coupling block: {0}")]
    Coupling(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("signature matrix has no finite transversal")]
    StructurallyIllPosed,
    #[error("highest-value transversal has value {found}, expected {expected}")]
    TransversalValue { found: i64, expected: i64 },
    #[error("system Jacobian block {block} is numerically singular (sigma_min/sigma_max = {ratio:e})")]
    SingularJacobian { block: &'static str, ratio: f64 },
    #[error("internal inconsistency: {0}")]
    Internal(String),
    #[error("integration failed: {0}")]
    Integration(String),
    #[error("code generation: {0}")]
    Codegen(String),
    #[error("configuration: {0}")]
    Config(String),
}
