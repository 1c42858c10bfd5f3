//! Workflow diagrams from traces: multiple alignment, consensus backbone,
//! side branches and Graphviz export.

mod align;
mod graph;


use thiserror::Error;

pub use align::{align_traces, AlignmentMatrix};
pub use graph::{
    build_workflow, consensus, discover, dispersal_rate, export_dot, BackboneEntry, Consensus, Discovery,
    DiscoveryConfig, NodeRole, SideBranch, SideBranchEntry, WorkflowGraph, WorkflowNode, WorkflowSummary,
};

#[derive(Debug, Error, PartialEq)]
pub enum WorkflowError {
    #[error("alignment needs at least 2 traces, got {0}")]
    TooFewTraces(usize),
    #[error("alignment rows have different lengths")]
    RaggedAlignment,
    #[error("threshold {0} outside (0, 1]")]
    InvalidThreshold(f64),
    #[error("frequency cut-off {0} must be a non-negative number")]
    InvalidMinFrequency(f64),
    #[error("no column reaches support {0}; try a lower threshold")]
    EmptyConsensus(f64),
    #[error("activity `{0}` is not in the consensus")]
    NotInConsensus(String),
}
