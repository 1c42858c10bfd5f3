use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{AlignmentMatrix, WorkflowError};
use crate::event_log::Trace;

/// The backbone: major activities in aligned order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Consensus {
    pub activities: Vec<String>,
    /// Alignment columns behind each entry (several after merging repeats).
    pub columns: Vec<Vec<usize>>,
    /// Highest column support behind each entry.
    pub support: Vec<f64>,
    pub threshold: f64,
}

/// Keep each column whose modal activity appears in at least `threshold` of
/// all rows, then merge adjacent repeats. Ties between activities go to the
/// lower vocabulary id.
pub fn consensus(alignment: &AlignmentMatrix, threshold: f64) -> Result<Consensus, WorkflowError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(WorkflowError::InvalidThreshold(threshold));
    }
    let n_rows = alignment.n_rows();
    let n_sym = alignment.vocabulary().size();
    let mut out = Consensus {
        activities: Vec::new(),
        columns: Vec::new(),
        support: Vec::new(),
        threshold,
    };
    let mut counts = vec![0usize; n_sym];
    for c in 0..alignment.n_columns() {
        counts.iter_mut().for_each(|k| *k = 0);
        for r in 0..n_rows {
            if let Some(id) = alignment.row_ids(r)[c] {
                counts[id] += 1;
            }
        }
        let Some((id, &count)) = counts.iter().enumerate().max_by_key(|&(id, &k)| (k, std::cmp::Reverse(id))) else {
            continue;
        };
        let support = count as f64 / n_rows as f64;
        if count == 0 || support < threshold {
            continue;
        }
        let name = alignment.vocabulary().name(id).expect("id in vocabulary");
        if out.activities.last().map(String::as_str) == Some(name) {
            let k = out.activities.len() - 1;
            out.columns[k].push(c);
            out.support[k] = out.support[k].max(support);
        } else {
            out.activities.push(name.to_string());
            out.columns.push(vec![c]);
            out.support.push(support);
        }
    }
    if out.activities.is_empty() {
        return Err(WorkflowError::EmptyConsensus(threshold));
    }
    Ok(out)
}

/// Share of rows holding `activity` in a column other than its consensus
/// column(s).
pub fn dispersal_rate(alignment: &AlignmentMatrix, consensus: &Consensus, activity: &str) -> Result<f64, WorkflowError> {
    let home: BTreeSet<usize> = consensus
        .activities
        .iter()
        .zip(&consensus.columns)
        .filter(|(a, _)| *a == activity)
        .flat_map(|(_, cols)| cols.iter().copied())
        .collect();
    if home.is_empty() {
        return Err(WorkflowError::NotInConsensus(activity.to_string()));
    }
    let Some(id) = alignment.vocabulary().id(activity) else {
        return Err(WorkflowError::NotInConsensus(activity.to_string()));
    };
    let dispersed = (0..alignment.n_rows())
        .filter(|&r| {
            alignment
                .row_ids(r)
                .iter()
                .enumerate()
                .any(|(c, cell)| *cell == Some(id) && !home.contains(&c))
        })
        .count();
    Ok(dispersed as f64 / alignment.n_rows() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    Backbone,
    SideBranch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowNode {
    pub activity: String,
    /// Traces containing the activity at least once.
    pub frequency: usize,
    pub role: NodeRole,
}

/// A side activity hanging between two backbone nodes (node indices);
/// `None` means the start or end of the process.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideBranch {
    pub node: usize,
    pub attach_after: Option<usize>,
    pub attach_before: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowGraph {
    /// Backbone nodes in order, then side branches by name.
    pub nodes: Vec<WorkflowNode>,
    pub edges: Vec<(usize, usize)>,
    pub side_branches: Vec<SideBranch>,
    pub n_traces: usize,
    /// Non-backbone activities below the frequency cut-off.
    pub dropped: Vec<String>,
}

impl WorkflowGraph {
    pub fn backbone_len(&self) -> usize {
        self.nodes.iter().filter(|n| n.role == NodeRole::Backbone).count()
    }
}

fn trace_frequencies(traces: &[Trace]) -> BTreeMap<&str, usize> {
    let mut freq = BTreeMap::new();
    for t in traces {
        let seen: BTreeSet<&str> = t.activities.iter().map(String::as_str).collect();
        for a in seen {
            *freq.entry(a).or_insert(0) += 1;
        }
    }
    freq
}

/// Most frequent key; ties go to the smaller key.
fn modal(counts: &HashMap<Option<usize>, usize>) -> Option<usize> {
    counts
        .iter()
        .max_by_key(|&(k, c)| (*c, std::cmp::Reverse(*k)))
        .and_then(|(k, _)| *k)
}

/// Backbone path from the consensus plus side branches for every other
/// activity found in at least `min_frequency` of the traces. Side branches
/// attach after the backbone activity that most often precedes them and
/// before the one that most often follows them in the raw traces.
pub fn build_workflow(traces: &[Trace], consensus: &Consensus, min_frequency: f64) -> Result<WorkflowGraph, WorkflowError> {
    if consensus.activities.is_empty() {
        return Err(WorkflowError::EmptyConsensus(consensus.threshold));
    }
    if !(min_frequency >= 0.0) {
        return Err(WorkflowError::InvalidMinFrequency(min_frequency));
    }
    let freq = trace_frequencies(traces);
    let mut backbone_index: HashMap<&str, usize> = HashMap::new();
    let mut nodes = Vec::new();
    for (i, a) in consensus.activities.iter().enumerate() {
        backbone_index.entry(a.as_str()).or_insert(i);
        nodes.push(WorkflowNode {
            activity: a.clone(),
            frequency: freq.get(a.as_str()).copied().unwrap_or(0),
            role: NodeRole::Backbone,
        });
    }
    let mut edges: Vec<(usize, usize)> = (1..nodes.len()).map(|i| (i - 1, i)).collect();

    let n = traces.len().max(1) as f64;
    let mut side_branches = Vec::new();
    let mut dropped = Vec::new();
    for (&activity, &count) in &freq {
        if backbone_index.contains_key(activity) {
            continue;
        }
        if (count as f64 / n) < min_frequency {
            dropped.push(activity.to_string());
            continue;
        }
        let mut before: HashMap<Option<usize>, usize> = HashMap::new();
        let mut after: HashMap<Option<usize>, usize> = HashMap::new();
        for t in traces {
            for (p, a) in t.activities.iter().enumerate() {
                if a != activity {
                    continue;
                }
                let pred = t.activities[..p].iter().rev().find_map(|x| backbone_index.get(x.as_str()).copied());
                let succ = t.activities[p + 1..].iter().find_map(|x| backbone_index.get(x.as_str()).copied());
                *after.entry(pred).or_insert(0) += 1;
                *before.entry(succ).or_insert(0) += 1;
            }
        }
        let node = nodes.len();
        nodes.push(WorkflowNode {
            activity: activity.to_string(),
            frequency: count,
            role: NodeRole::SideBranch,
        });
        let branch = SideBranch {
            node,
            attach_after: modal(&after),
            attach_before: modal(&before),
        };
        if let Some(a) = branch.attach_after {
            edges.push((a, node));
        }
        if let Some(b) = branch.attach_before {
            edges.push((node, b));
        }
        side_branches.push(branch);
    }
    Ok(WorkflowGraph {
        nodes,
        edges,
        side_branches,
        n_traces: traces.len(),
        dropped,
    })
}

fn dot_quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' | '\\' => {
                out.push('\\');
                out.push(ch);
            }
            '\n' => out.push_str("\\n"),
            _ => out.push(ch),
        }
    }
    out.push('"');
    out
}

/// Graphviz rendering: gray filled backbone, plain side branches, nodes
/// labelled `Name (count)`. Output is byte-stable for a given graph.
pub fn export_dot(graph: &WorkflowGraph) -> String {
    let label = |i: usize| dot_quote(&format!("{} ({})", graph.nodes[i].activity, graph.nodes[i].frequency));
    let mut out = String::from("digraph workflow {\n  rankdir=LR;\n  node [shape=ellipse];\n");
    for (i, node) in graph.nodes.iter().enumerate() {
        let style = match node.role {
            NodeRole::Backbone => "style=filled, fillcolor=gray",
            NodeRole::SideBranch => "style=solid",
        };
        let _ = writeln!(out, "  {} [{style}];", label(i));
    }
    for &(a, b) in &graph.edges {
        let dashed = if graph.nodes[a].role == NodeRole::SideBranch || graph.nodes[b].role == NodeRole::SideBranch {
            " [style=dashed]"
        } else {
            ""
        };
        let _ = writeln!(out, "  {} -> {}{dashed};", label(a), label(b));
    }
    out.push_str("}\n");
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneEntry {
    pub activity: String,
    pub frequency: usize,
    pub support: f64,
    pub dispersal_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideBranchEntry {
    pub activity: String,
    pub frequency: usize,
    pub attach_after: Option<String>,
    pub attach_before: Option<String>,
}

/// JSON companion to the DOT file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowSummary {
    pub n_traces: usize,
    pub support_threshold: f64,
    pub min_frequency: f64,
    pub backbone: Vec<BackboneEntry>,
    pub side_branches: Vec<SideBranchEntry>,
    pub dropped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscoveryConfig {
    pub support_threshold: f64,
    pub min_frequency: f64,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        Self {
            support_threshold: 0.5,
            min_frequency: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Discovery {
    pub alignment: AlignmentMatrix,
    pub consensus: Consensus,
    pub graph: WorkflowGraph,
    pub summary: WorkflowSummary,
}

/// Align, extract the consensus, build the graph and summarise it.
pub fn discover(traces: &[Trace], cfg: &DiscoveryConfig) -> Result<Discovery, WorkflowError> {
    let alignment = super::align_traces(traces)?;
    let consensus = consensus(&alignment, cfg.support_threshold)?;
    let graph = build_workflow(traces, &consensus, cfg.min_frequency)?;
    let backbone = consensus
        .activities
        .iter()
        .enumerate()
        .map(|(i, a)| {
            Ok(BackboneEntry {
                activity: a.clone(),
                frequency: graph.nodes[i].frequency,
                support: consensus.support[i],
                dispersal_rate: dispersal_rate(&alignment, &consensus, a)?,
            })
        })
        .collect::<Result<_, WorkflowError>>()?;
    let name = |i: Option<usize>| i.map(|i| graph.nodes[i].activity.clone());
    let side_branches = graph
        .side_branches
        .iter()
        .map(|b| SideBranchEntry {
            activity: graph.nodes[b.node].activity.clone(),
            frequency: graph.nodes[b.node].frequency,
            attach_after: name(b.attach_after),
            attach_before: name(b.attach_before),
        })
        .collect();
    let summary = WorkflowSummary {
        n_traces: traces.len(),
        support_threshold: cfg.support_threshold,
        min_frequency: cfg.min_frequency,
        backbone,
        side_branches,
        dropped: graph.dropped.clone(),
    };
    Ok(Discovery {
        alignment,
        consensus,
        graph,
        summary,
    })
}
