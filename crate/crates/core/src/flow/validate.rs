use serde::Serialize;

use super::{FlowError, FlowGraph, NodeId};
use crate::palette::{Category, Palette};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// One validation finding. Graph-level findings carry no node id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Issue {
    pub severity: Severity,
    pub node_id: Option<NodeId>,
    pub message: String,
}

impl std::fmt::Display for Issue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        match &self.node_id {
            Some(id) => write!(f, "{sev}: node {id}: {}", self.message),
            None => write!(f, "{sev}: {}", self.message),
        }
    }
}

fn error(node: Option<&NodeId>, message: String) -> Issue {
    Issue {
        severity: Severity::Error,
        node_id: node.cloned(),
        message,
    }
}

/// Checks a graph against a palette. The report is empty iff the graph can be
/// deployed (modulo sensor lookup and transport availability). Entries are
/// ordered by node id, then by discovery order.
pub fn validate_flow(graph: &FlowGraph, palette: &Palette) -> Vec<Issue> {
    let mut issues = Vec::new();

    for e in graph.structure_errors() {
        let node = match &e {
            FlowError::DuplicateNodeId(id) => Some(id),
            FlowError::DanglingWire { from, .. }
            | FlowError::BadPort { from, .. }
            | FlowError::DuplicateWire { from, .. } => Some(from),
            _ => None,
        };
        issues.push(error(node, e.to_string()));
    }

    for node in &graph.nodes {
        let Some(desc) = palette.get(&node.node_type) else {
            issues.push(error(
                Some(&node.id),
                format!("unknown node type \"{}\"", node.node_type),
            ));
            continue;
        };
        if node.outputs != desc.outputs {
            issues.push(error(
                Some(&node.id),
                format!(
                    "declares {} outputs but \"{}\" nodes have {}",
                    node.outputs, desc.type_name, desc.outputs
                ),
            ));
        }
        for p in desc.config_problems(&node.config) {
            issues.push(error(Some(&node.id), p));
        }
    }

    for w in &graph.wires {
        let Some(target) = graph.node(w.to_node.as_str()) else {
            continue;
        };
        if let Some(desc) = palette.get(&target.node_type) {
            if desc.category == Category::Source {
                issues.push(error(
                    Some(&w.from_node),
                    format!(
                        "wire {}.{} -> {}: \"{}\" nodes do not accept input",
                        w.from_node, w.from_port, w.to_node, desc.type_name
                    ),
                ));
            }
        }
    }

    // Stable: keeps discovery order within a node.
    issues.sort_by(|a, b| a.node_id.cmp(&b.node_id));
    issues
}
