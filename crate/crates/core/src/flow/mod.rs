//! Flow graph data model: nodes, wires, messages and the canonical document
//! format they persist to.

mod format;
mod validate;
mod value;

use std::borrow::Borrow;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use format::{parse_flow, parse_flow_with_warnings, serialize_flow, FLOW_FORMAT_VERSION};
pub use validate::{validate_flow, Issue, Severity};
pub use value::{Value, ValueError};

/// Identifier of a node, unique within its flow.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Borrow<str> for NodeId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(s)
    }
}

pub type Config = BTreeMap<String, Value>;

/// The unit routed between nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Message {
    pub id: String,
    pub payload: Value,
    pub source_node: NodeId,
    pub timestamp_ms: u64,
    pub hop_count: u32,
    pub meta: BTreeMap<String, String>,
}

impl Message {
    pub fn new(id: impl Into<String>, source_node: NodeId, timestamp_ms: u64, payload: Value) -> Self {
        Message {
            id: id.into(),
            payload,
            source_node,
            timestamp_ms,
            hop_count: 0,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    /// Same lineage, metadata and hop count, new payload.
    pub fn with_payload(&self, payload: Value) -> Self {
        Message {
            payload,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: NodeId,
    pub node_type: String,
    pub label: String,
    pub config: Config,
    pub outputs: u32,
}

impl NodeSpec {
    pub fn new(id: impl Into<NodeId>, node_type: impl Into<String>, outputs: u32) -> Self {
        NodeSpec {
            id: id.into(),
            node_type: node_type.into(),
            label: String::new(),
            config: Config::new(),
            outputs,
        }
    }

    pub fn label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn set(mut self, key: impl Into<String>, value: impl Into<Value>) -> Self {
        self.config.insert(key.into(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Wire {
    pub from_node: NodeId,
    pub from_port: u32,
    pub to_node: NodeId,
}

impl Wire {
    pub fn new(from_node: impl Into<NodeId>, from_port: u32, to_node: impl Into<NodeId>) -> Self {
        Wire {
            from_node: from_node.into(),
            from_port,
            to_node: to_node.into(),
        }
    }
}

/// Nodes and directed wires: the deployable artifact of end-user work.
///
/// Cycles are allowed; loop protection lives in the runtime.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowGraph {
    pub id: String,
    pub label: String,
    pub version: u32,
    pub nodes: Vec<NodeSpec>,
    pub wires: Vec<Wire>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FlowError {
    #[error("malformed flow document: {0}")]
    MalformedDocument(String),
    #[error("unsupported flow format version {0}")]
    UnsupportedVersion(u64),
    #[error("wire {from}.{port} -> {to} references missing node \"{missing}\"")]
    DanglingWire {
        from: NodeId,
        port: u32,
        to: NodeId,
        missing: NodeId,
    },
    #[error("wire {from}.{port} -> {to} uses port {port} but node {from} has {outputs} outputs")]
    BadPort {
        from: NodeId,
        port: u32,
        to: NodeId,
        outputs: u32,
    },
    #[error("duplicate node id \"{0}\"")]
    DuplicateNodeId(NodeId),
    #[error("duplicate wire {from}.{port} -> {to}")]
    DuplicateWire { from: NodeId, port: u32, to: NodeId },
    #[error("unknown node \"{0}\"")]
    UnknownNode(NodeId),
}

impl FlowGraph {
    pub fn new(id: impl Into<String>, label: impl Into<String>) -> Self {
        FlowGraph {
            id: id.into(),
            label: label.into(),
            version: FLOW_FORMAT_VERSION,
            nodes: Vec::new(),
            wires: Vec::new(),
        }
    }

    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id.as_str() == id)
    }

    pub fn add_node(mut self, node: NodeSpec) -> Self {
        self.nodes.push(node);
        self
    }

    pub fn add_wire(mut self, from: &str, port: u32, to: &str) -> Self {
        self.wires.push(Wire::new(from, port, to));
        self
    }

    /// Checks the structural invariants: distinct node ids, wires between
    /// present nodes on declared ports, no duplicate wires.
    pub fn check_structure(&self) -> Result<(), FlowError> {
        self.structure_errors().into_iter().next().map_or(Ok(()), Err)
    }

    pub(crate) fn structure_errors(&self) -> Vec<FlowError> {
        let mut errors = Vec::new();
        let mut outputs: BTreeMap<&str, u32> = BTreeMap::new();
        for n in &self.nodes {
            if outputs.insert(n.id.as_str(), n.outputs).is_some() {
                errors.push(FlowError::DuplicateNodeId(n.id.clone()));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for w in &self.wires {
            let missing = [&w.from_node, &w.to_node]
                .into_iter()
                .find(|id| !outputs.contains_key(id.as_str()));
            if let Some(missing) = missing {
                errors.push(FlowError::DanglingWire {
                    from: w.from_node.clone(),
                    port: w.from_port,
                    to: w.to_node.clone(),
                    missing: missing.clone(),
                });
                continue;
            }
            let declared = outputs[w.from_node.as_str()];
            if w.from_port >= declared {
                errors.push(FlowError::BadPort {
                    from: w.from_node.clone(),
                    port: w.from_port,
                    to: w.to_node.clone(),
                    outputs: declared,
                });
            }
            if !seen.insert(w) {
                errors.push(FlowError::DuplicateWire {
                    from: w.from_node.clone(),
                    port: w.from_port,
                    to: w.to_node.clone(),
                });
            }
        }
        errors
    }

    /// Targets of the wires leaving `node` on `port`, in declaration order.
    pub fn downstream(&self, node: &str, port: u32) -> Result<Vec<NodeId>, FlowError> {
        if self.node(node).is_none() {
            return Err(FlowError::UnknownNode(node.into()));
        }
        Ok(self
            .wires
            .iter()
            .filter(|w| w.from_node.as_str() == node && w.from_port == port)
            .map(|w| w.to_node.clone())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fan_out() -> FlowGraph {
        FlowGraph::new("f", "fan")
            .add_node(NodeSpec::new("src", "inject", 1))
            .add_node(NodeSpec::new("a", "debug", 0))
            .add_node(NodeSpec::new("b", "debug", 0))
            .add_node(NodeSpec::new("c", "debug", 0))
            .add_wire("src", 0, "b")
            .add_wire("src", 0, "a")
            .add_wire("src", 0, "c")
    }

    #[test]
    fn downstream_keeps_declaration_order() {
        let g = fan_out();
        let ids: Vec<_> = g.downstream("src", 0).unwrap();
        assert_eq!(ids, vec![NodeId::from("b"), "a".into(), "c".into()]);
        assert!(g.downstream("a", 0).unwrap().is_empty());
        assert_eq!(
            g.downstream("nope", 0),
            Err(FlowError::UnknownNode("nope".into()))
        );
    }

    #[test]
    fn structure_detects_each_violation() {
        let g = fan_out().add_wire("src", 0, "a");
        assert!(matches!(g.check_structure(), Err(FlowError::DuplicateWire { .. })));

        let g = fan_out().add_wire("src", 1, "a");
        assert!(matches!(g.check_structure(), Err(FlowError::BadPort { port: 1, .. })));

        let g = fan_out().add_wire("src", 0, "n9");
        match g.check_structure() {
            Err(FlowError::DanglingWire { missing, .. }) => assert_eq!(missing.as_str(), "n9"),
            other => panic!("unexpected {other:?}"),
        }

        let g = fan_out().add_node(NodeSpec::new("a", "debug", 0));
        assert_eq!(g.check_structure(), Err(FlowError::DuplicateNodeId("a".into())));
    }

    #[test]
    fn cycles_are_structurally_valid() {
        let g = FlowGraph::new("c", "cycle")
            .add_node(NodeSpec::new("x", "threshold", 1))
            .add_node(NodeSpec::new("y", "threshold", 1))
            .add_wire("x", 0, "y")
            .add_wire("y", 0, "x");
        assert!(g.check_structure().is_ok());
    }
}
