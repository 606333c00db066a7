use serde::Deserialize;
use serde_json::{json, Map};

use super::{Config, FlowError, FlowGraph, NodeSpec, Wire};

pub const FLOW_FORMAT_VERSION: u32 = 1;

const TOP_LEVEL_KEYS: [&str; 5] = ["version", "id", "label", "nodes", "wires"];

#[derive(Deserialize)]
struct NodeDoc {
    id: String,
    #[serde(rename = "type")]
    node_type: String,
    #[serde(default)]
    label: String,
    #[serde(default)]
    config: Config,
    outputs: u32,
}

#[derive(Deserialize)]
struct EndpointDoc {
    node: String,
    #[serde(default)]
    output: u32,
}

#[derive(Deserialize)]
struct WireDoc {
    from: EndpointDoc,
    to: EndpointDoc,
}

fn malformed(e: impl std::fmt::Display) -> FlowError {
    FlowError::MalformedDocument(e.to_string())
}

/// Parses a flow document, returning the graph and warnings for ignored
/// top-level fields.
pub fn parse_flow_with_warnings(document: &str) -> Result<(FlowGraph, Vec<String>), FlowError> {
    let root: serde_json::Value = serde_json::from_str(document).map_err(malformed)?;
    let serde_json::Value::Object(mut top) = root else {
        return Err(malformed("document must be a JSON object"));
    };

    let warnings: Vec<String> = top
        .keys()
        .filter(|k| !TOP_LEVEL_KEYS.contains(&k.as_str()))
        .map(|k| format!("ignoring unknown top-level field \"{k}\""))
        .collect();

    let version = top
        .get("version")
        .ok_or_else(|| malformed("missing field `version`"))?
        .as_u64()
        .ok_or_else(|| malformed("`version` must be a non-negative integer"))?;
    if version != u64::from(FLOW_FORMAT_VERSION) {
        return Err(FlowError::UnsupportedVersion(version));
    }

    let text_field = |top: &Map<String, serde_json::Value>, key: &str, required: bool| {
        match top.get(key) {
            Some(serde_json::Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(malformed(format!("`{key}` must be a string"))),
            None if required => Err(malformed(format!("missing field `{key}`"))),
            None => Ok(String::new()),
        }
    };
    let id = text_field(&top, "id", true)?;
    let label = text_field(&top, "label", false)?;

    let nodes: Vec<NodeDoc> = match top.remove("nodes") {
        Some(v) => serde_json::from_value(v).map_err(|e| malformed(format!("nodes: {e}")))?,
        None => Vec::new(),
    };
    let wires: Vec<WireDoc> = match top.remove("wires") {
        Some(v) => serde_json::from_value(v).map_err(|e| malformed(format!("wires: {e}")))?,
        None => Vec::new(),
    };

    let graph = FlowGraph {
        id,
        label,
        version: FLOW_FORMAT_VERSION,
        nodes: nodes
            .into_iter()
            .map(|n| NodeSpec {
                id: n.id.into(),
                node_type: n.node_type,
                label: n.label,
                config: n.config,
                outputs: n.outputs,
            })
            .collect(),
        wires: wires
            .into_iter()
            .map(|w| Wire::new(w.from.node, w.from.output, w.to.node))
            .collect(),
    };
    graph.check_structure()?;
    Ok((graph, warnings))
}

/// Parses a flow document. Unknown top-level fields are logged and ignored.
pub fn parse_flow(document: &str) -> Result<FlowGraph, FlowError> {
    let (graph, warnings) = parse_flow_with_warnings(document)?;
    for w in warnings {
        tracing::warn!(flow = %graph.id, "{w}");
    }
    Ok(graph)
}

/// Canonical document: sorted keys, two-space indentation, trailing newline.
pub fn serialize_flow(graph: &FlowGraph) -> String {
    let nodes: Vec<serde_json::Value> = graph
        .nodes
        .iter()
        .map(|n| {
            json!({
                "id": n.id.as_str(),
                "type": n.node_type,
                "label": n.label,
                "config": serde_json::Value::Object(
                    n.config.iter().map(|(k, v)| (k.clone(), v.to_json())).collect()
                ),
                "outputs": n.outputs,
            })
        })
        .collect();
    let wires: Vec<serde_json::Value> = graph
        .wires
        .iter()
        .map(|w| {
            json!({
                "from": {"node": w.from_node.as_str(), "output": w.from_port},
                "to": {"node": w.to_node.as_str()},
            })
        })
        .collect();
    let doc = json!({
        "version": graph.version,
        "id": graph.id,
        "label": graph.label,
        "nodes": nodes,
        "wires": wires,
    });
    let mut out = serde_json::to_string_pretty(&doc).expect("flow documents are always valid JSON");
    out.push('\n');
    out
}
