use std::sync::Arc;

use serde::Serialize;

use crate::flow::{Message, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    /// A debug node consumed a message.
    Debug,
    /// A notify node delivered a notification.
    Notify,
    Diagnostic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticKind {
    LoopLimit,
    HandlerError,
    UnknownPlaceholder,
    FeedUnavailable,
}

/// One entry of a deployment's debug stream.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DebugEvent {
    pub seq: u64,
    pub flow_id: String,
    pub node_id: NodeId,
    pub timestamp_ms: u64,
    pub kind: EventKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<DiagnosticKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<Message>,
}

impl DebugEvent {
    pub fn is_diagnostic(&self, kind: DiagnosticKind) -> bool {
        self.diagnostic == Some(kind)
    }
}

/// Called synchronously from the deployment's loop for every event.
pub type EventListener = Arc<dyn Fn(&DebugEvent) + Send + Sync>;

/// One delivery of a produced message along one wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RouteRecord {
    /// Id of the message as produced.
    pub message_id: String,
    /// Id of the delivered copy (produced id plus wire suffix).
    pub delivered_id: String,
    pub from_node: NodeId,
    pub from_port: u32,
    pub to_node: NodeId,
    pub wire_index: usize,
    pub enqueue_timestamp_ms: u64,
}

impl RouteRecord {
    /// `timestampMs \t messageId \t fromNode \t toNode`
    pub fn audit_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}",
            self.enqueue_timestamp_ms, self.delivered_id, self.from_node, self.to_node
        )
    }
}
