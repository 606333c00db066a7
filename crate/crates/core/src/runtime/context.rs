use crate::domain::{EarthquakeEvent, SensorRegistry};
use crate::flow::{Message, NodeId, Value};
use crate::transport::BrokerMessage;

use super::events::DiagnosticKind;
use super::services::Services;

/// Failure of a handler for one message; the deployment reports it and keeps
/// running.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct NodeError(pub String);

impl NodeError {
    pub fn new(msg: impl Into<String>) -> Self {
        NodeError(msg.into())
    }
}

/// Runtime behavior of one node. Invoked only from the deployment's serial
/// loop, never concurrently with itself.
pub trait NodeBehavior: Send {
    /// Called once after the deployment becomes active.
    fn on_start(&mut self, _ctx: &mut NodeContext<'_>) {}

    fn on_input(&mut self, ctx: &mut NodeContext<'_>, msg: Message) -> Result<(), NodeError>;

    fn on_broker(
        &mut self,
        _ctx: &mut NodeContext<'_>,
        _msg: &BrokerMessage,
    ) -> Result<(), NodeError> {
        Ok(())
    }

    fn on_quake(
        &mut self,
        _ctx: &mut NodeContext<'_>,
        _event: &EarthquakeEvent,
    ) -> Result<(), NodeError> {
        Ok(())
    }

    fn on_timer(&mut self, _ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        Ok(())
    }
}

/// What a node needs from the platform besides its behavior.
pub struct NodeInstance {
    pub behavior: Box<dyn NodeBehavior>,
    /// Topic filters to subscribe on the deployment's broker.
    pub topics: Vec<String>,
    /// Whether the node consumes the deployment's earthquake stream.
    pub consumes_quakes: bool,
    /// Requested polling interval of the earthquake stream.
    pub quake_poll_ms: Option<u64>,
}

impl NodeInstance {
    pub fn new(behavior: impl NodeBehavior + 'static) -> Self {
        NodeInstance {
            behavior: Box::new(behavior),
            topics: Vec::new(),
            consumes_quakes: false,
            quake_poll_ms: None,
        }
    }

    pub fn subscribe(mut self, topic: String) -> Self {
        self.topics.push(topic);
        self
    }

    pub fn quakes(mut self, poll_ms: Option<u64>) -> Self {
        self.consumes_quakes = true;
        self.quake_poll_ms = poll_ms;
        self
    }
}

/// Deployment-level context available while instantiating nodes.
pub struct DeployEnv<'a> {
    pub registry: &'a SensorRegistry,
}

pub(crate) enum Effect {
    Send(u32, Message),
    Debug(Message),
    Notify(String),
    Diagnostic(DiagnosticKind, String),
    Timer(u64),
}

/// Handle given to a behavior for one invocation. Effects are applied by the
/// deployment after the handler returns.
pub struct NodeContext<'a> {
    pub(crate) node_id: &'a NodeId,
    pub(crate) now_ms: u64,
    pub(crate) services: &'a Services,
    pub(crate) next_id: &'a mut u64,
    pub(crate) effects: Vec<Effect>,
}

impl<'a> NodeContext<'a> {
    pub(crate) fn new(
        node_id: &'a NodeId,
        now_ms: u64,
        services: &'a Services,
        next_id: &'a mut u64,
    ) -> Self {
        NodeContext {
            node_id,
            now_ms,
            services,
            next_id,
            effects: Vec::new(),
        }
    }

    pub fn node_id(&self) -> &NodeId {
        self.node_id
    }

    pub fn now_ms(&self) -> u64 {
        self.now_ms
    }

    pub fn services(&self) -> &Services {
        self.services
    }

    /// A fresh message produced by this node at the current time.
    pub fn new_message(&mut self, payload: Value) -> Message {
        let id = format!("m{}", *self.next_id);
        *self.next_id += 1;
        Message::new(id, self.node_id.clone(), self.now_ms, payload)
    }

    pub fn send(&mut self, port: u32, msg: Message) {
        self.effects.push(Effect::Send(port, msg));
    }

    /// Publishes a message snapshot to the debug stream.
    pub fn debug(&mut self, msg: Message) {
        self.effects.push(Effect::Debug(msg));
    }

    /// Records a successful notification.
    pub fn notified(&mut self, text: impl Into<String>) {
        self.effects.push(Effect::Notify(text.into()));
    }

    pub fn diagnostic(&mut self, kind: DiagnosticKind, text: impl Into<String>) {
        self.effects.push(Effect::Diagnostic(kind, text.into()));
    }

    /// Asks for `on_timer` at clock time `at_ms`.
    pub fn schedule_at(&mut self, at_ms: u64) {
        self.effects.push(Effect::Timer(at_ms));
    }
}
