use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, HashSet, VecDeque};
use std::io::Write;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use crate::domain::{EarthquakeEvent, SensorRegistry};
use crate::flow::{validate_flow, FlowGraph, Message, NodeId, Severity, Value};
use crate::palette::Palette;
use crate::transport::{poll_feed, Broker, BrokerMessage, FeedSource, SubscriptionToken};

use super::clock::{Clock, VirtualClock};
use super::context::{DeployEnv, Effect, NodeBehavior, NodeContext};
use super::events::{DebugEvent, DiagnosticKind, EventKind, EventListener, RouteRecord};
use super::services::Services;

pub const DEFAULT_HOP_LIMIT: u32 = 1024;
pub const DEFAULT_DRAIN: Duration = Duration::from_secs(5);
pub const DEFAULT_QUAKE_POLL_MS: u64 = 60_000;

/// What happens to queued work when a deployment stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrainPolicy {
    /// Keep processing for at most this long, then discard the rest.
    Drain(Duration),
    Discard,
}

#[derive(Debug, Clone)]
pub struct DeploymentOptions {
    pub hop_limit: u32,
    pub drain: DrainPolicy,
    /// Earthquake polling interval when no feed node asks for one.
    pub quake_poll_ms: u64,
    /// Retained route records; `None` keeps all.
    pub route_log_capacity: Option<usize>,
    /// Retained debug events; `None` keeps all.
    pub event_log_capacity: Option<usize>,
}

impl Default for DeploymentOptions {
    fn default() -> Self {
        DeploymentOptions {
            hop_limit: DEFAULT_HOP_LIMIT,
            drain: DrainPolicy::Drain(DEFAULT_DRAIN),
            quake_poll_ms: DEFAULT_QUAKE_POLL_MS,
            route_log_capacity: Some(100_000),
            event_log_capacity: Some(10_000),
        }
    }
}

/// Newline-delimited audit records, `timestampMs \t messageId \t fromNode \t toNode`.
#[derive(Clone)]
pub struct AuditLog(Arc<Mutex<Box<dyn Write + Send>>>);

impl AuditLog {
    pub fn new(writer: impl Write + Send + 'static) -> Self {
        AuditLog(Arc::new(Mutex::new(Box::new(writer))))
    }

    pub fn create(path: &std::path::Path) -> std::io::Result<Self> {
        Ok(AuditLog::new(std::io::BufWriter::new(std::fs::File::create(path)?)))
    }

    /// An in-memory log and a handle to its contents.
    pub fn memory() -> (Self, Arc<Mutex<Vec<u8>>>) {
        struct Shared(Arc<Mutex<Vec<u8>>>);
        impl Write for Shared {
            fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
                self.0.lock().unwrap().extend_from_slice(buf);
                Ok(buf.len())
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }
        let buf = Arc::new(Mutex::new(Vec::new()));
        (AuditLog::new(Shared(buf.clone())), buf)
    }

    fn record(&self, r: &RouteRecord) {
        let mut w = self.0.lock().unwrap();
        if let Err(e) = writeln!(w, "{}", r.audit_line()) {
            tracing::warn!("audit log write failed: {e}");
        }
    }

    pub fn flush(&self) {
        let _ = self.0.lock().unwrap().flush();
    }
}

/// Everything a deployment runs against besides the graph itself.
#[derive(Clone)]
pub struct RuntimeEnv {
    pub broker: Arc<dyn Broker>,
    pub registry: Arc<SensorRegistry>,
    pub clock: Arc<dyn Clock>,
    pub services: Services,
    pub feed: Option<Arc<dyn FeedSource>>,
    pub options: DeploymentOptions,
    pub listeners: Vec<EventListener>,
    pub audit: Option<AuditLog>,
}

impl RuntimeEnv {
    pub fn new(broker: Arc<dyn Broker>, registry: Arc<SensorRegistry>, clock: Arc<dyn Clock>) -> Self {
        RuntimeEnv {
            broker,
            registry,
            clock,
            services: Services::default(),
            feed: None,
            options: DeploymentOptions::default(),
            listeners: Vec::new(),
            audit: None,
        }
    }

    pub fn services(mut self, services: Services) -> Self {
        self.services = services;
        self
    }

    pub fn feed(mut self, feed: Arc<dyn FeedSource>) -> Self {
        self.feed = Some(feed);
        self
    }

    pub fn options(mut self, options: DeploymentOptions) -> Self {
        self.options = options;
        self
    }

    pub fn listener(mut self, listener: EventListener) -> Self {
        self.listeners.push(listener);
        self
    }

    pub fn audit(mut self, audit: AuditLog) -> Self {
        self.audit = Some(audit);
        self
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("cannot deploy{}: {cause}", node_id.as_ref().map(|n| format!(" node {n}")).unwrap_or_default())]
pub struct DeployError {
    pub node_id: Option<NodeId>,
    pub cause: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RuntimeError {
    #[error("flow is not deployed")]
    NotDeployed,
    #[error("unknown node \"{0}\"")]
    UnknownNode(NodeId),
    #[error("message {message_id} from node {node} reached the hop limit of {limit}")]
    LoopLimit {
        node: NodeId,
        message_id: String,
        limit: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeploymentState {
    Deployed,
    Stopped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub struct StopReport {
    /// Work items processed while draining.
    pub drained: usize,
    /// Work items dropped.
    pub discarded: usize,
}

/// Work arriving from transport callbacks.
struct Inbound {
    node: NodeId,
    message: BrokerMessage,
}

type Waker = Arc<dyn Fn() + Send + Sync>;

#[derive(Default)]
struct Inbox {
    queue: Mutex<VecDeque<Inbound>>,
    waker: Mutex<Option<Waker>>,
}

impl Inbox {
    fn push(&self, item: Inbound) {
        self.queue.lock().unwrap().push_back(item);
        if let Some(w) = self.waker.lock().unwrap().as_ref() {
            w();
        }
    }

    fn take(&self) -> VecDeque<Inbound> {
        std::mem::take(&mut *self.queue.lock().unwrap())
    }
}

enum Work {
    Input(NodeId, Message),
    Deliver(NodeId, Message),
    Broker(NodeId, BrokerMessage),
    Quake(NodeId, Arc<EarthquakeEvent>),
    Timer(NodeId),
}

enum Invocation {
    Start,
    Input(Message),
    Broker(BrokerMessage),
    Quake(Arc<EarthquakeEvent>),
    Timer,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum TimerTarget {
    QuakePoll,
    Node(NodeId),
}

struct QuakeStream {
    source: Arc<dyn FeedSource>,
    interval_ms: u64,
    seen: HashSet<String>,
    consumers: Vec<NodeId>,
}

/// A deployed flow: node behaviors, wiring, the serial work queue and the
/// logs the editor and tests observe.
///
/// All processing happens in `run_until_idle` and `fire_due_timers`, on the
/// caller's thread; transport callbacks only append to the inbox.
pub struct Deployment {
    graph: FlowGraph,
    state: DeploymentState,
    behaviors: BTreeMap<NodeId, Box<dyn NodeBehavior>>,
    routes: HashMap<(NodeId, u32), Vec<(usize, NodeId)>>,
    requested: Vec<(String, NodeId)>,
    subscriptions: BTreeSet<(String, NodeId)>,
    tokens: Vec<SubscriptionToken>,
    queue: VecDeque<Work>,
    inbox: Arc<Inbox>,
    timers: BinaryHeap<Reverse<(u64, u64, TimerTarget)>>,
    timer_seq: u64,
    quakes: Option<QuakeStream>,
    env: RuntimeEnv,
    next_id: u64,
    event_seq: u64,
    events: VecDeque<DebugEvent>,
    route_log: VecDeque<RouteRecord>,
}

/// A deployment whose nodes are instantiated but whose subscriptions are not
/// yet active.
pub struct PreparedDeployment(Deployment);

impl PreparedDeployment {
    pub fn flow(&self) -> &FlowGraph {
        &self.0.graph
    }

    /// Subscribes every source node and starts the nodes.
    pub fn activate(self) -> Result<Deployment, DeployError> {
        let mut d = self.0;
        for (topic, node) in d.requested.clone() {
            let inbox = d.inbox.clone();
            let target = node.clone();
            let cb = Arc::new(move |message: BrokerMessage| {
                inbox.push(Inbound {
                    node: target.clone(),
                    message,
                })
            });
            match d.env.broker.subscribe(&topic, cb) {
                Ok(token) => {
                    d.tokens.push(token);
                    d.subscriptions.insert((topic, node));
                }
                Err(e) => {
                    d.cancel_subscriptions();
                    return Err(DeployError {
                        node_id: Some(node),
                        cause: e.to_string(),
                    });
                }
            }
        }
        d.state = DeploymentState::Deployed;
        let ids: Vec<NodeId> = d.graph.nodes.iter().map(|n| n.id.clone()).collect();
        for id in ids {
            d.invoke(&id, Invocation::Start);
        }
        if d.quakes.is_some() {
            let now = d.env.clock.now_ms();
            d.schedule(now, TimerTarget::QuakePoll);
        }
        Ok(d)
    }
}

impl Deployment {
    /// Instantiates every node without touching the transport.
    pub fn prepare(
        graph: &FlowGraph,
        palette: &Palette,
        env: RuntimeEnv,
    ) -> Result<PreparedDeployment, DeployError> {
        if let Some(issue) = validate_flow(graph, palette)
            .into_iter()
            .find(|i| i.severity == Severity::Error)
        {
            return Err(DeployError {
                node_id: issue.node_id,
                cause: issue.message,
            });
        }

        let deploy_env = DeployEnv {
            registry: &env.registry,
        };
        let mut behaviors = BTreeMap::new();
        let mut requested = Vec::new();
        let mut consumers = Vec::new();
        let mut poll_intervals = Vec::new();
        for spec in &graph.nodes {
            let desc = palette
                .get(&spec.node_type)
                .expect("validated node types are registered");
            let cfg = desc.resolve_config(&spec.config);
            let instance = (desc.behavior)(spec, &cfg, &deploy_env).map_err(|cause| DeployError {
                node_id: Some(spec.id.clone()),
                cause,
            })?;
            for t in instance.topics {
                if !requested.iter().any(|(rt, rn)| *rt == t && *rn == spec.id) {
                    requested.push((t, spec.id.clone()));
                }
            }
            if instance.consumes_quakes {
                consumers.push(spec.id.clone());
            }
            poll_intervals.extend(instance.quake_poll_ms);
            behaviors.insert(spec.id.clone(), instance.behavior);
        }

        let quakes = match (consumers.first(), &env.feed) {
            (None, _) => None,
            (Some(first), None) => {
                return Err(DeployError {
                    node_id: Some(first.clone()),
                    cause: "no earthquake feed is configured for this deployment".into(),
                })
            }
            (Some(_), Some(source)) => Some(QuakeStream {
                source: source.clone(),
                interval_ms: poll_intervals
                    .into_iter()
                    .min()
                    .unwrap_or(env.options.quake_poll_ms)
                    .max(1),
                seen: HashSet::new(),
                consumers,
            }),
        };

        let mut routes: HashMap<(NodeId, u32), Vec<(usize, NodeId)>> = HashMap::new();
        for (i, w) in graph.wires.iter().enumerate() {
            routes
                .entry((w.from_node.clone(), w.from_port))
                .or_default()
                .push((i, w.to_node.clone()));
        }

        Ok(PreparedDeployment(Deployment {
            graph: graph.clone(),
            state: DeploymentState::Stopped,
            behaviors,
            routes,
            requested,
            subscriptions: BTreeSet::new(),
            tokens: Vec::new(),
            queue: VecDeque::new(),
            inbox: Arc::new(Inbox::default()),
            timers: BinaryHeap::new(),
            timer_seq: 0,
            quakes,
            env,
            next_id: 1,
            event_seq: 0,
            events: VecDeque::new(),
            route_log: VecDeque::new(),
        }))
    }

    /// Prepares and activates in one step.
    pub fn deploy(graph: &FlowGraph, palette: &Palette, env: RuntimeEnv) -> Result<Self, DeployError> {
        Deployment::prepare(graph, palette, env)?.activate()
    }

    pub fn flow(&self) -> &FlowGraph {
        &self.graph
    }

    pub fn flow_id(&self) -> &str {
        &self.graph.id
    }

    pub fn state(&self) -> DeploymentState {
        self.state
    }

    /// Active `(topic filter, node)` pairs.
    pub fn subscriptions(&self) -> &BTreeSet<(String, NodeId)> {
        &self.subscriptions
    }

    pub fn debug_events(&self) -> impl Iterator<Item = &DebugEvent> {
        self.events.iter()
    }

    pub fn route_records(&self) -> impl Iterator<Item = &RouteRecord> {
        self.route_log.iter()
    }

    pub fn pending(&self) -> usize {
        self.queue.len() + self.inbox.queue.lock().unwrap().len()
    }

    /// Called after each transport callback enqueues work.
    pub fn set_waker(&self, waker: impl Fn() + Send + Sync + 'static) {
        *self.inbox.waker.lock().unwrap() = Some(Arc::new(waker));
    }

    /// A fresh message id-stamped by this deployment, for external injection.
    pub fn new_message(&mut self, source: &str, payload: Value) -> Message {
        let id = format!("m{}", self.next_id);
        self.next_id += 1;
        Message::new(id, source.into(), self.env.clock.now_ms(), payload)
    }

    /// Enqueues `message` for `node`'s handler. Returns once enqueued.
    pub fn inject(&mut self, node: &str, message: Message) -> Result<(), RuntimeError> {
        if self.state != DeploymentState::Deployed {
            return Err(RuntimeError::NotDeployed);
        }
        let id = self
            .graph
            .node(node)
            .map(|n| n.id.clone())
            .ok_or_else(|| RuntimeError::UnknownNode(node.into()))?;
        self.queue.push_back(Work::Input(id, message));
        Ok(())
    }

    /// Delivers one copy of `message` along every wire leaving
    /// `(produced_by, port)`, each with `hop_count + 1` and a per-wire id
    /// suffix.
    pub fn route_fanout(
        &mut self,
        produced_by: &NodeId,
        port: u32,
        message: Message,
    ) -> Result<Vec<RouteRecord>, RuntimeError> {
        if self.state != DeploymentState::Deployed {
            return Err(RuntimeError::NotDeployed);
        }
        let Some(targets) = self.routes.get(&(produced_by.clone(), port)) else {
            return Ok(Vec::new());
        };
        let limit = self.env.options.hop_limit;
        if message.hop_count >= limit {
            let err = RuntimeError::LoopLimit {
                node: produced_by.clone(),
                message_id: message.id.clone(),
                limit,
            };
            self.emit(
                produced_by,
                EventKind::Diagnostic,
                Some(DiagnosticKind::LoopLimit),
                Some(err.to_string()),
                None,
            );
            return Err(err);
        }
        let now = self.env.clock.now_ms();
        let mut records = Vec::with_capacity(targets.len());
        for (wire_index, to) in targets.clone() {
            let mut copy = message.clone();
            copy.id = format!("{}:{wire_index}", message.id);
            copy.hop_count += 1;
            copy.source_node = produced_by.clone();
            let record = RouteRecord {
                message_id: message.id.clone(),
                delivered_id: copy.id.clone(),
                from_node: produced_by.clone(),
                from_port: port,
                to_node: to.clone(),
                wire_index,
                enqueue_timestamp_ms: now,
            };
            if let Some(a) = &self.env.audit {
                a.record(&record);
            }
            self.queue.push_back(Work::Deliver(to, copy));
            records.push(record);
        }
        for r in &records {
            push_capped(&mut self.route_log, r.clone(), self.env.options.route_log_capacity);
        }
        Ok(records)
    }

    /// Processes queued and inbound work until both are empty. Returns the
    /// number of work items handled.
    pub fn run_until_idle(&mut self) -> usize {
        let mut handled = 0;
        loop {
            self.pull_inbox();
            let Some(work) = self.queue.pop_front() else {
                return handled;
            };
            self.process(work);
            handled += 1;
        }
    }

    /// Earliest pending timer.
    pub fn next_deadline(&self) -> Option<u64> {
        self.timers.peek().map(|Reverse((at, _, _))| *at)
    }

    /// Runs every timer due at the current clock time. Node timers are queued;
    /// call `run_until_idle` to process them.
    pub fn fire_due_timers(&mut self) {
        let now = self.env.clock.now_ms();
        while let Some(Reverse((at, _, _))) = self.timers.peek() {
            if *at > now {
                break;
            }
            let Reverse((_, _, target)) = self.timers.pop().unwrap();
            match target {
                TimerTarget::Node(id) => self.queue.push_back(Work::Timer(id)),
                TimerTarget::QuakePoll => {
                    self.poll_quakes();
                    if let Some(q) = &self.quakes {
                        let next = now + q.interval_ms;
                        self.schedule(next, TimerTarget::QuakePoll);
                    }
                }
            }
        }
    }

    /// Timers due now, then everything they cause.
    pub fn step(&mut self) -> usize {
        self.fire_due_timers();
        self.run_until_idle()
    }

    /// Virtual-time driver: steps `clock` through every timer deadline up to
    /// `target_ms`, settling the queue at each, and leaves it at `target_ms`.
    pub fn advance_virtual(&mut self, clock: &VirtualClock, target_ms: u64) {
        loop {
            self.run_until_idle();
            match self.next_deadline() {
                Some(d) if d <= target_ms => {
                    clock.set(d);
                    self.fire_due_timers();
                }
                _ => break,
            }
        }
        clock.set(target_ms);
        self.step();
    }

    /// Cancels subscriptions and timers, then drains or discards queued work
    /// per the drain policy. Idempotent.
    pub fn stop(&mut self) -> StopReport {
        if self.state == DeploymentState::Stopped {
            return StopReport::default();
        }
        self.cancel_subscriptions();
        self.timers.clear();
        self.pull_inbox();
        let mut report = StopReport::default();
        if let DrainPolicy::Drain(limit) = self.env.options.drain {
            let started = Instant::now();
            while started.elapsed() < limit {
                self.pull_inbox();
                let Some(work) = self.queue.pop_front() else {
                    break;
                };
                self.process(work);
                report.drained += 1;
            }
        }
        self.pull_inbox();
        report.discarded = self.queue.len();
        self.queue.clear();
        self.state = DeploymentState::Stopped;
        if let Some(a) = &self.env.audit {
            a.flush();
        }
        report
    }

    fn cancel_subscriptions(&mut self) {
        for t in self.tokens.drain(..) {
            if let Err(e) = self.env.broker.unsubscribe(t) {
                tracing::warn!(flow = %self.graph.id, "unsubscribe failed: {e}");
            }
        }
        self.subscriptions.clear();
    }

    fn pull_inbox(&mut self) {
        for Inbound { node, message } in self.inbox.take() {
            self.queue.push_back(Work::Broker(node, message));
        }
    }

    fn schedule(&mut self, at: u64, target: TimerTarget) {
        self.timer_seq += 1;
        self.timers.push(Reverse((at, self.timer_seq, target)));
    }

    fn poll_quakes(&mut self) {
        let Some(q) = &mut self.quakes else { return };
        match poll_feed(q.source.as_ref(), &q.seen) {
            Ok((fresh, seen)) => {
                q.seen = seen;
                for ev in fresh {
                    let ev = Arc::new(ev);
                    for c in &q.consumers {
                        self.queue.push_back(Work::Quake(c.clone(), ev.clone()));
                    }
                }
            }
            Err(e) => {
                let consumers = q.consumers.clone();
                for c in consumers {
                    self.emit(
                        &c,
                        EventKind::Diagnostic,
                        Some(DiagnosticKind::FeedUnavailable),
                        Some(e.to_string()),
                        None,
                    );
                }
            }
        }
    }

    fn process(&mut self, work: Work) {
        match work {
            Work::Input(n, m) | Work::Deliver(n, m) => self.invoke(&n, Invocation::Input(m)),
            Work::Broker(n, b) => self.invoke(&n, Invocation::Broker(b)),
            Work::Quake(n, e) => self.invoke(&n, Invocation::Quake(e)),
            Work::Timer(n) => self.invoke(&n, Invocation::Timer),
        }
    }

    fn invoke(&mut self, node: &NodeId, inv: Invocation) {
        let now = self.env.clock.now_ms();
        let Some(behavior) = self.behaviors.get_mut(node) else {
            return;
        };
        let mut ctx = NodeContext::new(node, now, &self.env.services, &mut self.next_id);
        let result = match inv {
            Invocation::Start => {
                behavior.on_start(&mut ctx);
                Ok(())
            }
            Invocation::Input(m) => behavior.on_input(&mut ctx, m),
            Invocation::Broker(b) => behavior.on_broker(&mut ctx, &b),
            Invocation::Quake(e) => behavior.on_quake(&mut ctx, &e),
            Invocation::Timer => behavior.on_timer(&mut ctx),
        };
        let effects = std::mem::take(&mut ctx.effects);
        drop(ctx);
        let failed = result.is_err();
        for effect in effects {
            match effect {
                Effect::Send(port, msg) if !failed => {
                    // Loop-limit refusals are already reported as diagnostics.
                    let _ = self.route_fanout(node, port, msg);
                }
                Effect::Send(..) => {}
                Effect::Debug(msg) => self.emit(node, EventKind::Debug, None, None, Some(msg)),
                Effect::Notify(text) => self.emit(node, EventKind::Notify, None, Some(text), None),
                Effect::Diagnostic(kind, text) => {
                    self.emit(node, EventKind::Diagnostic, Some(kind), Some(text), None)
                }
                Effect::Timer(at) => self.schedule(at, TimerTarget::Node(node.clone())),
            }
        }
        if let Err(e) = result {
            self.emit(
                node,
                EventKind::Diagnostic,
                Some(DiagnosticKind::HandlerError),
                Some(e.to_string()),
                None,
            );
        }
    }

    fn emit(
        &mut self,
        node: &NodeId,
        kind: EventKind,
        diagnostic: Option<DiagnosticKind>,
        text: Option<String>,
        message: Option<Message>,
    ) {
        self.event_seq += 1;
        let event = DebugEvent {
            seq: self.event_seq,
            flow_id: self.graph.id.clone(),
            node_id: node.clone(),
            timestamp_ms: self.env.clock.now_ms(),
            kind,
            diagnostic,
            text,
            message,
        };
        if diagnostic.is_some() {
            tracing::debug!(flow = %self.graph.id, node = %node, "{}", event.text.as_deref().unwrap_or(""));
        }
        for l in &self.env.listeners {
            l(&event);
        }
        push_capped(&mut self.events, event, self.env.options.event_log_capacity);
    }
}

impl std::fmt::Debug for Deployment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Deployment")
            .field("flow", &self.graph.id)
            .field("state", &self.state)
            .field("subscriptions", &self.subscriptions)
            .field("pending", &self.queue.len())
            .finish_non_exhaustive()
    }
}

impl Drop for Deployment {
    fn drop(&mut self) {
        if self.state == DeploymentState::Deployed {
            self.cancel_subscriptions();
        }
    }
}

fn push_capped<T>(log: &mut VecDeque<T>, item: T, cap: Option<usize>) {
    if cap == Some(0) {
        return;
    }
    if let Some(cap) = cap {
        while log.len() >= cap {
            log.pop_front();
        }
    }
    log.push_back(item);
}
