//! Reference implementations and generators shared by the property tests and
//! the acceptance gate. Everything here is written independently of the code
//! under test.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use proptest::prelude::*;
use seismoflow_core::domain::SensorRegistry;
use seismoflow_core::flow::{Config, FlowGraph, Message, NodeSpec, Value};
use seismoflow_core::nodes::{DEBUG, JOIN};
use seismoflow_core::palette::{Category, Group, NodeTypeDescriptor, Palette};
use seismoflow_core::runtime::{
    DebugEvent, DeployEnv, Deployment, DeploymentOptions, EventKind, NodeBehavior, NodeContext,
    NodeError, NodeInstance, RuntimeEnv, VirtualClock,
};
use seismoflow_core::transport::InMemoryBroker;

// ---------------------------------------------------------------- routing

/// A random DAG: wires only go from lower to higher node index.
#[derive(Debug, Clone)]
pub struct DagCase {
    /// Output port count per node (1..=3).
    pub outputs: Vec<u32>,
    /// (from, port, to), unique.
    pub wires: Vec<(usize, u32, usize)>,
    /// (node, payload)
    pub injections: Vec<(usize, i64)>,
}

pub fn dag_case() -> impl Strategy<Value = DagCase> {
    (1usize..=10)
        .prop_flat_map(|n| {
            let outputs = proptest::collection::vec(1u32..=3, n);
            let wires = proptest::collection::vec((0..n, 0u32..3, 0..n), 0..=40);
            let injections = proptest::collection::vec((0..n, -1000i64..1000), 1..=100);
            (outputs, wires, injections)
        })
        .prop_map(|(outputs, raw, injections)| {
            let mut seen = BTreeSet::new();
            let mut wires = Vec::new();
            for (a, p, b) in raw {
                let (from, to) = (a.min(b), a.max(b));
                let port = p % outputs[from];
                if from != to && wires.len() < 20 && seen.insert((from, port, to)) {
                    wires.push((from, port, to));
                }
            }
            DagCase {
                outputs,
                wires,
                injections,
            }
        })
}

/// Copies every input to each of its output ports and records consumption
/// in the debug stream.
struct Fork {
    outputs: u32,
}

impl NodeBehavior for Fork {
    fn on_input(&mut self, ctx: &mut NodeContext<'_>, msg: Message) -> Result<(), NodeError> {
        ctx.debug(msg.clone());
        for p in 0..self.outputs {
            ctx.send(p, msg.clone());
        }
        Ok(())
    }
}

fn fork_type(outputs: u32) -> NodeTypeDescriptor {
    fn factory(spec: &NodeSpec, _: &Config, _: &DeployEnv<'_>) -> Result<NodeInstance, String> {
        Ok(NodeInstance::new(Fork {
            outputs: spec.outputs,
        }))
    }
    NodeTypeDescriptor {
        type_name: format!("fork{outputs}"),
        label: format!("Fork {outputs}"),
        help: "Copies its input to every output.".into(),
        category: Category::Transform,
        group: Group::General,
        config_schema: vec![],
        outputs,
        behavior: factory,
        check: None,
    }
}

pub fn fork_palette() -> Palette {
    let mut p = Palette::standard();
    for k in 1..=3 {
        p.register(fork_type(k));
    }
    p
}

pub fn dag_graph(case: &DagCase) -> FlowGraph {
    let mut g = FlowGraph::new("dag", "");
    for (i, outs) in case.outputs.iter().enumerate() {
        g = g.add_node(NodeSpec::new(format!("n{i}"), format!("fork{outs}"), *outs));
    }
    for (a, p, b) in &case.wires {
        g = g.add_wire(&format!("n{a}"), *p, &format!("n{b}"));
    }
    g
}

pub fn virtual_env(clock: &VirtualClock) -> RuntimeEnv {
    let clock: Arc<VirtualClock> = Arc::new(clock.clone());
    RuntimeEnv::new(
        Arc::new(InMemoryBroker::new(clock.clone())),
        Arc::new(SensorRegistry::default()),
        clock,
    )
    .options(DeploymentOptions {
        route_log_capacity: None,
        event_log_capacity: None,
        ..DeploymentOptions::default()
    })
}

/// Breadth-first propagation: every (node, payload) consumption.
pub fn reference_deliveries(case: &DagCase) -> BTreeMap<(usize, i64), usize> {
    let mut out = BTreeMap::new();
    for &(start, payload) in &case.injections {
        let mut queue = VecDeque::from([start]);
        while let Some(n) = queue.pop_front() {
            *out.entry((n, payload)).or_default() += 1;
            for &(a, _, b) in &case.wires {
                if a == n {
                    queue.push_back(b);
                }
            }
        }
    }
    out
}

#[derive(Debug, Default)]
pub struct DagOutcome {
    pub discrepancies: Vec<String>,
}

/// Deploys the case, injects everything, and checks the three routing
/// properties against the reference walker.
pub fn check_dag(case: &DagCase) -> DagOutcome {
    let mut outcome = DagOutcome::default();
    let clock = VirtualClock::new(0);
    let palette = fork_palette();
    let graph = dag_graph(case);
    let mut d = Deployment::deploy(&graph, &palette, virtual_env(&clock)).expect("deploys");
    for &(node, payload) in &case.injections {
        let id = format!("n{node}");
        let m = d.new_message("test", Value::from(payload));
        d.inject(&id, m).unwrap();
    }
    d.run_until_idle();

    let consumed: Vec<&DebugEvent> = d
        .debug_events()
        .filter(|e| e.kind == EventKind::Debug)
        .collect();
    let mut actual: BTreeMap<(usize, i64), usize> = BTreeMap::new();
    for e in &consumed {
        let n: usize = e.node_id.as_str()[1..].parse().unwrap();
        let p = e.message.as_ref().unwrap().payload.as_f64().unwrap() as i64;
        *actual.entry((n, p)).or_default() += 1;
    }
    let expected = reference_deliveries(case);
    if actual != expected {
        outcome
            .discrepancies
            .push(format!("deliveries differ: got {actual:?}, expected {expected:?}"));
    }

    // exactly once per (produced message, wire)
    let mut per_wire: BTreeMap<(String, usize), usize> = BTreeMap::new();
    let mut produced: BTreeMap<(String, String, u32), usize> = BTreeMap::new();
    for r in d.route_records() {
        *per_wire.entry((r.message_id.clone(), r.wire_index)).or_default() += 1;
        *produced
            .entry((r.message_id.clone(), r.from_node.to_string(), r.from_port))
            .or_default() += 1;
        if r.delivered_id != format!("{}:{}", r.message_id, r.wire_index) {
            outcome.discrepancies.push(format!("bad delivered id {}", r.delivered_id));
        }
    }
    if let Some(((m, w), c)) = per_wire.iter().find(|(_, c)| **c != 1) {
        outcome
            .discrepancies
            .push(format!("message {m} crossed wire {w} {c} times"));
    }
    for ((m, from, port), count) in &produced {
        let idx: usize = from[1..].parse().unwrap();
        let wires = case
            .wires
            .iter()
            .filter(|(a, p, _)| *a == idx && *p == *port)
            .count();
        if wires != *count {
            outcome.discrepancies.push(format!(
                "message {m} from {from}:{port} delivered {count} times over {wires} wires"
            ));
        }
    }

    // per-wire FIFO: route order equals consumption order on each wire
    for w in 0..case.wires.len() {
        let suffix = format!(":{w}");
        let to = format!("n{}", case.wires[w].2);
        let routed: Vec<String> = d
            .route_records()
            .filter(|r| r.wire_index == w)
            .map(|r| r.delivered_id.clone())
            .collect();
        let processed: Vec<String> = consumed
            .iter()
            .filter(|e| e.node_id.as_str() == to)
            .map(|e| e.message.as_ref().unwrap().id.clone())
            .filter(|id| id.ends_with(&suffix))
            .collect();
        if routed != processed {
            outcome.discrepancies.push(format!("wire {w} out of order"));
        }
    }
    outcome
}

// ---------------------------------------------------------------- join

/// Emission times of a k-distinct-key sliding window that resets after
/// firing, by exhaustive rescanning of the trace.
pub fn brute_force_join(k: usize, window_ms: u64, trace: &[(String, u64)]) -> Vec<u64> {
    let mut fired = Vec::new();
    let mut epoch_start = 0;
    for i in 0..trace.len() {
        let now = trace[i].1;
        let keys: BTreeSet<&str> = trace[epoch_start..=i]
            .iter()
            .filter(|(_, t)| now - t <= window_ms)
            .map(|(key, _)| key.as_str())
            .collect();
        if keys.len() >= k {
            fired.push(now);
            epoch_start = i + 1;
        }
    }
    fired
}

#[derive(Debug, Clone)]
pub struct JoinCase {
    pub k: usize,
    pub window_ms: u64,
    /// (sensor, time), times non-decreasing.
    pub trace: Vec<(String, u64)>,
}

pub fn join_case() -> impl Strategy<Value = JoinCase> {
    (
        2usize..=4,
        1u64..=50,
        proptest::collection::vec((0usize..5, 0u64..30), 0..40),
    )
        .prop_map(|(k, window_ms, steps)| {
            let mut t = 0;
            let trace = steps
                .into_iter()
                .map(|(s, gap)| {
                    t += gap;
                    (["A", "B", "C", "D", "E"][s].to_string(), t)
                })
                .collect();
            JoinCase { k, window_ms, trace }
        })
}

/// Emission times of a deployed join node fed `case.trace` in virtual time.
pub fn deployed_join(case: &JoinCase) -> Vec<u64> {
    let clock = VirtualClock::new(0);
    let graph = FlowGraph::new("join", "")
        .add_node(
            NodeSpec::new("j", JOIN, 1)
                .set("count", case.k as f64)
                .set("windowMs", case.window_ms as f64),
        )
        .add_node(NodeSpec::new("out", DEBUG, 0))
        .add_wire("j", 0, "out");
    let mut d = Deployment::deploy(&graph, &Palette::standard(), virtual_env(&clock)).unwrap();
    for (sensor, t) in &case.trace {
        d.advance_virtual(&clock, *t);
        let m = d.new_message("src", Value::Number(1.0)).with_meta("sensor", sensor.as_str());
        d.inject("j", m).unwrap();
        d.run_until_idle();
    }
    d.debug_events()
        .filter(|e| e.kind == EventKind::Debug)
        .map(|e| e.timestamp_ms)
        .collect()
}

// ---------------------------------------------------------------- topics

/// Recursive MQTT filter matcher over level lists.
pub fn reference_match(filter: &str, topic: &str) -> bool {
    fn go(f: &[&str], t: &[&str]) -> bool {
        match (f.first(), t.first()) {
            (Some(&"#"), _) => true,
            (None, None) => true,
            (Some(&"+"), Some(_)) => go(&f[1..], &t[1..]),
            (Some(a), Some(b)) if a == b => go(&f[1..], &t[1..]),
            _ => false,
        }
    }
    let f: Vec<&str> = filter.split('/').collect();
    let t: Vec<&str> = topic.split('/').collect();
    if topic.starts_with('$') && (f[0] == "+" || f[0] == "#") {
        return false;
    }
    go(&f, &t)
}

fn level() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("a".to_string()),
        Just("b".to_string()),
        Just("c".to_string()),
        Just("".to_string()),
        Just("$sys".to_string()),
    ]
}

pub fn topic() -> impl Strategy<Value = String> {
    proptest::collection::vec(level(), 1..5)
        .prop_map(|v| v.join("/"))
        .prop_filter("publish topics are non-empty", |t| !t.is_empty())
}

pub fn filter() -> impl Strategy<Value = String> {
    (
        proptest::collection::vec(
            prop_oneof![3 => level(), 1 => Just("+".to_string())],
            0..5,
        ),
        any::<bool>(),
    )
        .prop_filter_map("non-empty", |(mut v, hash)| {
            if hash {
                v.push("#".into());
            }
            (!v.is_empty()).then(|| v.join("/"))
        })
}

// ---------------------------------------------------------------- flows

fn ident() -> impl Strategy<Value = String> {
    "[a-e][a-e0-9]{0,5}"
}

fn value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        (-1.0e6f64..1.0e6).prop_map(Value::Number),
        (-1000i64..1000).prop_map(|i| Value::Number(i as f64)),
        "[a-e ]{0,8}".prop_map(Value::Text),
        any::<bool>().prop_map(Value::Bool),
    ];
    leaf.prop_recursive(2, 12, 4, |inner| {
        prop_oneof![
            proptest::collection::vec(inner.clone(), 0..4).prop_map(Value::List),
            proptest::collection::btree_map(ident(), inner, 0..4).prop_map(Value::Map),
        ]
    })
}

/// Structurally valid flows of arbitrary node types, with text drawn from an
/// alphabet that cannot spell any hidden token.
pub fn flow() -> impl Strategy<Value = FlowGraph> {
    (
        ident(),
        "[a-e ]{0,10}",
        proptest::collection::btree_map(ident(), (ident(), "[a-e ]{0,6}", 0u32..4), 0..8),
        proptest::collection::vec(proptest::collection::btree_map(ident(), value(), 0..3), 8),
        proptest::collection::vec((any::<prop::sample::Index>(), 0u32..4, any::<prop::sample::Index>()), 0..12),
    )
        .prop_map(|(id, label, nodes, configs, wires)| {
            let mut g = FlowGraph::new(id, label);
            let ids: Vec<String> = nodes.keys().cloned().collect();
            for (i, (nid, (ty, label, outputs))) in nodes.into_iter().enumerate() {
                let mut spec = NodeSpec::new(nid, ty, outputs).label(label);
                spec.config = configs[i].clone();
                g = g.add_node(spec);
            }
            if !ids.is_empty() {
                let mut seen = BTreeSet::new();
                for (a, p, b) in wires {
                    let from = a.get(&ids);
                    let outs = g.node(from).unwrap().outputs;
                    if outs == 0 {
                        continue;
                    }
                    let to = b.get(&ids).clone();
                    let port = p % outs;
                    if seen.insert((from.clone(), port, to.clone())) {
                        g = g.add_wire(from, port, &to);
                    }
                }
            }
            g
        })
}
