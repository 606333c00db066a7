use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use seismoflow_core::domain::SensorRegistry;
use seismoflow_core::flow::{NodeSpec, Value};
use seismoflow_core::palette::Palette;
use seismoflow_core::runtime::{
    DebugEvent, DeployOutcome, Engine, EngineError, EventKind, MemoryConsole, RuntimeEnv,
    Services, SystemClock,
};
use seismoflow_core::simulator::{fig2_flow, fig2_scenario, run_scenario, RealTimePacer, ScriptedFeed};
use seismoflow_core::transport::InMemoryBroker;

fn engine() -> (Engine, Arc<InMemoryBroker>, MemoryConsole) {
    let clock = Arc::new(SystemClock);
    let broker = Arc::new(InMemoryBroker::new(clock.clone()));
    let console = MemoryConsole::new();
    let registry = fig2_scenario().registry().unwrap();
    let env = RuntimeEnv::new(broker.clone(), Arc::new(registry), clock)
        .services(Services::with_console(Arc::new(console.clone())));
    (Engine::start(Arc::new(Palette::standard()), env), broker, console)
}

#[test]
fn deploy_semantics() {
    let (engine, broker, _) = engine();
    let g = fig2_flow();
    assert_eq!(engine.deploy(g.clone(), false).unwrap(), DeployOutcome::Deployed);
    assert_eq!(engine.deploy(g.clone(), false).unwrap(), DeployOutcome::Unchanged);
    assert_eq!(broker.subscription_count(), 2);

    let changed = g.clone().add_node(NodeSpec::new("extra", "debug", 0));
    assert_eq!(
        engine.deploy(changed.clone(), false),
        Err(EngineError::Conflict("fig2".into()))
    );
    assert_eq!(engine.deploy(changed, true).unwrap(), DeployOutcome::Replaced);
    assert_eq!(broker.subscription_count(), 2);

    let status = engine.status("fig2").unwrap();
    assert_eq!(status.state, "deployed");
    assert_eq!(status.subscriptions.len(), 2);

    engine.stop("fig2").unwrap();
    assert_eq!(broker.subscription_count(), 0);
    assert!(engine.status("fig2").is_none());
    assert_eq!(engine.stop("fig2"), Err(EngineError::NotDeployed("fig2".into())));
}

#[test]
fn failed_redeploy_keeps_the_running_flow() {
    let (engine, broker, _) = engine();
    engine.deploy(fig2_flow(), false).unwrap();
    let bad = fig2_flow().add_node(NodeSpec::new("v3", "sensor-vibration", 1).set("sensor", "attic"));
    assert!(matches!(engine.deploy(bad, true), Err(EngineError::Deploy(_))));
    assert_eq!(engine.status("fig2").unwrap().subscriptions.len(), 2);
    assert_eq!(broker.subscription_count(), 2);
}

#[test]
fn broker_traffic_reaches_the_flow_in_real_time() {
    let (engine, broker, console) = engine();
    let events: Arc<Mutex<Vec<DebugEvent>>> = Arc::default();
    let e = events.clone();
    engine.subscribe_events(Arc::new(move |ev: &DebugEvent| e.lock().unwrap().push(ev.clone())));
    engine.deploy(fig2_flow(), false).unwrap();
    let mut scenario = fig2_scenario();
    scenario.events[1].at_ms = 50;
    run_scenario(&scenario, broker.as_ref(), &ScriptedFeed::new(), &mut RealTimePacer::new(1.0)).unwrap();
    let deadline = Instant::now() + Duration::from_secs(5);
    while console.lines().is_empty() && Instant::now() < deadline {
        std::thread::sleep(Duration::from_millis(10));
    }
    assert_eq!(console.lines().len(), 1);
    let notify = events.lock().unwrap().iter().filter(|e| e.kind == EventKind::Notify).count();
    assert_eq!(notify, 1);
}

#[test]
fn inject_through_the_engine() {
    let clock = Arc::new(SystemClock);
    let env = RuntimeEnv::new(
        Arc::new(InMemoryBroker::new(clock.clone())),
        Arc::new(SensorRegistry::default()),
        clock,
    );
    let engine = Engine::start(Arc::new(Palette::standard()), env);
    let seen: Arc<Mutex<Vec<Value>>> = Arc::default();
    let s = seen.clone();
    engine.subscribe_events(Arc::new(move |ev: &DebugEvent| {
        if let Some(m) = &ev.message {
            s.lock().unwrap().push(m.payload.clone());
        }
    }));
    let g = seismoflow_core::flow::FlowGraph::new("one", "").add_node(NodeSpec::new("dbg", "debug", 0));
    engine.deploy(g, false).unwrap();
    let id = engine.inject("one", "dbg", Value::from(7.0)).unwrap();
    assert!(id.starts_with('m'));
    assert!(matches!(engine.inject("one", "zz", Value::from(1.0)), Err(EngineError::Runtime(_))));
    assert!(matches!(engine.inject("two", "dbg", Value::from(1.0)), Err(EngineError::NotDeployed(_))));
    let deadline = Instant::now() + Duration::from_secs(5);
    while seen.lock().unwrap().is_empty() && Instant::now() < deadline {
        std::thread::sleep(Duration::from_millis(10));
    }
    assert_eq!(*seen.lock().unwrap(), [Value::from(7.0)]);
    engine.shutdown();
}
