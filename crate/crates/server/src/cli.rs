//! Headless commands: validate, run and simulate.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use seismoflow_core::domain::SensorRegistry;
use seismoflow_core::flow::{parse_flow_with_warnings, validate_flow, FlowGraph};
use seismoflow_core::palette::Palette;
use seismoflow_core::runtime::{
    AuditLog, Clock, DebugEvent, Deployment, Engine, EventKind, RuntimeEnv, ScaledClock,
    SystemClock, VirtualClock, DEFAULT_QUAKE_POLL_MS,
};
use seismoflow_core::simulator::{
    run_scenario, FeedServer, RealTimePacer, Scenario, ScenarioAction, ScriptedFeed, VirtualPacer,
};
use seismoflow_core::transport::FeedSource;

use crate::setup::{feed_from_env, read_registry, BrokerHandle};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ISSUES: i32 = 1;
pub const EXIT_DEPLOY: i32 = 1;
pub const EXIT_MALFORMED: i32 = 2;
pub const EXIT_INTERRUPTED: i32 = 130;

/// Reads a flow document; problems are the caller's exit code 2.
fn read_flow(path: &Path) -> Result<FlowGraph, String> {
    let doc = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let (graph, warnings) =
        parse_flow_with_warnings(&doc).map_err(|e| format!("{}: {e}", path.display()))?;
    for w in warnings {
        tracing::warn!("{}: {w}", path.display());
    }
    Ok(graph)
}

fn read_scenario(path: &Path) -> Result<Scenario, String> {
    let doc = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    Scenario::parse(&doc).map_err(|e| format!("{}: {e}", path.display()))
}

/// Prints the validation report of a flow file, one issue per line.
pub fn validate(path: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let graph = match read_flow(path) {
        Ok(g) => g,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            return EXIT_MALFORMED;
        }
    };
    let report = validate_flow(&graph, &Palette::standard());
    for issue in &report {
        let _ = writeln!(out, "{issue}");
    }
    if report.is_empty() {
        EXIT_OK
    } else {
        EXIT_ISSUES
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub flow: PathBuf,
    pub registry: Option<PathBuf>,
    pub scenario: Option<PathBuf>,
    /// Real seconds per flow second; 0 runs on a virtual clock.
    pub time_scale: f64,
    pub audit_log: Option<PathBuf>,
    /// Flow-time seconds to run for.
    pub duration: Option<f64>,
}

/// Prints debug events to stdout and diagnostics to stderr. Console
/// notifications print themselves as `NOTIFY` lines.
fn printer() -> Arc<dyn Fn(&DebugEvent) + Send + Sync> {
    Arc::new(|e: &DebugEvent| match e.kind {
        EventKind::Debug => {
            let payload = e.message.as_ref().map(|m| m.payload.to_string()).unwrap_or_default();
            let mut out = std::io::stdout().lock();
            let _ = writeln!(out, "DEBUG {} {payload}", e.node_id);
            let _ = out.flush();
        }
        EventKind::Diagnostic => {
            let kind = e
                .diagnostic
                .and_then(|d| serde_json::to_value(d).ok())
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            eprintln!("diagnostic {kind} at {}: {}", e.node_id, e.text.as_deref().unwrap_or(""));
        }
        EventKind::Notify => {
            tracing::info!(node = %e.node_id, "notification delivered");
        }
    })
}

struct Prepared {
    graph: FlowGraph,
    scenario: Option<Scenario>,
    registry: SensorRegistry,
    audit: Option<AuditLog>,
}

fn prepare(opts: &RunOptions, err: &mut dyn Write) -> Result<Prepared, i32> {
    let fail = |err: &mut dyn Write, msg: String| {
        let _ = writeln!(err, "{msg}");
        EXIT_MALFORMED
    };
    if !(opts.time_scale >= 0.0 && opts.time_scale.is_finite()) {
        return Err(fail(err, format!("time scale must be 0 or positive, got {}", opts.time_scale)));
    }
    if let Some(d) = opts.duration {
        if !(d >= 0.0 && d.is_finite()) {
            return Err(fail(err, format!("duration must be 0 or positive, got {d}")));
        }
    }
    let graph = read_flow(&opts.flow).map_err(|e| fail(err, e))?;
    let scenario = match &opts.scenario {
        Some(p) => Some(read_scenario(p).map_err(|e| fail(err, e))?),
        None => None,
    };
    let registry = match (&opts.registry, &scenario) {
        (Some(p), _) => read_registry(p).map_err(|e| fail(err, format!("{e:#}")))?,
        (None, Some(s)) => s.registry().map_err(|e| fail(err, e.to_string()))?,
        (None, None) => SensorRegistry::default(),
    };
    let audit = match &opts.audit_log {
        Some(p) => Some(AuditLog::create(p).map_err(|e| {
            fail(err, format!("cannot create audit log {}: {e}", p.display()))
        })?),
        None => None,
    };
    Ok(Prepared {
        graph,
        scenario,
        registry,
        audit,
    })
}

/// Deploys a flow, plays the optional scenario and returns the exit code.
pub fn run(opts: &RunOptions, interrupted: &AtomicBool, err: &mut dyn Write) -> i32 {
    let p = match prepare(opts, err) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let scripted = Arc::new(ScriptedFeed::new());
    let env_feed = feed_from_env();
    if env_feed.is_some() && p.scenario.as_ref().is_some_and(has_quakes) {
        tracing::warn!("scenario quakes are not visible through an external feed");
    }
    let feed: Arc<dyn FeedSource> = env_feed.unwrap_or_else(|| scripted.clone());
    if opts.time_scale == 0.0 {
        run_virtual(opts, p, scripted, feed, err)
    } else {
        run_real_time(opts, p, scripted, feed, interrupted, err)
    }
}

fn has_quakes(s: &Scenario) -> bool {
    s.events.iter().any(|e| matches!(e.action, ScenarioAction::Quake(_)))
}

fn run_virtual(
    opts: &RunOptions,
    p: Prepared,
    scripted: Arc<ScriptedFeed>,
    feed: Arc<dyn FeedSource>,
    err: &mut dyn Write,
) -> i32 {
    let clock = VirtualClock::new(0);
    let broker = match BrokerHandle::from_env(Arc::new(clock.clone())) {
        Ok(b) => b,
        Err(e) => {
            let _ = writeln!(err, "{e:#}");
            return EXIT_DEPLOY;
        }
    };
    let mut env = RuntimeEnv::new(broker.broker(), Arc::new(p.registry), Arc::new(clock.clone()))
        .feed(feed)
        .listener(printer());
    if let Some(a) = p.audit {
        env = env.audit(a);
    }
    let palette = Palette::standard();
    let mut deployment = match Deployment::deploy(&p.graph, &palette, env) {
        Ok(d) => d,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            return EXIT_DEPLOY;
        }
    };
    let mut end_ms = 0;
    if let Some(s) = &p.scenario {
        let mut pacer = VirtualPacer::new(&mut deployment, clock.clone());
        if let Err(e) = run_scenario(s, broker.broker().as_ref(), &scripted, &mut pacer) {
            let _ = writeln!(err, "{e}");
            deployment.stop();
            return EXIT_MALFORMED;
        }
        // Leave one poll cycle for released quakes to be picked up.
        end_ms = s.duration_ms() + if has_quakes(s) { DEFAULT_QUAKE_POLL_MS } else { 0 };
    }
    if let Some(d) = opts.duration {
        end_ms = (d * 1000.0) as u64;
    }
    deployment.advance_virtual(&clock, end_ms);
    deployment.stop();
    EXIT_OK
}

fn run_real_time(
    opts: &RunOptions,
    p: Prepared,
    scripted: Arc<ScriptedFeed>,
    feed: Arc<dyn FeedSource>,
    interrupted: &AtomicBool,
    err: &mut dyn Write,
) -> i32 {
    let clock: Arc<dyn Clock> = Arc::new(ScaledClock::new(SystemClock.now_ms(), opts.time_scale));
    let broker = match BrokerHandle::from_env(clock.clone()) {
        Ok(b) => b,
        Err(e) => {
            let _ = writeln!(err, "{e:#}");
            return EXIT_DEPLOY;
        }
    };
    let mut env = RuntimeEnv::new(broker.broker(), Arc::new(p.registry), clock).feed(feed);
    if let Some(a) = p.audit {
        env = env.audit(a);
    }
    let engine = Engine::start(Arc::new(Palette::standard()), env);
    engine.subscribe_events(printer());
    let flow_id = p.graph.id.clone();
    if let Err(e) = engine.deploy(p.graph, false) {
        let _ = writeln!(err, "{e}");
        return EXIT_DEPLOY;
    }

    let started = Instant::now();
    let deadline = opts
        .duration
        .map(|d| started + Duration::from_secs_f64(d * opts.time_scale));
    let scale = opts.time_scale;
    let has_scenario = p.scenario.is_some();
    let mut player = p.scenario.map(|s| {
        let broker = broker.broker();
        std::thread::spawn(move || {
            run_scenario(&s, broker.as_ref(), &scripted, &mut RealTimePacer::new(scale))
        })
    });
    let mut played = player.is_none();
    let mut idle_checks = 0;
    let code = loop {
        if interrupted.load(Ordering::SeqCst) {
            break EXIT_INTERRUPTED;
        }
        if player.as_ref().is_some_and(|h| h.is_finished()) {
            match player.take().unwrap().join() {
                Ok(Ok(_)) => played = true,
                Ok(Err(e)) => {
                    let _ = writeln!(err, "{e}");
                    break EXIT_MALFORMED;
                }
                Err(_) => break EXIT_MALFORMED,
            }
        }
        match deadline {
            Some(d) if Instant::now() >= d => break EXIT_OK,
            Some(_) => {}
            // Without a duration, stop once the scenario is played and the flow is idle.
            None if played && has_scenario => {
                let idle = engine.status(&flow_id).is_some_and(|s| s.pending == 0);
                idle_checks = if idle { idle_checks + 1 } else { 0 };
                if idle_checks >= 3 {
                    break EXIT_OK;
                }
            }
            None => {}
        }
        std::thread::sleep(Duration::from_millis(20));
    };
    let _ = engine.stop(&flow_id);
    engine.shutdown();
    code
}

#[derive(Debug, Clone, Default)]
pub struct SimulateOptions {
    pub scenario: PathBuf,
    pub time_scale: f64,
    /// Seconds to keep the feed server up after the last event.
    pub linger: f64,
}

/// Plays a scenario against the configured broker and a local feed server.
pub fn simulate(opts: &SimulateOptions, interrupted: &AtomicBool, err: &mut dyn Write) -> i32 {
    let scenario = match read_scenario(&opts.scenario) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            return EXIT_MALFORMED;
        }
    };
    if !(opts.time_scale >= 0.0 && opts.time_scale.is_finite()) {
        let _ = writeln!(err, "time scale must be 0 or positive, got {}", opts.time_scale);
        return EXIT_MALFORMED;
    }
    let broker = match BrokerHandle::from_env(Arc::new(SystemClock)) {
        Ok(b) => b,
        Err(e) => {
            let _ = writeln!(err, "{e:#}");
            return EXIT_DEPLOY;
        }
    };
    let feed = Arc::new(ScriptedFeed::new());
    let server = if has_quakes(&scenario) {
        match FeedServer::start(feed.clone()) {
            Ok(s) => {
                let _ = writeln!(err, "earthquake feed at {}", s.url());
                Some(s)
            }
            Err(e) => {
                let _ = writeln!(err, "cannot start feed server: {e}");
                return EXIT_DEPLOY;
            }
        }
    } else {
        None
    };
    let report = match run_scenario(
        &scenario,
        broker.broker().as_ref(),
        &feed,
        &mut RealTimePacer::new(opts.time_scale),
    ) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            return EXIT_MALFORMED;
        }
    };
    let mut out = std::io::stdout().lock();
    for p in &report.publications {
        let _ = writeln!(out, "PUBLISH {} {}", p.topic, p.body);
    }
    for (kind, n) in &report.counts {
        let _ = writeln!(err, "{kind}: {n}");
    }
    drop(out);
    if server.is_some() {
        let until = Instant::now() + Duration::from_secs_f64(opts.linger.max(0.0));
        while Instant::now() < until {
            if interrupted.load(Ordering::SeqCst) {
                return EXIT_INTERRUPTED;
            }
            std::thread::sleep(Duration::from_millis(20));
        }
    }
    EXIT_OK
}
