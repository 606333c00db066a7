use std::collections::BTreeMap;
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::Serialize;

use crate::flow::{FlowGraph, NodeId, Value};
use crate::palette::Palette;

use super::deployment::{DeployError, Deployment, DeploymentState, RuntimeEnv, RuntimeError, StopReport};
use super::events::{DebugEvent, EventListener};

/// Longest the loop sleeps when nothing is scheduled.
const IDLE_WAIT: Duration = Duration::from_millis(250);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Deploy(#[from] DeployError),
    #[error("flow \"{0}\" is already deployed with a different graph")]
    Conflict(String),
    #[error("flow \"{0}\" is not deployed")]
    NotDeployed(String),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("engine has shut down")]
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DeployOutcome {
    Deployed,
    /// The identical graph was already running.
    Unchanged,
    /// A different graph was running and has been stopped.
    Replaced,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SubscriptionInfo {
    pub topic: String,
    pub node_id: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DeploymentStatus {
    pub flow_id: String,
    pub state: &'static str,
    pub subscriptions: Vec<SubscriptionInfo>,
    pub pending: usize,
}

type Reply<T> = mpsc::Sender<Result<T, EngineError>>;

enum Command {
    Deploy(FlowGraph, bool, Reply<DeployOutcome>),
    Stop(String, Reply<StopReport>),
    Inject(String, String, Value, Reply<String>),
    Status(String, mpsc::Sender<Option<DeploymentStatus>>),
    Wake,
    Shutdown,
}

/// Runs deployments on a dedicated thread, one per flow id.
pub struct Engine {
    tx: mpsc::Sender<Command>,
    subscribers: Arc<Mutex<Vec<EventListener>>>,
    thread: Option<JoinHandle<()>>,
}

impl Engine {
    pub fn start(palette: Arc<Palette>, mut env: RuntimeEnv) -> Engine {
        let (tx, rx) = mpsc::channel();
        let subscribers: Arc<Mutex<Vec<EventListener>>> = Arc::default();
        let fanout = subscribers.clone();
        env.listeners.push(Arc::new(move |e: &DebugEvent| {
            for s in fanout.lock().unwrap().iter() {
                s(e);
            }
        }));
        let waker = tx.clone();
        let thread = std::thread::Builder::new()
            .name("seismoflow-engine".into())
            .spawn(move || EngineLoop::new(palette, env, waker).run(rx))
            .expect("spawn engine thread");
        Engine {
            tx,
            subscribers,
            thread: Some(thread),
        }
    }

    /// Listener for every event of every deployment.
    pub fn subscribe_events(&self, listener: EventListener) {
        self.subscribers.lock().unwrap().push(listener);
    }

    fn call<T>(&self, make: impl FnOnce(Reply<T>) -> Command) -> Result<T, EngineError> {
        let (reply, rx) = mpsc::channel();
        self.tx.send(make(reply)).map_err(|_| EngineError::Closed)?;
        rx.recv().map_err(|_| EngineError::Closed)?
    }

    /// Deploys `graph`. An identical running graph is left alone; a different
    /// one is replaced only with `force`.
    pub fn deploy(&self, graph: FlowGraph, force: bool) -> Result<DeployOutcome, EngineError> {
        self.call(|r| Command::Deploy(graph, force, r))
    }

    pub fn stop(&self, flow_id: &str) -> Result<StopReport, EngineError> {
        self.call(|r| Command::Stop(flow_id.to_string(), r))
    }

    /// Injects `payload` into `node`; returns the new message id.
    pub fn inject(&self, flow_id: &str, node: &str, payload: Value) -> Result<String, EngineError> {
        self.call(|r| Command::Inject(flow_id.to_string(), node.to_string(), payload, r))
    }

    pub fn status(&self, flow_id: &str) -> Option<DeploymentStatus> {
        let (reply, rx) = mpsc::channel();
        self.tx
            .send(Command::Status(flow_id.to_string(), reply))
            .ok()?;
        rx.recv().ok().flatten()
    }

    /// Stops every deployment and joins the engine thread.
    pub fn shutdown(mut self) {
        self.close();
    }

    fn close(&mut self) {
        let _ = self.tx.send(Command::Shutdown);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for Engine {
    fn drop(&mut self) {
        self.close();
    }
}

struct EngineLoop {
    palette: Arc<Palette>,
    env: RuntimeEnv,
    waker: mpsc::Sender<Command>,
    deployments: BTreeMap<String, Deployment>,
}

impl EngineLoop {
    fn new(palette: Arc<Palette>, env: RuntimeEnv, waker: mpsc::Sender<Command>) -> Self {
        EngineLoop {
            palette,
            env,
            waker,
            deployments: BTreeMap::new(),
        }
    }

    fn run(mut self, rx: mpsc::Receiver<Command>) {
        loop {
            match rx.recv_timeout(self.wait()) {
                Ok(Command::Shutdown) | Err(RecvTimeoutError::Disconnected) => break,
                Ok(cmd) => self.handle(cmd),
                Err(RecvTimeoutError::Timeout) => {}
            }
            for d in self.deployments.values_mut() {
                d.step();
            }
        }
        for (_, mut d) in std::mem::take(&mut self.deployments) {
            d.stop();
        }
    }

    fn wait(&self) -> Duration {
        let now = self.env.clock.now_ms();
        match self.deployments.values().filter_map(Deployment::next_deadline).min() {
            Some(d) if d <= now => Duration::ZERO,
            Some(d) => {
                let w = self.env.clock.real_wait(d - now);
                // A clock that cannot be waited on (virtual) is advanced by someone else.
                if w.is_zero() {
                    IDLE_WAIT
                } else {
                    w.min(IDLE_WAIT * 4)
                }
            }
            None => IDLE_WAIT * 4,
        }
    }

    fn handle(&mut self, cmd: Command) {
        match cmd {
            Command::Deploy(graph, force, reply) => {
                let _ = reply.send(self.deploy(graph, force));
            }
            Command::Stop(id, reply) => {
                let r = match self.deployments.remove(&id) {
                    Some(mut d) => Ok(d.stop()),
                    None => Err(EngineError::NotDeployed(id)),
                };
                let _ = reply.send(r);
            }
            Command::Inject(id, node, payload, reply) => {
                let r = match self.deployments.get_mut(&id) {
                    Some(d) => {
                        let msg = d.new_message(&node, payload);
                        let msg_id = msg.id.clone();
                        d.inject(&node, msg).map(|_| msg_id).map_err(EngineError::from)
                    }
                    None => Err(EngineError::NotDeployed(id)),
                };
                let _ = reply.send(r);
            }
            Command::Status(id, reply) => {
                let _ = reply.send(self.deployments.get(&id).map(status));
            }
            Command::Wake | Command::Shutdown => {}
        }
    }

    fn deploy(&mut self, graph: FlowGraph, force: bool) -> Result<DeployOutcome, EngineError> {
        let existing = self.deployments.get(&graph.id);
        if let Some(d) = existing {
            if *d.flow() == graph {
                return Ok(DeployOutcome::Unchanged);
            }
            if !force {
                return Err(EngineError::Conflict(graph.id));
            }
        }
        let replacing = existing.is_some();
        let prepared = Deployment::prepare(&graph, &self.palette, self.env.clone())?;
        if let Some(mut old) = self.deployments.remove(&graph.id) {
            old.stop();
        }
        let d = prepared.activate()?;
        let waker = Mutex::new(self.waker.clone());
        d.set_waker(move || {
            let _ = waker.lock().unwrap().send(Command::Wake);
        });
        self.deployments.insert(graph.id.clone(), d);
        Ok(if replacing {
            DeployOutcome::Replaced
        } else {
            DeployOutcome::Deployed
        })
    }
}

fn status(d: &Deployment) -> DeploymentStatus {
    DeploymentStatus {
        flow_id: d.flow_id().to_string(),
        state: match d.state() {
            DeploymentState::Deployed => "deployed",
            DeploymentState::Stopped => "stopped",
        },
        subscriptions: d
            .subscriptions()
            .iter()
            .map(|(topic, node_id)| SubscriptionInfo {
                topic: topic.clone(),
                node_id: node_id.clone(),
            })
            .collect(),
        pending: d.pending(),
    }
}
