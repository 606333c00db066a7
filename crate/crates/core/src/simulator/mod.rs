//! Scripted sensors and earthquake feed for desk-scale runs.

mod feed;
mod pacer;

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::domain::{
    resolve_topic, Channel, EarthquakeEvent, QuakeSource, SensorBinding, SensorRegistry,
    SENSOR_VIBRATION,
};
use crate::flow::{FlowGraph, NodeSpec, Value};
use crate::nodes::{JOIN, NOTIFY, TEMPLATE};
use crate::transport::{Broker, FeedRecord, TransportError};

pub use feed::{FeedServer, ScriptedFeed};
pub use pacer::{Pacer, RealTimePacer, VirtualPacer};

pub const SCENARIO_EXTENSION: &str = ".scenario.json";

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioAction {
    Vibration { sensor: String },
    Temperature { sensor: String, value: f64 },
    Quake(EarthquakeEvent),
}

impl ScenarioAction {
    pub fn kind(&self) -> &'static str {
        match self {
            ScenarioAction::Vibration { .. } => "vibration",
            ScenarioAction::Temperature { .. } => "temperature",
            ScenarioAction::Quake(_) => "quake",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEvent {
    /// Offset from the start of the run.
    pub at_ms: u64,
    pub action: ScenarioAction,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    pub sensors: Vec<SensorBinding>,
    pub events: Vec<ScenarioEvent>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("malformed scenario: {0}")]
    Malformed(String),
    #[error("scenario event {index} is earlier than the one before it")]
    Unordered { index: usize },
    #[error("scenario event {index} ({kind}): {problem}")]
    BadEvent {
        index: usize,
        kind: String,
        problem: String,
    },
    #[error("scenario refers to unknown sensor \"{0}\"")]
    UnknownSensorInScenario(String),
    #[error("publishing failed: {0}")]
    Transport(#[from] TransportError),
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ScenarioDoc {
    sensors: Vec<SensorBinding>,
    events: Vec<EventDoc>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct EventDoc {
    at_ms: u64,
    kind: String,
    sensor: Option<String>,
    value: Option<f64>,
    quake: Option<FeedRecord>,
}

impl Scenario {
    /// Parses a `.scenario.json` document.
    pub fn parse(document: &str) -> Result<Self, ScenarioError> {
        let doc: ScenarioDoc =
            serde_json::from_str(document).map_err(|e| ScenarioError::Malformed(e.to_string()))?;
        let mut events = Vec::with_capacity(doc.events.len());
        for (index, e) in doc.events.into_iter().enumerate() {
            let bad = |problem: &str| ScenarioError::BadEvent {
                index,
                kind: e.kind.clone(),
                problem: problem.to_string(),
            };
            let action = match (e.kind.as_str(), &e.sensor, e.value, &e.quake) {
                ("vibration", Some(s), None, None) => ScenarioAction::Vibration { sensor: s.clone() },
                ("temperature", Some(s), Some(v), None) if v.is_finite() => {
                    ScenarioAction::Temperature {
                        sensor: s.clone(),
                        value: v,
                    }
                }
                ("quake", None, None, Some(q)) => ScenarioAction::Quake(
                    EarthquakeEvent::new(
                        q.id.clone(),
                        q.magnitude,
                        q.lat,
                        q.lon,
                        q.origin_time_ms,
                        q.source.unwrap_or(QuakeSource::OfficialFeed),
                    )
                    .map_err(|err| bad(&err.to_string()))?,
                ),
                ("vibration", ..) => return Err(bad("needs \"sensor\" and nothing else")),
                ("temperature", ..) => return Err(bad("needs \"sensor\" and a finite \"value\"")),
                ("quake", ..) => return Err(bad("needs \"quake\" and nothing else")),
                _ => return Err(bad("unknown kind")),
            };
            events.push(ScenarioEvent {
                at_ms: e.at_ms,
                action,
            });
        }
        let scenario = Scenario {
            sensors: doc.sensors,
            events,
        };
        scenario.check()?;
        Ok(scenario)
    }

    /// Checks ordering and that every sensor resolves.
    pub fn check(&self) -> Result<(), ScenarioError> {
        if let Some(i) = self.events.windows(2).position(|w| w[1].at_ms < w[0].at_ms) {
            return Err(ScenarioError::Unordered { index: i + 1 });
        }
        let registry = self.registry()?;
        for e in &self.events {
            if let ScenarioAction::Vibration { sensor } | ScenarioAction::Temperature { sensor, .. } =
                &e.action
            {
                registry
                    .lookup(sensor)
                    .map_err(|_| ScenarioError::UnknownSensorInScenario(sensor.clone()))?;
            }
        }
        Ok(())
    }

    pub fn registry(&self) -> Result<SensorRegistry, ScenarioError> {
        SensorRegistry::new(self.sensors.clone()).map_err(|e| ScenarioError::Malformed(e.to_string()))
    }

    /// Offset of the last event.
    pub fn duration_ms(&self) -> u64 {
        self.events.last().map_or(0, |e| e.at_ms)
    }
}

/// One broker publication made by a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Publication {
    pub at_ms: u64,
    pub topic: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunReport {
    /// Events handled per kind.
    pub counts: BTreeMap<String, usize>,
    pub publications: Vec<Publication>,
    /// Quake events released to the feed.
    pub released: usize,
}

impl RunReport {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

/// Plays `scenario` against `broker` and `feed`, pacing with `pacer`.
///
/// Vibration bodies carry the event offset in milliseconds; temperature bodies
/// the reading. Both are plain decimal text, as the devices send them.
pub fn run_scenario(
    scenario: &Scenario,
    broker: &dyn Broker,
    feed: &ScriptedFeed,
    pacer: &mut dyn Pacer,
) -> Result<RunReport, ScenarioError> {
    scenario.check()?;
    let registry = scenario.registry()?;
    let mut report = RunReport::default();
    for e in &scenario.events {
        pacer.wait_until(e.at_ms);
        let publish = |sensor: &str, channel: Channel, body: String| {
            let binding = registry
                .lookup(sensor)
                .map_err(|_| ScenarioError::UnknownSensorInScenario(sensor.to_string()))?;
            let topic = resolve_topic(binding, channel);
            broker.publish(&topic, body.as_bytes())?;
            Ok::<_, ScenarioError>(Publication {
                at_ms: e.at_ms,
                topic,
                body,
            })
        };
        match &e.action {
            ScenarioAction::Vibration { sensor } => {
                let p = publish(sensor, Channel::Vibration, e.at_ms.to_string())?;
                report.publications.push(p);
            }
            ScenarioAction::Temperature { sensor, value } => {
                let p = publish(sensor, Channel::Temperature, Value::Number(*value).to_string())?;
                report.publications.push(p);
            }
            ScenarioAction::Quake(q) => {
                feed.release(q.clone());
                report.released += 1;
            }
        }
        *report.counts.entry(e.action.kind().to_string()).or_default() += 1;
        pacer.settle();
    }
    Ok(report)
}

/// Two sensors feeling a vibration five seconds apart.
pub fn fig2_scenario() -> Scenario {
    Scenario {
        sensors: vec![
            SensorBinding::new("porch", "d0a1", 41.9028, 12.4964),
            SensorBinding::new("garage", "d0a2", 41.9031, 12.4970),
        ],
        events: vec![
            ScenarioEvent {
                at_ms: 0,
                action: ScenarioAction::Vibration {
                    sensor: "porch".into(),
                },
            },
            ScenarioEvent {
                at_ms: 5000,
                action: ScenarioAction::Vibration {
                    sensor: "garage".into(),
                },
            },
        ],
    }
}

/// "When two devices feel a vibration, send a message": two vibration
/// sources, a two-sensor join, a template and a console notification.
pub fn fig2_flow() -> FlowGraph {
    FlowGraph::new("fig2", "Two sensors shaking")
        .add_node(NodeSpec::new("vib-porch", SENSOR_VIBRATION, 1).set("sensor", "porch"))
        .add_node(NodeSpec::new("vib-garage", SENSOR_VIBRATION, 1).set("sensor", "garage"))
        .add_node(NodeSpec::new("both", JOIN, 1).set("count", 2.0).set("windowMs", 30_000.0))
        .add_node(
            NodeSpec::new("text", TEMPLATE, 1).set("template", "Shaking felt by {{sensor}}"),
        )
        .add_node(NodeSpec::new("alert", NOTIFY, 0).set("channel", "console"))
        .add_wire("vib-porch", 0, "both")
        .add_wire("vib-garage", 0, "both")
        .add_wire("both", 0, "text")
        .add_wire("text", 0, "alert")
}
