use std::collections::HashSet;

use crate::flow::{Config, Message, NodeSpec, Value};
use crate::palette::{Category, FieldKind, FieldSpec, Group, NodeTypeDescriptor};
use crate::runtime::{DeployEnv, NodeBehavior, NodeContext, NodeError, NodeInstance};
use crate::transport::BrokerMessage;

use super::{haversine_km, is_perceptible, resolve_topic, Channel, EarthquakeEvent};

pub const SENSOR_TEMPERATURE: &str = "sensor-temperature";
pub const SENSOR_VIBRATION: &str = "sensor-vibration";
pub const EARTHQUAKE_FEED: &str = "earthquake-feed";
pub const PERCEPTIBLE_EARTHQUAKES: &str = "perceptible-earthquakes";

// Label wording lives here and only here.
fn sensor_field() -> FieldSpec {
    FieldSpec::new("sensor", "Sensor name", FieldKind::Text)
        .required()
        .help("The name you gave the sensor when you set it up, for example \"porch\".")
}

fn magnitude_field(default: f64) -> FieldSpec {
    FieldSpec::new("minMagnitude", "Smallest magnitude", FieldKind::Number)
        .default_value(default)
        .help("Weaker earthquakes are ignored.")
}

pub fn descriptors() -> Vec<NodeTypeDescriptor> {
    vec![
        NodeTypeDescriptor {
            type_name: SENSOR_TEMPERATURE.into(),
            label: "Temperature".into(),
            help: "Sends the temperature measured by one of your sensors, every time it changes."
                .into(),
            category: Category::Source,
            group: Group::Domain,
            config_schema: vec![sensor_field()],
            outputs: 1,
            behavior: temperature_factory,
            check: None,
        },
        NodeTypeDescriptor {
            type_name: SENSOR_VIBRATION.into(),
            label: "Vibration".into(),
            help: "Sends a message every time one of your sensors feels shaking.".into(),
            category: Category::Source,
            group: Group::Domain,
            config_schema: vec![sensor_field()],
            outputs: 1,
            behavior: vibration_factory,
            check: None,
        },
        NodeTypeDescriptor {
            type_name: EARTHQUAKE_FEED.into(),
            label: "Earthquakes".into(),
            help: "Sends each new earthquake announced by the official earthquake service.".into(),
            category: Category::Source,
            group: Group::Domain,
            config_schema: vec![
                magnitude_field(0.0),
                FieldSpec::new("pollSeconds", "Check for news every (seconds)", FieldKind::Duration)
                    .default_value(60.0)
                    .help("How often to look for new earthquakes."),
            ],
            outputs: 1,
            behavior: feed_factory,
            check: Some(|cfg| {
                let secs = cfg.get("pollSeconds").and_then(Value::as_f64).unwrap_or(60.0);
                if secs < 1.0 {
                    vec!["\"pollSeconds\" must be at least 1 second".into()]
                } else {
                    Vec::new()
                }
            }),
        },
        NodeTypeDescriptor {
            type_name: PERCEPTIBLE_EARTHQUAKES.into(),
            label: "Perceptible earthquakes".into(),
            help: "Sends each earthquake that was probably felt where one of your sensors is."
                .into(),
            category: Category::Source,
            group: Group::Domain,
            config_schema: vec![sensor_field(), magnitude_field(2.0)],
            outputs: 1,
            behavior: perceptible_factory,
            check: None,
        },
    ]
}

fn text(cfg: &Config, key: &str) -> String {
    cfg.get(key)
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string()
}

fn number(cfg: &Config, key: &str, default: f64) -> f64 {
    cfg.get(key).and_then(Value::as_f64).unwrap_or(default)
}

/// Sources accept injected messages and pass them on as if produced.
fn pass_injected(ctx: &mut NodeContext<'_>, msg: Message) -> Result<(), NodeError> {
    ctx.send(0, msg);
    Ok(())
}

struct TemperatureNode {
    sensor: String,
}

impl NodeBehavior for TemperatureNode {
    fn on_input(&mut self, ctx: &mut NodeContext<'_>, msg: Message) -> Result<(), NodeError> {
        pass_injected(ctx, msg)
    }

    fn on_broker(&mut self, ctx: &mut NodeContext<'_>, bm: &BrokerMessage) -> Result<(), NodeError> {
        let reading = std::str::from_utf8(&bm.body)
            .ok()
            .and_then(|s| s.trim().parse::<f64>().ok())
            .filter(|t| t.is_finite())
            .ok_or_else(|| {
                NodeError::new(format!(
                    "sensor \"{}\" sent an unreadable temperature: {:?}",
                    self.sensor,
                    String::from_utf8_lossy(&bm.body)
                ))
            })?;
        let msg = ctx
            .new_message(Value::Number(reading))
            .with_meta("sensor", self.sensor.as_str())
            .with_meta("channel", Channel::Temperature.as_str());
        ctx.send(0, msg);
        Ok(())
    }
}

fn temperature_factory(
    _spec: &NodeSpec,
    cfg: &Config,
    env: &DeployEnv<'_>,
) -> Result<NodeInstance, String> {
    let sensor = text(cfg, "sensor");
    let binding = env.registry.lookup(&sensor).map_err(|e| e.to_string())?;
    Ok(
        NodeInstance::new(TemperatureNode { sensor: sensor.clone() })
            .subscribe(resolve_topic(binding, Channel::Temperature)),
    )
}

struct VibrationNode {
    sensor: String,
}

impl NodeBehavior for VibrationNode {
    fn on_input(&mut self, ctx: &mut NodeContext<'_>, msg: Message) -> Result<(), NodeError> {
        pass_injected(ctx, msg)
    }

    fn on_broker(&mut self, ctx: &mut NodeContext<'_>, bm: &BrokerMessage) -> Result<(), NodeError> {
        let mut payload = std::collections::BTreeMap::new();
        payload.insert("detectedAtMs".to_string(), Value::Number(bm.received_at_ms as f64));
        let msg = ctx
            .new_message(Value::Map(payload))
            .with_meta("sensor", self.sensor.as_str())
            .with_meta("channel", Channel::Vibration.as_str());
        ctx.send(0, msg);
        Ok(())
    }
}

fn vibration_factory(
    _spec: &NodeSpec,
    cfg: &Config,
    env: &DeployEnv<'_>,
) -> Result<NodeInstance, String> {
    let sensor = text(cfg, "sensor");
    let binding = env.registry.lookup(&sensor).map_err(|e| e.to_string())?;
    Ok(NodeInstance::new(VibrationNode { sensor: sensor.clone() })
        .subscribe(resolve_topic(binding, Channel::Vibration)))
}

struct FeedNode {
    min_magnitude: f64,
    seen: HashSet<String>,
}

impl NodeBehavior for FeedNode {
    fn on_input(&mut self, ctx: &mut NodeContext<'_>, msg: Message) -> Result<(), NodeError> {
        pass_injected(ctx, msg)
    }

    fn on_quake(
        &mut self,
        ctx: &mut NodeContext<'_>,
        event: &EarthquakeEvent,
    ) -> Result<(), NodeError> {
        if event.magnitude < self.min_magnitude || !self.seen.insert(event.event_id.clone()) {
            return Ok(());
        }
        let msg = ctx
            .new_message(event.to_value())
            .with_meta("channel", "earthquake");
        ctx.send(0, msg);
        Ok(())
    }
}

fn feed_factory(_spec: &NodeSpec, cfg: &Config, _env: &DeployEnv<'_>) -> Result<NodeInstance, String> {
    let poll_ms = (number(cfg, "pollSeconds", 60.0) * 1000.0) as u64;
    Ok(NodeInstance::new(FeedNode {
        min_magnitude: number(cfg, "minMagnitude", 0.0),
        seen: HashSet::new(),
    })
    .quakes(Some(poll_ms)))
}

struct PerceptibleNode {
    sensor: String,
    latitude: f64,
    longitude: f64,
    min_magnitude: f64,
}

impl NodeBehavior for PerceptibleNode {
    fn on_input(&mut self, ctx: &mut NodeContext<'_>, msg: Message) -> Result<(), NodeError> {
        pass_injected(ctx, msg)
    }

    fn on_quake(
        &mut self,
        ctx: &mut NodeContext<'_>,
        event: &EarthquakeEvent,
    ) -> Result<(), NodeError> {
        if !is_perceptible(event, self.latitude, self.longitude, self.min_magnitude) {
            return Ok(());
        }
        let distance = haversine_km(event.latitude, event.longitude, self.latitude, self.longitude);
        let mut payload = event.to_value();
        if let Value::Map(m) = &mut payload {
            m.insert("distanceKm".into(), Value::Number(distance));
        }
        let msg = ctx
            .new_message(payload)
            .with_meta("sensor", self.sensor.as_str())
            .with_meta("channel", "earthquake");
        ctx.send(0, msg);
        Ok(())
    }
}

fn perceptible_factory(
    _spec: &NodeSpec,
    cfg: &Config,
    env: &DeployEnv<'_>,
) -> Result<NodeInstance, String> {
    let sensor = text(cfg, "sensor");
    let binding = env.registry.lookup(&sensor).map_err(|e| e.to_string())?;
    Ok(NodeInstance::new(PerceptibleNode {
        sensor: sensor.clone(),
        latitude: binding.latitude,
        longitude: binding.longitude,
        min_magnitude: number(cfg, "minMagnitude", 2.0),
    })
    .quakes(None))
}
