//! General-purpose node types: inject, debug, threshold, join, template and
//! notify.

mod join;
mod template;

use crate::flow::{Config, Message, NodeSpec, Value};
use crate::palette::{Category, FieldKind, FieldSpec, Group, NodeTypeDescriptor};
use crate::runtime::{DeployEnv, NodeBehavior, NodeContext, NodeError, NodeInstance};

pub use join::{DistinctBy, JoinWindowState};
pub use template::{Segment, Template, TemplateError};

pub const INJECT: &str = "inject";
pub const DEBUG: &str = "debug";
pub const THRESHOLD: &str = "threshold";
pub const JOIN: &str = "join";
pub const TEMPLATE: &str = "template";
pub const NOTIFY: &str = "notify";

pub fn descriptors() -> Vec<NodeTypeDescriptor> {
    vec![
        NodeTypeDescriptor {
            type_name: INJECT.into(),
            label: "Start".into(),
            help: "Sends a fixed message when triggered, or repeatedly at a fixed interval.".into(),
            category: Category::Source,
            group: Group::General,
            config_schema: vec![
                FieldSpec::new("payload", "Message to send", FieldKind::Value)
                    .help("Leave empty to send an empty message."),
                FieldSpec::new("intervalMs", "Repeat every (milliseconds)", FieldKind::Duration)
                    .help("Leave empty to send only when triggered."),
            ],
            outputs: 1,
            behavior: inject_factory,
            check: None,
        },
        NodeTypeDescriptor {
            type_name: DEBUG.into(),
            label: "Show".into(),
            help: "Shows every message it receives in the live event list.".into(),
            category: Category::Sink,
            group: Group::General,
            config_schema: vec![],
            outputs: 0,
            behavior: |_, _, _| Ok(NodeInstance::new(DebugNode)),
            check: None,
        },
        NodeTypeDescriptor {
            type_name: THRESHOLD.into(),
            label: "Threshold".into(),
            help: "Lets a number through only when it passes the comparison.".into(),
            category: Category::Transform,
            group: Group::General,
            config_schema: vec![
                FieldSpec::new("operator", "Let through values that are", FieldKind::Choice)
                    .required()
                    .option(">", "greater than")
                    .option(">=", "greater than or equal to")
                    .option("<", "less than")
                    .option("<=", "less than or equal to")
                    .option("=", "equal to"),
                FieldSpec::new("value", "Compared with", FieldKind::Number).required(),
            ],
            outputs: 1,
            behavior: threshold_factory,
            check: None,
        },
        NodeTypeDescriptor {
            type_name: JOIN.into(),
            label: "When several happen".into(),
            help: "Sends one combined message when enough different devices send a message \
                   close together in time."
                .into(),
            category: Category::Transform,
            group: Group::General,
            config_schema: vec![
                FieldSpec::new("count", "How many different devices", FieldKind::Number)
                    .default_value(2.0),
                FieldSpec::new("windowMs", "Within (milliseconds)", FieldKind::Duration)
                    .default_value(30_000.0),
                FieldSpec::new("distinctBy", "Count as different", FieldKind::Choice)
                    .default_value("sensor-name")
                    .option("sensor-name", "different sensors")
                    .option("source-node", "different incoming nodes"),
            ],
            outputs: 1,
            behavior: join_factory,
            check: Some(join::check_config),
        },
        NodeTypeDescriptor {
            type_name: TEMPLATE.into(),
            label: "Write message".into(),
            help: "Writes a text message; {{name}} is replaced by the value called name, \
                   {{payload}} by the incoming value."
                .into(),
            category: Category::Transform,
            group: Group::General,
            config_schema: vec![FieldSpec::new("template", "Message text", FieldKind::Text)
                .required()
                .help("For example: Vibration at {{sensor}}")],
            outputs: 1,
            behavior: template_factory,
            check: Some(|cfg| match cfg.get("template").and_then(Value::as_str) {
                Some(t) => match Template::parse(t) {
                    Ok(_) => Vec::new(),
                    Err(e) => vec![e.to_string()],
                },
                None => Vec::new(),
            }),
        },
        NodeTypeDescriptor {
            type_name: NOTIFY.into(),
            label: "Notify".into(),
            help: "Sends the incoming text as a notification.".into(),
            category: Category::Sink,
            group: Group::General,
            config_schema: vec![
                FieldSpec::new("channel", "Send by", FieldKind::Choice)
                    .default_value("console")
                    .option("console", "screen")
                    .option("webhook", "web call"),
                FieldSpec::new("target", "Send to", FieldKind::Text)
                    .default_value("")
                    .help("For web calls, the address to call."),
            ],
            outputs: 0,
            behavior: notify_factory,
            check: Some(|cfg| {
                let channel = cfg.get("channel").and_then(Value::as_str);
                let target = cfg.get("target").and_then(Value::as_str).unwrap_or("");
                if channel == Some("webhook")
                    && !(target.starts_with("http://") || target.starts_with("https://"))
                {
                    vec!["\"target\" must be an http:// or https:// address for web calls".into()]
                } else {
                    Vec::new()
                }
            }),
        },
    ]
}

fn cfg_number(cfg: &Config, key: &str) -> Option<f64> {
    cfg.get(key).and_then(Value::as_f64)
}

fn cfg_text<'a>(cfg: &'a Config, key: &str) -> Option<&'a str> {
    cfg.get(key).and_then(Value::as_str)
}

struct InjectNode {
    payload: Value,
    interval_ms: Option<u64>,
}

impl InjectNode {
    fn fire(&self, ctx: &mut NodeContext<'_>) {
        let msg = ctx.new_message(self.payload.clone());
        ctx.send(0, msg);
    }
}

impl NodeBehavior for InjectNode {
    fn on_start(&mut self, ctx: &mut NodeContext<'_>) {
        if let Some(i) = self.interval_ms {
            ctx.schedule_at(ctx.now_ms() + i);
        }
    }

    /// Any input counts as a manual trigger.
    fn on_input(&mut self, ctx: &mut NodeContext<'_>, _msg: Message) -> Result<(), NodeError> {
        self.fire(ctx);
        Ok(())
    }

    fn on_timer(&mut self, ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        self.fire(ctx);
        if let Some(i) = self.interval_ms {
            ctx.schedule_at(ctx.now_ms() + i);
        }
        Ok(())
    }
}

fn inject_factory(_: &NodeSpec, cfg: &Config, _: &DeployEnv<'_>) -> Result<NodeInstance, String> {
    Ok(NodeInstance::new(InjectNode {
        payload: cfg.get("payload").cloned().unwrap_or_else(Value::empty_map),
        interval_ms: cfg_number(cfg, "intervalMs")
            .filter(|i| *i >= 1.0)
            .map(|i| i as u64),
    }))
}

struct DebugNode;

impl NodeBehavior for DebugNode {
    fn on_input(&mut self, ctx: &mut NodeContext<'_>, msg: Message) -> Result<(), NodeError> {
        ctx.debug(msg);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    Greater,
    GreaterOrEqual,
    Less,
    LessOrEqual,
    Equal,
}

impl Comparison {
    pub fn parse(op: &str) -> Option<Self> {
        Some(match op {
            ">" => Comparison::Greater,
            ">=" | "≥" => Comparison::GreaterOrEqual,
            "<" => Comparison::Less,
            "<=" | "≤" => Comparison::LessOrEqual,
            "=" | "==" => Comparison::Equal,
            _ => return None,
        })
    }

    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparison::Greater => lhs > rhs,
            Comparison::GreaterOrEqual => lhs >= rhs,
            Comparison::Less => lhs < rhs,
            Comparison::LessOrEqual => lhs <= rhs,
            Comparison::Equal => lhs == rhs,
        }
    }
}

struct ThresholdNode {
    op: Comparison,
    value: f64,
}

impl NodeBehavior for ThresholdNode {
    fn on_input(&mut self, ctx: &mut NodeContext<'_>, msg: Message) -> Result<(), NodeError> {
        let n = msg.payload.coerce_number().ok_or_else(|| {
            NodeError::new(format!("expected a number, got {} {}", msg.payload.kind_name(), msg.payload))
        })?;
        if self.op.holds(n, self.value) {
            ctx.send(0, msg);
        }
        Ok(())
    }
}

fn threshold_factory(_: &NodeSpec, cfg: &Config, _: &DeployEnv<'_>) -> Result<NodeInstance, String> {
    let op = cfg_text(cfg, "operator")
        .and_then(Comparison::parse)
        .ok_or("missing comparison")?;
    let value = cfg_number(cfg, "value").ok_or("missing comparison value")?;
    Ok(NodeInstance::new(ThresholdNode { op, value }))
}

fn join_factory(_: &NodeSpec, cfg: &Config, _: &DeployEnv<'_>) -> Result<NodeInstance, String> {
    let k = cfg_number(cfg, "count").unwrap_or(2.0) as usize;
    let window = cfg_number(cfg, "windowMs").unwrap_or(30_000.0) as u64;
    let by = match cfg_text(cfg, "distinctBy") {
        Some("source-node") => DistinctBy::SourceNode,
        _ => DistinctBy::SensorName,
    };
    Ok(NodeInstance::new(join::JoinNode::new(
        JoinWindowState::new(k, window),
        by,
    )))
}

struct TemplateNode {
    template: Template,
}

impl NodeBehavior for TemplateNode {
    fn on_input(&mut self, ctx: &mut NodeContext<'_>, msg: Message) -> Result<(), NodeError> {
        let (text, unknown) = self.template.render(&msg);
        for name in unknown {
            ctx.diagnostic(
                crate::runtime::DiagnosticKind::UnknownPlaceholder,
                format!("no value called \"{name}\" in the incoming message"),
            );
        }
        ctx.send(0, msg.with_payload(Value::Text(text)));
        Ok(())
    }
}

fn template_factory(_: &NodeSpec, cfg: &Config, _: &DeployEnv<'_>) -> Result<NodeInstance, String> {
    let template = Template::parse(cfg_text(cfg, "template").unwrap_or_default())
        .map_err(|e| e.to_string())?;
    Ok(NodeInstance::new(TemplateNode { template }))
}

enum NotifyChannel {
    Console,
    Webhook(String),
}

struct NotifyNode {
    channel: NotifyChannel,
}

impl NodeBehavior for NotifyNode {
    fn on_input(&mut self, ctx: &mut NodeContext<'_>, msg: Message) -> Result<(), NodeError> {
        let text = msg.payload.to_string();
        match &self.channel {
            NotifyChannel::Console => ctx.services().console.line(&format!("NOTIFY {text}")),
            NotifyChannel::Webhook(url) => {
                ctx.services()
                    .webhook
                    .post(url, &text)
                    .map_err(|e| NodeError::new(format!("notification not sent: {e}")))?;
            }
        }
        ctx.notified(text);
        Ok(())
    }
}

fn notify_factory(_: &NodeSpec, cfg: &Config, _: &DeployEnv<'_>) -> Result<NodeInstance, String> {
    let channel = match cfg_text(cfg, "channel") {
        Some("webhook") => NotifyChannel::Webhook(cfg_text(cfg, "target").unwrap_or("").into()),
        _ => NotifyChannel::Console,
    };
    Ok(NodeInstance::new(NotifyNode { channel }))
}
