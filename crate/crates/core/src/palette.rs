//! Node type descriptors: config schemas with human-readable labels, port
//! arities and the behavior each type is bound to.

use serde::Serialize;

use crate::flow::{Config, NodeSpec, Value};
use crate::runtime::{DeployEnv, NodeInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Source,
    Transform,
    Sink,
}

/// Palette grouping shown to the user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    General,
    /// Sensor and earthquake nodes; their configs expose domain vocabulary only.
    Domain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Text,
    Number,
    Boolean,
    /// A non-negative number; the unit is named in the field's label.
    Duration,
    Choice,
    /// Any payload value (number, text, boolean, map or list).
    Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChoiceOption {
    pub value: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldSpec {
    pub name: String,
    pub label: String,
    pub kind: FieldKind,
    pub required: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
    pub help: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<ChoiceOption>,
}

impl FieldSpec {
    pub fn new(name: &str, label: &str, kind: FieldKind) -> Self {
        FieldSpec {
            name: name.into(),
            label: label.into(),
            kind,
            required: false,
            default: None,
            help: String::new(),
            options: Vec::new(),
        }
    }

    pub fn required(mut self) -> Self {
        self.required = true;
        self
    }

    pub fn default_value(mut self, v: impl Into<Value>) -> Self {
        self.default = Some(v.into());
        self
    }

    pub fn help(mut self, help: &str) -> Self {
        self.help = help.into();
        self
    }

    pub fn option(mut self, value: &str, label: &str) -> Self {
        self.options.push(ChoiceOption {
            value: value.into(),
            label: label.into(),
        });
        self
    }

    /// Type-checks a config value against this field.
    pub fn check(&self, value: &Value) -> Result<(), String> {
        let ok = match self.kind {
            FieldKind::Text => value.as_str().is_some(),
            FieldKind::Number => value.as_f64().is_some(),
            FieldKind::Boolean => value.as_bool().is_some(),
            FieldKind::Duration => value.as_f64().is_some_and(|d| d >= 0.0),
            FieldKind::Choice => {
                return match value.as_str() {
                    Some(s) if self.options.iter().any(|o| o.value == s) => Ok(()),
                    _ => Err(format!(
                        "\"{}\" must be one of: {}",
                        self.name,
                        self.options
                            .iter()
                            .map(|o| o.value.as_str())
                            .collect::<Vec<_>>()
                            .join(", ")
                    )),
                }
            }
            FieldKind::Value => true,
        };
        if ok {
            Ok(())
        } else {
            Err(format!(
                "\"{}\" must be a {}, got {}",
                self.name,
                match self.kind {
                    FieldKind::Duration => "non-negative duration",
                    FieldKind::Text => "text",
                    FieldKind::Number => "number",
                    FieldKind::Boolean => "boolean",
                    FieldKind::Choice | FieldKind::Value => unreachable!(),
                },
                value.kind_name()
            ))
        }
    }
}

/// Builds the runtime behavior for one node of a type.
pub type BehaviorFactory = fn(&NodeSpec, &Config, &DeployEnv<'_>) -> Result<NodeInstance, String>;

/// Extra per-type config checks run at validation time (after schema checks).
pub type ConfigCheck = fn(&Config) -> Vec<String>;

/// A palette entry.
#[derive(Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct NodeTypeDescriptor {
    pub type_name: String,
    pub label: String,
    pub help: String,
    pub category: Category,
    pub group: Group,
    pub config_schema: Vec<FieldSpec>,
    pub outputs: u32,
    #[serde(skip)]
    pub behavior: BehaviorFactory,
    #[serde(skip)]
    pub check: Option<ConfigCheck>,
}

impl std::fmt::Debug for NodeTypeDescriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NodeTypeDescriptor")
            .field("type_name", &self.type_name)
            .field("category", &self.category)
            .field("outputs", &self.outputs)
            .finish_non_exhaustive()
    }
}

impl NodeTypeDescriptor {
    pub fn field(&self, name: &str) -> Option<&FieldSpec> {
        self.config_schema.iter().find(|f| f.name == name)
    }

    /// The node's config with schema defaults filled in for absent fields.
    pub fn resolve_config(&self, config: &Config) -> Config {
        let mut resolved = config.clone();
        for f in &self.config_schema {
            if let Some(d) = &f.default {
                resolved.entry(f.name.clone()).or_insert_with(|| d.clone());
            }
        }
        resolved
    }

    /// Schema and type-specific problems with a config, in schema order.
    pub fn config_problems(&self, config: &Config) -> Vec<String> {
        let mut problems = Vec::new();
        for f in &self.config_schema {
            match config.get(&f.name) {
                Some(v) => {
                    if let Err(e) = f.check(v) {
                        problems.push(e);
                    }
                }
                None if f.required => {
                    problems.push(format!("required field \"{}\" is missing", f.name))
                }
                None => {}
            }
        }
        for key in config.keys() {
            if self.field(key).is_none() {
                problems.push(format!("field \"{key}\" is not part of this node's settings"));
            }
        }
        if problems.is_empty() {
            if let Some(check) = self.check {
                problems.extend(check(&self.resolve_config(config)));
            }
        }
        problems
    }
}

/// The set of registered node types, in registration order.
#[derive(Debug, Clone, Default)]
pub struct Palette {
    descriptors: Vec<NodeTypeDescriptor>,
}

impl Palette {
    pub fn empty() -> Self {
        Palette::default()
    }

    /// General-purpose and domain node types.
    pub fn standard() -> Self {
        let mut p = Palette::empty();
        for d in crate::nodes::descriptors() {
            p.register(d);
        }
        for d in crate::domain::descriptors() {
            p.register(d);
        }
        p
    }

    /// Adds or replaces a type.
    pub fn register(&mut self, descriptor: NodeTypeDescriptor) {
        match self
            .descriptors
            .iter_mut()
            .find(|d| d.type_name == descriptor.type_name)
        {
            Some(slot) => *slot = descriptor,
            None => self.descriptors.push(descriptor),
        }
    }

    pub fn get(&self, type_name: &str) -> Option<&NodeTypeDescriptor> {
        self.descriptors.iter().find(|d| d.type_name == type_name)
    }

    pub fn descriptors(&self) -> &[NodeTypeDescriptor] {
        &self.descriptors
    }

    pub fn domain_descriptors(&self) -> impl Iterator<Item = &NodeTypeDescriptor> {
        self.descriptors.iter().filter(|d| d.group == Group::Domain)
    }
}

/// Vocabulary that must never surface in a domain node's settings.
pub const HIDDEN_TOKENS: [&str; 11] = [
    "broker",
    "topic",
    "qos",
    "tls",
    "mqtt",
    "credential",
    "password",
    "username",
    "url",
    "host",
    "port",
];

/// First hidden token found in `text`, case-insensitively.
pub fn find_hidden_token(text: &str) -> Option<&'static str> {
    let lower = text.to_lowercase();
    HIDDEN_TOKENS.into_iter().find(|t| lower.contains(t))
}

/// True iff no config field name or label mentions transport vocabulary.
pub fn hidden_config_check(descriptor: &NodeTypeDescriptor) -> bool {
    descriptor
        .config_schema
        .iter()
        .all(|f| find_hidden_token(&f.name).is_none() && find_hidden_token(&f.label).is_none())
}
