mod clock;
mod context;
mod deployment;
mod engine;
mod events;
mod services;

pub use clock::{Clock, ScaledClock, SystemClock, VirtualClock};
pub use context::{DeployEnv, NodeBehavior, NodeContext, NodeError, NodeInstance};
pub use deployment::{
    AuditLog, DeployError, Deployment, DeploymentOptions, DeploymentState, DrainPolicy,
    PreparedDeployment, RuntimeEnv, RuntimeError, StopReport, DEFAULT_DRAIN, DEFAULT_HOP_LIMIT,
    DEFAULT_QUAKE_POLL_MS,
};
pub use engine::{DeployOutcome, DeploymentStatus, Engine, EngineError, SubscriptionInfo};
pub use events::{DebugEvent, DiagnosticKind, EventKind, EventListener, RouteRecord};
pub use services::{
    Console, HttpWebhook, MemoryConsole, Services, StdoutConsole, WebhookClient, WebhookError,
};
