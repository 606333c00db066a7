//! Deployment-level wiring taken from the environment.

use std::path::Path;
use std::sync::Arc;

use anyhow::Context;
use seismoflow_core::domain::SensorRegistry;
use seismoflow_core::runtime::Clock;
use seismoflow_core::transport::{
    Broker, BrokerProfile, FeedSource, HttpFeed, InMemoryBroker, MqttBroker,
};

pub const ENV_FEED_URL: &str = "SEISMOFLOW_FEED_URL";
pub const ENV_DATA_DIR: &str = "SEISMOFLOW_DATA_DIR";

/// The broker a process talks to.
#[derive(Clone)]
pub enum BrokerHandle {
    Memory(Arc<InMemoryBroker>),
    External(Arc<MqttBroker>),
}

impl BrokerHandle {
    /// The external broker when `SEISMOFLOW_BROKER_URL` is set, otherwise a
    /// fresh in-memory one.
    pub fn from_env(clock: Arc<dyn Clock>) -> anyhow::Result<Self> {
        match BrokerProfile::from_env()? {
            Some(profile) => {
                tracing::info!(?profile, "using external broker");
                Ok(BrokerHandle::External(Arc::new(MqttBroker::connect(&profile, clock)?)))
            }
            None => Ok(BrokerHandle::Memory(Arc::new(InMemoryBroker::new(clock)))),
        }
    }

    pub fn broker(&self) -> Arc<dyn Broker> {
        match self {
            BrokerHandle::Memory(b) => b.clone(),
            BrokerHandle::External(b) => b.clone(),
        }
    }
}

/// The HTTP feed named by `SEISMOFLOW_FEED_URL`, if any.
pub fn feed_from_env() -> Option<Arc<dyn FeedSource>> {
    std::env::var(ENV_FEED_URL)
        .ok()
        .filter(|u| !u.is_empty())
        .map(|u| Arc::new(HttpFeed::new(u)) as Arc<dyn FeedSource>)
}

pub fn read_registry(path: &Path) -> anyhow::Result<SensorRegistry> {
    let doc = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read sensor registry {}", path.display()))?;
    SensorRegistry::parse(&doc).with_context(|| format!("in {}", path.display()))
}
