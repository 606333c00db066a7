//! Pub-sub and HTTP plumbing behind the domain nodes.
//!
//! Broker callbacks may run on any thread owned by the transport. They must
//! only enqueue work; the runtime's subscription adapters never run node
//! logic inside a callback.

mod feed;
mod memory;
mod mqtt;
mod profile;
pub mod topic;

use std::sync::Arc;

pub(crate) use feed::FeedRecord;
pub use feed::{feed_body, parse_feed, poll_feed, poll_feed_url, FeedError, FeedSource, HttpFeed};
pub use memory::{InMemoryBroker, DEFAULT_MAX_BODY};
pub use mqtt::{Backoff, MqttBroker};
pub use profile::{BrokerProfile, ProfileError, QoS};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BrokerMessage {
    pub topic: String,
    pub body: Vec<u8>,
    pub received_at_ms: u64,
}

pub type BrokerCallback = Arc<dyn Fn(BrokerMessage) + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubscriptionToken(pub u64);

/// Result of a publish. The in-memory broker reports how many subscribers
/// received the message; external brokers cannot know.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PublishAck {
    pub deliveries: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransportError {
    #[error("bad topic filter: {0}")]
    BadFilter(String),
    #[error("invalid topic: {0}")]
    InvalidTopic(String),
    #[error("message body of {len} bytes exceeds the {cap} byte limit")]
    BodyTooLarge { len: usize, cap: usize },
    #[error("broker disconnected")]
    Disconnected,
    #[error("broker connection failed: {0}")]
    Connect(String),
}

/// MQTT-style client handle. Safe to share between threads.
pub trait Broker: Send + Sync {
    /// Invokes `callback` once per matching publication until unsubscribed.
    fn subscribe(
        &self,
        filter: &str,
        callback: BrokerCallback,
    ) -> Result<SubscriptionToken, TransportError>;

    fn unsubscribe(&self, token: SubscriptionToken) -> Result<(), TransportError>;

    fn publish(&self, topic: &str, body: &[u8]) -> Result<PublishAck, TransportError>;
}
