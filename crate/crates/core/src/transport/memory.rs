use std::sync::{Arc, Mutex};

use super::topic::{matches, validate_filter, validate_topic};
use super::{Broker, BrokerCallback, BrokerMessage, PublishAck, SubscriptionToken, TransportError};
use crate::runtime::{Clock, SystemClock};

pub const DEFAULT_MAX_BODY: usize = 256 * 1024;

struct Subscription {
    token: SubscriptionToken,
    filter: String,
    callback: BrokerCallback,
}

#[derive(Default)]
struct Inner {
    next_token: u64,
    subs: Vec<Subscription>,
    disconnected: bool,
}

/// Process-local broker: filter matching and synchronous delivery, exactly
/// once per matching subscription, in publish order. No retained messages,
/// no sessions.
pub struct InMemoryBroker {
    inner: Mutex<Inner>,
    clock: Arc<dyn Clock>,
    max_body: usize,
}

impl Default for InMemoryBroker {
    fn default() -> Self {
        InMemoryBroker::new(Arc::new(SystemClock))
    }
}

impl InMemoryBroker {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        InMemoryBroker {
            inner: Mutex::new(Inner::default()),
            clock,
            max_body: DEFAULT_MAX_BODY,
        }
    }

    pub fn with_max_body(mut self, max_body: usize) -> Self {
        self.max_body = max_body;
        self
    }

    pub fn subscription_count(&self) -> usize {
        self.inner.lock().unwrap().subs.len()
    }

    pub fn filters(&self) -> Vec<String> {
        self.inner
            .lock()
            .unwrap()
            .subs
            .iter()
            .map(|s| s.filter.clone())
            .collect()
    }

    /// Simulates losing the connection: publishes fail until `reconnect`.
    pub fn disconnect(&self) {
        self.inner.lock().unwrap().disconnected = true;
    }

    pub fn reconnect(&self) {
        self.inner.lock().unwrap().disconnected = false;
    }
}

impl Broker for InMemoryBroker {
    fn subscribe(
        &self,
        filter: &str,
        callback: BrokerCallback,
    ) -> Result<SubscriptionToken, TransportError> {
        validate_filter(filter)?;
        let mut inner = self.inner.lock().unwrap();
        inner.next_token += 1;
        let token = SubscriptionToken(inner.next_token);
        inner.subs.push(Subscription {
            token,
            filter: filter.to_string(),
            callback,
        });
        Ok(token)
    }

    fn unsubscribe(&self, token: SubscriptionToken) -> Result<(), TransportError> {
        self.inner.lock().unwrap().subs.retain(|s| s.token != token);
        Ok(())
    }

    fn publish(&self, topic: &str, body: &[u8]) -> Result<PublishAck, TransportError> {
        validate_topic(topic)?;
        if body.len() > self.max_body {
            return Err(TransportError::BodyTooLarge {
                len: body.len(),
                cap: self.max_body,
            });
        }
        let targets: Vec<BrokerCallback> = {
            let inner = self.inner.lock().unwrap();
            if inner.disconnected {
                return Err(TransportError::Disconnected);
            }
            inner
                .subs
                .iter()
                .filter(|s| matches(&s.filter, topic))
                .map(|s| s.callback.clone())
                .collect()
        };
        let received_at_ms = self.clock.now_ms();
        for cb in &targets {
            cb(BrokerMessage {
                topic: topic.to_string(),
                body: body.to_vec(),
                received_at_ms,
            });
        }
        Ok(PublishAck {
            deliveries: Some(targets.len()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn counter() -> (Arc<AtomicUsize>, BrokerCallback) {
        let n = Arc::new(AtomicUsize::new(0));
        let c = n.clone();
        (n, Arc::new(move |_| {
            c.fetch_add(1, Ordering::SeqCst);
        }))
    }

    #[test]
    fn wildcard_subscriptions_fire() {
        let b = InMemoryBroker::default();
        let (plus, cb1) = counter();
        let (hash, cb2) = counter();
        let (narrow, cb3) = counter();
        b.subscribe("a/+/c", cb1).unwrap();
        b.subscribe("a/#", cb2).unwrap();
        b.subscribe("a/+", cb3).unwrap();
        b.publish("a/b/c", b"x").unwrap();
        b.publish("a/b/c/d", b"x").unwrap();
        assert_eq!(plus.load(Ordering::SeqCst), 1);
        assert_eq!(hash.load(Ordering::SeqCst), 2);
        assert_eq!(narrow.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn publish_counts_and_errors() {
        let b = InMemoryBroker::default();
        assert_eq!(b.publish("x/y", b"").unwrap().deliveries, Some(0));
        let (n, cb) = counter();
        let t1 = b.subscribe("x/y", cb.clone()).unwrap();
        b.subscribe("x/+", cb).unwrap();
        assert_eq!(b.publish("x/y", b"1").unwrap().deliveries, Some(2));
        assert_eq!(n.load(Ordering::SeqCst), 2);
        b.unsubscribe(t1).unwrap();
        assert_eq!(b.publish("x/y", b"1").unwrap().deliveries, Some(1));
        assert!(matches!(b.publish("x/#", b"1"), Err(TransportError::BadFilter(_))));
        assert!(matches!(b.subscribe("x/#/y", Arc::new(|_| {})), Err(TransportError::BadFilter(_))));
        b.disconnect();
        assert_eq!(b.publish("x/y", b"1"), Err(TransportError::Disconnected));
        b.reconnect();
        assert!(b.publish("x/y", b"1").is_ok());
    }

    #[test]
    fn body_cap_is_enforced() {
        let b = InMemoryBroker::default().with_max_body(4);
        assert!(b.publish("t", b"1234").is_ok());
        assert_eq!(
            b.publish("t", b"12345"),
            Err(TransportError::BodyTooLarge { len: 5, cap: 4 })
        );
    }
}
