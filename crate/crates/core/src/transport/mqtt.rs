use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use rumqttc::{Client, Connection, Event, MqttOptions, Packet, RecvTimeoutError, Transport};

use super::profile::{BrokerProfile, QoS};
use super::topic::{matches, validate_filter, validate_topic};
use super::{Broker, BrokerCallback, BrokerMessage, PublishAck, SubscriptionToken, TransportError};
use crate::runtime::Clock;

/// Exponential reconnect delay, doubling from `min` up to `max`.
#[derive(Debug, Clone)]
pub struct Backoff {
    min: Duration,
    max: Duration,
    next: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Backoff::new(Duration::from_secs(1), Duration::from_secs(60))
    }
}

impl Backoff {
    pub fn new(min: Duration, max: Duration) -> Self {
        Backoff { min, max, next: min }
    }

    pub fn next_delay(&mut self) -> Duration {
        let d = self.next;
        self.next = (self.next * 2).min(self.max);
        d
    }

    pub fn reset(&mut self) {
        self.next = self.min;
    }
}

fn rumqtt_qos(q: QoS) -> rumqttc::QoS {
    match q {
        QoS::AtMostOnce => rumqttc::QoS::AtMostOnce,
        QoS::AtLeastOnce => rumqttc::QoS::AtLeastOnce,
        QoS::ExactlyOnce => rumqttc::QoS::ExactlyOnce,
    }
}

#[derive(Default)]
struct Registry {
    next_token: u64,
    subs: BTreeMap<SubscriptionToken, (String, BrokerCallback)>,
    connected: bool,
}

impl Registry {
    fn filters(&self) -> Vec<String> {
        let mut f: Vec<String> = self.subs.values().map(|(f, _)| f.clone()).collect();
        f.sort();
        f.dedup();
        f
    }
}

/// MQTT 3.1.1 client for an external broker. Reconnects with exponential
/// backoff (1 s to 60 s) and resubscribes every filter after each connect.
pub struct MqttBroker {
    client: Client,
    qos: QoS,
    registry: Arc<Mutex<Registry>>,
    shutdown: Arc<AtomicBool>,
    worker: Option<JoinHandle<()>>,
}

impl MqttBroker {
    pub fn connect(profile: &BrokerProfile, clock: Arc<dyn Clock>) -> Result<Self, TransportError> {
        Self::connect_with_backoff(profile, clock, Backoff::default())
    }

    pub fn connect_with_backoff(
        profile: &BrokerProfile,
        clock: Arc<dyn Clock>,
        backoff: Backoff,
    ) -> Result<Self, TransportError> {
        let (host, port) = profile
            .host_port()
            .map_err(|e| TransportError::Connect(e.to_string()))?;
        let client_id = format!("seismoflow-{}-{}", std::process::id(), clock.now_ms());
        let mut options = MqttOptions::new(client_id, host, port);
        options.set_keep_alive(Duration::from_secs(30));
        options.set_max_packet_size(super::DEFAULT_MAX_BODY + 1024, super::DEFAULT_MAX_BODY + 1024);
        if let Some(user) = &profile.username {
            options.set_credentials(user.clone(), profile.password.clone().unwrap_or_default());
        }
        if profile.use_tls {
            options.set_transport(Transport::tls_with_default_config());
        }
        let (client, connection) = Client::new(options, 64);
        let registry = Arc::new(Mutex::new(Registry::default()));
        let shutdown = Arc::new(AtomicBool::new(false));
        let worker = {
            let client = client.clone();
            let registry = registry.clone();
            let shutdown = shutdown.clone();
            let qos = profile.qos;
            std::thread::Builder::new()
                .name("mqtt-connection".into())
                .spawn(move || {
                    run_connection(connection, client, registry, shutdown, clock, qos, backoff)
                })
                .map_err(|e| TransportError::Connect(e.to_string()))?
        };
        Ok(MqttBroker {
            client,
            qos: profile.qos,
            registry,
            shutdown,
            worker: Some(worker),
        })
    }

    pub fn is_connected(&self) -> bool {
        self.registry.lock().unwrap().connected
    }
}

fn run_connection(
    mut connection: Connection,
    client: Client,
    registry: Arc<Mutex<Registry>>,
    shutdown: Arc<AtomicBool>,
    clock: Arc<dyn Clock>,
    qos: QoS,
    mut backoff: Backoff,
) {
    while !shutdown.load(Ordering::SeqCst) {
        match connection.recv_timeout(Duration::from_millis(200)) {
            Ok(Ok(Event::Incoming(Packet::ConnAck(_)))) => {
                backoff.reset();
                let filters = {
                    let mut r = registry.lock().unwrap();
                    r.connected = true;
                    r.filters()
                };
                for f in filters {
                    if let Err(e) = client.try_subscribe(f.clone(), rumqtt_qos(qos)) {
                        tracing::warn!(filter = %f, "resubscribe failed: {e}");
                    }
                }
            }
            Ok(Ok(Event::Incoming(Packet::Publish(p)))) => {
                let targets: Vec<BrokerCallback> = registry
                    .lock()
                    .unwrap()
                    .subs
                    .values()
                    .filter(|(f, _)| matches(f, &p.topic))
                    .map(|(_, cb)| cb.clone())
                    .collect();
                let received_at_ms = clock.now_ms();
                for cb in targets {
                    cb(BrokerMessage {
                        topic: p.topic.clone(),
                        body: p.payload.to_vec(),
                        received_at_ms,
                    });
                }
            }
            Ok(Ok(_)) => {}
            Ok(Err(e)) => {
                registry.lock().unwrap().connected = false;
                let delay = backoff.next_delay();
                tracing::warn!("broker connection lost ({e}); retrying in {delay:?}");
                let deadline = std::time::Instant::now() + delay;
                while std::time::Instant::now() < deadline && !shutdown.load(Ordering::SeqCst) {
                    std::thread::sleep(Duration::from_millis(50));
                }
            }
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => break,
        }
    }
}

impl Broker for MqttBroker {
    fn subscribe(
        &self,
        filter: &str,
        callback: BrokerCallback,
    ) -> Result<SubscriptionToken, TransportError> {
        validate_filter(filter)?;
        let (token, first) = {
            let mut r = self.registry.lock().unwrap();
            let first = !r.subs.values().any(|(f, _)| f == filter);
            r.next_token += 1;
            let token = SubscriptionToken(r.next_token);
            r.subs.insert(token, (filter.to_string(), callback));
            (token, first)
        };
        if first {
            // Queued until connected; resubscribed on every ConnAck anyway.
            self.client
                .try_subscribe(filter, rumqtt_qos(self.qos))
                .map_err(|_| TransportError::Disconnected)?;
        }
        Ok(token)
    }

    fn unsubscribe(&self, token: SubscriptionToken) -> Result<(), TransportError> {
        let orphan = {
            let mut r = self.registry.lock().unwrap();
            match r.subs.remove(&token) {
                Some((f, _)) if !r.subs.values().any(|(g, _)| *g == f) => Some(f),
                _ => None,
            }
        };
        if let Some(f) = orphan {
            self.client
                .try_unsubscribe(f)
                .map_err(|_| TransportError::Disconnected)?;
        }
        Ok(())
    }

    fn publish(&self, topic: &str, body: &[u8]) -> Result<PublishAck, TransportError> {
        validate_topic(topic)?;
        if body.len() > super::DEFAULT_MAX_BODY {
            return Err(TransportError::BodyTooLarge {
                len: body.len(),
                cap: super::DEFAULT_MAX_BODY,
            });
        }
        self.client
            .try_publish(topic, rumqtt_qos(self.qos), false, body.to_vec())
            .map_err(|_| TransportError::Disconnected)?;
        Ok(PublishAck { deliveries: None })
    }
}

impl Drop for MqttBroker {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        let _ = self.client.try_disconnect();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}
