use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use crate::domain::EarthquakeEvent;
use crate::transport::{feed_body, FeedError, FeedSource};

/// Earthquake feed whose contents the scenario controls.
#[derive(Debug, Default)]
pub struct ScriptedFeed {
    released: Mutex<Vec<EarthquakeEvent>>,
    down: AtomicBool,
}

impl ScriptedFeed {
    pub fn new() -> Self {
        Self::default()
    }

    /// Makes `event` part of the feed from now on.
    pub fn release(&self, event: EarthquakeEvent) {
        self.released.lock().unwrap().push(event);
    }

    pub fn released(&self) -> Vec<EarthquakeEvent> {
        self.released.lock().unwrap().clone()
    }

    /// While unavailable, fetches fail as if the service were unreachable.
    pub fn set_available(&self, available: bool) {
        self.down.store(!available, Ordering::SeqCst);
    }
}

impl FeedSource for ScriptedFeed {
    fn fetch(&self) -> Result<Vec<EarthquakeEvent>, FeedError> {
        if self.down.load(Ordering::SeqCst) {
            return Err(FeedError::Network("scripted feed is unavailable".into()));
        }
        Ok(self.released())
    }
}

/// Serves a scripted feed over HTTP on a local port, for clients that poll a
/// URL.
pub struct FeedServer {
    server: Arc<tiny_http::Server>,
    url: String,
    thread: Option<JoinHandle<()>>,
}

impl FeedServer {
    pub fn start(feed: Arc<ScriptedFeed>) -> std::io::Result<Self> {
        let server = tiny_http::Server::http("127.0.0.1:0").map_err(std::io::Error::other)?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("feed server has no IP address"))?;
        let server = Arc::new(server);
        let s = server.clone();
        let thread = std::thread::Builder::new()
            .name("feed-server".into())
            .spawn(move || {
                for req in s.incoming_requests() {
                    let resp = match feed.fetch() {
                        Ok(events) => tiny_http::Response::from_string(feed_body(&events))
                            .with_header(
                                tiny_http::Header::from_bytes("Content-Type", "application/json")
                                    .unwrap(),
                            ),
                        Err(e) => tiny_http::Response::from_string(e.to_string()).with_status_code(503),
                    };
                    let _ = req.respond(resp);
                }
            })?;
        Ok(FeedServer {
            server,
            url: format!("http://{addr}/quakes"),
            thread: Some(thread),
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl Drop for FeedServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
