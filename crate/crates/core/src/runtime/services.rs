use std::io::Write;
use std::sync::{Arc, Mutex};
use std::time::Duration;

/// Line-oriented output used by console notifications.
pub trait Console: Send + Sync {
    fn line(&self, text: &str);
}

#[derive(Debug, Default)]
pub struct StdoutConsole;

impl Console for StdoutConsole {
    fn line(&self, text: &str) {
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "{text}");
        let _ = out.flush();
    }
}

/// Captures lines in memory.
#[derive(Debug, Default, Clone)]
pub struct MemoryConsole(Arc<Mutex<Vec<String>>>);

impl MemoryConsole {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn lines(&self) -> Vec<String> {
        self.0.lock().unwrap().clone()
    }
}

impl Console for MemoryConsole {
    fn line(&self, text: &str) {
        self.0.lock().unwrap().push(text.to_string());
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WebhookError {
    #[error("webhook answered with status {0}")]
    Status(u16),
    #[error("webhook unreachable: {0}")]
    Unreachable(String),
}

/// Plain-text HTTP POST used by webhook notifications.
pub trait WebhookClient: Send + Sync {
    /// Posts `body` as `text/plain; charset=utf-8`; returns the 2xx status.
    fn post(&self, url: &str, body: &str) -> Result<u16, WebhookError>;
}

#[derive(Debug, Clone)]
pub struct HttpWebhook {
    agent: ureq::Agent,
}

impl HttpWebhook {
    pub fn new(timeout: Duration) -> Self {
        HttpWebhook {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

impl Default for HttpWebhook {
    fn default() -> Self {
        HttpWebhook::new(Duration::from_secs(5))
    }
}

impl WebhookClient for HttpWebhook {
    fn post(&self, url: &str, body: &str) -> Result<u16, WebhookError> {
        match self
            .agent
            .post(url)
            .set("Content-Type", "text/plain; charset=utf-8")
            .send_string(body)
        {
            Ok(resp) => Ok(resp.status()),
            Err(ureq::Error::Status(code, _)) => Err(WebhookError::Status(code)),
            Err(e) => Err(WebhookError::Unreachable(e.to_string())),
        }
    }
}

/// Side-effect backends available to node behaviors.
#[derive(Clone)]
pub struct Services {
    pub console: Arc<dyn Console>,
    pub webhook: Arc<dyn WebhookClient>,
}

impl Default for Services {
    fn default() -> Self {
        Services {
            console: Arc::new(StdoutConsole),
            webhook: Arc::new(HttpWebhook::default()),
        }
    }
}

impl Services {
    pub fn with_console(console: Arc<dyn Console>) -> Self {
        Services {
            console,
            ..Services::default()
        }
    }
}
