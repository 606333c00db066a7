use std::collections::HashSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::domain::{EarthquakeEvent, QuakeSource};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeedError {
    #[error("earthquake feed unreachable: {0}")]
    Network(String),
    #[error("malformed earthquake feed: {0}")]
    MalformedFeed(String),
}

/// Where earthquake events come from.
pub trait FeedSource: Send + Sync {
    /// The full current feed contents.
    fn fetch(&self) -> Result<Vec<EarthquakeEvent>, FeedError>;
}

/// Wire shape of one feed entry.
#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub(crate) struct FeedRecord {
    pub id: String,
    pub magnitude: f64,
    pub lat: f64,
    pub lon: f64,
    pub origin_time_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<QuakeSource>,
}

impl From<&EarthquakeEvent> for FeedRecord {
    fn from(e: &EarthquakeEvent) -> Self {
        FeedRecord {
            id: e.event_id.clone(),
            magnitude: e.magnitude,
            lat: e.latitude,
            lon: e.longitude,
            origin_time_ms: e.origin_time_ms,
            source: Some(e.source),
        }
    }
}

/// Parses a feed body: a JSON array of `{id, magnitude, lat, lon, originTimeMs}`.
pub fn parse_feed(body: &str) -> Result<Vec<EarthquakeEvent>, FeedError> {
    let records: Vec<FeedRecord> =
        serde_json::from_str(body).map_err(|e| FeedError::MalformedFeed(e.to_string()))?;
    records
        .into_iter()
        .map(|r| {
            EarthquakeEvent::new(
                r.id,
                r.magnitude,
                r.lat,
                r.lon,
                r.origin_time_ms,
                r.source.unwrap_or(QuakeSource::OfficialFeed),
            )
            .map_err(|e| FeedError::MalformedFeed(e.to_string()))
        })
        .collect()
}

/// Serializes events in the feed wire format.
pub fn feed_body(events: &[EarthquakeEvent]) -> String {
    let records: Vec<FeedRecord> = events.iter().map(FeedRecord::from).collect();
    serde_json::to_string(&records).expect("feed records serialize")
}

/// Feed served over HTTP GET.
#[derive(Debug, Clone)]
pub struct HttpFeed {
    url: String,
    agent: ureq::Agent,
}

impl HttpFeed {
    pub fn new(url: impl Into<String>) -> Self {
        HttpFeed {
            url: url.into(),
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(10))
                .build(),
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl FeedSource for HttpFeed {
    fn fetch(&self) -> Result<Vec<EarthquakeEvent>, FeedError> {
        let body = self
            .agent
            .get(&self.url)
            .call()
            .map_err(|e| FeedError::Network(e.to_string()))?
            .into_string()
            .map_err(|e| FeedError::Network(e.to_string()))?;
        parse_feed(&body)
    }
}

/// One poll: events not in `last_seen`, and the seen set extended with every
/// id observed in this poll.
pub fn poll_feed(
    source: &dyn FeedSource,
    last_seen: &HashSet<String>,
) -> Result<(Vec<EarthquakeEvent>, HashSet<String>), FeedError> {
    let events = source.fetch()?;
    let mut seen = last_seen.clone();
    let fresh = events
        .into_iter()
        .filter(|e| seen.insert(e.event_id.clone()))
        .collect();
    Ok((fresh, seen))
}

pub fn poll_feed_url(
    url: &str,
    last_seen: &HashSet<String>,
) -> Result<(Vec<EarthquakeEvent>, HashSet<String>), FeedError> {
    poll_feed(&HttpFeed::new(url), last_seen)
}
