//! Sensor and earthquake vocabulary, and the nodes that expose it.
//!
//! Domain nodes are configured with sensor names and magnitudes only. How a
//! name maps to a device and a pub-sub topic is resolved here, from the
//! deployment-level sensor registry.

mod geo;
mod nodes;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::flow::Value;

pub use geo::{haversine_km, valid_coordinates, EARTH_RADIUS_KM};
pub use nodes::{
    descriptors, EARTHQUAKE_FEED, PERCEPTIBLE_EARTHQUAKES, SENSOR_TEMPERATURE, SENSOR_VIBRATION,
};

/// Root of every sensor topic.
pub const TOPIC_ROOT: &str = "seismocloud/sensors";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SensorBinding {
    #[serde(rename = "name")]
    pub sensor_name: String,
    pub device_id: String,
    #[serde(rename = "lat")]
    pub latitude: f64,
    #[serde(rename = "lon")]
    pub longitude: f64,
}

impl SensorBinding {
    pub fn new(name: &str, device_id: &str, latitude: f64, longitude: f64) -> Self {
        SensorBinding {
            sensor_name: name.into(),
            device_id: device_id.into(),
            latitude,
            longitude,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegistryError {
    #[error("malformed sensor registry: {0}")]
    Malformed(String),
    #[error("sensor name \"{0}\" is registered twice")]
    DuplicateName(String),
    #[error("device \"{0}\" is registered twice")]
    DuplicateDevice(String),
    #[error("sensor \"{0}\" has coordinates out of range")]
    BadCoordinates(String),
    #[error("unknown sensor \"{0}\"")]
    UnknownSensor(String),
}

/// Maps human sensor names to devices and locations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SensorRegistry {
    bindings: Vec<SensorBinding>,
}

#[derive(Serialize, Deserialize)]
struct RegistryDoc {
    sensors: Vec<SensorBinding>,
}

impl SensorRegistry {
    pub fn new(bindings: Vec<SensorBinding>) -> Result<Self, RegistryError> {
        let mut names = HashSet::new();
        let mut devices = HashSet::new();
        for b in &bindings {
            if !names.insert(b.sensor_name.as_str()) {
                return Err(RegistryError::DuplicateName(b.sensor_name.clone()));
            }
            if !devices.insert(b.device_id.as_str()) {
                return Err(RegistryError::DuplicateDevice(b.device_id.clone()));
            }
            if !valid_coordinates(b.latitude, b.longitude) {
                return Err(RegistryError::BadCoordinates(b.sensor_name.clone()));
            }
        }
        Ok(SensorRegistry { bindings })
    }

    /// Parses `{"sensors": [{"name", "deviceId", "lat", "lon"}]}`.
    pub fn parse(document: &str) -> Result<Self, RegistryError> {
        let doc: RegistryDoc =
            serde_json::from_str(document).map_err(|e| RegistryError::Malformed(e.to_string()))?;
        SensorRegistry::new(doc.sensors)
    }

    pub fn to_document(&self) -> String {
        serde_json::to_string_pretty(&RegistryDoc {
            sensors: self.bindings.clone(),
        })
        .expect("registry serializes")
    }

    pub fn lookup(&self, name: &str) -> Result<&SensorBinding, RegistryError> {
        self.bindings
            .iter()
            .find(|b| b.sensor_name == name)
            .ok_or_else(|| RegistryError::UnknownSensor(name.to_string()))
    }

    pub fn bindings(&self) -> &[SensorBinding] {
        &self.bindings
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Temperature,
    Vibration,
    Status,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Temperature => "temperature",
            Channel::Vibration => "vibration",
            Channel::Status => "status",
        }
    }
}

/// `seismocloud/sensors/<deviceId>/<channel>`
pub fn resolve_topic(binding: &SensorBinding, channel: Channel) -> String {
    format!("{TOPIC_ROOT}/{}/{}", binding.device_id, channel.as_str())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuakeSource {
    OfficialFeed,
    Crowd,
}

impl QuakeSource {
    pub fn as_str(self) -> &'static str {
        match self {
            QuakeSource::OfficialFeed => "official-feed",
            QuakeSource::Crowd => "crowd",
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuakeError {
    #[error("event {0}: magnitude must be in [0, 12)")]
    Magnitude(String),
    #[error("event {0}: coordinates out of range")]
    Coordinates(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EarthquakeEvent {
    pub event_id: String,
    pub magnitude: f64,
    pub latitude: f64,
    pub longitude: f64,
    pub origin_time_ms: u64,
    pub source: QuakeSource,
}

impl EarthquakeEvent {
    pub fn new(
        event_id: impl Into<String>,
        magnitude: f64,
        latitude: f64,
        longitude: f64,
        origin_time_ms: u64,
        source: QuakeSource,
    ) -> Result<Self, QuakeError> {
        let event_id = event_id.into();
        if !(0.0..12.0).contains(&magnitude) {
            return Err(QuakeError::Magnitude(event_id));
        }
        if !valid_coordinates(latitude, longitude) {
            return Err(QuakeError::Coordinates(event_id));
        }
        Ok(EarthquakeEvent {
            event_id,
            magnitude,
            latitude,
            longitude,
            origin_time_ms,
            source,
        })
    }

    pub fn to_value(&self) -> Value {
        let mut m = BTreeMap::new();
        m.insert("eventId".into(), Value::from(self.event_id.as_str()));
        m.insert("magnitude".into(), Value::from(self.magnitude));
        m.insert("latitude".into(), Value::from(self.latitude));
        m.insert("longitude".into(), Value::from(self.longitude));
        m.insert("originTimeMs".into(), Value::from(self.origin_time_ms as f64));
        m.insert("source".into(), Value::from(self.source.as_str()));
        Value::Map(m)
    }
}

/// Distance limit of the perceptibility rule: 100 km at magnitude 3,
/// doubling per magnitude unit.
pub fn perceptible_radius_km(magnitude: f64) -> f64 {
    100.0 * 2f64.powf(magnitude - 3.0)
}

/// Placeholder perceptibility rule, not a seismological model:
/// `magnitude >= min_magnitude` and `distance <= 100 * 2^(magnitude - 3)` km.
pub fn is_perceptible(
    event: &EarthquakeEvent,
    sensor_lat: f64,
    sensor_lon: f64,
    min_magnitude: f64,
) -> bool {
    event.magnitude >= min_magnitude
        && haversine_km(event.latitude, event.longitude, sensor_lat, sensor_lon)
            <= perceptible_radius_km(event.magnitude)
}
