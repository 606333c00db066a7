use std::fmt;

/// MQTT delivery guarantee for external-broker subscriptions and publishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QoS {
    AtMostOnce,
    #[default]
    AtLeastOnce,
    ExactlyOnce,
}

impl QoS {
    pub fn level(self) -> u8 {
        match self {
            QoS::AtMostOnce => 0,
            QoS::AtLeastOnce => 1,
            QoS::ExactlyOnce => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProfileError {
    #[error("{var}: {reason}")]
    Invalid { var: &'static str, reason: String },
}

pub const ENV_BROKER_URL: &str = "SEISMOFLOW_BROKER_URL";
pub const ENV_BROKER_USERNAME: &str = "SEISMOFLOW_BROKER_USERNAME";
pub const ENV_BROKER_PASSWORD: &str = "SEISMOFLOW_BROKER_PASSWORD";
pub const ENV_QOS: &str = "SEISMOFLOW_QOS";
pub const ENV_TLS: &str = "SEISMOFLOW_TLS";

/// Deployment-level broker connection settings. Loaded from the environment
/// only; never part of a flow document.
#[derive(Clone, PartialEq)]
pub struct BrokerProfile {
    pub url: String,
    pub username: Option<String>,
    pub password: Option<String>,
    pub qos: QoS,
    pub use_tls: bool,
}

impl fmt::Debug for BrokerProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BrokerProfile")
            .field("url", &self.url)
            .field("username", &self.username)
            .field("password", &self.password.as_ref().map(|_| "<redacted>"))
            .field("qos", &self.qos)
            .field("use_tls", &self.use_tls)
            .finish()
    }
}

impl BrokerProfile {
    /// `None` when no external broker is configured.
    pub fn from_env() -> Result<Option<Self>, ProfileError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(
        lookup: impl Fn(&str) -> Option<String>,
    ) -> Result<Option<Self>, ProfileError> {
        let Some(url) = lookup(ENV_BROKER_URL).filter(|u| !u.is_empty()) else {
            return Ok(None);
        };
        let qos = match lookup(ENV_QOS).as_deref() {
            None | Some("") | Some("1") => QoS::AtLeastOnce,
            Some("0") => QoS::AtMostOnce,
            Some("2") => QoS::ExactlyOnce,
            Some(other) => {
                return Err(ProfileError::Invalid {
                    var: ENV_QOS,
                    reason: format!("expected 0, 1 or 2, got \"{other}\""),
                })
            }
        };
        let use_tls = match lookup(ENV_TLS).as_deref() {
            None | Some("") => url.starts_with("mqtts://") || url.starts_with("ssl://"),
            Some(v) if v.eq_ignore_ascii_case("true") || v == "1" => true,
            Some(v) if v.eq_ignore_ascii_case("false") || v == "0" => false,
            Some(other) => {
                return Err(ProfileError::Invalid {
                    var: ENV_TLS,
                    reason: format!("expected true or false, got \"{other}\""),
                })
            }
        };
        Ok(Some(BrokerProfile {
            url,
            username: lookup(ENV_BROKER_USERNAME).filter(|s| !s.is_empty()),
            password: lookup(ENV_BROKER_PASSWORD).filter(|s| !s.is_empty()),
            qos,
            use_tls,
        }))
    }

    /// Host and port from the URL; port defaults to 1883, or 8883 with TLS.
    pub fn host_port(&self) -> Result<(String, u16), ProfileError> {
        let invalid = |reason: String| ProfileError::Invalid {
            var: ENV_BROKER_URL,
            reason,
        };
        let parsed = if self.url.contains("://") {
            url::Url::parse(&self.url)
        } else {
            url::Url::parse(&format!("mqtt://{}", self.url))
        }
        .map_err(|e| invalid(e.to_string()))?;
        let host = parsed
            .host_str()
            .ok_or_else(|| invalid("missing host".into()))?
            .to_string();
        let port = parsed
            .port()
            .unwrap_or(if self.use_tls { 8883 } else { 1883 });
        Ok((host, port))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn lookup(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let map: HashMap<String, String> = pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        move |k| map.get(k).cloned()
    }

    #[test]
    fn absent_url_means_no_external_broker() {
        assert_eq!(BrokerProfile::from_lookup(lookup(&[])).unwrap(), None);
    }

    #[test]
    fn defaults_and_overrides() {
        let p = BrokerProfile::from_lookup(lookup(&[(ENV_BROKER_URL, "mqtt://h.example:1999")]))
            .unwrap()
            .unwrap();
        assert_eq!(p.qos, QoS::AtLeastOnce);
        assert!(!p.use_tls);
        assert_eq!(p.host_port().unwrap(), ("h.example".to_string(), 1999));

        let p = BrokerProfile::from_lookup(lookup(&[
            (ENV_BROKER_URL, "mqtts://h.example"),
            (ENV_QOS, "2"),
            (ENV_BROKER_USERNAME, "u"),
            (ENV_BROKER_PASSWORD, "secret"),
        ]))
        .unwrap()
        .unwrap();
        assert_eq!(p.qos, QoS::ExactlyOnce);
        assert!(p.use_tls);
        assert_eq!(p.host_port().unwrap().1, 8883);
        assert!(!format!("{p:?}").contains("secret"));
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(BrokerProfile::from_lookup(lookup(&[(ENV_BROKER_URL, "x"), (ENV_QOS, "3")])).is_err());
        assert!(BrokerProfile::from_lookup(lookup(&[(ENV_BROKER_URL, "x"), (ENV_TLS, "maybe")])).is_err());
    }
}
