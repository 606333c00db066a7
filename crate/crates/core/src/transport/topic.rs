//! MQTT topic names and topic filters.

use super::TransportError;

pub fn has_wildcards(s: &str) -> bool {
    s.contains('+') || s.contains('#')
}

/// A publish topic: non-empty, no wildcards, no NUL.
pub fn validate_topic(topic: &str) -> Result<(), TransportError> {
    if topic.is_empty() {
        return Err(TransportError::InvalidTopic("topic is empty".into()));
    }
    if topic.contains('\0') {
        return Err(TransportError::InvalidTopic("topic contains NUL".into()));
    }
    if has_wildcards(topic) {
        return Err(TransportError::BadFilter(format!(
            "publish topic \"{topic}\" contains a wildcard"
        )));
    }
    Ok(())
}

/// A subscription filter: `+` must fill a whole level, `#` must fill the
/// last level.
pub fn validate_filter(filter: &str) -> Result<(), TransportError> {
    if filter.is_empty() {
        return Err(TransportError::BadFilter("filter is empty".into()));
    }
    if filter.contains('\0') {
        return Err(TransportError::BadFilter("filter contains NUL".into()));
    }
    let levels: Vec<&str> = filter.split('/').collect();
    let last = levels.len() - 1;
    for (i, level) in levels.iter().enumerate() {
        if level.contains('#') && (*level != "#" || i != last) {
            return Err(TransportError::BadFilter(format!(
                "\"#\" must be the whole last level in \"{filter}\""
            )));
        }
        if level.contains('+') && *level != "+" {
            return Err(TransportError::BadFilter(format!(
                "\"+\" must be a whole level in \"{filter}\""
            )));
        }
    }
    Ok(())
}

/// Whether `topic` matches `filter`. Both are assumed valid.
///
/// Topics starting with `$` are only matched by filters whose first level is
/// literal.
pub fn matches(filter: &str, topic: &str) -> bool {
    if topic.starts_with('$') && (filter.starts_with('+') || filter.starts_with('#')) {
        return false;
    }

    let mut topics = topic.split('/');
    for f in filter.split('/') {
        if f == "#" {
            // "a/#" also matches "a"
            return true;
        }
        match topics.next() {
            Some(_) if f == "+" => {}
            Some(t) if t == f => {}
            _ => return false,
        }
    }
    topics.next().is_none()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_and_multi_level_wildcards() {
        assert!(matches("a/+/c", "a/b/c"));
        assert!(matches("a/#", "a/b/c/d"));
        assert!(!matches("a/+", "a/b/c"));
        assert!(matches("a/#", "a"));
        assert!(matches("#", "a/b"));
        assert!(matches("+/+", "/x"));
        assert!(!matches("a/b", "a/b/c"));
        assert!(!matches("a/b/c", "a/b"));
    }

    #[test]
    fn dollar_topics_need_literal_first_level() {
        assert!(!matches("#", "$SYS/x"));
        assert!(!matches("+/x", "$SYS/x"));
        assert!(matches("$SYS/#", "$SYS/x"));
    }

    #[test]
    fn filter_validation() {
        for ok in ["a", "a/+/c", "#", "a/#", "+", "/", "a//b"] {
            assert!(validate_filter(ok).is_ok(), "{ok}");
        }
        for bad in ["", "a/#/b", "a#", "a/b+", "++", "a/##"] {
            assert!(matches!(validate_filter(bad), Err(TransportError::BadFilter(_))), "{bad}");
        }
    }

    #[test]
    fn topic_validation() {
        assert!(validate_topic("a/b").is_ok());
        assert!(matches!(validate_topic("a/#"), Err(TransportError::BadFilter(_))));
        assert!(matches!(validate_topic(""), Err(TransportError::InvalidTopic(_))));
    }
}
