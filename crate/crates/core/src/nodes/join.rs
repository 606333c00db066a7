use crate::flow::{Config, Message, Value};
use crate::runtime::{NodeBehavior, NodeContext, NodeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistinctBy {
    SensorName,
    SourceNode,
}

/// Sliding coincidence window over distinct keys.
///
/// Each key keeps only its latest arrival. When `required` distinct keys have
/// arrived within `window_ms` of the newest arrival (inclusive), the window
/// fires with those arrivals, oldest first, and starts over empty.
#[derive(Debug, Clone)]
pub struct JoinWindowState<P> {
    required: usize,
    window_ms: u64,
    /// Latest arrival per key, oldest first.
    seen: Vec<(String, u64, P)>,
}

impl<P> JoinWindowState<P> {
    pub fn new(required: usize, window_ms: u64) -> Self {
        assert!(required >= 2, "a join needs at least two keys");
        assert!(window_ms > 0, "a join needs a positive window");
        JoinWindowState {
            required,
            window_ms,
            seen: Vec::new(),
        }
    }

    pub fn required(&self) -> usize {
        self.required
    }

    pub fn window_ms(&self) -> u64 {
        self.window_ms
    }

    /// Keys currently held with their latest arrival time.
    pub fn seen(&self) -> impl Iterator<Item = (&str, u64)> {
        self.seen.iter().map(|(k, t, _)| (k.as_str(), *t))
    }

    /// Records an arrival; returns the triggering arrivals if this one
    /// completes the window. Arrival times must not decrease.
    pub fn offer(&mut self, key: &str, at_ms: u64, payload: P) -> Option<Vec<(String, u64, P)>> {
        self.seen
            .retain(|(k, t, _)| k != key && at_ms.saturating_sub(*t) <= self.window_ms);
        self.seen.push((key.to_string(), at_ms, payload));
        if self.seen.len() >= self.required {
            Some(std::mem::take(&mut self.seen))
        } else {
            None
        }
    }
}

pub(super) fn check_config(cfg: &Config) -> Vec<String> {
    let mut problems = Vec::new();
    let count = cfg.get("count").and_then(Value::as_f64).unwrap_or(2.0);
    if count < 2.0 || count.fract() != 0.0 {
        problems.push("\"count\" must be a whole number of at least 2".into());
    }
    let window = cfg.get("windowMs").and_then(Value::as_f64).unwrap_or(30_000.0);
    if window < 1.0 {
        problems.push("\"windowMs\" must be greater than zero".into());
    }
    problems
}

pub(super) struct JoinNode {
    state: JoinWindowState<(Value, u32)>,
    by: DistinctBy,
}

impl JoinNode {
    pub(super) fn new(state: JoinWindowState<(Value, u32)>, by: DistinctBy) -> Self {
        JoinNode { state, by }
    }

    /// Messages without a sensor name fall back to their source node.
    fn key(&self, msg: &Message) -> String {
        match (self.by, msg.meta.get("sensor")) {
            (DistinctBy::SensorName, Some(s)) => s.clone(),
            _ => format!("node:{}", msg.source_node),
        }
    }
}

impl NodeBehavior for JoinNode {
    fn on_input(&mut self, ctx: &mut NodeContext<'_>, msg: Message) -> Result<(), NodeError> {
        let key = self.key(&msg);
        let hops = msg.hop_count;
        let Some(fired) = self.state.offer(&key, ctx.now_ms(), (msg.payload, hops)) else {
            return Ok(());
        };
        let keys: Vec<&str> = fired.iter().map(|(k, _, _)| k.as_str()).collect();
        let joined = keys.join(", ");
        let max_hops = fired.iter().map(|(_, _, (_, h))| *h).max().unwrap_or(0);
        let payloads = fired.iter().map(|(_, _, (p, _))| p.clone()).collect();
        let mut out = ctx.new_message(Value::List(payloads)).with_meta("keys", joined.as_str());
        if self.by == DistinctBy::SensorName {
            out = out.with_meta("sensor", joined.as_str());
        }
        out.hop_count = max_hops;
        ctx.send(0, out);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(events: &[(&str, u64)]) -> Vec<u64> {
        let mut s = JoinWindowState::new(2, 30_000);
        events
            .iter()
            .filter_map(|(k, t)| s.offer(k, *t, ()).map(|_| *t))
            .collect()
    }

    #[test]
    fn two_sensors_within_window_fire_once() {
        assert_eq!(run(&[("A", 0), ("B", 10_000)]), vec![10_000]);
    }

    #[test]
    fn same_sensor_twice_never_fires() {
        assert_eq!(run(&[("A", 0), ("A", 10_000)]), Vec::<u64>::new());
    }

    #[test]
    fn expired_arrivals_do_not_count() {
        assert_eq!(run(&[("A", 0), ("B", 40_000)]), Vec::<u64>::new());
        assert_eq!(run(&[("A", 0), ("B", 40_000), ("A", 50_000)]), vec![50_000]);
    }

    #[test]
    fn window_boundary_is_inclusive_and_resets_after_firing() {
        assert_eq!(run(&[("A", 0), ("B", 30_000)]), vec![30_000]);
        assert_eq!(run(&[("A", 0), ("B", 1), ("C", 2)]), vec![1]);
        assert_eq!(run(&[("A", 0), ("B", 1), ("C", 2), ("D", 3)]), vec![1, 3]);
    }

    #[test]
    fn refresh_moves_key_forward() {
        let mut s = JoinWindowState::new(3, 100);
        s.offer("A", 0, ());
        s.offer("B", 50, ());
        s.offer("A", 90, ());
        let order: Vec<_> = s.seen().map(|(k, _)| k.to_string()).collect();
        assert_eq!(order, ["B", "A"]);
        // B expires at 151; A still present
        assert!(s.offer("C", 151, ()).is_none());
        let fired = s.offer("D", 160, ()).unwrap();
        let keys: Vec<_> = fired.iter().map(|(k, _, _)| k.as_str()).collect();
        assert_eq!(keys, ["A", "C", "D"]);
    }

    #[test]
    fn config_checks() {
        let mut cfg = Config::new();
        cfg.insert("count".into(), Value::from(1.0));
        cfg.insert("windowMs".into(), Value::from(0.0));
        assert_eq!(check_config(&cfg).len(), 2);
        assert!(check_config(&Config::new()).is_empty());
    }
}
