use std::time::{Duration, Instant};

use crate::runtime::{Deployment, VirtualClock};

/// Decides when scenario events happen.
pub trait Pacer {
    /// Blocks (or advances time) until `offset_ms` after the start of the run.
    fn wait_until(&mut self, offset_ms: u64);

    /// Called after each event is published.
    fn settle(&mut self) {}
}

/// Drives a deployment's virtual clock; nothing sleeps.
pub struct VirtualPacer<'a> {
    deployment: &'a mut Deployment,
    clock: VirtualClock,
    origin_ms: u64,
}

impl<'a> VirtualPacer<'a> {
    pub fn new(deployment: &'a mut Deployment, clock: VirtualClock) -> Self {
        let origin_ms = clock_now(&clock);
        VirtualPacer {
            deployment,
            clock,
            origin_ms,
        }
    }

    /// Advances to `offset_ms` past the origin, firing every timer on the way.
    pub fn run_until(&mut self, offset_ms: u64) {
        self.deployment
            .advance_virtual(&self.clock, self.origin_ms + offset_ms);
    }
}

fn clock_now(clock: &VirtualClock) -> u64 {
    use crate::runtime::Clock;
    clock.now_ms()
}

impl Pacer for VirtualPacer<'_> {
    fn wait_until(&mut self, offset_ms: u64) {
        self.run_until(offset_ms);
    }

    fn settle(&mut self) {
        self.deployment.run_until_idle();
    }
}

/// Sleeps between events. `scale` is real seconds per scenario second; 0
/// publishes back to back.
pub struct RealTimePacer {
    start: Instant,
    scale: f64,
}

impl RealTimePacer {
    pub fn new(scale: f64) -> Self {
        assert!(scale >= 0.0 && scale.is_finite(), "time scale must not be negative");
        RealTimePacer {
            start: Instant::now(),
            scale,
        }
    }
}

impl Pacer for RealTimePacer {
    fn wait_until(&mut self, offset_ms: u64) {
        let due = self.start + Duration::from_secs_f64(offset_ms as f64 / 1000.0 * self.scale);
        let now = Instant::now();
        if due > now {
            std::thread::sleep(due - now);
        }
    }
}
