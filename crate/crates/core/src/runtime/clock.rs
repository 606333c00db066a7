use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

/// Time source for every window and timer evaluation.
pub trait Clock: Send + Sync {
    /// Milliseconds since the Unix epoch (or since the virtual origin).
    fn now_ms(&self) -> u64;

    /// Real time to wait before `ms` clock milliseconds have passed.
    fn real_wait(&self, ms: u64) -> Duration {
        Duration::from_millis(ms)
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Manually advanced clock. Cloning shares the same time.
#[derive(Debug, Default, Clone)]
pub struct VirtualClock(Arc<AtomicU64>);

impl VirtualClock {
    pub fn new(start_ms: u64) -> Self {
        VirtualClock(Arc::new(AtomicU64::new(start_ms)))
    }

    /// Moves the clock forward to `ms`; never moves it backwards.
    pub fn set(&self, ms: u64) {
        self.0.fetch_max(ms, Ordering::SeqCst);
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for VirtualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }

    fn real_wait(&self, _ms: u64) -> Duration {
        Duration::ZERO
    }
}

/// Wall clock running `1 / scale` times faster than real time, starting at
/// `origin_ms`. A scale of 0.5 makes one real second count as two.
#[derive(Debug, Clone)]
pub struct ScaledClock {
    origin_ms: u64,
    started: Instant,
    scale: f64,
}

impl ScaledClock {
    pub fn new(origin_ms: u64, scale: f64) -> Self {
        assert!(scale > 0.0, "scaled clocks need a positive scale");
        ScaledClock {
            origin_ms,
            started: Instant::now(),
            scale,
        }
    }
}

impl Clock for ScaledClock {
    fn now_ms(&self) -> u64 {
        let real = self.started.elapsed().as_secs_f64() * 1000.0;
        self.origin_ms + (real / self.scale) as u64
    }

    fn real_wait(&self, ms: u64) -> Duration {
        Duration::from_secs_f64(ms as f64 * self.scale / 1000.0)
    }
}
