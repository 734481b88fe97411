//! Session time sources.
//!
//! All engine timestamps are microseconds on one [`Clock`]. A
//! [`VirtualClock`] jumps instantly to whatever time is awaited, which makes
//! headless runs both fast and exactly reproducible; a [`RealClock`] sleeps.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

pub trait Clock: Send + Sync + fmt::Debug {
    /// Microseconds since the clock's epoch. Never decreases.
    fn now_us(&self) -> u64;

    /// Returns once `now_us() >= t_us`.
    fn wait_until(&self, t_us: u64);

    /// Wall-clock time of the epoch, in microseconds since 1970.
    fn epoch_unix_us(&self) -> u64;

    fn is_virtual(&self) -> bool {
        false
    }
}

pub type ClockHandle = Arc<dyn Clock>;

/// Deterministic clock. Clones share the same timeline.
#[derive(Debug, Clone, Default)]
pub struct VirtualClock {
    now: Arc<AtomicU64>,
    epoch_unix_us: u64,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    /// A virtual timeline whose epoch is anchored at a wall-clock instant,
    /// used only for labelling result files.
    pub fn with_epoch(epoch_unix_us: u64) -> Self {
        Self {
            now: Arc::default(),
            epoch_unix_us,
        }
    }

    pub fn advance(&self, us: u64) {
        self.now.fetch_add(us, Ordering::AcqRel);
    }

    pub fn handle(&self) -> ClockHandle {
        Arc::new(self.clone())
    }
}

impl Clock for VirtualClock {
    fn now_us(&self) -> u64 {
        self.now.load(Ordering::Acquire)
    }

    fn wait_until(&self, t_us: u64) {
        self.now.fetch_max(t_us, Ordering::AcqRel);
    }

    fn epoch_unix_us(&self) -> u64 {
        self.epoch_unix_us
    }

    fn is_virtual(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone)]
pub struct RealClock {
    start: Instant,
    epoch_unix_us: u64,
}

impl RealClock {
    pub fn new() -> Self {
        Self {
            start: Instant::now(),
            epoch_unix_us: unix_now_us(),
        }
    }

    pub fn handle(&self) -> ClockHandle {
        Arc::new(self.clone())
    }
}

impl Default for RealClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for RealClock {
    fn now_us(&self) -> u64 {
        self.start.elapsed().as_micros() as u64
    }

    fn wait_until(&self, t_us: u64) {
        loop {
            let now = self.now_us();
            if now >= t_us {
                return;
            }
            std::thread::sleep(Duration::from_micros(t_us - now));
        }
    }

    fn epoch_unix_us(&self) -> u64 {
        self.epoch_unix_us
    }
}

pub fn unix_now_us() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_micros() as u64)
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn virtual_wait_jumps_and_never_rewinds() {
        let clock = VirtualClock::new();
        clock.wait_until(10_000_000);
        assert_eq!(clock.now_us(), 10_000_000);
        clock.wait_until(5);
        assert_eq!(clock.now_us(), 10_000_000);
        let shared = clock.clone();
        shared.advance(1);
        assert_eq!(clock.now_us(), 10_000_001);
    }

    #[test]
    fn real_clock_waits() {
        let clock = RealClock::new();
        let target = clock.now_us() + 2_000;
        clock.wait_until(target);
        assert!(clock.now_us() >= target);
    }
}
