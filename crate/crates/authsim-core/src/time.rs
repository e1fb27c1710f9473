//! Simulated time. The whole harness runs on a discrete millisecond clock so
//! that TTLs, rate limits, and log timestamps are reproducible.

use serde::{Deserialize, Serialize};

/// A point in simulated time, in milliseconds since scenario start.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn millis(self) -> u64 {
        self.0
    }

    pub fn from_secs(secs: u64) -> SimTime {
        SimTime(secs * 1000)
    }

    pub fn plus_millis(self, ms: u64) -> SimTime {
        SimTime(self.0.saturating_add(ms))
    }

    pub fn plus_secs(self, secs: u64) -> SimTime {
        self.plus_millis(secs * 1000)
    }

    /// Elapsed milliseconds since `earlier`, saturating at zero.
    pub fn since(self, earlier: SimTime) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

impl std::fmt::Display for SimTime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

/// Mutable clock owned by the world (scenario mode) or by a single flow
/// (benchmark mode, where flows carry independent virtual clocks).
#[derive(Debug, Clone)]
pub struct SimClock {
    now: SimTime,
    /// Simulated transmission delay charged per bus hop.
    pub hop_latency_ms: u64,
}

impl SimClock {
    pub fn new(hop_latency_ms: u64) -> SimClock {
        SimClock {
            now: SimTime::ZERO,
            hop_latency_ms,
        }
    }

    pub fn starting_at(now: SimTime, hop_latency_ms: u64) -> SimClock {
        SimClock { now, hop_latency_ms }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn advance(&mut self, ms: u64) -> SimTime {
        self.now = self.now.plus_millis(ms);
        self.now
    }

    /// Advance by one bus hop and return the new timestamp.
    pub fn hop(&mut self) -> SimTime {
        self.advance(self.hop_latency_ms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_and_arithmetic() {
        let t0 = SimTime::ZERO;
        let t1 = t0.plus_secs(2);
        assert!(t0 < t1);
        assert_eq!(t1.millis(), 2000);
        assert_eq!(t1.since(t0), 2000);
        assert_eq!(t0.since(t1), 0);
    }

    #[test]
    fn clock_hops() {
        let mut clock = SimClock::new(10);
        assert_eq!(clock.hop(), SimTime(10));
        assert_eq!(clock.hop(), SimTime(20));
        clock.advance(5);
        assert_eq!(clock.now(), SimTime(25));
    }
}
