use std::sync::Mutex;
use std::time::Duration;

use super::Clock;

/// Token bucket admitting `capacity` requests in a burst and refilling at a
/// steady rate. Admission is serialized through the internal lock.
pub struct TokenBucket {
    capacity: f64,
    refill_per_sec: f64,
    state: Mutex<BucketState>,
}

struct BucketState {
    tokens: f64,
    last: Option<Duration>,
}

impl TokenBucket {
    pub fn new(capacity: u32, refill_per_sec: f64) -> Self {
        assert!(capacity >= 1 && refill_per_sec > 0.0, "degenerate token bucket");
        Self {
            capacity: capacity as f64,
            refill_per_sec,
            state: Mutex::new(BucketState {
                tokens: capacity as f64,
                last: None,
            }),
        }
    }

    pub fn per_minute(requests: u32) -> Self {
        Self::new(requests.max(1), requests.max(1) as f64 / 60.0)
    }

    /// Blocks (via `clock.sleep`) until a token is available, then takes it.
    pub fn acquire(&self, clock: &dyn Clock) {
        loop {
            let wait = {
                let mut st = self.state.lock().unwrap();
                let now = clock.now();
                if let Some(last) = st.last {
                    let elapsed = now.saturating_sub(last).as_secs_f64();
                    st.tokens = (st.tokens + elapsed * self.refill_per_sec).min(self.capacity);
                }
                st.last = Some(now);
                if st.tokens >= 1.0 {
                    st.tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - st.tokens) / self.refill_per_sec)
            };
            clock.sleep(wait);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ManualClock;

    #[test]
    fn burst_then_steady_rate() {
        let clock = ManualClock::new();
        let bucket = TokenBucket::per_minute(2);
        bucket.acquire(&clock);
        bucket.acquire(&clock);
        assert!(clock.sleeps().is_empty());
        bucket.acquire(&clock);
        // one token every 30 s at 2 rpm
        let waited: Duration = clock.sleeps().iter().sum();
        assert!((waited.as_secs_f64() - 30.0).abs() < 1e-6, "{waited:?}");
    }

    #[test]
    fn refill_is_capped() {
        let clock = ManualClock::new();
        let bucket = TokenBucket::new(1, 1.0);
        bucket.acquire(&clock);
        clock.advance(Duration::from_secs(100));
        bucket.acquire(&clock);
        assert!(clock.sleeps().is_empty());
        bucket.acquire(&clock);
        assert_eq!(clock.sleeps().len(), 1);
    }
}
