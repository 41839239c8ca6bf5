use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time source for pacing; swapped for [`FakeClock`] in tests.
pub trait Clock: Send + Sync {
    /// Time elapsed since an arbitrary fixed origin.
    fn now(&self) -> Duration;
    fn sleep_until(&self, t: Duration);
}

pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep_until(&self, t: Duration) {
        if let Some(d) = t.checked_sub(self.now()) {
            std::thread::sleep(d);
        }
    }
}

/// Manually driven clock: sleeping jumps straight to the wake-up time.
#[derive(Default)]
pub struct FakeClock {
    now: Mutex<Duration>,
}

impl FakeClock {
    pub fn advance(&self, d: Duration) {
        *self.now.lock().expect("clock lock") += d;
    }
}

impl Clock for FakeClock {
    fn now(&self) -> Duration {
        *self.now.lock().expect("clock lock")
    }

    fn sleep_until(&self, t: Duration) {
        let mut now = self.now.lock().expect("clock lock");
        *now = (*now).max(t);
    }
}

/// Requests per minute, written as `30/min`, `2/s` or `100/h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Rate {
    pub per_minute: f64,
}

impl Rate {
    pub fn per_minute(n: f64) -> Result<Self> {
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::param("rate", format!("{n} must be positive")));
        }
        Ok(Rate { per_minute: n })
    }

    pub fn interval(&self) -> Duration {
        Duration::from_secs_f64(60.0 / self.per_minute)
    }
}

impl FromStr for Rate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (n, unit) = s.trim().split_once('/').unwrap_or((s.trim(), "min"));
        let n: f64 = n.trim().parse().map_err(|_| Error::param("rate", format!("cannot parse {s:?}")))?;
        let scale = match unit.trim() {
            "s" | "sec" => 60.0,
            "min" | "m" => 1.0,
            "h" | "hour" => 1.0 / 60.0,
            other => return Err(Error::param("rate", format!("unknown unit {other:?} in {s:?}"))),
        };
        Rate::per_minute(n * scale)
    }
}

impl TryFrom<String> for Rate {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Rate> for String {
    fn from(r: Rate) -> String {
        format!("{}/min", r.per_minute)
    }
}

/// Hands out request slots at least one interval apart. Shared by all
/// download workers.
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Duration>>,
    clock: Arc<dyn Clock>,
}

impl RateLimiter {
    pub fn new(rate: Rate, clock: Arc<dyn Clock>) -> Self {
        RateLimiter { interval: rate.interval(), next: Mutex::new(None), clock }
    }

    /// Blocks until the caller may issue a request; returns the slot time.
    pub fn acquire(&self) -> Duration {
        let slot = {
            let mut next = self.next.lock().expect("limiter lock");
            let now = self.clock.now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + self.interval);
            slot
        };
        self.clock.sleep_until(slot);
        slot
    }
}
