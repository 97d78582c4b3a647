use std::thread;
use std::time::{Duration, Instant};

/// Paces environment steps so a watching human sees real time. The k-th
/// call to [`wait`](Self::wait) returns no earlier than `start + k / hz`.
#[derive(Debug, Clone)]
pub struct FrameRateGovernor {
    period: Option<Duration>,
    start: Instant,
    ticks: u32,
}

impl FrameRateGovernor {
    pub fn new(hz: f64) -> Result<Self, String> {
        if !(hz.is_finite() && hz > 0.0) {
            return Err(format!("frame rate must be positive, got {hz}"));
        }
        Ok(Self {
            period: Some(Duration::from_secs_f64(1.0 / hz)),
            start: Instant::now(),
            ticks: 0,
        })
    }

    /// Never sleeps.
    pub fn disabled() -> Self {
        Self {
            period: None,
            start: Instant::now(),
            ticks: 0,
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.period.is_some()
    }

    /// Restarts the schedule from now, e.g. after a pause.
    pub fn restart(&mut self) {
        self.start = Instant::now();
        self.ticks = 0;
    }

    pub fn wait(&mut self) {
        let Some(period) = self.period else {
            return;
        };
        self.ticks += 1;
        let due = self.start + period * self.ticks;
        let now = Instant::now();
        if due > now {
            thread::sleep(due - now);
        }
    }
}
