//! Processing clock and the bounded hand-off queue between ingest and analysis.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use crossbeam::queue::ArrayQueue;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClockMode {
    /// Ticks back-to-back, as fast as the consumer can go.
    Headless,
    /// One tick per hop period against absolute deadlines.
    Realtime,
}

#[derive(Clone, Copy, Debug)]
pub struct Tick {
    pub index: u64,
    /// Deadline the tick was scheduled for (equals `emitted` in headless mode).
    pub scheduled: Instant,
    pub emitted: Instant,
}

/// Iterator of ticks. Realtime deadlines are `start + n·period`, so sleep
/// overshoot on one tick does not accumulate into drift.
#[derive(Debug)]
pub struct Clock {
    mode: ClockMode,
    period: Duration,
    start: Option<Instant>,
    next: u64,
}

impl Clock {
    pub fn new(mode: ClockMode, period: Duration) -> Self {
        Clock {
            mode,
            period,
            start: None,
            next: 0,
        }
    }

    pub fn for_hop(mode: ClockMode, hop_size: usize, sample_rate: u32) -> Self {
        Self::new(
            mode,
            Duration::from_secs_f64(hop_size as f64 / sample_rate as f64),
        )
    }

    pub fn period(&self) -> Duration {
        self.period
    }

    pub fn mode(&self) -> ClockMode {
        self.mode
    }
}

impl Iterator for Clock {
    type Item = Tick;

    fn next(&mut self) -> Option<Tick> {
        let index = self.next;
        self.next += 1;
        match self.mode {
            ClockMode::Headless => {
                let now = Instant::now();
                Some(Tick {
                    index,
                    scheduled: now,
                    emitted: now,
                })
            }
            ClockMode::Realtime => {
                let start = *self.start.get_or_insert_with(Instant::now);
                let scheduled = start + self.period.mul_f64(index as f64);
                sleep_until(scheduled);
                Some(Tick {
                    index,
                    scheduled,
                    emitted: Instant::now(),
                })
            }
        }
    }
}

fn sleep_until(deadline: Instant) {
    // Coarse sleep, then spin out the last half millisecond.
    const SPIN: Duration = Duration::from_micros(500);
    loop {
        let now = Instant::now();
        if now >= deadline {
            return;
        }
        let left = deadline - now;
        if left > SPIN {
            std::thread::sleep(left - SPIN);
        } else {
            std::hint::spin_loop();
        }
    }
}

pub const FRAME_QUEUE_CAPACITY: usize = 4;

/// Bounded queue that never blocks the producer: when full, the oldest item
/// is dropped and counted.
#[derive(Debug)]
pub struct DropOldestQueue<T> {
    inner: ArrayQueue<T>,
    dropped: AtomicU64,
}

impl<T> DropOldestQueue<T> {
    pub fn new(capacity: usize) -> Self {
        DropOldestQueue {
            inner: ArrayQueue::new(capacity),
            dropped: AtomicU64::new(0),
        }
    }

    pub fn push(&self, item: T) {
        if self.inner.force_push(item).is_some() {
            self.dropped.fetch_add(1, Ordering::Relaxed);
        }
    }

    pub fn pop(&self) -> Option<T> {
        self.inner.pop()
    }

    pub fn len(&self) -> usize {
        self.inner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.is_empty()
    }

    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }
}
