use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

/// Caps concurrent requests to one backend and spaces out request starts.
pub struct Limiter {
    max_in_flight: usize,
    in_flight: Mutex<usize>,
    released: Condvar,
    min_interval: Duration,
    next_start: Mutex<Option<Instant>>,
}

pub struct Permit<'a> {
    limiter: &'a Limiter,
}

impl Limiter {
    pub fn new(max_in_flight: usize, min_interval: Duration) -> Self {
        Self {
            max_in_flight: max_in_flight.max(1),
            in_flight: Mutex::new(0),
            released: Condvar::new(),
            min_interval,
            next_start: Mutex::new(None),
        }
    }

    /// Blocks until a slot is free and the rate interval has elapsed.
    pub fn acquire(&self) -> Permit<'_> {
        {
            let mut n = self.in_flight.lock().expect("limiter lock");
            while *n >= self.max_in_flight {
                n = self.released.wait(n).expect("limiter lock");
            }
            *n += 1;
        }
        if !self.min_interval.is_zero() {
            let wait = {
                let mut next = self.next_start.lock().expect("limiter lock");
                let now = Instant::now();
                let start = next.map_or(now, |t| t.max(now));
                *next = Some(start + self.min_interval);
                start - now
            };
            if !wait.is_zero() {
                std::thread::sleep(wait);
            }
        }
        Permit { limiter: self }
    }

    pub fn in_flight(&self) -> usize {
        *self.in_flight.lock().expect("limiter lock")
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.limiter.in_flight.lock().expect("limiter lock");
        *n -= 1;
        self.limiter.released.notify_one();
    }
}
