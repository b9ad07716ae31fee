use std::sync::{Arc, Condvar, Mutex};

use crate::error::{Error, Result};

/// Counting semaphore bounding in-flight requests per provider.
#[derive(Debug, Clone)]
pub struct Limiter {
    inner: Arc<(Mutex<usize>, Condvar)>,
    capacity: usize,
}

impl Limiter {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::validation("max_concurrency must be >= 1"));
        }
        Ok(Limiter {
            inner: Arc::new((Mutex::new(capacity), Condvar::new())),
            capacity,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn acquire(&self) -> Permit {
        let (lock, cv) = &*self.inner;
        let mut free = lock.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit {
            inner: self.inner.clone(),
        }
    }
}

#[derive(Debug)]
pub struct Permit {
    inner: Arc<(Mutex<usize>, Condvar)>,
}

impl Drop for Permit {
    fn drop(&mut self) {
        let (lock, cv) = &*self.inner;
        *lock.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        cv.notify_one();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn bounds_parallelism() {
        let limiter = Limiter::new(2).unwrap();
        let active = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    let _p = limiter.acquire();
                    let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(std::time::Duration::from_millis(5));
                    active.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 2);
        assert!(Limiter::new(0).is_err());
    }
}
