//! Fixed-step ring buffer of past samples with linear interpolation, used to
//! read delayed states such as `θ_j(t − τ)`.

use crate::error::{Error, Result};

/// Snapping tolerance, in units of the sample step, for queries that land on a
/// stored sample up to rounding.
const NODE_SNAP: f64 = 1e-9;

/// Single-writer ring buffer of uniformly spaced samples.
///
/// Sample `k` (counting every push since construction) sits at time
/// `origin + k * step`. Only the most recent `capacity` samples are kept.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    origin: f64,
    step: f64,
    data: Vec<f64>,
    head: usize,
    len: usize,
    pushed: u64,
}

impl HistoryBuffer {
    /// Creates an empty buffer able to hold `capacity` samples spaced `step`
    /// apart, the first of which will be stamped `origin`.
    pub fn new(origin: f64, step: f64, capacity: usize) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::Config(format!("history step must be > 0, got {step}")));
        }
        if capacity < 2 {
            return Err(Error::Config("history capacity must be at least 2 samples".into()));
        }
        Ok(Self {
            origin,
            step,
            data: vec![0.0; capacity],
            head: 0,
            len: 0,
            pushed: 0,
        })
    }

    /// Buffer sized so that a lookup `max_delay` behind the newest sample
    /// always succeeds.
    pub fn for_delay(origin: f64, step: f64, max_delay: f64) -> Result<Self> {
        let capacity = (max_delay / step).ceil() as usize + 2;
        Self::new(origin, step, capacity)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn capacity(&self) -> usize {
        self.data.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Longest lag behind the newest sample that can be served.
    pub fn window(&self) -> f64 {
        self.len.saturating_sub(1) as f64 * self.step
    }

    pub fn push(&mut self, value: f64) {
        let cap = self.data.len();
        let slot = (self.head + self.len) % cap;
        self.data[slot] = value;
        if self.len < cap {
            self.len += 1;
        } else {
            self.head = (self.head + 1) % cap;
        }
        self.pushed += 1;
    }

    pub fn newest(&self) -> Option<f64> {
        (self.len > 0).then(|| self.get(self.len - 1))
    }

    /// Time stamp of the newest sample.
    pub fn newest_time(&self) -> Option<f64> {
        (self.len > 0).then(|| self.time_of(self.pushed - 1))
    }

    /// Time stamp of the oldest retained sample.
    pub fn oldest_time(&self) -> Option<f64> {
        (self.len > 0).then(|| self.time_of(self.pushed - self.len as u64))
    }

    fn time_of(&self, k: u64) -> f64 {
        self.origin + k as f64 * self.step
    }

    // i counts from the oldest retained sample
    fn get(&self, i: usize) -> f64 {
        self.data[(self.head + i) % self.data.len()]
    }

    /// Value `lag` seconds behind the newest sample. `lag = 0` returns the
    /// newest value exactly.
    pub fn lagged(&self, lag: f64) -> Result<f64> {
        if self.len == 0 {
            return Err(Error::Domain("history buffer is empty".into()));
        }
        if !(lag.is_finite() && lag >= 0.0) {
            return Err(Error::Domain(format!("lag must be finite and >= 0, got {lag}")));
        }
        let pos = (self.len - 1) as f64 - lag / self.step;
        self.interpolate(pos, lag)
    }

    /// Value at absolute time `t_query`, linearly interpolated between the two
    /// bracketing samples.
    pub fn sample(&self, t_query: f64) -> Result<f64> {
        let oldest = self
            .oldest_time()
            .ok_or_else(|| Error::Domain("history buffer is empty".into()))?;
        if !t_query.is_finite() {
            return Err(Error::Domain("query time is not finite".into()));
        }
        let first_index = self.pushed - self.len as u64;
        let pos = (t_query - self.origin) / self.step - first_index as f64;
        let newest = self.newest_time().unwrap_or(oldest);
        self.interpolate(pos, newest - t_query)
    }

    fn interpolate(&self, pos: f64, lag: f64) -> Result<f64> {
        let last = (self.len - 1) as f64;
        let mut pos = pos;
        if pos < 0.0 {
            if pos > -NODE_SNAP {
                pos = 0.0;
            } else {
                let newest = self.newest_time().unwrap_or(self.origin);
                return Err(Error::OutOfWindow {
                    query: newest - lag,
                    oldest: self.oldest_time().unwrap_or(self.origin),
                });
            }
        }
        if pos > last {
            if pos < last + NODE_SNAP {
                pos = last;
            } else {
                return Err(Error::Domain(format!(
                    "history lookup {:e} s ahead of the newest sample",
                    (pos - last) * self.step
                )));
            }
        }
        let lower = pos.floor();
        let frac = pos - lower;
        let i = lower as usize;
        if frac < NODE_SNAP || i + 1 >= self.len {
            return Ok(self.get(i));
        }
        if frac > 1.0 - NODE_SNAP {
            return Ok(self.get(i + 1));
        }
        let (a, b) = (self.get(i), self.get(i + 1));
        Ok(a + (b - a) * frac)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filled(step: f64, n: usize, f: impl Fn(f64) -> f64) -> HistoryBuffer {
        let mut buf = HistoryBuffer::new(0.0, step, n).unwrap();
        for k in 0..n {
            buf.push(f(k as f64 * step));
        }
        buf
    }

    #[test]
    fn exact_at_nodes() {
        let buf = filled(0.1, 20, |t| (3.0 * t).sin());
        for k in 0..20 {
            let t = k as f64 * 0.1;
            assert_eq!(buf.sample(t).unwrap(), (3.0 * t).sin());
        }
        assert_eq!(buf.lagged(0.0).unwrap(), (3.0 * (19.0f64 * 0.1)).sin());
    }

    #[test]
    fn midpoint_is_average() {
        let mut buf = HistoryBuffer::new(0.0, 1.0, 4).unwrap();
        buf.push(2.0);
        buf.push(6.0);
        assert_eq!(buf.sample(0.5).unwrap(), 4.0);
        assert_eq!(buf.lagged(0.5).unwrap(), 4.0);
    }

    #[test]
    fn linear_signal_is_exact() {
        let buf = filled(1e-3, 200, |t| 5.0 * t);
        for i in 0..997 {
            let t = 1e-3 + i as f64 * 1.97e-4;
            let v = buf.sample(t).unwrap();
            assert!((v - 5.0 * t).abs() <= 1e-12 * (5.0 * t).abs(), "t={t} v={v}");
        }
    }

    #[test]
    fn ring_drops_old_samples() {
        let mut buf = HistoryBuffer::new(0.0, 1.0, 3).unwrap();
        for k in 0..10 {
            buf.push(k as f64);
        }
        assert_eq!(buf.len(), 3);
        assert_eq!(buf.oldest_time(), Some(7.0));
        assert_eq!(buf.sample(8.5).unwrap(), 8.5);
        assert!(matches!(buf.sample(6.0), Err(Error::OutOfWindow { .. })));
        assert!(matches!(buf.lagged(2.5), Err(Error::OutOfWindow { .. })));
        assert!(buf.sample(9.5).is_err());
    }

    #[test]
    fn for_delay_serves_full_window() {
        let step = 1e-9;
        let tau = 2.5e-8;
        let mut buf = HistoryBuffer::for_delay(-1e-7, step, tau).unwrap();
        for k in 0..1000 {
            buf.push(k as f64);
        }
        assert!(buf.lagged(tau).is_ok());
        assert!(buf.window() >= tau);
    }

    #[test]
    fn second_order_error_on_sine() {
        let max_err = |step: f64| {
            let n = (10.0 / step) as usize + 1;
            let buf = filled(step, n, f64::sin);
            (0..5000)
                .map(|i| {
                    let t = 0.3 + i as f64 * 9.0 / 5000.0 + 0.37 * step;
                    (buf.sample(t).unwrap() - t.sin()).abs()
                })
                .fold(0.0, f64::max)
        };
        let coarse = max_err(0.1);
        let fine = max_err(0.05);
        assert!(coarse / fine >= 3.5, "ratio {}", coarse / fine);
    }
}
