//! Uniformly sampled time series of oscillator phases, with CSV export.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Phases (or any per-oscillator scalar) sampled on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    times: Vec<f64>,
    rows: Vec<Vec<f64>>,
    width: usize,
}

impl SimTrace {
    pub fn new(width: usize) -> Self {
        Self {
            times: Vec::new(),
            rows: Vec::new(),
            width,
        }
    }

    pub fn from_rows(times: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != rows.len() {
            return Err(Error::Domain("time and row counts differ".into()));
        }
        let width = rows.first().map_or(0, Vec::len);
        let mut trace = Self::new(width);
        for (t, row) in times.into_iter().zip(rows) {
            trace.push(t, row)?;
        }
        Ok(trace)
    }

    pub fn push(&mut self, t: f64, row: Vec<f64>) -> Result<()> {
        if row.len() != self.width {
            return Err(Error::Domain(format!(
                "row has {} columns, trace has {}",
                row.len(),
                self.width
            )));
        }
        if let Some(&last) = self.times.last() {
            if t <= last {
                return Err(Error::Domain("trace times must be strictly increasing".into()));
            }
        }
        self.times.push(t);
        self.rows.push(row);
        Ok(())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Time series of column `i`.
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[i]).collect()
    }

    pub fn last_row(&self) -> Option<&[f64]> {
        self.rows.last().map(Vec::as_slice)
    }

    /// Index of the first sample at or after `t`.
    pub fn index_at(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s < t)
    }

    /// CSV with header `t,<prefix>_0,...`; full double precision.
    pub fn to_csv(&self, prefix: &str) -> String {
        let columns: Vec<String> = (0..self.width).map(|i| format!("{prefix}_{i}")).collect();
        let mut out = String::with_capacity(self.len() * (self.width + 1) * 24);
        out.push('t');
        for c in &columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (t, row) in self.times.iter().zip(&self.rows) {
            write_float(&mut out, *t);
            for v in row {
                out.push(',');
                write_float(&mut out, *v);
            }
            out.push('\n');
        }
        out
    }

    /// Reads a CSV whose first column is `t`. Columns whose header starts with
    /// `prefix` are kept, in order.
    pub fn from_csv(text: &str, prefix: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = lines.next().ok_or_else(|| Error::Domain("empty CSV".into()))?.1;
        let names: Vec<&str> = header.split(',').map(str::trim).collect();
        if names.first() != Some(&"t") {
            return Err(Error::Domain("CSV header must start with `t`".into()));
        }
        let keep: Vec<usize> = names
            .iter()
            .enumerate()
            .filter(|(_, n)| n.starts_with(prefix))
            .map(|(i, _)| i)
            .collect();
        if keep.is_empty() {
            return Err(Error::Domain(format!("no `{prefix}*` columns in CSV")));
        }
        let mut trace = Self::new(keep.len());
        for (lineno, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != names.len() {
                return Err(Error::Domain(format!("line {}: wrong field count", lineno + 1)));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Domain(format!("line {}: bad number `{s}`", lineno + 1)))
            };
            let t = parse(fields[0])?;
            let row = keep.iter().map(|&i| parse(fields[i])).collect::<Result<Vec<_>>>()?;
            trace.push(t, row)?;
        }
        Ok(trace)
    }
}

/// 17 significant digits.
pub(crate) fn write_float(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.16e}");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let mut tr = SimTrace::new(2);
        tr.push(0.0, vec![0.1, -2.0 / 3.0]).unwrap();
        tr.push(1e-9, vec![std::f64::consts::PI, 1e300]).unwrap();
        let csv = tr.to_csv("theta");
        assert!(csv.starts_with("t,theta_0,theta_1\n"));
        let back = SimTrace::from_csv(&csv, "theta").unwrap();
        assert_eq!(back, tr);
    }

    #[test]
    fn rejects_non_increasing_times() {
        let mut tr = SimTrace::new(1);
        tr.push(1.0, vec![0.0]).unwrap();
        assert!(tr.push(1.0, vec![0.0]).is_err());
        assert!(tr.push(2.0, vec![0.0, 1.0]).is_err());
    }
}
