//! Synchronization metrics over traces: global and local order parameters,
//! chimera index, mean frequencies, settling time and lock detection.

use std::fmt::Write as _;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::phase::OscillatorParams;
use crate::topology::Topology;
use crate::trace::SimTrace;

/// `(r, ψ)` with `r e^{iψ} = (1/N) Σ e^{iθ_j}` over the oscillators selected
/// by `mask` (all when `None`).
pub fn order_parameter(phases: &[f64], mask: Option<&[bool]>) -> Result<(f64, f64)> {
    let mut sum = Complex64::new(0.0, 0.0);
    let mut count = 0usize;
    for (i, &theta) in phases.iter().enumerate() {
        if mask.is_none_or(|m| m[i]) {
            sum += Complex64::from_polar(1.0, theta);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Domain(
            "order parameter needs at least one enabled oscillator".into(),
        ));
    }
    let mean = sum / count as f64;
    Ok((mean.norm().min(1.0), mean.arg()))
}

/// Enable mask from oscillator parameters.
pub fn enabled_mask(params: &[OscillatorParams]) -> Vec<bool> {
    params.iter().map(|p| p.enabled).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderParameterSeries {
    pub times: Vec<f64>,
    pub r: Vec<f64>,
    pub psi: Vec<f64>,
}

impl OrderParameterSeries {
    pub fn from_trace(trace: &SimTrace, mask: Option<&[bool]>) -> Result<Self> {
        let mut r = Vec::with_capacity(trace.len());
        let mut psi = Vec::with_capacity(trace.len());
        for row in trace.rows() {
            let (a, b) = order_parameter(row, mask)?;
            r.push(a);
            psi.push(b);
        }
        Ok(Self {
            times: trace.times().to_vec(),
            r,
            psi,
        })
    }

    /// Mean of `r` over samples at or after `t_start`.
    pub fn mean_r_after(&self, t_start: f64) -> Option<f64> {
        let i0 = self.times.partition_point(|&t| t < t_start);
        let tail = &self.r[i0..];
        (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalWindow {
    /// Members of the oscillator's own cluster.
    Cluster,
    /// The oscillator plus its in-neighbors.
    Neighbors,
}

/// Order parameter restricted to each oscillator's window. Disabled
/// oscillators are left out of every window; an empty window yields `None`.
pub fn local_order(
    phases: &[f64],
    topology: &Topology,
    window: LocalWindow,
    mask: Option<&[bool]>,
) -> Vec<Option<f64>> {
    let on = |i: usize| mask.is_none_or(|m| m[i]);
    (0..topology.len())
        .map(|i| {
            let ids: Vec<usize> = match window {
                LocalWindow::Cluster => topology.members(topology.cluster_of(i)).filter(|&j| on(j)).collect(),
                LocalWindow::Neighbors => std::iter::once(i)
                    .chain(topology.incoming(i).iter().map(|&(j, _)| j))
                    .filter(|&j| on(j))
                    .collect(),
            };
            if ids.is_empty() {
                return None;
            }
            let sum: Complex64 = ids.iter().map(|&j| Complex64::from_polar(1.0, phases[j])).sum();
            Some((sum / ids.len() as f64).norm().min(1.0))
        })
        .collect()
}

/// Order parameter of each cluster's enabled members; `None` for clusters
/// with none enabled.
pub fn cluster_order(phases: &[f64], topology: &Topology, mask: Option<&[bool]>) -> Vec<Option<f64>> {
    (0..topology.n_clusters())
        .map(|c| {
            let ids: Vec<usize> = topology.members(c).filter(|&j| mask.is_none_or(|m| m[j])).collect();
            if ids.is_empty() {
                return None;
            }
            let sum: Complex64 = ids.iter().map(|&j| Complex64::from_polar(1.0, phases[j])).sum();
            Some((sum / ids.len() as f64).norm().min(1.0))
        })
        .collect()
}

/// Across-cluster variance of the time-averaged cluster order parameter over
/// the final half of the trace. Zero when every cluster is equally coherent.
pub fn chimera_index(trace: &SimTrace, topology: &Topology, mask: Option<&[bool]>) -> Result<f64> {
    if trace.is_empty() {
        return Err(Error::InsufficientData("empty trace".into()));
    }
    let t_half = trace.times()[0] + 0.5 * (trace.times()[trace.len() - 1] - trace.times()[0]);
    let i0 = trace.index_at(t_half).min(trace.len() - 1);
    let nc = topology.n_clusters();
    let mut sums = vec![0.0; nc];
    let mut counts = vec![0usize; nc];
    for row in &trace.rows()[i0..] {
        for (c, r) in cluster_order(row, topology, mask).into_iter().enumerate() {
            if let Some(r) = r {
                sums[c] += r;
                counts[c] += 1;
            }
        }
    }
    let averages: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .filter(|(_, &n)| n > 0)
        .map(|(s, &n)| s / n as f64)
        .collect();
    if averages.is_empty() {
        return Err(Error::Domain("no cluster has an enabled oscillator".into()));
    }
    let mean = averages.iter().sum::<f64>() / averages.len() as f64;
    Ok(averages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / averages.len() as f64)
}

/// Average angular frequency of each column over `[t_start, t_end]`,
/// from unwrapped phases at the window's end samples.
pub fn mean_frequency(trace: &SimTrace, t_start: f64, t_end: f64) -> Result<Vec<f64>> {
    let times = trace.times();
    let i0 = trace.index_at(t_start);
    let i1 = times.partition_point(|&t| t <= t_end);
    if i1 < i0 + 10 {
        return Err(Error::InsufficientData(format!(
            "window [{t_start:e}, {t_end:e}] holds {} samples, need at least 10",
            i1.saturating_sub(i0)
        )));
    }
    let (a, b) = (&trace.rows()[i0], &trace.rows()[i1 - 1]);
    let span = times[i1 - 1] - times[i0];
    Ok(a.iter().zip(b).map(|(x, y)| (y - x) / span).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Settling {
    Settled(f64),
    NotSettled,
}

impl Settling {
    pub fn time(self) -> Option<f64> {
        match self {
            Settling::Settled(t) => Some(t),
            Settling::NotSettled => None,
        }
    }
}

/// Earliest time after which `values` stays within `±band·|final|` of `final`.
pub fn settling_time(times: &[f64], values: &[f64], band: f64, final_value: f64) -> Result<Settling> {
    if times.len() != values.len() || times.is_empty() {
        return Err(Error::Domain("settling needs equal-length, non-empty series".into()));
    }
    if band.is_nan() || band <= 0.0 {
        return Err(Error::Domain("settling band must be > 0".into()));
    }
    let tol = band * final_value.abs();
    match values.iter().rposition(|v| (v - final_value).abs() > tol) {
        None => Ok(Settling::Settled(times[0])),
        Some(i) if i + 1 == values.len() => Ok(Settling::NotSettled),
        Some(i) => Ok(Settling::Settled(times[i + 1])),
    }
}

/// Default lock tolerance: 10⁻³ of the mean natural frequency.
pub fn default_lock_tolerance(params: &[OscillatorParams]) -> f64 {
    let n = params.len().max(1) as f64;
    1e-3 * params.iter().map(OscillatorParams::effective_frequency).sum::<f64>() / n
}

#[derive(Debug, Clone, PartialEq)]
pub struct LockReport {
    pub locked: bool,
    /// Largest pairwise mean-frequency difference, rad/s.
    pub max_difference: f64,
    pub frequencies: Vec<f64>,
}

/// Locked when every pair of selected oscillators has mean frequencies within
/// `tol` (rad/s) over the final third of the trace.
pub fn lock_detect(trace: &SimTrace, tol: f64, mask: Option<&[bool]>) -> Result<LockReport> {
    let times = trace.times();
    if times.is_empty() {
        return Err(Error::InsufficientData("empty trace".into()));
    }
    let (t0, t1) = (times[0], times[times.len() - 1]);
    let frequencies = mean_frequency(trace, t1 - (t1 - t0) / 3.0, t1)?;
    let selected: Vec<f64> = frequencies
        .iter()
        .enumerate()
        .filter(|(i, _)| mask.is_none_or(|m| m[*i]))
        .map(|(_, &w)| w)
        .collect();
    let max_difference = match (
        selected.iter().cloned().reduce(f64::max),
        selected.iter().cloned().reduce(f64::min),
    ) {
        (Some(hi), Some(lo)) => hi - lo,
        _ => 0.0,
    };
    Ok(LockReport {
        locked: max_difference < tol,
        max_difference,
        frequencies,
    })
}

/// Rows of `metric,oscillator_or_cluster,value`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricTable {
    pub rows: Vec<(String, String, f64)>,
}

impl MetricTable {
    pub fn push(&mut self, metric: &str, subject: impl Into<String>, value: f64) {
        self.rows.push((metric.to_string(), subject.into(), value));
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,oscillator_or_cluster,value\n");
        for (m, s, v) in &self.rows {
            let _ = writeln!(out, "{m},{s},{v:.16e}");
        }
        out
    }
}
