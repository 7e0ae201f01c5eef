//! Parameter sweeps on a worker pool with per-point seeds.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::run::{run_once, Metrics, RunOutput};

/// Seed of grid point `index`: one splitmix64 output from the base seed
/// advanced `index + 1` steps. Depends only on `(base, index)`, so any subset
/// of a sweep reproduces its points.
pub fn point_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub index: usize,
    pub values: Vec<f64>,
    pub seed: u64,
    /// The point's output, or the error text when it failed.
    pub outcome: Result<RunOutput, String>,
}

impl SweepRow {
    pub fn metrics(&self) -> Option<&Metrics> {
        self.outcome.as_ref().ok().map(|o| &o.metrics)
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub parameters: Vec<String>,
    pub rows: Vec<SweepRow>,
}

fn csv_field(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.16e}"))
}

impl SweepResult {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.outcome.is_err()).count()
    }

    /// One row per grid point, in index order. Failed points carry their
    /// error in `status` and empty metric fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index");
        for p in &self.parameters {
            let _ = write!(out, ",{p}");
        }
        out.push_str(
            ",seed,status,final_r,locked,mean_frequency_rad_s,settling_time_s,chimera_index,phase_margin_deg\n",
        );
        for row in &self.rows {
            let _ = write!(out, "{}", row.index);
            for v in &row.values {
                let _ = write!(out, ",{v}");
            }
            let _ = write!(out, ",{}", row.seed);
            match &row.outcome {
                Ok(o) => {
                    let m = &o.metrics;
                    let _ = writeln!(
                        out,
                        ",ok,{},{},{},{},{},{}",
                        csv_field(m.final_r),
                        m.locked.map_or(String::new(), |b| b.to_string()),
                        csv_field(m.mean_frequency),
                        csv_field(m.settling_time),
                        csv_field(m.chimera_index),
                        csv_field(m.phase_margin),
                    );
                }
                Err(e) => {
                    // keep the message inside one CSV field
                    let msg: String = e.chars().map(|c| if c == ',' || c == '\n' { ';' } else { c }).collect();
                    let _ = writeln!(out, ",error: {msg},,,,,,");
                }
            }
        }
        out
    }
}

/// Runs every grid point of `cfg` on `workers` threads. A config without a
/// sweep is a one-point grid. Results are in grid order and do not depend on
/// the worker count.
pub fn run_sweep(cfg: &ExperimentConfig, workers: usize) -> Result<SweepResult, rayon::ThreadPoolBuildError> {
    let grid = cfg.grid();
    let parameters = cfg
        .sweep
        .as_ref()
        .map(|s| s.axes.iter().map(|a| a.parameter.clone()).collect())
        .unwrap_or_default();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
    let rows = pool.install(|| {
        grid.par_iter()
            .enumerate()
            .map(|(index, values)| {
                let seed = point_seed(cfg.seed, index as u64);
                let outcome = cfg
                    .at_point(values)
                    .map_err(|e| e.to_string())
                    .and_then(|point| run_once(&point, seed).map_err(|e| e.to_string()));
                SweepRow {
                    index,
                    values: values.clone(),
                    seed,
                    outcome,
                }
            })
            .collect()
    });
    Ok(SweepResult { parameters, rows })
}
