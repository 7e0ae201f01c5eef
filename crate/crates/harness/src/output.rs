//! Output directory handling, CSV/summary files and gnuplot scripts.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::error::HarnessError;
use crate::run::{Artifacts, LoopDesignOutput, RunOutput};
use crate::sweep::SweepResult;

/// Creates `dir`, refusing to reuse a non-empty directory unless `force`.
pub fn prepare_dir(dir: &Path, force: bool) -> Result<(), HarnessError> {
    if dir.exists() {
        let mut entries = fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
        if entries.next().is_some() && !force {
            return Err(HarnessError::Refused(format!(
                "output directory {} is not empty; pass --force to overwrite",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

/// Writes `contents` to `dir/name` and returns the path.
pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, HarnessError> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    fs::write(&path, contents).map_err(|e| HarnessError::io(&path, e))?;
    Ok(path)
}

/// One curve of a plot script: `(y column, title)`.
pub struct Plot<'a> {
    pub title: &'a str,
    pub data: &'a str,
    pub x_col: usize,
    pub curves: Vec<(usize, String)>,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub log_x: bool,
}

/// gnuplot script rendering `plot` to a PNG next to the data file.
pub fn gnuplot_script(plot: &Plot<'_>) -> String {
    let stem = plot.data.trim_end_matches(".csv");
    let mut s = String::new();
    s += "set datafile separator ','\n";
    s += "set terminal pngcairo size 900,600\n";
    s += &format!("set output '{stem}.png'\n");
    s += &format!("set title '{}'\n", plot.title);
    s += &format!("set xlabel '{}'\nset ylabel '{}'\n", plot.x_label, plot.y_label);
    if plot.log_x {
        s += "set logscale x\n";
    }
    s += "set grid\nset key autotitle columnhead\n";
    let curves: Vec<String> = plot
        .curves
        .iter()
        .map(|(col, title)| {
            format!(
                "'{}' using {}:{} with lines title '{title}'",
                plot.data, plot.x_col, col
            )
        })
        .collect();
    s += &format!("plot {}\n", curves.join(", \\\n     "));
    s
}

fn write_plot(dir: &Path, name: &str, plot: &Plot<'_>) -> Result<PathBuf, HarnessError> {
    write_file(dir, name, &gnuplot_script(plot))
}

fn header(cfg: &ExperimentConfig, seed_line: &str) -> String {
    let mut s = String::from("# configuration (canonical)\n");
    for line in cfg.to_text().lines() {
        s += &format!("# {line}\n");
    }
    s += seed_line;
    s.push('\n');
    s
}

/// `design.txt`, `bode.csv`, `step.csv`, `margin_vs_c2.csv` and their plots.
pub fn emit_loop_design(dir: &Path, d: &LoopDesignOutput) -> Result<Vec<PathBuf>, HarnessError> {
    let mut files = vec![write_file(dir, "design.txt", &d.report)?];
    files.extend(emit_bode(dir, d)?);
    files.extend(emit_step(dir, d)?);
    files.extend(emit_c2_sweep(dir, d)?);
    Ok(files)
}

pub fn emit_bode(dir: &Path, d: &LoopDesignOutput) -> Result<Vec<PathBuf>, HarnessError> {
    Ok(vec![
        write_file(dir, "bode.csv", &d.bode.to_csv())?,
        write_plot(
            dir,
            "bode.gp",
            &Plot {
                title: "Open-loop response",
                data: "bode.csv",
                x_col: 1,
                curves: vec![(2, "gain (dB)".into()), (3, "phase (deg)".into())],
                x_label: "omega (rad/s)",
                y_label: "dB / deg",
                log_x: true,
            },
        )?,
    ])
}

pub fn emit_step(dir: &Path, d: &LoopDesignOutput) -> Result<Vec<PathBuf>, HarnessError> {
    Ok(vec![
        write_file(dir, "step.csv", &d.step.to_csv("y"))?,
        write_plot(
            dir,
            "step.gp",
            &Plot {
                title: "Closed-loop step response",
                data: "step.csv",
                x_col: 1,
                curves: vec![(2, "output phase".into())],
                x_label: "t (s)",
                y_label: "normalized response",
                log_x: false,
            },
        )?,
    ])
}

pub fn emit_c2_sweep(dir: &Path, d: &LoopDesignOutput) -> Result<Vec<PathBuf>, HarnessError> {
    Ok(vec![
        write_file(dir, "margin_vs_c2.csv", &d.c2_sweep.to_csv())?,
        write_plot(
            dir,
            "margin_vs_c2.gp",
            &Plot {
                title: "Phase margin vs C2",
                data: "margin_vs_c2.csv",
                x_col: 1,
                curves: vec![(2, "phase margin".into())],
                x_label: "C2 (F)",
                y_label: "phase margin (deg)",
                log_x: true,
            },
        )?,
    ])
}

/// Files of a single (non-sweep) run.
pub fn emit_run(dir: &Path, cfg: &ExperimentConfig, seed: u64, out: &RunOutput) -> Result<Vec<PathBuf>, HarnessError> {
    let mut summary = header(cfg, &format!("run_seed: {seed}"));
    summary += &out.metrics.to_text();
    let mut files = Vec::new();
    match &out.artifacts {
        Artifacts::Kuramoto(trace) => {
            files.push(write_file(dir, "trace.csv", &trace.to_csv("theta"))?);
            let n = trace.width();
            files.push(write_plot(
                dir,
                "trace.gp",
                &Plot {
                    title: "Oscillator phases",
                    data: "trace.csv",
                    x_col: 1,
                    curves: (0..n.min(16)).map(|i| (i + 2, format!("theta_{i}"))).collect(),
                    x_label: "t (s)",
                    y_label: "phase (rad)",
                    log_x: false,
                },
            )?);
            files.push(write_file(dir, "order.csv", &order_csv(trace, cfg)?)?);
            files.push(write_plot(
                dir,
                "order.gp",
                &Plot {
                    title: "Global order parameter",
                    data: "order.csv",
                    x_col: 1,
                    curves: vec![(2, "r".into())],
                    x_label: "t (s)",
                    y_label: "r",
                    log_x: false,
                },
            )?);
        }
        Artifacts::Behavioral { csv, summary: sim } => {
            summary += sim;
            files.push(write_file(dir, "trace.csv", csv)?);
            let n = cfg.n_oscillators();
            files.push(write_plot(
                dir,
                "trace.gp",
                &Plot {
                    title: "Control voltages",
                    data: "trace.csv",
                    x_col: 1,
                    curves: (0..n.min(16)).map(|i| (i + 2, format!("vctrl_{i}"))).collect(),
                    x_label: "t (s)",
                    y_label: "V",
                    log_x: false,
                },
            )?);
        }
        Artifacts::LoopDesign(d) => files.extend(emit_loop_design(dir, d)?),
    }
    files.push(write_file(dir, "summary.txt", &summary)?);
    Ok(files)
}

fn order_csv(trace: &oscnet::SimTrace, cfg: &ExperimentConfig) -> Result<String, HarnessError> {
    let mut mask = vec![true; trace.width()];
    for &i in &cfg.oscillators.disabled {
        mask[i] = false;
    }
    let series = oscnet::analysis::OrderParameterSeries::from_trace(trace, Some(&mask))?;
    let mut s = String::from("t,r,psi\n");
    for ((t, r), p) in series.times.iter().zip(&series.r).zip(&series.psi) {
        s += &format!("{t:.16e},{r:.16e},{p:.16e}\n");
    }
    Ok(s)
}

/// `sweep.csv`, `summary.txt`, per-point traces under `runs/` and an
/// r-vs-parameter plot.
pub fn emit_sweep(dir: &Path, cfg: &ExperimentConfig, result: &SweepResult) -> Result<Vec<PathBuf>, HarnessError> {
    let mut files = vec![write_file(dir, "sweep.csv", &result.to_csv())?];
    let write_traces = cfg.sweep.as_ref().is_none_or(|s| s.write_traces);
    if write_traces {
        for row in &result.rows {
            if let Ok(out) = &row.outcome {
                files.push(write_file(
                    dir,
                    &format!("runs/point_{:04}.csv", row.index),
                    &out.trace_csv(),
                )?);
            }
        }
    }
    if let Some(p) = result.parameters.first() {
        let k = result.parameters.len();
        files.push(write_plot(
            dir,
            "sweep.gp",
            &Plot {
                title: "Final order parameter",
                data: "sweep.csv",
                x_col: 2,
                curves: vec![(k + 4, "final r".into())],
                x_label: p,
                y_label: "r",
                log_x: false,
            },
        )?);
    }
    let mut summary = header(cfg, &format!("base_seed: {}", cfg.seed));
    summary += &format!("points: {}\nfailed: {}\n", result.rows.len(), result.failures());
    for row in &result.rows {
        if let Err(e) = &row.outcome {
            summary += &format!("point_{}: error: {e}\n", row.index);
        }
    }
    files.push(write_file(dir, "summary.txt", &summary)?);
    Ok(files)
}
