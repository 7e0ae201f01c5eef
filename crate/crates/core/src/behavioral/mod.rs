//! Fixed-step time-domain simulation of a network of charge-pump PLLs.
//!
//! Each step, every PLL reads the previous step's recorded edges (its own
//! output undelayed, peers through their delay lines), runs its comparators,
//! drives the charge pump into the loop filter and advances its VCO. Reading
//! only previous-step outputs makes the per-step update order-independent.

mod comparator;
mod delay;
mod filter;
mod vco;

pub use comparator::{
    compare_phases, cs1_drive, cs1_pump_current, cs2_drive, cs2_select, xor_drive, Comparison, Cs2Mux, Pfd, PfdStep,
    PumpDrive, Sign, Spans,
};
pub use delay::{DelayLine, OutputSample};
pub use filter::{filter_step, FilterState, FilterStepper};
pub use vco::{advance, output_level, Vco, VcoStep};

use std::f64::consts::TAU;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::phase::OscillatorParams;
use crate::pll::LoopFilter;
use crate::topology::{in_neighbors, Topology};
use crate::trace::{write_float, SimTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Parallel AND/OR gate superposition of all peers.
    Cs1,
    /// Counter-driven multiplexer, one peer at a time.
    Cs2 { edges_per_advance: u32 },
    /// Free-running VCOs.
    Uncoupled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Detector {
    /// Tri-state lead/lag pulse comparator.
    #[default]
    Pfd,
    /// Level XOR, for type-1 comparisons.
    Xor,
}

/// Ideal reference oscillator fed to every enabled PLL as an extra input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSource {
    /// rad/s
    pub frequency: f64,
    /// Phase at t = 0, rad.
    pub phase: f64,
}

impl ReferenceSource {
    pub fn phase_at(&self, t: f64) -> f64 {
        self.phase + self.frequency * t
    }
}

/// Control voltages within this fraction of the supply from either rail count
/// as pinned; between pump pulses the node relaxes slightly off a hard clamp.
pub const RAIL_MARGIN: f64 = 0.01;

/// Default cap on the delay-line length, in samples.
pub const DEFAULT_MAX_DELAY_SAMPLES: usize = 1 << 16;

#[derive(Debug, Clone)]
pub struct BehavioralConfig {
    pub topology: Topology,
    pub params: Vec<OscillatorParams>,
    pub filter: LoopFilter,
    /// A
    pub i_cp: f64,
    pub scheme: Scheme,
    pub detector: Detector,
    /// Quantized coupling delay actually applied, seconds. Set through
    /// [`BehavioralConfig::set_delay`].
    delay_tau: f64,
    delay_samples: usize,
    pub max_delay_samples: usize,
    pub dt: f64,
    pub v_supply: f64,
    pub t_end: f64,
    pub sample_every: usize,
    /// Initial VCO phases, rad.
    pub initial_phases: Vec<f64>,
    /// Initial control voltages; both filter capacitors start equalized.
    pub initial_vctrl: Vec<f64>,
    pub reference: Option<ReferenceSource>,
    /// Keep the per-step output level of every PLL.
    pub record_levels: bool,
}

impl BehavioralConfig {
    /// Defaults: parallel scheme, PFD, no delay, 1 V supply starting at
    /// mid-rail, `dt` = 1/100 of the mean VCO period, 600 µs run.
    pub fn new(topology: Topology, params: Vec<OscillatorParams>, filter: LoopFilter, i_cp: f64) -> Result<Self> {
        let n = topology.len();
        if params.len() != n {
            return Err(Error::Config(format!("{} parameter sets for {n} PLLs", params.len())));
        }
        let mean_w = params.iter().map(OscillatorParams::effective_frequency).sum::<f64>() / n.max(1) as f64;
        let v_supply = 1.0;
        Ok(Self {
            topology,
            params,
            filter,
            i_cp,
            scheme: Scheme::Cs1,
            detector: Detector::Pfd,
            delay_tau: 0.0,
            delay_samples: 0,
            max_delay_samples: DEFAULT_MAX_DELAY_SAMPLES,
            dt: TAU / mean_w / 100.0,
            v_supply,
            t_end: 600e-6,
            sample_every: 1000,
            initial_phases: vec![0.0; n],
            initial_vctrl: vec![0.5 * v_supply; n],
            reference: None,
            record_levels: false,
        })
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn delay_tau(&self) -> f64 {
        self.delay_tau
    }

    pub fn delay_samples(&self) -> usize {
        self.delay_samples
    }

    /// Quantizes `tau` to `round(tau/dt)` samples and returns the effective
    /// delay. Call again after changing `dt`.
    pub fn set_delay(&mut self, tau: f64) -> Result<f64> {
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::Config(format!("delay must be >= 0, got {tau}")));
        }
        let samples = (tau / self.dt).round();
        if samples > self.max_delay_samples as f64 {
            return Err(Error::Config(format!(
                "delay {tau:e} s needs {samples} samples, capacity is {}",
                self.max_delay_samples
            )));
        }
        self.delay_samples = samples as usize;
        self.delay_tau = self.delay_samples as f64 * self.dt;
        Ok(self.delay_tau)
    }

    /// VCO of PLL `i`: its effective natural frequency sits at mid-rail.
    pub fn vco(&self, i: usize) -> Vco {
        let p = &self.params[i];
        Vco::centered(p.effective_frequency(), p.vco_gain, 0.5 * self.v_supply)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::Config("no PLLs".into()));
        }
        if self.topology.len() != n || self.initial_phases.len() != n || self.initial_vctrl.len() != n {
            return Err(Error::Config("per-PLL vectors must match the topology size".into()));
        }
        for p in &self.params {
            p.validate()?;
        }
        if !(self.i_cp.is_finite() && self.i_cp > 0.0) {
            return Err(Error::Config("charge-pump current must be > 0".into()));
        }
        if !(self.v_supply.is_finite() && self.v_supply > 0.0) {
            return Err(Error::Config("supply voltage must be > 0".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config("dt must be > 0".into()));
        }
        if !(self.t_end.is_finite() && self.t_end >= self.dt) {
            return Err(Error::Config("t_end must be >= dt".into()));
        }
        if self.sample_every == 0 {
            return Err(Error::Config("sample_every must be >= 1".into()));
        }
        let fastest = (0..n).map(|i| self.vco(i).frequency(self.v_supply)).fold(0.0, f64::max);
        let limit = TAU / fastest / 64.0;
        if self.dt > limit * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "dt = {:e} s exceeds 1/64 of the fastest VCO period ({limit:e} s)",
                self.dt
            )));
        }
        if let Some(v) = self.initial_vctrl.iter().find(|v| !(0.0..=self.v_supply).contains(*v)) {
            return Err(Error::Config(format!(
                "initial control voltage {v} outside [0, v_supply]"
            )));
        }
        if self.initial_phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("initial phases must be finite".into()));
        }
        if let Scheme::Cs2 { edges_per_advance: 0 } = self.scheme {
            return Err(Error::Config("edges_per_advance must be >= 1".into()));
        }
        Ok(())
    }
}

/// Observable state of one PLL.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PllState {
    pub vco_phase: f64,
    pub v_c1: f64,
    pub v_ctrl: f64,
    pub cs2_counter: u8,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Input {
    Peer(usize),
    Reference,
}

/// Rising-edge bookkeeping used to reconstruct phase from a binary output.
#[derive(Debug, Clone, Copy, PartialEq)]
struct EdgeTracker {
    last: Option<(f64, i64)>,
    prev_time: Option<f64>,
    window_first: Option<(f64, i64)>,
    window_last: Option<(f64, i64)>,
}

impl EdgeTracker {
    fn new() -> Self {
        Self {
            last: None,
            prev_time: None,
            window_first: None,
            window_last: None,
        }
    }

    fn record(&mut self, t: f64, index: i64, in_window: bool) {
        self.prev_time = self.last.map(|(t, _)| t);
        self.last = Some((t, index));
        if in_window {
            self.window_first.get_or_insert((t, index));
            self.window_last = Some((t, index));
        }
    }

    /// Phase at `t` interpolated from edge times, or `None` before two edges.
    fn phase(&self, t: f64) -> Option<f64> {
        let (t_last, m) = self.last?;
        let period = t_last - self.prev_time?;
        Some(TAU * m as f64 + TAU * (t - t_last) / period)
    }

    fn window_frequency(&self) -> Option<f64> {
        let ((t0, m0), (t1, m1)) = (self.window_first?, self.window_last?);
        (m1 > m0).then(|| TAU * (m1 - m0) as f64 / (t1 - t0))
    }
}

struct PllRuntime {
    vco: Vco,
    enabled: bool,
    phase: f64,
    filter: FilterState,
    delay: DelayLine,
    own_prev: OutputSample,
    exported_prev: OutputSample,
    inputs: Vec<Input>,
    pfds: Vec<Pfd>,
    mux: Cs2Mux,
    tracker: EdgeTracker,
    charge: f64,
    clamped_steps: usize,
    rail_steps: usize,
    duty_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BehavioralSummary {
    pub locked: bool,
    /// PLLs whose control voltage sat at a rail (see [`RAIL_MARGIN`]) for more
    /// than half the run.
    pub pinned: Vec<bool>,
    /// Mean output frequency over the final third, rad/s, from edge times.
    pub mean_frequency: Vec<Option<f64>>,
    /// 2%-band settling of each PLL's C1 voltage, relative to its largest
    /// excursion from the final value.
    pub settling_time: Vec<Option<f64>>,
    pub lock_tolerance: f64,
}

impl BehavioralSummary {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "locked: {}", self.locked);
        let _ = writeln!(out, "lock_tolerance_rad_s: {}", self.lock_tolerance);
        for (i, ((w, ts), pinned)) in self
            .mean_frequency
            .iter()
            .zip(&self.settling_time)
            .zip(&self.pinned)
            .enumerate()
        {
            let fmt = |v: &Option<f64>| v.map_or("none".to_string(), |x| x.to_string());
            let _ = writeln!(out, "pll_{i}.mean_frequency_rad_s: {}", fmt(w));
            let _ = writeln!(out, "pll_{i}.settling_time_s: {}", fmt(ts));
            let _ = writeln!(out, "pll_{i}.pinned: {pinned}");
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct BehavioralRun {
    pub vctrl: SimTrace,
    /// Phases reconstructed from output edge times.
    pub phases: SimTrace,
    /// Fraction of each sample interval during which the pump was active.
    pub pump_duty: SimTrace,
    pub summary: BehavioralSummary,
    pub final_states: Vec<PllState>,
    /// Net charge delivered by each pump over the run, C.
    pub pump_charge: Vec<f64>,
    /// Steps in which each filter was clamped at a rail.
    pub clamped_steps: Vec<usize>,
    /// Per-step output levels, `[pll][step]`, when requested.
    pub levels: Option<Vec<Vec<bool>>>,
}

impl BehavioralRun {
    /// `t,vctrl_0..vctrl_{N-1},phase_0..phase_{N-1}`
    pub fn to_csv(&self) -> String {
        let n = self.vctrl.width();
        let mut out = String::from("t");
        for i in 0..n {
            let _ = write!(out, ",vctrl_{i}");
        }
        for i in 0..n {
            let _ = write!(out, ",phase_{i}");
        }
        out.push('\n');
        for ((t, v), p) in self.vctrl.times().iter().zip(self.vctrl.rows()).zip(self.phases.rows()) {
            write_float(&mut out, *t);
            for x in v.iter().chain(p) {
                out.push(',');
                write_float(&mut out, *x);
            }
            out.push('\n');
        }
        out
    }
}

fn reference_edge(reference: &ReferenceSource, t0: f64, dt: f64) -> OutputSample {
    let (a, b) = (reference.phase_at(t0), reference.phase_at(t0 + dt));
    let s = advance(a, b - a);
    OutputSample {
        level: s.level,
        edge: s.rising_edge,
    }
}

/// Runs the network for `config.t_end` seconds.
pub fn run_behavioral(config: &BehavioralConfig) -> Result<BehavioralRun> {
    config.validate()?;
    let n = config.len();
    let dt = config.dt;
    let steps = (config.t_end / dt - 1e-9).ceil() as usize;
    let t_window = config.t_end * 2.0 / 3.0;
    let stepper = FilterStepper::new(&config.filter, dt, config.v_supply);
    let coupled = config.scheme != Scheme::Uncoupled;

    let mut plls: Vec<PllRuntime> = (0..n)
        .map(|i| {
            let p = &config.params[i];
            let mut inputs: Vec<Input> = if coupled {
                in_neighbors(&config.topology, &config.params, i)
                    .into_iter()
                    .filter(|&(_, w)| w > 0.0)
                    .map(|(j, _)| Input::Peer(j))
                    .collect()
            } else {
                Vec::new()
            };
            if coupled && p.enabled && config.reference.is_some() {
                inputs.push(Input::Reference);
            }
            let edges_per_advance = match config.scheme {
                Scheme::Cs2 { edges_per_advance } => edges_per_advance,
                _ => 1,
            };
            let phase = config.initial_phases[i];
            PllRuntime {
                vco: config.vco(i),
                enabled: p.enabled,
                phase,
                filter: FilterState::equalized(config.initial_vctrl[i]),
                delay: DelayLine::new(config.delay_samples),
                own_prev: OutputSample {
                    level: output_level(phase),
                    edge: None,
                },
                exported_prev: OutputSample::default(),
                pfds: vec![Pfd::default(); inputs.len()],
                inputs,
                mux: Cs2Mux::new(edges_per_advance),
                tracker: EdgeTracker::new(),
                charge: 0.0,
                clamped_steps: 0,
                rail_steps: 0,
                duty_acc: 0.0,
            }
        })
        .collect();

    let mut vctrl = SimTrace::new(n);
    let mut phases = SimTrace::new(n);
    let mut duty = SimTrace::new(n);
    let mut c1_series: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut levels = config.record_levels.then(|| vec![Vec::with_capacity(steps); n]);

    let sample = |plls: &[PllRuntime], t: f64, vctrl: &mut SimTrace, phases: &mut SimTrace| -> Result<()> {
        vctrl.push(t, plls.iter().map(|p| p.filter.v_ctrl).collect())?;
        phases.push(t, plls.iter().map(|p| p.tracker.phase(t).unwrap_or(p.phase)).collect())?;
        Ok(())
    };
    sample(&plls, 0.0, &mut vctrl, &mut phases)?;
    duty.push(0.0, vec![0.0; n])?;
    for (series, p) in c1_series.iter_mut().zip(&plls) {
        series.push(p.filter.v_c1);
    }

    let mut exported: Vec<OutputSample> = vec![OutputSample::default(); n];
    let mut pfd_steps: Vec<PfdStep> = Vec::new();
    let mut peer_levels: Vec<bool> = Vec::new();

    for step in 0..steps {
        let t = step as f64 * dt;
        for (i, p) in plls.iter().enumerate() {
            exported[i] = p.exported_prev;
        }
        let reference = config.reference.map(|r| {
            if step == 0 {
                OutputSample::default()
            } else {
                reference_edge(&r, t - dt, dt)
            }
        });

        for p in plls.iter_mut() {
            let own_sample = p.own_prev;
            let drive = if !p.enabled || p.inputs.is_empty() {
                PumpDrive::default()
            } else {
                let input_sample = |inp: &Input| match inp {
                    Input::Peer(j) => exported[*j],
                    Input::Reference => reference.unwrap_or_default(),
                };
                match config.detector {
                    Detector::Pfd => {
                        pfd_steps.clear();
                        for (pfd, inp) in p.pfds.iter_mut().zip(&p.inputs) {
                            pfd_steps.push(pfd.step(input_sample(inp).edge, own_sample.edge));
                        }
                        match config.scheme {
                            Scheme::Cs1 => cs1_drive(&pfd_steps),
                            Scheme::Cs2 { .. } => cs2_drive(&pfd_steps, &mut p.mux, own_sample.edge),
                            Scheme::Uncoupled => PumpDrive::default(),
                        }
                    }
                    Detector::Xor => {
                        peer_levels.clear();
                        match config.scheme {
                            Scheme::Cs2 { .. } => {
                                if let Some(k) = p.mux.selected(p.inputs.len()) {
                                    peer_levels.push(input_sample(&p.inputs[k]).level);
                                }
                                if own_sample.edge.is_some() {
                                    p.mux.on_edge();
                                }
                            }
                            _ => peer_levels.extend(p.inputs.iter().map(|inp| input_sample(inp).level)),
                        }
                        xor_drive(own_sample.level, &peer_levels)
                    }
                }
            };

            let i_pump = drive.current(config.i_cp);
            let v_before = p.filter.v_ctrl;
            if p.enabled {
                let (next, clamped) = stepper.step(p.filter, i_pump);
                if clamped {
                    p.clamped_steps += 1;
                } else {
                    p.charge += i_pump * dt;
                }
                p.filter = next;
                let margin = RAIL_MARGIN * config.v_supply;
                if next.v_ctrl <= margin || next.v_ctrl >= config.v_supply - margin {
                    p.rail_steps += 1;
                }
            }
            p.duty_acc += drive.active;

            let v_avg = 0.5 * (v_before + p.filter.v_ctrl);
            let s = p.vco.step(p.phase, v_avg, dt);
            p.phase = s.phase;
            let out = OutputSample {
                level: s.level,
                edge: s.rising_edge,
            };
            if let Some(f) = s.rising_edge {
                let te = t + f * dt;
                p.tracker.record(te, s.edge_index, te >= t_window);
            }
            p.own_prev = out;
            p.exported_prev = p.delay.push(out);
        }

        if let Some(lv) = levels.as_mut() {
            for (row, p) in lv.iter_mut().zip(&plls) {
                row.push(p.own_prev.level);
            }
        }
        if (step + 1) % config.sample_every == 0 {
            let t_next = (step + 1) as f64 * dt;
            sample(&plls, t_next, &mut vctrl, &mut phases)?;
            duty.push(
                t_next,
                plls.iter().map(|p| p.duty_acc / config.sample_every as f64).collect(),
            )?;
            for (series, p) in c1_series.iter_mut().zip(plls.iter_mut()) {
                series.push(p.filter.v_c1);
                p.duty_acc = 0.0;
            }
        }
    }

    let lock_tolerance = crate::analysis::default_lock_tolerance(&config.params);
    let pinned: Vec<bool> = plls.iter().map(|p| p.rail_steps * 2 > steps).collect();
    let mean_frequency: Vec<Option<f64>> = plls.iter().map(|p| p.tracker.window_frequency()).collect();
    let enabled_freqs: Vec<Option<f64>> = plls
        .iter()
        .zip(&mean_frequency)
        .filter(|(p, _)| p.enabled)
        .map(|(_, w)| *w)
        .collect();
    let all_measured = enabled_freqs.iter().all(Option::is_some);
    let freqs: Vec<f64> = enabled_freqs.iter().flatten().copied().collect();
    let frequencies_agree = match config.reference {
        Some(r) if coupled => freqs.iter().all(|w| (w - r.frequency).abs() < lock_tolerance),
        _ => {
            let hi = freqs.iter().copied().fold(f64::MIN, f64::max);
            let lo = freqs.iter().copied().fold(f64::MAX, f64::min);
            freqs.len() < 2 || hi - lo < lock_tolerance
        }
    };
    let locked = all_measured && frequencies_agree && !pinned.iter().any(|&p| p);

    let times = vctrl.times().to_vec();
    let settling_time = c1_series
        .iter()
        .map(|series| {
            // band relative to the largest excursion from the final value, so a
            // transient that returns to its starting point still has a scale
            let v1 = *series.last().expect("initial sample present");
            let scale = series.iter().map(|v| (v - v1).abs()).fold(0.0, f64::max);
            if scale < 1e-12 {
                return Some(0.0);
            }
            let normalized: Vec<f64> = series.iter().map(|v| 1.0 + (v - v1) / scale).collect();
            crate::analysis::settling_time(&times, &normalized, 0.02, 1.0)
                .ok()
                .and_then(|s| s.time())
        })
        .collect();

    Ok(BehavioralRun {
        vctrl,
        phases,
        pump_duty: duty,
        summary: BehavioralSummary {
            locked,
            pinned,
            mean_frequency,
            settling_time,
            lock_tolerance,
        },
        final_states: plls
            .iter()
            .map(|p| PllState {
                vco_phase: p.phase,
                v_c1: p.filter.v_c1,
                v_ctrl: p.filter.v_ctrl,
                cs2_counter: p.mux.counter(),
            })
            .collect(),
        pump_charge: plls.iter().map(|p| p.charge).collect(),
        clamped_steps: plls.iter().map(|p| p.clamped_steps).collect(),
        levels,
    })
}
