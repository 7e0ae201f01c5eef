//! Executes one configured experiment and condenses it into summary metrics.

use std::f64::consts::PI;
use std::fmt::Write as _;

use oscnet::analysis::{
    chimera_index, default_lock_tolerance, enabled_mask, lock_detect, order_parameter, settling_time,
    OrderParameterSeries,
};
use oscnet::behavioral::{run_behavioral, BehavioralConfig, ReferenceSource, Scheme};
use oscnet::pll::{
    capacitance_sweep, closed_loop_step, design_loop, design_report, log_grid, open_loop_response, phase_margin,
    CapacitanceSweep, FrequencyResponse, LoopFilter,
};
use oscnet::topology::set_enabled;
use oscnet::{
    ClusterSpec, CouplingConfig, IntraCoupling, KuramotoSystem, OscillatorParams, PhaseVector, SimTrace, Topology,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, IntraKind, Mode, PhaseInit, SchemeKind};

/// Band used for every settling-time metric.
pub const SETTLING_BAND: f64 = 0.02;

/// Summary metrics of one run; `None` where a metric does not apply or could
/// not be computed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metrics {
    pub final_r: Option<f64>,
    pub locked: Option<bool>,
    /// Mean over enabled oscillators, rad/s.
    pub mean_frequency: Option<f64>,
    pub settling_time: Option<f64>,
    pub chimera_index: Option<f64>,
    pub phase_margin: Option<f64>,
}

impl Metrics {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| x.to_string());
        let _ = writeln!(out, "final_r: {}", opt(self.final_r));
        let _ = writeln!(
            out,
            "locked: {}",
            self.locked.map_or("none".to_string(), |b| b.to_string())
        );
        let _ = writeln!(out, "mean_frequency_rad_s: {}", opt(self.mean_frequency));
        let _ = writeln!(out, "settling_time_s: {}", opt(self.settling_time));
        let _ = writeln!(out, "chimera_index: {}", opt(self.chimera_index));
        let _ = writeln!(out, "phase_margin_deg: {}", opt(self.phase_margin));
        out
    }
}

/// Loop-design artifacts.
#[derive(Debug, Clone)]
pub struct LoopDesignOutput {
    pub filter: LoopFilter,
    pub report: String,
    pub bode: FrequencyResponse,
    pub step: SimTrace,
    pub c2_sweep: CapacitanceSweep,
}

#[derive(Debug, Clone)]
pub enum Artifacts {
    /// Phase trace (`theta_*` columns).
    Kuramoto(SimTrace),
    /// Behavioral trace CSV and the simulator's own summary text.
    Behavioral {
        csv: String,
        summary: String,
    },
    LoopDesign(Box<LoopDesignOutput>),
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: Metrics,
    pub artifacts: Artifacts,
}

impl RunOutput {
    /// The run's main trace as CSV.
    pub fn trace_csv(&self) -> String {
        match &self.artifacts {
            Artifacts::Kuramoto(trace) => trace.to_csv("theta"),
            Artifacts::Behavioral { csv, .. } => csv.clone(),
            Artifacts::LoopDesign(d) => d.step.to_csv("y"),
        }
    }
}

pub fn build_topology(cfg: &ExperimentConfig, seed: u64) -> oscnet::Result<Topology> {
    let t = &cfg.topology;
    let intra = match t.intra {
        IntraKind::AllToAll => IntraCoupling::AllToAll,
        IntraKind::Sparse => IntraCoupling::Sparse {
            p: t.sparse_p,
            seed: t.seed.unwrap_or(seed),
        },
    };
    let mut spec = ClusterSpec::new(t.n_clusters, t.per_cluster, intra, t.inter);
    // config bridges are member indices within each cluster
    spec.bridges = t
        .bridges
        .as_ref()
        .map(|b| b.iter().enumerate().map(|(c, &m)| c * t.per_cluster + m).collect());
    spec.inter_weight = t.inter_weight;
    Topology::build(&spec)
}

/// Per-oscillator parameters with seeded detuning and disabled ids applied.
pub fn build_params(
    cfg: &ExperimentConfig,
    topology: &Topology,
    rng: &mut ChaCha8Rng,
) -> oscnet::Result<Vec<OscillatorParams>> {
    let detune = cfg.oscillators.detune_hz;
    let gain = cfg.loop_.kvco_mhz_per_v * 1e6;
    let mut params = cfg
        .omegas_rad_s()
        .into_iter()
        .map(|w| {
            let offset = if detune > 0.0 {
                std::f64::consts::TAU * rng.gen_range(-detune..=detune)
            } else {
                0.0
            };
            let mut p = OscillatorParams::with_gain(w, gain)?;
            p.center_frequency_offset = offset;
            Ok(p)
        })
        .collect::<oscnet::Result<Vec<_>>>()?;
    for &id in &cfg.oscillators.disabled {
        params = set_enabled(topology, &params, id, false)?;
    }
    Ok(params)
}

pub fn initial_phases(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = cfg.n_oscillators();
    match &cfg.oscillators.initial_phase {
        PhaseInit::Random => (0..n).map(|_| rng.gen_range(-PI..PI)).collect(),
        PhaseInit::Values(v) if v.len() == 1 => vec![v[0]; n],
        PhaseInit::Values(v) => v.clone(),
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Runs the configured mode with `seed` (sparse graph, detuning, random
/// initial phases). Any sweep in `cfg` is ignored.
pub fn run_once(cfg: &ExperimentConfig, seed: u64) -> oscnet::Result<RunOutput> {
    match cfg.mode {
        Mode::Kuramoto => run_kuramoto(cfg, seed),
        Mode::Behavioral => run_pll(cfg, seed),
        Mode::LoopDesign => run_loop_design(cfg),
    }
}

fn phase_metrics(trace: &SimTrace, topology: &Topology, params: &[OscillatorParams]) -> Metrics {
    let mask = enabled_mask(params);
    let final_r = trace
        .last_row()
        .and_then(|row| order_parameter(row, Some(&mask)).ok())
        .map(|(r, _)| r);
    let tol = default_lock_tolerance(params);
    let lock = lock_detect(trace, tol, Some(&mask)).ok();
    let mean_frequency = lock
        .as_ref()
        .and_then(|l| mean(l.frequencies.iter().zip(&mask).filter(|(_, &on)| on).map(|(w, _)| *w)));
    let settling = OrderParameterSeries::from_trace(trace, Some(&mask))
        .ok()
        .and_then(|series| {
            let last = *series.r.last()?;
            settling_time(&series.times, &series.r, SETTLING_BAND, last)
                .ok()?
                .time()
        });
    Metrics {
        final_r,
        locked: lock.map(|l| l.locked),
        mean_frequency,
        settling_time: settling,
        chimera_index: chimera_index(trace, topology, Some(&mask)).ok(),
        phase_margin: None,
    }
}

fn run_kuramoto(cfg: &ExperimentConfig, seed: u64) -> oscnet::Result<RunOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topology = build_topology(cfg, seed)?;
    let params = build_params(cfg, &topology, &mut rng)?;
    let phases = initial_phases(cfg, &mut rng);
    let c = &cfg.coupling;
    let coupling = CouplingConfig::new(c.strength_rad_s, cfg.delay_s())?
        .with_phase_lag(c.phase_lag_rad)?
        .with_normalization(c.normalization);
    let system = KuramotoSystem::new(
        params.clone(),
        topology.clone(),
        coupling,
        PhaseVector::new(phases)?,
        cfg.kuramoto.history,
    )?;
    let k = &cfg.kuramoto;
    let trace = system.integrate(k.dt_ns * 1e-9, k.t_end_us * 1e-6, k.sample_every)?;
    Ok(RunOutput {
        metrics: phase_metrics(&trace, &topology, &params),
        artifacts: Artifacts::Kuramoto(trace),
    })
}

pub fn behavioral_config(cfg: &ExperimentConfig, seed: u64) -> oscnet::Result<BehavioralConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topology = build_topology(cfg, seed)?;
    let params = build_params(cfg, &topology, &mut rng)?;
    let phases = initial_phases(cfg, &mut rng);
    let lp = cfg.loop_params();
    let filter = design_loop(&lp)?;
    let b = &cfg.behavioral;
    let mut bc = BehavioralConfig::new(topology, params, filter, lp.i_cp)?;
    bc.scheme = match b.scheme {
        SchemeKind::Cs1 => Scheme::Cs1,
        SchemeKind::Cs2 => Scheme::Cs2 {
            edges_per_advance: b.edges_per_advance,
        },
        SchemeKind::Uncoupled => Scheme::Uncoupled,
    };
    bc.detector = b.detector;
    if let Some(dt) = b.dt_ns {
        bc.dt = dt * 1e-9;
    }
    bc.v_supply = b.v_supply;
    bc.t_end = b.t_end_us * 1e-6;
    bc.sample_every = b.sample_every;
    bc.initial_phases = phases;
    let n = bc.len();
    bc.initial_vctrl = match b.initial_vctrl.len() {
        0 => vec![0.5 * b.v_supply; n],
        1 => vec![b.initial_vctrl[0]; n],
        _ => b.initial_vctrl.clone(),
    };
    bc.reference = b.reference_hz.map(|f| ReferenceSource {
        frequency: std::f64::consts::TAU * f,
        phase: b.reference_phase_rad,
    });
    bc.set_delay(cfg.delay_s())?;
    Ok(bc)
}

fn run_pll(cfg: &ExperimentConfig, seed: u64) -> oscnet::Result<RunOutput> {
    let bc = behavioral_config(cfg, seed)?;
    let run = run_behavioral(&bc)?;
    let mut metrics = phase_metrics(&run.phases, &bc.topology, &bc.params);
    // lock and frequency from edge timing rather than sampled phases
    metrics.locked = Some(run.summary.locked);
    metrics.mean_frequency = mean(
        run.summary
            .mean_frequency
            .iter()
            .zip(&bc.params)
            .filter(|(_, p)| p.enabled)
            .filter_map(|(w, _)| *w),
    );
    metrics.settling_time = run
        .summary
        .settling_time
        .iter()
        .zip(&bc.params)
        .filter(|(_, p)| p.enabled)
        .map(|(t, _)| *t)
        .try_fold(0.0f64, |acc, t| t.map(|t| acc.max(t)));
    let mut summary = format!("effective_delay_s: {}\n", bc.delay_tau());
    summary += &run.summary.to_text();
    Ok(RunOutput {
        metrics,
        artifacts: Artifacts::Behavioral {
            csv: run.to_csv(),
            summary,
        },
    })
}

pub fn run_loop_design(cfg: &ExperimentConfig) -> oscnet::Result<RunOutput> {
    let lp = cfg.loop_params();
    let filter = design_loop(&lp)?;
    let report = design_report(&lp, &filter);
    let wc = lp.target_crossover;
    let bode = open_loop_response(&filter, &lp, &log_grid(wc / 100.0, wc * 100.0, 401))?;
    let l = &cfg.loop_;
    // the step integrator needs dt well below 1/ω_p
    let dt = (l.step_dt_ns * 1e-9).min(1e-2 / filter.omega_p());
    let step = closed_loop_step(&filter, &lp, dt, l.step_t_end_us * 1e-6)?;
    let y: Vec<f64> = step.rows().iter().map(|r| r[0]).collect();
    let settling = settling_time(step.times(), &y, SETTLING_BAND, 1.0)?.time();
    // keep the written trace to ~2000 rows
    let decimate = (step.len() / 2000).max(1);
    let step = SimTrace::from_rows(
        step.times().iter().step_by(decimate).copied().collect(),
        step.rows().iter().step_by(decimate).cloned().collect(),
    )?;
    let c2_grid = log_grid(filter.c2 / l.c2_span, filter.c2 * l.c2_span, l.c2_points);
    let c2_sweep = capacitance_sweep(&lp, &filter, &c2_grid, l.c2_hold)?;
    let metrics = Metrics {
        settling_time: settling,
        phase_margin: Some(phase_margin(&filter, &lp)?),
        ..Metrics::default()
    };
    Ok(RunOutput {
        metrics,
        artifacts: Artifacts::LoopDesign(Box::new(LoopDesignOutput {
            filter,
            report,
            bode,
            step,
            c2_sweep,
        })),
    })
}
