//! Experiment configuration: line-oriented `section.key = value` text.
//!
//! Values are kept in the units they are written in (Hz, µs, ns, µA, ...) so
//! that the canonical text form round-trips exactly; `omegas_rad_s`,
//! `delay_s` and `loop_params` convert. Unknown keys, duplicate keys and
//! malformed lines are rejected.

use std::f64::consts::TAU;
use std::fmt;
use std::fmt::Write as _;

use oscnet::behavioral::Detector;
use oscnet::pll::{LoopParams, SweepHold};
use oscnet::{HistoryInit, InterCoupling, Normalization};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn at_line(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            key: None,
            message: message.into(),
        }
    }

    fn for_key(key: &str, message: impl Into<String>) -> Self {
        Self {
            line: None,
            key: Some(key.to_string()),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, &self.key) {
            (Some(l), Some(k)) => write!(f, "line {l}: {k}: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            (None, Some(k)) => write!(f, "{k}: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Kuramoto,
    Behavioral,
    LoopDesign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntraKind {
    AllToAll,
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    Cs1,
    Cs2,
    Uncoupled,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PhaseInit {
    /// Uniform on [−π, π), drawn from the run seed.
    Random,
    /// One value for everyone, or one per oscillator.
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologySpec {
    pub n_clusters: usize,
    pub per_cluster: usize,
    pub intra: IntraKind,
    pub sparse_p: f64,
    /// Sparse-graph seed; the run seed when absent.
    pub seed: Option<u64>,
    pub inter: InterCoupling,
    pub inter_weight: f64,
    pub bridges: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscillatorSpec {
    /// One value for everyone, or one per oscillator.
    pub frequency_hz: Vec<f64>,
    /// Uniform random detuning in ±detune_hz, drawn from the run seed.
    pub detune_hz: f64,
    pub initial_phase: PhaseInit,
    pub disabled: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSpec {
    pub strength_rad_s: f64,
    pub delay_us: f64,
    pub phase_lag_rad: f64,
    pub normalization: Normalization,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KuramotoSpec {
    pub dt_ns: f64,
    pub t_end_us: f64,
    pub sample_every: usize,
    pub history: HistoryInit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopSpec {
    pub kvco_mhz_per_v: f64,
    pub icp_ua: f64,
    pub divider: u32,
    pub phase_margin_deg: f64,
    pub bandwidth_khz: f64,
    pub step_dt_ns: f64,
    pub step_t_end_us: f64,
    pub c2_points: usize,
    /// C2 is swept over [designed/span, designed·span].
    pub c2_span: f64,
    pub c2_hold: SweepHold,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BehavioralSpec {
    pub scheme: SchemeKind,
    pub edges_per_advance: u32,
    pub detector: Detector,
    /// Default: 1/100 of the mean VCO period.
    pub dt_ns: Option<f64>,
    pub t_end_us: f64,
    pub v_supply: f64,
    pub sample_every: usize,
    pub reference_hz: Option<f64>,
    pub reference_phase_rad: f64,
    /// One value for everyone, or one per PLL; empty means mid-rail.
    pub initial_vctrl: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// One axis, or two for a full grid (second axis varies fastest).
    pub axes: Vec<SweepAxis>,
    pub write_traces: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub seed: u64,
    pub output_dir: String,
    pub topology: TopologySpec,
    pub oscillators: OscillatorSpec,
    pub coupling: CouplingSpec,
    pub kuramoto: KuramotoSpec,
    pub loop_: LoopSpec,
    pub behavioral: BehavioralSpec,
    pub sweep: Option<SweepSpec>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let lp = LoopParams::default();
        Self {
            mode: Mode::Kuramoto,
            seed: 0,
            output_dir: "out".into(),
            topology: TopologySpec {
                n_clusters: 1,
                per_cluster: 2,
                intra: IntraKind::AllToAll,
                sparse_p: 1.0,
                seed: None,
                inter: InterCoupling::None,
                inter_weight: 1.0,
                bridges: None,
            },
            oscillators: OscillatorSpec {
                frequency_hz: vec![10e6],
                detune_hz: 0.0,
                initial_phase: PhaseInit::Random,
                disabled: Vec::new(),
            },
            coupling: CouplingSpec {
                strength_rad_s: 0.0,
                delay_us: 0.0,
                phase_lag_rad: 0.0,
                normalization: Normalization::GlobalN,
            },
            kuramoto: KuramotoSpec {
                dt_ns: 1.0,
                t_end_us: 10.0,
                sample_every: 10,
                history: HistoryInit::ConstantAtInitial,
            },
            loop_: LoopSpec {
                kvco_mhz_per_v: lp.k_vco / 1e6,
                icp_ua: lp.i_cp * 1e6,
                divider: lp.divider_n,
                phase_margin_deg: lp.target_phase_margin,
                bandwidth_khz: 27.0,
                step_dt_ns: 10.0,
                step_t_end_us: 600.0,
                c2_points: 61,
                c2_span: 30.0,
                c2_hold: SweepHold::PoleZero,
            },
            behavioral: BehavioralSpec {
                scheme: SchemeKind::Cs1,
                edges_per_advance: 1,
                detector: Detector::Pfd,
                dt_ns: None,
                t_end_us: 600.0,
                v_supply: 1.0,
                sample_every: 1000,
                reference_hz: None,
                reference_phase_rad: 0.0,
                initial_vctrl: Vec::new(),
            },
            sweep: None,
        }
    }
}

/// Every settable key, in canonical order. The flag marks scalar numeric keys,
/// the only ones a sweep may vary.
pub const KEYS: &[(&str, bool)] = &[
    ("mode", false),
    ("seed", true),
    ("output.dir", false),
    ("topology.n_clusters", true),
    ("topology.per_cluster", true),
    ("topology.intra", false),
    ("topology.sparse_p", true),
    ("topology.seed", true),
    ("topology.inter", false),
    ("topology.inter_weight", true),
    ("topology.bridges", false),
    ("oscillators.frequency_hz", true),
    ("oscillators.detune_hz", true),
    ("oscillators.initial_phase_rad", true),
    ("oscillators.disabled", false),
    ("coupling.strength_rad_s", true),
    ("coupling.delay_us", true),
    ("coupling.phase_lag_rad", true),
    ("coupling.normalization", false),
    ("kuramoto.dt_ns", true),
    ("kuramoto.t_end_us", true),
    ("kuramoto.sample_every", true),
    ("kuramoto.history", false),
    ("loop.kvco_mhz_per_v", true),
    ("loop.icp_ua", true),
    ("loop.divider", true),
    ("loop.phase_margin_deg", true),
    ("loop.bandwidth_khz", true),
    ("loop.step_dt_ns", true),
    ("loop.step_t_end_us", true),
    ("loop.c2_points", true),
    ("loop.c2_span", true),
    ("loop.c2_hold", false),
    ("behavioral.scheme", false),
    ("behavioral.edges_per_advance", true),
    ("behavioral.detector", false),
    ("behavioral.dt_ns", true),
    ("behavioral.t_end_us", true),
    ("behavioral.v_supply", true),
    ("behavioral.sample_every", true),
    ("behavioral.reference_hz", true),
    ("behavioral.reference_phase_rad", true),
    ("behavioral.initial_vctrl", true),
    ("sweep.parameter", false),
    ("sweep.values", false),
    ("sweep.parameter2", false),
    ("sweep.values2", false),
    ("sweep.write_traces", false),
];

pub fn is_sweepable(key: &str) -> bool {
    KEYS.iter().any(|&(k, numeric)| k == key && numeric)
}

fn parse_f64(raw: &str) -> Result<f64, String> {
    let v: f64 = raw.parse().map_err(|_| format!("expected a number, got `{raw}`"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("expected a finite number, got `{raw}`"))
    }
}

fn parse_int<T: std::str::FromStr>(raw: &str) -> Result<T, String> {
    raw.parse()
        .map_err(|_| format!("expected a non-negative integer, got `{raw}`"))
}

fn parse_list<T>(raw: &str, item: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',').map(|s| item(s.trim())).collect()
}

fn parse_bool(raw: &str) -> Result<bool, String> {
    match raw {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got `{raw}`")),
    }
}

fn choice<T: Copy>(raw: &str, options: &[(&str, T)]) -> Result<T, String> {
    options
        .iter()
        .find(|(name, _)| *name == raw)
        .map(|&(_, v)| v)
        .ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            format!("expected one of {}, got `{raw}`", names.join(", "))
        })
}

fn name_of<T: PartialEq>(value: &T, options: &[(&'static str, T)]) -> &'static str {
    options
        .iter()
        .find(|(_, v)| v == value)
        .map(|&(n, _)| n)
        .expect("every variant is named")
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

const MODES: &[(&str, Mode)] = &[
    ("kuramoto", Mode::Kuramoto),
    ("behavioral", Mode::Behavioral),
    ("loop-design", Mode::LoopDesign),
];
const INTRA: &[(&str, IntraKind)] = &[("all-to-all", IntraKind::AllToAll), ("sparse", IntraKind::Sparse)];
const INTER: &[(&str, InterCoupling)] = &[
    ("none", InterCoupling::None),
    ("ring", InterCoupling::RingNearestNeighbor),
    ("chain", InterCoupling::ChainNearestNeighbor),
];
const NORMS: &[(&str, Normalization)] = &[
    ("global", Normalization::GlobalN),
    ("in-degree", Normalization::InDegree),
];
const HISTORIES: &[(&str, HistoryInit)] = &[
    ("constant", HistoryInit::ConstantAtInitial),
    ("back-extrapolate", HistoryInit::BackExtrapolateNatural),
];
const HOLDS: &[(&str, SweepHold)] = &[("pole-zero", SweepHold::PoleZero), ("r-c1", SweepHold::ResistorAndC1)];
const SCHEMES: &[(&str, SchemeKind)] = &[
    ("cs1", SchemeKind::Cs1),
    ("cs2", SchemeKind::Cs2),
    ("uncoupled", SchemeKind::Uncoupled),
];
const DETECTORS: &[(&str, Detector)] = &[("pfd", Detector::Pfd), ("xor", Detector::Xor)];

/// Partially specified sweep while parsing.
#[derive(Debug, Clone, Default)]
struct SweepDraft {
    parameter: Option<String>,
    values: Option<Vec<f64>>,
    parameter2: Option<String>,
    values2: Option<Vec<f64>>,
    write_traces: Option<bool>,
}

impl ExperimentConfig {
    /// Sets one non-sweep key from its text value.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), String> {
        let raw = raw.trim();
        match key {
            "mode" => self.mode = choice(raw, MODES)?,
            "seed" => self.seed = parse_int(raw)?,
            "output.dir" => {
                if raw.is_empty() {
                    return Err("must not be empty".into());
                }
                self.output_dir = raw.to_string();
            }
            "topology.n_clusters" => self.topology.n_clusters = parse_int(raw)?,
            "topology.per_cluster" => self.topology.per_cluster = parse_int(raw)?,
            "topology.intra" => self.topology.intra = choice(raw, INTRA)?,
            "topology.sparse_p" => self.topology.sparse_p = parse_f64(raw)?,
            "topology.seed" => self.topology.seed = Some(parse_int(raw)?),
            "topology.inter" => self.topology.inter = choice(raw, INTER)?,
            "topology.inter_weight" => self.topology.inter_weight = parse_f64(raw)?,
            "topology.bridges" => self.topology.bridges = Some(parse_list(raw, parse_int)?),
            "oscillators.frequency_hz" => self.oscillators.frequency_hz = parse_list(raw, parse_f64)?,
            "oscillators.detune_hz" => self.oscillators.detune_hz = parse_f64(raw)?,
            "oscillators.initial_phase_rad" => {
                self.oscillators.initial_phase = if raw == "random" {
                    PhaseInit::Random
                } else {
                    PhaseInit::Values(parse_list(raw, parse_f64)?)
                }
            }
            "oscillators.disabled" => self.oscillators.disabled = parse_list(raw, parse_int)?,
            "coupling.strength_rad_s" => self.coupling.strength_rad_s = parse_f64(raw)?,
            "coupling.delay_us" => self.coupling.delay_us = parse_f64(raw)?,
            "coupling.phase_lag_rad" => self.coupling.phase_lag_rad = parse_f64(raw)?,
            "coupling.normalization" => self.coupling.normalization = choice(raw, NORMS)?,
            "kuramoto.dt_ns" => self.kuramoto.dt_ns = parse_f64(raw)?,
            "kuramoto.t_end_us" => self.kuramoto.t_end_us = parse_f64(raw)?,
            "kuramoto.sample_every" => self.kuramoto.sample_every = parse_int(raw)?,
            "kuramoto.history" => self.kuramoto.history = choice(raw, HISTORIES)?,
            "loop.kvco_mhz_per_v" => self.loop_.kvco_mhz_per_v = parse_f64(raw)?,
            "loop.icp_ua" => self.loop_.icp_ua = parse_f64(raw)?,
            "loop.divider" => self.loop_.divider = parse_int(raw)?,
            "loop.phase_margin_deg" => self.loop_.phase_margin_deg = parse_f64(raw)?,
            "loop.bandwidth_khz" => self.loop_.bandwidth_khz = parse_f64(raw)?,
            "loop.step_dt_ns" => self.loop_.step_dt_ns = parse_f64(raw)?,
            "loop.step_t_end_us" => self.loop_.step_t_end_us = parse_f64(raw)?,
            "loop.c2_points" => self.loop_.c2_points = parse_int(raw)?,
            "loop.c2_span" => self.loop_.c2_span = parse_f64(raw)?,
            "loop.c2_hold" => self.loop_.c2_hold = choice(raw, HOLDS)?,
            "behavioral.scheme" => self.behavioral.scheme = choice(raw, SCHEMES)?,
            "behavioral.edges_per_advance" => self.behavioral.edges_per_advance = parse_int(raw)?,
            "behavioral.detector" => self.behavioral.detector = choice(raw, DETECTORS)?,
            "behavioral.dt_ns" => self.behavioral.dt_ns = Some(parse_f64(raw)?),
            "behavioral.t_end_us" => self.behavioral.t_end_us = parse_f64(raw)?,
            "behavioral.v_supply" => self.behavioral.v_supply = parse_f64(raw)?,
            "behavioral.sample_every" => self.behavioral.sample_every = parse_int(raw)?,
            "behavioral.reference_hz" => self.behavioral.reference_hz = Some(parse_f64(raw)?),
            "behavioral.reference_phase_rad" => self.behavioral.reference_phase_rad = parse_f64(raw)?,
            "behavioral.initial_vctrl" => self.behavioral.initial_vctrl = parse_list(raw, parse_f64)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Canonical text of one key, `None` for unset optional keys.
    fn get(&self, key: &str) -> Option<String> {
        let s = match key {
            "mode" => name_of(&self.mode, MODES).to_string(),
            "seed" => self.seed.to_string(),
            "output.dir" => self.output_dir.clone(),
            "topology.n_clusters" => self.topology.n_clusters.to_string(),
            "topology.per_cluster" => self.topology.per_cluster.to_string(),
            "topology.intra" => name_of(&self.topology.intra, INTRA).to_string(),
            "topology.sparse_p" => self.topology.sparse_p.to_string(),
            "topology.seed" => self.topology.seed?.to_string(),
            "topology.inter" => name_of(&self.topology.inter, INTER).to_string(),
            "topology.inter_weight" => self.topology.inter_weight.to_string(),
            "topology.bridges" => join(self.topology.bridges.as_ref()?),
            "oscillators.frequency_hz" => join(&self.oscillators.frequency_hz),
            "oscillators.detune_hz" => self.oscillators.detune_hz.to_string(),
            "oscillators.initial_phase_rad" => match &self.oscillators.initial_phase {
                PhaseInit::Random => "random".into(),
                PhaseInit::Values(v) => join(v),
            },
            "oscillators.disabled" => join(&self.oscillators.disabled),
            "coupling.strength_rad_s" => self.coupling.strength_rad_s.to_string(),
            "coupling.delay_us" => self.coupling.delay_us.to_string(),
            "coupling.phase_lag_rad" => self.coupling.phase_lag_rad.to_string(),
            "coupling.normalization" => name_of(&self.coupling.normalization, NORMS).to_string(),
            "kuramoto.dt_ns" => self.kuramoto.dt_ns.to_string(),
            "kuramoto.t_end_us" => self.kuramoto.t_end_us.to_string(),
            "kuramoto.sample_every" => self.kuramoto.sample_every.to_string(),
            "kuramoto.history" => name_of(&self.kuramoto.history, HISTORIES).to_string(),
            "loop.kvco_mhz_per_v" => self.loop_.kvco_mhz_per_v.to_string(),
            "loop.icp_ua" => self.loop_.icp_ua.to_string(),
            "loop.divider" => self.loop_.divider.to_string(),
            "loop.phase_margin_deg" => self.loop_.phase_margin_deg.to_string(),
            "loop.bandwidth_khz" => self.loop_.bandwidth_khz.to_string(),
            "loop.step_dt_ns" => self.loop_.step_dt_ns.to_string(),
            "loop.step_t_end_us" => self.loop_.step_t_end_us.to_string(),
            "loop.c2_points" => self.loop_.c2_points.to_string(),
            "loop.c2_span" => self.loop_.c2_span.to_string(),
            "loop.c2_hold" => name_of(&self.loop_.c2_hold, HOLDS).to_string(),
            "behavioral.scheme" => name_of(&self.behavioral.scheme, SCHEMES).to_string(),
            "behavioral.edges_per_advance" => self.behavioral.edges_per_advance.to_string(),
            "behavioral.detector" => name_of(&self.behavioral.detector, DETECTORS).to_string(),
            "behavioral.dt_ns" => self.behavioral.dt_ns?.to_string(),
            "behavioral.t_end_us" => self.behavioral.t_end_us.to_string(),
            "behavioral.v_supply" => self.behavioral.v_supply.to_string(),
            "behavioral.sample_every" => self.behavioral.sample_every.to_string(),
            "behavioral.reference_hz" => self.behavioral.reference_hz?.to_string(),
            "behavioral.reference_phase_rad" => self.behavioral.reference_phase_rad.to_string(),
            "behavioral.initial_vctrl" => join(&self.behavioral.initial_vctrl),
            "sweep.parameter" => self.sweep.as_ref()?.axes[0].parameter.clone(),
            "sweep.values" => join(&self.sweep.as_ref()?.axes[0].values),
            "sweep.parameter2" => self.sweep.as_ref()?.axes.get(1)?.parameter.clone(),
            "sweep.values2" => join(&self.sweep.as_ref()?.axes.get(1)?.values),
            "sweep.write_traces" => self.sweep.as_ref()?.write_traces.to_string(),
            _ => return None,
        };
        Some(s)
    }

    /// Canonical text: every key in fixed order, defaults included.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for &(key, _) in KEYS {
            if let Some(v) = self.get(key) {
                let _ = writeln!(out, "{key} = {v}");
            }
        }
        out
    }

    pub fn n_oscillators(&self) -> usize {
        self.topology.n_clusters * self.topology.per_cluster
    }

    pub fn delay_s(&self) -> f64 {
        self.coupling.delay_us * 1e-6
    }

    /// Natural frequencies in rad/s before detuning, one per oscillator.
    pub fn omegas_rad_s(&self) -> Vec<f64> {
        let f = &self.oscillators.frequency_hz;
        (0..self.n_oscillators())
            .map(|i| TAU * if f.len() == 1 { f[0] } else { f[i] })
            .collect()
    }

    pub fn loop_params(&self) -> LoopParams {
        LoopParams {
            k_vco: self.loop_.kvco_mhz_per_v * 1e6,
            i_cp: self.loop_.icp_ua * 1e-6,
            divider_n: self.loop_.divider,
            target_phase_margin: self.loop_.phase_margin_deg,
            target_crossover: TAU * self.loop_.bandwidth_khz * 1e3,
        }
    }

    /// Semantic checks; errors name the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        fn err(key: &str, message: impl Into<String>) -> ConfigError {
            ConfigError::for_key(key, message)
        }
        let t = &self.topology;
        if t.n_clusters == 0 {
            return Err(err("topology.n_clusters", "must be >= 1"));
        }
        if t.per_cluster == 0 {
            return Err(err("topology.per_cluster", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&t.sparse_p) {
            return Err(err("topology.sparse_p", "must lie in [0, 1]"));
        }
        if t.inter_weight < 0.0 {
            return Err(err("topology.inter_weight", "must be >= 0"));
        }
        if t.inter != InterCoupling::None && t.n_clusters < 2 {
            return Err(err(
                "topology.inter",
                "inter-cluster coupling needs at least 2 clusters",
            ));
        }
        if let Some(b) = &t.bridges {
            if b.len() != t.n_clusters || b.iter().any(|&i| i >= t.per_cluster) {
                return Err(err(
                    "topology.bridges",
                    "needs one member index below per_cluster for every cluster",
                ));
            }
        }
        let n = self.n_oscillators();
        let o = &self.oscillators;
        if !(o.frequency_hz.len() == 1 || o.frequency_hz.len() == n) {
            return Err(err("oscillators.frequency_hz", format!("give 1 or {n} values")));
        }
        if o.frequency_hz.iter().any(|&f| f <= 0.0) {
            return Err(err("oscillators.frequency_hz", "frequencies must be > 0"));
        }
        if o.detune_hz < 0.0 {
            return Err(err("oscillators.detune_hz", "must be >= 0"));
        }
        if o.frequency_hz.iter().any(|&f| f <= o.detune_hz) {
            return Err(err("oscillators.detune_hz", "detuning could push a frequency to <= 0"));
        }
        if let PhaseInit::Values(v) = &o.initial_phase {
            if !(v.len() == 1 || v.len() == n) {
                return Err(err(
                    "oscillators.initial_phase_rad",
                    format!("give 1 or {n} values, or `random`"),
                ));
            }
        }
        if o.disabled.iter().any(|&i| i >= n) {
            return Err(err("oscillators.disabled", format!("ids must be below {n}")));
        }
        let c = &self.coupling;
        if c.strength_rad_s < 0.0 {
            return Err(err("coupling.strength_rad_s", "coupling strength must be >= 0"));
        }
        if c.delay_us < 0.0 {
            return Err(err("coupling.delay_us", "delay must be ≥ 0"));
        }
        if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&c.phase_lag_rad) {
            return Err(err("coupling.phase_lag_rad", "phase lag must lie in [0, π/2]"));
        }
        let k = &self.kuramoto;
        if k.dt_ns <= 0.0 {
            return Err(err("kuramoto.dt_ns", "must be > 0"));
        }
        if k.t_end_us * 1e3 < k.dt_ns {
            return Err(err("kuramoto.t_end_us", "must cover at least one step"));
        }
        if k.sample_every == 0 {
            return Err(err("kuramoto.sample_every", "must be >= 1"));
        }
        let l = &self.loop_;
        for (key, v) in [
            ("loop.kvco_mhz_per_v", l.kvco_mhz_per_v),
            ("loop.icp_ua", l.icp_ua),
            ("loop.bandwidth_khz", l.bandwidth_khz),
            ("loop.step_dt_ns", l.step_dt_ns),
            ("loop.step_t_end_us", l.step_t_end_us),
        ] {
            if v <= 0.0 {
                return Err(err(key, "must be > 0"));
            }
        }
        if l.divider == 0 {
            return Err(err("loop.divider", "must be >= 1"));
        }
        if !(l.phase_margin_deg > 0.0 && l.phase_margin_deg < 90.0) {
            return Err(err("loop.phase_margin_deg", "phase margin must lie in (0, 90)"));
        }
        if l.c2_points < 3 {
            return Err(err("loop.c2_points", "must be >= 3"));
        }
        if l.c2_span <= 1.0 {
            return Err(err("loop.c2_span", "must be > 1"));
        }
        let b = &self.behavioral;
        if b.edges_per_advance == 0 {
            return Err(err("behavioral.edges_per_advance", "must be >= 1"));
        }
        if b.dt_ns.is_some_and(|d| d <= 0.0) {
            return Err(err("behavioral.dt_ns", "must be > 0"));
        }
        if b.t_end_us <= 0.0 {
            return Err(err("behavioral.t_end_us", "must be > 0"));
        }
        if b.v_supply <= 0.0 {
            return Err(err("behavioral.v_supply", "must be > 0"));
        }
        if b.sample_every == 0 {
            return Err(err("behavioral.sample_every", "must be >= 1"));
        }
        if b.reference_hz.is_some_and(|f| f <= 0.0) {
            return Err(err("behavioral.reference_hz", "must be > 0"));
        }
        if !(b.initial_vctrl.is_empty() || b.initial_vctrl.len() == 1 || b.initial_vctrl.len() == n) {
            return Err(err("behavioral.initial_vctrl", format!("give 1 or {n} values")));
        }
        if b.initial_vctrl.iter().any(|v| !(0.0..=b.v_supply).contains(v)) {
            return Err(err("behavioral.initial_vctrl", "must lie in [0, v_supply]"));
        }
        if let Some(s) = &self.sweep {
            for (i, axis) in s.axes.iter().enumerate() {
                let (pk, vk) = if i == 0 {
                    ("sweep.parameter", "sweep.values")
                } else {
                    ("sweep.parameter2", "sweep.values2")
                };
                if !is_sweepable(&axis.parameter) || axis.parameter.starts_with("sweep.") {
                    return Err(err(pk, format!("`{}` is not a numeric config key", axis.parameter)));
                }
                if axis.values.is_empty() {
                    return Err(err(vk, "sweep grid must not be empty"));
                }
                for &v in &axis.values {
                    let mut probe = self.clone();
                    probe.sweep = None;
                    probe
                        .set(&axis.parameter, &v.to_string())
                        .map_err(|m| err(vk, format!("value {v} for {}: {m}", axis.parameter)))?;
                    probe.validate().map_err(|e| err(vk, format!("value {v}: {e}")))?;
                }
            }
        }
        Ok(())
    }

    /// Grid points of the sweep in index order (second axis fastest); a
    /// single empty point when there is no sweep.
    pub fn grid(&self) -> Vec<Vec<f64>> {
        let Some(s) = &self.sweep else {
            return vec![Vec::new()];
        };
        let mut points = vec![Vec::new()];
        for axis in &s.axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.values.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        points
    }

    /// This config with one grid point's values applied and the sweep removed.
    pub fn at_point(&self, values: &[f64]) -> Result<Self, ConfigError> {
        let mut cfg = self.clone();
        if let Some(s) = &self.sweep {
            for (axis, &v) in s.axes.iter().zip(values) {
                cfg.set(&axis.parameter, &v.to_string())
                    .map_err(|m| ConfigError::for_key(&axis.parameter, m))?;
            }
        }
        cfg.sweep = None;
        Ok(cfg)
    }
}

/// Parses and validates configuration text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::default();
    let mut seen: Vec<&str> = Vec::new();
    let mut draft = SweepDraft::default();
    for (idx, raw_line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::at_line(
                lineno,
                format!("expected `key = value`, got `{line}`"),
            ));
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(&(known, _)) = KEYS.iter().find(|(k, _)| *k == key) else {
            return Err(ConfigError::at_line(lineno, format!("unknown key `{key}`")));
        };
        if seen.contains(&known) {
            return Err(ConfigError::at_line(lineno, format!("duplicate key `{key}`")));
        }
        seen.push(known);
        let located = |m: String| ConfigError {
            line: Some(lineno),
            key: Some(key.to_string()),
            message: m,
        };
        match key {
            "sweep.parameter" => draft.parameter = Some(value.to_string()),
            "sweep.parameter2" => draft.parameter2 = Some(value.to_string()),
            "sweep.values" => draft.values = Some(parse_list(value, parse_f64).map_err(located)?),
            "sweep.values2" => draft.values2 = Some(parse_list(value, parse_f64).map_err(located)?),
            "sweep.write_traces" => draft.write_traces = Some(parse_bool(value).map_err(located)?),
            _ => cfg.set(key, value).map_err(located)?,
        }
    }
    cfg.sweep = finish_sweep(draft)?;
    cfg.validate()?;
    Ok(cfg)
}

fn finish_sweep(d: SweepDraft) -> Result<Option<SweepSpec>, ConfigError> {
    fn err(key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::for_key(key, message)
    }
    let mut axes = Vec::new();
    match (d.parameter, d.values) {
        (Some(parameter), Some(values)) => axes.push(SweepAxis { parameter, values }),
        (None, None) => {
            if d.parameter2.is_some() || d.values2.is_some() {
                return Err(err("sweep.parameter2", "needs sweep.parameter and sweep.values first"));
            }
            if d.write_traces.is_some() {
                return Err(err("sweep.write_traces", "set without a sweep"));
            }
            return Ok(None);
        }
        (Some(_), None) => return Err(err("sweep.values", "missing for sweep.parameter")),
        (None, Some(_)) => return Err(err("sweep.parameter", "missing for sweep.values")),
    }
    match (d.parameter2, d.values2) {
        (Some(parameter), Some(values)) => axes.push(SweepAxis { parameter, values }),
        (None, None) => {}
        (Some(_), None) => return Err(err("sweep.values2", "missing for sweep.parameter2")),
        (None, Some(_)) => return Err(err("sweep.parameter2", "missing for sweep.values2")),
    }
    Ok(Some(SweepSpec {
        axes,
        write_traces: d.write_traces.unwrap_or(true),
    }))
}
