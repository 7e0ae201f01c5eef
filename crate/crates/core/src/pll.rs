//! Linear model of the type-2, third-order charge-pump PLL.
//!
//! The loop filter is a series R–C1 branch shunted by C2, driven by the charge
//! pump. With `K = K_PD · K_VCO / N` (K_PD = I_CP/2π, K_VCO in rad/s/V) the
//! open-loop gain is
//!
//! ```text
//! G(s) = K · (1 + s/ω_z) / (s² (C1 + C2) (1 + s/ω_p))
//! ```
//!
//! and the closed loop is
//!
//! ```text
//!            (K/C2) (s + ω_z)
//! H(s) = ─────────────────────────────────────────
//!        s³ + ω_p s² + (K/C2) s + (K/C2) ω_z
//! ```
//!
//! with `ω_z = 1/(R C1)` and `ω_p = (C1 + C2)/(R C1 C2)`.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::trace::SimTrace;

/// Charge-pump loop constants and design targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopParams {
    /// Hz/V
    pub k_vco: f64,
    /// A
    pub i_cp: f64,
    pub divider_n: u32,
    /// degrees
    pub target_phase_margin: f64,
    /// Open-loop unity-gain crossover, rad/s.
    pub target_crossover: f64,
}

impl Default for LoopParams {
    /// φ_m = 74°, ω_c = 2π·27 kHz, K_VCO = 3 MHz/V, N = 1, I_CP = 1.34 µA.
    fn default() -> Self {
        Self {
            k_vco: 3.0e6,
            i_cp: 1.34e-6,
            divider_n: 1,
            target_phase_margin: 74.0,
            target_crossover: TAU * 27.0e3,
        }
    }
}

impl LoopParams {
    /// Phase-detector gain, A/rad.
    pub fn k_pd(&self) -> f64 {
        self.i_cp / TAU
    }

    /// K_PD · K_VCO / N with K_VCO in rad/s/V, units A/s.
    pub fn loop_gain(&self) -> f64 {
        self.k_pd() * TAU * self.k_vco / self.divider_n as f64
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !(positive(self.k_vco) && positive(self.i_cp) && positive(self.target_crossover)) {
            return Err(Error::Design("K_VCO, I_CP and crossover must be positive".into()));
        }
        if self.divider_n == 0 {
            return Err(Error::Design("divider ratio must be >= 1".into()));
        }
        if !self.target_phase_margin.is_finite() {
            return Err(Error::Design("phase margin must be finite".into()));
        }
        Ok(())
    }
}

/// Series R–C1 shunted by C2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopFilter {
    pub r: f64,
    pub c1: f64,
    pub c2: f64,
}

impl LoopFilter {
    pub fn new(r: f64, c1: f64, c2: f64) -> Result<Self> {
        if ![r, c1, c2].iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::Design(format!(
                "filter components must be positive: r={r}, c1={c1}, c2={c2}"
            )));
        }
        Ok(Self { r, c1, c2 })
    }

    pub fn omega_z(&self) -> f64 {
        1.0 / (self.r * self.c1)
    }

    pub fn omega_p(&self) -> f64 {
        (self.c1 + self.c2) / (self.r * self.c1 * self.c2)
    }

    pub fn c_total(&self) -> f64 {
        self.c1 + self.c2
    }

    /// Impedance seen by the charge pump.
    pub fn impedance(&self, s: Complex64) -> Complex64 {
        (1.0 + s / self.omega_z()) / (s * self.c_total() * (1.0 + s / self.omega_p()))
    }
}

/// Maximum-phase-margin placement: the lead network's phase peak sits on the
/// target crossover and the total capacitance sets unity gain there.
pub fn design_loop(params: &LoopParams) -> Result<LoopFilter> {
    params.validate()?;
    let pm = params.target_phase_margin;
    if !(pm > 0.0 && pm < 90.0) {
        return Err(Error::Design(format!(
            "phase margin {pm} deg is not achievable (must lie in (0, 90))"
        )));
    }
    let s = pm.to_radians().sin();
    let b = (1.0 + s) / (1.0 - s);
    let wc = params.target_crossover;
    let wz = wc / b.sqrt();
    // |G(jω_c)| = K/(ω_c² C_tot) · sqrt((1 + b)/(1 + 1/b)) = K √b / (ω_c² C_tot)
    let c_total = params.loop_gain() * b.sqrt() / (wc * wc);
    let c2 = c_total / b;
    let c1 = c_total - c2;
    let r = 1.0 / (wz * c1);
    LoopFilter::new(r, c1, c2)
}

pub fn open_loop_gain(filter: &LoopFilter, params: &LoopParams, omega: f64) -> Complex64 {
    let s = Complex64::new(0.0, omega);
    params.loop_gain() * filter.impedance(s) / s
}

/// Open-loop phase in degrees, unwrapped into the (−270°, −90°] band.
fn phase_deg(g: Complex64) -> f64 {
    let mut p = g.arg().to_degrees();
    while p > -90.0 {
        p -= 360.0;
    }
    while p <= -270.0 {
        p += 360.0;
    }
    p
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse {
    pub frequencies: Vec<f64>,
    pub gain_db: Vec<f64>,
    pub phase_deg: Vec<f64>,
}

impl FrequencyResponse {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("omega_rad_s,gain_db,phase_deg\n");
        for ((w, g), p) in self.frequencies.iter().zip(&self.gain_db).zip(&self.phase_deg) {
            let _ = writeln!(out, "{w:.16e},{g:.16e},{p:.16e}");
        }
        out
    }
}

pub fn open_loop_response(filter: &LoopFilter, params: &LoopParams, grid: &[f64]) -> Result<FrequencyResponse> {
    if grid.iter().any(|w| !(w.is_finite() && *w > 0.0)) || grid.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Domain(
            "frequency grid must be positive and strictly increasing".into(),
        ));
    }
    let mut gain_db = Vec::with_capacity(grid.len());
    let mut phase = Vec::with_capacity(grid.len());
    for &w in grid {
        let g = open_loop_gain(filter, params, w);
        gain_db.push(20.0 * g.norm().log10());
        phase.push(phase_deg(g));
    }
    Ok(FrequencyResponse {
        frequencies: grid.to_vec(),
        gain_db,
        phase_deg: phase,
    })
}

/// Logarithmic grid of `n` points from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Unity-gain crossover found by bisection over `[ω_c/100, 100 ω_c]`.
pub fn crossover(filter: &LoopFilter, params: &LoopParams) -> Result<f64> {
    let wc = params.target_crossover;
    let f = |w: f64| open_loop_gain(filter, params, w).norm().ln();
    let (mut lo, mut hi) = (wc / 100.0, wc * 100.0);
    if !(f(lo) > 0.0 && f(hi) < 0.0) {
        return Err(Error::Analysis(format!(
            "no unity-gain crossover in [{lo:e}, {hi:e}] rad/s"
        )));
    }
    while (hi - lo) > 1e-9 * lo {
        let mid = (lo * hi).sqrt();
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

/// 180° plus the open-loop phase at the unity-gain crossover, degrees.
pub fn phase_margin(filter: &LoopFilter, params: &LoopParams) -> Result<f64> {
    let wx = crossover(filter, params)?;
    Ok(180.0 + phase_deg(open_loop_gain(filter, params, wx)))
}

/// Closed-loop transfer function `(b1 s + b0)/(s³ + a2 s² + a1 s + a0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedLoop {
    pub b1: f64,
    pub b0: f64,
    pub a2: f64,
    pub a1: f64,
    pub a0: f64,
}

impl ClosedLoop {
    pub fn new(filter: &LoopFilter, params: &LoopParams) -> Self {
        let kc2 = params.loop_gain() / filter.c2;
        let wz = filter.omega_z();
        Self {
            b1: kc2,
            b0: kc2 * wz,
            a2: filter.omega_p(),
            a1: kc2,
            a0: kc2 * wz,
        }
    }

    pub fn dc_gain(&self) -> f64 {
        self.b0 / self.a0
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        (self.b1 * s + self.b0) / (((s + self.a2) * s + self.a1) * s + self.a0)
    }
}

/// Unit phase-step response of the closed loop, RK4 on the controllable
/// canonical realization. Requires `dt ≤ 10⁻²/ω_p`.
pub fn closed_loop_step(filter: &LoopFilter, params: &LoopParams, dt: f64, t_end: f64) -> Result<SimTrace> {
    let limit = 1e-2 / filter.omega_p();
    if !(dt > 0.0 && dt <= limit * (1.0 + 1e-12)) {
        return Err(Error::Config(format!(
            "step dt must lie in (0, {limit:e}] s, got {dt:e}"
        )));
    }
    if !(t_end.is_finite() && t_end >= dt) {
        return Err(Error::Config("t_end must be >= dt".into()));
    }
    let h = ClosedLoop::new(filter, params);
    let deriv = |x: [f64; 3]| [x[1], x[2], 1.0 - h.a0 * x[0] - h.a1 * x[1] - h.a2 * x[2]];
    let output = |x: [f64; 3]| h.b0 * x[0] + h.b1 * x[1];
    let axpy = |x: [f64; 3], a: f64, k: [f64; 3]| [x[0] + a * k[0], x[1] + a * k[1], x[2] + a * k[2]];

    let steps = (t_end / dt - 1e-9).ceil() as usize;
    let mut x = [0.0; 3];
    let mut trace = SimTrace::new(1);
    trace.push(0.0, vec![0.0])?;
    for n in 1..=steps {
        let k1 = deriv(x);
        let k2 = deriv(axpy(x, 0.5 * dt, k1));
        let k3 = deriv(axpy(x, 0.5 * dt, k2));
        let k4 = deriv(axpy(x, dt, k3));
        for i in 0..3 {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let y = output(x);
        let t = n as f64 * dt;
        if !y.is_finite() || y.abs() > 10.0 {
            return Err(Error::Analysis(format!(
                "closed loop unstable: response {y:e} at t = {t:e} s"
            )));
        }
        trace.push(t, vec![y])?;
    }
    Ok(trace)
}

/// Which components stay fixed while C2 is swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepHold {
    /// R, C1 and C2 scale together so ω_z and ω_p stay put; only the total
    /// capacitance (and with it the crossover) moves.
    #[default]
    PoleZero,
    /// R and C1 fixed, C2 alone varies.
    ResistorAndC1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacitancePoint {
    pub c2: f64,
    /// `None` when the margin could not be evaluated at this point.
    pub phase_margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacitanceSweep {
    pub hold: SweepHold,
    pub points: Vec<CapacitancePoint>,
}

impl CapacitanceSweep {
    /// Grid point with the largest margin.
    pub fn optimum(&self) -> Option<&CapacitancePoint> {
        self.points
            .iter()
            .filter(|p| p.phase_margin.is_some())
            .max_by(|a, b| a.phase_margin.partial_cmp(&b.phase_margin).expect("finite margins"))
    }

    /// True when the evaluated margins rise to a single peak and then fall.
    pub fn is_unimodal(&self) -> bool {
        let m: Vec<f64> = self.points.iter().filter_map(|p| p.phase_margin).collect();
        let mut falling = false;
        for w in m.windows(2) {
            if w[1] > w[0] {
                if falling {
                    return false;
                }
            } else if w[1] < w[0] {
                falling = true;
            }
        }
        true
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("c2_farad,phase_margin_deg\n");
        for p in &self.points {
            match p.phase_margin {
                Some(m) => {
                    let _ = writeln!(out, "{:.16e},{m:.16e}", p.c2);
                }
                None => {
                    let _ = writeln!(out, "{:.16e},", p.c2);
                }
            }
        }
        out
    }
}

pub fn capacitance_sweep(
    params: &LoopParams,
    base: &LoopFilter,
    c2_grid: &[f64],
    hold: SweepHold,
) -> Result<CapacitanceSweep> {
    if c2_grid.iter().any(|c| !(c.is_finite() && *c > 0.0)) || c2_grid.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Domain("C2 grid must be positive and strictly increasing".into()));
    }
    let points = c2_grid
        .iter()
        .map(|&c2| {
            let filter = match hold {
                SweepHold::ResistorAndC1 => LoopFilter::new(base.r, base.c1, c2),
                SweepHold::PoleZero => {
                    let scale = c2 / base.c2;
                    LoopFilter::new(base.r / scale, base.c1 * scale, c2)
                }
            };
            let phase_margin = filter.and_then(|f| phase_margin(&f, params)).ok();
            CapacitancePoint { c2, phase_margin }
        })
        .collect();
    Ok(CapacitanceSweep { hold, points })
}

/// Plain-text `key: value` summary of a designed loop.
pub fn design_report(params: &LoopParams, filter: &LoopFilter) -> String {
    let mut out = String::new();
    let b = filter.omega_p() / filter.omega_z();
    let _ = writeln!(out, "k_vco_hz_per_v: {}", params.k_vco);
    let _ = writeln!(out, "i_cp_a: {}", params.i_cp);
    let _ = writeln!(out, "k_pd_a_per_rad: {}", params.k_pd());
    let _ = writeln!(out, "divider_n: {}", params.divider_n);
    let _ = writeln!(out, "target_phase_margin_deg: {}", params.target_phase_margin);
    let _ = writeln!(out, "target_crossover_rad_s: {}", params.target_crossover);
    let _ = writeln!(out, "r_ohm: {}", filter.r);
    let _ = writeln!(out, "c1_farad: {}", filter.c1);
    let _ = writeln!(out, "c2_farad: {}", filter.c2);
    let _ = writeln!(out, "c_total_farad: {}", filter.c_total());
    let _ = writeln!(out, "omega_z_rad_s: {}", filter.omega_z());
    let _ = writeln!(out, "omega_p_rad_s: {}", filter.omega_p());
    let _ = writeln!(out, "pole_zero_ratio: {b}");
    match crossover(filter, params) {
        Ok(w) => {
            let _ = writeln!(out, "crossover_rad_s: {w}");
        }
        Err(e) => {
            let _ = writeln!(out, "crossover_rad_s: error ({e})");
        }
    }
    match phase_margin(filter, params) {
        Ok(m) => {
            let _ = writeln!(out, "phase_margin_deg: {m}");
        }
        Err(e) => {
            let _ = writeln!(out, "phase_margin_deg: error ({e})");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table1() -> (LoopParams, LoopFilter) {
        let p = LoopParams::default();
        let f = design_loop(&p).unwrap();
        (p, f)
    }

    #[test]
    fn table1_design_values() {
        let (p, f) = table1();
        let b = f.omega_p() / f.omega_z();
        assert!((b - 50.6).abs() < 0.1, "b = {b}");
        assert!((f.omega_z() - 2.38e4).abs() < 0.01e4);
        assert!((f.omega_p() - 1.21e6).abs() < 0.01e6);
        assert!((f.c_total() - 0.99e-9).abs() < 0.01e-9);
        assert!((f.c2 - 20e-12).abs() < 1e-12);
        assert!((f.r - 43e3).abs() < 0.5e3);
        let g = open_loop_gain(&f, &p, p.target_crossover).norm();
        assert!((g - 1.0).abs() < 1e-6);
        let pm = phase_margin(&f, &p).unwrap();
        assert!((pm - 74.0).abs() < 0.1, "pm = {pm}");
    }

    #[test]
    fn unmeetable_margin_rejected() {
        for pm in [90.0, 95.0, 0.0, -5.0] {
            let p = LoopParams {
                target_phase_margin: pm,
                ..LoopParams::default()
            };
            assert!(matches!(design_loop(&p), Err(Error::Design(_))));
        }
    }

    #[test]
    fn small_margin_limit_collapses_pole_and_zero() {
        let p = LoopParams {
            target_phase_margin: 1e-6,
            ..LoopParams::default()
        };
        let f = design_loop(&p).unwrap();
        assert!((f.omega_z() / p.target_crossover - 1.0).abs() < 1e-6);
        assert!((f.omega_p() / p.target_crossover - 1.0).abs() < 1e-6);
    }

    #[test]
    fn doubling_current_keeps_pole_zero() {
        let p = LoopParams::default();
        let q = LoopParams {
            i_cp: 2.0 * p.i_cp,
            ..p
        };
        let (f, g) = (design_loop(&p).unwrap(), design_loop(&q).unwrap());
        assert!((f.omega_z() / g.omega_z() - 1.0).abs() < 1e-12);
        assert!((f.omega_p() / g.omega_p() - 1.0).abs() < 1e-12);
        assert!((g.c_total() / f.c_total() - 2.0).abs() < 1e-12);
        assert!((open_loop_gain(&g, &q, q.target_crossover).norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bode_examples() {
        let (p, f) = table1();
        let wc = p.target_crossover;
        let r = open_loop_response(&f, &p, &[wc]).unwrap();
        assert!(r.gain_db[0].abs() < 0.01);

        let low = open_loop_response(&f, &p, &[1.0, 10.0]).unwrap();
        assert!((low.gain_db[0] - low.gain_db[1] - 40.0).abs() < 0.01);
        assert!((low.phase_deg[0] + 180.0).abs() < 0.01);

        // oracle: argmax of phase over a dense grid
        let grid = log_grid(wc / 100.0, wc * 100.0, 20001);
        let resp = open_loop_response(&f, &p, &grid).unwrap();
        let (imax, pmax) = resp
            .phase_deg
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let geo = (f.omega_z() * f.omega_p()).sqrt();
        assert!((grid[imax] / geo - 1.0).abs() < 1e-3);
        assert!((180.0 + pmax - 74.0).abs() < 0.1);
        assert!(resp.phase_deg.iter().all(|&ph| ph > -270.0 && ph < -90.0));
        assert!(open_loop_response(&f, &p, &[2.0, 1.0]).is_err());
    }

    #[test]
    fn margin_degrades_as_c2_approaches_c1() {
        let (p, f) = table1();
        let pm = |c2: f64| phase_margin(&LoopFilter::new(f.r, f.c1, c2).unwrap(), &p).unwrap();
        let mut prev = pm(f.c2);
        for k in 1..=10 {
            let c2 = f.c2 + (f.c1 - f.c2) * k as f64 / 10.0;
            let m = pm(c2);
            assert!(m < 74.0);
            assert!(m < prev);
            prev = m;
        }
    }

    #[test]
    fn degenerate_pole_zero_has_no_margin() {
        let p = LoopParams::default();
        // C1 ≪ C2 puts ω_p on top of ω_z; C2 alone sets unity gain at ω_c
        let wc = p.target_crossover;
        let c2 = p.loop_gain() / (wc * wc);
        let c1 = c2 * 1e-6;
        let f = LoopFilter::new(1.0 / (wc * c1), c1, c2).unwrap();
        let pm = phase_margin(&f, &p).unwrap();
        assert!(pm < 0.5, "pm = {pm}");
    }

    #[test]
    fn no_crossover_is_an_error() {
        let p = LoopParams::default();
        let f = LoopFilter::new(1.0, 1.0, 1.0).unwrap();
        assert!(matches!(phase_margin(&f, &p), Err(Error::Analysis(_))));
    }

    #[test]
    fn closed_loop_dc_gain_is_unity() {
        let (p, f) = table1();
        let h = ClosedLoop::new(&f, &p);
        assert_eq!(h.a0, p.loop_gain() * f.omega_z() / f.c2);
        assert_eq!(h.dc_gain(), 1.0);
        // H = G/(1+G) at an arbitrary point
        let s = Complex64::new(3e3, 5e4);
        let g = p.loop_gain() * f.impedance(s) / s;
        assert!(((g / (1.0 + g)) - h.eval(s)).norm() < 1e-12);
    }

    #[test]
    fn step_response_settles_to_one() {
        let (p, f) = table1();
        let dt = 1e-2 / f.omega_p();
        let tr = closed_loop_step(&f, &p, dt, 6e-4).unwrap();
        assert_eq!(tr.rows()[0][0], 0.0);
        let last = tr.last_row().unwrap()[0];
        assert!((last - 1.0).abs() < 1e-4);
        let peak = tr.column(0).into_iter().fold(0.0, f64::max);
        assert!(peak < 1.15, "overshoot {peak}");
        assert!(closed_loop_step(&f, &p, 2.0 * dt, 6e-4).is_err());
    }

    #[test]
    fn sweep_examples() {
        let (p, f) = table1();
        for hold in [SweepHold::PoleZero, SweepHold::ResistorAndC1] {
            let s = capacitance_sweep(&p, &f, &[f.c2, f.c2 * 1e3], hold).unwrap();
            let m0 = s.points[0].phase_margin.unwrap();
            assert!((m0 - 74.0).abs() < 0.2, "{hold:?}: {m0}");
            assert!(s.points[1].phase_margin.unwrap() < 20.0);
        }
        let grid = log_grid(f.c2 / 30.0, f.c2 * 30.0, 61);
        let s = capacitance_sweep(&p, &f, &grid, SweepHold::PoleZero).unwrap();
        assert!(s.is_unimodal());
        let best = s.optimum().unwrap().c2;
        assert!((best / f.c2).ln().abs() <= (grid[1] / grid[0]).ln() + 1e-12);
        let literal = capacitance_sweep(&p, &f, &grid, SweepHold::ResistorAndC1).unwrap();
        assert!(literal.is_unimodal());
        assert!(literal.optimum().unwrap().c2 < f.c2);
    }

    #[test]
    fn unimodal_detector() {
        let mk = |m: &[f64]| CapacitanceSweep {
            hold: SweepHold::PoleZero,
            points: m
                .iter()
                .map(|&v| CapacitancePoint {
                    c2: 1.0,
                    phase_margin: Some(v),
                })
                .collect(),
        };
        assert!(mk(&[1.0, 2.0, 3.0, 2.0]).is_unimodal());
        assert!(!mk(&[1.0, 3.0, 2.0, 4.0]).is_unimodal());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn designed_loops_meet_targets(
            k_vco_mhz in 0.1f64..100.0,
            i_cp_ua in 0.1f64..100.0,
            fc_khz in 1.0f64..1000.0,
            pm in 30.0f64..85.0,
        ) {
            let p = LoopParams {
                k_vco: k_vco_mhz * 1e6,
                i_cp: i_cp_ua * 1e-6,
                divider_n: 1,
                target_phase_margin: pm,
                target_crossover: TAU * fc_khz * 1e3,
            };
            let f = design_loop(&p).unwrap();
            prop_assert!(f.omega_z() < f.omega_p());
            let g = open_loop_gain(&f, &p, p.target_crossover).norm();
            prop_assert!((g - 1.0).abs() < 1e-6);
            let got = phase_margin(&f, &p).unwrap();
            prop_assert!((got - pm).abs() < 0.1);
        }
    }
}
