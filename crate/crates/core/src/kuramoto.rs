//! Delayed Kuramoto network with optional Sakaguchi phase lag:
//!
//! ```text
//! dθ_i/dt = ω_i + (K/N_i) Σ_j w_ij sin(θ_j(t − τ) − θ_i(t) − α)
//! ```
//!
//! The sum runs over enabled in-neighbors of `i` (self-coupling excluded).
//! Integration is fixed-step RK4 with delayed phases read from per-oscillator
//! history buffers.

use crate::error::{Error, Result};
use crate::history::HistoryBuffer;
use crate::phase::{CouplingConfig, Normalization, OscillatorParams, PhaseVector};
use crate::topology::{in_neighbors, Topology};
use crate::trace::SimTrace;

/// How the history on `[-τ, 0)` is seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HistoryInit {
    /// θ_j(s) = θ_j(0)
    #[default]
    ConstantAtInitial,
    /// θ_j(s) = θ_j(0) + ω_j s
    BackExtrapolateNatural,
}

/// Divergence guard: |dθ/dt| may not exceed this multiple of the largest ω_i.
pub const DIVERGENCE_FACTOR: f64 = 1e3;

#[derive(Debug, Clone)]
pub struct KuramotoSystem {
    params: Vec<OscillatorParams>,
    topology: Topology,
    coupling: CouplingConfig,
    initial_phases: PhaseVector,
    history_init: HistoryInit,
    // per receiver: (enabled sources with weights, K / N_i)
    inputs: Vec<(Vec<(usize, f64)>, f64)>,
    omega: Vec<f64>,
    max_rate: f64,
}

impl KuramotoSystem {
    pub fn new(
        params: Vec<OscillatorParams>,
        topology: Topology,
        coupling: CouplingConfig,
        initial_phases: PhaseVector,
        history_init: HistoryInit,
    ) -> Result<Self> {
        let n = topology.len();
        if params.len() != n || initial_phases.len() != n {
            return Err(Error::Config(format!(
                "oscillator count mismatch: topology {n}, params {}, phases {}",
                params.len(),
                initial_phases.len()
            )));
        }
        for p in &params {
            p.validate()?;
        }
        coupling.validate()?;

        let enabled_count = params.iter().filter(|p| p.enabled).count();
        let inputs = (0..n)
            .map(|i| {
                let sources = in_neighbors(&topology, &params, i);
                let divisor = match coupling.normalization {
                    Normalization::GlobalN => enabled_count,
                    Normalization::InDegree => sources.len(),
                };
                let gain = if divisor == 0 {
                    0.0
                } else {
                    coupling.strength / divisor as f64
                };
                (sources, gain)
            })
            .collect();
        // a disabled oscillator is switched off: its phase holds still
        let omega: Vec<f64> = params
            .iter()
            .map(|p| if p.enabled { p.effective_frequency() } else { 0.0 })
            .collect();
        let max_rate = DIVERGENCE_FACTOR * omega.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        Ok(Self {
            params,
            topology,
            coupling,
            initial_phases,
            history_init,
            inputs,
            omega,
            max_rate,
        })
    }

    pub fn params(&self) -> &[OscillatorParams] {
        &self.params
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn coupling(&self) -> &CouplingConfig {
        &self.coupling
    }

    pub fn initial_phases(&self) -> &PhaseVector {
        &self.initial_phases
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Right-hand side at time `t`. Delayed phases come from `history` at
    /// `t − τ`; with `τ = 0` the current `phases` are used.
    ///
    /// Disabled oscillators neither send nor receive coupling and have zero
    /// rate.
    pub fn derivative(&self, t: f64, phases: &PhaseVector, history: &[HistoryBuffer]) -> Result<Vec<f64>> {
        if phases.len() != self.len() {
            return Err(Error::Domain("phase vector length mismatch".into()));
        }
        let delayed = if self.coupling.delay > 0.0 {
            if history.len() != self.len() {
                return Err(Error::Domain("one history buffer per oscillator required".into()));
            }
            history
                .iter()
                .map(|h| h.sample(t - self.coupling.delay))
                .collect::<Result<Vec<_>>>()?
        } else {
            phases.as_slice().to_vec()
        };
        let mut out = vec![0.0; self.len()];
        self.rhs(phases.as_slice(), &delayed, &mut out);
        Ok(out)
    }

    fn rhs(&self, phases: &[f64], delayed: &[f64], out: &mut [f64]) {
        let alpha = self.coupling.phase_lag;
        for (i, slot) in out.iter_mut().enumerate() {
            let (sources, gain) = &self.inputs[i];
            let mut sum = 0.0;
            for &(j, w) in sources {
                sum += w * (delayed[j] - phases[i] - alpha).sin();
            }
            *slot = self.omega[i] + gain * sum;
        }
    }

    fn seed_history(&self, dt: f64) -> Result<Vec<HistoryBuffer>> {
        let tau = self.coupling.delay;
        let back = (tau / dt).ceil() as usize + 1;
        let origin = -(back as f64) * dt;
        self.initial_phases
            .as_slice()
            .iter()
            .zip(&self.omega)
            .map(|(&theta0, &w)| {
                let mut buf = HistoryBuffer::new(origin, dt, back + 2)?;
                for k in 0..=back {
                    let s = -((back - k) as f64) * dt;
                    buf.push(match self.history_init {
                        HistoryInit::ConstantAtInitial => theta0,
                        HistoryInit::BackExtrapolateNatural => theta0 + w * s,
                    });
                }
                Ok(buf)
            })
            .collect()
    }

    /// Fixed-step RK4 from `t = 0` to `t_end`, sampling every
    /// `sample_every` steps (the initial state is always sampled).
    ///
    /// With `τ > 0` the step must satisfy `dt ≤ τ/10`. Delayed phases are read
    /// at each RK stage time from the history buffers by linear interpolation.
    pub fn integrate(&self, dt: f64, t_end: f64, sample_every: usize) -> Result<SimTrace> {
        let tau = self.coupling.delay;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!("dt must be > 0, got {dt}")));
        }
        if tau > 0.0 && dt > tau / 10.0 * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "dt = {dt:e} s exceeds tau/10 = {:e} s",
                tau / 10.0
            )));
        }
        if !(t_end.is_finite() && t_end >= dt * (1.0 - 1e-12)) {
            return Err(Error::Config(format!("t_end must be >= dt, got {t_end:e}")));
        }
        if sample_every == 0 {
            return Err(Error::Config("sample_every must be >= 1".into()));
        }
        let n = self.len();
        let steps = (t_end / dt - 1e-9).ceil() as usize;
        let mut history = self.seed_history(dt)?;

        let mut trace = SimTrace::new(n);
        let mut state = self.initial_phases.as_slice().to_vec();
        trace.push(0.0, state.clone())?;

        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut stage = vec![0.0; n];
        let mut d_start = vec![0.0; n];
        let mut d_mid = vec![0.0; n];
        let mut d_end = vec![0.0; n];
        let delayed = tau > 0.0;

        for step in 0..steps {
            let t = step as f64 * dt;
            if delayed {
                for (j, h) in history.iter().enumerate() {
                    d_start[j] = h.lagged(tau)?;
                    d_mid[j] = h.lagged(tau - 0.5 * dt)?;
                    d_end[j] = h.lagged(tau - dt)?;
                }
            }

            self.rhs(&state, if delayed { &d_start } else { &state }, &mut k1);
            self.guard(t, &k1)?;
            for i in 0..n {
                stage[i] = state[i] + 0.5 * dt * k1[i];
            }
            self.rhs(&stage, if delayed { &d_mid } else { &stage }, &mut k2);
            for i in 0..n {
                stage[i] = state[i] + 0.5 * dt * k2[i];
            }
            self.rhs(&stage, if delayed { &d_mid } else { &stage }, &mut k3);
            for i in 0..n {
                stage[i] = state[i] + dt * k3[i];
            }
            self.rhs(&stage, if delayed { &d_end } else { &stage }, &mut k4);
            for i in 0..n {
                state[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            let t_next = (step + 1) as f64 * dt;
            if let Some(i) = state.iter().position(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    time: t_next,
                    reason: format!("phase {i} is not finite"),
                });
            }
            for (h, &v) in history.iter_mut().zip(&state) {
                h.push(v);
            }
            if (step + 1) % sample_every == 0 {
                trace.push(t_next, state.clone())?;
            }
        }
        Ok(trace)
    }

    fn guard(&self, t: f64, rates: &[f64]) -> Result<()> {
        for (i, r) in rates.iter().enumerate() {
            if !r.is_finite() || r.abs() > self.max_rate {
                return Err(Error::Divergence {
                    time: t,
                    reason: format!("|dtheta_{i}/dt| = {r:e} exceeds guard {:e}", self.max_rate),
                });
            }
        }
        Ok(())
    }
}

/// Effective coupling factor on the synchronized manifold of an all-to-all
/// graph of `n` oscillators with global normalization and no self-term.
pub fn all_to_all_sync_factor(n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        (n as f64 - 1.0) / n as f64
    }
}

const MAX_ITERATIONS: usize = 10_000;

/// Collective frequency Ω of the in-phase synchronized state, the root of
/// `Ω = ω − K·c·sin(Ω τ)` that is continuous in τ from `Ω(0) = ω`.
///
/// `factor` is `c`, e.g. [`all_to_all_sync_factor`].
pub fn sync_frequency_prediction(omega: f64, strength: f64, tau: f64, factor: f64) -> Result<f64> {
    if ![omega, strength, tau, factor].iter().all(|v| v.is_finite()) || tau < 0.0 || strength < 0.0 {
        return Err(Error::Domain(
            "sync prediction needs finite inputs with tau, K >= 0".into(),
        ));
    }
    let kc = strength * factor;
    if tau == 0.0 || kc == 0.0 {
        return Ok(omega);
    }
    let g = |w: f64, tau: f64| w - omega + kc * (w * tau).sin();

    // continuation in τ keeps the returned root on the branch through Ω(0) = ω
    let a = kc * tau;
    let substeps = ((a * 8.0).ceil() as usize).clamp(1, 4096);
    let mut w = omega;
    let mut iterations = 0usize;
    for s in 1..=substeps {
        let t = tau * s as f64 / substeps as f64;
        let lambda = 1.0 / (1.0 + kc * t);
        loop {
            let next = (1.0 - lambda) * w + lambda * (omega - kc * (w * t).sin());
            let done = (next - w).abs() <= 1e-14 * omega.abs().max(1.0);
            w = next;
            iterations += 1;
            if done {
                break;
            }
            if iterations >= MAX_ITERATIONS {
                return Err(Error::Numerical(format!(
                    "sync frequency iteration did not converge in {MAX_ITERATIONS} steps"
                )));
            }
        }
    }

    let scale = omega.abs().max(kc).max(1.0);
    let mut width = 1e-9 * scale;
    let (mut lo, mut hi) = (w - width, w + width);
    while g(lo, tau).signum() == g(hi, tau).signum() {
        width *= 2.0;
        if width > 1e-3 * scale {
            // fixed point landed on the root to rounding
            return Ok(w);
        }
        lo = w - width;
        hi = w + width;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid, tau).signum() == g(lo, tau).signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_clustered, set_enabled, InterCoupling, IntraCoupling};
    use std::f64::consts::{FRAC_PI_2, TAU};

    fn pair(omegas: [f64; 2], k: f64, tau: f64, phases: [f64; 2]) -> KuramotoSystem {
        let topo = build_clustered(1, 2, IntraCoupling::AllToAll, InterCoupling::None).unwrap();
        let params = omegas.iter().map(|&w| OscillatorParams::new(w).unwrap()).collect();
        KuramotoSystem::new(
            params,
            topo,
            CouplingConfig::new(k, tau).unwrap(),
            PhaseVector::new(phases.to_vec()).unwrap(),
            HistoryInit::ConstantAtInitial,
        )
        .unwrap()
    }

    #[test]
    fn derivative_examples() {
        let sys = pair([3.0, 5.0], 2.0, 0.0, [0.0, 0.0]);
        let d = sys.derivative(0.0, &PhaseVector::zeros(2), &[]).unwrap();
        assert_eq!(d, vec![3.0, 5.0]);
        let d = sys
            .derivative(0.0, &PhaseVector::new(vec![0.0, FRAC_PI_2]).unwrap(), &[])
            .unwrap();
        assert!((d[0] - (3.0 + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn symmetric_lead_lag_cancels() {
        let topo = build_clustered(1, 3, IntraCoupling::AllToAll, InterCoupling::None).unwrap();
        let params = vec![OscillatorParams::new(10.0).unwrap(); 3];
        let sys = KuramotoSystem::new(
            params,
            topo,
            CouplingConfig::new(4.0, 0.0).unwrap(),
            PhaseVector::zeros(3),
            HistoryInit::ConstantAtInitial,
        )
        .unwrap();
        let delta = 0.37;
        let d = sys
            .derivative(
                0.0,
                &PhaseVector::new(vec![1.0, 1.0 + delta, 1.0 - delta]).unwrap(),
                &[],
            )
            .unwrap();
        assert!((d[0] - 10.0).abs() < 1e-14);
    }

    #[test]
    fn derivative_reads_delayed_history() {
        let sys = pair([1.0, 1.0], 2.0, 0.5, [0.0, 0.0]);
        let mut h0 = HistoryBuffer::new(-1.0, 0.5, 8).unwrap();
        let mut h1 = HistoryBuffer::new(-1.0, 0.5, 8).unwrap();
        for v in [0.0, 0.0, 0.0] {
            h0.push(v);
        }
        for v in [0.0, FRAC_PI_2, 0.0] {
            h1.push(v);
        }
        let d = sys.derivative(0.0, &PhaseVector::zeros(2), &[h0, h1]).unwrap();
        assert!((d[0] - 2.0).abs() < 1e-15);
        let short = HistoryBuffer::new(0.0, 0.5, 4).unwrap();
        assert!(sys
            .derivative(0.0, &PhaseVector::zeros(2), &[short.clone(), short])
            .is_err());
    }

    #[test]
    fn disabled_oscillator_holds_still() {
        let topo = build_clustered(1, 2, IntraCoupling::AllToAll, InterCoupling::None).unwrap();
        let params = vec![OscillatorParams::new(2.0).unwrap(), OscillatorParams::new(3.0).unwrap()];
        let params = set_enabled(&topo, &params, 1, false).unwrap();
        let sys = KuramotoSystem::new(
            params,
            topo,
            CouplingConfig::new(5.0, 0.0).unwrap(),
            PhaseVector::new(vec![0.0, 1.0]).unwrap(),
            HistoryInit::ConstantAtInitial,
        )
        .unwrap();
        let d = sys.derivative(0.0, sys.initial_phases(), &[]).unwrap();
        assert_eq!(d, vec![2.0, 0.0]);
    }

    #[test]
    fn uncoupled_is_linear() {
        for tau in [0.0, 1e-3] {
            let sys = pair([TAU * 50.0, TAU * 80.0], 0.0, tau, [0.3, -1.0]);
            let dt = 1e-5;
            let trace = sys.integrate(dt, 1e4 * dt, 100).unwrap();
            for (t, row) in trace.times().iter().zip(trace.rows()) {
                assert!((row[0] - (0.3 + TAU * 50.0 * t)).abs() < 1e-9);
                assert!((row[1] - (-1.0 + TAU * 80.0 * t)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn identical_pair_synchronizes() {
        // oracle: scalar ψ' = −K sin ψ integrated with fine explicit Euler
        let k = 50.0;
        let sys = pair([100.0, 100.0], k, 0.0, [0.0, 0.5]);
        let trace = sys.integrate(1e-4, 1.0, 100).unwrap();
        let last = trace.last_row().unwrap();
        let final_diff = (last[1] - last[0]).abs();
        let mut psi: f64 = 0.5;
        let h = 1e-6;
        for _ in 0..1_000_000 {
            psi -= h * k * psi.sin();
        }
        assert!(final_diff < 1e-6, "final diff {final_diff}");
        assert!((final_diff - psi.abs()).abs() < 1e-6);
    }

    #[test]
    fn dt_ratio_enforced() {
        let sys = pair([1.0, 1.0], 1.0, 1e-3, [0.0, 0.0]);
        assert!(matches!(sys.integrate(2e-4, 1.0, 1), Err(Error::Config(_))));
        assert!(sys.integrate(1e-4, 1e-3, 1).is_ok());
        assert!(matches!(sys.integrate(1e-4, 1e-5, 1), Err(Error::Config(_))));
    }

    #[test]
    fn divergence_is_reported() {
        // strength far above the guard relative to ω
        let sys = pair([1.0, 1.0], 1e5, 0.0, [0.0, 1.0]);
        match sys.integrate(1e-3, 1.0, 1) {
            Err(Error::Divergence { time, .. }) => assert!(time >= 0.0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn sync_prediction_trivial_cases() {
        assert_eq!(sync_frequency_prediction(5.0, 1.0, 0.0, 1.0).unwrap(), 5.0);
        assert_eq!(sync_frequency_prediction(5.0, 0.0, 0.3, 1.0).unwrap(), 5.0);
    }

    #[test]
    fn sync_prediction_matches_bisection_oracle() {
        let omega = TAU * 1e7;
        let k = 0.1 * omega;
        let c = all_to_all_sync_factor(7);
        for tau in [5e-9, 1e-8, 2e-8, 4e-8, 1e-7] {
            let g = |w: f64| w - omega + k * c * (w * tau).sin();
            // g is strictly increasing here (K c τ < 1), so any bracket works
            assert!(k * c * tau < 1.0);
            let (mut lo, mut hi) = (omega - 2.0 * k, omega + 2.0 * k);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if g(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let got = sync_frequency_prediction(omega, k, tau, c).unwrap();
            assert!((got - lo).abs() <= 1e-9 * omega, "tau {tau}: {got} vs {lo}");
        }
    }

    #[test]
    fn sync_prediction_follows_branch_with_multiple_roots() {
        // K c τ > 1: several roots exist; the continued branch must stay a root
        let (omega, k, tau) = (1.0, 3.0, 2.0);
        let w = sync_frequency_prediction(omega, k, tau, 1.0).unwrap();
        assert!((w - omega + k * (w * tau).sin()).abs() < 1e-9);
    }
}
