use std::f64::consts::TAU;

/// Square-wave VCO following `ω = ω_0 + 2π K_VCO V_ctrl`, clamped at zero
/// frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vco {
    /// Intercept ω_0, rad/s.
    pub omega_0: f64,
    /// K_VCO, Hz/V.
    pub k_vco: f64,
}

/// Result of advancing a VCO by one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VcoStep {
    pub phase: f64,
    /// Output level at the end of the step: high during the first half of
    /// each cycle.
    pub level: bool,
    /// Position of a rising edge inside the step, as a fraction in `(0, 1]`.
    pub rising_edge: Option<f64>,
    /// Cycle index of that edge (phase = 2π·index at the edge).
    pub edge_index: i64,
}

impl Vco {
    /// VCO whose frequency at `v_mid` equals `omega_mid`.
    pub fn centered(omega_mid: f64, k_vco: f64, v_mid: f64) -> Self {
        Self {
            omega_0: omega_mid - TAU * k_vco * v_mid,
            k_vco,
        }
    }

    pub fn frequency(&self, v_ctrl: f64) -> f64 {
        (self.omega_0 + TAU * self.k_vco * v_ctrl).max(0.0)
    }

    pub fn step(&self, phase: f64, v_ctrl: f64, dt: f64) -> VcoStep {
        advance(phase, self.frequency(v_ctrl) * dt)
    }
}

/// Advances `phase` by `delta` and reports the first rising edge crossed.
pub fn advance(phase: f64, delta: f64) -> VcoStep {
    let next = phase + delta;
    let (c0, c1) = ((phase / TAU).floor(), (next / TAU).floor());
    let (rising_edge, edge_index) = if c1 > c0 && delta > 0.0 {
        let m = c0 + 1.0;
        let frac = ((m * TAU - phase) / delta).clamp(f64::MIN_POSITIVE, 1.0);
        (Some(frac), m as i64)
    } else {
        (None, 0)
    };
    VcoStep {
        phase: next,
        level: output_level(next),
        rising_edge,
        edge_index,
    }
}

pub fn output_level(phase: f64) -> bool {
    (phase / TAU).rem_euclid(1.0) < 0.5
}
