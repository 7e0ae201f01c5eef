//! Phase arithmetic and the per-oscillator parameter types shared by the
//! Kuramoto and behavioral simulators.
//!
//! Units: frequencies are rad/s, times are seconds, VCO gains are Hz/V.
//! Phases are stored unwrapped; [`wrap_phase`] is applied only where a
//! bounded difference is needed.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};

/// Maps a finite angle onto `[-π, π)`.
pub fn wrap_phase(theta: f64) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::Domain(format!("cannot wrap non-finite phase {theta}")));
    }
    let mut wrapped = (theta + PI).rem_euclid(TAU) - PI;
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if wrapped >= PI {
        wrapped -= TAU;
    }
    Ok(wrapped)
}

/// Parameters of a single oscillator.
///
/// At the Kuramoto level the effective natural frequency is
/// `natural_frequency + center_frequency_offset`. At the behavioral level the
/// same sum is the free-running frequency at mid-rail control voltage, and
/// `vco_gain` sets the slope of the VCO law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillatorParams {
    /// rad/s
    pub natural_frequency: f64,
    /// rad/s, models the tuning resistor of the VCO bias network
    pub center_frequency_offset: f64,
    /// Hz/V
    pub vco_gain: f64,
    pub enabled: bool,
}

impl OscillatorParams {
    /// Default VCO gain, 3 MHz/V.
    pub const DEFAULT_VCO_GAIN: f64 = 3.0e6;

    pub fn new(natural_frequency: f64) -> Result<Self> {
        Self::with_gain(natural_frequency, Self::DEFAULT_VCO_GAIN)
    }

    pub fn with_gain(natural_frequency: f64, vco_gain: f64) -> Result<Self> {
        let params = Self {
            natural_frequency,
            center_frequency_offset: 0.0,
            vco_gain,
            enabled: true,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn from_hz(frequency_hz: f64) -> Result<Self> {
        Self::new(TAU * frequency_hz)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.natural_frequency.is_finite() && self.natural_frequency > 0.0) {
            return Err(Error::Domain(format!(
                "natural frequency must be > 0, got {}",
                self.natural_frequency
            )));
        }
        if !(self.vco_gain.is_finite() && self.vco_gain > 0.0) {
            return Err(Error::Domain(format!("VCO gain must be > 0, got {}", self.vco_gain)));
        }
        if !self.center_frequency_offset.is_finite() {
            return Err(Error::Domain("center frequency offset must be finite".into()));
        }
        if self.effective_frequency() <= 0.0 {
            return Err(Error::Domain("natural frequency plus center offset must be > 0".into()));
        }
        Ok(())
    }

    /// Natural frequency including the programmable center offset, rad/s.
    pub fn effective_frequency(&self) -> f64 {
        self.natural_frequency + self.center_frequency_offset
    }
}

/// Unwrapped phases, one per oscillator.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector(Vec<f64>);

impl PhaseVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("phase {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for PhaseVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// How the coupling sum is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Divide by the number of enabled oscillators.
    #[default]
    GlobalN,
    /// Divide by the receiving oscillator's enabled in-degree.
    InDegree,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingConfig {
    /// K, rad/s
    pub strength: f64,
    /// τ, seconds
    pub delay: f64,
    /// α, radians
    pub phase_lag: f64,
    pub normalization: Normalization,
}

impl CouplingConfig {
    pub fn new(strength: f64, delay: f64) -> Result<Self> {
        let config = Self {
            strength,
            delay,
            phase_lag: 0.0,
            normalization: Normalization::GlobalN,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_phase_lag(mut self, phase_lag: f64) -> Result<Self> {
        self.phase_lag = phase_lag;
        self.validate()?;
        Ok(self)
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.strength.is_finite() && self.strength >= 0.0) {
            return Err(Error::Domain(format!(
                "coupling strength must be >= 0, got {}",
                self.strength
            )));
        }
        if !(self.delay.is_finite() && self.delay >= 0.0) {
            return Err(Error::Domain(format!("delay must be >= 0, got {}", self.delay)));
        }
        if !(0.0..=PI / 2.0).contains(&self.phase_lag) {
            return Err(Error::Domain(format!(
                "phase lag must lie in [0, pi/2], got {}",
                self.phase_lag
            )));
        }
        Ok(())
    }
}
