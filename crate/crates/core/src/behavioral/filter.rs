use crate::pll::LoopFilter;

/// Capacitor voltages of the series R–C1 ‖ C2 network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterState {
    /// Voltage across C1 (series branch).
    pub v_c1: f64,
    /// Voltage across C2, which is also the VCO control node.
    pub v_ctrl: f64,
}

impl FilterState {
    pub fn equalized(v: f64) -> Self {
        Self { v_c1: v, v_ctrl: v }
    }

    /// Charge stored on both capacitors.
    pub fn charge(&self, filter: &LoopFilter) -> f64 {
        filter.c1 * self.v_c1 + filter.c2 * self.v_ctrl
    }
}

/// Trapezoidal discretization of the loop filter for a fixed step.
///
/// Continuous model with pump current `i` into the control node:
/// `C1 v1' = (v2 − v1)/R`, `C2 v2' = i − (v2 − v1)/R`. The trapezoidal rule
/// keeps the linear invariant `C1 v1 + C2 v2` exact, so injected charge is
/// conserved up to rounding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterStepper {
    // state update written against the capacitor voltage difference so an
    // equalized, undriven filter stays exactly put
    p: [f64; 2],
    n: [f64; 2],
    v_supply: f64,
}

impl FilterStepper {
    pub fn new(filter: &LoopFilter, dt: f64, v_supply: f64) -> Self {
        let g = 1.0 / filter.r;
        let a = [[-g / filter.c1, g / filter.c1], [g / filter.c2, -g / filter.c2]];
        let h = 0.5 * dt;
        let lhs = [[1.0 - h * a[0][0], -h * a[0][1]], [-h * a[1][0], 1.0 - h * a[1][1]]];
        let rhs = [[1.0 + h * a[0][0], h * a[0][1]], [h * a[1][0], 1.0 + h * a[1][1]]];
        let det = lhs[0][0] * lhs[1][1] - lhs[0][1] * lhs[1][0];
        let inv = [[lhs[1][1] / det, -lhs[0][1] / det], [-lhs[1][0] / det, lhs[0][0] / det]];
        let mut m = [[0.0; 2]; 2];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = inv[i][0] * rhs[0][j] + inv[i][1] * rhs[1][j];
            }
        }
        let b = [0.0, dt / filter.c2];
        let n = [inv[0][0] * b[0] + inv[0][1] * b[1], inv[1][0] * b[0] + inv[1][1] * b[1]];
        Self {
            p: [m[0][0] - 1.0, m[1][0]],
            n,
            v_supply,
        }
    }

    /// Advances one step with average pump current `i_pump`. When the control
    /// node would leave `[0, v_supply]` it is held at the rail and C1 is frozen.
    /// Returns the new state and whether it was clamped.
    pub fn step(&self, state: FilterState, i_pump: f64) -> (FilterState, bool) {
        let d = state.v_c1 - state.v_ctrl;
        let v_c1 = state.v_c1 + self.p[0] * d + self.n[0] * i_pump;
        let v_ctrl = state.v_ctrl + self.p[1] * d + self.n[1] * i_pump;
        if v_ctrl > self.v_supply || v_ctrl < 0.0 {
            let rail = v_ctrl.clamp(0.0, self.v_supply);
            return (
                FilterState {
                    v_c1: state.v_c1,
                    v_ctrl: rail,
                },
                true,
            );
        }
        (FilterState { v_c1, v_ctrl }, false)
    }
}

/// One filter update; see [`FilterStepper::step`].
pub fn filter_step(state: FilterState, i_pump: f64, filter: &LoopFilter, dt: f64, v_supply: f64) -> FilterState {
    FilterStepper::new(filter, dt, v_supply).step(state, i_pump).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pll::{design_loop, LoopParams};
    use proptest::prelude::*;

    fn filt() -> LoopFilter {
        design_loop(&LoopParams::default()).unwrap()
    }

    #[test]
    fn equilibrium_is_fixed() {
        let f = filt();
        let s = FilterState::equalized(0.42);
        assert_eq!(filter_step(s, 0.0, &f, 1e-9, 1.0), s);
    }

    #[test]
    fn constant_current_ramps_at_total_capacitance() {
        // oracle: after the RC transient, both capacitors slew at i/(C1 + C2)
        let f = filt();
        let dt = 1e-9;
        let st = FilterStepper::new(&f, dt, 10.0);
        let i = 1e-6;
        let mut s = FilterState::equalized(1.0);
        let rc = f.r * f.c1 * f.c2 / f.c_total();
        let n = (20.0 * rc / dt) as usize;
        for _ in 0..n {
            s = st.step(s, i).0;
        }
        let before = s.v_ctrl;
        for _ in 0..1000 {
            s = st.step(s, i).0;
        }
        let slope = (s.v_ctrl - before) / (1000.0 * dt);
        assert!((slope / (i / f.c_total()) - 1.0).abs() < 1e-6, "slope {slope}");
    }

    #[test]
    fn impulse_jumps_by_charge_over_c2() {
        let f = filt();
        let dt = 1e-10;
        let q = 1e-14;
        let s = filter_step(FilterState::equalized(0.5), q / dt, &f, dt, 1.0);
        let expected = q / f.c2;
        assert!(((s.v_ctrl - 0.5) / expected - 1.0).abs() < 1e-3);
        // the series branch barely moves within the step
        assert!((s.v_c1 - 0.5).abs() < 1e-3 * expected);
    }

    #[test]
    fn clamps_at_rails_and_freezes() {
        let f = filt();
        let st = FilterStepper::new(&f, 1e-9, 1.0);
        let s = FilterState {
            v_c1: 0.9,
            v_ctrl: 0.999,
        };
        let (next, clamped) = st.step(s, 1e-3);
        assert!(clamped);
        assert_eq!(next.v_ctrl, 1.0);
        assert_eq!(next.v_c1, 0.9);
        let (low, clamped) = st.step(FilterState::equalized(0.0), -1e-3);
        assert!(clamped && low.v_ctrl == 0.0);
    }

    proptest! {
        #[test]
        fn charge_is_conserved(currents in proptest::collection::vec(-2e-6f64..2e-6, 1..400), dt in 1e-10f64..1e-8) {
            let f = filt();
            let st = FilterStepper::new(&f, dt, 1e6);
            let mut s = FilterState { v_c1: 0.3, v_ctrl: 0.6 };
            let q0 = s.charge(&f);
            let mut injected = 0.0;
            let mut moved = 0.0;
            for i in &currents {
                s = st.step(s, *i).0;
                injected += i * dt;
                moved += (i * dt).abs();
            }
            let dq = s.charge(&f) - q0;
            let scale = moved.max(1e-30);
            prop_assert!((dq - injected).abs() <= 1e-6 * scale, "dq {} injected {}", dq, injected);
        }
    }
}
