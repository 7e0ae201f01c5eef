use std::f64::consts::{FRAC_PI_2, TAU};

use oscnet::behavioral::{run_behavioral, BehavioralConfig, BehavioralRun, ReferenceSource, Scheme};
use oscnet::pll::{design_loop, LoopParams};
use oscnet::{build_clustered, InterCoupling, IntraCoupling, OscillatorParams};

const F0: f64 = 10e6;

fn config(n: usize) -> BehavioralConfig {
    let topo = build_clustered(1, n, IntraCoupling::AllToAll, InterCoupling::None).unwrap();
    let params = vec![OscillatorParams::from_hz(F0).unwrap(); n];
    let lp = LoopParams::default();
    BehavioralConfig::new(topo, params, design_loop(&lp).unwrap(), lp.i_cp).unwrap()
}

fn locked_to_reference(f_ref: f64, dt: Option<f64>) -> BehavioralRun {
    let mut cfg = config(1);
    if let Some(dt) = dt {
        cfg.dt = dt;
    }
    cfg.reference = Some(ReferenceSource {
        frequency: TAU * f_ref,
        phase: 1.0,
    });
    cfg.t_end = 5.0 * 120e-6;
    cfg.sample_every = 10_000;
    run_behavioral(&cfg).unwrap()
}

/// Rising transitions of a recorded level series, as step indices.
fn rising_steps(levels: &[bool]) -> Vec<usize> {
    levels
        .windows(2)
        .enumerate()
        .filter(|(_, w)| !w[0] && w[1])
        .map(|(i, _)| i + 1)
        .collect()
}

#[test]
fn single_pll_locks_to_reference() {
    let run = locked_to_reference(F0, None);
    assert!(run.summary.locked);
    let f = run.summary.mean_frequency[0].unwrap() / TAU;
    assert!(((f - F0) / F0).abs() < 10e-6, "f = {f}");
    assert!(!run.summary.pinned[0]);
}

#[test]
fn offset_reference_is_tracked_within_10ppm() {
    // 3 kHz off nominal: the loop has to move the control voltage to get there
    let f_ref = F0 + 3e3;
    let run = locked_to_reference(f_ref, None);
    let f = run.summary.mean_frequency[0].unwrap() / TAU;
    assert!(((f - f_ref) / f_ref).abs() < 10e-6, "f = {f}");
    // oracle: VCO law solved for the control voltage giving f_ref
    let v_expected = 0.5 + 3e3 / 3e6;
    let v = run.final_states[0].v_ctrl;
    assert!((v - v_expected).abs() < 1e-5, "v = {v}");
}

#[test]
fn halving_dt_moves_lock_frequency_below_1ppm() {
    let f_ref = F0 + 3e3;
    let dt = 1.0 / F0 / 100.0;
    let a = locked_to_reference(f_ref, Some(dt)).summary.mean_frequency[0].unwrap();
    let b = locked_to_reference(f_ref, Some(dt / 2.0)).summary.mean_frequency[0].unwrap();
    assert!(((a - b) / a).abs() < 1e-6, "{a} vs {b}");
}

#[test]
fn vco_slope_matches_gain() {
    // oracle: frequency from the first and last rising transitions of the
    // recorded output, over ~1000 periods per set point
    let set_points = [0.1, 0.3, 0.5, 0.7, 0.9];
    let mut freqs = Vec::new();
    for &v in &set_points {
        let mut cfg = config(1);
        cfg.scheme = Scheme::Uncoupled;
        cfg.initial_vctrl = vec![v];
        cfg.t_end = 100e-6;
        cfg.sample_every = 10_000;
        cfg.record_levels = true;
        let run = run_behavioral(&cfg).unwrap();
        let levels = &run.levels.as_ref().unwrap()[0];
        let edges = rising_steps(levels);
        assert!(edges.len() > 100);
        let span = (edges[edges.len() - 1] - edges[0]) as f64 * cfg.dt;
        freqs.push((edges.len() - 1) as f64 / span);
    }
    let n = set_points.len() as f64;
    let mx = set_points.iter().sum::<f64>() / n;
    let my = freqs.iter().sum::<f64>() / n;
    let sxy: f64 = set_points.iter().zip(&freqs).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = set_points.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    assert!((slope / 3e6 - 1.0).abs() < 0.01, "slope {slope}");
}

#[test]
fn two_plls_pull_together() {
    let mut cfg = config(2);
    cfg.initial_phases = vec![0.0, FRAC_PI_2];
    cfg.sample_every = 1000;
    let run = run_behavioral(&cfg).unwrap();
    let diffs: Vec<f64> = run.phases.rows().iter().skip(1).map(|p| p[1] - p[0]).collect();
    // the lagging PLL speeds up, the leading one slows down
    let early = &run.vctrl.rows()[3];
    assert!(early[0] > 0.5 && early[1] < 0.5, "{early:?}");
    // in-phase fixed point, within a couple of dt-quanta of phase
    let quantum = TAU * cfg.dt * F0;
    let last = *diffs.last().unwrap();
    assert!(last.abs() < 2.0 * quantum, "final {last}");
    // the type-2 loop overshoots once, by a bounded amount, then decays
    // without growing again
    let min = diffs.iter().copied().fold(f64::MAX, f64::min);
    assert!(min > -0.1 * FRAC_PI_2, "undershoot {min}");
    let turn = diffs.iter().position(|&d| d == min).unwrap();
    for w in diffs[turn..].windows(2) {
        assert!(w[1].abs() <= w[0].abs() + 1e-6, "{w:?}");
    }
}

#[test]
fn symmetric_lead_and_lag_cancel() {
    let period = 1.0 / F0;
    let offset = TAU / 16.0;
    let mut cfg = config(3);
    // centred away from zero so no PLL starts just short of a rising edge
    cfg.initial_phases = vec![3.0, 3.0 + offset, 3.0 - offset];
    cfg.t_end = 10.0 * period;
    cfg.sample_every = 10;
    let run = run_behavioral(&cfg).unwrap();
    let free = 3.0 + cfg.vco(0).frequency(0.5) * cfg.t_end;
    let drift = run.final_states[0].vco_phase - free;
    let bound = TAU * (cfg.dt / period) * 10.0;
    assert!(drift.abs() < bound, "drift {drift}, bound {bound}");
    // net charge: zero within one dt-quantum per period
    assert!(
        run.pump_charge[0].abs() <= 10.0 * cfg.i_cp * cfg.dt,
        "{}",
        run.pump_charge[0]
    );
    // the leading and lagging peers are pulled in
    assert!(run.pump_charge[1] < 0.0 && run.pump_charge[2] > 0.0);
}

#[test]
fn uncoupled_matches_free_running_phase() {
    let mut cfg = config(4);
    cfg.scheme = Scheme::Uncoupled;
    cfg.params = [9.9e6, 10e6, 10.05e6, 10.2e6]
        .iter()
        .map(|&f| OscillatorParams::from_hz(f).unwrap())
        .collect();
    cfg.initial_phases = vec![0.1, -0.2, 2.0, 0.0];
    cfg.initial_vctrl = vec![0.5, 0.3, 0.7, 0.5];
    cfg.t_end = 20e-6;
    cfg.sample_every = 1000;
    let run = run_behavioral(&cfg).unwrap();
    let steps = (cfg.t_end / cfg.dt).round();
    for (i, s) in run.final_states.iter().enumerate() {
        let w = cfg.vco(i).frequency(cfg.initial_vctrl[i]);
        let expected = cfg.initial_phases[i] + w * cfg.dt * steps;
        assert!(
            (s.vco_phase - expected).abs() < 1e-9,
            "pll {i}: {} vs {expected}",
            s.vco_phase
        );
        assert_eq!(s.v_ctrl, cfg.initial_vctrl[i]);
        assert_eq!(run.pump_charge[i], 0.0);
    }
}

#[test]
fn runs_are_bit_identical_across_threads() {
    let mut cfg = config(3);
    cfg.initial_phases = vec![0.0, 1.0, -2.5];
    cfg.t_end = 50e-6;
    cfg.sample_every = 500;
    let reference = run_behavioral(&cfg).unwrap().to_csv();
    let handles: Vec<_> = (0..3)
        .map(|_| {
            let cfg = cfg.clone();
            std::thread::spawn(move || run_behavioral(&cfg).unwrap().to_csv())
        })
        .collect();
    for h in handles {
        assert_eq!(h.join().unwrap(), reference);
    }
}

#[test]
fn pump_charge_lands_on_the_capacitors() {
    let mut cfg = config(3);
    cfg.scheme = Scheme::Cs2 { edges_per_advance: 1 };
    cfg.initial_phases = vec![0.0, 2.0, -1.0];
    cfg.t_end = 100e-6;
    cfg.sample_every = 1000;
    let run = run_behavioral(&cfg).unwrap();
    for i in 0..3 {
        assert_eq!(run.clamped_steps[i], 0);
        let s = &run.final_states[i];
        let v0 = cfg.initial_vctrl[i];
        let stored = cfg.filter.c1 * (s.v_c1 - v0) + cfg.filter.c2 * (s.v_ctrl - v0);
        let q = run.pump_charge[i];
        assert!(q.abs() > 0.0);
        assert!(((stored - q) / q).abs() < 1e-6, "pll {i}: {stored} vs {q}");
    }
}

#[test]
fn serial_scheme_locks_a_cluster() {
    let mut cfg = config(4);
    cfg.scheme = Scheme::Cs2 { edges_per_advance: 1 };
    cfg.params = [9.98e6, 10e6, 10.01e6, 10.03e6]
        .iter()
        .map(|&f| OscillatorParams::from_hz(f).unwrap())
        .collect();
    cfg.initial_phases = vec![0.0, 0.7, 1.9, -2.0];
    let run = run_behavioral(&cfg).unwrap();
    assert!(run.summary.locked, "{}", run.summary.to_text());
    assert!(run.final_states.iter().all(|s| s.cs2_counter < 8));
}

#[test]
fn unreachable_reference_reports_no_lock() {
    let mut cfg = config(1);
    cfg.reference = Some(ReferenceSource {
        frequency: TAU * 14e6,
        phase: 0.0,
    });
    cfg.t_end = 2e-3;
    let run = run_behavioral(&cfg).unwrap();
    assert!(!run.summary.locked);
    assert!(run.summary.pinned[0]);
    assert_eq!(run.final_states[0].v_ctrl, cfg.v_supply);
}

#[test]
fn delay_quantizes_to_whole_steps() {
    let mut cfg = config(2);
    cfg.dt = 1e-9;
    assert_eq!(cfg.set_delay(0.0).unwrap(), 0.0);
    assert_eq!(cfg.delay_samples(), 0);
    assert_eq!(cfg.set_delay(25e-9).unwrap(), 25.0 * 1e-9);
    assert_eq!(cfg.delay_samples(), 25);
    assert_eq!(cfg.set_delay(25.4e-9).unwrap(), 25.0 * 1e-9);
    assert_eq!(cfg.delay_samples(), 25);
    cfg.max_delay_samples = 100;
    assert!(cfg.set_delay(1e-6).is_err());
    assert!(cfg.set_delay(-1e-9).is_err());
}

#[test]
fn delayed_pair_still_locks() {
    let mut cfg = config(2);
    cfg.set_delay(25e-9).unwrap();
    cfg.initial_phases = vec![0.0, 1.0];
    let run = run_behavioral(&cfg).unwrap();
    assert!(run.summary.locked, "{}", run.summary.to_text());
}

#[test]
fn coarse_dt_is_rejected() {
    let mut cfg = config(1);
    cfg.dt = 1.0 / F0 / 32.0;
    assert!(run_behavioral(&cfg).is_err());
}

#[test]
fn trace_csv_layout() {
    let mut cfg = config(2);
    cfg.t_end = 2e-6;
    cfg.sample_every = 500;
    let csv = run_behavioral(&cfg).unwrap().to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,vctrl_0,vctrl_1,phase_0,phase_1"));
    assert_eq!(lines.count(), 5);
}
