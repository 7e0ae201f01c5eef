//! Lead/lag phase comparison and the two intra-cluster coupling schemes.
//!
//! Every PLL runs one tri-state comparator per input (peer output or
//! reference). A peer edge arriving first raises a lead pulse that lasts until
//! the PLL's own edge; an own edge arriving first raises a lag pulse that lasts
//! until the peer edge. Pulse boundaries are tracked at sub-step resolution as
//! fractions of the step.
//!
//! - Parallel scheme: the pump sources current while every currently-leading
//!   peer's lead pulse is high (AND) and sinks while any lag pulse is high (OR).
//! - Serial scheme: a 3-bit counter clocked by the PLL's own rising edges
//!   selects one peer at a time; only that peer's pulses reach the pump.

/// Up to two disjoint sub-intervals of a step, as fractions in `[0, 1]`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Spans {
    spans: [(f64, f64); 2],
    len: u8,
}

impl Spans {
    fn push(&mut self, a: f64, b: f64) {
        if b <= a {
            return;
        }
        if self.len > 0 {
            let last = &mut self.spans[self.len as usize - 1];
            if last.1 >= a {
                last.1 = last.1.max(b);
                return;
            }
        }
        debug_assert!(self.len < 2, "a comparator signal toggles at most twice per step");
        self.spans[self.len as usize] = (a, b);
        self.len += 1;
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.spans[..self.len as usize].iter().copied()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.iter().any(|(a, b)| a <= x && x < b)
    }

    pub fn total(&self) -> f64 {
        self.iter().map(|(a, b)| b - a).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Sign {
    /// Peer edge came first.
    Lead,
    /// Own edge came first.
    Lag,
    #[default]
    Aligned,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
enum PfdState {
    #[default]
    Idle,
    Up,
    Down,
}

/// Pulses produced by one comparator during one step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PfdStep {
    pub up: Spans,
    pub down: Spans,
    pub sign_at_start: Sign,
    /// Sign changes inside the step, `(fraction, new sign)`.
    changes: [(f64, Sign); 2],
    n_changes: u8,
}

impl PfdStep {
    pub fn sign_at(&self, x: f64) -> Sign {
        let mut s = self.sign_at_start;
        for &(at, sign) in &self.changes[..self.n_changes as usize] {
            if at <= x {
                s = sign;
            }
        }
        s
    }

    pub fn sign_changes(&self) -> impl Iterator<Item = (f64, Sign)> + '_ {
        self.changes[..self.n_changes as usize].iter().copied()
    }

    fn change(&mut self, at: f64, sign: Sign) {
        self.changes[self.n_changes as usize] = (at, sign);
        self.n_changes += 1;
    }

    pub fn is_quiet(&self) -> bool {
        self.up.is_empty() && self.down.is_empty()
    }
}

/// Tri-state lead/lag comparator for one (peer, own) pair.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Pfd {
    state: PfdState,
    sign: Sign,
}

impl Pfd {
    pub fn sign(&self) -> Sign {
        self.sign
    }

    /// Processes the rising edges seen during one step. Edge positions are
    /// fractions in `(0, 1]`.
    pub fn step(&mut self, peer_edge: Option<f64>, own_edge: Option<f64>) -> PfdStep {
        let mut out = PfdStep {
            sign_at_start: self.sign,
            ..PfdStep::default()
        };
        let mut events: [(f64, u8); 2] = [(0.0, 0); 2];
        let mut n = 0;
        match (peer_edge, own_edge) {
            (Some(p), Some(o)) if p == o => {
                events[0] = (p, 3);
                n = 1;
            }
            (p, o) => {
                if let Some(p) = p {
                    events[n] = (p, 1);
                    n += 1;
                }
                if let Some(o) = o {
                    events[n] = (o, 2);
                    n += 1;
                }
                if n == 2 && events[1].0 < events[0].0 {
                    events.swap(0, 1);
                }
            }
        }

        let mut x = 0.0;
        for &(at, kind) in &events[..n] {
            self.emit(&mut out, x, at);
            x = at;
            match (kind, self.state) {
                (3, _) => {
                    self.state = PfdState::Idle;
                    self.sign = Sign::Aligned;
                    out.change(at, Sign::Aligned);
                }
                (1, PfdState::Idle) => {
                    self.state = PfdState::Up;
                    self.sign = Sign::Lead;
                    out.change(at, Sign::Lead);
                }
                (1, PfdState::Down) | (2, PfdState::Up) => self.state = PfdState::Idle,
                (2, PfdState::Idle) => {
                    self.state = PfdState::Down;
                    self.sign = Sign::Lag;
                    out.change(at, Sign::Lag);
                }
                _ => {}
            }
        }
        self.emit(&mut out, x, 1.0);
        out
    }

    fn emit(&self, out: &mut PfdStep, a: f64, b: f64) {
        match self.state {
            PfdState::Up => out.up.push(a, b),
            PfdState::Down => out.down.push(a, b),
            PfdState::Idle => {}
        }
    }
}

/// Summary of one comparison step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub sign: Sign,
    /// Time the lead or lag pulse was asserted during the step, seconds.
    pub overlap: f64,
}

/// Runs `pfd` over one step of edges and reports the pulse sign and width.
pub fn compare_phases(pfd: &mut Pfd, peer_edge: Option<f64>, own_edge: Option<f64>, dt: f64) -> Comparison {
    let s = pfd.step(peer_edge, own_edge);
    Comparison {
        sign: pfd.sign(),
        overlap: (s.up.total() + s.down.total()) * dt,
    }
}

/// Pump drive over one step: net signed on-time and total active time, both
/// as fractions of the step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PumpDrive {
    pub net: f64,
    pub active: f64,
}

impl PumpDrive {
    pub fn current(&self, i_cp: f64) -> f64 {
        i_cp * self.net
    }
}

fn breakpoints(steps: &[PfdStep], extra: Option<f64>) -> Vec<f64> {
    let mut xs = vec![0.0, 1.0];
    for s in steps {
        for (a, b) in s.up.iter().chain(s.down.iter()) {
            xs.push(a);
            xs.push(b);
        }
        xs.extend(s.sign_changes().map(|(x, _)| x));
    }
    xs.extend(extra);
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
    xs.dedup();
    xs
}

/// Parallel (AND/OR) combination of all peer comparisons for one PLL.
pub fn cs1_drive(steps: &[PfdStep]) -> PumpDrive {
    if steps.iter().all(PfdStep::is_quiet) {
        return PumpDrive::default();
    }
    let xs = breakpoints(steps, None);
    let mut drive = PumpDrive::default();
    for w in xs.windows(2) {
        let (a, b) = (w[0], w[1]);
        let m = 0.5 * (a + b);
        let mut any_leading = false;
        let mut all_up = true;
        let mut any_down = false;
        for s in steps {
            if s.sign_at(m) == Sign::Lead {
                any_leading = true;
                all_up &= s.up.contains(m);
            }
            any_down |= s.down.contains(m);
        }
        let up = any_leading && all_up;
        drive.net += (up as i32 - any_down as i32) as f64 * (b - a);
        if up || any_down {
            drive.active += b - a;
        }
    }
    drive
}

/// Pump current of the parallel scheme for one step.
pub fn cs1_pump_current(steps: &[PfdStep], i_cp: f64) -> f64 {
    cs1_drive(steps).current(i_cp)
}

/// 3-bit counter driving the serial scheme's multiplexer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cs2Mux {
    counter: u8,
    edges: u32,
    edges_per_advance: u32,
}

impl Cs2Mux {
    pub fn new(edges_per_advance: u32) -> Self {
        Self {
            counter: 0,
            edges: 0,
            edges_per_advance: edges_per_advance.max(1),
        }
    }

    pub fn counter(&self) -> u8 {
        self.counter
    }

    /// Registers one own rising edge; returns true when the counter advanced.
    pub fn on_edge(&mut self) -> bool {
        self.edges += 1;
        if self.edges >= self.edges_per_advance {
            self.edges = 0;
            self.counter = (self.counter + 1) & 0b111;
            true
        } else {
            false
        }
    }

    /// Index into the enabled-peer list currently routed to the comparator.
    pub fn selected(&self, n_peers: usize) -> Option<usize> {
        (n_peers > 0).then(|| self.counter as usize % n_peers)
    }
}

/// Selects the peer for the current interval; see [`Cs2Mux::selected`].
pub fn cs2_select(mux: &Cs2Mux, enabled_peers: &[usize]) -> Option<usize> {
    mux.selected(enabled_peers.len()).map(|i| enabled_peers[i])
}

/// Serial-scheme drive for one step. `own_edge` advances the counter at its
/// position in the step; the pulses of whichever peer is selected on each
/// side of that instant reach the pump.
pub fn cs2_drive(steps: &[PfdStep], mux: &mut Cs2Mux, own_edge: Option<f64>) -> PumpDrive {
    let before = mux.selected(steps.len());
    let switch_at = own_edge.unwrap_or(2.0);
    if own_edge.is_some() {
        mux.on_edge();
    }
    let after = mux.selected(steps.len());
    let Some(before) = before else {
        return PumpDrive::default();
    };
    let after = after.unwrap_or(before);
    if steps[before].is_quiet() && steps[after].is_quiet() {
        return PumpDrive::default();
    }
    let xs = breakpoints(&[steps[before], steps[after]], own_edge);
    let mut drive = PumpDrive::default();
    for w in xs.windows(2) {
        let (a, b) = (w[0], w[1]);
        let m = 0.5 * (a + b);
        let s = if m < switch_at { &steps[before] } else { &steps[after] };
        let (up, down) = (s.up.contains(m), s.down.contains(m));
        drive.net += (up as i32 - down as i32) as f64 * (b - a);
        if up || down {
            drive.active += b - a;
        }
    }
    drive
}

/// XOR detector drive: the pump sources while the levels differ and sinks
/// while they agree, averaged over the inputs.
pub fn xor_drive(own_level: bool, peer_levels: &[bool]) -> PumpDrive {
    if peer_levels.is_empty() {
        return PumpDrive::default();
    }
    let net = peer_levels
        .iter()
        .map(|&p| if p != own_level { 1.0 } else { -1.0 })
        .sum::<f64>()
        / peer_levels.len() as f64;
    PumpDrive { net, active: 1.0 }
}
