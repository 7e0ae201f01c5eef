/// One step of a PLL's binary output.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OutputSample {
    pub level: bool,
    /// Rising-edge position within the step, fraction in `(0, 1]`.
    pub edge: Option<f64>,
}

/// Integer-sample delay applied to a PLL's exported output, modeling the
/// tristate-buffer delay chain. Length 0 passes samples straight through.
#[derive(Debug, Clone)]
pub struct DelayLine {
    buf: Vec<OutputSample>,
    pos: usize,
}

impl DelayLine {
    pub fn new(length: usize) -> Self {
        Self {
            buf: vec![OutputSample::default(); length],
            pos: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    /// Stores `sample` and returns the one written `len()` steps earlier.
    pub fn push(&mut self, sample: OutputSample) -> OutputSample {
        if self.buf.is_empty() {
            return sample;
        }
        let out = std::mem::replace(&mut self.buf[self.pos], sample);
        self.pos = (self.pos + 1) % self.buf.len();
        out
    }
}
