use crate::error::{Error, Result};

/// Second-order IIR section with `a0` normalized to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    pub const IDENTITY: Biquad = Biquad { b0: 1.0, b1: 0.0, b2: 0.0, a1: 0.0, a2: 0.0 };

    pub fn from_raw(b: [f64; 3], a: [f64; 3]) -> Result<Self> {
        if a[0] == 0.0 || !b.iter().chain(&a).all(|v| v.is_finite()) {
            return Err(Error::UnstableFilter(format!("bad coefficients b={b:?} a={a:?}")));
        }
        let q = Biquad { b0: b[0] / a[0], b1: b[1] / a[0], b2: b[2] / a[0], a1: a[1] / a[0], a2: a[2] / a[0] };
        if !q.is_stable() {
            return Err(Error::UnstableFilter(format!("poles outside unit circle: a1={} a2={}", q.a1, q.a2)));
        }
        Ok(q)
    }

    /// Stability triangle test for `1 + a1 z^-1 + a2 z^-2`.
    pub fn is_stable(&self) -> bool {
        self.a2.abs() < 1.0 && self.a1.abs() < 1.0 + self.a2
    }

    /// Magnitude response at `freq` for sample rate `rate`, in dB.
    pub fn gain_db(&self, freq: f64, rate: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * freq / rate;
        let (c1, s1) = (w.cos(), -w.sin());
        let (c2, s2) = ((2.0 * w).cos(), -(2.0 * w).sin());
        let num = (self.b0 + self.b1 * c1 + self.b2 * c2, self.b1 * s1 + self.b2 * s2);
        let den = (1.0 + self.a1 * c1 + self.a2 * c2, self.a1 * s1 + self.a2 * s2);
        10.0 * ((num.0 * num.0 + num.1 * num.1) / (den.0 * den.0 + den.1 * den.1)).log10()
    }

    pub fn process(&self, input: &[f64]) -> Vec<f64> {
        let mut state = BiquadState::default();
        input.iter().map(|&x| state.step(self, x)).collect()
    }
}

/// Transposed direct form II state.
#[derive(Debug, Clone, Copy, Default)]
pub struct BiquadState {
    z1: f64,
    z2: f64,
}

impl BiquadState {
    #[inline]
    pub fn step(&mut self, q: &Biquad, x: f64) -> f64 {
        let y = q.b0 * x + self.z1;
        self.z1 = q.b1 * x - q.a1 * y + self.z2;
        self.z2 = q.b2 * x - q.a2 * y;
        y
    }
}
