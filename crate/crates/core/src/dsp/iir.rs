use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Second-order section, transposed direct form II.
#[derive(Debug, Clone, Copy)]
pub struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
    z1: f64,
    z2: f64,
}

impl Biquad {
    fn normalised(b: [f64; 3], a: [f64; 3]) -> Self {
        Self {
            b0: b[0] / a[0],
            b1: b[1] / a[0],
            b2: b[2] / a[0],
            a1: a[1] / a[0],
            a2: a[2] / a[0],
            z1: 0.0,
            z2: 0.0,
        }
    }

    pub fn lowpass(fc: f64, q: f64, fs: f64) -> Self {
        let w = 2.0 * PI * fc / fs;
        let (s, c) = w.sin_cos();
        let alpha = s / (2.0 * q);
        Self::normalised(
            [(1.0 - c) / 2.0, 1.0 - c, (1.0 - c) / 2.0],
            [1.0 + alpha, -2.0 * c, 1.0 - alpha],
        )
    }

    pub fn highpass(fc: f64, q: f64, fs: f64) -> Self {
        let w = 2.0 * PI * fc / fs;
        let (s, c) = w.sin_cos();
        let alpha = s / (2.0 * q);
        Self::normalised(
            [(1.0 + c) / 2.0, -(1.0 + c), (1.0 + c) / 2.0],
            [1.0 + alpha, -2.0 * c, 1.0 - alpha],
        )
    }

    pub fn butterworth_highpass(fc: f64, fs: f64) -> Self {
        Self::highpass(fc, FRAC_1_SQRT_2, fs)
    }

    pub fn reset(&mut self) {
        self.z1 = 0.0;
        self.z2 = 0.0;
    }

    #[inline]
    pub fn tick(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.z1;
        self.z1 = self.b1 * x - self.a1 * y + self.z2;
        self.z2 = self.b2 * x - self.a2 * y;
        y
    }

    pub fn process(&mut self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.tick(v)).collect()
    }
}

/// Fourth-order Butterworth lowpass (two cascaded sections).
#[derive(Debug, Clone, Copy)]
pub struct ButterworthLowpass4 {
    sections: [Biquad; 2],
}

impl ButterworthLowpass4 {
    pub fn new(fc: f64, fs: f64) -> Self {
        Self {
            sections: [
                Biquad::lowpass(fc, 0.541_196_100_146_197, fs),
                Biquad::lowpass(fc, 1.306_562_964_876_376_6, fs),
            ],
        }
    }

    #[inline]
    pub fn tick(&mut self, x: f64) -> f64 {
        let y = self.sections[0].tick(x);
        self.sections[1].tick(y)
    }
}

/// First-order highpass from the bilinear transform.
#[derive(Debug, Clone, Copy)]
pub struct OnePoleHighpass {
    b0: f64,
    a1: f64,
    x1: f64,
    y1: f64,
}

impl OnePoleHighpass {
    pub fn new(fc: f64, fs: f64) -> Self {
        let k = (PI * fc / fs).tan();
        Self {
            b0: 1.0 / (1.0 + k),
            a1: (k - 1.0) / (k + 1.0),
            x1: 0.0,
            y1: 0.0,
        }
    }

    #[inline]
    pub fn tick(&mut self, x: f64) -> f64 {
        let y = self.b0 * (x - self.x1) - self.a1 * self.y1;
        self.x1 = x;
        self.y1 = y;
        y
    }

    pub fn process(&mut self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.tick(v)).collect()
    }

    /// Magnitude response at `f` Hz.
    pub fn magnitude(fc: f64, f: f64, fs: f64) -> f64 {
        // Bilinear warping maps f onto the analog prototype frequency.
        let k = (PI * fc / fs).tan();
        let w = (PI * f / fs).tan();
        w / (w * w + k * k).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gain_at(f: f64, fs: f64, mut filt: impl FnMut(f64) -> f64) -> f64 {
        let n = (fs as usize) / 2;
        let y: Vec<f64> = (0..n)
            .map(|i| filt((2.0 * PI * f * i as f64 / fs).sin()))
            .collect();
        let tail = &y[n / 2..];
        (tail.iter().map(|v| v * v).sum::<f64>() / tail.len() as f64 * 2.0).sqrt()
    }

    #[test]
    fn butterworth4_is_3db_down_at_cutoff() {
        let fs = 44_100.0;
        let mut lp = ButterworthLowpass4::new(1000.0, fs);
        let g = gain_at(1000.0, fs, |x| lp.tick(x));
        assert!((g - FRAC_1_SQRT_2).abs() < 0.01, "{g}");
        let mut lp = ButterworthLowpass4::new(1000.0, fs);
        assert!(gain_at(4000.0, fs, |x| lp.tick(x)) < 0.01);
    }

    #[test]
    fn one_pole_highpass_matches_analytic_response() {
        let fs = 44_100.0;
        for f in [200.0, 1200.0, 6000.0] {
            let mut hp = OnePoleHighpass::new(1250.0, fs);
            let g = gain_at(f, fs, |x| hp.tick(x));
            assert!((g - OnePoleHighpass::magnitude(1250.0, f, fs)).abs() < 5e-3);
        }
    }
}
