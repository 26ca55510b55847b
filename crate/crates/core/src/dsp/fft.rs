use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Smallest 7-smooth integer not below `n`.
pub fn smooth_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5, 7] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

fn forward(planner: &mut FftPlanner<f64>, x: &[f64], n: usize) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(n, Complex64::new(0.0, 0.0));
    planner.plan_fft_forward(n).process(&mut buf);
    buf
}

fn inverse_real(planner: &mut FftPlanner<f64>, mut buf: Vec<Complex64>, scale: f64) -> Vec<f64> {
    let n = buf.len();
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.into_iter().map(|c| c.re * scale).collect()
}

/// Full linear convolution, length `a.len() + b.len() - 1`.
pub fn fft_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= 32 {
        let mut out = vec![0.0; out_len];
        for (i, &x) in a.iter().enumerate() {
            for (j, &h) in b.iter().enumerate() {
                out[i + j] += x * h;
            }
        }
        return out;
    }
    let n = smooth_len(out_len);
    let mut planner = FftPlanner::new();
    let fa = forward(&mut planner, a, n);
    let fb = forward(&mut planner, b, n);
    let prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    let mut out = inverse_real(&mut planner, prod, 1.0 / n as f64);
    out.truncate(out_len);
    out
}

/// Band-limited resampling through the DFT. Output length is
/// `round(len * to / from)`.
pub fn resample(x: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to || x.is_empty() {
        return x.to_vec();
    }
    let g = gcd(from as usize, to as usize);
    let (up, down) = (to as usize / g, from as usize / g);
    let target_len = ((x.len() as f64) * to as f64 / from as f64).round() as usize;
    // Pad so that the input length is a multiple of `down` and both
    // transform sizes stay 7-smooth.
    let blocks = smooth_len(x.len().div_ceil(down) + 1);
    let n_in = blocks * down;
    let n_out = blocks * up;
    let mut planner = FftPlanner::new();
    let spec = forward(&mut planner, x, n_in);
    let mut out = vec![Complex64::new(0.0, 0.0); n_out];
    let keep = n_in.min(n_out);
    let half = keep / 2;
    for k in 0..half {
        out[k] = spec[k];
        if k > 0 {
            out[n_out - k] = spec[n_in - k];
        }
    }
    if keep % 2 == 0 {
        // Split the shared Nyquist bin so the result stays real.
        let ny = spec[half] * 0.5;
        if n_out > n_in {
            out[half] = ny;
            out[n_out - half] = ny;
        } else {
            out[half] = Complex64::new(spec[half].re, 0.0);
        }
    } else {
        out[half] = spec[half];
        out[n_out - half] = spec[n_in - half];
    }
    let mut y = inverse_real(&mut planner, out, 1.0 / n_in as f64);
    y.truncate(target_len);
    y
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Lag (in samples) of `degraded` relative to `reference` that maximises
/// their cross-correlation, searched over `-max_lag..=max_lag`. Positive
/// means `degraded` arrives late.
pub fn align_by_xcorr(reference: &[f64], degraded: &[f64], max_lag: usize) -> isize {
    if reference.is_empty() || degraded.is_empty() {
        return 0;
    }
    let n = smooth_len(reference.len() + degraded.len() + 1);
    let mut planner = FftPlanner::new();
    let fr = forward(&mut planner, reference, n);
    let fd = forward(&mut planner, degraded, n);
    let cross: Vec<Complex64> = fr.iter().zip(&fd).map(|(r, d)| r.conj() * d).collect();
    let corr = inverse_real(&mut planner, cross, 1.0 / n as f64);
    let mut best = (0isize, f64::NEG_INFINITY);
    let max_lag = max_lag as isize;
    for lag in -max_lag..=max_lag {
        let idx = if lag >= 0 {
            lag as usize
        } else {
            (n as isize + lag) as usize
        };
        if corr[idx] > best.1 {
            best = (lag, corr[idx]);
        }
    }
    best.0
}

/// Zero-phase FFT filterbank whose bands sum back to the input.
///
/// Crossovers use the magnitude-squared response of an order-`order`
/// Butterworth pair, `|L|^2 + |H|^2 = 1`, arranged as a tree
/// (`band_k = H_1 .. H_{k-1} L_k`) so the masks sum to one at every bin.
/// With `order = 3` each section is sixth order in magnitude.
#[derive(Debug, Clone)]
pub struct BandSplitter {
    crossovers: Vec<f64>,
    order: i32,
    sample_rate: f64,
    padding: usize,
}

impl BandSplitter {
    pub fn new(crossovers: &[f64], order: i32, sample_rate: u32) -> Self {
        Self {
            crossovers: crossovers.to_vec(),
            order,
            sample_rate: sample_rate as f64,
            padding: 8192,
        }
    }

    pub fn band_count(&self) -> usize {
        self.crossovers.len() + 1
    }

    fn masks(&self, n: usize) -> Vec<Vec<f64>> {
        let bands = self.band_count();
        let mut masks = vec![vec![0.0; n]; bands];
        for k in 0..n {
            let bin = k.min(n - k) as f64;
            let f = bin * self.sample_rate / n as f64;
            let mut rest = 1.0;
            for (b, &fc) in self.crossovers.iter().enumerate() {
                let r = (f / fc).powi(2 * self.order);
                let low = 1.0 / (1.0 + r);
                masks[b][k] = rest * low;
                rest *= 1.0 - low;
            }
            masks[bands - 1][k] = rest;
        }
        masks
    }

    /// Split `x` into bands; each band has the input's length.
    pub fn split(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let n = smooth_len(x.len() + self.padding);
        let mut planner = FftPlanner::new();
        let spec = forward(&mut planner, x, n);
        let masks = self.masks(n);
        let inverse = planner.plan_fft_inverse(n);
        let scale = 1.0 / n as f64;
        let mut bands = Vec::with_capacity(masks.len());
        // Band spectra are Hermitian, so two bands share one complex inverse
        // transform: the first lands in the real part, the second in the
        // imaginary part.
        for pair in masks.chunks(2) {
            let mut buf: Vec<Complex64> = match pair {
                [a, b] => spec
                    .iter()
                    .zip(a.iter().zip(b))
                    .map(|(s, (&ma, &mb))| s * Complex64::new(ma, 0.0) + s * Complex64::new(0.0, mb))
                    .collect(),
                [a] => spec.iter().zip(a).map(|(s, &m)| s * m).collect(),
                _ => unreachable!(),
            };
            inverse.process(&mut buf);
            bands.push(buf[..x.len()].iter().map(|c| c.re * scale).collect());
            if pair.len() == 2 {
                bands.push(buf[..x.len()].iter().map(|c| c.im * scale).collect());
            }
        }
        bands
    }

    /// Power response of band `band` at frequency `f`.
    pub fn band_power_response(&self, band: usize, f: f64) -> f64 {
        let mut rest = 1.0;
        for (b, &fc) in self.crossovers.iter().enumerate() {
            let low = 1.0 / (1.0 + (f / fc).powi(2 * self.order));
            if b == band {
                return rest * low;
            }
            rest *= 1.0 - low;
        }
        rest
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn convolution_matches_direct_sum() {
        let a: Vec<f64> = (0..300).map(|i| ((i * 7) % 13) as f64 - 6.0).collect();
        let b: Vec<f64> = (0..100).map(|i| ((i * 3) % 5) as f64 * 0.1).collect();
        let fast = fft_convolve(&a, &b);
        let mut slow = vec![0.0; a.len() + b.len() - 1];
        for i in 0..a.len() {
            for j in 0..b.len() {
                slow[i + j] += a[i] * b[j];
            }
        }
        for (x, y) in fast.iter().zip(&slow) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn resample_keeps_in_band_tone() {
        let n = 44_100;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * PI * 1000.0 * i as f64 / 44_100.0).sin())
            .collect();
        let y = resample(&x, 44_100, 10_000);
        assert_eq!(y.len(), 10_000);
        for (i, v) in y.iter().enumerate().skip(100).take(9_800) {
            let expect = (2.0 * PI * 1000.0 * i as f64 / 10_000.0).sin();
            assert!((v - expect).abs() < 1e-3, "{i}: {v} vs {expect}");
        }
    }

    #[test]
    fn xcorr_finds_delay() {
        let x: Vec<f64> = (0..2000).map(|i| ((i * 7919) % 101) as f64 - 50.0).collect();
        let mut d = vec![0.0; 37];
        d.extend_from_slice(&x);
        assert_eq!(align_by_xcorr(&x, &d, 100), 37);
        assert_eq!(align_by_xcorr(&d, &x, 100), -37);
    }

    #[test]
    fn band_splitter_reconstructs() {
        let x: Vec<f64> = (0..5000).map(|i| (((i * 7919) % 211) as f64 - 105.0) / 105.0).collect();
        let fb = BandSplitter::new(&crate::dsp::audiogram_crossovers(), 3, 44_100);
        let bands = fb.split(&x);
        assert_eq!(bands.len(), 6);
        for n in 0..x.len() {
            let s: f64 = bands.iter().map(|b| b[n]).sum();
            assert!((s - x[n]).abs() < 1e-9);
        }
    }
}
