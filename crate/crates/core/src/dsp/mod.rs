//! Signal-processing plumbing shared by the renderer, the hearing models and
//! the metrics.

pub mod fft;
pub mod iir;

pub use fft::{align_by_xcorr, fft_convolve, resample, BandSplitter};
pub use iir::{Biquad, ButterworthLowpass4, OnePoleHighpass};

/// Digital full scale mapped onto the acoustic level scale: a signal with
/// RMS 1.0 (0 dBFS RMS) is taken to be 100 dB SPL.
pub const FULL_SCALE_DB_SPL: f64 = 100.0;

/// Dataset sample rate.
pub const SAMPLE_RATE: u32 = 44_100;

/// Audiometric frequencies, Hz.
pub const AUDIOGRAM_FREQS: [f64; 6] = [250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0];

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

pub fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn peak(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

pub fn amplitude_to_db(a: f64) -> f64 {
    20.0 * a.log10()
}

pub fn power_to_db(p: f64) -> f64 {
    10.0 * p.log10()
}

/// RMS amplitude that corresponds to `level` dB SPL.
pub fn spl_to_rms(level: f64) -> f64 {
    db_to_amplitude(level - FULL_SCALE_DB_SPL)
}

/// Level in dB SPL of a mean-square power.
pub fn power_to_spl(p: f64) -> f64 {
    FULL_SCALE_DB_SPL + power_to_db(p)
}

/// Geometric crossover frequencies between adjacent audiogram bands.
pub fn audiogram_crossovers() -> [f64; 5] {
    let f = AUDIOGRAM_FREQS;
    std::array::from_fn(|i| (f[i] * f[i + 1]).sqrt())
}

/// 64-bit FNV-1a, used to derive stable per-item seeds from string ids.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Combine a seed with further keys into a well-mixed 64-bit seed.
pub fn mix_seed(seed: u64, keys: &[&str]) -> u64 {
    let mut s = splitmix(seed);
    for k in keys {
        s = splitmix(s ^ fnv1a(k.as_bytes()));
    }
    s
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
