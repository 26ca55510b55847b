//! Energy-decay analysis of impulse responses.

use super::rir::RoomImpulseResponse;
use crate::dsp::Biquad;
use crate::error::{Error, Result};

/// Backward-integrated energy (Schroeder) curve in dB re total energy.
pub fn schroeder_curve_db(taps: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut curve: Vec<f64> = taps
        .iter()
        .rev()
        .map(|v| {
            acc += v * v;
            acc
        })
        .collect();
    curve.reverse();
    let total = curve.first().copied().unwrap_or(0.0);
    curve
        .into_iter()
        .map(|e| if total > 0.0 { 10.0 * (e / total).log10() } else { f64::NEG_INFINITY })
        .collect()
}

/// RT60 from a straight-line fit of the Schroeder curve between -5 and
/// -35 dB, extrapolated to 60 dB of decay.
///
/// The response is first high-passed at 100 Hz: image-source trains are
/// all positive, so their DC content grows with echo density and would
/// otherwise dominate the late broadband energy.
pub fn estimate_rt60(rir: &RoomImpulseResponse) -> Result<f64> {
    let fs = rir.sample_rate as f64;
    let mut hp = Biquad::butterworth_highpass(100.0, fs);
    let filtered = hp.process(&rir.taps);
    let curve = schroeder_curve_db(&filtered);
    let start = curve.iter().position(|&v| v <= -5.0);
    let end = curve.iter().position(|&v| v <= -35.0);
    let (start, end) = match (start, end) {
        (Some(s), Some(e)) if e > s + 1 => (s, e),
        _ => {
            return Err(Error::InvalidArgument(
                "impulse response does not decay by 35 dB".into(),
            ))
        }
    };
    let n = (end - start) as f64;
    let (mut st, mut sv, mut stt, mut stv) = (0.0, 0.0, 0.0, 0.0);
    for (i, &v) in curve[start..end].iter().enumerate() {
        let t = (start + i) as f64 / fs;
        st += t;
        sv += v;
        stt += t * t;
        stv += t * v;
    }
    let slope = (n * stv - st * sv) / (n * stt - st * st);
    Ok(-60.0 / slope)
}
