//! WAV file I/O. Everything written is 32-bit IEEE float, little-endian.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};

/// De-interleaved audio.
#[derive(Debug, Clone, PartialEq)]
pub struct WavAudio {
    pub sample_rate: u32,
    pub channels: Vec<Vec<f64>>,
}

impl WavAudio {
    pub fn frames(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn mono(&self) -> Vec<f64> {
        let n = self.channels.len().max(1) as f64;
        (0..self.frames())
            .map(|i| self.channels.iter().map(|c| c[i]).sum::<f64>() / n)
            .collect()
    }
}

fn hound_err(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::format(path, other),
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<WavAudio> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|e| hound_err(path, e))?;
    let spec = reader.spec();
    let nch = spec.channels as usize;
    if nch == 0 {
        return Err(Error::format(path, "no channels"));
    }
    let interleaved: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| hound_err(path, e))?,
        SampleFormat::Int => {
            let scale = 2f64.powi(spec.bits_per_sample as i32 - 1);
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| hound_err(path, e))?
        }
    };
    let frames = interleaved.len() / nch;
    let channels = (0..nch)
        .map(|c| (0..frames).map(|i| interleaved[i * nch + c]).collect())
        .collect();
    Ok(WavAudio {
        sample_rate: spec.sample_rate,
        channels,
    })
}

pub fn write_wav(path: impl AsRef<Path>, sample_rate: u32, channels: &[&[f64]]) -> Result<()> {
    let path = path.as_ref();
    if channels.is_empty() {
        return Err(Error::InvalidArgument("no channels to write".into()));
    }
    let frames = channels[0].len();
    if channels.iter().any(|c| c.len() != frames) {
        return Err(Error::InvalidArgument("channels differ in length".into()));
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let spec = WavSpec {
        channels: channels.len() as u16,
        sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut w = WavWriter::create(path, spec).map_err(|e| hound_err(path, e))?;
    for i in 0..frames {
        for c in channels {
            w.write_sample(c[i] as f32).map_err(|e| hound_err(path, e))?;
        }
    }
    w.finalize().map_err(|e| hound_err(path, e))
}

pub fn write_mono(path: impl AsRef<Path>, sample_rate: u32, x: &[f64]) -> Result<()> {
    write_wav(path, sample_rate, &[x])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let l = [0.5, -0.25, 0.125];
        let r = [0.0, 1.0, -1.0];
        write_wav(&p, 44_100, &[&l, &r]).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[0..4], b"RIFF");
        assert_eq!(&bytes[8..12], b"WAVE");
        // IEEE float (3), either directly or as the EXTENSIBLE sub-format.
        let tag = u16::from_le_bytes([bytes[20], bytes[21]]);
        let float = match tag {
            3 => true,
            0xFFFE => u16::from_le_bytes([bytes[44], bytes[45]]) == 3,
            _ => false,
        };
        assert!(float, "format tag {tag:#x}");
        assert_eq!(u16::from_le_bytes([bytes[34], bytes[35]]), 32);
        let back = read_wav(&p).unwrap();
        assert_eq!(back.sample_rate, 44_100);
        assert_eq!(back.channels, vec![l.to_vec(), r.to_vec()]);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = read_wav("/nonexistent/x.wav").unwrap_err();
        assert_eq!(err.class(), crate::ErrorClass::Io);
    }
}
