//! WAV input, mono mixdown and linear-interpolation resampling.

use std::path::Path;

/// Mono PCM in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Pcm {
    pub rate: u32,
    pub samples: Vec<f32>,
}

impl Pcm {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.rate as f64
    }
}

pub fn read_wav(path: &Path) -> Result<Pcm, String> {
    let mut reader = hound::WavReader::open(path).map_err(|e| e.to_string())?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?,
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 / scale))
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?
        }
    };
    let samples = interleaved
        .chunks(channels)
        .map(|frame| frame.iter().sum::<f32>() / frame.len() as f32)
        .collect();
    Ok(Pcm {
        rate: spec.sample_rate,
        samples,
    })
}

/// 16-bit mono WAV.
pub fn write_wav(path: &Path, pcm: &Pcm) -> Result<(), String> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: pcm.rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| e.to_string())?;
    for &s in &pcm.samples {
        let v = (s.clamp(-1.0, 1.0) * i16::MAX as f32).round() as i16;
        w.write_sample(v).map_err(|e| e.to_string())?;
    }
    w.finalize().map_err(|e| e.to_string())
}

/// Resamples by linear interpolation between neighbouring input samples.
/// The output keeps the input duration, rounded to whole samples.
pub fn resample_linear(pcm: &Pcm, rate: u32) -> Pcm {
    if pcm.rate == rate || pcm.samples.is_empty() {
        return Pcm {
            rate,
            samples: pcm.samples.clone(),
        };
    }
    let n_in = pcm.samples.len();
    let n_out = ((n_in as f64) * rate as f64 / pcm.rate as f64).round() as usize;
    let step = pcm.rate as f64 / rate as f64;
    let samples = (0..n_out)
        .map(|i| {
            let pos = i as f64 * step;
            let k = pos.floor() as usize;
            if k + 1 >= n_in {
                return pcm.samples[n_in - 1];
            }
            let frac = (pos - k as f64) as f32;
            pcm.samples[k] * (1.0 - frac) + pcm.samples[k + 1] * frac
        })
        .collect();
    Pcm { rate, samples }
}
