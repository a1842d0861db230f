//! RIFF/WAVE reading and writing for PCM16 and 32-bit float.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use sfisep_core::AudioBuffer;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WavEncoding {
    Pcm16,
    #[default]
    Float32,
}

fn convert(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::FormatError(m) => Error::Parse(format!("{}: {m}", path.display())),
        hound::Error::Unsupported => Error::UnsupportedFormat(format!("{}: unsupported WAV encoding", path.display())),
        other => Error::Parse(format!("{}: {other}", path.display())),
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    // once the file is open, every failure is in its contents
    let parse = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::Parse(format!("{}: {io}", path.display())),
        other => convert(path, other),
    };
    let reader = WavReader::new(std::io::BufReader::new(file)).map_err(parse)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if !(1..=2).contains(&channels) {
        return Err(Error::UnsupportedFormat(format!("{}: {channels} channels", path.display())));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(parse)?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(parse)?,
        (format, bits) => {
            return Err(Error::UnsupportedFormat(format!("{}: {bits}-bit {format:?} samples", path.display())))
        }
    };
    let mut out = vec![Vec::with_capacity(samples.len() / channels); channels];
    for frame in samples.chunks_exact(channels) {
        for (c, v) in frame.iter().enumerate() {
            out[c].push(*v);
        }
    }
    Ok(AudioBuffer::new(spec.sample_rate, out)?)
}

pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer, encoding: WavEncoding) -> Result<()> {
    let path = path.as_ref();
    let channels = audio.num_channels();
    if !(1..=2).contains(&channels) {
        return Err(Error::UnsupportedFormat(format!("{channels} channels")));
    }
    let (bits_per_sample, sample_format) = match encoding {
        WavEncoding::Pcm16 => (16, SampleFormat::Int),
        WavEncoding::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec { channels: channels as u16, sample_rate: audio.fs_hz(), bits_per_sample, sample_format };
    let mut w = WavWriter::create(path, spec).map_err(|e| convert(path, e))?;
    for i in 0..audio.len() {
        for c in 0..channels {
            let v = audio.channel(c)[i];
            match encoding {
                WavEncoding::Pcm16 => w.write_sample((v * 32768.0).round().clamp(-32768.0, 32767.0) as i16),
                WavEncoding::Float32 => w.write_sample(v as f32),
            }
            .map_err(|e| convert(path, e))?;
        }
    }
    w.finalize().map_err(|e| convert(path, e))
}
