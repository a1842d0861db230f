//! The SFIS model container.
//!
//! Layout: `b"SFIS"`, format version (u32 LE), header length (u32 LE), UTF-8
//! JSON header, then the tensor payload. Core parameters are stored as f32
//! LE and whitening statistics as f64 LE, in manifest order.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sfisep_core::features::WhiteningStats;
use sfisep_core::filterbank::FrameDuration;
use sfisep_core::network::{CoreConfig, CoreParameters};
use sfisep_core::pipeline::{ChannelMode, ModelSettings, SeparationModel};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SFIS";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rational {
    pub numerator: u64,
    pub denominator: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
}

impl DType {
    fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    /// Byte offset from the start of the payload.
    pub offset: usize,
}

impl TensorEntry {
    pub fn num_bytes(&self) -> usize {
        self.shape.iter().product::<usize>() * self.dtype.size()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub frame_duration_s: Rational,
    pub fs_hz: u32,
    pub alpha: f64,
    pub channel_mode: ChannelMode,
    pub level_reference_hz: Option<u32>,
    pub core_config: CoreConfig,
    pub whitening_sample_count: u64,
    pub tensors: Vec<TensorEntry>,
}

impl ModelHeader {
    pub fn param_count(&self) -> usize {
        sfisep_core::network::param_count(&self.core_config)
    }

    pub fn payload_bytes(&self) -> usize {
        self.tensors.iter().map(TensorEntry::num_bytes).sum()
    }
}

fn manifest(config: &CoreConfig, num_bins: usize) -> Result<Vec<TensorEntry>> {
    let params = CoreParameters::<f32>::zeros(*config)?;
    let mut out = Vec::new();
    let mut offset = 0;
    let mut push = |name: String, dtype: DType, shape: Vec<usize>| {
        let entry = TensorEntry { name, dtype, shape, offset };
        offset += entry.num_bytes();
        out.push(entry);
    };
    for (i, l) in params.layouts().iter().enumerate() {
        let (cin, cout) = (l.in_channels, l.out_channels);
        push(format!("block{i}.weight"), DType::F32, vec![config.kernel_time, config.kernel_freq, cin, cout]);
        push(format!("block{i}.bias"), DType::F32, vec![cout]);
        push(format!("block{i}.norm_gain"), DType::F32, vec![cout]);
        push(format!("block{i}.norm_bias"), DType::F32, vec![cout]);
    }
    push("mask_scale".into(), DType::F32, vec![1]);
    push("mask_offset".into(), DType::F32, vec![1]);
    push("whitening.mean".into(), DType::F64, vec![num_bins]);
    push("whitening.std".into(), DType::F64, vec![num_bins]);
    Ok(out)
}

pub fn header_of(model: &SeparationModel<f32>) -> Result<ModelHeader> {
    let s = model.settings();
    Ok(ModelHeader {
        frame_duration_s: Rational {
            numerator: s.frame_duration.numerator(),
            denominator: s.frame_duration.denominator(),
        },
        fs_hz: s.fs_hz,
        alpha: s.alpha,
        channel_mode: s.channel_mode,
        level_reference_hz: s.level_reference_hz,
        core_config: *model.core_config(),
        whitening_sample_count: model.whitening().sample_count,
        tensors: manifest(model.core_config(), model.geometry().num_bins())?,
    })
}

pub fn model_to_bytes(model: &SeparationModel<f32>) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&header_of(model)?)?;
    let header_len = u32::try_from(header.len()).map_err(|_| Error::Header("header too large".into()))?;
    let mut out = Vec::with_capacity(12 + header.len() + 4 * model.params().len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(&header);
    // the flat parameter order is the manifest order
    for v in model.params().data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in model.whitening().mean.iter().chain(&model.whitening().std) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize) -> Result<&'a [u8]> {
    let end = *at + n;
    if end > bytes.len() {
        return Err(Error::Truncated { expected: end, found: bytes.len() });
    }
    let out = &bytes[*at..end];
    *at = end;
    Ok(out)
}

fn read_u32(bytes: &[u8], at: &mut usize) -> Result<u32> {
    Ok(u32::from_le_bytes(take(bytes, at, 4)?.try_into().unwrap()))
}

/// Parse only the magic, version and JSON header.
pub fn read_header(bytes: &[u8]) -> Result<(ModelHeader, usize)> {
    let mut at = 0;
    let magic: [u8; 4] = take(bytes, &mut at, 4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = read_u32(bytes, &mut at)?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let len = read_u32(bytes, &mut at)? as usize;
    let header: ModelHeader =
        serde_json::from_slice(take(bytes, &mut at, len)?).map_err(|e| Error::Header(e.to_string()))?;
    Ok((header, at))
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<SeparationModel<f32>> {
    let (header, start) = read_header(bytes)?;
    let duration = FrameDuration::new(header.frame_duration_s.numerator, header.frame_duration_s.denominator)?;
    let geometry = sfisep_core::filterbank::frame_geometry(duration, header.fs_hz)?;
    let expected = manifest(&header.core_config, geometry.num_bins())?;
    if header.tensors != expected {
        return Err(Error::Header("tensor manifest does not match the core configuration".into()));
    }
    let payload = &bytes[start..];
    let need = header.payload_bytes();
    if payload.len() < need {
        return Err(Error::Truncated { expected: start + need, found: bytes.len() });
    }
    if payload.len() > need {
        return Err(Error::Parse(format!("{} trailing bytes after the tensor payload", payload.len() - need)));
    }
    let n_params = header.param_count();
    let params: Vec<f32> =
        payload[..4 * n_params].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    let stats: Vec<f64> =
        payload[4 * n_params..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let bins = geometry.num_bins();
    let whitening = WhiteningStats {
        mean: stats[..bins].to_vec(),
        std: stats[bins..].to_vec(),
        fs_hz: header.fs_hz,
        num_bins: bins,
        sample_count: header.whitening_sample_count,
    };
    let settings = ModelSettings {
        frame_duration: duration,
        fs_hz: header.fs_hz,
        alpha: header.alpha,
        channel_mode: header.channel_mode,
        level_reference_hz: header.level_reference_hz,
    };
    Ok(SeparationModel::from_parts(
        settings,
        CoreParameters::from_vec(header.core_config, params)?,
        whitening,
    )?)
}

pub fn save_model(model: &SeparationModel<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SeparationModel<f32>> {
    let path = path.as_ref();
    model_from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Header of a model file without decoding its tensors.
pub fn inspect_model(path: impl AsRef<Path>) -> Result<ModelHeader> {
    let path = path.as_ref();
    Ok(read_header(&std::fs::read(path).map_err(|e| Error::io(path, e))?)?.0)
}
