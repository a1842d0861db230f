use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};

/// Multichannel time-domain audio at a fixed sampling frequency.
///
/// Samples are stored planar, one `Vec` per channel, all of equal length.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AudioBuffer {
    fs_hz: u32,
    channels: Vec<Vec<f64>>,
}

impl AudioBuffer {
    pub fn new(fs_hz: u32, channels: Vec<Vec<f64>>) -> Result<Self> {
        if fs_hz == 0 {
            return Err(invalid("sampling frequency must be positive"));
        }
        let Some(first) = channels.first() else {
            return Err(invalid("audio needs at least one channel"));
        };
        let len = first.len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(invalid("channels differ in length"));
        }
        Ok(Self { fs_hz, channels })
    }

    pub fn mono(fs_hz: u32, samples: Vec<f64>) -> Result<Self> {
        Self::new(fs_hz, vec![samples])
    }

    pub fn zeros(fs_hz: u32, num_channels: usize, len: usize) -> Result<Self> {
        Self::new(fs_hz, vec![vec![0.0; len]; num_channels])
    }

    pub fn fs_hz(&self) -> u32 {
        self.fs_hz
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.fs_hz as f64
    }

    pub fn channel(&self, index: usize) -> &[f64] {
        &self.channels[index]
    }

    pub fn channel_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self.channels[index]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// Iterates every sample of every channel, channel by channel.
    pub fn samples(&self) -> impl Iterator<Item = f64> + '_ {
        self.channels.iter().flatten().copied()
    }

    pub fn peak(&self) -> f64 {
        self.samples().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn energy(&self) -> f64 {
        self.samples().map(|v| v * v).sum()
    }

    pub fn scale(&mut self, gain: f64) {
        self.channels.iter_mut().flatten().for_each(|v| *v *= gain);
    }

    pub fn scaled(&self, gain: f64) -> Self {
        let mut out = self.clone();
        out.scale(gain);
        out
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.fs_hz != other.fs_hz {
            return Err(invalid(format!(
                "sampling frequencies differ: {} vs {}",
                self.fs_hz, other.fs_hz
            )));
        }
        if self.num_channels() != other.num_channels() || self.len() != other.len() {
            return Err(invalid(format!(
                "audio shapes differ: {}x{} vs {}x{}",
                self.num_channels(),
                self.len(),
                other.num_channels(),
                other.len()
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_shape(other)?;
        let channels = self
            .channels
            .iter()
            .zip(&other.channels)
            .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect())
            .collect();
        Ok(Self { fs_hz: self.fs_hz, channels })
    }

    /// Samples `[start, start + len)` of every channel.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.len() {
            return Err(invalid("slice exceeds audio length"));
        }
        let channels = self.channels.iter().map(|c| c[start..start + len].to_vec()).collect();
        Ok(Self { fs_hz: self.fs_hz, channels })
    }

    /// Average of all channels, as a single channel.
    pub fn downmix(&self) -> Vec<f64> {
        let n = self.num_channels() as f64;
        (0..self.len())
            .map(|i| self.channels.iter().map(|c| c[i]).sum::<f64>() / n)
            .collect()
    }

    pub(crate) fn assert_same_shape(&self, other: &Self) -> Result<()> {
        self.check_same_shape(other)
    }
}
