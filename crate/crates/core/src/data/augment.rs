//! Per-epoch randomization of training examples.

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::Rng;

use super::Example;
use crate::audio::AudioBuffer;
use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct AugmentConfig {
    pub max_offset_s: f64,
    /// Only consulted for stereo examples.
    pub mono_downmix_prob: f64,
    pub gain_db_range: (f64, f64),
    pub mix_ratio_db_range: (f64, f64),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { max_offset_s: 0.010, mono_downmix_prob: 1.0 / 3.0, gain_db_range: (-6.0, 6.0), mix_ratio_db_range: (-6.0, 6.0) }
    }
}

impl AugmentConfig {
    /// Leaves examples untouched.
    pub fn disabled() -> Self {
        Self { max_offset_s: 0.0, mono_downmix_prob: 0.0, gain_db_range: (0.0, 0.0), mix_ratio_db_range: (0.0, 0.0) }
    }

    pub fn validate(&self) -> Result<()> {
        let range_ok = |r: (f64, f64)| r.0.is_finite() && r.1.is_finite() && r.0 <= r.1;
        if !(self.max_offset_s >= 0.0 && self.max_offset_s.is_finite()) {
            return Err(invalid("maximum offset must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.mono_downmix_prob) {
            return Err(invalid("downmix probability must lie in [0, 1]"));
        }
        if !range_ok(self.gain_db_range) || !range_ok(self.mix_ratio_db_range) {
            return Err(invalid("dB ranges must be finite with low <= high"));
        }
        Ok(())
    }

    pub fn max_offset_samples(&self, fs_hz: u32) -> usize {
        (self.max_offset_s * fs_hz as f64).round() as usize
    }
}

pub fn db_to_gain(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

fn draw_db<R: Rng + ?Sized>(rng: &mut R, range: (f64, f64)) -> f64 {
    if range.1 > range.0 {
        rng.random_range(range.0..=range.1)
    } else {
        range.0
    }
}

/// The random choices made for one example.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentDraw {
    pub offset_samples: usize,
    pub downmix: bool,
    pub gain_db: f64,
    pub mix_ratio_db: f64,
}

impl AugmentDraw {
    /// Draws every choice, in a fixed order, regardless of the channel count.
    pub fn sample<R: Rng + ?Sized>(config: &AugmentConfig, fs_hz: u32, rng: &mut R) -> Self {
        let max = config.max_offset_samples(fs_hz);
        let offset_samples = if max > 0 { rng.random_range(0..=max) } else { 0 };
        let downmix = rng.random_bool(config.mono_downmix_prob);
        let gain_db = draw_db(rng, config.gain_db_range);
        let mix_ratio_db = draw_db(rng, config.mix_ratio_db_range);
        Self { offset_samples, downmix, gain_db, mix_ratio_db }
    }

    pub fn apply(&self, example: &Example) -> Result<Example> {
        let len = example.len();
        let offset = self.offset_samples.min(len.saturating_sub(1));
        let trim = |a: &AudioBuffer| a.slice(offset, len - offset);
        let (mut fg, mut bg) = (trim(&example.foreground)?, trim(&example.background)?);
        if self.downmix && fg.num_channels() == 2 {
            let dup = |a: &AudioBuffer| {
                let m = a.downmix();
                AudioBuffer::new(a.fs_hz(), alloc::vec![m.clone(), m])
            };
            fg = dup(&fg)?;
            bg = dup(&bg)?;
        }
        let gain = db_to_gain(self.gain_db);
        fg.scale(gain);
        bg.scale(gain * db_to_gain(self.mix_ratio_db));
        Example::new(fg, bg)
    }
}

/// Random start offset, optional stereo downmix, global gain and
/// background re-weighting; the mixture is rebuilt from the stems.
pub fn augment<R: Rng + ?Sized>(example: &Example, config: &AugmentConfig, rng: &mut R) -> Result<Example> {
    config.validate()?;
    AugmentDraw::sample(config, example.fs_hz(), rng).apply(example)
}
