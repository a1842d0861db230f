//! Synthetic corpora, augmentation and resampling.

mod augment;
mod resample;
mod synth;

pub use augment::{augment, db_to_gain, AugmentConfig, AugmentDraw};
pub use resample::{resample, resample_ratio, Resampler, CUTOFF_FRACTION, KAISER_BETA, TAPS_AT_LOWER_RATE};
pub use synth::{synth_example, voiced_activity, BackgroundParams, SynthSpec, TargetParams, MASTER_RATE_HZ};

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::AudioBuffer;
use crate::error::{invalid, Result};

/// Mixture with its two reference stems; `mixture == foreground + background`.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub mixture: AudioBuffer,
    pub foreground: AudioBuffer,
    pub background: AudioBuffer,
}

impl Example {
    /// Builds the mixture as the sample-wise sum of the stems.
    pub fn new(foreground: AudioBuffer, background: AudioBuffer) -> Result<Self> {
        let mixture = foreground.add(&background)?;
        Ok(Self { mixture, foreground, background })
    }

    /// Accepts three stems read from elsewhere after checking their shapes.
    pub fn from_stems(mixture: AudioBuffer, foreground: AudioBuffer, background: AudioBuffer) -> Result<Self> {
        mixture.assert_same_shape(&foreground)?;
        mixture.assert_same_shape(&background)?;
        Ok(Self { mixture, foreground, background })
    }

    pub fn fs_hz(&self) -> u32 {
        self.mixture.fs_hz()
    }

    pub fn len(&self) -> usize {
        self.mixture.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mixture.is_empty()
    }

    pub fn num_channels(&self) -> usize {
        self.mixture.num_channels()
    }

    pub fn resampled(&self, fs_hz: u32) -> Result<Self> {
        Self::from_stems(
            resample(&self.mixture, fs_hz)?,
            resample(&self.foreground, fs_hz)?,
            resample(&self.background, fs_hz)?,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Validation => 2,
            Split::Test => 3,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Train/validation/test corpus description; every item is derived from
/// `seed`, its split and its index.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct CorpusSpec {
    pub seed: u64,
    pub train_items: usize,
    pub validation_items: usize,
    pub test_items: usize,
    pub duration_s: f64,
    pub channels: usize,
    /// Per-item mix SNR is drawn uniformly from this range.
    pub mix_snr_db: (f64, f64),
    pub target: TargetParams,
    pub background: BackgroundParams,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            train_items: 64,
            validation_items: 16,
            test_items: 16,
            duration_s: 4.0,
            channels: 1,
            mix_snr_db: (-5.0, 5.0),
            target: TargetParams::default(),
            background: BackgroundParams::default(),
        }
    }
}

impl CorpusSpec {
    pub fn items(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train_items,
            Split::Validation => self.validation_items,
            Split::Test => self.test_items,
        }
    }

    pub fn item_seed(&self, split: Split, index: usize) -> u64 {
        splitmix64(self.seed ^ splitmix64((split.tag() << 48) ^ index as u64))
    }

    pub fn item(&self, split: Split, index: usize, fs_hz: u32) -> SynthSpec {
        let seed = self.item_seed(split, index);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(4);
        let (lo, hi) = self.mix_snr_db;
        let mix_snr_db = if hi > lo { rng.random_range(lo..hi) } else { lo };
        SynthSpec {
            seed,
            duration_s: self.duration_s,
            fs_hz,
            channels: self.channels,
            mix_snr_db,
            target: self.target.clone(),
            background: self.background.clone(),
        }
    }

    pub fn generate(&self, split: Split, fs_hz: u32) -> Result<Vec<Example>> {
        if self.items(split) == 0 {
            return Err(invalid(alloc::format!("the {} split is empty", split.name())));
        }
        (0..self.items(split)).map(|i| synth_example(&self.item(split, i, fs_hz))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterbank::{design_filterbanks, frame_geometry, FrameDuration};
    use alloc::vec;

    fn short(seed: u64, fs_hz: u32) -> SynthSpec {
        SynthSpec { seed, duration_s: 1.5, fs_hz, ..SynthSpec::default() }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = synth_example(&short(7, 8000)).unwrap();
        let b = synth_example(&short(7, 8000)).unwrap();
        assert_eq!(a, b);
        let c = synth_example(&short(8, 8000)).unwrap();
        assert_ne!(a.foreground, c.foreground);
    }

    #[test]
    fn requested_snr_holds_on_voiced_samples() {
        for snr in [0.0, 6.0, -4.0] {
            let spec = SynthSpec { mix_snr_db: snr, ..short(3, 48000) };
            let ex = synth_example(&spec).unwrap();
            let active = voiced_activity(&spec).unwrap();
            let energy = |a: &AudioBuffer| -> f64 {
                a.channel(0).iter().zip(&active).filter(|(_, &on)| on).map(|(v, _)| v * v).sum()
            };
            let measured = 10.0 * (energy(&ex.foreground) / energy(&ex.background)).log10();
            assert!((measured - snr).abs() < 0.1, "{measured} vs {snr}");
        }
    }

    #[test]
    fn foreground_energy_sits_below_4k() {
        let ex = synth_example(&short(11, 48000)).unwrap();
        let geometry = frame_geometry(FrameDuration::DEFAULT, 48000).unwrap();
        let (analysis, _) = design_filterbanks::<f64>(&geometry);
        let spec = analysis.analyze(&ex.foreground).unwrap();
        let edge = (4000.0 / geometry.bin_spacing_hz()).ceil() as usize;
        let (mut high, mut total) = (0.0, 0.0);
        for t in 0..spec.num_frames() {
            for f in 0..spec.num_bins() {
                let m = spec.magnitude(t, f, 0).powi(2);
                total += m;
                if f >= edge {
                    high += m;
                }
            }
        }
        assert!(10.0 * (high / total).log10() < -26.0);
    }

    #[test]
    fn renderings_at_two_rates_describe_the_same_signal() {
        let hi = synth_example(&short(5, 48000)).unwrap();
        let lo = synth_example(&short(5, 8000)).unwrap();
        let down = resample(&hi.mixture, 8000).unwrap();
        let (a, b) = (down.channel(0), lo.mixture.channel(0));
        let n = a.len().min(b.len());
        let interior = 400..n - 400;
        let err: f64 = interior.clone().map(|i| (a[i] - b[i]).powi(2)).sum();
        let sig: f64 = interior.map(|i| b[i].powi(2)).sum();
        assert!(10.0 * (err / sig).log10() < -30.0);
    }

    #[test]
    fn stereo_examples_have_two_channels() {
        let ex = synth_example(&SynthSpec { channels: 2, ..short(2, 8000) }).unwrap();
        assert_eq!(ex.num_channels(), 2);
        assert_eq!(ex.len(), 12000);
    }

    #[test]
    fn corpus_items_are_distinct_and_reproducible() {
        let corpus = CorpusSpec::default();
        let a = corpus.item(Split::Train, 0, 8000);
        assert_eq!(a, corpus.item(Split::Train, 0, 8000));
        assert_ne!(a.seed, corpus.item(Split::Train, 1, 8000).seed);
        assert_ne!(a.seed, corpus.item(Split::Test, 0, 8000).seed);
        assert!((-5.0..5.0).contains(&a.mix_snr_db));
        assert_eq!(a.seed, corpus.item(Split::Train, 0, 48000).seed);
    }

    fn stereo_example() -> Example {
        let fg = AudioBuffer::new(8000, vec![vec![0.5; 400], vec![0.25; 400]]).unwrap();
        let bg = AudioBuffer::new(8000, vec![vec![0.1; 400], vec![-0.3; 400]]).unwrap();
        Example::new(fg, bg).unwrap()
    }

    #[test]
    fn offset_is_bounded_by_ten_ms() {
        let config = AugmentConfig::default();
        assert_eq!(config.max_offset_samples(8000), 80);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ex = stereo_example();
        for _ in 0..200 {
            let out = augment(&ex, &config, &mut rng).unwrap();
            assert!(ex.len() - out.len() <= 80);
        }
    }

    #[test]
    fn gain_in_db_maps_to_amplitude() {
        assert!((db_to_gain(6.0) - 1.995_262_314_968_88).abs() < 1e-12);
        let draw = AugmentDraw { offset_samples: 0, downmix: false, gain_db: 6.0, mix_ratio_db: 0.0 };
        let out = draw.apply(&stereo_example()).unwrap();
        assert!((out.foreground.channel(0)[0] - 0.5 * db_to_gain(6.0)).abs() < 1e-15);
    }

    #[test]
    fn downmix_frequency_is_one_third() {
        let config = AugmentConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let hits = (0..10_000).filter(|_| AugmentDraw::sample(&config, 8000, &mut rng).downmix).count();
        assert!((hits as f64 / 10_000.0 - 1.0 / 3.0).abs() < 0.02);
    }

    #[test]
    fn downmix_duplicates_the_average() {
        let draw = AugmentDraw { offset_samples: 3, downmix: true, gain_db: 0.0, mix_ratio_db: 0.0 };
        let out = draw.apply(&stereo_example()).unwrap();
        assert_eq!(out.len(), 397);
        assert_eq!(out.foreground.channel(0), out.foreground.channel(1));
        assert_eq!(out.foreground.channel(0)[0], 0.375);
    }

    #[test]
    fn augmented_mixture_is_the_stem_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ex = synth_example(&SynthSpec { channels: 2, ..short(9, 8000) }).unwrap();
        for _ in 0..5 {
            let out = augment(&ex, &AugmentConfig::default(), &mut rng).unwrap();
            assert_eq!(out.mixture, out.foreground.add(&out.background).unwrap());
        }
    }

    #[test]
    fn mono_examples_never_downmix() {
        let fg = AudioBuffer::mono(8000, vec![0.5; 100]).unwrap();
        let ex = Example::new(fg.clone(), fg).unwrap();
        let draw = AugmentDraw { offset_samples: 0, downmix: true, gain_db: 0.0, mix_ratio_db: 0.0 };
        assert_eq!(draw.apply(&ex).unwrap(), ex);
    }
}
