//! The deterministic chain between encoder and network: magnitude
//! compression, real/imaginary channel stacking, per-bin whitening, and
//! complex mask application.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::audio::AudioBuffer;
use crate::error::{invalid, shape, Result};
use crate::filterbank::{AnalysisFilterBank, FrameGeometry, Spectrogram};
use crate::real::Real;
use crate::tensor::Tensor3;

/// Stacked `[frame][bin][ch0_re, ch0_im, ch1_re, ch1_im, ...]` features.
pub type FeatureTensor<T> = Tensor3<T>;

/// Real-valued mask pairs in the same channel order as [`FeatureTensor`].
pub type MaskTensor<T> = Tensor3<T>;

pub const STD_FLOOR: f64 = 1e-8;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("compression alpha must be positive, got {alpha}")))
    }
}

/// Scales each coefficient by `q = ln(alpha + |c|) / |c|` so the magnitude
/// becomes `ln(alpha + |c|)` with the phase kept. `q = 1` at `c = 0`.
pub fn compress_in_place<T: Real>(spec: &mut Spectrogram<T>, alpha: f64) -> Result<()> {
    check_alpha(alpha)?;
    let alpha = T::of(alpha);
    for pair in spec.data_mut().chunks_exact_mut(2) {
        let mag = pair[0].hypot(pair[1]);
        if mag > T::zero() {
            let q = (alpha + mag).ln() / mag;
            pair[0] *= q;
            pair[1] *= q;
        }
    }
    Ok(())
}

pub fn compress<T: Real>(spec: &Spectrogram<T>, alpha: f64) -> Result<Spectrogram<T>> {
    let mut out = spec.clone();
    compress_in_place(&mut out, alpha)?;
    Ok(out)
}

/// Re-lays a spectrogram as real feature channels. The interleaved storage
/// already matches the feature order, so this is a copy.
pub fn stack_channels<T: Real>(spec: &Spectrogram<T>) -> FeatureTensor<T> {
    Tensor3::from_vec(
        spec.num_frames(),
        spec.num_bins(),
        2 * spec.num_channels(),
        spec.data().to_vec(),
    )
    .expect("spectrogram storage is frame x bin x 2*channels")
}

/// Inverse of [`stack_channels`].
pub fn unstack_channels<T: Real>(
    feat: &FeatureTensor<T>,
    geometry: FrameGeometry,
    signal_len: usize,
) -> Result<Spectrogram<T>> {
    if feat.channels() % 2 != 0 {
        return Err(shape("feature channel count must be even"));
    }
    if feat.bins() != geometry.num_bins() {
        return Err(shape("feature bins do not match the geometry"));
    }
    Spectrogram::from_raw(geometry, feat.frames(), feat.channels() / 2, signal_len, feat.data().to_vec())
}

/// Compression settings of the encoder-to-network path.
///
/// `level_gain` multiplies the raw coefficients before compression; see
/// [`crate::pipeline::SeparationModel`] for how it is chosen per rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureChain {
    pub alpha: f64,
    pub level_gain: f64,
}

impl FeatureChain {
    /// Compressed, stacked (not yet whitened) features.
    pub fn encode<T: Real>(&self, spec: &Spectrogram<T>) -> Result<FeatureTensor<T>> {
        let mut scaled = spec.clone();
        if self.level_gain != 1.0 {
            let gain = T::of(self.level_gain);
            scaled.data_mut().iter_mut().for_each(|v| *v *= gain);
        }
        compress_in_place(&mut scaled, self.alpha)?;
        Ok(stack_channels(&scaled))
    }
}

/// Per-bin standardization statistics.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WhiteningStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub fs_hz: u32,
    pub num_bins: usize,
    pub sample_count: u64,
}

impl WhiteningStats {
    /// Mean 0, std 1: the state of a model whose statistics were never
    /// estimated.
    pub fn identity(fs_hz: u32, num_bins: usize) -> Self {
        Self { mean: vec![0.0; num_bins], std: vec![1.0; num_bins], fs_hz, num_bins, sample_count: 0 }
    }
}

/// Welford running mean and variance.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunningMoments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.m2 / self.count as f64
        }
    }
}

/// Single-pass accumulator pooling every frame, item and feature channel of
/// each bin.
#[derive(Clone, Debug)]
pub struct WhiteningAccumulator {
    bins: Vec<RunningMoments>,
}

impl WhiteningAccumulator {
    pub fn new(num_bins: usize) -> Self {
        Self { bins: vec![RunningMoments::default(); num_bins] }
    }

    pub fn push<T: Real>(&mut self, feat: &FeatureTensor<T>) -> Result<()> {
        if feat.bins() != self.bins.len() {
            return Err(shape(format!("{} bins pushed into a {}-bin accumulator", feat.bins(), self.bins.len())));
        }
        for frame in feat.data().chunks_exact(feat.bins() * feat.channels()) {
            for (moments, bin) in self.bins.iter_mut().zip(frame.chunks_exact(feat.channels())) {
                bin.iter().for_each(|&v| moments.push(v.as_f64()));
            }
        }
        Ok(())
    }

    pub fn finish(&self, fs_hz: u32) -> Result<WhiteningStats> {
        let sample_count = self.bins.first().map_or(0, |m| m.count());
        if sample_count == 0 {
            return Err(invalid("no feature values accumulated"));
        }
        Ok(WhiteningStats {
            mean: self.bins.iter().map(|m| m.mean()).collect(),
            std: self.bins.iter().map(|m| m.variance().sqrt().max(STD_FLOOR)).collect(),
            fs_hz,
            num_bins: self.bins.len(),
            sample_count,
        })
    }
}

/// One streaming pass over mixtures, yielding per-bin population mean and
/// standard deviation of the compressed features.
pub fn estimate_whitening<'a, T: Real>(
    corpus: impl IntoIterator<Item = &'a AudioBuffer>,
    analysis: &AnalysisFilterBank<T>,
    chain: &FeatureChain,
) -> Result<WhiteningStats> {
    check_alpha(chain.alpha)?;
    let geometry = analysis.geometry();
    let mut acc = WhiteningAccumulator::new(geometry.num_bins());
    let mut items = 0usize;
    for audio in corpus {
        let spec = analysis.analyze(audio)?;
        acc.push(&chain.encode(&spec)?)?;
        items += 1;
    }
    if items == 0 {
        return Err(invalid("whitening corpus is empty"));
    }
    acc.finish(geometry.fs_hz())
}

pub fn apply_whitening_in_place<T: Real>(feat: &mut FeatureTensor<T>, stats: &WhiteningStats) -> Result<()> {
    if feat.bins() != stats.num_bins || stats.mean.len() != stats.num_bins || stats.std.len() != stats.num_bins {
        return Err(shape(format!(
            "whitening statistics for {} bins applied to {} bins",
            stats.num_bins,
            feat.bins()
        )));
    }
    let coeffs: Vec<(T, T)> = stats
        .mean
        .iter()
        .zip(&stats.std)
        .map(|(&m, &s)| (T::of(m), T::of(1.0 / s)))
        .collect();
    let channels = feat.channels();
    for frame in feat.data_mut().chunks_exact_mut(coeffs.len() * channels) {
        for (bin, &(mean, inv_std)) in frame.chunks_exact_mut(channels).zip(&coeffs) {
            bin.iter_mut().for_each(|v| *v = (*v - mean) * inv_std);
        }
    }
    Ok(())
}

/// `(feat - mean[bin]) / std[bin]`.
pub fn apply_whitening<T: Real>(feat: &FeatureTensor<T>, stats: &WhiteningStats) -> Result<FeatureTensor<T>> {
    let mut out = feat.clone();
    apply_whitening_in_place(&mut out, stats)?;
    Ok(out)
}

fn check_mask<T: Real>(spec: &Spectrogram<T>, mask: &MaskTensor<T>) -> Result<()> {
    if mask.dims() != (spec.num_frames(), spec.num_bins(), 2 * spec.num_channels()) {
        return Err(shape(format!(
            "mask {:?} does not fit spectrogram ({}, {}, {})",
            mask.dims(),
            spec.num_frames(),
            spec.num_bins(),
            2 * spec.num_channels()
        )));
    }
    Ok(())
}

/// Complex multiplication of each coefficient by its channel's mask pair.
pub fn apply_mask<T: Real>(spec: &Spectrogram<T>, mask: &MaskTensor<T>) -> Result<Spectrogram<T>> {
    check_mask(spec, mask)?;
    let mut out = spec.clone();
    for (c, m) in out.data_mut().chunks_exact_mut(2).zip(mask.data().chunks_exact(2)) {
        let (re, im) = (c[0], c[1]);
        c[0] = m[0] * re - m[1] * im;
        c[1] = m[0] * im + m[1] * re;
    }
    Ok(out)
}

/// Gradient of a loss with respect to the mask, given its gradient with
/// respect to the masked spectrogram.
pub fn apply_mask_backward<T: Real>(spec: &Spectrogram<T>, grad_out: &Spectrogram<T>) -> Result<MaskTensor<T>> {
    if !spec.same_layout(grad_out) {
        return Err(shape("gradient layout differs from the masked spectrogram"));
    }
    let mut grad = Tensor3::zeros(spec.num_frames(), spec.num_bins(), 2 * spec.num_channels());
    for ((g, s), d) in grad
        .data_mut()
        .chunks_exact_mut(2)
        .zip(spec.data().chunks_exact(2))
        .zip(grad_out.data().chunks_exact(2))
    {
        g[0] = d[0] * s[0] + d[1] * s[1];
        g[1] = d[1] * s[0] - d[0] * s[1];
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterbank::{design_filterbanks, frame_geometry, FrameDuration};
    use core::f64::consts::E;

    fn geometry() -> FrameGeometry {
        frame_geometry(FrameDuration::new(8, 1000).unwrap(), 1000).unwrap()
    }

    fn one_coefficient(re: f64, im: f64) -> Spectrogram<f64> {
        let g = geometry();
        let mut s = Spectrogram::zeros(g, g.num_frames(1), 1, 1);
        s.set(0, 1, 0, (re, im));
        s
    }

    #[test]
    fn compression_closed_forms() {
        let c = compress(&one_coefficient(E - 1.0, 0.0), 1.0).unwrap();
        let (re, im) = c.get(0, 1, 0);
        assert!((re - 1.0).abs() < 1e-15 && im == 0.0);

        let c = compress(&one_coefficient(3.0, 4.0), 1.0).unwrap();
        let (re, im) = c.get(0, 1, 0);
        let q = 6f64.ln() / 5.0;
        assert!((q - 0.35835).abs() < 1e-5);
        assert!((re - 3.0 * q).abs() < 1e-15 && (im - 4.0 * q).abs() < 1e-15);
        assert!((re - 1.0751).abs() < 1e-4 && (im - 1.4334).abs() < 1e-4);

        let c = compress(&one_coefficient(0.0, 0.0), 1.0).unwrap();
        assert_eq!(c.get(0, 1, 0), (0.0, 0.0));
        assert!(compress(&one_coefficient(1.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn stacking_round_trips_and_counts_channels() {
        let g = geometry();
        let mut s = Spectrogram::<f64>::zeros(g, g.num_frames(10), 2, 10);
        s.data_mut().iter_mut().enumerate().for_each(|(i, v)| *v = i as f64);
        let f = stack_channels(&s);
        assert_eq!(f.channels(), 4);
        assert_eq!(unstack_channels(&f, g, 10).unwrap(), s);
        let mono = Spectrogram::<f64>::zeros(g, g.num_frames(10), 1, 10);
        assert_eq!(stack_channels(&mono).channels(), 2);
    }

    #[test]
    fn population_moments() {
        let mut acc = WhiteningAccumulator::new(2);
        let t = Tensor3::from_vec(2, 2, 1, vec![1.0, 5.0, 3.0, 5.0]).unwrap();
        acc.push(&t).unwrap();
        let stats = acc.finish(1000).unwrap();
        assert_eq!(stats.mean, vec![2.0, 5.0]);
        assert_eq!(stats.std, vec![1.0, STD_FLOOR]);
        assert_eq!(stats.sample_count, 2);
    }

    #[test]
    fn whitening_identities_and_mismatch() {
        let t = Tensor3::from_vec(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(apply_whitening(&t, &WhiteningStats::identity(1000, 2)).unwrap(), t);
        let stats = WhiteningStats { mean: vec![1.5, 3.5], std: vec![0.5, 2.0], fs_hz: 1000, num_bins: 2, sample_count: 4 };
        let w = apply_whitening(&t, &stats).unwrap();
        assert_eq!(w.data(), &[-1.0, 1.0, -0.25, 0.25]);
        let wrong = WhiteningStats::identity(8000, 172);
        let big = Tensor3::<f64>::zeros(1, 1025, 2);
        assert!(matches!(apply_whitening(&big, &wrong), Err(crate::Error::Shape(_))));
    }

    #[test]
    fn mask_algebra() {
        let s = one_coefficient(3.0, 4.0);
        let (frames, bins) = (s.num_frames(), s.num_bins());
        let ones = Tensor3::from_vec(frames, bins, 2, [1.0, 0.0].repeat(frames * bins)).unwrap();
        assert_eq!(apply_mask(&s, &ones).unwrap(), s);
        let zeros = Tensor3::zeros(frames, bins, 2);
        assert!(apply_mask(&s, &zeros).unwrap().data().iter().all(|&v| v == 0.0));
        let rot = Tensor3::from_vec(frames, bins, 2, [0.0, 1.0].repeat(frames * bins)).unwrap();
        assert_eq!(apply_mask(&s, &rot).unwrap().get(0, 1, 0), (-4.0, 3.0));
        assert!(apply_mask(&s, &Tensor3::zeros(frames, bins, 4)).is_err());
    }

    #[test]
    fn mask_backward_matches_finite_differences() {
        let g = geometry();
        let (analysis, _) = design_filterbanks::<f64>(&g);
        let x = AudioBuffer::mono(1000, (0..20).map(|i| (i as f64 * 0.7).sin()).collect()).unwrap();
        let spec = analysis.analyze(&x).unwrap();
        let n = spec.num_frames() * spec.num_bins() * 2;
        let mask = Tensor3::from_vec(spec.num_frames(), spec.num_bins(), 2, (0..n).map(|i| (i as f64 * 0.37).cos()).collect()).unwrap();
        let weights: Vec<f64> = (0..n).map(|i| (i as f64 * 1.3).sin()).collect();
        let loss = |m: &MaskTensor<f64>| -> f64 {
            apply_mask(&spec, m).unwrap().data().iter().zip(&weights).map(|(a, b)| a * b).sum()
        };
        let grad_out = Spectrogram::from_raw(g, spec.num_frames(), 1, 20, weights.clone()).unwrap();
        let grad = apply_mask_backward(&spec, &grad_out).unwrap();
        for i in 0..n {
            let mut p = mask.clone();
            p.data_mut()[i] += 1e-6;
            let mut q = mask.clone();
            q.data_mut()[i] -= 1e-6;
            let fd = (loss(&p) - loss(&q)) / 2e-6;
            assert!((fd - grad.data()[i]).abs() < 1e-6, "index {i}");
        }
    }
}
