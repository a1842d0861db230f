//! STFT analysis/synthesis filter banks parameterized by sampling frequency.
//!
//! The frame length is fixed in seconds, so the bin spacing in Hz is (up to
//! rounding) the same at every sampling frequency; only the number of bins
//! changes. Analysis is a strided convolution with windowed DFT kernels,
//! synthesis the matching windowed inverse basis followed by overlap-add.
//! With the sine window at 50% overlap, `w[n]^2 + w[n + N/2]^2 = 1`, so all
//! reconstruction scaling lives in the synthesis filters.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::audio::AudioBuffer;
use crate::error::{invalid, shape, Error, Result};
use crate::linalg::{gemm, MatMut, MatRef};
use crate::real::Real;

/// A frame duration in seconds, kept as an exact ratio so that derived frame
/// lengths never drift.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrameDuration {
    num: u64,
    den: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl FrameDuration {
    /// 2048 samples at 48 kHz, about 42.7 ms.
    pub const DEFAULT: Self = Self { num: 2048, den: 48000 };

    /// `num / den` seconds. The ratio is stored as given, unreduced, so a
    /// duration written as `342/8000` round-trips verbatim.
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(invalid("frame duration must be positive"));
        }
        Ok(Self { num, den })
    }

    /// Rational approximation of `seconds` at nanosecond resolution.
    pub fn from_secs_f64(seconds: f64) -> Result<Self> {
        if !(seconds > 0.0 && seconds.is_finite()) {
            return Err(invalid("frame duration must be positive and finite"));
        }
        let den = 1_000_000_000u64;
        let num = (seconds * den as f64).round() as u64;
        if num == 0 {
            return Err(invalid("frame duration below one nanosecond"));
        }
        let g = gcd(num, den);
        Ok(Self { num: num / g, den: den / g })
    }

    pub fn numerator(&self) -> u64 {
        self.num
    }

    pub fn denominator(&self) -> u64 {
        self.den
    }

    pub fn seconds(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Duration times `fs_hz`, i.e. the unrounded frame length in samples.
    pub fn samples_at(&self, fs_hz: u32) -> f64 {
        self.num as f64 * fs_hz as f64 / self.den as f64
    }
}

impl Default for FrameDuration {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Frame and bin layout for one sampling frequency.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameGeometry {
    duration: FrameDuration,
    fs_hz: u32,
    frame_len: usize,
}

pub const HOP_FRACTION: f64 = 0.5;

/// Resolves a physical frame duration to sample counts at `fs_hz`.
///
/// The frame length is the even integer nearest to `duration * fs_hz`, ties
/// rounding up, which keeps the 50% hop exact.
pub fn frame_geometry(duration: FrameDuration, fs_hz: u32) -> Result<FrameGeometry> {
    if fs_hz == 0 {
        return Err(invalid("sampling frequency must be positive"));
    }
    // nearest even = 2 * floor(x/2 + 1/2) with x = num * fs / den
    let scaled = duration.num as u128 * fs_hz as u128;
    let half = (scaled + duration.den as u128) / (2 * duration.den as u128);
    let frame_len = usize::try_from(2 * half).map_err(|_| invalid("frame length overflow"))?;
    if frame_len < 4 {
        return Err(Error::GeometryTooSmall { frame_len });
    }
    Ok(FrameGeometry { duration, fs_hz, frame_len })
}

impl FrameGeometry {
    pub fn duration(&self) -> FrameDuration {
        self.duration
    }

    pub fn frame_duration_s(&self) -> f64 {
        self.duration.seconds()
    }

    pub fn fs_hz(&self) -> u32 {
        self.fs_hz
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn hop_len(&self) -> usize {
        self.frame_len / 2
    }

    pub fn num_bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    pub fn bin_spacing_hz(&self) -> f64 {
        self.fs_hz as f64 / self.frame_len as f64
    }

    /// Frames needed so every sample of a `len`-sample signal is covered by
    /// two overlapping frames once `hop_len` zeros are prepended.
    pub fn num_frames(&self, len: usize) -> usize {
        if len == 0 {
            1
        } else {
            (len - 1) / self.hop_len() + 2
        }
    }
}

/// Sine window `w[n] = sin(pi (n + 0.5) / N)`.
pub fn sine_window(frame_len: usize) -> Vec<f64> {
    (0..frame_len)
        .map(|n| (PI * (n as f64 + 0.5) / frame_len as f64).sin())
        .collect()
}

/// Complex STFT coefficients.
///
/// Stored interleaved as `[frame][bin][channel][re, im]`, which is also the
/// feature-channel order used by the network.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram<T> {
    geometry: FrameGeometry,
    num_frames: usize,
    num_channels: usize,
    signal_len: usize,
    data: Vec<T>,
}

impl<T: Real> Spectrogram<T> {
    pub fn zeros(geometry: FrameGeometry, num_frames: usize, num_channels: usize, signal_len: usize) -> Self {
        let len = 2 * num_frames * geometry.num_bins() * num_channels;
        Self { geometry, num_frames, num_channels, signal_len, data: vec![T::zero(); len] }
    }

    pub fn from_raw(
        geometry: FrameGeometry,
        num_frames: usize,
        num_channels: usize,
        signal_len: usize,
        data: Vec<T>,
    ) -> Result<Self> {
        if data.len() != 2 * num_frames * geometry.num_bins() * num_channels {
            return Err(shape("spectrogram buffer length does not match its dimensions"));
        }
        if num_frames != geometry.num_frames(signal_len) {
            return Err(shape(format!(
                "{num_frames} frames inconsistent with a {signal_len}-sample signal"
            )));
        }
        Ok(Self { geometry, num_frames, num_channels, signal_len, data })
    }

    pub fn geometry(&self) -> &FrameGeometry {
        &self.geometry
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn num_bins(&self) -> usize {
        self.geometry.num_bins()
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    /// Length of the time-domain signal this spectrogram was computed from.
    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    #[inline]
    fn index(&self, frame: usize, bin: usize, channel: usize) -> usize {
        2 * ((frame * self.num_bins() + bin) * self.num_channels + channel)
    }

    /// `(re, im)` of one coefficient.
    pub fn get(&self, frame: usize, bin: usize, channel: usize) -> (T, T) {
        let i = self.index(frame, bin, channel);
        (self.data[i], self.data[i + 1])
    }

    pub fn set(&mut self, frame: usize, bin: usize, channel: usize, value: (T, T)) {
        let i = self.index(frame, bin, channel);
        self.data[i] = value.0;
        self.data[i + 1] = value.1;
    }

    /// Interleaved `(re, im)` storage.
    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.geometry == other.geometry
            && self.num_frames == other.num_frames
            && self.num_channels == other.num_channels
            && self.signal_len == other.signal_len
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if !self.same_layout(other) {
            return Err(shape("spectrogram layouts differ"));
        }
        let mut out = self.clone();
        out.data.iter_mut().zip(&other.data).for_each(|(a, &b)| *a += b);
        Ok(out)
    }

    pub fn magnitude(&self, frame: usize, bin: usize, channel: usize) -> T {
        let (re, im) = self.get(frame, bin, channel);
        re.hypot(im)
    }
}

/// Windowed DFT kernels: for bin `k`, `h_k[n] = w[n] cos(2 pi k n / N)` and
/// `g_k[n] = -w[n] sin(2 pi k n / N)`.
#[derive(Clone, Debug)]
pub struct AnalysisFilterBank<T> {
    geometry: FrameGeometry,
    window: Vec<f64>,
    // [n][k], frame_len x num_bins
    cos: Vec<T>,
    sin: Vec<T>,
}

/// Windowed inverse-DFT basis with overlap-add normalization folded in.
#[derive(Clone, Debug)]
pub struct SynthesisFilterBank<T> {
    geometry: FrameGeometry,
    // [k][n], num_bins x frame_len
    cos: Vec<T>,
    sin: Vec<T>,
}

/// Designs the analysis/synthesis pair for `geometry`.
pub fn design_filterbanks<T: Real>(geometry: &FrameGeometry) -> (AnalysisFilterBank<T>, SynthesisFilterBank<T>) {
    let n_len = geometry.frame_len();
    let bins = geometry.num_bins();
    let window = sine_window(n_len);
    let mut a_cos = vec![T::zero(); n_len * bins];
    let mut a_sin = vec![T::zero(); n_len * bins];
    let mut s_cos = vec![T::zero(); n_len * bins];
    let mut s_sin = vec![T::zero(); n_len * bins];
    let inv_n = 1.0 / n_len as f64;
    for k in 0..bins {
        let weight = if k == 0 || k == bins - 1 { inv_n } else { 2.0 * inv_n };
        for (n, &w) in window.iter().enumerate() {
            // reduce k*n modulo N before scaling for accuracy on long frames
            let phase = 2.0 * PI * ((k * n) % n_len) as f64 * inv_n;
            let (s, c) = phase.sin_cos();
            let (s, c) = if k == 0 || k == bins - 1 {
                // exact zeros for the DC / Nyquist sine branch
                (0.0, if k == 0 { 1.0 } else if n % 2 == 0 { 1.0 } else { -1.0 })
            } else {
                (s, c)
            };
            a_cos[n * bins + k] = T::of(w * c);
            a_sin[n * bins + k] = T::of(-w * s);
            s_cos[k * n_len + n] = T::of(weight * w * c);
            s_sin[k * n_len + n] = T::of(-weight * w * s);
        }
    }
    (
        AnalysisFilterBank { geometry: *geometry, window, cos: a_cos, sin: a_sin },
        SynthesisFilterBank { geometry: *geometry, cos: s_cos, sin: s_sin },
    )
}

fn padded_channel<T: Real>(samples: impl Iterator<Item = T>, hop: usize, total: usize) -> Vec<T> {
    let mut out = vec![T::zero(); total];
    for (dst, v) in out[hop..].iter_mut().zip(samples) {
        *dst = v;
    }
    out
}

impl<T: Real> AnalysisFilterBank<T> {
    pub fn geometry(&self) -> &FrameGeometry {
        &self.geometry
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// `(cosine branch, sine branch)` filters of bin `k`.
    pub fn filters(&self, k: usize) -> (Vec<T>, Vec<T>) {
        let bins = self.geometry.num_bins();
        let n_len = self.geometry.frame_len();
        (
            (0..n_len).map(|n| self.cos[n * bins + k]).collect(),
            (0..n_len).map(|n| self.sin[n * bins + k]).collect(),
        )
    }

    /// Strided-convolution STFT of every channel.
    ///
    /// The signal is preceded by `hop_len` zeros and followed by enough zeros
    /// (at least `hop_len`) to complete the last frame; frame `t` covers
    /// padded samples `[t * hop, t * hop + frame_len)`.
    pub fn analyze(&self, signal: &AudioBuffer) -> Result<Spectrogram<T>> {
        if signal.fs_hz() != self.geometry.fs_hz() {
            return Err(invalid(format!(
                "signal at {} Hz given to a {} Hz filter bank",
                signal.fs_hz(),
                self.geometry.fs_hz()
            )));
        }
        let channels: Vec<Vec<T>> = signal
            .channels()
            .iter()
            .map(|c| c.iter().map(|&v| T::of(v)).collect())
            .collect();
        Ok(self.analyze_channels(&channels, signal.len()))
    }

    /// Same as [`Self::analyze`] on raw channel data at the bank's rate.
    pub fn analyze_channels(&self, channels: &[Vec<T>], len: usize) -> Spectrogram<T> {
        let g = &self.geometry;
        let hop = g.hop_len();
        let bins = g.num_bins();
        let n_ch = channels.len();
        let frames = g.num_frames(len);
        let total = (frames + 1) * hop;
        let mut spec = Spectrogram::zeros(*g, frames, n_ch, len);
        for (c, samples) in channels.iter().enumerate() {
            let padded = padded_channel(samples.iter().copied(), hop, total);
            let frames_view = MatRef::new(&padded, 0, frames, g.frame_len(), hop, 1);
            for (part, filters) in [(0usize, &self.cos), (1, &self.sin)] {
                gemm(
                    T::one(),
                    frames_view,
                    MatRef::row_major(filters, g.frame_len(), bins),
                    T::zero(),
                    MatMut::new(&mut spec.data, 2 * c + part, frames, bins, 2 * bins * n_ch, 2 * n_ch),
                );
            }
        }
        spec
    }
}

impl<T: Real> SynthesisFilterBank<T> {
    pub fn geometry(&self) -> &FrameGeometry {
        &self.geometry
    }

    /// `(cosine branch, sine branch)` synthesis filters of bin `k`.
    pub fn filters(&self, k: usize) -> (&[T], &[T]) {
        let n_len = self.geometry.frame_len();
        (&self.cos[k * n_len..(k + 1) * n_len], &self.sin[k * n_len..(k + 1) * n_len])
    }

    fn check(&self, spec: &Spectrogram<T>) -> Result<()> {
        if spec.geometry != self.geometry {
            return Err(invalid("spectrogram geometry differs from the synthesis filter bank"));
        }
        Ok(())
    }

    /// Overlap-add resynthesis trimmed to the analyzed signal length.
    pub fn synthesize(&self, spec: &Spectrogram<T>) -> Result<AudioBuffer> {
        let channels = self.synthesize_channels(spec)?;
        AudioBuffer::new(
            self.geometry.fs_hz(),
            channels.into_iter().map(|c| c.into_iter().map(T::as_f64).collect()).collect(),
        )
    }

    pub fn synthesize_channels(&self, spec: &Spectrogram<T>) -> Result<Vec<Vec<T>>> {
        self.check(spec)?;
        let g = &self.geometry;
        let (hop, n_len, bins) = (g.hop_len(), g.frame_len(), g.num_bins());
        let (frames, n_ch, len) = (spec.num_frames, spec.num_channels, spec.signal_len);
        let mut framed = vec![T::zero(); frames * n_len];
        let mut out = Vec::with_capacity(n_ch);
        for c in 0..n_ch {
            for (part, filters, beta) in [(0usize, &self.cos, T::zero()), (1, &self.sin, T::one())] {
                gemm(
                    T::one(),
                    MatRef::new(&spec.data, 2 * c + part, frames, bins, 2 * bins * n_ch, 2 * n_ch),
                    MatRef::row_major(filters, bins, n_len),
                    beta,
                    MatMut::row_major(&mut framed, frames, n_len),
                );
            }
            let mut acc = vec![T::zero(); (frames + 1) * hop];
            for (t, frame) in framed.chunks_exact(n_len).enumerate() {
                for (dst, &v) in acc[t * hop..t * hop + n_len].iter_mut().zip(frame) {
                    *dst += v;
                }
            }
            out.push(acc[hop..hop + len].to_vec());
        }
        Ok(out)
    }

    /// Adjoint of [`Self::synthesize_channels`]: maps a gradient with respect
    /// to the output samples onto the spectrogram coefficients.
    pub fn synthesize_adjoint(&self, layout: &Spectrogram<T>, grad: &[Vec<T>]) -> Result<Spectrogram<T>> {
        self.check(layout)?;
        if grad.len() != layout.num_channels || grad.iter().any(|c| c.len() != layout.signal_len) {
            return Err(shape("gradient does not match the synthesized signal"));
        }
        let g = &self.geometry;
        let (hop, n_len, bins) = (g.hop_len(), g.frame_len(), g.num_bins());
        let (frames, n_ch) = (layout.num_frames, layout.num_channels);
        let mut out = Spectrogram::zeros(*g, frames, n_ch, layout.signal_len);
        for (c, samples) in grad.iter().enumerate() {
            let padded = padded_channel(samples.iter().copied(), hop, (frames + 1) * hop);
            let frames_view = MatRef::new(&padded, 0, frames, n_len, hop, 1);
            for (part, filters) in [(0usize, &self.cos), (1, &self.sin)] {
                gemm(
                    T::one(),
                    frames_view,
                    MatRef::row_major(filters, bins, n_len).t(),
                    T::zero(),
                    MatMut::new(&mut out.data, 2 * c + part, frames, bins, 2 * bins * n_ch, 2 * n_ch),
                );
            }
        }
        Ok(out)
    }
}
