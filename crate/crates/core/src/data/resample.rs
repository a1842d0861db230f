//! Rational-ratio polyphase resampling with a Kaiser-windowed sinc kernel.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::audio::AudioBuffer;
use crate::error::{invalid, Result};

pub const KAISER_BETA: f64 = 12.0;
/// Kernel span measured in samples of the lower of the two rates.
pub const TAPS_AT_LOWER_RATE: usize = 64;
/// Cutoff as a fraction of the lower rate.
pub const CUTOFF_FRACTION: f64 = 0.45;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `fs_out / fs_in` reduced to `(p, q)`.
pub fn resample_ratio(fs_in: u32, fs_out: u32) -> Result<(u64, u64)> {
    if fs_in == 0 || fs_out == 0 {
        return Err(invalid("sampling frequencies must be positive"));
    }
    let g = gcd(fs_in as u64, fs_out as u64);
    Ok((fs_out as u64 / g, fs_in as u64 / g))
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        let r = half / k as f64;
        term *= r * r;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn kaiser(x: f64, beta: f64) -> f64 {
    if x.abs() >= 1.0 {
        return 0.0;
    }
    bessel_i0(beta * (1.0 - x * x).sqrt()) / bessel_i0(beta)
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = core::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Precomputed polyphase filter for one `(fs_in, fs_out)` pair.
#[derive(Clone, Debug)]
pub struct Resampler {
    fs_in: u32,
    fs_out: u32,
    p: u64,
    q: u64,
    /// First input index relative to `floor(m q / p)` for every phase.
    first: i64,
    taps_per_phase: usize,
    /// `p` rows of `taps_per_phase` coefficients, each row summing to 1.
    table: Vec<f64>,
}

impl Resampler {
    pub fn new(fs_in: u32, fs_out: u32) -> Result<Self> {
        let (p, q) = resample_ratio(fs_in, fs_out)?;
        let lower = fs_in.min(fs_out) as f64;
        // kernel expressed in input-sample units
        let half_width = TAPS_AT_LOWER_RATE as f64 / 2.0 * fs_in as f64 / lower;
        let cutoff = CUTOFF_FRACTION * lower / fs_in as f64; // cycles per input sample
        let first = -(half_width.floor() as i64);
        let last = half_width.ceil() as i64;
        let taps_per_phase = (last - first + 1) as usize;
        let mut table = vec![0.0; p as usize * taps_per_phase];
        for phase in 0..p as usize {
            let frac = phase as f64 / p as f64;
            let row = &mut table[phase * taps_per_phase..(phase + 1) * taps_per_phase];
            for (j, tap) in row.iter_mut().enumerate() {
                // output position minus input position, in input samples
                let t = frac - (first + j as i64) as f64;
                *tap = 2.0 * cutoff * sinc(2.0 * cutoff * t) * kaiser(t / half_width, KAISER_BETA);
            }
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= sum);
        }
        Ok(Self { fs_in, fs_out, p, q, first, taps_per_phase, table })
    }

    pub fn ratio(&self) -> (u64, u64) {
        (self.p, self.q)
    }

    pub fn taps_per_phase(&self) -> usize {
        self.taps_per_phase
    }

    /// `ceil(len * p / q)`
    pub fn output_len(&self, len: usize) -> usize {
        ((len as u128 * self.p as u128).div_ceil(self.q as u128)) as usize
    }

    pub fn process(&self, x: &[f64]) -> Vec<f64> {
        let out_len = self.output_len(x.len());
        let mut y = vec![0.0; out_len];
        let n = x.len() as i64;
        for (m, out) in y.iter_mut().enumerate() {
            let pos = m as u128 * self.q as u128;
            let base = (pos / self.p as u128) as i64;
            let phase = (pos % self.p as u128) as usize;
            let row = &self.table[phase * self.taps_per_phase..(phase + 1) * self.taps_per_phase];
            let start = base + self.first;
            let lo = (-start).max(0) as usize;
            let hi = ((n - start).max(0) as usize).min(self.taps_per_phase);
            let mut acc = 0.0;
            for j in lo..hi {
                acc += row[j] * x[(start + j as i64) as usize];
            }
            *out = acc;
        }
        y
    }

    pub fn apply(&self, audio: &AudioBuffer) -> Result<AudioBuffer> {
        if audio.fs_hz() != self.fs_in {
            return Err(invalid("resampler input rate does not match the audio"));
        }
        let channels = audio.channels().iter().map(|c| self.process(c)).collect();
        AudioBuffer::new(self.fs_out, channels)
    }
}

/// Converts `x` to `target_fs`; a no-op copy when the rates agree.
pub fn resample(x: &AudioBuffer, target_fs: u32) -> Result<AudioBuffer> {
    if target_fs == 0 {
        return Err(invalid("target sampling frequency must be positive"));
    }
    if x.fs_hz() == target_fs {
        return Ok(x.clone());
    }
    Resampler::new(x.fs_hz(), target_fs)?.apply(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(fs: u32, f: f64, len: usize) -> Vec<f64> {
        (0..len).map(|n| (2.0 * core::f64::consts::PI * f * n as f64 / fs as f64).sin()).collect()
    }

    #[test]
    fn ratio_is_reduced() {
        assert_eq!(resample_ratio(48000, 44100).unwrap(), (147, 160));
        assert_eq!(resample_ratio(48000, 8000).unwrap(), (1, 6));
        assert_eq!(resample_ratio(8000, 48000).unwrap(), (6, 1));
        assert!(resample_ratio(0, 8000).is_err());
    }

    #[test]
    fn bessel_matches_reference_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-14);
        assert!((bessel_i0(12.0) - 18_948.925_349_296_31).abs() < 1e-8);
    }

    #[test]
    fn output_length_rounds_up() {
        let r = Resampler::new(48000, 44100).unwrap();
        assert_eq!(r.output_len(160), 147);
        assert_eq!(r.output_len(161), 148);
        let r = Resampler::new(48000, 8000).unwrap();
        assert_eq!(r.output_len(7), 2);
        assert_eq!(r.taps_per_phase(), 385);
    }

    #[test]
    fn dc_is_preserved_in_the_interior() {
        for (a, b) in [(48000, 44100), (48000, 8000), (8000, 48000), (44100, 48000), (8000, 32000)] {
            let r = Resampler::new(a, b).unwrap();
            let y = r.process(&vec![0.7; 4 * a as usize / 10]);
            let margin = r.taps_per_phase() * b as usize / a as usize + 2;
            for &v in &y[margin..y.len() - margin] {
                assert!((v - 0.7).abs() < 0.7e-6, "{a}->{b}: {v}");
            }
        }
    }

    #[test]
    fn sine_round_trip_through_8k() {
        let x = sine(48000, 1000.0, 48000);
        let down = Resampler::new(48000, 8000).unwrap().process(&x);
        let up = Resampler::new(8000, 48000).unwrap().process(&down);
        assert_eq!(up.len(), x.len());
        let interior = 4800..43200;
        let peak = up[interior.clone()].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 1.0).abs() < 0.005, "peak {peak}");
        let err: f64 = interior.clone().map(|n| (up[n] - x[n]).powi(2)).sum();
        let sig: f64 = interior.map(|n| x[n].powi(2)).sum();
        assert!(10.0 * (err / sig).log10() < -40.0);
    }

    #[test]
    fn same_rate_is_identity() {
        let a = AudioBuffer::mono(16000, sine(16000, 440.0, 100)).unwrap();
        assert_eq!(resample(&a, 16000).unwrap(), a);
    }

    #[test]
    fn time_aligned_impulse() {
        let mut x = vec![0.0; 600];
        x[300] = 1.0;
        let y = Resampler::new(8000, 48000).unwrap().process(&x);
        let argmax = y.iter().enumerate().fold(0, |b, (i, v)| if v.abs() > y[b].abs() { i } else { b });
        assert_eq!(argmax, 1800);
    }
}
