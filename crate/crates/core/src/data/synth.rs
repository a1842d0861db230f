//! Synthetic dialogue-like corpus: a voiced, formant-shaped, syllable-gated
//! foreground over a colored-noise and modulated-tone background.
//!
//! The foreground is an analytic band-limited signal evaluated directly at
//! the requested rate. The background is rendered at [`MASTER_RATE_HZ`] and
//! resampled, so renderings at different rates are the same material.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::resample::resample;
use super::Example;
use crate::audio::AudioBuffer;
use crate::error::{invalid, Result};

pub const MASTER_RATE_HZ: u32 = 48000;

const TARGET_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const TONE_STREAM: u64 = 3;

/// Foreground RMS during voiced segments.
const FOREGROUND_LEVEL: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TargetParams {
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
    /// No harmonic is placed at or above this frequency.
    pub max_harmonic_hz: f64,
    pub max_harmonics: usize,
    pub syllable_s: (f64, f64),
    pub pause_s: (f64, f64),
    pub ramp_s: f64,
}

impl Default for TargetParams {
    fn default() -> Self {
        Self {
            f0_min_hz: 100.0,
            f0_max_hz: 300.0,
            max_harmonic_hz: 3500.0,
            max_harmonics: 40,
            syllable_s: (0.15, 0.5),
            pause_s: (0.05, 0.35),
            ramp_s: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct BackgroundParams {
    /// Noise power spectral density falls as `f^-noise_slope`.
    pub noise_slope: f64,
    pub num_tones: usize,
    pub tone_hz: (f64, f64),
    pub am_rate_hz: (f64, f64),
    /// Total tone power relative to the noise, in dB.
    pub tone_level_db: f64,
}

impl Default for BackgroundParams {
    fn default() -> Self {
        Self { noise_slope: 1.0, num_tones: 3, tone_hz: (150.0, 6000.0), am_rate_hz: (0.3, 4.0), tone_level_db: -3.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SynthSpec {
    pub seed: u64,
    pub duration_s: f64,
    pub fs_hz: u32,
    pub channels: usize,
    /// Foreground-to-background energy ratio over voiced samples.
    pub mix_snr_db: f64,
    pub target: TargetParams,
    pub background: BackgroundParams,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            duration_s: 4.0,
            fs_hz: MASTER_RATE_HZ,
            channels: 1,
            mix_snr_db: 0.0,
            target: TargetParams::default(),
            background: BackgroundParams::default(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(invalid("duration must be positive"));
        }
        if self.fs_hz == 0 {
            return Err(invalid("sampling frequency must be positive"));
        }
        if !(1..=2).contains(&self.channels) {
            return Err(invalid("synthetic examples are mono or stereo"));
        }
        if !self.mix_snr_db.is_finite() {
            return Err(invalid("mix SNR must be finite"));
        }
        let t = &self.target;
        if !(t.f0_min_hz > 0.0 && t.f0_min_hz <= t.f0_max_hz && t.max_harmonic_hz > t.f0_max_hz) {
            return Err(invalid("foreground pitch range is inconsistent"));
        }
        if !(t.syllable_s.0 > 2.0 * t.ramp_s && t.syllable_s.0 <= t.syllable_s.1 && t.pause_s.0 > 0.0 && t.pause_s.0 <= t.pause_s.1)
        {
            return Err(invalid("syllable timing is inconsistent"));
        }
        let b = &self.background;
        if !(b.tone_hz.0 > 0.0 && b.tone_hz.0 <= b.tone_hz.1 && b.am_rate_hz.0 >= 0.0 && b.am_rate_hz.0 <= b.am_rate_hz.1) {
            return Err(invalid("background tone ranges are inconsistent"));
        }
        Ok(())
    }

    pub fn num_samples(&self) -> usize {
        self.samples_at(self.fs_hz)
    }

    fn samples_at(&self, fs_hz: u32) -> usize {
        (self.duration_s * fs_hz as f64).round() as usize
    }

    pub fn at_rate(&self, fs_hz: u32) -> Self {
        Self { fs_hz, ..self.clone() }
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn uniform(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.1 > range.0 {
        rng.random_range(range.0..range.1)
    } else {
        range.0
    }
}

struct Syllable {
    start_s: f64,
    len_s: f64,
    f0_hz: f64,
    /// relative pitch change over the syllable
    glide: f64,
    /// per harmonic (amplitude, phase), harmonic `h` at index `h - 1`
    partials: Vec<(f64, f64)>,
}

/// The rate-independent description of one foreground.
struct TargetPlan {
    syllables: Vec<Syllable>,
    ramp_s: f64,
    pans: Vec<f64>,
}

fn formant_envelope(f: f64, formants: &[(f64, f64)]) -> f64 {
    let resonant: f64 = formants.iter().map(|&(fc, bw)| 1.0 / (1.0 + ((f - fc) / bw).powi(2))).sum();
    (0.05 + resonant) * (100.0 / f).sqrt()
}

fn plan_target(spec: &SynthSpec) -> TargetPlan {
    let t = &spec.target;
    let mut rng = stream(spec.seed, TARGET_STREAM);
    let speaker_f0 = uniform(&mut rng, (t.f0_min_hz, t.f0_max_hz));
    let mut syllables = Vec::new();
    let mut start = uniform(&mut rng, t.pause_s);
    loop {
        let len = uniform(&mut rng, t.syllable_s);
        if start + len > spec.duration_s {
            break;
        }
        let f0 = (speaker_f0 * uniform(&mut rng, (0.9, 1.1))).clamp(t.f0_min_hz, t.f0_max_hz);
        let glide = uniform(&mut rng, (-0.15, 0.15));
        let formants = [
            (uniform(&mut rng, (300.0, 850.0)), 80.0),
            (uniform(&mut rng, (900.0, 2300.0)), 120.0),
            (uniform(&mut rng, (2400.0, 3200.0)), 160.0),
        ];
        let level = uniform(&mut rng, (0.5, 1.0));
        let f0_peak = f0 * (1.0 + glide.max(0.0));
        let count = ((t.max_harmonic_hz / f0_peak).ceil() as usize - 1).clamp(1, t.max_harmonics);
        let mut partials: Vec<(f64, f64)> = (1..=count)
            .map(|h| (formant_envelope(h as f64 * f0, &formants), rng.random_range(0.0..2.0 * PI)))
            .collect();
        let power: f64 = partials.iter().map(|p| p.0 * p.0 / 2.0).sum();
        let norm = level / power.sqrt();
        partials.iter_mut().for_each(|p| p.0 *= norm);
        syllables.push(Syllable { start_s: start, len_s: len, f0_hz: f0, glide, partials });
        start += len + uniform(&mut rng, t.pause_s);
    }
    let pans = if spec.channels == 2 {
        let angle = uniform(&mut rng, (PI / 8.0, 3.0 * PI / 8.0));
        vec![angle.cos() * core::f64::consts::SQRT_2, angle.sin() * core::f64::consts::SQRT_2]
    } else {
        vec![1.0]
    };
    TargetPlan { syllables, ramp_s: t.ramp_s, pans }
}

fn gate(tt: f64, len: f64, ramp: f64) -> f64 {
    let edge = tt.min(len - tt);
    if edge <= 0.0 {
        0.0
    } else if edge >= ramp {
        1.0
    } else {
        0.5 - 0.5 * (PI * edge / ramp).cos()
    }
}

fn sample_range(start_s: f64, len_s: f64, fs: f64, total: usize) -> core::ops::Range<usize> {
    let a = ((start_s * fs).ceil() as usize).min(total);
    let b = (((start_s + len_s) * fs).floor() as usize + 1).min(total);
    a..b.max(a)
}

/// Mono foreground at `fs`, plus the voiced-activity gate.
fn render_target(plan: &TargetPlan, spec: &SynthSpec, fs_hz: u32) -> (Vec<f64>, Vec<f64>) {
    let total = spec.samples_at(fs_hz);
    let fs = fs_hz as f64;
    let ceiling = 0.45 * fs;
    let mut out = vec![0.0; total];
    let mut activity = vec![0.0f64; total];
    for s in &plan.syllables {
        let peak_f0 = s.f0_hz * (1.0 + s.glide.max(0.0));
        let usable = s.partials.iter().enumerate().take_while(|(i, _)| (*i + 1) as f64 * peak_f0 < ceiling).count();
        let coeffs: Vec<(f64, f64)> = s.partials[..usable]
            .iter()
            .map(|&(amp, phase)| {
                let (ps, pc) = phase.sin_cos();
                (amp * pc, amp * ps)
            })
            .collect();
        for n in sample_range(s.start_s, s.len_s, fs, total) {
            let tt = n as f64 / fs - s.start_s;
            let g = gate(tt, s.len_s, plan.ramp_s);
            if g == 0.0 {
                continue;
            }
            let phi = 2.0 * PI * s.f0_hz * (tt + s.glide * tt * tt / (2.0 * s.len_s));
            let (sin1, cos1) = phi.sin_cos();
            let (mut re, mut im) = (cos1, sin1);
            let mut acc = 0.0;
            for &(c_sin, c_cos) in &coeffs {
                acc += im * c_sin + re * c_cos;
                (re, im) = (re * cos1 - im * sin1, re * sin1 + im * cos1);
            }
            out[n] += FOREGROUND_LEVEL * g * acc;
            activity[n] = activity[n].max(g);
        }
    }
    (out, activity)
}

/// Sum of independent one-pole low-passed white noises with log-spaced
/// corners, weighted so the PSD follows `f^-slope`.
fn colored_noise(rng: &mut ChaCha8Rng, len: usize, fs: f64, slope: f64) -> Vec<f64> {
    let corners: Vec<f64> = (0..10).map(|i| 25.0 * 2f64.powi(i)).collect();
    let poles: Vec<f64> = corners.iter().map(|&fc| (-2.0 * PI * fc / fs).exp()).collect();
    let gains: Vec<f64> = corners.iter().map(|&fc| fc.powf(-slope / 2.0)).collect();
    let mut state = vec![0.0; corners.len()];
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let mut v = 0.0;
        for i in 0..corners.len() {
            let w: f64 = rng.sample(StandardNormal);
            state[i] = poles[i] * state[i] + (1.0 - poles[i]) * w;
            v += gains[i] * state[i];
        }
        out.push(v);
    }
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v /= rms);
    }
    out
}

fn render_background_master(spec: &SynthSpec) -> Vec<Vec<f64>> {
    let b = &spec.background;
    let len = spec.samples_at(MASTER_RATE_HZ);
    let fs = MASTER_RATE_HZ as f64;
    let mut noise_rng = stream(spec.seed, NOISE_STREAM);
    let mut channels: Vec<Vec<f64>> =
        (0..spec.channels).map(|_| colored_noise(&mut noise_rng, len, fs, b.noise_slope)).collect();
    let mut tone_rng = stream(spec.seed, TONE_STREAM);
    if b.num_tones > 0 {
        let amp = 10f64.powf(b.tone_level_db / 20.0) * (2.0 / b.num_tones as f64).sqrt();
        for _ in 0..b.num_tones {
            let f = (uniform(&mut tone_rng, (b.tone_hz.0.ln(), b.tone_hz.1.ln()))).exp();
            let am = uniform(&mut tone_rng, b.am_rate_hz);
            let depth = uniform(&mut tone_rng, (0.5, 1.0));
            let (p0, p1) = (tone_rng.random_range(0.0..2.0 * PI), tone_rng.random_range(0.0..2.0 * PI));
            let pan = uniform(&mut tone_rng, (0.0, PI / 2.0));
            for (c, ch) in channels.iter_mut().enumerate() {
                let g = match spec.channels {
                    2 if c == 0 => pan.cos() * core::f64::consts::SQRT_2,
                    2 => pan.sin() * core::f64::consts::SQRT_2,
                    _ => 1.0,
                };
                for (n, v) in ch.iter_mut().enumerate() {
                    let t = n as f64 / fs;
                    let env = 1.0 - depth / 2.0 + depth / 2.0 * (2.0 * PI * am * t + p1).sin();
                    *v += g * amp * env * (2.0 * PI * f * t + p0).sin();
                }
            }
        }
    }
    channels
}

fn active_energy(channels: &[Vec<f64>], activity: &[f64]) -> f64 {
    channels
        .iter()
        .map(|ch| ch.iter().zip(activity).filter(|(_, &a)| a > 0.5).map(|(v, _)| v * v).sum::<f64>())
        .sum()
}

fn pan(mono: &[f64], pans: &[f64]) -> Vec<Vec<f64>> {
    pans.iter().map(|&g| mono.iter().map(|v| g * v).collect()).collect()
}

/// Samples where the foreground gate exceeds one half.
pub fn voiced_activity(spec: &SynthSpec) -> Result<Vec<bool>> {
    spec.validate()?;
    let plan = plan_target(spec);
    let (_, activity) = render_target(&plan, spec, spec.fs_hz);
    Ok(activity.into_iter().map(|a| a > 0.5).collect())
}

/// Renders the foreground, background and their sum at `spec.fs_hz`.
pub fn synth_example(spec: &SynthSpec) -> Result<Example> {
    spec.validate()?;
    let plan = plan_target(spec);
    let background_master = render_background_master(spec);

    // the mix gain is fixed at the master rate so every rendering shares it
    let (target_master, activity_master) = render_target(&plan, spec, MASTER_RATE_HZ);
    let fg_energy = active_energy(&pan(&target_master, &plan.pans), &activity_master);
    let bg_energy = active_energy(&background_master, &activity_master);
    let gain = if fg_energy > 0.0 && bg_energy > 0.0 {
        (fg_energy / bg_energy / 10f64.powf(spec.mix_snr_db / 10.0)).sqrt()
    } else {
        FOREGROUND_LEVEL
    };

    let background = AudioBuffer::new(MASTER_RATE_HZ, background_master)?.scaled(gain);
    let (foreground, background) = if spec.fs_hz == MASTER_RATE_HZ {
        (AudioBuffer::new(MASTER_RATE_HZ, pan(&target_master, &plan.pans))?, background)
    } else {
        let (target, _) = render_target(&plan, spec, spec.fs_hz);
        let mut background = resample(&background, spec.fs_hz)?;
        let len = spec.num_samples();
        let channels = background.clone().into_channels().into_iter().map(|mut c| {
            c.resize(len, 0.0);
            c
        });
        background = AudioBuffer::new(spec.fs_hz, channels.collect())?;
        (AudioBuffer::new(spec.fs_hz, pan(&target, &plan.pans))?, background)
    };
    Example::new(foreground, background)
}
