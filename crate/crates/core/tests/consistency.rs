//! A band-limited mixture processed at 8 kHz by a model and at 32 kHz by
//! the same parameters after transfer gives the same foreground.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfisep_core::data::resample;
use sfisep_core::filterbank::FrameDuration;
use sfisep_core::network::CoreConfig;
use sfisep_core::pipeline::{build_model, ChannelMode, SeparationModel};
use sfisep_core::AudioBuffer;

struct Partial {
    freq: f64,
    amp: f64,
    phase: f64,
    am_rate: f64,
    am_depth: f64,
}

fn partials(seed: u64) -> Vec<Partial> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..24)
        .map(|_| Partial {
            freq: rng.random_range(100.0..2900.0),
            amp: rng.random_range(0.005..0.05),
            phase: rng.random_range(0.0..TAU),
            am_rate: rng.random_range(0.5..3.0),
            am_depth: rng.random_range(0.0..0.9),
        })
        .collect()
}

fn render(parts: &[Partial], fs: u32, seconds: f64) -> AudioBuffer {
    let n = (seconds * fs as f64) as usize;
    let x = (0..n)
        .map(|i| {
            let t = i as f64 / fs as f64;
            parts
                .iter()
                .map(|p| p.amp * (1.0 + p.am_depth * (TAU * p.am_rate * t).sin()) * (TAU * p.freq * t + p.phase).sin())
                .sum()
        })
        .collect();
    AudioBuffer::mono(fs, x).unwrap()
}

fn si_sdr(estimate: &[f64], reference: &[f64]) -> f64 {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let alpha = dot(estimate, reference) / dot(reference, reference);
    let target: Vec<f64> = reference.iter().map(|r| alpha * r).collect();
    let err: Vec<f64> = estimate.iter().zip(&target).map(|(e, t)| e - t).collect();
    10.0 * (dot(&target, &target) / dot(&err, &err)).log10()
}

#[test]
fn transferred_model_matches_source_rate_on_band_limited_input() {
    let duration = FrameDuration::new(342, 8000).unwrap();
    let config = CoreConfig::with_size(1, 6, 16);
    let mut source: SeparationModel<f64> = build_model(duration, 8000, ChannelMode::Mono, config, 5).unwrap();
    assert_eq!(source.geometry().frame_len(), 342);

    let corpus: Vec<Vec<Partial>> = (0..4).map(|s| partials(100 + s)).collect();
    let at8: Vec<AudioBuffer> = corpus.iter().map(|p| render(p, 8000, 2.0)).collect();
    let at32: Vec<AudioBuffer> = corpus.iter().map(|p| render(p, 32000, 2.0)).collect();
    source.estimate_whitening(&at8).unwrap();
    let target = source.transfer(32000, &at32).unwrap();
    assert_eq!(target.geometry().frame_len(), 4 * 342);

    let item = partials(7);
    let (fg8, _) = source.separate(&render(&item, 8000, 2.0)).unwrap();
    let (fg32, _) = target.separate(&render(&item, 32000, 2.0)).unwrap();
    let fg32_at8 = resample(&fg32, 8000).unwrap();
    assert_eq!(fg32_at8.len(), fg8.len());
    // the resampler's edge transients are excluded
    let edge = 200;
    let n = fg8.len();
    let score = si_sdr(&fg32_at8.channel(0)[edge..n - edge], &fg8.channel(0)[edge..n - edge]);
    assert!(score > 20.0, "SI-SDR between rates {score:.2} dB");
}
