use proptest::prelude::*;
use sfisep_core::data::Resampler;
use sfisep_core::features::compress;
use sfisep_core::filterbank::{design_filterbanks, frame_geometry, FrameDuration};
use sfisep_core::metrics::{si_components, si_decompose};
use sfisep_core::network::CoreConfig;
use sfisep_core::pipeline::{build_model, ChannelMode, SeparationModel};
use sfisep_core::AudioBuffer;

fn signal(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reconstruction_is_exact(fs in prop::sample::select(vec![8000u32, 11025, 16000, 22050, 44100]),
                               x in signal(1..3000)) {
        let g = frame_geometry(FrameDuration::DEFAULT, fs).unwrap();
        let (a, s) = design_filterbanks::<f64>(&g);
        let audio = AudioBuffer::mono(fs, x.clone()).unwrap();
        let y = s.synthesize(&a.analyze(&audio).unwrap()).unwrap();
        prop_assert_eq!(y.len(), x.len());
        let err = y.channel(0).iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-9, "max error {}", err);
    }

    #[test]
    fn separation_is_additive(seed in any::<u64>(), stereo in any::<bool>(), x in signal(1..4000)) {
        let mode = if stereo { ChannelMode::Stereo } else { ChannelMode::Mono };
        let config = CoreConfig::with_size(mode.channels(), 2, 4);
        let m: SeparationModel<f32> = build_model(FrameDuration::DEFAULT, 8000, mode, config, seed).unwrap();
        let channels = vec![x.clone(); mode.channels()];
        let mixture = AudioBuffer::new(8000, channels).unwrap();
        let (fg, bg) = m.separate(&mixture).unwrap();
        for c in 0..mode.channels() {
            for ((f, b), v) in fg.channel(c).iter().zip(bg.channel(c)).zip(mixture.channel(c)) {
                prop_assert!((f + b - v).abs() <= f64::EPSILON * v.abs().max(f.abs()));
            }
        }
    }

    #[test]
    fn compression_keeps_phase(re in -100.0f64..100.0, im in -100.0f64..100.0, alpha in 0.1f64..4.0) {
        let g = frame_geometry(FrameDuration::new(4, 1000).unwrap(), 1000).unwrap();
        let mut spec = sfisep_core::filterbank::Spectrogram::<f64>::zeros(g, 1, 1, 1);
        spec.set(0, 0, 0, (re, im));
        let out = compress(&spec, alpha).unwrap();
        let (cr, ci) = out.get(0, 0, 0);
        let mag = (re * re + im * im).sqrt();
        prop_assert!(((cr * cr + ci * ci).sqrt() - (alpha + mag).ln()).abs() < 1e-9);
        if mag > 1e-9 {
            let q = (alpha + mag).ln() / mag;
            prop_assert!((cr - q * re).abs() < 1e-9 && (ci - q * im).abs() < 1e-9);
        }
    }

    #[test]
    fn si_metrics_ignore_estimate_scale(s in signal(64..65), n in signal(64..65), a in 0.5f64..1.5,
                                        b in -1.0f64..1.0, k in 1e-3f64..1e3) {
        let est: Vec<f64> = s.iter().zip(&n).map(|(s, n)| a * s + b * n + 0.01 * s * n).collect();
        let scaled: Vec<f64> = est.iter().map(|v| k * v).collect();
        let m1 = si_decompose(&est, &s, &n).unwrap();
        let m2 = si_decompose(&scaled, &s, &n).unwrap();
        prop_assert!((m1.si_sdr - m2.si_sdr).abs() < 1e-9);
        prop_assert!((m1.si_sir - m2.si_sir).abs() < 1e-9);
        prop_assert!((m1.si_sar - m2.si_sar).abs() < 1e-9);
        let c = si_components(&est, &s, &n).unwrap();
        for i in 0..est.len() {
            prop_assert!((c.target[i] + c.interference[i] + c.artifacts[i] - est[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn resampler_is_linear(pair in prop::sample::select(vec![(8000u32, 48000u32), (48000, 8000), (8000, 44100), (44100, 48000)]),
                           x in signal(1..400), y in signal(1..400), a in -2.0f64..2.0) {
        let r = Resampler::new(pair.0, pair.1).unwrap();
        let len = x.len().min(y.len());
        let (x, y) = (&x[..len], &y[..len]);
        let mix: Vec<f64> = x.iter().zip(y).map(|(x, y)| a * x + y).collect();
        let (rx, ry, rm) = (r.process(x), r.process(y), r.process(&mix));
        prop_assert_eq!(rm.len(), r.output_len(len));
        for i in 0..rm.len() {
            prop_assert!((rm[i] - (a * rx[i] + ry[i])).abs() < 1e-12);
        }
    }
}
