use std::path::Path;
use std::process::{Command, Output};

use sfisep::model_file::save_model;
use sfisep::wav::{read_wav, write_wav, WavEncoding};
use sfisep_core::filterbank::FrameDuration;
use sfisep_core::network::CoreConfig;
use sfisep_core::pipeline::{build_model, ChannelMode, SeparationModel};
use sfisep_core::AudioBuffer;

fn sfisep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfisep")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn inspect_reports_the_paper_parameter_count() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("paper.sfis");
    let m: SeparationModel<f32> =
        build_model(FrameDuration::DEFAULT, 48_000, ChannelMode::Stereo, CoreConfig::paper(2), 1).unwrap();
    save_model(&m, &path).unwrap();
    let out = sfisep(&["inspect", "--model", s(&path)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("parameters 359,438"), "{text}");
    assert!(text.contains("frame length 2048"), "{text}");
    assert!(text.contains("bins 1025"), "{text}");
}

#[test]
fn exit_codes_and_error_words() {
    let dir = tempfile::tempdir().unwrap();
    let out = sfisep(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error[usage]"));

    let bogus = dir.path().join("bogus.sfis");
    std::fs::write(&bogus, b"NOPE\x01\x00\x00\x00").unwrap();
    let out = sfisep(&["inspect", "--model", s(&bogus)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).starts_with("error[bad-magic]"), "{}", stderr(&out));

    let out = sfisep(&["resample", s(&dir.path().join("missing.wav")), "--fs", "8000", "--out", s(&bogus)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).starts_with("error[io]"));

    let out = sfisep(&["evaluate", "--data", s(dir.path()), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

fn tiny_model(dir: &Path, fs: u32) -> std::path::PathBuf {
    let path = dir.join(format!("tiny{fs}.sfis"));
    let m: SeparationModel<f32> =
        build_model(FrameDuration::DEFAULT, fs, ChannelMode::Stereo, CoreConfig::with_size(2, 2, 4), 5).unwrap();
    save_model(&m, &path).unwrap();
    path
}

fn stereo_noise(fs: u32, len: usize) -> AudioBuffer {
    let ch = (0..2)
        .map(|c| (0..len).map(|i| (((i * 7 + c * 13) * 2654435761usize) % 65536) as f64 / 65536.0 - 0.5).collect())
        .collect();
    AudioBuffer::new(fs, ch).unwrap()
}

#[test]
fn separated_stems_sum_to_the_input() {
    let dir = tempfile::tempdir().unwrap();
    let model = tiny_model(dir.path(), 16_000);
    let input = dir.path().join("mix.wav");
    let x = stereo_noise(16_000, 9000);
    write_wav(&input, &x, WavEncoding::Float32).unwrap();
    let out = sfisep(&["separate", "--model", s(&model), s(&input), "--out", s(&dir.path().join("sep"))]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let x = read_wav(&input).unwrap();
    let fg = read_wav(dir.path().join("sep/mix_foreground.wav")).unwrap();
    let bg = read_wav(dir.path().join("sep/mix_background.wav")).unwrap();
    assert_eq!((fg.len(), fg.num_channels(), fg.fs_hz()), (x.len(), 2, 16_000));
    for c in 0..2 {
        for ((f, b), v) in fg.channel(c).iter().zip(bg.channel(c)).zip(x.channel(c)) {
            assert!((f + b - v).abs() <= 2.0 * f32::EPSILON as f64 * v.abs().max(f.abs()).max(1e-30) + 1e-9);
        }
    }
}

#[test]
fn low_rate_pathway_composes_from_resample_and_separate() {
    let dir = tempfile::tempdir().unwrap();
    let model = tiny_model(dir.path(), 8000);
    let input = dir.path().join("in48.wav");
    write_wav(&input, &stereo_noise(48_000, 24_000), WavEncoding::Float32).unwrap();
    let low = dir.path().join("in8.wav");
    assert_eq!(sfisep(&["resample", s(&input), "--fs", "8000", "--out", s(&low)]).status.code(), Some(0));
    let sep = dir.path().join("sep");
    assert_eq!(sfisep(&["separate", "--model", s(&model), s(&low), "--out", s(&sep)]).status.code(), Some(0));
    let up = dir.path().join("fg48.wav");
    let fg8 = sep.join("in8_foreground.wav");
    assert_eq!(sfisep(&["resample", s(&fg8), "--fs", "48000", "--out", s(&up)]).status.code(), Some(0));
    let a = read_wav(&up).unwrap();
    assert_eq!((a.fs_hz(), a.len()), (48_000, 24_000));

    // a 48 kHz input handed straight to the 8 kHz model is refused
    let out = sfisep(&["separate", "--model", s(&model), s(&input), "--out", s(&sep)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).starts_with("error[invalid-argument]"));
}

#[test]
fn corpus_train_transfer_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_cfg = dir.path().join("corpus.json");
    std::fs::write(&corpus_cfg, r#"{"train_items": 2, "validation_items": 1, "test_items": 2, "duration_s": 1.5}"#)
        .unwrap();
    let c8 = dir.path().join("c8");
    let c48 = dir.path().join("c48");
    for (fs, d) in [("8000", &c8), ("48000", &c48)] {
        let out = sfisep(&["synth-data", "--config", s(&corpus_cfg), "--seed", "4", "--fs", fs, "--out", s(d), "--jobs", "2"]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }
    let train_cfg = dir.path().join("train.json");
    std::fs::write(
        &train_cfg,
        r#"{"model": {"num_hidden_blocks": 2, "hidden_filters": 4}, "training": {"patience": 1, "max_epochs": 2}}"#,
    )
    .unwrap();
    let m8 = dir.path().join("m8.sfis");
    let out = sfisep(&["train", "--config", s(&train_cfg), "--data", s(&c8), "--seed", "3", "--out", s(&m8)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stderr(&out).contains("epoch   1"));

    let m48 = dir.path().join("m48.sfis");
    let out = sfisep(&["transfer", "--model", s(&m8), "--fs", "48000", "--data", s(&c48), "--out", s(&m48)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = String::from_utf8(sfisep(&["inspect", "--model", s(&m48)]).stdout).unwrap();
    assert!(text.contains("frame length 2048"), "{text}");

    let out = sfisep(&["transfer", "--model", s(&m8), "--fs", "44100", "--data", s(&c48), "--out", s(&m48)]);
    assert_eq!(out.status.code(), Some(3));

    let rep = dir.path().join("rep");
    let out = sfisep(&["evaluate", "--model", s(&m48), "--data", s(&c48), "--out", s(&rep), "--jobs", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(rep.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["items"].as_array().unwrap().len(), 2);
    assert!(std::fs::read_to_string(rep.join("report.txt")).unwrap().starts_with("ΔSI-SDR"));
}

#[test]
fn tiny_experiment_is_complete_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = sfisep(&["experiment", "--config", "builtin:tiny", "--seed", "11", "--out", s(d)]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }
    let ra = std::fs::read(a.join("report.json")).unwrap();
    assert_eq!(ra, std::fs::read(b.join("report.json")).unwrap());
    let report: serde_json::Value = serde_json::from_slice(&ra).unwrap();
    let names: Vec<&str> = report["columns"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["8 kHz", "8→48 kHz", "8→44.1 kHz", "48 kHz"]);
    for c in report["columns"].as_array().unwrap() {
        assert!(!c["report"]["items"].as_array().unwrap().is_empty());
        assert!(c["report"]["aggregate"]["delta_si_sdr"]["mean"].is_f64());
    }
    let table = std::fs::read_to_string(a.join("report.txt")).unwrap();
    assert!(table.lines().next().unwrap().contains("8→44.1 kHz"));
    for m in ["model_8k.sfis", "model_8to48k.sfis", "model_8to44.1k.sfis", "model_48k.sfis"] {
        assert!(a.join(m).exists(), "{m}");
    }
}
