use sfisep::model_file::{
    inspect_model, load_model, model_from_bytes, model_to_bytes, read_header, save_model, FORMAT_VERSION,
};
use sfisep::Error;
use sfisep_core::filterbank::FrameDuration;
use sfisep_core::network::CoreConfig;
use sfisep_core::pipeline::{build_model, ChannelMode, SeparationModel};
use sfisep_core::AudioBuffer;

fn trained_like(fs: u32) -> SeparationModel<f32> {
    let mut m: SeparationModel<f32> =
        build_model(FrameDuration::DEFAULT, fs, ChannelMode::Mono, CoreConfig::with_size(1, 2, 4), 3).unwrap();
    let x: Vec<f64> = (0..fs as usize / 2).map(|i| ((i * 7919) % 1000) as f64 / 1000.0 - 0.5).collect();
    m.estimate_whitening([&AudioBuffer::mono(fs, x).unwrap()]).unwrap();
    m
}

fn assert_bit_identical(a: &SeparationModel<f32>, b: &SeparationModel<f32>) {
    assert_eq!(a.settings(), b.settings());
    assert_eq!(a.geometry(), b.geometry());
    let bits = |m: &SeparationModel<f32>| m.params().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(a), bits(b));
    let w = |m: &SeparationModel<f32>| {
        m.whitening().mean.iter().chain(&m.whitening().std).map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(w(a), w(b));
    assert_eq!(a.whitening(), b.whitening());
}

#[test]
fn round_trip_is_bit_exact() {
    let m = trained_like(8000);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.sfis");
    save_model(&m, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_bit_identical(&m, &back);
    assert_eq!(model_to_bytes(&back).unwrap(), std::fs::read(&path).unwrap());
}

#[test]
fn rational_frame_duration_survives_for_transfer() {
    let m = trained_like(8000);
    let back = model_from_bytes(&model_to_bytes(&m).unwrap()).unwrap();
    assert_eq!(back.frame_duration(), FrameDuration::new(2048, 48000).unwrap());
    let stats = AudioBuffer::mono(44_100, vec![0.01; 44_100]).unwrap();
    assert_eq!(back.transfer(44_100, [&stats]).unwrap().geometry().frame_len(), 1882);
}

#[test]
fn header_lists_tensors_in_payload_order() {
    let m = trained_like(8000);
    let bytes = model_to_bytes(&m).unwrap();
    assert_eq!(&bytes[..4], b"SFIS");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), FORMAT_VERSION);
    let (h, start) = read_header(&bytes).unwrap();
    assert_eq!(start + h.payload_bytes(), bytes.len());
    assert_eq!(h.tensors[0].name, "block0.weight");
    assert_eq!(h.tensors[0].shape, vec![3, 5, 2, 4]);
    assert_eq!(h.tensors.last().unwrap().name, "whitening.std");
    let mut at = 0;
    for t in &h.tensors {
        assert_eq!(t.offset, at);
        at += t.num_bytes();
    }
    assert_eq!((h.frame_duration_s.numerator, h.frame_duration_s.denominator), (2048, 48000));
}

#[test]
fn bad_magic() {
    let mut bytes = model_to_bytes(&trained_like(8000)).unwrap();
    bytes[..4].copy_from_slice(b"SFIX");
    let e = model_from_bytes(&bytes).unwrap_err();
    assert!(matches!(e, Error::BadMagic(m) if &m == b"SFIX"));
    assert_eq!(e.code(), "bad-magic");
}

#[test]
fn unsupported_version() {
    let mut bytes = model_to_bytes(&trained_like(8000)).unwrap();
    bytes[4..8].copy_from_slice(&99u32.to_le_bytes());
    assert!(matches!(model_from_bytes(&bytes), Err(Error::UnsupportedVersion(99))));
}

#[test]
fn truncated_payload() {
    let bytes = model_to_bytes(&trained_like(8000)).unwrap();
    let cut = &bytes[..bytes.len() - 5];
    match model_from_bytes(cut) {
        Err(Error::Truncated { expected, found }) => {
            assert_eq!(expected, bytes.len());
            assert_eq!(found, cut.len());
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(model_from_bytes(&bytes[..10]), Err(Error::Truncated { .. })));
    assert!(matches!(model_from_bytes(&bytes[..2]), Err(Error::Truncated { .. })));
}

#[test]
fn stereo_paper_config_header_counts_parameters() {
    let m: SeparationModel<f32> =
        build_model(FrameDuration::DEFAULT, 48_000, ChannelMode::Stereo, CoreConfig::paper(2), 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("paper.sfis");
    save_model(&m, &path).unwrap();
    let h = inspect_model(&path).unwrap();
    assert_eq!(h.param_count(), 359_438);
    assert_eq!(h.payload_bytes(), 4 * 359_438 + 2 * 8 * 1025);
}
