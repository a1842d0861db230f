//! On-disk corpora: stem WAVs plus a JSON manifest, and evaluation over them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sfisep_core::data::{synth_example, CorpusSpec, Example, Split};
use sfisep_core::metrics::{evaluate_item, ItemMetrics, MetricReport, SkippedItem};
use sfisep_core::pipeline::SeparationModel;
use sfisep_core::AudioBuffer;

use crate::error::{Error, Result};
use crate::parallel::par_map;
use crate::wav::{read_wav, write_wav, WavEncoding};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub split: Split,
    pub name: String,
    pub seed: u64,
    pub mix_snr_db: f64,
    /// Stem paths, relative to the manifest's directory.
    pub mixture: PathBuf,
    pub foreground: PathBuf,
    pub background: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub fs_hz: u32,
    pub spec: CorpusSpec,
    pub items: Vec<ManifestItem>,
}

impl Manifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestItem> {
        self.items.iter().filter(move |i| i.split == split)
    }
}

pub fn item_name(split: Split, index: usize) -> String {
    format!("{}_{index:03}", split.name())
}

/// Render `splits` of `spec` at `fs_hz` into `dir` as float32 WAV stems and
/// write the manifest.
pub fn write_corpus(dir: &Path, spec: &CorpusSpec, splits: &[Split], fs_hz: u32, jobs: usize) -> Result<Manifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let work: Vec<(Split, usize)> =
        splits.iter().flat_map(|&s| (0..spec.items(s)).map(move |i| (s, i))).collect();
    let items = par_map(jobs, &work, |&(split, index)| -> Result<ManifestItem> {
        let synth = spec.item(split, index, fs_hz);
        let example = synth_example(&synth)?;
        let name = item_name(split, index);
        let rel = |stem: &str| PathBuf::from(split.name()).join(format!("{name}_{stem}.wav"));
        let item = ManifestItem {
            split,
            name: name.clone(),
            seed: synth.seed,
            mix_snr_db: synth.mix_snr_db,
            mixture: rel("mixture"),
            foreground: rel("foreground"),
            background: rel("background"),
        };
        let sub = dir.join(split.name());
        std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        write_wav(dir.join(&item.mixture), &example.mixture, WavEncoding::Float32)?;
        write_wav(dir.join(&item.foreground), &example.foreground, WavEncoding::Float32)?;
        write_wav(dir.join(&item.background), &example.background, WavEncoding::Float32)?;
        Ok(item)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest { fs_hz, spec: spec.clone(), items };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// A manifest file, or a directory holding `manifest.json`.
pub fn read_manifest(path: &Path) -> Result<(Manifest, PathBuf)> {
    let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
    let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((read_json(&file)?, root))
}

pub fn load_item(root: &Path, item: &ManifestItem) -> Result<Example> {
    let mixture = read_wav(root.join(&item.mixture))?;
    let foreground = read_wav(root.join(&item.foreground))?;
    let background = read_wav(root.join(&item.background))?;
    Ok(Example::from_stems(mixture, foreground, background)?)
}

pub fn load_split(root: &Path, manifest: &Manifest, split: Split) -> Result<Vec<Example>> {
    let out: Vec<Example> = manifest.split(split).map(|i| load_item(root, i)).collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(sfisep_core::Error::InvalidArgument(format!("manifest has no {} items", split.name())).into());
    }
    Ok(out)
}

/// Where foreground estimates come from.
pub enum Estimates<'a> {
    Model(&'a SeparationModel<f32>),
    /// `<dir>/<item name>_foreground.wav` per item.
    Directory(&'a Path),
}

pub fn estimate_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}_foreground.wav"))
}

fn score(root: &Path, item: &ManifestItem, estimates: &Estimates<'_>) -> Result<ItemMetrics> {
    let example = load_item(root, item)?;
    let estimate: AudioBuffer = match estimates {
        Estimates::Model(m) => m.separate(&example.mixture)?.0,
        Estimates::Directory(d) => read_wav(estimate_path(d, &item.name))?,
    };
    Ok(evaluate_item(item.name.clone(), &estimate, &example.mixture, &example.foreground, &example.background)?)
}

/// Metrics over one split. Items with unreadable stems or undefined metrics
/// are skipped and listed with the reason.
pub fn evaluate_corpus(
    root: &Path,
    manifest: &Manifest,
    split: Split,
    estimates: &Estimates<'_>,
    jobs: usize,
) -> Result<MetricReport> {
    let items: Vec<&ManifestItem> = manifest.split(split).collect();
    let results = par_map(jobs, &items, |item| score(root, item, estimates));
    let mut scored = Vec::new();
    let mut skipped = Vec::new();
    for (item, r) in items.iter().zip(results) {
        match r {
            Ok(m) => scored.push(m),
            Err(
                e @ (Error::Io { .. }
                | Error::Parse(_)
                | Error::UnsupportedFormat(_)
                | Error::Core(sfisep_core::Error::UndefinedMetric(_))),
            ) => skipped.push(SkippedItem { name: item.name.clone(), reason: e.to_string() }),
            Err(e) => return Err(e),
        }
    }
    Ok(MetricReport::new(scored, skipped)?)
}
