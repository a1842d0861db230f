//! Train at a low rate, transfer to higher rates, train a native twin, and
//! compare all variants on the same test items.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sfisep_core::data::{resample, CorpusSpec, Example, Split};
use sfisep_core::filterbank::FrameDuration;
use sfisep_core::metrics::{evaluate_item, MetricReport, SkippedItem};
use sfisep_core::network::CoreConfig;
use sfisep_core::pipeline::{
    build_model, train, ChannelMode, Clock, EpochRecord, SeparationModel, StopReason, TrainConfig, TrainReport,
};
use sfisep_core::AudioBuffer;

use crate::corpus::{item_name, write_json};
use crate::error::{Error, Result};
use crate::model_file::{save_model, Rational};
use crate::parallel::par_map;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub num_hidden_blocks: usize,
    pub hidden_filters: usize,
    pub channel_mode: ChannelMode,
    pub frame_duration_s: Rational,
    pub alpha: f64,
    pub level_reference_hz: Option<u32>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_hidden_blocks: 6,
            hidden_filters: 16,
            channel_mode: ChannelMode::Mono,
            frame_duration_s: Rational { numerator: 2048, denominator: 48_000 },
            alpha: sfisep_core::pipeline::DEFAULT_ALPHA,
            level_reference_hz: Some(sfisep_core::pipeline::DEFAULT_LEVEL_REFERENCE_HZ),
        }
    }
}

impl ModelConfig {
    pub fn core_config(&self) -> CoreConfig {
        CoreConfig::with_size(self.channel_mode.channels(), self.num_hidden_blocks, self.hidden_filters)
    }

    pub fn frame_duration(&self) -> Result<FrameDuration> {
        Ok(FrameDuration::new(self.frame_duration_s.numerator, self.frame_duration_s.denominator)?)
    }

    pub fn build(&self, fs_hz: u32, seed: u64) -> Result<SeparationModel<f32>> {
        let m: SeparationModel<f32> =
            build_model(self.frame_duration()?, fs_hz, self.channel_mode, self.core_config(), seed)?;
        let mut settings = *m.settings();
        settings.alpha = self.alpha;
        settings.level_reference_hz = self.level_reference_hz;
        Ok(SeparationModel::from_parts(settings, m.params().clone(), m.whitening().clone())?)
    }
}

/// One JSON document driving a full run. `seed` drives the corpus, the
/// initialization and training; the seeds nested in `corpus` and
/// `training` are overwritten with it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub corpus: CorpusSpec,
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub train_fs_hz: u32,
    pub native_fs_hz: u32,
    /// Further transfer targets evaluated on the test items rendered at
    /// that rate.
    pub extra_transfer_fs_hz: Vec<u32>,
    pub output_dir: Option<PathBuf>,
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            corpus: CorpusSpec::default(),
            model: ModelConfig::default(),
            training: TrainConfig::default(),
            train_fs_hz: 8_000,
            native_fs_hz: 48_000,
            extra_transfer_fs_hz: vec![44_100],
            output_dir: None,
            jobs: 1,
        }
    }
}

impl ExperimentConfig {
    fn validate(&self) -> Result<()> {
        if self.corpus.channels != self.model.channel_mode.channels() {
            return Err(Error::Usage(format!(
                "corpus has {} channels but the model is {}",
                self.corpus.channels,
                self.model.channel_mode.name()
            )));
        }
        if self.train_fs_hz == 0 || self.native_fs_hz == 0 || self.extra_transfer_fs_hz.contains(&0) {
            return Err(Error::Usage("sampling rates must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub model: String,
    pub fs_hz: u32,
    pub epochs: Vec<EpochLosses>,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub stop_reason: StopReason,
}

impl TrainingSummary {
    fn new(model: &str, fs_hz: u32, r: &TrainReport) -> Self {
        Self {
            model: model.into(),
            fs_hz,
            epochs: r
                .epochs
                .iter()
                .map(|e| EpochLosses { epoch: e.epoch, train_loss: e.train_loss, validation_loss: e.validation_loss })
                .collect(),
            best_epoch: r.best_epoch,
            best_validation_loss: r.best_validation_loss,
            stop_reason: r.stop_reason,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    /// Rate the model's parameters were trained at.
    pub train_fs_hz: u32,
    /// Rate the separation ran at.
    pub processing_fs_hz: u32,
    /// Rate of the references the metrics were computed against.
    pub eval_fs_hz: u32,
    pub report: MetricReport,
}

/// Everything deterministic about a run. Wall-clock data lives in
/// [`Timing`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub training: Vec<TrainingSummary>,
    pub columns: Vec<Column>,
}

impl ExperimentReport {
    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Aligned table: one row per metric, one column per variant.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<16}", "");
        for c in &self.columns {
            out.push_str(&format!(" {:>17}", c.name));
        }
        out.push('\n');
        let rows = self.columns.first().map(|c| c.report.rows().len()).unwrap_or(0);
        for r in 0..rows {
            let label = self.columns[0].report.rows()[r].0;
            out.push_str(&format!("{label:<16}"));
            for c in &self.columns {
                let v = c.report.rows()[r].1;
                out.push_str(&format!(" {:>8.2} ± {:>5.2}", v.mean, v.std));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Timing {
    pub model: String,
    pub fs_hz: u32,
    pub epoch_seconds: Vec<f64>,
}

impl Timing {
    pub fn mean_epoch_seconds(&self) -> f64 {
        self.epoch_seconds.iter().sum::<f64>() / self.epoch_seconds.len().max(1) as f64
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub timings: Vec<Timing>,
}

pub fn rate_label(fs_hz: u32) -> String {
    if fs_hz % 1000 == 0 {
        format!("{}", fs_hz / 1000)
    } else {
        format!("{}", fs_hz as f64 / 1000.0)
    }
}

fn mixtures(examples: &[Example]) -> impl Iterator<Item = &AudioBuffer> {
    examples.iter().map(|e| &e.mixture)
}

fn generate(spec: &CorpusSpec, split: Split, fs_hz: u32, jobs: usize) -> Result<Vec<Example>> {
    let idx: Vec<usize> = (0..spec.items(split)).collect();
    par_map(jobs, &idx, |&i| sfisep_core::data::synth_example(&spec.item(split, i, fs_hz)))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(Error::from)
}

/// Separate every test item, optionally at a different rate than the
/// references (resampling in and out), and score against the references.
fn score(
    model: &SeparationModel<f32>,
    test: &[Example],
    jobs: usize,
) -> Result<MetricReport> {
    let idx: Vec<usize> = (0..test.len()).collect();
    let results = par_map(jobs, &idx, |&i| -> Result<_> {
        let ex = &test[i];
        let fs = ex.mixture.fs_hz();
        let fg = if fs == model.fs_hz() {
            model.separate(&ex.mixture)?.0
        } else {
            let low = resample(&ex.mixture, model.fs_hz())?;
            let fg = resample(&model.separate(&low)?.0, fs)?;
            // resampled length can differ by a sample; match the reference
            let len = ex.mixture.len();
            let ch = fg.into_channels().into_iter().map(|mut c| {
                c.resize(len, 0.0);
                c
            });
            AudioBuffer::new(fs, ch.collect())?
        };
        Ok(evaluate_item(item_name(Split::Test, i), &fg, &ex.mixture, &ex.foreground, &ex.background))
    });
    let mut items = Vec::new();
    let mut skipped = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r? {
            Ok(m) => items.push(m),
            Err(e) => skipped.push(SkippedItem { name: item_name(Split::Test, i), reason: e.to_string() }),
        }
    }
    Ok(MetricReport::new(items, skipped)?)
}

fn train_at<C: Clock>(
    config: &ExperimentConfig,
    name: &str,
    fs_hz: u32,
    jobs: usize,
    clock: &mut C,
    log: &mut dyn FnMut(&str),
) -> Result<(SeparationModel<f32>, TrainingSummary, Timing)> {
    let (train_set, val_set) = {
        log(&format!("rendering {name} training corpus"));
        (generate(&config.corpus, Split::Train, fs_hz, jobs)?, generate(&config.corpus, Split::Validation, fs_hz, jobs)?)
    };
    let mut model = config.model.build(fs_hz, config.seed)?;
    model.estimate_whitening(mixtures(&train_set))?;
    let mut tc = config.training.clone();
    tc.seed = config.seed;
    let mut seconds = Vec::new();
    let (model, report) = train(&model, &train_set, &val_set, &tc, clock, |e: &EpochRecord| {
        seconds.push(e.seconds);
        log(&format!(
            "{name} epoch {:>3}: train {:.6} validation {:.6} ({:.1} s)",
            e.epoch, e.train_loss, e.validation_loss, e.seconds
        ));
    })?;
    let timing = Timing { model: name.into(), fs_hz, epoch_seconds: seconds };
    Ok((model, TrainingSummary::new(name, fs_hz, &report), timing))
}

/// Full comparison: low-rate model evaluated through resampling, transfers
/// to the native and extra rates, and a twin trained at the native rate.
pub fn run_experiment<C: Clock>(
    config: &ExperimentConfig,
    clock: &mut C,
    log: &mut dyn FnMut(&str),
) -> Result<ExperimentOutcome> {
    config.validate()?;
    let mut corpus = config.corpus.clone();
    corpus.seed = config.seed;
    let config = &ExperimentConfig { corpus, ..config.clone() };
    let jobs = config.jobs.max(1);
    let (low, high) = (config.train_fs_hz, config.native_fs_hz);
    let (low_name, high_name) = (format!("{} kHz", rate_label(low)), format!("{} kHz", rate_label(high)));

    let (low_model, low_summary, low_timing) = train_at(config, &low_name, low, jobs, clock, log)?;

    log(&format!("rendering {high_name} corpus"));
    let high_train = generate(&config.corpus, Split::Train, high, jobs)?;
    let high_test = generate(&config.corpus, Split::Test, high, jobs)?;
    let mut columns = Vec::new();
    let mut models: Vec<(String, SeparationModel<f32>)> = Vec::new();

    log(&format!("evaluating {low_name} model through resampling"));
    columns.push(Column {
        name: low_name.clone(),
        train_fs_hz: low,
        processing_fs_hz: low,
        eval_fs_hz: high,
        report: score(&low_model, &high_test, jobs)?,
    });

    let transfer_name = format!("{}→{} kHz", rate_label(low), rate_label(high));
    log(&format!("evaluating {transfer_name}"));
    let transferred = low_model.transfer(high, mixtures(&high_train))?;
    drop(high_train);
    columns.push(Column {
        name: transfer_name.clone(),
        train_fs_hz: low,
        processing_fs_hz: high,
        eval_fs_hz: high,
        report: score(&transferred, &high_test, jobs)?,
    });
    models.push((transfer_name, transferred));

    for &fs in &config.extra_transfer_fs_hz {
        let name = format!("{}→{} kHz", rate_label(low), rate_label(fs));
        log(&format!("evaluating {name}"));
        let stats = generate(&config.corpus, Split::Train, fs, jobs)?;
        let test = generate(&config.corpus, Split::Test, fs, jobs)?;
        let t = low_model.transfer(fs, mixtures(&stats))?;
        columns.push(Column { name: name.clone(), train_fs_hz: low, processing_fs_hz: fs, eval_fs_hz: fs, report: score(&t, &test, jobs)? });
        models.push((name, t));
    }

    let (high_model, high_summary, high_timing) = train_at(config, &high_name, high, jobs, clock, log)?;
    log(&format!("evaluating {high_name} model"));
    columns.push(Column {
        name: high_name.clone(),
        train_fs_hz: high,
        processing_fs_hz: high,
        eval_fs_hz: high,
        report: score(&high_model, &high_test, jobs)?,
    });
    models.insert(0, (low_name, low_model));
    models.push((high_name, high_model));

    for c in &columns {
        log(&format!("{}: ΔSI-SDR {:.2} dB", c.name, c.report.aggregate.delta_si_sdr.mean));
    }
    let report = ExperimentReport { seed: config.seed, training: vec![low_summary, high_summary], columns };
    if let Some(dir) = &config.output_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join("report.json"), &report)?;
        std::fs::write(dir.join("report.txt"), report.to_table()).map_err(|e| Error::io(dir, e))?;
        for (name, m) in &models {
            save_model(m, dir.join(format!("model_{}.sfis", file_stem(name))))?;
        }
    }
    Ok(ExperimentOutcome { report, timings: vec![low_timing, high_timing] })
}

fn file_stem(name: &str) -> String {
    name.replace("→", "to").replace(" kHz", "k").replace(' ', "_")
}
