//! The `sfisep` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sfisep_core::data::{resample, CorpusSpec, Split};
use sfisep_core::network::param_count;
use sfisep_core::pipeline::{train, TrainConfig, WallClock};

use crate::corpus::{evaluate_corpus, load_split, read_json, read_manifest, write_corpus, write_json, Estimates};
use crate::error::{Error, Result};
use crate::experiment::{run_experiment, ExperimentConfig, ModelConfig};
use crate::model_file::{inspect_model, load_model, save_model};
use crate::wav::{read_wav, write_wav, WavEncoding};

pub const TINY_CONFIG: &str = include_str!("../configs/tiny.json");
pub const ACCEPTANCE_CONFIG: &str = include_str!("../configs/acceptance.json");

#[derive(Parser, Debug)]
#[command(name = "sfisep", version, about = "Sampling-frequency-independent dialogue separation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render a synthetic corpus (stem WAVs and manifest.json).
    SynthData {
        /// Corpus description (JSON); defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 48_000)]
        fs: u32,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Train a model on the train and validation splits of a corpus.
    Train {
        /// Model and training settings (JSON with `model` and `training`).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Corpus directory or manifest.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output model file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Move a model to another sampling rate, re-estimating whitening from
    /// the mixtures of a corpus at that rate.
    Transfer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        fs: u32,
        /// Corpus at the target rate; its training mixtures feed the statistics.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split a mixture WAV into foreground and background WAVs.
    Separate {
        #[arg(long)]
        model: PathBuf,
        input: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Change the sampling rate of a WAV file.
    Resample {
        input: PathBuf,
        #[arg(long)]
        fs: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a model, or a directory of `<item>_foreground.wav` estimates,
    /// on a corpus split.
    Evaluate {
        #[arg(long, conflicts_with = "estimates", required_unless_present = "estimates")]
        model: Option<PathBuf>,
        #[arg(long)]
        estimates: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Output directory for report.json and report.txt.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Print a model's header, geometry and parameter count.
    Inspect {
        #[arg(long)]
        model: PathBuf,
    },
    /// Low-rate training, transfers, native twin and comparison table.
    Experiment {
        /// Experiment JSON, or `builtin:tiny` / `builtin:acceptance`.
        #[arg(long)]
        config: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainRunConfig {
    pub model: ModelConfig,
    pub training: TrainConfig,
}

fn parse_split(name: &str) -> Result<Split> {
    Split::ALL
        .into_iter()
        .find(|s| s.name() == name)
        .ok_or_else(|| Error::Usage(format!("unknown split {name:?}; use train, validation or test")))
}

pub fn load_experiment_config(arg: Option<&str>) -> Result<ExperimentConfig> {
    let text = match arg {
        None | Some("builtin:acceptance") => ACCEPTANCE_CONFIG.to_string(),
        Some("builtin:tiny") => TINY_CONFIG.to_string(),
        Some(path) => std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?,
    };
    Ok(serde_json::from_str(&text)?)
}

/// `359438` as `359,438`.
pub fn group_thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn log(msg: &str) {
    eprintln!("{msg}");
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::SynthData { config, seed, fs, out, jobs } => {
            let mut spec: CorpusSpec = match config {
                Some(p) => read_json(&p)?,
                None => CorpusSpec::default(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            let m = write_corpus(&out, &spec, &Split::ALL, fs, jobs)?;
            log(&format!("wrote {} items at {fs} Hz to {}", m.items.len(), out.display()));
        }
        Command::Train { config, data, seed, out } => {
            let mut cfg: TrainRunConfig = match config {
                Some(p) => read_json(&p)?,
                None => TrainRunConfig::default(),
            };
            if let Some(s) = seed {
                cfg.training.seed = s;
            }
            let (manifest, root) = read_manifest(&data)?;
            let train_set = load_split(&root, &manifest, Split::Train)?;
            let val_set = load_split(&root, &manifest, Split::Validation)?;
            let mut model = cfg.model.build(manifest.fs_hz, cfg.training.seed)?;
            model.estimate_whitening(train_set.iter().map(|e| &e.mixture))?;
            let (best, report) = train(&model, &train_set, &val_set, &cfg.training, &mut WallClock::default(), |e| {
                log(&format!(
                    "epoch {:>3}: train {:.6} validation {:.6} ({:.1} s)",
                    e.epoch, e.train_loss, e.validation_loss, e.seconds
                ))
            })?;
            log(&format!("best epoch {} ({:?})", report.best_epoch, report.stop_reason));
            save_model(&best, &out)?;
        }
        Command::Transfer { model, fs, data, out } => {
            let m = load_model(&model)?;
            let (manifest, root) = read_manifest(&data)?;
            if manifest.fs_hz != fs {
                return Err(sfisep_core::Error::InvalidArgument(format!(
                    "statistics corpus is at {} Hz, target is {fs} Hz",
                    manifest.fs_hz
                ))
                .into());
            }
            let stats = load_split(&root, &manifest, Split::Train)?;
            let t = m.transfer(fs, stats.iter().map(|e| &e.mixture))?;
            save_model(&t, &out)?;
            log(&format!("frame length {} -> {}", m.geometry().frame_len(), t.geometry().frame_len()));
        }
        Command::Separate { model, input, out } => {
            let m = load_model(&model)?;
            let x = read_wav(&input)?;
            let (fg, bg) = m.separate(&x)?;
            create_dir(&out)?;
            let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("input");
            write_wav(out.join(format!("{stem}_foreground.wav")), &fg, WavEncoding::Float32)?;
            write_wav(out.join(format!("{stem}_background.wav")), &bg, WavEncoding::Float32)?;
        }
        Command::Resample { input, fs, out } => {
            let x = read_wav(&input)?;
            write_wav(&out, &resample(&x, fs)?, WavEncoding::Float32)?;
        }
        Command::Evaluate { model, estimates, data, split, out, jobs } => {
            let split = parse_split(&split)?;
            let (manifest, root) = read_manifest(&data)?;
            let loaded;
            let source = match (&model, &estimates) {
                (Some(p), _) => {
                    loaded = load_model(p)?;
                    Estimates::Model(&loaded)
                }
                (None, Some(d)) => Estimates::Directory(d),
                (None, None) => return Err(Error::Usage("--model or --estimates is required".into())),
            };
            let report = evaluate_corpus(&root, &manifest, split, &source, jobs)?;
            create_dir(&out)?;
            write_json(&out.join("report.json"), &report)?;
            std::fs::write(out.join("report.txt"), report.to_text()).map_err(|e| Error::io(&out, e))?;
            eprint!("{}", report.to_text());
            for s in &report.skipped {
                log(&format!("skipped {}: {}", s.name, s.reason));
            }
        }
        Command::Inspect { model } => {
            let h = inspect_model(&model)?;
            let m = load_model(&model)?;
            let g = m.geometry();
            let mut stdout = std::io::stdout().lock();
            let text = format!(
                "format version {}\nframe duration {}/{} s\nsampling rate {} Hz\nchannels {}\nframe length {}\nhop {}\nbins {}\nalpha {}\nblocks {} hidden + 1 output, {} filters, kernel {}x{}\nparameters {}\n",
                crate::model_file::FORMAT_VERSION,
                h.frame_duration_s.numerator,
                h.frame_duration_s.denominator,
                h.fs_hz,
                h.channel_mode.name(),
                g.frame_len(),
                g.hop_len(),
                g.num_bins(),
                h.alpha,
                h.core_config.num_hidden_blocks,
                h.core_config.hidden_filters,
                h.core_config.kernel_time,
                h.core_config.kernel_freq,
                group_thousands(param_count(&h.core_config)),
            );
            stdout.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))?;
        }
        Command::Experiment { config, seed, out, jobs } => {
            let mut cfg = load_experiment_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(j) = jobs {
                cfg.jobs = j;
            }
            cfg.output_dir = Some(out);
            let outcome = run_experiment(&cfg, &mut WallClock::default(), &mut |m| log(m))?;
            eprint!("{}", outcome.report.to_table());
            for t in &outcome.timings {
                log(&format!("{}: {:.2} s per epoch", t.model, t.mean_epoch_seconds()));
            }
        }
    }
    Ok(())
}

/// Parse, run, and map the outcome to a process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            eprint!("error[usage]: {e}");
            return 2;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            e.exit_code()
        }
    }
}
