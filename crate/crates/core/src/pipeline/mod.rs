//! Model assembly, separation, training and transfer between rates.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::audio::AudioBuffer;
use crate::data::Example;
use crate::error::{invalid, Result};
use crate::features::{
    apply_mask, apply_mask_backward, apply_whitening_in_place, estimate_whitening, FeatureChain, FeatureTensor,
    MaskTensor, WhiteningStats,
};
use crate::filterbank::{
    design_filterbanks, frame_geometry, AnalysisFilterBank, FrameDuration, FrameGeometry, Spectrogram,
    SynthesisFilterBank,
};
use crate::loss::mae_with_grad;
use crate::metrics::{evaluate_item, ItemMetrics, MetricReport, SkippedItem};
use crate::network::{core_forward, CoreConfig, CoreParameters, GradientTape};
use crate::real::Real;

mod train;

pub use train::{
    train, Clock, EarlyStopping, EpochRecord, NullClock, StopReason, TrainConfig, TrainReport,
};
#[cfg(feature = "std")]
pub use train::WallClock;

/// Compression offset: magnitudes become `ln(alpha + |c|)`.
pub const DEFAULT_ALPHA: f64 = 1.0;

/// Rate at which the feature level gain is 1.
pub const DEFAULT_LEVEL_REFERENCE_HZ: u32 = 48_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ChannelMode {
    Mono,
    Stereo,
}

impl ChannelMode {
    pub fn channels(self) -> usize {
        match self {
            ChannelMode::Mono => 1,
            ChannelMode::Stereo => 2,
        }
    }

    pub fn from_channels(n: usize) -> Result<Self> {
        match n {
            1 => Ok(ChannelMode::Mono),
            2 => Ok(ChannelMode::Stereo),
            _ => Err(invalid(format!("{n} audio channels; only mono and stereo are supported"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ChannelMode::Mono => "mono",
            ChannelMode::Stereo => "stereo",
        }
    }
}

/// Scalar settings of a model other than its tensors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelSettings {
    pub frame_duration: FrameDuration,
    pub fs_hz: u32,
    pub alpha: f64,
    pub channel_mode: ChannelMode,
    /// `None` leaves raw coefficients unscaled. With `Some(r)` they are
    /// multiplied by `frame_duration * r / frame_len`, which undoes the
    /// growth of DFT sums with the number of samples per frame so feature
    /// levels match across rates.
    pub level_reference_hz: Option<u32>,
}

impl ModelSettings {
    pub fn new(frame_duration: FrameDuration, fs_hz: u32, channel_mode: ChannelMode) -> Self {
        Self {
            frame_duration,
            fs_hz,
            alpha: DEFAULT_ALPHA,
            channel_mode,
            level_reference_hz: Some(DEFAULT_LEVEL_REFERENCE_HZ),
        }
    }
}

/// Encoder, feature chain, mask estimator and decoder at one sampling rate.
#[derive(Clone, Debug)]
pub struct SeparationModel<T = f32> {
    settings: ModelSettings,
    geometry: FrameGeometry,
    params: CoreParameters<T>,
    whitening: WhiteningStats,
    analysis: AnalysisFilterBank<T>,
    synthesis: SynthesisFilterBank<T>,
}

/// Fresh model with seeded parameters and identity whitening.
pub fn build_model<T: Real>(
    frame_duration: FrameDuration,
    fs_hz: u32,
    channel_mode: ChannelMode,
    core_config: CoreConfig,
    seed: u64,
) -> Result<SeparationModel<T>> {
    let settings = ModelSettings::new(frame_duration, fs_hz, channel_mode);
    check_channels(&settings, &core_config)?;
    let geometry = frame_geometry(frame_duration, fs_hz)?;
    let params = CoreParameters::init(core_config, seed)?;
    let whitening = WhiteningStats::identity(fs_hz, geometry.num_bins());
    SeparationModel::from_parts(settings, params, whitening)
}

fn check_channels(settings: &ModelSettings, config: &CoreConfig) -> Result<()> {
    config.validate()?;
    let want = 2 * settings.channel_mode.channels();
    if config.in_channels != want || config.mask_channels != want {
        return Err(invalid(format!(
            "{} model needs {want} input and mask channels, config has {} and {}",
            settings.channel_mode.name(),
            config.in_channels,
            config.mask_channels
        )));
    }
    Ok(())
}

impl<T: Real> SeparationModel<T> {
    pub fn from_parts(settings: ModelSettings, params: CoreParameters<T>, whitening: WhiteningStats) -> Result<Self> {
        check_channels(&settings, params.config())?;
        if !(settings.alpha > 0.0 && settings.alpha.is_finite()) {
            return Err(invalid(format!("compression offset {} must be positive", settings.alpha)));
        }
        if settings.level_reference_hz == Some(0) {
            return Err(invalid("level reference rate must be positive"));
        }
        let geometry = frame_geometry(settings.frame_duration, settings.fs_hz)?;
        if whitening.fs_hz != settings.fs_hz
            || whitening.num_bins != geometry.num_bins()
            || whitening.mean.len() != whitening.num_bins
            || whitening.std.len() != whitening.num_bins
        {
            return Err(invalid(format!(
                "whitening for {} bins at {} Hz does not fit {} bins at {} Hz",
                whitening.num_bins,
                whitening.fs_hz,
                geometry.num_bins(),
                settings.fs_hz
            )));
        }
        let (analysis, synthesis) = design_filterbanks(&geometry);
        Ok(Self { settings, geometry, params, whitening, analysis, synthesis })
    }

    pub fn settings(&self) -> &ModelSettings {
        &self.settings
    }

    pub fn frame_duration(&self) -> FrameDuration {
        self.settings.frame_duration
    }

    pub fn fs_hz(&self) -> u32 {
        self.settings.fs_hz
    }

    pub fn alpha(&self) -> f64 {
        self.settings.alpha
    }

    pub fn channel_mode(&self) -> ChannelMode {
        self.settings.channel_mode
    }

    pub fn geometry(&self) -> &FrameGeometry {
        &self.geometry
    }

    pub fn core_config(&self) -> &CoreConfig {
        self.params.config()
    }

    pub fn params(&self) -> &CoreParameters<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut CoreParameters<T> {
        &mut self.params
    }

    pub fn whitening(&self) -> &WhiteningStats {
        &self.whitening
    }

    pub fn set_whitening(&mut self, stats: WhiteningStats) -> Result<()> {
        if stats.fs_hz != self.fs_hz() || stats.num_bins != self.geometry.num_bins() {
            return Err(invalid("whitening statistics belong to another geometry"));
        }
        self.whitening = stats;
        Ok(())
    }

    pub fn analysis(&self) -> &AnalysisFilterBank<T> {
        &self.analysis
    }

    pub fn synthesis(&self) -> &SynthesisFilterBank<T> {
        &self.synthesis
    }

    pub fn level_gain(&self) -> f64 {
        match self.settings.level_reference_hz {
            None => 1.0,
            Some(r) => self.frame_duration().samples_at(r) / self.geometry.frame_len() as f64,
        }
    }

    pub fn feature_chain(&self) -> FeatureChain {
        FeatureChain { alpha: self.alpha(), level_gain: self.level_gain() }
    }

    fn check_input(&self, audio: &AudioBuffer) -> Result<()> {
        if audio.fs_hz() != self.fs_hz() {
            return Err(invalid(format!(
                "input at {} Hz given to a {} Hz model; resample first",
                audio.fs_hz(),
                self.fs_hz()
            )));
        }
        if audio.num_channels() != self.channel_mode().channels() {
            return Err(invalid(format!(
                "{}-channel input given to a {} model",
                audio.num_channels(),
                self.channel_mode().name()
            )));
        }
        Ok(())
    }

    /// Whitened network input for an analyzed mixture.
    pub fn features(&self, spec: &Spectrogram<T>) -> Result<FeatureTensor<T>> {
        let mut feat = self.feature_chain().encode(spec)?;
        apply_whitening_in_place(&mut feat, &self.whitening)?;
        Ok(feat)
    }

    pub fn masks(&self, mixture: &AudioBuffer) -> Result<MaskTensor<T>> {
        self.check_input(mixture)?;
        let spec = self.analysis.analyze(mixture)?;
        core_forward(&self.features(&spec)?, &self.params)
    }

    /// Foreground and background (`mixture - foreground`) estimates.
    pub fn separate(&self, mixture: &AudioBuffer) -> Result<(AudioBuffer, AudioBuffer)> {
        self.check_input(mixture)?;
        let spec = self.analysis.analyze(mixture)?;
        let masks = core_forward(&self.features(&spec)?, &self.params)?;
        self.finish(mixture, &spec, &masks)
    }

    /// Separation with externally supplied masks in place of the network.
    pub fn separate_with_masks(
        &self,
        mixture: &AudioBuffer,
        masks: &MaskTensor<T>,
    ) -> Result<(AudioBuffer, AudioBuffer)> {
        self.check_input(mixture)?;
        let spec = self.analysis.analyze(mixture)?;
        self.finish(mixture, &spec, masks)
    }

    fn finish(
        &self,
        mixture: &AudioBuffer,
        spec: &Spectrogram<T>,
        masks: &MaskTensor<T>,
    ) -> Result<(AudioBuffer, AudioBuffer)> {
        let foreground = self.synthesis.synthesize(&apply_mask(spec, masks)?)?;
        let background = mixture.sub(&foreground)?;
        Ok((foreground, background))
    }

    /// Re-estimate whitening from mixtures at the model's rate.
    pub fn estimate_whitening<'a>(&mut self, corpus: impl IntoIterator<Item = &'a AudioBuffer>) -> Result<()> {
        let chain = self.feature_chain();
        let mut checked = Vec::new();
        for audio in corpus {
            self.check_input(audio)?;
            checked.push(audio);
        }
        self.whitening = estimate_whitening(checked, &self.analysis, &chain)?;
        Ok(())
    }

    /// The same core parameters behind an encoder, decoder and whitening
    /// for `target_fs`. Whitening comes from one pass over `stats_corpus`.
    pub fn transfer<'a>(
        &self,
        target_fs: u32,
        stats_corpus: impl IntoIterator<Item = &'a AudioBuffer>,
    ) -> Result<Self> {
        let geometry = frame_geometry(self.frame_duration(), target_fs)?;
        let settings = ModelSettings { fs_hz: target_fs, ..self.settings };
        let mut model = Self::from_parts(
            settings,
            self.params.clone(),
            WhiteningStats::identity(target_fs, geometry.num_bins()),
        )?;
        model.estimate_whitening(stats_corpus)?;
        Ok(model)
    }

    pub fn cast<U: Real>(&self) -> SeparationModel<U> {
        let (analysis, synthesis) = design_filterbanks(&self.geometry);
        SeparationModel {
            settings: self.settings,
            geometry: self.geometry,
            params: self.params.cast(),
            whitening: self.whitening.clone(),
            analysis,
            synthesis,
        }
    }

    /// Mean absolute error between the foreground estimate and reference.
    pub fn loss(&self, example: &Example) -> Result<f64> {
        self.check_example(example)?;
        let spec = self.analysis.analyze(&example.mixture)?;
        let masks = core_forward(&self.features(&spec)?, &self.params)?;
        let estimate = self.synthesis.synthesize_channels(&apply_mask(&spec, &masks)?)?;
        Ok(mae_with_grad(&estimate, &example.foreground)?.0)
    }

    /// Loss and its gradient with respect to every core parameter, through
    /// masking, synthesis and the loss.
    pub fn loss_and_gradient(&self, example: &Example) -> Result<(f64, CoreParameters<T>)> {
        self.check_example(example)?;
        let spec = self.analysis.analyze(&example.mixture)?;
        let feat = self.features(&spec)?;
        let mut tape = GradientTape::new();
        let masks = tape.forward(&feat, &self.params)?;
        let masked = apply_mask(&spec, &masks)?;
        let estimate = self.synthesis.synthesize_channels(&masked)?;
        let (loss, grad_estimate) = mae_with_grad(&estimate, &example.foreground)?;
        let grad_masked = self.synthesis.synthesize_adjoint(&masked, &grad_estimate)?;
        let grad_masks = apply_mask_backward(&spec, &grad_masked)?;
        Ok((loss, tape.backward(&self.params, &grad_masks)?))
    }

    fn check_example(&self, example: &Example) -> Result<()> {
        self.check_input(&example.mixture)?;
        if example.foreground.fs_hz() != example.mixture.fs_hz()
            || example.foreground.num_channels() != example.mixture.num_channels()
            || example.foreground.len() != example.mixture.len()
        {
            return Err(invalid("foreground reference does not match the mixture"));
        }
        Ok(())
    }
}

/// Separate each example and score it against its stems. Items whose
/// metrics are undefined are listed as skipped.
pub fn evaluate_examples<'a, T: Real>(
    model: &SeparationModel<T>,
    examples: impl IntoIterator<Item = (String, &'a Example)>,
) -> Result<MetricReport> {
    let mut items: Vec<ItemMetrics> = Vec::new();
    let mut skipped = Vec::new();
    for (name, example) in examples {
        let (foreground, _) = model.separate(&example.mixture)?;
        match evaluate_item(name.clone(), &foreground, &example.mixture, &example.foreground, &example.background) {
            Ok(m) => items.push(m),
            Err(e) => skipped.push(SkippedItem { name, reason: format!("{e}") }),
        }
    }
    MetricReport::new(items, skipped)
}
