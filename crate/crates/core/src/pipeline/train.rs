use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SeparationModel;
use crate::data::{augment, AugmentConfig, Example};
use crate::error::{invalid, Error, Result};
use crate::optim::{Adadelta, AdadeltaConfig};
use crate::real::Real;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainConfig {
    /// Epochs without a new best validation loss before stopping.
    pub patience: usize,
    /// Hard cap on the number of epochs; `None` runs until patience ends it.
    pub max_epochs: Option<usize>,
    pub seed: u64,
    pub augment: AugmentConfig,
    pub optimizer: AdadeltaConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            patience: 10,
            max_epochs: None,
            seed: 0,
            augment: AugmentConfig::default(),
            optimizer: AdadeltaConfig::default(),
        }
    }
}

/// Source of elapsed seconds for epoch timing.
pub trait Clock {
    fn now_s(&mut self) -> f64;
}

/// Always reads zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullClock;

impl Clock for NullClock {
    fn now_s(&mut self) -> f64 {
        0.0
    }
}

#[cfg(feature = "std")]
#[derive(Clone, Copy, Debug)]
pub struct WallClock(std::time::Instant);

#[cfg(feature = "std")]
impl Default for WallClock {
    fn default() -> Self {
        Self(std::time::Instant::now())
    }
}

#[cfg(feature = "std")]
impl Clock for WallClock {
    fn now_s(&mut self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
    pub seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub stop_reason: StopReason,
}

impl TrainReport {
    /// Copy with every epoch time set to zero, for comparing runs.
    pub fn without_timing(&self) -> Self {
        let mut out = self.clone();
        out.epochs.iter_mut().for_each(|e| e.seconds = 0.0);
        out
    }

    pub fn mean_epoch_seconds(&self) -> f64 {
        if self.epochs.is_empty() {
            return 0.0;
        }
        self.epochs.iter().map(|e| e.seconds).sum::<f64>() / self.epochs.len() as f64
    }
}

/// Tracks the best validation loss; only a strict decrease counts as an
/// improvement.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    epoch: usize,
    best_epoch: usize,
    best_loss: f64,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, epoch: 0, best_epoch: 0, best_loss: f64::INFINITY }
    }

    /// Record the next epoch's validation loss. Returns whether it is a new
    /// best.
    pub fn observe(&mut self, loss: f64) -> bool {
        self.epoch += 1;
        if loss < self.best_loss {
            self.best_loss = loss;
            self.best_epoch = self.epoch;
            true
        } else {
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.epoch - self.best_epoch >= self.patience
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }
}

/// One optimizer step per (augmented, full-length) training example in a
/// freshly shuffled order each epoch, then a validation pass. Returns the
/// parameters with the lowest validation loss.
///
/// `on_epoch` sees each record as soon as the epoch ends.
pub fn train<T: Real, C: Clock>(
    model: &SeparationModel<T>,
    train_set: &[Example],
    validation_set: &[Example],
    config: &TrainConfig,
    clock: &mut C,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(SeparationModel<T>, TrainReport)> {
    if train_set.is_empty() {
        return Err(invalid("training corpus is empty"));
    }
    if validation_set.is_empty() {
        return Err(invalid("validation corpus is empty"));
    }
    if config.patience == 0 {
        return Err(invalid("patience must be at least one epoch"));
    }
    if config.max_epochs == Some(0) {
        return Err(invalid("max_epochs must be at least one"));
    }
    config.augment.validate()?;
    for ex in train_set.iter().chain(validation_set) {
        model.check_example(ex)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut current = model.clone();
    let mut best = model.clone();
    let mut optimizer = Adadelta::<T>::new(current.params().len(), config.optimizer);
    let mut stopping = EarlyStopping::new(config.patience);
    let mut epochs = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    loop {
        let epoch = stopping.epoch() + 1;
        let start = clock.now_s();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &item in &order {
            let example = augment(&train_set[item], &config.augment, &mut rng)?;
            let (loss, grads) = current.loss_and_gradient(&example)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Diverged { epoch, item });
            }
            optimizer.step(current.params_mut().data_mut(), grads.data())?;
            if !current.params().is_finite() {
                return Err(Error::Diverged { epoch, item });
            }
            total += loss;
        }
        let mut validation = 0.0;
        for (item, example) in validation_set.iter().enumerate() {
            let loss = current.loss(example)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, item });
            }
            validation += loss;
        }
        let record = EpochRecord {
            epoch,
            train_loss: total / train_set.len() as f64,
            validation_loss: validation / validation_set.len() as f64,
            seconds: clock.now_s() - start,
        };
        if stopping.observe(record.validation_loss) {
            best = current.clone();
        }
        on_epoch(&record);
        epochs.push(record);

        let reason = if stopping.should_stop() {
            Some(StopReason::Patience)
        } else if config.max_epochs.is_some_and(|m| epoch >= m) {
            Some(StopReason::MaxEpochs)
        } else {
            None
        };
        if let Some(stop_reason) = reason {
            let report = TrainReport {
                epochs,
                best_epoch: stopping.best_epoch(),
                best_validation_loss: stopping.best_loss(),
                stop_reason,
            };
            return Ok((best, report));
        }
    }
}
