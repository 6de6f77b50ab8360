//! Mini-batch training with per-unit chronological validation splits,
//! early stopping on validation RMSE, and best-parameter restoration.
//! Everything is deterministic in the seed: shuffling uses a counter-based
//! generator and the data loader never reorders units.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;
use vbnet_autodiff::tape::{ParamId, ParamStore, Tape, ValueId};
use vbnet_autodiff::{Adam, OptimError};
use vbnet_core::data::{NormStats, Sample};
use vbnet_core::fleet::ExperimentConfig;

/// Anything the trainer can optimize: a parameter store plus a per-sample
/// scalar loss recipe and a point-prediction path for evaluation.
pub trait SocModel {
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
    /// Records the scalar training loss for one sample onto `tape`, reading
    /// parameters from `store` (not necessarily the model's own).
    fn loss_on_tape(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        sample: &Sample,
        stats: &NormStats,
    ) -> ValueId;
    /// SOC sequence prediction used for metrics; already range-safe.
    fn predict_soc(&self, sample: &Sample, stats: &NormStats) -> Vec<f64>;
    /// Tensors to shrink toward zero after every optimizer step (decoupled
    /// decay), with the rate multiplying the learning rate. Default: none.
    fn weight_decay(&self) -> Option<(f64, Vec<ParamId>)> {
        None
    }
    /// Parameter groups stepping at a multiple of the base learning rate.
    /// Default: everything uniform.
    fn lr_groups(&self) -> Vec<(f64, Vec<ParamId>)> {
        Vec::new()
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no training samples")]
    NoSamples,
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },
    #[error("optimizer failure at epoch {epoch}")]
    Optim {
        epoch: usize,
        #[source]
        source: OptimError,
    },
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping. Ignored when
    /// no validation split exists.
    pub patience: usize,
    pub seed: u64,
}

impl From<&ExperimentConfig> for TrainConfig {
    fn from(cfg: &ExperimentConfig) -> Self {
        Self {
            learning_rate: cfg.learning_rate,
            batch_size: cfg.batch_size,
            epochs: cfg.epochs,
            patience: cfg.patience,
            seed: cfg.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    /// Validation RMSE of the restored parameters; absent when every unit
    /// was too small to donate a validation slice.
    pub best_val_rmse: Option<f64>,
    pub final_train_loss: f64,
    pub stopped_early: bool,
}

/// Units contributing at least this many samples give up their
/// chronologically last tenth as validation data.
const VAL_MIN_SAMPLES: usize = 5;
const VAL_FRAC: f64 = 0.1;

/// Global-norm gradient clip. One violent batch can throw the state
/// recursion into its clamp region, where gradients die for good; rescaling
/// the rare runaway batch keeps every model recoverable.
const CLIP_NORM: f64 = 10.0;

/// Splits indices into (fit, validation) per unit: the last ⌈10%⌉ of each
/// sufficiently large unit validates, everything else fits. Order within
/// each unit is taken as chronological.
pub(crate) fn val_split(samples: &[Sample]) -> (Vec<usize>, Vec<usize>) {
    let mut by_unit: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_unit.entry(s.unit_id).or_default().push(i);
    }
    let (mut fit, mut val) = (Vec::new(), Vec::new());
    for idx in by_unit.values() {
        let n = idx.len();
        if n >= VAL_MIN_SAMPLES {
            let k = (VAL_FRAC * n as f64).ceil() as usize;
            fit.extend_from_slice(&idx[..n - k]);
            val.extend_from_slice(&idx[n - k..]);
        } else {
            fit.extend_from_slice(idx);
        }
    }
    (fit, val)
}

/// Trains the model in place. Returns how the run went; on success the
/// model carries the best parameters seen (by validation RMSE, when a
/// validation split exists), not necessarily the last ones.
pub fn train<M: SocModel + ?Sized>(
    model: &mut M,
    samples: &[Sample],
    stats: &NormStats,
    cfg: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::NoSamples);
    }
    assert!(cfg.batch_size >= 1 && cfg.epochs >= 1);
    let (fit_idx, val_idx) = val_split(samples);
    let val: Vec<&Sample> = val_idx.iter().map(|&i| &samples[i]).collect();
    // nothing big enough to validate on: fit on everything, full epochs
    let fit_idx = if fit_idx.is_empty() { (0..samples.len()).collect() } else { fit_idx };

    let n_scalars = model.store().n_scalars();
    let mut adam = Adam::new(cfg.learning_rate, n_scalars);
    for (mult, tensors) in model.lr_groups() {
        for pid in tensors {
            adam.scale_range(model.store().offset_of(pid), model.store().len_of(pid), mult);
        }
    }
    let decay = model.weight_decay();
    let shrink = decay
        .as_ref()
        .map(|(rate, _)| 1.0 - cfg.learning_rate * rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order = fit_idx;
    let mut tape = Tape::new();
    let mut grads = vec![0.0; n_scalars];

    let mut best_params: Vec<f64> = model.store().flat_values().to_vec();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut bad_epochs = 0;
    let mut stopped_early = false;
    let mut epochs_run = 0;
    let mut final_train_loss = f64::NAN;

    for epoch in 0..cfg.epochs {
        epochs_run = epoch + 1;
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                tape.clear();
                let loss_id = model.loss_on_tape(&mut tape, model.store(), &samples[i], stats);
                let loss = tape.scalar_value(loss_id);
                if !loss.is_finite() {
                    return Err(TrainError::Diverged { epoch });
                }
                loss_sum += loss;
                tape.backward(loss_id);
                tape.accumulate_param_grads(model.store(), &mut grads);
            }
            let inv = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| *g *= inv);
            let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > CLIP_NORM {
                let s = CLIP_NORM / norm;
                grads.iter_mut().for_each(|g| *g *= s);
            }
            adam.step(model.store_mut(), &grads)
                .map_err(|source| TrainError::Optim { epoch, source })?;
            if let (Some((_, tensors)), Some(f)) = (&decay, shrink) {
                for &pid in tensors {
                    for w in model.store_mut().values_of_mut(pid) {
                        *w *= f;
                    }
                }
            }
        }
        final_train_loss = loss_sum / order.len() as f64;

        if !val.is_empty() {
            let rmse = rmse_over(model, val.iter().copied(), stats);
            if rmse < best_val {
                best_val = rmse;
                best_epoch = epoch;
                best_params.copy_from_slice(model.store().flat_values());
                bad_epochs = 0;
            } else {
                bad_epochs += 1;
                if bad_epochs >= cfg.patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    let best_val_rmse = if val.is_empty() {
        None
    } else {
        model
            .store_mut()
            .flat_values_mut()
            .copy_from_slice(&best_params);
        Some(best_val)
    };
    Ok(TrainReport {
        epochs_run,
        best_epoch,
        best_val_rmse,
        final_train_loss,
        stopped_early,
    })
}

fn rmse_over<'a, M: SocModel + ?Sized>(
    model: &M,
    samples: impl Iterator<Item = &'a Sample>,
    stats: &NormStats,
) -> f64 {
    let (mut sq, mut n) = (0.0, 0usize);
    for s in samples {
        let pred = model.predict_soc(s, stats);
        for (p, t) in pred.iter().zip(&s.s_true) {
            sq += (p - t) * (p - t);
            n += 1;
        }
    }
    (sq / n as f64).sqrt()
}

/// Root-mean-square SOC error over all steps of all samples.
pub fn eval_rmse<M: SocModel + ?Sized>(model: &M, samples: &[Sample], stats: &NormStats) -> f64 {
    assert!(!samples.is_empty(), "nothing to evaluate");
    rmse_over(model, samples.iter(), stats)
}

/// Evaluation summary, with the aggregate and a per-unit breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rmse: f64,
    pub per_unit: BTreeMap<usize, f64>,
    pub n_samples: usize,
}

pub fn evaluate<M: SocModel + ?Sized>(
    model: &M,
    samples: &[Sample],
    stats: &NormStats,
) -> EvalReport {
    assert!(!samples.is_empty(), "nothing to evaluate");
    let mut units: BTreeMap<usize, Vec<&Sample>> = BTreeMap::new();
    for s in samples {
        units.entry(s.unit_id).or_default().push(s);
    }
    let per_unit = units
        .iter()
        .map(|(&u, ss)| (u, rmse_over(model, ss.iter().copied(), stats)))
        .collect();
    EvalReport {
        rmse: rmse_over(model, samples.iter(), stats),
        per_unit,
        n_samples: samples.len(),
    }
}
