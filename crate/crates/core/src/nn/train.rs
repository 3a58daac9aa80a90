use std::path::Path;

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{loss_and_grad, BatchLoss, LossConfig, Target};
use super::optim::{Adam, AdamConfig, LrSchedule};
use super::{InputEncoder, InputSpec, Model, Network, NetworkConfig, CHUNK};
use crate::dataset::ForceSample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub schedule: LrSchedule,
    pub adam: AdamConfig,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            max_epochs: 200,
            batch_size: 512,
            base_lr: 1e-4,
            schedule: LrSchedule::default(),
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::config("base_lr must be positive"));
        }
        self.schedule.validate()
    }
}

/// Samples with their loss targets resolved once.
pub struct PreparedSet<'a> {
    samples: &'a [ForceSample],
    targets: Vec<Target>,
}

impl<'a> PreparedSet<'a> {
    pub fn new(samples: &'a [ForceSample]) -> Result<Self> {
        let targets = samples
            .iter()
            .map(ForceSample::target)
            .collect::<Result<_>>()?;
        Ok(PreparedSet { samples, targets })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

struct Partial {
    loss: f64,
    used: usize,
    grad: Vec<f64>,
}

fn chunk_pass(
    network: &Network,
    encoder: &InputEncoder,
    params: &[f64],
    set: &PreparedSet,
    idx: &[usize],
    loss: &LossConfig,
    with_grad: bool,
) -> Result<Partial> {
    let mut ws = network.workspace();
    let mut grad = if with_grad {
        vec![0.0; network.num_params()]
    } else {
        Vec::new()
    };
    let mut total = 0.0;
    let mut used = 0;
    for &i in idx {
        let s = &set.samples[i];
        encoder.encode_into(&s.e, &s.s_c(), ws.input_mut())?;
        let out = network.forward_ws(params, &mut ws)?;
        let pred = Vector3::new(out[0], out[1], out[2]);
        let Some((l, g)) = loss_and_grad(&set.targets[i], &pred, loss)? else {
            continue;
        };
        total += l;
        used += 1;
        if with_grad {
            network.backward_ws(params, &mut ws, g.as_slice(), &mut grad)?;
        }
    }
    Ok(Partial {
        loss: total,
        used,
        grad,
    })
}

fn reduce(
    network: &Network,
    encoder: &InputEncoder,
    params: &[f64],
    set: &PreparedSet,
    idx: &[usize],
    loss: &LossConfig,
    with_grad: bool,
) -> Result<(BatchLoss, Vec<f64>)> {
    let parts: Vec<Result<Partial>> = idx
        .par_chunks(CHUNK)
        .map(|c| chunk_pass(network, encoder, params, set, c, loss, with_grad))
        .collect();
    let mut grad = if with_grad {
        vec![0.0; network.num_params()]
    } else {
        Vec::new()
    };
    let mut total = 0.0;
    let mut used = 0;
    for p in parts {
        let p = p?;
        total += p.loss;
        used += p.used;
        for (a, b) in grad.iter_mut().zip(&p.grad) {
            *a += b;
        }
    }
    if used > 0 {
        let inv = 1.0 / used as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
    }
    let batch = BatchLoss {
        mean: if used > 0 {
            total / used as f64
        } else {
            f64::NAN
        },
        used,
        skipped: idx.len() - used,
    };
    Ok((batch, grad))
}

/// Mean loss over `idx` and its gradient with respect to every parameter.
pub fn batch_gradient(
    network: &Network,
    encoder: &InputEncoder,
    params: &[f64],
    set: &PreparedSet,
    idx: &[usize],
    loss: &LossConfig,
) -> Result<(BatchLoss, Vec<f64>)> {
    if idx.is_empty() {
        return Err(Error::config("gradient of an empty batch"));
    }
    let (batch, grad) = reduce(network, encoder, params, set, idx, loss, true)?;
    network.check_gradient(&grad)?;
    Ok((batch, grad))
}

pub fn evaluate_loss(
    network: &Network,
    encoder: &InputEncoder,
    params: &[f64],
    set: &PreparedSet,
    loss: &LossConfig,
) -> Result<BatchLoss> {
    let idx: Vec<usize> = (0..set.len()).collect();
    Ok(reduce(network, encoder, params, set, &idx, loss, false)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub learning_rate: f64,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Validation loss of the initial parameters.
    pub initial_val_loss: f64,
    pub epochs: Vec<EpochStats>,
    /// `None` if no epoch improved on the initial parameters.
    pub best_epoch: Option<usize>,
    pub best_val_loss: f64,
}

pub struct TrainingOutcome {
    pub params: Vec<f64>,
    pub report: TrainingReport,
}

/// Adam over shuffled mini-batches with the configured learning-rate
/// schedule. Returns the parameters with the lowest validation loss seen.
pub fn train(
    network: &Network,
    encoder: &InputEncoder,
    init: Vec<f64>,
    train_set: &[ForceSample],
    val_set: &[ForceSample],
    config: &TrainingConfig,
    loss: &LossConfig,
) -> Result<TrainingOutcome> {
    config.validate()?;
    loss.validate()?;
    if val_set.is_empty() {
        return Err(Error::config("validation set is empty"));
    }
    if train_set.is_empty() {
        return Err(Error::config("training set is empty"));
    }
    let train_p = PreparedSet::new(train_set)?;
    let val_p = PreparedSet::new(val_set)?;
    let val_loss = |p: &[f64], epoch: Option<usize>| -> Result<f64> {
        let b = evaluate_loss(network, encoder, p, &val_p, loss)?;
        if b.used == 0 {
            return Err(Error::config(
                "every validation sample is below the magnitude floor",
            ));
        }
        if b.mean.is_nan() {
            let at = epoch.map_or("before training".to_string(), |e| format!("at epoch {e}"));
            return Err(Error::Numerical {
                context: format!("validation loss is NaN {at}"),
            });
        }
        Ok(b.mean)
    };

    let mut params = init;
    let initial = val_loss(&params, None)?;
    let mut best = (initial, params.clone(), None);
    let mut adam = Adam::new(network.num_params(), config.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_p.len()).collect();
    let iters_per_epoch = train_p.len().div_ceil(config.batch_size);
    let mut iteration = 0;
    let mut epochs = Vec::with_capacity(config.max_epochs);
    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut used = 0;
        let mut skipped = 0;
        let mut lr = 0.0;
        for batch in order.chunks(config.batch_size) {
            iteration += 1;
            lr = config
                .schedule
                .rate(config.base_lr, iteration, epoch, iters_per_epoch);
            let (b, grad) = batch_gradient(network, encoder, &params, &train_p, batch, loss)?;
            skipped += b.skipped;
            if b.used == 0 {
                continue;
            }
            sum += b.mean * b.used as f64;
            used += b.used;
            adam.step(&mut params, &grad, lr);
        }
        let v = val_loss(&params, Some(epoch))?;
        if v < best.0 {
            best = (v, params.clone(), Some(epoch));
        }
        epochs.push(EpochStats {
            epoch,
            train_loss: if used > 0 {
                sum / used as f64
            } else {
                f64::NAN
            },
            val_loss: v,
            learning_rate: lr,
            skipped,
        });
    }
    Ok(TrainingOutcome {
        params: best.1,
        report: TrainingReport {
            initial_val_loss: initial,
            epochs,
            best_epoch: best.2,
            best_val_loss: best.0,
        },
    })
}

pub const CHECKPOINT_FORMAT: &str = "tactile-force-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub label: String,
    pub sources: String,
    pub best_epoch: Option<usize>,
    pub best_val_loss: f64,
    pub epochs_run: usize,
    pub train_samples: usize,
}

/// Self-describing JSON model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub network: NetworkConfig,
    pub input: InputSpec,
    pub loss: LossConfig,
    pub training: TrainingConfig,
    pub metadata: CheckpointMeta,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn to_model(&self) -> Result<Model> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::schema(format!(
                "unsupported checkpoint format `{}`",
                self.format
            )));
        }
        Model::new(&self.network, self.input.clone(), self.params.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::json("checkpoint", e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::schema(format!("{}: {e}", path.display())))
    }
}
