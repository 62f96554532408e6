//! Mini-batch training with Adam and early stopping on validation RMSE.

use serde::{Deserialize, Serialize};

use super::data::FoldData;
use super::metrics::{rmse, EpochStat};
use crate::error::{Error, Result};
use crate::model::{model_forward, Mode, ModelConfig, ModelParams};
use crate::numcore::{AdamConfig, OptimizerState, RngStream};

fn default_batch_size() -> usize {
    64
}

fn default_max_epochs() -> usize {
    100
}

fn default_patience() -> usize {
    10
}

fn default_learning_rate() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSchedule {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub learning_rate: f64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            batch_size: default_batch_size(),
            max_epochs: default_max_epochs(),
            patience: default_patience(),
            learning_rate: default_learning_rate(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochStat>,
    pub best_epoch: usize,
}

/// Train one model on a fold. All randomness (parameter init, batch order,
/// dropout) flows from `(seed, label)` streams, so the trajectory is
/// bit-reproducible and independent of input row order (rows are drawn by
/// seeded permutation each epoch).
pub fn train(
    data: &FoldData,
    config: &ModelConfig,
    schedule: &TrainSchedule,
    seed: u64,
    label: &str,
) -> Result<TrainOutcome> {
    use rand::RngCore;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::Data(format!(
            "{label}: training needs non-empty train and validation splits"
        )));
    }
    if schedule.batch_size == 0 || schedule.max_epochs == 0 {
        return Err(Error::Config("batch size and epochs must be positive".into()));
    }

    let init_seed = RngStream::new(seed, &format!("{label}/init-seed")).next_u64();
    let mut params = ModelParams::init(config, init_seed)?;
    let mut optimizer = OptimizerState::new(AdamConfig::with_learning_rate(schedule.learning_rate));
    let mut dropout_rng = RngStream::new(seed, &format!("{label}/dropout"));

    let mut history = Vec::new();
    let mut best_epoch = 0;
    let mut best_rmse = f64::INFINITY;
    let mut best_params = params.clone();
    let mut stale = 0usize;

    for epoch in 0..schedule.max_epochs {
        let mut order = RngStream::new(seed, &format!("{label}/epoch{epoch}"))
            .permutation(data.train.len());
        let mut epoch_sse = 0.0;
        for (batch_no, chunk) in order.chunks_mut(schedule.batch_size).enumerate() {
            let rows: Vec<_> = chunk.iter().map(|&i| data.train[i].clone()).collect();
            let batch = data.batch(&rows, config, true)?;
            let mut fwd =
                model_forward(&batch, &params, config, Mode::Train, Some(&mut dropout_rng), false)
                    .map_err(|e| {
                        Error::Numeric(format!("{label} epoch {epoch} batch {batch_no}: {e}"))
                    })?;
            let loss = fwd.loss_value().expect("target provided");
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "{label} epoch {epoch} batch {batch_no}: non-finite loss"
                )));
            }
            epoch_sse += loss * rows.len() as f64;
            let grads = fwd.tape.backward(fwd.loss_node.expect("loss recorded"))?;
            optimizer.adam_step(&mut params.tensors, &grads)?;
        }
        let train_mse = epoch_sse / data.train.len() as f64;

        let val_preds = data.predict(&data.val, &params, config, schedule.batch_size)?;
        let val_truth: Vec<f64> = data.val.iter().map(|r| r.y_scaled).collect();
        let val_rmse = rmse(&val_preds, &val_truth);
        history.push(EpochStat {
            epoch,
            train_mse,
            val_rmse,
        });

        if val_rmse < best_rmse {
            best_rmse = val_rmse;
            best_epoch = epoch;
            best_params = params.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale > schedule.patience {
                break;
            }
        }
    }

    Ok(TrainOutcome {
        params: best_params,
        history,
        best_epoch,
    })
}
