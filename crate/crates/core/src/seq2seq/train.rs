use alloc::vec::Vec;
use core::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Seq2SeqError, Seq2SeqModel};
use crate::autodiff::{batch_gradients, Nag, NagConfig};
use crate::parallel::Executor;

/// One training pair as vocabulary ids, without `<bos>`/`<eos>`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub src: Vec<usize>,
    pub tgt: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-example loss over the epoch.
    pub loss: f64,
    /// Mean pre-clipping gradient norm over the epoch's steps.
    pub grad_norm: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
}

impl TrainLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }
}

/// Trains with NAG on shuffled mini-batches for up to `max_epochs`.
/// `on_epoch` sees the stats and model after every epoch and may stop
/// training early. If a loss or parameter turns non-finite, the model is
/// restored to its state at the start of that epoch and
/// [`Seq2SeqError::Divergence`] is returned.
pub fn train_stage1<E, H>(model: &mut Seq2SeqModel, data: &[Example], exec: &E, mut on_epoch: H) -> Result<TrainLog, Seq2SeqError>
where
    E: Executor,
    H: FnMut(&EpochStats, &Seq2SeqModel) -> ControlFlow<()>,
{
    if data.is_empty() {
        return Err(Seq2SeqError::Empty);
    }
    let cfg = model.config.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_0001);
    let mut opt = Nag::new(
        NagConfig {
            learning_rate: cfg.learning_rate,
            momentum: cfg.momentum,
            clip_norm: cfg.clip_norm,
        },
        &model.params,
    );
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = TrainLog::default();
    for epoch in 1..=cfg.max_epochs {
        let snapshot = model.params.clone();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut norm_sum = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &data[i]).collect();
            let (loss, grads) = {
                let m = &*model;
                batch_gradients(exec, &m.params, &batch, |tape, ex| m.loss_on(tape, &ex.src, &ex.tgt))?
            };
            if !loss.is_finite() || !grads.is_finite() {
                model.params = snapshot;
                return Err(Seq2SeqError::Divergence { epoch });
            }
            norm_sum += opt.step(&mut model.params, &grads);
            loss_sum += loss * batch.len() as f64;
            steps += 1;
        }
        if !model.params.is_finite() {
            model.params = snapshot;
            return Err(Seq2SeqError::Divergence { epoch });
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / data.len() as f64,
            grad_norm: norm_sum / steps as f64,
        };
        log.epochs.push(stats);
        if on_epoch(&stats, model).is_break() {
            break;
        }
    }
    Ok(log)
}
