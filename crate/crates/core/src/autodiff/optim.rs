use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{AutodiffError, Gradients, ParamStore, Tape, Tensor, Var};
use crate::parallel::Executor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NagConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for NagConfig {
    fn default() -> Self {
        NagConfig {
            learning_rate: 0.25,
            momentum: 0.99,
            clip_norm: Some(0.1),
        }
    }
}

/// SGD with Nesterov momentum:
/// `v ← μv + g`, `θ ← θ − lr·(g + μv)`, after clipping `g` to `clip_norm`.
#[derive(Clone, Debug)]
pub struct Nag {
    pub config: NagConfig,
    velocity: Vec<Tensor>,
}

impl Nag {
    pub fn new(config: NagConfig, params: &ParamStore) -> Self {
        Nag {
            config,
            velocity: params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect(),
        }
    }

    /// Applies one update and returns the gradient norm before clipping.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) -> f64 {
        let norm = grads.norm();
        let clip = match self.config.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        let (lr, mu) = (self.config.learning_rate, self.config.momentum);
        for (id, v) in params.ids().zip(&mut self.velocity) {
            let g = grads.get(id).data();
            let p = params.get_mut(id).data_mut();
            for ((p, v), g) in p.iter_mut().zip(v.data_mut()).zip(g) {
                let g = g * clip;
                *v = mu * *v + g;
                *p -= lr * (g + mu * *v);
            }
        }
        norm
    }
}

/// Mean loss and mean gradients of one batch. Each example gets its own
/// tape; gradients are summed in example order so the result does not
/// depend on how the executor schedules work.
pub fn batch_gradients<X, T, F, E>(exec: &X, params: &ParamStore, batch: &[T], loss_fn: F) -> Result<(f64, Gradients), E>
where
    X: Executor,
    T: Sync,
    F: Fn(&mut Tape<'_>, &T) -> Result<Var, E> + Sync,
    E: From<AutodiffError> + Send,
{
    let per_example = exec.map(batch, |ex| -> Result<(f64, Gradients), E> {
        let mut tape = Tape::new(params);
        let loss = loss_fn(&mut tape, ex)?;
        let value = tape.value(loss).item();
        Ok((value, tape.backward(loss)?))
    });
    let mut total = Gradients::zeros_like(params);
    let mut loss = 0.0;
    for r in per_example {
        let (l, g) = r?;
        loss += l;
        total.add_assign(&g);
    }
    let n = batch.len().max(1) as f64;
    total.scale(1.0 / n);
    Ok((loss / n, total))
}
