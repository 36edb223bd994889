//! Convolutional encoder-decoder that maps masked questions to masked
//! SPARQL token sequences.

mod decode;
mod model;
mod train;
mod vocab;

pub use model::{multi_step_attention, Encoded, Seq2SeqModel};
pub use train::{train_stage1, EpochStats, Example, TrainLog};
pub use vocab::{build_vocab, placeholder_tokens, VocabError, Vocabulary, BOS, EOS, PAD, SPARQL_KEYWORDS, SPECIALS, UNK};

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Seq2SeqError {
    #[error("sequence of length {len} exceeds max_positions {max}")]
    TooLong { len: usize, max: usize },
    #[error("label smoothing gamma {gamma} must lie in (1/Z, 1] with Z = {z}")]
    InvalidGamma { gamma: f64, z: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("empty sequence")]
    Empty,
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Seq2SeqConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub kernel_width: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub max_positions: usize,
    pub gamma: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub clip_norm: Option<f64>,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub beam_size: usize,
    pub max_decode_len: usize,
}

impl Default for Seq2SeqConfig {
    fn default() -> Self {
        Seq2SeqConfig {
            embed_dim: 64,
            hidden_dim: 64,
            kernel_width: 3,
            encoder_layers: 4,
            decoder_layers: 4,
            max_positions: 64,
            gamma: 0.9,
            learning_rate: 0.25,
            momentum: 0.99,
            clip_norm: Some(0.1),
            batch_size: 8,
            max_epochs: 100,
            seed: 1,
            beam_size: 1,
            max_decode_len: 40,
        }
    }
}

impl Seq2SeqConfig {
    pub fn validate(&self) -> Result<(), Seq2SeqError> {
        let bad = |m: &str| Err(Seq2SeqError::InvalidConfig(m.into()));
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return bad("dimensions must be positive");
        }
        if self.kernel_width % 2 == 0 {
            return bad("kernel_width must be odd");
        }
        if self.encoder_layers == 0 || self.decoder_layers == 0 {
            return bad("at least one encoder and one decoder layer");
        }
        if self.max_positions < 2 {
            return bad("max_positions must be at least 2");
        }
        if self.batch_size == 0 || self.beam_size == 0 {
            return bad("batch_size and beam_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Smoothed target distribution: γ on the gold id, (1−γ)/(Z−1) elsewhere.
fn smoothing(gamma: f64, z: usize) -> Result<(f64, f64), Seq2SeqError> {
    if !(gamma > 1.0 / z as f64 && gamma <= 1.0) || z < 2 {
        return Err(Seq2SeqError::InvalidGamma { gamma, z });
    }
    Ok((gamma, (1.0 - gamma) / (z - 1) as f64))
}

/// `−(1/N) Σ_n Σ_z q(z|n) log P[n][z]` for step distributions `probs`
/// (`[N, Z]`) and gold ids `targets`.
pub fn label_smoothed_loss(probs: &Tensor, targets: &[usize], gamma: f64) -> Result<f64, Seq2SeqError> {
    let z = probs.cols();
    let (on, off) = smoothing(gamma, z)?;
    if targets.len() != probs.rows() || targets.is_empty() {
        return Err(Seq2SeqError::Empty);
    }
    let mut total = 0.0;
    for (n, &t) in targets.iter().enumerate() {
        for (j, p) in probs.row(n).iter().enumerate() {
            let q = if j == t { on } else { off };
            if q != 0.0 {
                total += q * libm::log(*p);
            }
        }
    }
    Ok(-total / targets.len() as f64)
}

/// Tape version over log-probabilities `[N, Z]`.
pub fn label_smoothed_loss_var(tape: &mut Tape<'_>, log_probs: Var, targets: &[usize], gamma: f64) -> Result<Var, Seq2SeqError> {
    let (n, z) = {
        let lp = tape.value(log_probs);
        (lp.rows(), lp.cols())
    };
    let (on, off) = smoothing(gamma, z)?;
    if targets.len() != n || n == 0 {
        return Err(Seq2SeqError::Empty);
    }
    let mut q: Vec<f64> = alloc::vec![-off / n as f64; n * z];
    for (i, &t) in targets.iter().enumerate() {
        q[i * z + t] = -on / n as f64;
    }
    let q = tape.constant(Tensor::matrix(n, z, q));
    let weighted = tape.mul(log_probs, q)?;
    Ok(tape.sum(weighted))
}
