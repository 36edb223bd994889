use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{label_smoothed_loss_var, Seq2SeqConfig, Seq2SeqError, Vocabulary, BOS, EOS, PAD, UNK};
use crate::autodiff::{AutodiffError, Padding, ParamId, ParamStore, Tape, Tensor, Var};

#[derive(Clone, Debug)]
struct Layer {
    kernel: ParamId,
    bias: ParamId,
}

#[derive(Clone, Debug)]
struct Side {
    embed: ParamId,
    pos: ParamId,
    in_proj: Option<(ParamId, ParamId)>,
    layers: Vec<Layer>,
}

#[derive(Clone, Debug)]
struct Ids {
    enc: Side,
    dec: Side,
    e_proj: Option<ParamId>,
    out_w: ParamId,
    out_b: ParamId,
}

/// Encoder output on a tape: final states `z` and the attention values'
/// input-embedding term (projected to the hidden width when needed).
#[derive(Clone, Copy, Debug)]
pub struct Encoded {
    pub z: Var,
    pub e: Var,
    pub e_hidden: Var,
}

#[derive(Clone, Debug)]
pub struct Seq2SeqModel {
    pub config: Seq2SeqConfig,
    pub src_vocab: Vocabulary,
    pub tgt_vocab: Vocabulary,
    pub params: ParamStore,
    ids: Ids,
}

impl Seq2SeqModel {
    /// Fresh model with seeded random initialisation.
    pub fn new(config: Seq2SeqConfig, src_vocab: Vocabulary, tgt_vocab: Vocabulary) -> Result<Self, Seq2SeqError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (e, h, k) = (config.embed_dim, config.hidden_dim, config.kernel_width);
        let project = e != h;
        let mut p = ParamStore::new();
        for (prefix, vocab, layers) in [("enc", &src_vocab, config.encoder_layers), ("dec", &tgt_vocab, config.decoder_layers)] {
            p.insert_normal(&format!("{prefix}.embed"), &[vocab.len(), e], 0.1, &mut rng);
            p.insert_normal(&format!("{prefix}.pos"), &[config.max_positions, e], 0.1, &mut rng);
            if project {
                p.insert_normal(&format!("{prefix}.in_proj.w"), &[e, h], libm::sqrt(1.0 / e as f64), &mut rng);
                p.insert_zeros(&format!("{prefix}.in_proj.b"), &[h]);
            }
            for l in 0..layers {
                p.insert_normal(&format!("{prefix}.{l}.conv.w"), &[k, h, 2 * h], libm::sqrt(1.0 / (k * h) as f64), &mut rng);
                p.insert_zeros(&format!("{prefix}.{l}.conv.b"), &[2 * h]);
            }
        }
        if project {
            p.insert_normal("att.e_proj.w", &[e, h], libm::sqrt(1.0 / e as f64), &mut rng);
        }
        p.insert_normal("out.w", &[h, tgt_vocab.len()], libm::sqrt(1.0 / h as f64), &mut rng);
        p.insert_zeros("out.b", &[tgt_vocab.len()]);
        Self::from_params(config, src_vocab, tgt_vocab, p)
    }

    /// Wraps existing parameters (e.g. from a checkpoint), checking that
    /// every expected tensor is present with the right shape.
    pub fn from_params(config: Seq2SeqConfig, src_vocab: Vocabulary, tgt_vocab: Vocabulary, params: ParamStore) -> Result<Self, Seq2SeqError> {
        config.validate()?;
        let (e, h, k) = (config.embed_dim, config.hidden_dim, config.kernel_width);
        let project = e != h;
        let expect = |name: &str, shape: &[usize]| -> Result<ParamId, Seq2SeqError> {
            let id = params.id(name)?;
            if params.get(id).shape() != shape {
                return Err(Seq2SeqError::Autodiff(AutodiffError::ShapeMismatch {
                    op: "load",
                    left: shape.to_vec(),
                    right: params.get(id).shape().to_vec(),
                }));
            }
            Ok(id)
        };
        let side = |prefix: &str, vocab: &Vocabulary, layers: usize| -> Result<Side, Seq2SeqError> {
            Ok(Side {
                embed: expect(&format!("{prefix}.embed"), &[vocab.len(), e])?,
                pos: expect(&format!("{prefix}.pos"), &[config.max_positions, e])?,
                in_proj: if project {
                    Some((expect(&format!("{prefix}.in_proj.w"), &[e, h])?, expect(&format!("{prefix}.in_proj.b"), &[h])?))
                } else {
                    None
                },
                layers: (0..layers)
                    .map(|l| {
                        Ok(Layer {
                            kernel: expect(&format!("{prefix}.{l}.conv.w"), &[k, h, 2 * h])?,
                            bias: expect(&format!("{prefix}.{l}.conv.b"), &[2 * h])?,
                        })
                    })
                    .collect::<Result<_, Seq2SeqError>>()?,
            })
        };
        let ids = Ids {
            enc: side("enc", &src_vocab, config.encoder_layers)?,
            dec: side("dec", &tgt_vocab, config.decoder_layers)?,
            e_proj: if project { Some(expect("att.e_proj.w", &[e, h])?) } else { None },
            out_w: expect("out.w", &[h, tgt_vocab.len()])?,
            out_b: expect("out.b", &[tgt_vocab.len()])?,
        };
        Ok(Seq2SeqModel {
            config,
            src_vocab,
            tgt_vocab,
            params,
            ids,
        })
    }

    fn check_len(&self, len: usize) -> Result<(), Seq2SeqError> {
        if len == 0 {
            return Err(Seq2SeqError::Empty);
        }
        if len > self.config.max_positions {
            return Err(Seq2SeqError::TooLong { len, max: self.config.max_positions });
        }
        Ok(())
    }

    /// Word plus positional embedding, then the input projection if any.
    fn embed(&self, tape: &mut Tape<'_>, side: &Side, ids: &[usize]) -> Result<(Var, Var), Seq2SeqError> {
        let table = tape.param(side.embed);
        let pos = tape.param(side.pos);
        let w = tape.embedding_lookup(table, ids)?;
        let positions: Vec<usize> = (0..ids.len()).collect();
        let p = tape.embedding_lookup(pos, &positions)?;
        let e = tape.add(w, p)?;
        let h = match side.in_proj {
            Some((w, b)) => {
                let (w, b) = (tape.param(w), tape.param(b));
                let m = tape.matmul(e, w)?;
                tape.add_row(m, b)?
            }
            None => e,
        };
        Ok((e, h))
    }

    /// conv → GLU → residual.
    fn conv_block(tape: &mut Tape<'_>, layer: &Layer, x: Var, padding: Padding) -> Result<Var, Seq2SeqError> {
        let (k, b) = (tape.param(layer.kernel), tape.param(layer.bias));
        let c = tape.conv1d(x, k, b, padding)?;
        let g = tape.glu(c)?;
        Ok(tape.add(g, x)?)
    }

    pub fn encode_on(&self, tape: &mut Tape<'_>, src: &[usize]) -> Result<Encoded, Seq2SeqError> {
        self.check_len(src.len())?;
        let (e, mut h) = self.embed(tape, &self.ids.enc, src)?;
        for layer in &self.ids.enc.layers {
            h = Self::conv_block(tape, layer, h, Padding::Same)?;
        }
        let e_hidden = match self.ids.e_proj {
            Some(w) => {
                let w = tape.param(w);
                tape.matmul(e, w)?
            }
            None => e,
        };
        Ok(Encoded { z: h, e, e_hidden })
    }

    /// Decoder states `d_L` for every position of `prefix` (which starts
    /// with `<bos>`).
    pub fn decode_on(&self, tape: &mut Tape<'_>, enc: &Encoded, prefix: &[usize]) -> Result<Var, Seq2SeqError> {
        self.check_len(prefix.len())?;
        let (_, mut d) = self.embed(tape, &self.ids.dec, prefix)?;
        let values = tape.add(enc.z, enc.e_hidden)?;
        for layer in &self.ids.dec.layers {
            let h = Self::conv_block(tape, layer, d, Padding::Causal)?;
            let (_, c) = attend(tape, h, enc.z, values)?;
            d = c;
        }
        Ok(d)
    }

    pub fn logits_on(&self, tape: &mut Tape<'_>, d: Var) -> Result<Var, Seq2SeqError> {
        let (w, b) = (tape.param(self.ids.out_w), tape.param(self.ids.out_b));
        let m = tape.matmul(d, w)?;
        Ok(tape.add_row(m, b)?)
    }

    /// Label-smoothed loss of one (source, target) pair; the target excludes
    /// `<bos>`/`<eos>`, which are added here.
    pub fn loss_on(&self, tape: &mut Tape<'_>, src: &[usize], tgt: &[usize]) -> Result<Var, Seq2SeqError> {
        let enc = self.encode_on(tape, src)?;
        let mut prefix = Vec::with_capacity(tgt.len() + 1);
        prefix.push(BOS);
        prefix.extend_from_slice(tgt);
        let mut gold = tgt.to_vec();
        gold.push(EOS);
        let d = self.decode_on(tape, &enc, &prefix)?;
        let logits = self.logits_on(tape, d)?;
        let lp = tape.log_softmax(logits);
        label_smoothed_loss_var(tape, lp, &gold, self.config.gamma)
    }

    /// `(z, e)` as plain tensors.
    pub fn encode(&self, src: &[usize]) -> Result<(Tensor, Tensor), Seq2SeqError> {
        let mut tape = Tape::new(&self.params);
        let enc = self.encode_on(&mut tape, src)?;
        Ok((tape.value(enc.z).clone(), tape.value(enc.e).clone()))
    }

    /// `softmax(W d_L + b)` for a single decoder state.
    pub fn output_distribution(&self, d_l: &[f64]) -> Result<Vec<f64>, Seq2SeqError> {
        let mut tape = Tape::new(&self.params);
        let d = tape.constant(Tensor::matrix(1, d_l.len(), d_l.to_vec()));
        let logits = self.logits_on(&mut tape, d)?;
        let p = tape.softmax(logits);
        Ok(tape.value(p).data().to_vec())
    }

    /// Log-probabilities of the next token after `prefix`, with `<pad>`,
    /// `<bos>` and `<unk>` excluded (−∞).
    pub fn next_log_probs(&self, tape: &mut Tape<'_>, enc: &Encoded, prefix: &[usize]) -> Result<Vec<f64>, Seq2SeqError> {
        let d = self.decode_on(tape, enc, prefix)?;
        let last = tape.slice_rows(d, prefix.len() - 1, prefix.len())?;
        let logits = self.logits_on(tape, last)?;
        let mut row = tape.value(logits).data().to_vec();
        for banned in [PAD, BOS, UNK] {
            row[banned] = f64::NEG_INFINITY;
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + libm::log(row.iter().map(|x| libm::exp(x - max)).sum::<f64>());
        Ok(row.into_iter().map(|x| x - lse).collect())
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }
}

fn attend(tape: &mut Tape<'_>, d: Var, z: Var, values: Var) -> Result<(Var, Var), AutodiffError> {
    let scores = tape.matmul_nt(d, z)?;
    let a = tape.softmax(scores);
    let ctx = tape.matmul(a, values)?;
    let c = tape.add(ctx, d)?;
    Ok((a, c))
}

/// Attention of decoder states `d: [n, h]` over encoder states `z: [m, h]`
/// with input embeddings `e: [m, h]`: `a = softmax(d·zᵀ)` per row and
/// `c = a·(z + e) + d`.
pub fn multi_step_attention(d: &Tensor, z: &Tensor, e: &Tensor) -> Result<(Tensor, Tensor), AutodiffError> {
    let params = ParamStore::new();
    let mut tape = Tape::new(&params);
    let (d, z, e) = (tape.constant(d.clone()), tape.constant(z.clone()), tape.constant(e.clone()));
    let values = tape.add(z, e)?;
    let (a, c) = attend(&mut tape, d, z, values)?;
    Ok((tape.value(a).clone(), tape.value(c).clone()))
}
