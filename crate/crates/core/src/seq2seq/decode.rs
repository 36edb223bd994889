use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::{Seq2SeqError, Seq2SeqModel, BOS, EOS};
use crate::autodiff::Tape;

#[derive(Clone, Debug)]
struct Hyp {
    tokens: Vec<usize>,
    log_prob: f64,
    finished: bool,
}

impl Hyp {
    /// Log-probability per emitted token, `<eos>` included.
    fn normalized(&self) -> f64 {
        let len = self.tokens.len() + usize::from(self.finished);
        self.log_prob / len.max(1) as f64
    }
}

impl Seq2SeqModel {
    fn decode_cap(&self, max_len: usize) -> usize {
        // The decoder input is `<bos>` plus the emitted tokens.
        max_len.min(self.config.max_positions - 1)
    }

    fn greedy(&self, src: &[usize], max_len: usize) -> Result<Hyp, Seq2SeqError> {
        let mut tape = Tape::new(&self.params);
        let enc = self.encode_on(&mut tape, src)?;
        let mut hyp = Hyp { tokens: Vec::new(), log_prob: 0.0, finished: false };
        let mut prefix = vec![BOS];
        for _ in 0..self.decode_cap(max_len) {
            let lp = self.next_log_probs(&mut tape, &enc, &prefix)?;
            let mut best = 0;
            for (i, &x) in lp.iter().enumerate() {
                if x > lp[best] {
                    best = i;
                }
            }
            hyp.log_prob += lp[best];
            if best == EOS {
                hyp.finished = true;
                break;
            }
            hyp.tokens.push(best);
            prefix.push(best);
        }
        Ok(hyp)
    }

    fn beam(&self, src: &[usize], max_len: usize, beam_size: usize) -> Result<Vec<Hyp>, Seq2SeqError> {
        let mut tape = Tape::new(&self.params);
        let enc = self.encode_on(&mut tape, src)?;
        let mut alive = vec![Hyp { tokens: Vec::new(), log_prob: 0.0, finished: false }];
        let mut done: Vec<Hyp> = Vec::new();
        for _ in 0..self.decode_cap(max_len) {
            // (score, hypothesis index, token)
            let mut cands: Vec<(f64, usize, usize)> = Vec::new();
            for (h, hyp) in alive.iter().enumerate() {
                let mut prefix = vec![BOS];
                prefix.extend_from_slice(&hyp.tokens);
                let lp = self.next_log_probs(&mut tape, &enc, &prefix)?;
                cands.extend(lp.iter().enumerate().filter(|(_, x)| x.is_finite()).map(|(t, x)| (hyp.log_prob + x, h, t)));
            }
            cands.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let mut next = Vec::new();
            for (score, h, t) in cands.into_iter().take(beam_size) {
                let mut tokens = alive[h].tokens.clone();
                if t == EOS {
                    done.push(Hyp { tokens, log_prob: score, finished: true });
                } else {
                    tokens.push(t);
                    next.push(Hyp { tokens, log_prob: score, finished: false });
                }
            }
            alive = next;
            if alive.is_empty() || done.len() >= beam_size {
                break;
            }
        }
        if done.is_empty() {
            done = alive;
        }
        Ok(done)
    }

    /// Target ids (without `<eos>`) for a source sequence. `beam_size = 1`
    /// is greedy decoding; wider beams rank finished hypotheses by
    /// length-normalised log-probability, with the greedy hypothesis
    /// always among the candidates. Ties resolve to the lower token id.
    pub fn decode(&self, src: &[usize], max_len: usize, beam_size: usize) -> Result<Vec<usize>, Seq2SeqError> {
        let greedy = self.greedy(src, max_len)?;
        if beam_size <= 1 {
            return Ok(greedy.tokens);
        }
        let mut best = greedy;
        for h in self.beam(src, max_len, beam_size)? {
            if h.normalized() > best.normalized() {
                best = h;
            }
        }
        Ok(best.tokens)
    }

    /// Length-normalised log-probability of `tgt` followed by `<eos>`
    /// under the decoding distribution.
    pub fn sequence_score(&self, src: &[usize], tgt: &[usize]) -> Result<f64, Seq2SeqError> {
        let mut tape = Tape::new(&self.params);
        let enc = self.encode_on(&mut tape, src)?;
        let mut prefix = vec![BOS];
        let mut total = 0.0;
        for &t in tgt.iter().chain(core::iter::once(&EOS)) {
            total += self.next_log_probs(&mut tape, &enc, &prefix)?[t];
            prefix.push(t);
        }
        Ok(total / (tgt.len() + 1) as f64)
    }

    /// Masked question tokens in, masked SPARQL tokens out, using the
    /// configured beam width and length cap.
    pub fn translate<S: AsRef<str>>(&self, question: &[S]) -> Result<Vec<String>, Seq2SeqError> {
        let src = self.src_vocab.encode(question);
        let out = self.decode(&src, self.config.max_decode_len, self.config.beam_size)?;
        Ok(self.tgt_vocab.decode(&out))
    }
}
