//! Explanation classifier C: maps an explanation to the overall label.
//!
//! Both forms accept hard input (indices) or soft input (distributions). A
//! soft input is multiplied into the embedding table, so it yields the
//! expected embedding and a one-hot distribution reproduces the hard path.

use gef_tensor::{ParamId, ParamStore, Tape, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GefError, Result};
use crate::models::heads::{N_FIELDS, N_SCORES};
use crate::models::layers::{zeros_var, Gru, Linear, SeqInput};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericClassifierConfig {
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub n_classes: usize,
}

/// One embedding per (field, score) pair, concatenated over the five
/// fields and fed to a two-layer perceptron.
#[derive(Debug, Clone)]
pub struct NumericClassifier {
    pub config: NumericClassifierConfig,
    table: ParamId,
    hidden: Linear,
    out: Linear,
}

impl NumericClassifier {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        config: NumericClassifierConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let d = config.embedding_dim;
        if d == 0 || config.hidden_dim == 0 || config.n_classes == 0 {
            return Err(GefError::validation("classifier dimensions must be positive"));
        }
        let table = store.add(format!("{name}.emb"), Tensor::uniform(&[N_FIELDS * N_SCORES, d], 0.5, rng))?;
        let hidden = Linear::new(store, &format!("{name}.hidden"), N_FIELDS * d, config.hidden_dim, rng)?;
        let out = Linear::new(store, &format!("{name}.out"), config.hidden_dim, config.n_classes, rng)?;
        Ok(Self {
            config,
            table,
            hidden,
            out,
        })
    }

    fn mlp(&self, tape: &mut Tape, store: &ParamStore, parts: &[Var]) -> Result<Var> {
        let x = tape.concat_cols(parts)?;
        let h = self.hidden.forward(tape, store, x)?;
        let a = tape.relu(h)?;
        self.out.forward(tape, store, a)
    }

    /// Logits for rows of five scores in `0..6`.
    pub fn logits_hard(&self, tape: &mut Tape, store: &ParamStore, scores: &[[u8; N_FIELDS]]) -> Result<Var> {
        let table = tape.param(store, self.table)?;
        let mut parts = Vec::with_capacity(N_FIELDS);
        for f in 0..N_FIELDS {
            let ids = scores
                .iter()
                .map(|s| {
                    let v = s[f] as usize;
                    if v >= N_SCORES {
                        Err(GefError::Index { index: v, size: N_SCORES })
                    } else {
                        Ok(f * N_SCORES + v)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            parts.push(tape.embedding(table, &ids)?);
        }
        self.mlp(tape, store, &parts)
    }

    /// Logits for five `[batch, 6]` score distributions.
    pub fn logits_soft(&self, tape: &mut Tape, store: &ParamStore, dists: &[Var]) -> Result<Var> {
        if dists.len() != N_FIELDS {
            return Err(GefError::validation(format!("expected {N_FIELDS} score distributions, got {}", dists.len())));
        }
        let table = tape.param(store, self.table)?;
        let mut parts = Vec::with_capacity(N_FIELDS);
        for (f, &d) in dists.iter().enumerate() {
            let rows = tape.slice_rows(table, f * N_SCORES, N_SCORES)?;
            parts.push(tape.matmul(d, rows)?);
        }
        self.mlp(tape, store, &parts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextClassifierConfig {
    pub vocab_size: usize,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub n_classes: usize,
}

/// Each comment is read by a bidirectional GRU; the final states of both
/// directions are joined with the mean input embedding (the skip path).
/// The three comment vectors are concatenated before the output layer.
#[derive(Debug, Clone)]
pub struct TextClassifier {
    pub config: TextClassifierConfig,
    embedding: ParamId,
    fwd: Gru,
    bwd: Gru,
    out: Linear,
}

impl TextClassifier {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        config: TextClassifierConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let (d, h) = (config.embedding_dim, config.hidden_dim);
        if d == 0 || h == 0 || config.vocab_size == 0 || config.n_classes == 0 {
            return Err(GefError::validation("classifier dimensions must be positive"));
        }
        let embedding = store.add(format!("{name}.emb"), Tensor::uniform(&[config.vocab_size, d], 0.1, rng))?;
        let fwd = Gru::new(store, &format!("{name}.fwd"), d, h, rng)?;
        let bwd = Gru::new(store, &format!("{name}.bwd"), d, h, rng)?;
        let out = Linear::new(store, &format!("{name}.out"), 3 * (2 * h + d), config.n_classes, rng)?;
        Ok(Self {
            config,
            embedding,
            fwd,
            bwd,
            out,
        })
    }

    /// Logits for a batch of comment triples, one [`SeqInput`] per
    /// polarity.
    pub fn logits(&self, tape: &mut Tape, store: &ParamStore, comments: &[SeqInput<'_>]) -> Result<Var> {
        if comments.len() != 3 {
            return Err(GefError::validation(format!("expected 3 comments, got {}", comments.len())));
        }
        let table = tape.param(store, self.embedding)?;
        let fwd = self.fwd.bind(tape, store)?;
        let bwd = self.bwd.bind(tape, store)?;
        let h = self.config.hidden_dim;
        let mut parts = Vec::with_capacity(9);
        for input in comments {
            let seq = input.seq();
            let x = input.embed(tape, table)?;
            let h0 = zeros_var(tape, seq.batch, h)?;
            let xf = fwd.project(tape, x)?;
            let hf = fwd.run(tape, xf, seq, h0, false)?;
            let xb = bwd.project(tape, x)?;
            let hb = bwd.run(tape, xb, seq, h0, true)?;
            let (segs, w) = seq.mean_pool_weights();
            let mean = tape.segment_sum(x, &segs, &w, seq.batch)?;
            parts.push(*hf.last().expect("non-empty"));
            parts.push(hb[0]);
            parts.push(mean);
        }
        let x = tape.concat_cols(&parts)?;
        self.out.forward(tape, store, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::layers::SeqBatch;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_hot_rows(tape: &mut Tape, idx: &[usize], n: usize) -> Var {
        let mut data = vec![0.0; idx.len() * n];
        for (r, &i) in idx.iter().enumerate() {
            data[r * n + i] = 1.0;
        }
        tape.constant(&[idx.len(), n], data).unwrap()
    }

    #[test]
    fn numeric_soft_one_hot_equals_hard() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let cfg = NumericClassifierConfig {
            embedding_dim: 4,
            hidden_dim: 8,
            n_classes: 10,
        };
        let c = NumericClassifier::new(&mut store, "c", cfg, &mut rng).unwrap();
        let scores = [[0u8, 1, 2, 3, 4], [5, 5, 0, 2, 1]];
        let mut tape = Tape::new();
        let hard = c.logits_hard(&mut tape, &store, &scores).unwrap();
        let dists: Vec<Var> = (0..5)
            .map(|f| one_hot_rows(&mut tape, &[scores[0][f] as usize, scores[1][f] as usize], 6))
            .collect();
        let soft = c.logits_soft(&mut tape, &store, &dists).unwrap();
        assert_eq!(tape.value(hard), tape.value(soft));
        assert!(c.logits_soft(&mut tape, &store, &dists[..4]).is_err());
        assert!(c.logits_hard(&mut tape, &store, &[[6, 0, 0, 0, 0]]).is_err());
    }

    #[test]
    fn text_soft_one_hot_equals_hard() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut store = ParamStore::new();
        let cfg = TextClassifierConfig {
            vocab_size: 12,
            embedding_dim: 4,
            hidden_dim: 3,
            n_classes: 9,
        };
        let c = TextClassifier::new(&mut store, "c", cfg, &mut rng).unwrap();
        let seqs = [
            SeqBatch::new(&[vec![4, 5, 3], vec![6, 3]]).unwrap(),
            SeqBatch::new(&[vec![7, 3], vec![8, 9, 10, 3]]).unwrap(),
            SeqBatch::new(&[vec![11, 3], vec![3]]).unwrap(),
        ];
        let mut tape = Tape::new();
        let hard_in: Vec<SeqInput> = seqs.iter().map(SeqInput::Hard).collect();
        let hard = c.logits(&mut tape, &store, &hard_in).unwrap();
        let soft_in: Vec<SeqInput> = seqs
            .iter()
            .map(|s| SeqInput::Soft {
                dists: one_hot_rows(&mut tape, &s.ids, 12),
                seq: s,
            })
            .collect();
        let soft = c.logits(&mut tape, &store, &soft_in).unwrap();
        assert_eq!(tape.shape(hard), [2, 9]);
        assert_eq!(tape.value(hard), tape.value(soft));
        assert!(c.logits(&mut tape, &store, &hard_in[..2]).is_err());
    }
}
