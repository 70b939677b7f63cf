//! Conditional VAE comment generator.
//!
//! The condition of one comment is `c = [v_c; v_e]`: a learned embedding of
//! the polarity control (pos, neg, neu) joined with the review encoding.
//! A prior network maps `c` to a diagonal Gaussian over `z`; a recognition
//! network maps the golden comment and `c` to the posterior. The decoder is
//! a one-layer GRU whose initial state comes from `[z; c]` and whose input
//! at every step is the previous token plus a projection of `[z; c]`.
//!
//! All three comments of a batch are decoded together as `3 * batch` rows,
//! polarity-major: row `p * batch + b` is polarity `p` of example `b`.

use gef_tensor::{ParamId, ParamStore, Tape, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{GefError, Result};
use crate::models::layers::{Gru, Linear, SeqBatch};
use crate::text::vocab::{BOS, EOS, PAD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvaeConfig {
    pub vocab_size: usize,
    pub embedding_dim: usize,
    /// Decoder and recognition-encoder state size.
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub control_dim: usize,
    /// Size of `v_e`.
    pub cond_dim: usize,
    /// Hidden width of the prior and recognition perceptrons.
    pub mlp_dim: usize,
    pub max_len: usize,
}

impl CvaeConfig {
    pub const N_CONTROLS: usize = 3;
    pub const DEFAULT_LATENT_DIM: usize = 64;
    pub const DEFAULT_MAX_LEN: usize = 75;

    pub fn new(vocab_size: usize, cond_dim: usize) -> Self {
        Self {
            vocab_size,
            embedding_dim: 100,
            hidden_dim: 128,
            latent_dim: Self::DEFAULT_LATENT_DIM,
            control_dim: 16,
            cond_dim,
            mlp_dim: 128,
            max_len: Self::DEFAULT_MAX_LEN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.vocab_size,
            self.embedding_dim,
            self.hidden_dim,
            self.latent_dim,
            self.control_dim,
            self.cond_dim,
            self.mlp_dim,
            self.max_len,
        ];
        if dims.contains(&0) {
            return Err(GefError::validation("cvae dimensions must be positive"));
        }
        if self.vocab_size <= EOS {
            return Err(GefError::validation("cvae vocabulary lacks reserved tokens"));
        }
        Ok(())
    }
}

/// Mean and log-variance perceptron.
#[derive(Debug, Clone)]
struct GaussianMlp {
    hidden: Linear,
    out: Linear,
    latent: usize,
}

impl GaussianMlp {
    fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, input: usize, mlp: usize, latent: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            hidden: Linear::new(store, &format!("{name}.hidden"), input, mlp, rng)?,
            out: Linear::new(store, &format!("{name}.out"), mlp, 2 * latent, rng)?,
            latent,
        })
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<(Var, Var)> {
        let h = self.hidden.forward(tape, store, x)?;
        let a = tape.tanh(h)?;
        let o = self.out.forward(tape, store, a)?;
        Ok((tape.slice_cols(o, 0, self.latent)?, tape.slice_cols(o, self.latent, self.latent)?))
    }
}

/// Per-row `KL(N(mq, e^lq) ‖ N(mp, e^lp))`, summed over latent dimensions:
/// `0.5 Σ (lp − lq + e^(lq−lp) + (mq−mp)² e^(−lp) − 1)`. Identical
/// arguments give exactly zero.
pub fn gaussian_kl(tape: &mut Tape, mq: Var, lq: Var, mp: Var, lp: Var) -> Result<Var> {
    let dl = tape.sub(lp, lq)?;
    let neg_dl = tape.scale(dl, -1.0)?;
    let ratio = tape.exp(neg_dl)?;
    let dm = tape.sub(mq, mp)?;
    let dm2 = tape.mul(dm, dm)?;
    let neg_lp = tape.scale(lp, -1.0)?;
    let inv_vp = tape.exp(neg_lp)?;
    let maha = tape.mul(dm2, inv_vp)?;
    let a = tape.add(dl, ratio)?;
    let b = tape.add(a, maha)?;
    let c = tape.add_scalar(b, -1.0)?;
    let s = tape.sum_cols(c)?;
    Ok(tape.scale(s, 0.5)?)
}

/// Scalar reference for [`gaussian_kl`] on one row.
pub fn gaussian_kl_scalar(mq: &[f64], lq: &[f64], mp: &[f64], lp: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..mq.len() {
        let d = mq[k] - mp[k];
        s += lp[k] - lq[k] + (lq[k] - lp[k]).exp() + d * d * (-lp[k]).exp() - 1.0;
    }
    0.5 * s
}

/// ELBO terms for one batch. Row vectors are `[batch, 1]` and already sum
/// the three comments of each example.
#[derive(Debug, Clone, Copy)]
pub struct ElboOutput {
    /// `kl_weight · KL + reconstruction`, per example.
    pub loss_rows: Var,
    pub kl_rows: Var,
    pub recon_rows: Var,
    /// Batch means of the three rows.
    pub loss: Var,
    pub kl: Var,
    pub recon: Var,
    /// Teacher-forced output distributions, `[T * 3 * batch, V]`,
    /// time-major over the polarity-major rows.
    pub probs: Var,
    pub max_steps: usize,
}

#[derive(Debug, Clone)]
pub struct Cvae {
    pub config: CvaeConfig,
    controls: ParamId,
    embedding: ParamId,
    recog_rnn: Gru,
    recog: GaussianMlp,
    prior: GaussianMlp,
    init: Linear,
    cond_in: Linear,
    decoder: Gru,
    out: Linear,
}

/// Lowest index of the largest entry outside `excluded`.
fn argmax_excluding(row: &[f64], excluded: &[usize]) -> usize {
    let mut best = None;
    for (j, &v) in row.iter().enumerate() {
        if excluded.contains(&j) {
            continue;
        }
        if best.map_or(true, |b: usize| v > row[b]) {
            best = Some(j);
        }
    }
    best.expect("vocabulary larger than the excluded set")
}

/// Append EOS to every comment of one polarity.
pub fn with_eos<S: AsRef<[usize]>>(comments: &[S]) -> Result<SeqBatch> {
    let seqs: Vec<Vec<usize>> = comments
        .iter()
        .map(|c| c.as_ref().iter().copied().chain([EOS]).collect())
        .collect();
    SeqBatch::new(&seqs)
}

impl Cvae {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, config: CvaeConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let c = config.control_dim + config.cond_dim;
        let (d, h, z) = (config.embedding_dim, config.hidden_dim, config.latent_dim);
        Ok(Self {
            controls: store.add(format!("{name}.controls"), Tensor::uniform(&[CvaeConfig::N_CONTROLS, config.control_dim], 0.5, rng))?,
            embedding: store.add(format!("{name}.emb"), Tensor::uniform(&[config.vocab_size, d], 0.1, rng))?,
            recog_rnn: Gru::new(store, &format!("{name}.recog_rnn"), d, h, rng)?,
            recog: GaussianMlp::new(store, &format!("{name}.recog"), h + c, config.mlp_dim, z, rng)?,
            prior: GaussianMlp::new(store, &format!("{name}.prior"), c, config.mlp_dim, z, rng)?,
            init: Linear::new(store, &format!("{name}.init"), z + c, h, rng)?,
            cond_in: Linear::new(store, &format!("{name}.cond_in"), z + c, 3 * h, rng)?,
            decoder: Gru::new(store, &format!("{name}.dec"), d, h, rng)?,
            out: Linear::new(store, &format!("{name}.out"), h, config.vocab_size, rng)?,
            config,
        })
    }

    /// `[3*batch, control + cond]` condition rows.
    fn conditions(&self, tape: &mut Tape, store: &ParamStore, v_e: Var) -> Result<Var> {
        let batch = tape.rows(v_e);
        let controls = tape.param(store, self.controls)?;
        let ids: Vec<usize> = (0..CvaeConfig::N_CONTROLS).flat_map(|p| std::iter::repeat(p).take(batch)).collect();
        let vc = tape.embedding(controls, &ids)?;
        let ve = tape.concat_rows(&[v_e, v_e, v_e])?;
        Ok(tape.concat_cols(&[vc, ve])?)
    }

    /// Initial state and per-step input bias from `[z; c]`.
    fn decoder_start(&self, tape: &mut Tape, store: &ParamStore, z: Var, cond: Var) -> Result<(Var, Var)> {
        let zc = tape.concat_cols(&[z, cond])?;
        let h0_in = self.init.forward(tape, store, zc)?;
        let h0 = tape.tanh(h0_in)?;
        let bias = self.cond_in.forward(tape, store, zc)?;
        Ok((h0, bias))
    }

    fn check_lengths(&self, comments: &[&[Vec<usize>]; 3]) -> Result<usize> {
        let batch = comments[0].len();
        if batch == 0 || comments.iter().any(|c| c.len() != batch) {
            return Err(GefError::validation("comment triples must be non-empty and aligned"));
        }
        for c in comments.iter().flat_map(|p| p.iter()) {
            if c.len() > self.config.max_len {
                return Err(GefError::validation(format!(
                    "comment of {} tokens exceeds the decode cap {}",
                    c.len(),
                    self.config.max_len
                )));
            }
        }
        Ok(batch)
    }

    /// Teacher-forced ELBO for comment triples `comments[p][b]` (token ids
    /// without EOS). `eps` supplies the reparameterisation noise.
    pub fn elbo<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        v_e: Var,
        comments: &[&[Vec<usize>]; 3],
        kl_weight: f64,
        eps: &mut R,
    ) -> Result<ElboOutput> {
        let batch = self.check_lengths(comments)?;
        if tape.rows(v_e) != batch {
            return Err(GefError::validation("v_e rows differ from the comment batch"));
        }
        let rows = 3 * batch;
        let all: Vec<&Vec<usize>> = comments.iter().flat_map(|p| p.iter()).collect();
        let targets = with_eos(&all)?;
        let inputs: Vec<Vec<usize>> = all
            .iter()
            .map(|c| std::iter::once(BOS).chain(c.iter().copied()).collect())
            .collect();
        let inputs = SeqBatch::new(&inputs)?;
        let t_max = targets.max_len;

        let cond = self.conditions(tape, store, v_e)?;
        let table = tape.param(store, self.embedding)?;

        // Recognition network over the golden comment.
        let rx = tape.embedding(table, &targets.ids)?;
        let rg = self.recog_rnn.bind(tape, store)?;
        let rxp = rg.project(tape, rx)?;
        let h0 = crate::models::layers::zeros_var(tape, rows, self.config.hidden_dim)?;
        let rs = rg.run(tape, rxp, &targets, h0, false)?;
        let hx = *rs.last().expect("non-empty");
        let rin = tape.concat_cols(&[hx, cond])?;
        let (mq, lq) = self.recog.forward(tape, store, rin)?;
        let (mp, lp) = self.prior.forward(tape, store, cond)?;
        let kl = gaussian_kl(tape, mq, lq, mp, lp)?;

        let zl = self.config.latent_dim;
        let noise: Vec<f64> = (0..rows * zl).map(|_| StandardNormal.sample(eps)).collect();
        let noise = tape.constant(&[rows, zl], noise)?;
        let half_lq = tape.scale(lq, 0.5)?;
        let sd = tape.exp(half_lq)?;
        let sn = tape.mul(sd, noise)?;
        let z = tape.add(mq, sn)?;

        let (h_start, bias) = self.decoder_start(tape, store, z, cond)?;
        let dx = tape.embedding(table, &inputs.ids)?;
        let dg = self.decoder.bind(tape, store)?;
        let dxp = dg.project(tape, dx)?;
        let bias_all = tape.concat_rows(&vec![bias; t_max])?;
        let dxp = tape.add(dxp, bias_all)?;
        let states = dg.run(tape, dxp, &inputs, h_start, false)?;
        let hs = tape.concat_rows(&states)?;
        let logits = self.out.forward(tape, store, hs)?;
        let probs = tape.softmax(logits)?;
        let ce = tape.cross_entropy_rows(logits, &targets.ids)?;
        let (segs, mask): (Vec<usize>, Vec<f64>) = (0..t_max)
            .flat_map(|t| (0..rows).map(move |r| (r, t)))
            .map(|(r, t)| (r % batch, f64::from(u8::from(t < targets.lengths[r]))))
            .unzip();
        let recon_rows = tape.segment_sum(ce, &segs, &mask, batch)?;
        let kl_segs: Vec<usize> = (0..rows).map(|r| r % batch).collect();
        let kl_rows = tape.segment_sum(kl, &kl_segs, &vec![1.0; rows], batch)?;
        let wkl = tape.scale(kl_rows, kl_weight)?;
        let loss_rows = tape.add(wkl, recon_rows)?;
        Ok(ElboOutput {
            loss_rows,
            kl_rows,
            recon_rows,
            loss: tape.mean(loss_rows)?,
            kl: tape.mean(kl_rows)?,
            recon: tape.mean(recon_rows)?,
            probs,
            max_steps: t_max,
        })
    }

    /// Teacher-forced distributions of polarity `p`, `[T_p * batch, V]`
    /// time-major, where `T_p` is `seq.max_len` for that polarity's golden
    /// comments with EOS.
    pub fn polarity_probs(&self, tape: &mut Tape, out: &ElboOutput, p: usize, batch: usize, seq: &SeqBatch) -> Result<Var> {
        let rows = 3 * batch;
        let parts = (0..seq.max_len)
            .map(|t| tape.slice_rows(out.probs, t * rows + p * batch, batch))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(tape.concat_rows(&parts)?)
    }

    /// Greedy decoding from the prior mean. Returns `[pos, neg, neu]` token
    /// ids (without EOS) per example, each at most `max_len` tokens.
    pub fn decode(&self, tape: &mut Tape, store: &ParamStore, v_e: Var) -> Result<Vec<[Vec<usize>; 3]>> {
        let batch = tape.rows(v_e);
        let rows = 3 * batch;
        let cond = self.conditions(tape, store, v_e)?;
        let (z, _) = self.prior.forward(tape, store, cond)?;
        let (mut h, bias) = self.decoder_start(tape, store, z, cond)?;
        let table = tape.param(store, self.embedding)?;
        let dg = self.decoder.bind(tape, store)?;
        let out = self.out.bind(tape, store)?;
        let mut prev = vec![BOS; rows];
        let mut done = vec![false; rows];
        let mut seqs: Vec<Vec<usize>> = vec![Vec::new(); rows];
        for _ in 0..self.config.max_len {
            let x = tape.embedding(table, &prev)?;
            let xp = dg.project(tape, x)?;
            let xp = tape.add(xp, bias)?;
            h = dg.step(tape, xp, h)?;
            let logits = out.apply(tape, h)?;
            let v = self.config.vocab_size;
            let vals = tape.value(logits).to_vec();
            for r in 0..rows {
                let row = &vals[r * v..(r + 1) * v];
                let tok = argmax_excluding(row, &[PAD, BOS]);
                prev[r] = tok;
                if !done[r] {
                    if tok == EOS {
                        done[r] = true;
                    } else {
                        seqs[r].push(tok);
                    }
                }
            }
            if done.iter().all(|&d| d) {
                break;
            }
        }
        let mut it = seqs.into_iter();
        let pols: Vec<Vec<Vec<usize>>> = (0..3).map(|_| it.by_ref().take(batch).collect()).collect();
        Ok((0..batch)
            .map(|b| [pols[0][b].clone(), pols[1][b].clone(), pols[2][b].clone()])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gef_tensor::AdamConfig;
    use gef_tensor::AdamState;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny(vocab: usize) -> CvaeConfig {
        CvaeConfig {
            vocab_size: vocab,
            embedding_dim: 6,
            hidden_dim: 8,
            latent_dim: 4,
            control_dim: 3,
            cond_dim: 5,
            mlp_dim: 8,
            max_len: 10,
        }
    }

    #[test]
    fn kl_zero_when_posterior_equals_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tape = Tape::new();
        let m = tape.leaf(&Tensor::uniform(&[3, 4], 2.0, &mut rng)).unwrap();
        let l = tape.leaf(&Tensor::uniform(&[3, 4], 2.0, &mut rng)).unwrap();
        let kl = gaussian_kl(&mut tape, m, l, m, l).unwrap();
        assert_eq!(tape.value(kl), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn kl_matches_scalar_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t: Vec<Tensor> = (0..4).map(|_| Tensor::uniform(&[1, 5], 1.5, &mut rng)).collect();
        let mut tape = Tape::new();
        let v: Vec<Var> = t.iter().map(|x| tape.leaf(x).unwrap()).collect();
        let kl = gaussian_kl(&mut tape, v[0], v[1], v[2], v[3]).unwrap();
        let want = gaussian_kl_scalar(t[0].data(), t[1].data(), t[2].data(), t[3].data());
        assert!((tape.scalar(kl) - want).abs() < 1e-12);
    }

    #[test]
    fn elbo_rejects_overlong_comments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let cvae = Cvae::new(&mut store, "cvae", tiny(8), &mut rng).unwrap();
        let mut tape = Tape::new();
        let v = tape.leaf(&Tensor::uniform(&[1, 5], 1.0, &mut rng)).unwrap();
        let ok = vec![vec![4usize; 10]];
        let long = vec![vec![4usize; 11]];
        assert!(cvae.elbo(&mut tape, &store, v, &[&ok, &ok, &ok], 1.0, &mut rng).is_ok());
        assert!(cvae.elbo(&mut tape, &store, v, &[&ok, &long, &ok], 1.0, &mut rng).is_err());
    }

    #[test]
    fn decode_is_bounded_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let cvae = Cvae::new(&mut store, "cvae", tiny(9), &mut rng).unwrap();
        let ve = Tensor::uniform(&[2, 5], 1.0, &mut rng);
        let run = || {
            let mut tape = Tape::new();
            let v = tape.leaf(&ve).unwrap();
            cvae.decode(&mut tape, &store, v).unwrap()
        };
        let a = run();
        assert_eq!(a, run());
        assert_eq!(a.len(), 2);
        for triple in &a {
            for c in triple {
                assert!(c.len() <= 10);
                assert!(c.iter().all(|&t| t != PAD && t != BOS && t != EOS));
            }
        }
    }

    /// With only EOS to emit, reconstruction collapses to ~0.
    #[test]
    fn single_token_vocabulary_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::new();
        let cvae = Cvae::new(&mut store, "cvae", tiny(5), &mut rng).unwrap();
        let mut adam = AdamState::new(&store, AdamConfig::with_lr(0.05));
        let comments = vec![vec![4usize, 4], vec![4]];
        let ve = Tensor::uniform(&[2, 5], 1.0, &mut rng);
        let mut last = f64::INFINITY;
        for _ in 0..100 {
            let mut tape = Tape::new();
            let v = tape.leaf(&ve).unwrap();
            let out = cvae
                .elbo(&mut tape, &store, v, &[&comments, &comments, &comments], 1.0, &mut rng)
                .unwrap();
            last = tape.scalar(out.recon);
            tape.backward_into(out.loss, &mut store).unwrap();
            adam.step(&mut store).unwrap();
        }
        assert!(last < 0.05, "reconstruction {last}");
    }
}
