use std::fmt;
use std::str::FromStr;

use gef_tensor::{ParamId, ParamStore, Tape, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GefError, Result};
use crate::models::layers::{zeros_var, Gru, Linear, Lstm, SeqBatch, SeqInput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Bow,
    Gru,
    Lstm,
    Cnn,
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderKind::Bow => "bow",
            EncoderKind::Gru => "gru",
            EncoderKind::Lstm => "lstm",
            EncoderKind::Cnn => "cnn",
        })
    }
}

impl FromStr for EncoderKind {
    type Err = GefError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bow" => Ok(Self::Bow),
            "gru" => Ok(Self::Gru),
            "lstm" => Ok(Self::Lstm),
            "cnn" => Ok(Self::Cnn),
            other => Err(GefError::validation(format!("unknown encoder kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cnn_filters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cnn_filter_sizes: Option<Vec<usize>>,
    pub vocab_size: usize,
}

impl EncoderConfig {
    pub const DEFAULT_EMBEDDING_DIM: usize = 100;
    pub const PCMAG_HIDDEN_DIM: usize = 128;
    pub const SKYTRAX_HIDDEN_DIM: usize = 256;
    pub const DEFAULT_CNN_FILTERS: usize = 256;
    pub const DEFAULT_CNN_FILTER_SIZES: [usize; 4] = [3, 4, 5, 6];

    /// Defaults for `kind`; CNN fields are filled iff `kind` is CNN.
    pub fn new(kind: EncoderKind, vocab_size: usize, hidden_dim: usize) -> Self {
        let cnn = kind == EncoderKind::Cnn;
        Self {
            kind,
            embedding_dim: Self::DEFAULT_EMBEDDING_DIM,
            hidden_dim,
            cnn_filters: cnn.then_some(Self::DEFAULT_CNN_FILTERS),
            cnn_filter_sizes: cnn.then(|| Self::DEFAULT_CNN_FILTER_SIZES.to_vec()),
            vocab_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 || self.hidden_dim == 0 || self.vocab_size == 0 {
            return Err(GefError::validation("encoder dimensions must be positive"));
        }
        let cnn = self.kind == EncoderKind::Cnn;
        match (&self.cnn_filters, &self.cnn_filter_sizes) {
            (Some(f), Some(sizes)) if cnn => {
                if *f == 0 || sizes.is_empty() || sizes.contains(&0) {
                    return Err(GefError::validation("cnn filters and sizes must be positive"));
                }
                Ok(())
            }
            (None, None) if !cnn => Ok(()),
            _ if cnn => Err(GefError::validation("cnn encoder needs cnn_filters and cnn_filter_sizes")),
            _ => Err(GefError::validation(format!("cnn fields given for a {} encoder", self.kind))),
        }
    }
}

#[derive(Debug, Clone)]
enum Body {
    Bow { proj: Linear },
    Gru { cell: Gru },
    Lstm { cell: Lstm },
    Cnn { convs: Vec<(usize, Linear)>, proj: Linear },
}

/// Review encoder: token ids to a fixed-size representation `v_e`.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub config: EncoderConfig,
    embedding: ParamId,
    body: Body,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        config: EncoderConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let (d, h) = (config.embedding_dim, config.hidden_dim);
        let embedding = store.add(format!("{name}.emb"), Tensor::uniform(&[config.vocab_size, d], 0.1, rng))?;
        let body = match config.kind {
            EncoderKind::Bow => Body::Bow {
                proj: Linear::new(store, &format!("{name}.bow"), d, h, rng)?,
            },
            EncoderKind::Gru => Body::Gru {
                cell: Gru::new(store, &format!("{name}.gru"), d, h, rng)?,
            },
            EncoderKind::Lstm => Body::Lstm {
                cell: Lstm::new(store, &format!("{name}.lstm"), d, h, rng)?,
            },
            EncoderKind::Cnn => {
                let f = config.cnn_filters.expect("validated");
                let sizes = config.cnn_filter_sizes.clone().expect("validated");
                let convs = sizes
                    .iter()
                    .map(|&w| Ok((w, Linear::new(store, &format!("{name}.conv{w}"), w * d, f, rng)?)))
                    .collect::<Result<Vec<_>>>()?;
                let proj = Linear::new(store, &format!("{name}.cnn_proj"), f * sizes.len(), h, rng)?;
                Body::Cnn { convs, proj }
            }
        };
        Ok(Self {
            config,
            embedding,
            body,
        })
    }

    pub fn hidden_dim(&self) -> usize {
        self.config.hidden_dim
    }

    /// `[batch, hidden_dim]` representations of the sequences in `seq`.
    pub fn encode(&self, tape: &mut Tape, store: &ParamStore, seq: &SeqBatch) -> Result<Var> {
        let table = tape.param(store, self.embedding)?;
        match &self.body {
            Body::Bow { proj } => {
                let x = SeqInput::Hard(seq).embed(tape, table)?;
                let (segs, w) = seq.mean_pool_weights();
                let mean = tape.segment_sum(x, &segs, &w, seq.batch)?;
                let p = proj.forward(tape, store, mean)?;
                Ok(tape.tanh(p)?)
            }
            Body::Gru { cell } => {
                let x = SeqInput::Hard(seq).embed(tape, table)?;
                let g = cell.bind(tape, store)?;
                let xp = g.project(tape, x)?;
                let h0 = zeros_var(tape, seq.batch, g.hidden())?;
                let states = g.run(tape, xp, seq, h0, false)?;
                Ok(*states.last().expect("non-empty batch"))
            }
            Body::Lstm { cell } => {
                let x = SeqInput::Hard(seq).embed(tape, table)?;
                cell.final_state(tape, store, x, seq)
            }
            Body::Cnn { convs, proj } => {
                // Batch-major and padded to at least the widest filter.
                let widest = convs.iter().map(|(w, _)| *w).max().expect("validated");
                let len = seq.max_len.max(widest);
                let mut ids = vec![crate::text::vocab::PAD; seq.batch * len];
                for b in 0..seq.batch {
                    for (t, id) in seq.sequence(b).into_iter().enumerate() {
                        ids[b * len + t] = id;
                    }
                }
                let x = tape.embedding(table, &ids)?;
                let mut pooled = Vec::with_capacity(convs.len());
                for (w, conv) in convs {
                    let nw = len - w + 1;
                    let windows = tape.unfold(x, seq.batch, len, *w)?;
                    let c = conv.forward(tape, store, windows)?;
                    let a = tape.relu(c)?;
                    // Windows that start past the end of a short sequence
                    // are excluded; a sequence shorter than the filter keeps
                    // its first (padded) window.
                    let ranges: Vec<(usize, usize)> = seq
                        .lengths
                        .iter()
                        .enumerate()
                        .map(|(b, &l)| (b * nw, (l.saturating_sub(w - 1)).clamp(1, nw)))
                        .collect();
                    pooled.push(tape.segment_max(a, &ranges)?);
                }
                let feats = tape.concat_cols(&pooled)?;
                let p = proj.forward(tape, store, feats)?;
                Ok(tape.tanh(p)?)
            }
        }
    }
}
