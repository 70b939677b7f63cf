use gef_tensor::{ParamStore, Tape, Var};
use rand::Rng;

use crate::error::Result;
use crate::models::layers::Linear;
use crate::text::schema::SkytraxExample;

/// Predictor P: `v_e` to logits over the overall classes.
#[derive(Debug, Clone)]
pub struct Predictor {
    pub out: Linear,
    pub n_classes: usize,
}

impl Predictor {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        hidden: usize,
        n_classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            out: Linear::new(store, &format!("{name}.out"), hidden, n_classes, rng)?,
            n_classes,
        })
    }

    pub fn logits(&self, tape: &mut Tape, store: &ParamStore, v_e: Var) -> Result<Var> {
        self.out.forward(tape, store, v_e)
    }

    /// `P_pred`, one softmax row per example.
    pub fn predict(&self, tape: &mut Tape, store: &ParamStore, v_e: Var) -> Result<Var> {
        let l = self.logits(tape, store, v_e)?;
        Ok(tape.softmax(l)?)
    }
}

pub const N_FIELDS: usize = 5;
pub const N_SCORES: usize = SkytraxExample::N_SCORES;

/// Numeric generator G: five independent six-way score heads, computed as
/// one `[hidden, 30]` layer split by columns.
#[derive(Debug, Clone)]
pub struct NumericGenerator {
    pub out: Linear,
}

impl NumericGenerator {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, hidden: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            out: Linear::new(store, &format!("{name}.out"), hidden, N_FIELDS * N_SCORES, rng)?,
        })
    }

    /// Logits of the five heads, each `[batch, 6]`.
    pub fn head_logits(&self, tape: &mut Tape, store: &ParamStore, v_e: Var) -> Result<[Var; N_FIELDS]> {
        let all = self.out.forward(tape, store, v_e)?;
        let mut heads = [all; N_FIELDS];
        for (f, h) in heads.iter_mut().enumerate() {
            *h = tape.slice_cols(all, f * N_SCORES, N_SCORES)?;
        }
        Ok(heads)
    }

    pub fn generate(&self, tape: &mut Tape, store: &ParamStore, v_e: Var) -> Result<[Var; N_FIELDS]> {
        let logits = self.head_logits(tape, store, v_e)?;
        let mut out = logits;
        for (o, l) in out.iter_mut().zip(logits) {
            *o = tape.softmax(l)?;
        }
        Ok(out)
    }
}
