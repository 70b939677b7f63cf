//! Explanation factor and loss composition.
//!
//! The scalar functions here are the reference arithmetic; the trainer
//! builds the same expressions on the tape in the same order.

use serde::{Deserialize, Serialize};

use crate::error::{GefError, Result};

/// Ground-truth class probabilities from the predictor, from C on the
/// generated explanation, and from C on the golden explanation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbTriple {
    pub p_pred: f64,
    pub p_classified: f64,
    pub p_gold: f64,
}

impl ProbTriple {
    pub fn new(p_pred: f64, p_classified: f64, p_gold: f64) -> Result<Self> {
        for (name, p) in [("p_pred", p_pred), ("p_classified", p_classified), ("p_gold", p_gold)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(GefError::validation(format!("{name} = {p} is not a probability")));
            }
        }
        Ok(Self {
            p_pred,
            p_classified,
            p_gold,
        })
    }
}

/// `P[y_true]`.
pub fn extract_gold_prob(p: &[f64], y_true: usize) -> Result<f64> {
    p.get(y_true).copied().ok_or(GefError::Index {
        index: y_true,
        size: p.len(),
    })
}

/// `EF = |p_classified − p_gold| + |p_classified − p_pred|`.
pub fn explanation_factor(t: &ProbTriple) -> f64 {
    (t.p_classified - t.p_gold).abs() + (t.p_classified - t.p_pred).abs()
}

/// Batch mean of the per-example products `L_i · EF_i`.
pub fn mrt_loss(l: &[f64], ef: &[f64]) -> Result<f64> {
    if l.len() != ef.len() || l.is_empty() {
        return Err(GefError::validation(format!(
            "mrt_loss over {} losses and {} factors",
            l.len(),
            ef.len()
        )));
    }
    let s: f64 = l.iter().zip(ef).map(|(a, b)| a * b).sum();
    Ok(s / l.len() as f64)
}

/// Weights of `L` and `L_MRT` in the final objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub joint: f64,
    pub mrt: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { joint: 1.0, mrt: 1.0 }
    }
}

impl LossWeights {
    /// The no-MRT objective.
    pub const BASELINE: Self = Self { joint: 1.0, mrt: 0.0 };

    pub fn validate(&self) -> Result<()> {
        if !(self.joint.is_finite() && self.mrt.is_finite()) || self.joint < 0.0 || self.mrt < 0.0 {
            return Err(GefError::validation("loss weights must be finite and non-negative"));
        }
        if self.joint == 0.0 && self.mrt == 0.0 {
            return Err(GefError::validation("at least one loss weight must be positive"));
        }
        Ok(())
    }
}

/// `w_joint · L + w_mrt · L_MRT`.
pub fn final_loss(l: f64, l_mrt: f64, w: LossWeights) -> f64 {
    w.joint * l + w.mrt * l_mrt
}

/// All loss terms of one batch (or the mean over an epoch's batches).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    #[serde(rename = "L_p")]
    pub l_p: f64,
    #[serde(rename = "L_e")]
    pub l_e: f64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "EF_mean")]
    pub ef: f64,
    #[serde(rename = "L_MRT")]
    pub l_mrt: f64,
    #[serde(rename = "L_final")]
    pub l_final: f64,
}

impl LossBreakdown {
    /// Assemble from the independent terms; `L` and `L_final` are derived.
    pub fn compose(l_p: f64, l_e: f64, ef: f64, l_mrt: f64, w: LossWeights) -> Self {
        let l = l_p + l_e;
        Self {
            l_p,
            l_e,
            l,
            ef,
            l_mrt,
            l_final: final_loss(l, l_mrt, w),
        }
    }

    /// Mean of the independent terms over `parts`, recomposed.
    pub fn mean(parts: &[LossBreakdown], w: LossWeights) -> Self {
        if parts.is_empty() {
            return Self::default();
        }
        let n = parts.len() as f64;
        let avg = |f: fn(&LossBreakdown) -> f64| parts.iter().map(f).sum::<f64>() / n;
        Self::compose(avg(|b| b.l_p), avg(|b| b.l_e), avg(|b| b.ef), avg(|b| b.l_mrt), w)
    }

    pub fn is_finite(&self) -> bool {
        [self.l_p, self.l_e, self.l, self.ef, self.l_mrt, self.l_final]
            .iter()
            .all(|v| v.is_finite())
    }
}
