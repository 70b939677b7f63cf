use serde::{Deserialize, Serialize};

use crate::error::{GefError, Result};
use crate::gef::loss::LossWeights;
use crate::text::schema::Schema;

/// How the classifier's view of the generated explanation enters EF.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EfMode {
    /// C reads the generator's output distributions as expected
    /// embeddings; EF is differentiable through `p_classified` and
    /// `p_pred`.
    SoftThroughC,
    /// EF is computed from detached values and acts as a constant weight.
    /// For text, C reads the greedy decoded comments.
    StopGradient,
}

impl std::str::FromStr for EfMode {
    type Err = GefError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soft-through-c" | "soft" => Ok(Self::SoftThroughC),
            "stop-gradient" | "stop" => Ok(Self::StopGradient),
            other => Err(GefError::validation(format!("unknown ef mode {other:?}"))),
        }
    }
}

/// When the predictor stops receiving updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "policy", content = "value")]
pub enum FreezePolicy {
    Never,
    /// Threshold = `factor ×` dev `L_p` at its first local minimum.
    DevMinimum(f64),
    Fixed(f64),
}

impl FreezePolicy {
    pub const DEFAULT_FACTOR: f64 = 1.05;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub predictor_freeze: FreezePolicy,
    pub ef_mode: EfMode,
    pub weights: LossWeights,
    /// Ablation switch: `false` drops `L_e` from the objective.
    pub use_explanation_loss: bool,
    /// Fraction of all steps over which the KL weight rises from 0 to 1.
    pub kl_anneal_frac: f64,
    /// Keep a per-step loss log.
    pub record_steps: bool,
}

impl TrainConfig {
    /// Per-schema defaults: batch 32 and a dev-tuned predictor freeze with
    /// stop-gradient EF for PCMag-style text; batch 64, no freeze and
    /// soft-through-C EF for Skytrax-style scores.
    pub fn for_schema(schema: Schema) -> Self {
        let (batch_size, predictor_freeze, ef_mode) = match schema {
            Schema::PcMag => (32, FreezePolicy::DevMinimum(FreezePolicy::DEFAULT_FACTOR), EfMode::StopGradient),
            Schema::Skytrax => (64, FreezePolicy::Never, EfMode::SoftThroughC),
        };
        Self {
            batch_size,
            lr: 1e-3,
            epochs: 10,
            seed: 0,
            predictor_freeze,
            ef_mode,
            weights: LossWeights::default(),
            use_explanation_loss: true,
            kl_anneal_frac: 0.2,
            record_steps: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(GefError::validation("batch_size and epochs must be positive"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(GefError::validation("learning rate must be positive"));
        }
        if !(0.0..=1.0).contains(&self.kl_anneal_frac) {
            return Err(GefError::validation("kl_anneal_frac must lie in [0, 1]"));
        }
        match self.predictor_freeze {
            FreezePolicy::DevMinimum(f) | FreezePolicy::Fixed(f) if !(f.is_finite() && f >= 0.0) => {
                return Err(GefError::validation("freeze threshold must be non-negative"));
            }
            _ => {}
        }
        self.weights.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_defaults() {
        let t = TrainConfig::for_schema(Schema::PcMag);
        assert_eq!((t.batch_size, t.ef_mode), (32, EfMode::StopGradient));
        let n = TrainConfig::for_schema(Schema::Skytrax);
        assert_eq!((n.batch_size, n.ef_mode), (64, EfMode::SoftThroughC));
        assert_eq!(n.predictor_freeze, FreezePolicy::Never);
        assert!(t.validate().is_ok() && n.validate().is_ok());
    }

    #[test]
    fn invalid_configs() {
        let mut c = TrainConfig::for_schema(Schema::Skytrax);
        c.predictor_freeze = FreezePolicy::Fixed(-1.0);
        assert!(c.validate().is_err());
        let mut c = TrainConfig::for_schema(Schema::Skytrax);
        c.batch_size = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn serde_shape() {
        let c = TrainConfig::for_schema(Schema::PcMag);
        let back: TrainConfig = serde_json::from_value(serde_json::to_value(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!("stop-gradient".parse::<EfMode>().unwrap(), EfMode::StopGradient);
    }
}
