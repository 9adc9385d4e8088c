//! The model family: weighted L2-regularized logistic regression over
//! TF-IDF features, a small transformer text encoder, a small
//! convolutional image encoder, and late-fusion classifiers trained with
//! staged freeze/unfreeze schedules, Adam, and early stopping on
//! validation loss.
//!
//! Everything is implemented directly over `ndarray` in f64 with
//! hand-written backward passes, so training is deterministic given a
//! seed and runs at desk scale without an accelerator.

mod classifier;
mod encoders;
mod layers;
mod linear;
mod param;

pub use classifier::{
    load_checkpoint, run_schedule, save_checkpoint, EpochLog, Example, FitResult, NeuralClassifier,
};
pub use encoders::{ImageEncoder, TextEncoder};
pub use layers::sigmoid;
pub use linear::{logreg_gradient, logreg_objective, train_logreg, LogisticRegression};
pub use param::{group_checksum, Adam, GroupId, ParamMut, Snapshot};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-class loss weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub weights: Vec<f64>,
}

/// The "balanced" heuristic: weight(c) = N / (K * n_c).
pub fn balanced_weights(class_counts: &[usize]) -> Result<ClassWeights> {
    if class_counts.is_empty() {
        return Err(Error::EmptyInput("no class counts".into()));
    }
    if let Some(i) = class_counts.iter().position(|&n| n == 0) {
        return Err(Error::ZeroClassCount(i));
    }
    let n: usize = class_counts.iter().sum();
    let k = class_counts.len();
    Ok(ClassWeights {
        weights: class_counts
            .iter()
            .map(|&n_c| n as f64 / (k as f64 * n_c as f64))
            .collect(),
    })
}

/// Balanced weights for a binary problem, indexed by the 0/1 label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryWeights {
    pub w0: f64,
    pub w1: f64,
}

impl BinaryWeights {
    pub const UNIT: BinaryWeights = BinaryWeights { w0: 1.0, w1: 1.0 };

    pub fn balanced(n0: usize, n1: usize) -> Result<Self> {
        let w = balanced_weights(&[n0, n1])?;
        Ok(BinaryWeights {
            w0: w.weights[0],
            w1: w.weights[1],
        })
    }

    pub fn of(&self, label: u8) -> f64 {
        if label == 1 {
            self.w1
        } else {
            self.w0
        }
    }
}

/// Probabilities are clamped into [CLAMP, 1 - CLAMP] before taking logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// Weighted binary cross-entropy for one prediction:
/// -w(y) * [y ln p + (1-y) ln(1-p)].
pub fn weighted_bce(prob: f64, label: u8, weights: BinaryWeights) -> f64 {
    let p = prob.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let y = label as f64;
    -weights.of(label) * (y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Mean weighted BCE over a batch, plus how many probabilities had to be
/// clamped away from {0, 1}.
pub fn weighted_bce_batch(probs: &[f64], labels: &[u8], weights: BinaryWeights) -> (f64, usize) {
    assert_eq!(probs.len(), labels.len());
    let clamped = probs
        .iter()
        .filter(|&&p| !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p))
        .count();
    let sum: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| weighted_bce(p, y, weights))
        .sum();
    (sum / probs.len().max(1) as f64, clamped)
}

/// Which of the model variants to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    LogregIt,
    LogregD,
    LogregItd,
    TextIt,
    TextD,
    TextItd,
    Image,
    FusionIt,
    FusionItd,
}

/// Which preprocessed text view a model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TextView {
    It,
    D,
    Itd,
}

pub const MODEL_KINDS: [ModelKind; 9] = [
    ModelKind::LogregIt,
    ModelKind::LogregD,
    ModelKind::LogregItd,
    ModelKind::TextIt,
    ModelKind::TextD,
    ModelKind::TextItd,
    ModelKind::Image,
    ModelKind::FusionIt,
    ModelKind::FusionItd,
];

impl ModelKind {
    pub fn parse(s: &str) -> Result<Self> {
        MODEL_KINDS
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::UnknownModel {
                got: s.to_string(),
                valid: MODEL_KINDS.map(|k| k.as_str()).join(", "),
            })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::LogregIt => "logreg_it",
            ModelKind::LogregD => "logreg_d",
            ModelKind::LogregItd => "logreg_itd",
            ModelKind::TextIt => "text_it",
            ModelKind::TextD => "text_d",
            ModelKind::TextItd => "text_itd",
            ModelKind::Image => "image",
            ModelKind::FusionIt => "fusion_it",
            ModelKind::FusionItd => "fusion_itd",
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(
            self,
            ModelKind::LogregIt | ModelKind::LogregD | ModelKind::LogregItd
        )
    }

    /// The text view this model reads, if any.
    pub fn text_view(&self) -> Option<TextView> {
        match self {
            ModelKind::LogregIt | ModelKind::TextIt | ModelKind::FusionIt => Some(TextView::It),
            ModelKind::LogregD | ModelKind::TextD => Some(TextView::D),
            ModelKind::LogregItd | ModelKind::TextItd | ModelKind::FusionItd => Some(TextView::Itd),
            ModelKind::Image => None,
        }
    }

    pub fn uses_image(&self) -> bool {
        matches!(
            self,
            ModelKind::Image | ModelKind::FusionIt | ModelKind::FusionItd
        )
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Hyperparameters for the neural models. Desk-scale defaults keep the
/// 1:2 text:image width ratio of the headline models (768 and 1536).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub text_dim: usize,
    pub image_dim: usize,
    pub dropout: f64,
    pub text_layers: usize,
    pub text_heads: usize,
    pub vocab_size: usize,
    pub max_tokens: usize,
    /// Learned positional embeddings on/off; disabled only to test
    /// permutation invariance of the attention stack.
    pub positional: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            text_dim: 64,
            image_dim: 128,
            dropout: 0.2,
            text_layers: 2,
            text_heads: 4,
            vocab_size: 1,
            max_tokens: 512,
            positional: true,
        }
    }
}

impl ModelConfig {
    /// The fused representation is always the exact concatenation of the
    /// two encoder outputs.
    pub fn fusion_dim(&self) -> usize {
        self.text_dim + self.image_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.text_dim == 0 || self.image_dim == 0 {
            return Err(Error::Config("encoder dims must be positive".into()));
        }
        if !self.text_dim.is_multiple_of(self.text_heads) {
            return Err(Error::Config(format!(
                "text_dim {} not divisible by text_heads {}",
                self.text_dim, self.text_heads
            )));
        }
        if !self.image_dim.is_multiple_of(4) {
            return Err(Error::Config(format!(
                "image_dim {} must be divisible by 4 (channel doubling stages)",
                self.image_dim
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} must lie in [0,1)",
                self.dropout
            )));
        }
        if self.text_layers == 0 || self.text_heads == 0 {
            return Err(Error::Config(
                "text_layers and text_heads must be >= 1".into(),
            ));
        }
        if self.vocab_size == 0 || self.max_tokens == 0 {
            return Err(Error::Config(
                "vocab_size and max_tokens must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// One stage of a training schedule: the named parameter groups held
/// frozen, the epoch count, and the Adam learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub freeze: BTreeSet<String>,
    pub epochs: usize,
    pub lr: f64,
}

/// A staged schedule plus the seeds for the multi-seed protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub stages: Vec<Stage>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

impl TrainSchedule {
    /// A minimal one-stage schedule training everything.
    pub fn single_stage(epochs: usize, lr: f64) -> Self {
        TrainSchedule {
            stages: vec![Stage {
                freeze: BTreeSet::new(),
                epochs,
                lr,
            }],
            seeds: default_seeds(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Config("schedule needs at least one stage".into()));
        }
        for (i, stage) in self.stages.iter().enumerate() {
            if stage.epochs == 0 {
                return Err(Error::Config(format!("stage {i}: epochs must be >= 1")));
            }
            if stage.lr <= 0.0 || !stage.lr.is_finite() {
                return Err(Error::Config(format!("stage {i}: lr must be positive")));
            }
            for name in &stage.freeze {
                GroupId::parse(name)?;
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("schedule needs at least one seed".into()));
        }
        Ok(())
    }

    /// Frozen group ids for one stage (alias names canonicalized).
    pub fn frozen_groups(&self, stage: usize) -> Result<BTreeSet<GroupId>> {
        self.stages[stage]
            .freeze
            .iter()
            .map(|name| GroupId::parse(name))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_weights_match_hand_formula() {
        // ideology training counts
        let w = balanced_weights(&[2576, 1835]).unwrap().weights;
        assert!((w[0] - 0.85617).abs() < 1e-5, "{}", w[0]);
        assert!((w[1] - 1.20191).abs() < 1e-5, "{}", w[1]);
        // sponsor-type training counts: 12090/(2·4663), 12090/(2·7427)
        let w = balanced_weights(&[4663, 7427]).unwrap().weights;
        assert!((w[0] - 1.29638).abs() < 1e-5, "{}", w[0]);
        assert!((w[1] - 0.81392).abs() < 1e-5, "{}", w[1]);
        // balanced case
        let w = balanced_weights(&[10, 10]).unwrap().weights;
        assert_eq!(w, vec![1.0, 1.0]);
    }

    #[test]
    fn zero_class_count_is_an_error() {
        assert!(matches!(
            balanced_weights(&[5, 0]),
            Err(Error::ZeroClassCount(1))
        ));
    }

    #[test]
    fn bce_basics() {
        let uniform = weighted_bce(0.5, 0, BinaryWeights::UNIT);
        assert!((uniform - 2.0f64.ln()).abs() < 1e-12);
        assert!((weighted_bce(0.5, 1, BinaryWeights::UNIT) - 2.0f64.ln()).abs() < 1e-12);
        // confident and right: near zero even after clamping
        assert!(weighted_bce(1.0, 1, BinaryWeights::UNIT) < 1e-6);
        assert!(weighted_bce(0.0, 0, BinaryWeights::UNIT) < 1e-6);
        // weights scale the loss linearly
        let w = BinaryWeights { w0: 1.0, w1: 3.0 };
        let base = weighted_bce(0.3, 1, BinaryWeights::UNIT);
        assert!((weighted_bce(0.3, 1, w) - 3.0 * base).abs() < 1e-12);
    }

    #[test]
    fn unit_weights_reduce_to_plain_bce() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let p: f64 = rng.random_range(0.001..0.999);
            let y: u8 = rng.random_range(0..2);
            let plain = -((y as f64) * p.ln() + (1.0 - y as f64) * (1.0 - p).ln());
            assert!((weighted_bce(p, y, BinaryWeights::UNIT) - plain).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_loss_counts_clamps() {
        let (loss, clamped) = weighted_bce_batch(&[0.5, 1.0, 0.0], &[1, 1, 0], BinaryWeights::UNIT);
        assert_eq!(clamped, 2);
        assert!(loss > 0.0 && loss.is_finite());
    }

    #[test]
    fn model_kinds_roundtrip_and_classify() {
        for kind in MODEL_KINDS {
            assert_eq!(ModelKind::parse(kind.as_str()).unwrap(), kind);
        }
        assert!(ModelKind::parse("bogus").is_err());
        assert!(ModelKind::LogregIt.is_linear());
        assert!(!ModelKind::FusionIt.is_linear());
        assert_eq!(ModelKind::FusionItd.text_view(), Some(TextView::Itd));
        assert!(ModelKind::Image.text_view().is_none());
        assert!(ModelKind::Image.uses_image());
        assert!(!ModelKind::TextD.uses_image());
    }

    #[test]
    fn fusion_dim_is_exact_sum() {
        let cfg = ModelConfig::default();
        assert_eq!(cfg.fusion_dim(), 64 + 128);
        let analog = ModelConfig {
            text_dim: 768,
            image_dim: 1536,
            text_heads: 8,
            vocab_size: 100,
            ..ModelConfig::default()
        };
        assert_eq!(analog.fusion_dim(), 2304);
        assert!(analog.validate().is_ok());
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut cfg = ModelConfig {
            vocab_size: 10,
            ..ModelConfig::default()
        };
        assert!(cfg.validate().is_ok());
        cfg.text_heads = 5; // 64 % 5 != 0
        assert!(cfg.validate().is_err());
        cfg.text_heads = 4;
        cfg.dropout = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn schedule_validation_and_aliases() {
        let json = r#"{"stages":[{"freeze":["text","image"],"epochs":27,"lr":1e-3},
                                  {"freeze":["image"],"epochs":30,"lr":1e-5}],
                       "seeds":[0,1,2]}"#;
        let schedule: TrainSchedule = serde_json::from_str(json).unwrap();
        schedule.validate().unwrap();
        let frozen = schedule.frozen_groups(0).unwrap();
        assert!(frozen.contains(&GroupId::TextEncoder));
        assert!(frozen.contains(&GroupId::ImageEncoder));
        assert_eq!(schedule.frozen_groups(1).unwrap().len(), 1);

        // image_backbone is an accepted alias for the conv stack
        let schedule = TrainSchedule {
            stages: vec![Stage {
                freeze: ["image_backbone".to_string()].into(),
                epochs: 11,
                lr: 1e-3,
            }],
            seeds: vec![0],
        };
        schedule.validate().unwrap();
        assert!(schedule
            .frozen_groups(0)
            .unwrap()
            .contains(&GroupId::ImageEncoder));

        let bad = TrainSchedule {
            stages: vec![Stage {
                freeze: ["flux_capacitor".to_string()].into(),
                epochs: 1,
                lr: 0.1,
            }],
            seeds: vec![0],
        };
        assert!(bad.validate().is_err());
    }
}
