//! The six encoder-based classifiers (three text views, image, two fusion
//! variants) behind one structure: optional text encoder, optional image
//! encoder, dropout on the (possibly concatenated) representation, and a
//! dense head with a logistic output.
//!
//! `run_schedule` trains with staged freeze/unfreeze, a fresh Adam per
//! stage, minibatches of 32, and early stopping that restores the
//! parameter snapshot with the lowest validation weighted cross-entropy.
//! While an encoder is frozen its per-example representations are computed
//! once per stage and reused, which is what makes head-only stages cheap.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{Array1, Array3, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{sigmoid, Dense};
use super::param::{zero_grads, Adam, GroupId, ParamMut, Snapshot};
use super::{
    weighted_bce, weighted_bce_batch, BinaryWeights, ImageEncoder, ModelConfig, ModelKind,
    TextEncoder, TrainSchedule, PROB_CLAMP,
};
use crate::error::{Error, Result};

/// Minibatch size for encoder training.
pub const BATCH_SIZE: usize = 32;

/// One training or evaluation example. `tokens` holds ids for the text
/// view the model consumes; `image` is the normalized (H, W, 3) tensor.
#[derive(Debug, Clone)]
pub struct Example {
    pub tokens: Vec<usize>,
    pub image: Option<Array3<f64>>,
    pub label: u8,
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub stage: usize,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Probabilities clamped away from {0,1} while computing the losses.
    pub clamped: usize,
}

/// Outcome of `run_schedule`: the per-epoch log and which snapshot won.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub log: Vec<EpochLog>,
    pub best_val: f64,
    pub best_stage: usize,
    pub best_epoch: usize,
}

#[derive(Debug, Clone)]
pub struct NeuralClassifier {
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub text: Option<TextEncoder>,
    pub image: Option<ImageEncoder>,
    pub head: Dense,
}

impl NeuralClassifier {
    /// Builds a freshly initialized model. Initialization order is fixed
    /// (text encoder, image encoder, head), so a seed fully determines all
    /// parameters.
    pub fn new(kind: ModelKind, config: ModelConfig, seed: u64) -> Result<Self> {
        if kind.is_linear() {
            return Err(Error::Config(format!(
                "{kind} is a linear model; use train_logreg"
            )));
        }
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let text = kind
            .text_view()
            .map(|_| TextEncoder::new(&config, &mut rng));
        let image = if kind.uses_image() {
            Some(ImageEncoder::new(&config, &mut rng))
        } else {
            None
        };
        let rep_dim = text.as_ref().map_or(0, |t| t.dim()) + image.as_ref().map_or(0, |i| i.dim());
        let head = Dense::new(rep_dim, 1, &mut rng);
        Ok(NeuralClassifier {
            kind,
            config,
            text,
            image,
            head,
        })
    }

    /// The width of the representation entering the head.
    pub fn rep_dim(&self) -> usize {
        self.head.w.nrows()
    }

    /// Parameter groups present in this variant.
    pub fn groups(&self) -> BTreeSet<GroupId> {
        let mut g = BTreeSet::from([GroupId::Head]);
        if self.text.is_some() {
            g.insert(GroupId::TextEncoder);
        }
        if self.image.is_some() {
            g.insert(GroupId::ImageEncoder);
        }
        g
    }

    pub fn params(&mut self) -> Vec<ParamMut<'_>> {
        let mut out = Vec::new();
        if let Some(t) = self.text.as_mut() {
            t.collect(&mut out);
        }
        if let Some(i) = self.image.as_mut() {
            i.collect(&mut out);
        }
        self.head.collect(GroupId::Head, "head", &mut out);
        out
    }

    fn image_of<'b>(&self, ex: &'b Example) -> Result<&'b Array3<f64>> {
        ex.image
            .as_ref()
            .ok_or_else(|| Error::DimMismatch(format!("model {} needs an image input", self.kind)))
    }

    /// Eval-mode representation (no dropout).
    pub fn representation(&self, ex: &Example) -> Result<Array1<f64>> {
        let mut parts: Vec<Array1<f64>> = Vec::with_capacity(2);
        if let Some(enc) = &self.text {
            parts.push(enc.forward(&ex.tokens)?.0);
        }
        if let Some(enc) = &self.image {
            parts.push(enc.forward(self.image_of(ex)?)?.0);
        }
        let mut rep = Array1::zeros(self.rep_dim());
        let mut at = 0;
        for part in parts {
            rep.slice_mut(ndarray::s![at..at + part.len()])
                .assign(&part);
            at += part.len();
        }
        Ok(rep)
    }

    /// Eval-mode probability of the positive class.
    pub fn predict_proba(&self, ex: &Example) -> Result<f64> {
        let rep = self.representation(ex)?;
        let x = rep.insert_axis(Axis(0));
        Ok(sigmoid(self.head.forward(&x)[[0, 0]]))
    }

    pub fn predict(&self, ex: &Example) -> Result<u8> {
        Ok(if self.predict_proba(ex)? >= 0.5 { 1 } else { 0 })
    }

    fn zero_grads(&mut self) {
        let mut params = self.params();
        zero_grads(&mut params);
    }

    /// One training example: forward with dropout, loss, and backward into
    /// every unfrozen group. Gradients are pre-scaled by 1/batch_len so the
    /// accumulated batch gradient is the mean.
    #[allow(clippy::too_many_arguments)]
    fn train_example(
        &mut self,
        ex: &Example,
        cached_text: Option<&Array1<f64>>,
        cached_image: Option<&Array1<f64>>,
        weights: BinaryWeights,
        batch_len: usize,
        frozen: &BTreeSet<GroupId>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, bool)> {
        let text_dim = self.text.as_ref().map_or(0, |t| t.dim());
        let (text_rep, text_cache) = match (&self.text, cached_text) {
            (Some(_), Some(rep)) => (Some(rep.clone()), None),
            (Some(enc), None) => {
                let (rep, cache) = enc.forward(&ex.tokens)?;
                (Some(rep), Some(cache))
            }
            (None, _) => (None, None),
        };
        let (image_rep, image_cache) = match (&self.image, cached_image) {
            (Some(_), Some(rep)) => (Some(rep.clone()), None),
            (Some(enc), None) => {
                let (rep, cache) = enc.forward(self.image_of(ex)?)?;
                (Some(rep), Some(cache))
            }
            (None, _) => (None, None),
        };
        let mut rep = Array1::zeros(self.rep_dim());
        if let Some(t) = &text_rep {
            rep.slice_mut(ndarray::s![..t.len()]).assign(t);
        }
        if let Some(i) = &image_rep {
            rep.slice_mut(ndarray::s![text_dim..]).assign(i);
        }
        // inverted dropout on the fused representation
        let mask = if self.config.dropout > 0.0 {
            let keep = 1.0 - self.config.dropout;
            let mask: Array1<f64> = Array1::from_shape_fn(rep.len(), |_| {
                if rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            });
            rep *= &mask;
            Some(mask)
        } else {
            None
        };
        let x = rep.insert_axis(Axis(0));
        let logit = self.head.forward(&x)[[0, 0]];
        let p = sigmoid(logit);
        let loss = weighted_bce(p, ex.label, weights);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                iter: 0,
                detail: format!("example loss {loss} (logit {logit})"),
            });
        }
        let clamped = !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p);
        // d(weighted BCE)/d(logit) for the sigmoid output
        let dlogit = weights.of(ex.label) * (p - ex.label as f64) / batch_len as f64;
        let dy = ndarray::arr2(&[[dlogit]]);
        let dx = self.head.backward(&x, &dy);
        let mut drep = dx.row(0).to_owned();
        if let Some(mask) = &mask {
            drep *= mask;
        }
        if let (Some(enc), Some(cache)) = (self.text.as_mut(), text_cache.as_ref()) {
            if !frozen.contains(&GroupId::TextEncoder) {
                let d = drep.slice(ndarray::s![..text_dim]).to_owned();
                enc.backward(cache, &d);
            }
        }
        if let (Some(enc), Some(cache)) = (self.image.as_mut(), image_cache.as_ref()) {
            if !frozen.contains(&GroupId::ImageEncoder) {
                let d = drep.slice(ndarray::s![text_dim..]).to_owned();
                enc.backward(cache, &d);
            }
        }
        Ok((loss, clamped))
    }
}

/// Per-stage representation cache for encoders that are both used and
/// frozen.
struct ReprCache {
    text: Option<Vec<Array1<f64>>>,
    image: Option<Vec<Array1<f64>>>,
}

impl ReprCache {
    fn build(
        model: &NeuralClassifier,
        data: &[Example],
        frozen: &BTreeSet<GroupId>,
    ) -> Result<Self> {
        let text = match &model.text {
            Some(enc) if frozen.contains(&GroupId::TextEncoder) => Some(
                data.iter()
                    .map(|ex| enc.forward(&ex.tokens).map(|(rep, _)| rep))
                    .collect::<Result<Vec<_>>>()?,
            ),
            _ => None,
        };
        let image = match &model.image {
            Some(enc) if frozen.contains(&GroupId::ImageEncoder) => Some(
                data.iter()
                    .map(|ex| enc.forward(model.image_of(ex)?).map(|(rep, _)| rep))
                    .collect::<Result<Vec<_>>>()?,
            ),
            _ => None,
        };
        Ok(ReprCache { text, image })
    }

    fn text_of(&self, i: usize) -> Option<&Array1<f64>> {
        self.text.as_ref().map(|v| &v[i])
    }

    fn image_of(&self, i: usize) -> Option<&Array1<f64>> {
        self.image.as_ref().map(|v| &v[i])
    }
}

/// Mean weighted validation loss in eval mode, reusing cached frozen
/// representations.
fn validation_loss(
    model: &NeuralClassifier,
    data: &[Example],
    cache: &ReprCache,
    weights: BinaryWeights,
) -> Result<(f64, usize)> {
    let text_dim = model.text.as_ref().map_or(0, |t| t.dim());
    let mut probs = Vec::with_capacity(data.len());
    let mut labels = Vec::with_capacity(data.len());
    for (i, ex) in data.iter().enumerate() {
        let mut rep = Array1::zeros(model.rep_dim());
        if let Some(enc) = &model.text {
            let part = match cache.text_of(i) {
                Some(r) => r.clone(),
                None => enc.forward(&ex.tokens)?.0,
            };
            rep.slice_mut(ndarray::s![..text_dim]).assign(&part);
        }
        if let Some(enc) = &model.image {
            let part = match cache.image_of(i) {
                Some(r) => r.clone(),
                None => enc.forward(model.image_of(ex)?)?.0,
            };
            rep.slice_mut(ndarray::s![text_dim..]).assign(&part);
        }
        let x = rep.insert_axis(Axis(0));
        probs.push(sigmoid(model.head.forward(&x)[[0, 0]]));
        labels.push(ex.label);
    }
    Ok(weighted_bce_batch(&probs, &labels, weights))
}

/// Trains `model` through all schedule stages and restores the best
/// validation snapshot. Frozen groups receive no updates; with dropout 0
/// the whole run is a deterministic function of (model init, seed, data).
pub fn run_schedule(
    model: &mut NeuralClassifier,
    schedule: &TrainSchedule,
    train: &[Example],
    dev: &[Example],
    weights: BinaryWeights,
    seed: u64,
) -> Result<FitResult> {
    schedule.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::EmptyInput(
            "schedule training needs non-empty train and dev sets".into(),
        ));
    }
    let present = model.groups();
    for (s, _) in schedule.stages.iter().enumerate() {
        for g in schedule.frozen_groups(s)? {
            if !present.contains(&g) {
                return Err(Error::Config(format!(
                    "stage {s} freezes {}, which model {} does not have",
                    g.as_str(),
                    model.kind
                )));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log = Vec::new();
    let mut best: Option<(f64, Snapshot, usize, usize)> = None;
    for (s, stage) in schedule.stages.iter().enumerate() {
        let frozen = schedule.frozen_groups(s)?;
        let mut adam = Adam::new(stage.lr);
        let train_cache = ReprCache::build(model, train, &frozen)?;
        let dev_cache = ReprCache::build(model, dev, &frozen)?;
        for e in 0..stage.epochs {
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            let mut clamped = 0usize;
            for batch in order.chunks(BATCH_SIZE) {
                model.zero_grads();
                for &i in batch {
                    let (loss, was_clamped) = model.train_example(
                        &train[i],
                        train_cache.text_of(i),
                        train_cache.image_of(i),
                        weights,
                        batch.len(),
                        &frozen,
                        &mut rng,
                    )?;
                    loss_sum += loss;
                    clamped += was_clamped as usize;
                }
                let mut params = model.params();
                adam.step(&mut params, &frozen);
            }
            let (val_loss, val_clamped) = validation_loss(model, dev, &dev_cache, weights)?;
            log.push(EpochLog {
                stage: s,
                epoch: e,
                train_loss: loss_sum / train.len() as f64,
                val_loss,
                clamped: clamped + val_clamped,
            });
            let is_best = best.as_ref().is_none_or(|(b, _, _, _)| val_loss < *b);
            if is_best {
                let params = model.params();
                let snap = Snapshot::capture(&params);
                best = Some((val_loss, snap, s, e));
            }
        }
    }
    let (best_val, snapshot, best_stage, best_epoch) = best.expect("at least one epoch ran");
    let mut params = model.params();
    snapshot.restore(&mut params);
    Ok(FitResult {
        log,
        best_val,
        best_stage,
        best_epoch,
    })
}

/// Versioned JSON checkpoint: config, parameter groups, and training log.
#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    kind: ModelKind,
    config: ModelConfig,
    params: std::collections::BTreeMap<String, Vec<f64>>,
    log: Vec<EpochLog>,
}

const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(
    model: &mut NeuralClassifier,
    fit: Option<&FitResult>,
    path: &Path,
) -> Result<()> {
    let kind = model.kind;
    let config = model.config.clone();
    let params = model
        .params()
        .iter()
        .map(|p| (p.name.clone(), p.value.to_vec()))
        .collect();
    let checkpoint = Checkpoint {
        version: CHECKPOINT_VERSION,
        kind,
        config,
        params,
        log: fit.map(|f| f.log.clone()).unwrap_or_default(),
    };
    let json = serde_json::to_string(&checkpoint).expect("checkpoint serializes");
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(NeuralClassifier, Vec<EpochLog>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let checkpoint: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))?;
    if checkpoint.version != CHECKPOINT_VERSION {
        return Err(Error::Malformed(format!(
            "{}: checkpoint version {} (expected {})",
            path.display(),
            checkpoint.version,
            CHECKPOINT_VERSION
        )));
    }
    let mut model = NeuralClassifier::new(checkpoint.kind, checkpoint.config, 0)?;
    let mut params = model.params();
    for p in params.iter_mut() {
        let saved = checkpoint.params.get(&p.name).ok_or_else(|| {
            Error::Malformed(format!("{}: missing parameter {}", path.display(), p.name))
        })?;
        if saved.len() != p.value.len() {
            return Err(Error::Malformed(format!(
                "{}: parameter {} has {} values (expected {})",
                path.display(),
                p.name,
                saved.len(),
                p.value.len()
            )));
        }
        p.value.copy_from_slice(saved);
    }
    drop(params);
    Ok((model, checkpoint.log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::param::group_checksum;
    use crate::models::Stage;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            text_dim: 8,
            image_dim: 8,
            dropout: 0.0,
            text_layers: 1,
            text_heads: 2,
            vocab_size: 8,
            max_tokens: 4,
            positional: true,
        }
    }

    /// Text cue: token 2 vs 3. Image cue: dark vs bright. Label: AND.
    fn toy_data(n: usize, seed: u64) -> Vec<Example> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let tbit = rng.random_range(0..2u8);
                let ibit = rng.random_range(0..2u8);
                let level = if ibit == 1 { 0.8 } else { 0.2 };
                let image = Array3::from_shape_fn((6, 6, 3), |_| {
                    (level + rng.random_range(-0.05..0.05f64)).clamp(0.0, 1.0)
                });
                Example {
                    tokens: vec![if tbit == 1 { 2 } else { 3 }, 1],
                    image: Some(image),
                    label: tbit & ibit,
                }
            })
            .collect()
    }

    #[test]
    fn linear_kind_is_rejected() {
        assert!(NeuralClassifier::new(ModelKind::LogregIt, tiny_config(), 0).is_err());
    }

    #[test]
    fn rep_dim_matches_kind() {
        let cfg = tiny_config();
        let t = NeuralClassifier::new(ModelKind::TextIt, cfg.clone(), 0).unwrap();
        assert_eq!(t.rep_dim(), 8);
        let i = NeuralClassifier::new(ModelKind::Image, cfg.clone(), 0).unwrap();
        assert_eq!(i.rep_dim(), 8);
        let f = NeuralClassifier::new(ModelKind::FusionIt, cfg.clone(), 0).unwrap();
        assert_eq!(f.rep_dim(), cfg.fusion_dim());
    }

    #[test]
    fn zero_head_outputs_one_half() {
        let mut model = NeuralClassifier::new(ModelKind::FusionIt, tiny_config(), 0).unwrap();
        model.head.w.fill(0.0);
        model.head.b.fill(0.0);
        let ex = &toy_data(1, 0)[0];
        assert_eq!(model.predict_proba(ex).unwrap(), 0.5);
    }

    #[test]
    fn missing_image_is_an_input_error() {
        let model = NeuralClassifier::new(ModelKind::Image, tiny_config(), 0).unwrap();
        let ex = Example {
            tokens: vec![],
            image: None,
            label: 0,
        };
        assert!(model.predict_proba(&ex).is_err());
    }

    #[test]
    fn frozen_groups_stay_bit_identical_and_unfrozen_move() {
        let mut model = NeuralClassifier::new(ModelKind::FusionIt, tiny_config(), 1).unwrap();
        let data = toy_data(24, 1);
        let (train, dev) = data.split_at(16);
        let schedule = TrainSchedule {
            stages: vec![Stage {
                freeze: ["text".to_string(), "image".to_string()].into(),
                epochs: 2,
                lr: 1e-2,
            }],
            seeds: vec![0],
        };
        let before_text = group_checksum(&model.params(), GroupId::TextEncoder);
        let before_image = group_checksum(&model.params(), GroupId::ImageEncoder);
        let before_head = group_checksum(&model.params(), GroupId::Head);
        run_schedule(&mut model, &schedule, train, dev, BinaryWeights::UNIT, 7).unwrap();
        assert_eq!(
            group_checksum(&model.params(), GroupId::TextEncoder),
            before_text
        );
        assert_eq!(
            group_checksum(&model.params(), GroupId::ImageEncoder),
            before_image
        );
        assert_ne!(group_checksum(&model.params(), GroupId::Head), before_head);
    }

    #[test]
    fn dropout_zero_same_seed_is_bit_deterministic() {
        let data = toy_data(30, 2);
        let (train, dev) = data.split_at(20);
        let schedule = TrainSchedule::single_stage(3, 1e-3);
        let run = |seed_model: u64, seed_train: u64| {
            let mut model =
                NeuralClassifier::new(ModelKind::FusionIt, tiny_config(), seed_model).unwrap();
            run_schedule(
                &mut model,
                &schedule,
                train,
                dev,
                BinaryWeights::UNIT,
                seed_train,
            )
            .unwrap()
        };
        let a = run(5, 9);
        let b = run(5, 9);
        assert_eq!(a, b, "identical seeds must give identical logs");
        let c = run(5, 10);
        assert_ne!(a.log, c.log, "training seed must matter");
    }

    #[test]
    fn early_stopping_restores_best_snapshot() {
        let data = toy_data(40, 3);
        let (train, dev) = data.split_at(28);
        let mut model = NeuralClassifier::new(ModelKind::TextIt, tiny_config(), 4).unwrap();
        let schedule = TrainSchedule::single_stage(5, 5e-3);
        let fit = run_schedule(&mut model, &schedule, train, dev, BinaryWeights::UNIT, 11).unwrap();
        let best_logged = fit
            .log
            .iter()
            .map(|e| e.val_loss)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(fit.best_val, best_logged);
        // the restored parameters reproduce the best validation loss
        let cache = ReprCache {
            text: None,
            image: None,
        };
        let (val, _) = validation_loss(&model, dev, &cache, BinaryWeights::UNIT).unwrap();
        assert!((val - fit.best_val).abs() < 1e-12);
    }

    #[test]
    fn unknown_or_absent_group_in_schedule_is_config_error() {
        let mut model = NeuralClassifier::new(ModelKind::TextIt, tiny_config(), 0).unwrap();
        let data = toy_data(8, 4);
        let (train, dev) = data.split_at(6);
        let schedule = TrainSchedule {
            stages: vec![Stage {
                freeze: ["image".to_string()].into(),
                epochs: 1,
                lr: 1e-3,
            }],
            seeds: vec![0],
        };
        let err = run_schedule(&mut model, &schedule, train, dev, BinaryWeights::UNIT, 0);
        assert!(err.is_err(), "text model has no image group to freeze");
    }

    #[test]
    fn training_learns_the_text_cue() {
        // labels equal the text bit: a text-only model must become much
        // better than chance
        let mut data = toy_data(60, 5);
        for ex in &mut data {
            ex.label = if ex.tokens[0] == 2 { 1 } else { 0 };
        }
        let (train, dev) = data.split_at(45);
        let mut model = NeuralClassifier::new(ModelKind::TextIt, tiny_config(), 6).unwrap();
        let schedule = TrainSchedule::single_stage(30, 1e-2);
        run_schedule(&mut model, &schedule, train, dev, BinaryWeights::UNIT, 3).unwrap();
        let correct = dev
            .iter()
            .filter(|ex| model.predict(ex).unwrap() == ex.label)
            .count();
        assert!(
            correct as f64 / dev.len() as f64 >= 0.9,
            "{correct}/{} correct",
            dev.len()
        );
    }

    #[test]
    fn checkpoint_roundtrips_bit_exactly() {
        let data = toy_data(16, 7);
        let (train, dev) = data.split_at(12);
        let mut model = NeuralClassifier::new(ModelKind::FusionItd, tiny_config(), 8).unwrap();
        let schedule = TrainSchedule::single_stage(2, 1e-3);
        let fit = run_schedule(&mut model, &schedule, train, dev, BinaryWeights::UNIT, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_checkpoint(&mut model, Some(&fit), &path).unwrap();
        let (mut loaded, log) = load_checkpoint(&path).unwrap();
        assert_eq!(log, fit.log);
        for g in [GroupId::TextEncoder, GroupId::ImageEncoder, GroupId::Head] {
            assert_eq!(
                group_checksum(&model.params(), g),
                group_checksum(&loaded.params(), g)
            );
        }
        let p_orig = model.predict_proba(&data[14]).unwrap();
        let p_loaded = loaded.predict_proba(&data[14]).unwrap();
        assert_eq!(p_orig, p_loaded);
    }

    #[test]
    fn bad_checkpoint_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut model = NeuralClassifier::new(ModelKind::TextIt, tiny_config(), 0).unwrap();
        save_checkpoint(&mut model, None, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let hacked = text.replace("\"version\":1", "\"version\":99");
        std::fs::write(&path, hacked).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
