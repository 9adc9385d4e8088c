//! File-based stage pipeline: ingest → label → split → preprocess →
//! train → evaluate → analyze → report.
//!
//! Every stage writes its artifacts plus a `manifest.json` recording the
//! hashes of its inputs, its effective configuration, and its outputs.
//! A stage refuses to run when an upstream manifest is missing (naming the
//! stage to run first), was produced under a different configuration, or
//! no longer matches the bytes on disk. All stage outputs are
//! deterministic functions of (inputs, config): no timestamps, no OS
//! entropy, and every serialized map is ordered.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{
    self, AdRecord, Label, LabeledAd, LabeledCorpus, Split, SponsorRecord, StopwordDetector, Task,
};
use crate::error::{Error, Result};
use crate::eval::{self, EvalReport, RunMetrics, SeedRun};
use crate::features;
use crate::lexstats;
use crate::models::{
    load_checkpoint, run_schedule, save_checkpoint, train_logreg, BinaryWeights, Example,
    LogisticRegression, ModelConfig, ModelKind, NeuralClassifier, TextView, TrainSchedule,
};
use crate::preprocess::{self, Gazetteer, PreprocessConfig, TokenizedAd};

/// N-gram range for the linear models' bag-of-n-grams features.
pub const NGRAM_RANGE: (usize, usize) = (1, 3);

/// Which ads the analyze stage correlates over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnalysisSplit {
    All,
    Train,
    Dev,
    Test,
}

impl AnalysisSplit {
    pub fn keeps(&self, split: Split) -> bool {
        match self {
            AnalysisSplit::All => true,
            AnalysisSplit::Train => split == Split::Train,
            AnalysisSplit::Dev => split == Split::Dev,
            AnalysisSplit::Test => split == Split::Test,
        }
    }
}

/// The model selector: one of the nine trainable variants, or the
/// train-free majority baseline (evaluate only).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSpec {
    Majority,
    Kind(ModelKind),
}

impl ModelSpec {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "majority" {
            return Ok(ModelSpec::Majority);
        }
        ModelKind::parse(s).map(ModelSpec::Kind).map_err(|_| {
            let mut valid: Vec<&str> = crate::models::MODEL_KINDS
                .iter()
                .map(|k| k.as_str())
                .collect();
            valid.push("majority");
            Error::UnknownModel {
                got: s.to_string(),
                valid: valid.join(", "),
            }
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelSpec::Majority => "majority",
            ModelSpec::Kind(k) => k.as_str(),
        }
    }
}

/// Everything a run needs, loadable from a JSON file with per-field
/// defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub ads: PathBuf,
    pub sponsors: PathBuf,
    pub gazetteer: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub task: Task,
    pub model: String,
    pub fractions: (f64, f64, f64),
    /// `None` disables the language filter.
    pub language: Option<String>,
    pub preprocess: PreprocessConfig,
    pub model_config: ModelConfig,
    pub schedule: TrainSchedule,
    /// L2 strength for the logistic-regression models.
    pub l2: f64,
    /// Significance threshold for the analyze stage.
    pub alpha: f64,
    /// Rows per class in correlations.csv.
    pub top_k: usize,
    pub analysis_split: AnalysisSplit,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            ads: PathBuf::from("ads.jsonl"),
            sponsors: PathBuf::from("sponsors.csv"),
            gazetteer: None,
            out_dir: PathBuf::from("out"),
            task: Task::Ideology,
            model: "logreg_itd".to_string(),
            fractions: (0.8, 0.1, 0.1),
            language: Some("en".to_string()),
            preprocess: PreprocessConfig::default(),
            model_config: ModelConfig::default(),
            schedule: TrainSchedule::single_stage(20, 1e-3),
            l2: 1e-4,
            alpha: 0.01,
            top_k: 25,
            analysis_split: AnalysisSplit::All,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ModelSpec::parse(&self.model)?;
        self.preprocess.validate()?;
        self.model_config.validate()?;
        self.schedule.validate()?;
        if !(0.0 < self.alpha && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if self.l2 < 0.0 {
            return Err(Error::Config(format!("l2 must be >= 0, got {}", self.l2)));
        }
        Ok(())
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        ModelSpec::parse(&self.model)
    }
}

// ---------------------------------------------------------------------------
// Stage identifiers, hashing, manifests
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StageId {
    Ingest,
    Label,
    Split,
    Preprocess,
    Train,
    Evaluate,
    Analyze,
    Report,
}

impl StageId {
    pub fn as_str(&self) -> &'static str {
        match self {
            StageId::Ingest => "ingest",
            StageId::Label => "label",
            StageId::Split => "split",
            StageId::Preprocess => "preprocess",
            StageId::Train => "train",
            StageId::Evaluate => "evaluate",
            StageId::Analyze => "analyze",
            StageId::Report => "report",
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// The configuration slice a stage's outputs actually depend on,
/// cumulative along the pipeline so downstream hashes pin upstream
/// choices.
fn config_value(cfg: &RunConfig, stage: StageId) -> serde_json::Value {
    let mut v = serde_json::Map::new();
    v.insert("ads".into(), serde_json::json!(cfg.ads));
    v.insert("sponsors".into(), serde_json::json!(cfg.sponsors));
    if stage >= StageId::Label {
        v.insert("language".into(), serde_json::json!(cfg.language));
    }
    if stage >= StageId::Split {
        v.insert("fractions".into(), serde_json::json!(cfg.fractions));
    }
    if stage >= StageId::Preprocess {
        v.insert("gazetteer".into(), serde_json::json!(cfg.gazetteer));
        v.insert("preprocess".into(), serde_json::json!(cfg.preprocess));
    }
    if matches!(stage, StageId::Train | StageId::Evaluate | StageId::Report) {
        v.insert("task".into(), serde_json::json!(cfg.task));
        v.insert("model".into(), serde_json::json!(cfg.model));
        // vocab_size is derived from the training tokens, not configured
        let mut mc = cfg.model_config.clone();
        mc.vocab_size = 0;
        v.insert("model_config".into(), serde_json::json!(mc));
        v.insert("schedule".into(), serde_json::json!(cfg.schedule));
        v.insert("l2".into(), serde_json::json!(cfg.l2));
    }
    if matches!(stage, StageId::Analyze | StageId::Report) {
        v.insert("task".into(), serde_json::json!(cfg.task));
        v.insert("alpha".into(), serde_json::json!(cfg.alpha));
        v.insert("top_k".into(), serde_json::json!(cfg.top_k));
        v.insert(
            "analysis_split".into(),
            serde_json::json!(cfg.analysis_split),
        );
    }
    serde_json::Value::Object(v)
}

pub fn config_hash(cfg: &RunConfig, stage: StageId) -> String {
    sha256_hex(config_value(cfg, stage).to_string().as_bytes())
}

fn stage_dir(cfg: &RunConfig, stage: StageId) -> PathBuf {
    cfg.out_dir.join(stage.as_str())
}

/// Corpus stages share one manifest; model- and analysis-scoped stages
/// get one per task (and model), so runs against different selectors
/// coexist without invalidating each other.
fn manifest_path(cfg: &RunConfig, stage: StageId) -> PathBuf {
    let dir = stage_dir(cfg, stage);
    match stage {
        StageId::Ingest | StageId::Label | StageId::Split | StageId::Preprocess => {
            dir.join("manifest.json")
        }
        StageId::Train | StageId::Evaluate | StageId::Report => dir
            .join(cfg.task.as_str())
            .join(&cfg.model)
            .join("manifest.json"),
        StageId::Analyze => dir.join(cfg.task.as_str()).join("manifest.json"),
    }
}

/// Input hashes, effective-config hash, output hashes, and row counts for
/// one stage run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub rows: BTreeMap<String, u64>,
}

/// What a stage reports back to the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSummary {
    pub stage: &'static str,
    pub rows: BTreeMap<String, u64>,
}

/// Exclusive ownership of the output directory for one command.
struct Lock {
    path: PathBuf,
}

impl Lock {
    fn acquire(out_dir: &Path) -> Result<Lock> {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let path = out_dir.join(".lock");
        match std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(_) => Ok(Lock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::Locked(out_dir.to_path_buf()))
            }
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

/// Collects a stage's outputs and writes the manifest on `finish`.
struct StageWriter {
    stage: StageId,
    dir: PathBuf,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    rows: BTreeMap<String, u64>,
}

impl StageWriter {
    fn new(cfg: &RunConfig, stage: StageId) -> Result<StageWriter> {
        let dir = stage_dir(cfg, stage);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(StageWriter {
            stage,
            dir,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            rows: BTreeMap::new(),
        })
    }

    fn input(&mut self, name: &str, path: &Path) -> Result<()> {
        self.inputs.insert(name.to_string(), hash_file(path)?);
        Ok(())
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.outputs.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Records a file some other writer produced inside the stage dir.
    fn record(&mut self, rel: &str) -> Result<()> {
        let hash = hash_file(&self.dir.join(rel))?;
        self.outputs.insert(rel.to_string(), hash);
        Ok(())
    }

    fn count(&mut self, key: &str, n: u64) {
        self.rows.insert(key.to_string(), n);
    }

    fn finish(self, cfg: &RunConfig) -> Result<StageSummary> {
        let manifest = StageManifest {
            stage: self.stage.as_str().to_string(),
            config_hash: config_hash(cfg, self.stage),
            inputs: self.inputs,
            outputs: self.outputs,
            rows: self.rows.clone(),
        };
        let path = manifest_path(cfg, self.stage);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok(StageSummary {
            stage: self.stage.as_str(),
            rows: self.rows,
        })
    }
}

fn load_manifest(cfg: &RunConfig, current: StageId, needed: StageId) -> Result<StageManifest> {
    let path = manifest_path(cfg, needed);
    if !path.exists() {
        return Err(Error::MissingUpstream {
            stage: current.as_str().to_string(),
            needed: needed.as_str().to_string(),
            detail: format!("run `polads {}` first", needed.as_str()),
        });
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))
}

fn verify_outputs(cfg: &RunConfig, needed: StageId, manifest: &StageManifest) -> Result<()> {
    let dir = stage_dir(cfg, needed);
    for (rel, recorded) in &manifest.outputs {
        let on_disk = hash_file(&dir.join(rel))?;
        if &on_disk != recorded {
            return Err(Error::StaleCache {
                stage: needed.as_str().to_string(),
                detail: format!("`{rel}` changed on disk after the stage ran"),
            });
        }
    }
    Ok(())
}

/// Loads and verifies an upstream stage: manifest present, produced under
/// the same effective config, and artifacts unmodified on disk.
fn require_upstream(cfg: &RunConfig, current: StageId, needed: StageId) -> Result<StageManifest> {
    let manifest = load_manifest(cfg, current, needed)?;
    if manifest.config_hash != config_hash(cfg, needed) {
        return Err(Error::StaleCache {
            stage: needed.as_str().to_string(),
            detail: "configuration changed since this stage ran; re-run it".to_string(),
        });
    }
    verify_outputs(cfg, needed, &manifest)?;
    Ok(manifest)
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l)
                .map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))
        })
        .collect()
}

fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("artifact serializes"));
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

/// Reads the raw inputs, quarantines malformed lines into rejects.csv, and
/// writes normalized ads/sponsors. Relative image paths are resolved
/// against the directory containing ads.jsonl.
pub fn cmd_ingest(cfg: &RunConfig) -> Result<StageSummary> {
    let _lock = Lock::acquire(&cfg.out_dir)?;
    let mut writer = StageWriter::new(cfg, StageId::Ingest)?;
    writer.input("ads.jsonl", &cfg.ads)?;
    writer.input("sponsors.csv", &cfg.sponsors)?;
    let report = corpus::ingest(&cfg.ads, &cfg.sponsors)?;
    let base = cfg.ads.parent().unwrap_or_else(|| Path::new("."));
    let ads: Vec<AdRecord> = report
        .ads
        .into_iter()
        .map(|mut ad| {
            if let Some(p) = &ad.image_path {
                if p.is_relative() {
                    ad.image_path = Some(base.join(p));
                }
            }
            ad
        })
        .collect();
    writer.write("ads.jsonl", to_jsonl(&ads).as_bytes())?;

    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record([
        "sponsor_id",
        "name",
        "registry_kind",
        "registry_id",
        "affiliation",
    ])
    .map_err(|e| Error::Malformed(e.to_string()))?;
    for s in &report.sponsors {
        csv.write_record([
            s.sponsor_id.as_str(),
            s.name.as_str(),
            s.registry_kind.as_str(),
            s.registry_id.as_str(),
            s.affiliation.as_str(),
        ])
        .map_err(|e| Error::Malformed(e.to_string()))?;
    }
    writer.write(
        "sponsors.csv",
        &csv.into_inner()
            .map_err(|e| Error::Malformed(e.to_string()))?,
    )?;

    let mut rejects = csv::Writer::from_writer(Vec::new());
    rejects
        .write_record(["line_no", "reason"])
        .map_err(|e| Error::Malformed(e.to_string()))?;
    for r in &report.rejects {
        rejects
            .write_record([r.line_no.to_string().as_str(), r.reason.as_str()])
            .map_err(|e| Error::Malformed(e.to_string()))?;
    }
    writer.write(
        "rejects.csv",
        &rejects
            .into_inner()
            .map_err(|e| Error::Malformed(e.to_string()))?,
    )?;

    writer.count("ads", ads.len() as u64);
    writer.count("sponsors", report.sponsors.len() as u64);
    writer.count("rejects", report.rejects.len() as u64);
    writer.finish(cfg)
}

// ---------------------------------------------------------------------------
// label
// ---------------------------------------------------------------------------

/// One deduplicated, language-filtered ad with its task labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LabelRow {
    ad: AdRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ideology: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sponsor_type: Option<Label>,
}

/// Deduplicates, filters to the configured language, and attaches both
/// task labels from the sponsor registry.
pub fn cmd_label(cfg: &RunConfig) -> Result<StageSummary> {
    let _lock = Lock::acquire(&cfg.out_dir)?;
    require_upstream(cfg, StageId::Label, StageId::Ingest)?;
    let ingest_dir = stage_dir(cfg, StageId::Ingest);
    let ads: Vec<AdRecord> = read_jsonl(&ingest_dir.join("ads.jsonl"))?;
    let (sponsors, _) = corpus::read_sponsors_csv(&ingest_dir.join("sponsors.csv"))?;
    let registry: BTreeMap<&str, &SponsorRecord> = sponsors
        .iter()
        .map(|s| (s.sponsor_id.as_str(), s))
        .collect();

    let deduped = corpus::deduplicate(&ads);
    let kept = match &cfg.language {
        Some(lang) => corpus::filter_language(&deduped, lang, &StopwordDetector::default()),
        None => deduped.clone(),
    };
    let mut rows = Vec::with_capacity(kept.len());
    for ad in &kept {
        let sponsor = registry
            .get(ad.sponsor_id.as_str())
            .ok_or_else(|| Error::UnknownSponsor(ad.sponsor_id.clone()))?;
        rows.push(LabelRow {
            ideology: corpus::label_ideology(ad, sponsor)?.map(|t| t.label()),
            sponsor_type: corpus::label_sponsor_type(ad, sponsor)?.map(|t| t.label()),
            ad: ad.clone(),
        });
    }

    let mut writer = StageWriter::new(cfg, StageId::Label)?;
    writer.input("ads.jsonl", &ingest_dir.join("ads.jsonl"))?;
    writer.input("sponsors.csv", &ingest_dir.join("sponsors.csv"))?;
    writer.write("labeled.jsonl", to_jsonl(&rows).as_bytes())?;
    writer.count("kept", rows.len() as u64);
    writer.count("duplicates_removed", (ads.len() - deduped.len()) as u64);
    writer.count("language_filtered", (deduped.len() - kept.len()) as u64);
    writer.count(
        "ideology_labeled",
        rows.iter().filter(|r| r.ideology.is_some()).count() as u64,
    );
    writer.count(
        "sponsor_type_labeled",
        rows.iter().filter(|r| r.sponsor_type.is_some()).count() as u64,
    );
    writer.finish(cfg)
}

// ---------------------------------------------------------------------------
// split
// ---------------------------------------------------------------------------

/// Assigns chronological train/dev/test splits per task and writes the
/// labeled corpus plus labels.csv (`ad_id,task,label,split`).
pub fn cmd_split(cfg: &RunConfig) -> Result<StageSummary> {
    let _lock = Lock::acquire(&cfg.out_dir)?;
    require_upstream(cfg, StageId::Split, StageId::Label)?;
    let label_dir = stage_dir(cfg, StageId::Label);
    let rows: Vec<LabelRow> = read_jsonl(&label_dir.join("labeled.jsonl"))?;

    let mut labeled: Vec<LabeledAd> = rows
        .iter()
        .map(|r| LabeledAd {
            ad: r.ad.clone(),
            ideology: None,
            sponsor_type: None,
        })
        .collect();
    for task in [Task::Ideology, Task::SponsorType] {
        let member_of = |r: &LabelRow| match task {
            Task::Ideology => r.ideology,
            Task::SponsorType => r.sponsor_type,
        };
        let indices: Vec<usize> = (0..rows.len())
            .filter(|&i| member_of(&rows[i]).is_some())
            .collect();
        if indices.is_empty() {
            continue;
        }
        let subset: Vec<AdRecord> = indices.iter().map(|&i| rows[i].ad.clone()).collect();
        let splits = corpus::chronological_split(&subset, cfg.fractions)?;
        for (&i, &split) in indices.iter().zip(&splits) {
            let label = member_of(&rows[i]).expect("filtered to labeled ads");
            match task {
                Task::Ideology => labeled[i].ideology = Some((label, split)),
                Task::SponsorType => labeled[i].sponsor_type = Some((label, split)),
            }
        }
    }
    let corpus = LabeledCorpus { ads: labeled };
    corpus.validate()?;

    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record(["ad_id", "task", "label", "split"])
        .map_err(|e| Error::Malformed(e.to_string()))?;
    for la in &corpus.ads {
        for task in [Task::Ideology, Task::SponsorType] {
            if let Some((label, split)) = la.for_task(task) {
                csv.write_record([
                    la.ad.ad_id.as_str(),
                    task.as_str(),
                    label.as_str(),
                    split.as_str(),
                ])
                .map_err(|e| Error::Malformed(e.to_string()))?;
            }
        }
    }

    let mut writer = StageWriter::new(cfg, StageId::Split)?;
    writer.input("labeled.jsonl", &label_dir.join("labeled.jsonl"))?;
    writer.write("corpus.jsonl", to_jsonl(&corpus.ads).as_bytes())?;
    writer.write(
        "labels.csv",
        &csv.into_inner()
            .map_err(|e| Error::Malformed(e.to_string()))?,
    )?;
    for task in [Task::Ideology, Task::SponsorType] {
        let ads = corpus.task_ads(task);
        for split in [Split::Train, Split::Dev, Split::Test] {
            let n = ads.iter().filter(|(_, _, s)| *s == split).count();
            writer.count(
                &format!("{}_{}", task.as_str(), split.as_str().to_lowercase()),
                n as u64,
            );
        }
    }
    writer.finish(cfg)
}

// ---------------------------------------------------------------------------
// preprocess
// ---------------------------------------------------------------------------

fn load_corpus(cfg: &RunConfig) -> Result<LabeledCorpus> {
    let path = stage_dir(cfg, StageId::Split).join("corpus.jsonl");
    Ok(LabeledCorpus {
        ads: read_jsonl(&path)?,
    })
}

/// Tokenizes both text views, replaces rare tokens with the unknown
/// placeholder using each task's training split only, and writes per-task
/// token files plus corpus statistics.
pub fn cmd_preprocess(cfg: &RunConfig) -> Result<StageSummary> {
    let _lock = Lock::acquire(&cfg.out_dir)?;
    require_upstream(cfg, StageId::Preprocess, StageId::Split)?;
    let corpus = load_corpus(cfg)?;
    let gazetteer = match &cfg.gazetteer {
        Some(path) => Gazetteer::from_path(path)?,
        None => Gazetteer::from_entries(Vec::<String>::new()),
    };

    let mut writer = StageWriter::new(cfg, StageId::Preprocess)?;
    writer.input(
        "corpus.jsonl",
        &stage_dir(cfg, StageId::Split).join("corpus.jsonl"),
    )?;
    if let Some(path) = &cfg.gazetteer {
        writer.input("gazetteer.txt", path)?;
    }

    let tokenized: BTreeMap<&str, TokenizedAd> = corpus
        .ads
        .iter()
        .map(|la| {
            let it = preprocess::normalize_text(&la.ad.image_text, &cfg.preprocess, &gazetteer);
            let d = preprocess::normalize_text(&la.ad.densecap, &cfg.preprocess, &gazetteer);
            (
                la.ad.ad_id.as_str(),
                TokenizedAd::new(la.ad.ad_id.clone(), it, d),
            )
        })
        .collect();

    for task in [Task::Ideology, Task::SponsorType] {
        let task_ads = corpus.task_ads(task);
        if task_ads.is_empty() {
            continue;
        }
        let train: Vec<TokenizedAd> = task_ads
            .iter()
            .filter(|(_, _, s)| *s == Split::Train)
            .map(|(la, _, _)| tokenized[la.ad.ad_id.as_str()].clone())
            .collect();
        let keep = preprocess::build_unknown_set(&train, &cfg.preprocess);
        let out: Vec<TokenizedAd> = task_ads
            .iter()
            .map(|(la, _, _)| {
                preprocess::apply_unknowns(&tokenized[la.ad.ad_id.as_str()], &keep, &cfg.preprocess)
            })
            .collect();
        writer.write(
            &format!("{}/tokens.jsonl", task.as_str()),
            to_jsonl(&out).as_bytes(),
        )?;
        writer.count(&format!("{}_ads", task.as_str()), out.len() as u64);
        writer.count(&format!("{}_kept_tokens", task.as_str()), keep.len() as u64);
    }

    let token_counts: BTreeMap<String, (usize, usize)> = tokenized
        .values()
        .map(|t| (t.ad_id.clone(), (t.tokens_it.len(), t.tokens_d.len())))
        .collect();
    let stats = corpus::corpus_stats(&corpus, &token_counts);
    writer.write(
        "stats.json",
        serde_json::to_string_pretty(&stats)
            .expect("stats serialize")
            .as_bytes(),
    )?;
    writer.finish(cfg)
}

// ---------------------------------------------------------------------------
// shared data loading for train / evaluate / analyze
// ---------------------------------------------------------------------------

/// The task's ads joined with their preprocessed tokens.
struct TaskData {
    ads: Vec<AdRecord>,
    tokens: Vec<TokenizedAd>,
    labels: Vec<u8>,
    splits: Vec<Split>,
}

impl TaskData {
    fn indices_of(&self, split: Split) -> Vec<usize> {
        (0..self.ads.len())
            .filter(|&i| self.splits[i] == split)
            .collect()
    }
}

fn encode_label(task: Task, label: Label) -> u8 {
    (label == task.positive_label()) as u8
}

fn load_task_data(cfg: &RunConfig, task: Task) -> Result<TaskData> {
    let corpus = load_corpus(cfg)?;
    let tokens_path =
        stage_dir(cfg, StageId::Preprocess).join(format!("{}/tokens.jsonl", task.as_str()));
    if !tokens_path.exists() {
        return Err(Error::EmptyInput(format!(
            "no ads carry a {} label in this corpus",
            task.as_str()
        )));
    }
    let token_rows: Vec<TokenizedAd> = read_jsonl(&tokens_path)?;
    let by_id: BTreeMap<&str, &TokenizedAd> =
        token_rows.iter().map(|t| (t.ad_id.as_str(), t)).collect();
    let mut data = TaskData {
        ads: Vec::new(),
        tokens: Vec::new(),
        labels: Vec::new(),
        splits: Vec::new(),
    };
    for (la, label, split) in corpus.task_ads(task) {
        let tok = by_id
            .get(la.ad.ad_id.as_str())
            .ok_or_else(|| Error::StaleCache {
                stage: StageId::Preprocess.as_str().to_string(),
                detail: format!("ad `{}` has no preprocessed tokens", la.ad.ad_id),
            })?;
        data.ads.push(la.ad.clone());
        data.tokens.push((*tok).clone());
        data.labels.push(encode_label(task, label));
        data.splits.push(split);
    }
    Ok(data)
}

fn view_tokens(tok: &TokenizedAd, view: TextView) -> &[String] {
    match view {
        TextView::It => &tok.tokens_it,
        TextView::D => &tok.tokens_d,
        TextView::Itd => &tok.tokens_joined,
    }
}

/// Token ids for the text encoders: every training token of both views
/// plus the placeholders, densely numbered in lexicographic order. Unseen
/// tokens map to the unknown placeholder at use time.
fn token_id_map(train: &[&TokenizedAd], pre: &PreprocessConfig) -> BTreeMap<String, usize> {
    let mut terms: BTreeSet<String> = BTreeSet::new();
    terms.insert(pre.placeholder_url.clone());
    terms.insert(pre.placeholder_person.clone());
    terms.insert(pre.placeholder_unknown.clone());
    for tok in train {
        terms.extend(tok.tokens_it.iter().cloned());
        terms.extend(tok.tokens_d.iter().cloned());
    }
    terms.into_iter().enumerate().map(|(i, t)| (t, i)).collect()
}

fn ids_for(
    tokens: &[String],
    map: &BTreeMap<String, usize>,
    pre: &PreprocessConfig,
    cap: usize,
) -> Vec<usize> {
    let unk = map[&pre.placeholder_unknown];
    tokens
        .iter()
        .take(cap)
        .map(|t| map.get(t).copied().unwrap_or(unk))
        .collect()
}

fn build_examples(
    data: &TaskData,
    indices: &[usize],
    kind: ModelKind,
    map: &BTreeMap<String, usize>,
    cfg: &RunConfig,
) -> Result<Vec<Example>> {
    let cap = cfg.preprocess.max_tokens.min(cfg.model_config.max_tokens);
    indices
        .iter()
        .map(|&i| {
            let tokens = match kind.text_view() {
                Some(view) => ids_for(
                    view_tokens(&data.tokens[i], view),
                    map,
                    &cfg.preprocess,
                    cap,
                ),
                None => Vec::new(),
            };
            let image = if kind.uses_image() {
                let ad = &data.ads[i];
                let path = ad.image_path.as_ref().ok_or_else(|| Error::BadImage {
                    ad_id: ad.ad_id.clone(),
                    detail: "record has no image_path".to_string(),
                })?;
                Some(preprocess::normalize_image(path, &ad.ad_id, &cfg.preprocess)?.pixels)
            } else {
                None
            };
            Ok(Example {
                tokens,
                image,
                label: data.labels[i],
            })
        })
        .collect()
}

fn class_weights(labels: &[u8]) -> Result<BinaryWeights> {
    let n1 = labels.iter().filter(|&&y| y == 1).count();
    let n0 = labels.len() - n1;
    BinaryWeights::balanced(n0, n1)
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

/// Serialized linear model.
#[derive(Serialize, Deserialize)]
struct LinearFile {
    version: u32,
    kind: ModelKind,
    l2: f64,
    iterations: usize,
    final_grad_norm: f64,
    bias: f64,
    weights: Vec<f64>,
}

fn model_dir(cfg: &RunConfig, stage: StageId) -> PathBuf {
    stage_dir(cfg, stage)
        .join(cfg.task.as_str())
        .join(&cfg.model)
}

/// Trains the selected model on the task's training split, one run per
/// seed, and writes checkpoints under `train/<task>/<model>/seed<k>/`.
pub fn cmd_train(cfg: &RunConfig) -> Result<StageSummary> {
    let _lock = Lock::acquire(&cfg.out_dir)?;
    let kind = match cfg.model_spec()? {
        ModelSpec::Majority => return Err(Error::Config(
            "the majority baseline has no training stage; run `polads evaluate --model majority`"
                .to_string(),
        )),
        ModelSpec::Kind(kind) => kind,
    };
    require_upstream(cfg, StageId::Train, StageId::Split)?;
    require_upstream(cfg, StageId::Train, StageId::Preprocess)?;
    let data = load_task_data(cfg, cfg.task)?;
    let train_idx = data.indices_of(Split::Train);
    let dev_idx = data.indices_of(Split::Dev);
    if train_idx.is_empty() {
        return Err(Error::EmptyInput("training split is empty".to_string()));
    }
    let weights = class_weights(
        &train_idx
            .iter()
            .map(|&i| data.labels[i])
            .collect::<Vec<_>>(),
    )?;

    let mut writer = StageWriter::new(cfg, StageId::Train)?;
    writer.input(
        "corpus.jsonl",
        &stage_dir(cfg, StageId::Split).join("corpus.jsonl"),
    )?;
    writer.input(
        "tokens.jsonl",
        &stage_dir(cfg, StageId::Preprocess).join(format!("{}/tokens.jsonl", cfg.task.as_str())),
    )?;
    let rel = |name: &str| format!("{}/{}/{name}", cfg.task.as_str(), cfg.model);

    if kind.is_linear() {
        let view = kind.text_view().expect("linear models are text models");
        let train_docs: Vec<&[String]> = train_idx
            .iter()
            .map(|&i| view_tokens(&data.tokens[i], view))
            .collect();
        let vocab = features::fit_vocabulary(train_docs.iter().copied(), NGRAM_RANGE)?;
        let xs: Vec<_> = train_idx
            .iter()
            .map(|&i| features::tfidf(view_tokens(&data.tokens[i], view), &vocab))
            .collect();
        let ys: Vec<u8> = train_idx.iter().map(|&i| data.labels[i]).collect();
        let model = train_logreg(&xs, &ys, weights, cfg.l2)?;
        let vocab_rel = rel("vocab.tsv");
        let vocab_path = stage_dir(cfg, StageId::Train).join(&vocab_rel);
        std::fs::create_dir_all(vocab_path.parent().expect("has parent"))
            .map_err(|e| Error::io(&vocab_path, e))?;
        features::write_vocab_tsv(&vocab, &vocab_path)?;
        writer.record(&vocab_rel)?;
        let file = LinearFile {
            version: 1,
            kind,
            l2: cfg.l2,
            iterations: model.iterations,
            final_grad_norm: model.final_grad_norm,
            bias: model.bias,
            weights: model.weights.clone(),
        };
        let bytes = serde_json::to_string(&file).expect("model serializes");
        // gradient descent from zero init has no seed dependence, so every
        // seed shares the same fitted model
        for &seed in &cfg.schedule.seeds {
            writer.write(&rel(&format!("seed{seed}/model.json")), bytes.as_bytes())?;
        }
        writer.count("vocab_terms", vocab.len() as u64);
        writer.count("iterations", model.iterations as u64);
    } else {
        let train_tokens: Vec<&TokenizedAd> = train_idx.iter().map(|&i| &data.tokens[i]).collect();
        let map = token_id_map(&train_tokens, &cfg.preprocess);
        let mut model_config = cfg.model_config.clone();
        model_config.vocab_size = map.len();
        let train_ex = build_examples(&data, &train_idx, kind, &map, cfg)?;
        let dev_ex = build_examples(&data, &dev_idx, kind, &map, cfg)?;
        writer.write(
            &rel("token_ids.json"),
            serde_json::to_string_pretty(&map)
                .expect("map serializes")
                .as_bytes(),
        )?;
        for &seed in &cfg.schedule.seeds {
            let mut model = NeuralClassifier::new(kind, model_config.clone(), seed)?;
            let fit = run_schedule(&mut model, &cfg.schedule, &train_ex, &dev_ex, weights, seed)?;
            let seed_rel = rel(&format!("seed{seed}/model.json"));
            let path = stage_dir(cfg, StageId::Train).join(&seed_rel);
            std::fs::create_dir_all(path.parent().expect("has parent"))
                .map_err(|e| Error::io(&path, e))?;
            save_checkpoint(&mut model, Some(&fit), &path)?;
            writer.record(&seed_rel)?;
        }
        writer.count("vocab_terms", map.len() as u64);
    }
    writer.count("train_ads", train_idx.len() as u64);
    writer.count("dev_ads", dev_idx.len() as u64);
    writer.count("seeds", cfg.schedule.seeds.len() as u64);
    writer.finish(cfg)
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

/// Evaluates the selected model on the task's test split, one run per
/// seed, and writes metrics.json.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<StageSummary> {
    let _lock = Lock::acquire(&cfg.out_dir)?;
    let spec = cfg.model_spec()?;
    require_upstream(cfg, StageId::Evaluate, StageId::Split)?;
    let mut writer = StageWriter::new(cfg, StageId::Evaluate)?;
    writer.input(
        "corpus.jsonl",
        &stage_dir(cfg, StageId::Split).join("corpus.jsonl"),
    )?;

    let runs: Vec<SeedRun> = match spec {
        ModelSpec::Majority => {
            let corpus = load_corpus(cfg)?;
            let task_ads = corpus.task_ads(cfg.task);
            let train_labels: Vec<Label> = task_ads
                .iter()
                .filter(|(_, _, s)| *s == Split::Train)
                .map(|(_, l, _)| *l)
                .collect();
            let majority = eval::majority_baseline(&train_labels)?;
            let constant = encode_label(cfg.task, majority);
            let y_true: Vec<u8> = task_ads
                .iter()
                .filter(|(_, _, s)| *s == Split::Test)
                .map(|(_, l, _)| encode_label(cfg.task, *l))
                .collect();
            let y_pred = vec![constant; y_true.len()];
            let metrics = eval::macro_metrics(&y_true, &y_pred)?;
            cfg.schedule
                .seeds
                .iter()
                .map(|&seed| SeedRun {
                    seed,
                    metrics: metrics.clone(),
                })
                .collect()
        }
        ModelSpec::Kind(kind) => {
            require_upstream(cfg, StageId::Evaluate, StageId::Preprocess)?;
            require_upstream(cfg, StageId::Evaluate, StageId::Train)?;
            let data = load_task_data(cfg, cfg.task)?;
            let test_idx = data.indices_of(Split::Test);
            let y_true: Vec<u8> = test_idx.iter().map(|&i| data.labels[i]).collect();
            let train_dir = model_dir(cfg, StageId::Train);
            if kind.is_linear() {
                let view = kind.text_view().expect("linear models are text models");
                let vocab = features::read_vocab_tsv(&train_dir.join("vocab.tsv"), NGRAM_RANGE)?;
                let mut runs = Vec::new();
                for &seed in &cfg.schedule.seeds {
                    let model = read_linear(&train_dir.join(format!("seed{seed}/model.json")))?;
                    let y_pred: Vec<u8> = test_idx
                        .iter()
                        .map(|&i| {
                            model.predict(&features::tfidf(
                                view_tokens(&data.tokens[i], view),
                                &vocab,
                            ))
                        })
                        .collect();
                    runs.push(SeedRun {
                        seed,
                        metrics: eval::macro_metrics(&y_true, &y_pred)?,
                    });
                }
                runs
            } else {
                let map: BTreeMap<String, usize> = {
                    let path = train_dir.join("token_ids.json");
                    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                    serde_json::from_str(&text)
                        .map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))?
                };
                let test_ex = build_examples(&data, &test_idx, kind, &map, cfg)?;
                let mut runs = Vec::new();
                for &seed in &cfg.schedule.seeds {
                    let (model, _) =
                        load_checkpoint(&train_dir.join(format!("seed{seed}/model.json")))?;
                    let y_pred: Vec<u8> = test_ex
                        .iter()
                        .map(|ex| model.predict(ex))
                        .collect::<Result<_>>()?;
                    runs.push(SeedRun {
                        seed,
                        metrics: eval::macro_metrics(&y_true, &y_pred)?,
                    });
                }
                runs
            }
        }
    };

    let metrics: Vec<RunMetrics> = runs.iter().map(|r| r.metrics.clone()).collect();
    let (mean, std) = eval::aggregate(&metrics)?;
    let report = EvalReport {
        task: cfg.task.as_str().to_string(),
        model: cfg.model.clone(),
        runs,
        mean,
        std,
    };
    let rel = format!("{}/{}/metrics.json", cfg.task.as_str(), cfg.model);
    let path = stage_dir(cfg, StageId::Evaluate).join(&rel);
    std::fs::create_dir_all(path.parent().expect("has parent")).map_err(|e| Error::io(&path, e))?;
    eval::write_metrics(&report, &path)?;
    writer.record(&rel)?;
    writer.count("seeds", report.runs.len() as u64);
    writer.count(
        "macro_f1_x100",
        (report.mean.f1 * 100.0).round().max(0.0) as u64,
    );
    writer.finish(cfg)
}

fn read_linear(path: &Path) -> Result<LogisticRegression> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: LinearFile = serde_json::from_str(&text)
        .map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))?;
    if file.version != 1 {
        return Err(Error::Malformed(format!(
            "{}: model version {} (expected 1)",
            path.display(),
            file.version
        )));
    }
    Ok(LogisticRegression {
        weights: file.weights,
        bias: file.bias,
        iterations: file.iterations,
        final_grad_norm: file.final_grad_norm,
    })
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

/// Correlates image-text unigram frequencies with the task label and
/// writes correlations.csv (`feature,class,r,t,p,n`), top-k rows per
/// class, each class sorted by descending r.
pub fn cmd_analyze(cfg: &RunConfig) -> Result<StageSummary> {
    let _lock = Lock::acquire(&cfg.out_dir)?;
    require_upstream(cfg, StageId::Analyze, StageId::Split)?;
    require_upstream(cfg, StageId::Analyze, StageId::Preprocess)?;
    let data = load_task_data(cfg, cfg.task)?;
    let mut features_rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..data.ads.len() {
        if !cfg.analysis_split.keeps(data.splits[i]) {
            continue;
        }
        if let Some(freqs) = features::unigram_relative_freq(&data.tokens[i].tokens_it) {
            features_rows.push(freqs);
            labels.push(data.labels[i]);
        }
    }
    let report = lexstats::correlate(&features_rows, &labels)?;

    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record(["feature", "class", "r", "t", "p", "n"])
        .map_err(|e| Error::Malformed(e.to_string()))?;
    let mut per_class = BTreeMap::new();
    for (label, toward_positive) in [
        (cfg.task.positive_label(), true),
        (cfg.task.negative_label(), false),
    ] {
        let ranked = lexstats::rank_report(&report.rows, toward_positive, cfg.alpha, cfg.top_k);
        per_class.insert(label.as_str(), ranked.len() as u64);
        for row in ranked {
            csv.write_record([
                row.feature.as_str(),
                label.as_str(),
                format!("{:.6}", row.r).as_str(),
                format!("{:.6}", row.t).as_str(),
                format!("{:.6e}", row.p).as_str(),
                row.n.to_string().as_str(),
            ])
            .map_err(|e| Error::Malformed(e.to_string()))?;
        }
    }

    let mut writer = StageWriter::new(cfg, StageId::Analyze)?;
    writer.input(
        "tokens.jsonl",
        &stage_dir(cfg, StageId::Preprocess).join(format!("{}/tokens.jsonl", cfg.task.as_str())),
    )?;
    let rel = format!("{}/correlations.csv", cfg.task.as_str());
    writer.write(
        &rel,
        &csv.into_inner()
            .map_err(|e| Error::Malformed(e.to_string()))?,
    )?;
    writer.count("ads", labels.len() as u64);
    writer.count("features_tested", report.rows.len() as u64);
    writer.count("features_excluded", report.excluded.len() as u64);
    for (name, n) in per_class {
        writer.count(&format!("rows_{name}"), n);
    }
    writer.finish(cfg)
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

/// Renders metrics.json and correlations.csv (whichever exist for the
/// configured task/model) into a plain-text report. Artifacts are
/// rendered as found: their integrity is verified against the producing
/// stage's manifest, but not re-keyed to the current flags, since
/// rendering takes no parameters of its own. Returns the rendered text.
pub fn cmd_report(cfg: &RunConfig) -> Result<String> {
    let _lock = Lock::acquire(&cfg.out_dir)?;
    let metrics_path = model_dir(cfg, StageId::Evaluate).join("metrics.json");
    let correlations_path = stage_dir(cfg, StageId::Analyze)
        .join(cfg.task.as_str())
        .join("correlations.csv");
    let mut sections = Vec::new();
    if metrics_path.exists() {
        let manifest = load_manifest(cfg, StageId::Report, StageId::Evaluate)?;
        verify_outputs(cfg, StageId::Evaluate, &manifest)?;
        let text =
            std::fs::read_to_string(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
        sections.push(crate::report::render_metrics(&text)?);
    }
    if correlations_path.exists() {
        let manifest = load_manifest(cfg, StageId::Report, StageId::Analyze)?;
        verify_outputs(cfg, StageId::Analyze, &manifest)?;
        let text = std::fs::read_to_string(&correlations_path)
            .map_err(|e| Error::io(&correlations_path, e))?;
        sections.push(crate::report::render_correlations(&text)?);
    }
    if sections.is_empty() {
        return Err(Error::MissingUpstream {
            stage: StageId::Report.as_str().to_string(),
            needed: StageId::Evaluate.as_str().to_string(),
            detail: "no metrics.json or correlations.csv for this task/model; run `polads evaluate` or `polads analyze` first".to_string(),
        });
    }
    let rendered = sections.join("\n");
    let mut writer = StageWriter::new(cfg, StageId::Report)?;
    let rel = format!("{}/{}/report.txt", cfg.task.as_str(), cfg.model);
    writer.write(&rel, rendered.as_bytes())?;
    writer.finish(cfg)?;
    Ok(rendered)
}

// ---------------------------------------------------------------------------

/// Runs every stage through evaluate (and analyze) in order.
pub fn run_all(cfg: &RunConfig) -> Result<Vec<StageSummary>> {
    let mut out = vec![
        cmd_ingest(cfg)?,
        cmd_label(cfg)?,
        cmd_split(cfg)?,
        cmd_preprocess(cfg)?,
    ];
    if cfg.model_spec()? != ModelSpec::Majority {
        out.push(cmd_train(cfg)?);
    }
    out.push(cmd_evaluate(cfg)?);
    out.push(cmd_analyze(cfg)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Stage;
    use crate::synth;

    fn fixture_config(dir: &Path, n: usize) -> RunConfig {
        let corpus = synth::make_and_corpus(n, 0).unwrap();
        let paths = synth::write_fixture(&corpus, &dir.join("raw")).unwrap();
        RunConfig {
            ads: paths.ads,
            sponsors: paths.sponsors,
            gazetteer: Some(paths.gazetteer),
            out_dir: dir.join("out"),
            task: Task::Ideology,
            model: "logreg_it".to_string(),
            preprocess: PreprocessConfig {
                image_side: 16,
                ..Default::default()
            },
            model_config: ModelConfig {
                text_dim: 8,
                image_dim: 8,
                dropout: 0.0,
                text_layers: 1,
                text_heads: 2,
                vocab_size: 1,
                max_tokens: 32,
                positional: true,
            },
            schedule: TrainSchedule {
                stages: vec![Stage {
                    freeze: BTreeSet::new(),
                    epochs: 2,
                    lr: 1e-2,
                }],
                seeds: vec![0, 1],
            },
            ..Default::default()
        }
    }

    fn read_out(cfg: &RunConfig, rel: &str) -> Vec<u8> {
        std::fs::read(cfg.out_dir.join(rel)).unwrap()
    }

    #[test]
    fn full_pipeline_runs_and_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = fixture_config(dir.path(), 120);
        let summaries = run_all(&cfg).unwrap();
        assert!(summaries.iter().any(|s| s.stage == "evaluate"));

        let files = [
            "ingest/ads.jsonl",
            "label/labeled.jsonl",
            "split/corpus.jsonl",
            "split/labels.csv",
            "preprocess/ideology/tokens.jsonl",
            "train/ideology/logreg_it/seed0/model.json",
            "evaluate/ideology/logreg_it/metrics.json",
            "analyze/ideology/correlations.csv",
        ];
        let first: Vec<Vec<u8>> = files.iter().map(|f| read_out(&cfg, f)).collect();
        run_all(&cfg).unwrap();
        for (f, before) in files.iter().zip(&first) {
            assert_eq!(&read_out(&cfg, f), before, "{f} changed between runs");
        }
        let rendered = cmd_report(&cfg).unwrap();
        assert!(rendered.contains("logreg_it"), "{rendered}");
    }

    #[test]
    fn missing_upstream_names_the_stage_to_run() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = fixture_config(dir.path(), 100);
        let err = cmd_label(&cfg).unwrap_err();
        match err {
            Error::MissingUpstream { needed, .. } => assert_eq!(needed, "ingest"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn corrupted_artifact_is_a_stale_cache_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = fixture_config(dir.path(), 100);
        cmd_ingest(&cfg).unwrap();
        let target = cfg.out_dir.join("ingest/ads.jsonl");
        let mut bytes = std::fs::read(&target).unwrap();
        bytes.extend_from_slice(b"{\"tampered\":true}\n");
        std::fs::write(&target, bytes).unwrap();
        let err = cmd_label(&cfg).unwrap_err();
        match err {
            Error::StaleCache { stage, detail } => {
                assert_eq!(stage, "ingest");
                assert!(detail.contains("ads.jsonl"), "{detail}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn config_change_invalidates_upstream() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = fixture_config(dir.path(), 100);
        cmd_ingest(&cfg).unwrap();
        cmd_label(&cfg).unwrap();
        cfg.fractions = (0.7, 0.15, 0.15);
        // label does not depend on fractions, split does
        cmd_split(&cfg).unwrap();
        cfg.language = None;
        let err = cmd_split(&cfg).unwrap_err();
        assert!(matches!(err, Error::StaleCache { .. }), "{err}");
    }

    #[test]
    fn lock_excludes_concurrent_commands() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = fixture_config(dir.path(), 100);
        let _held = Lock::acquire(&cfg.out_dir).unwrap();
        let err = cmd_ingest(&cfg).unwrap_err();
        assert!(matches!(err, Error::Locked(_)), "{err}");
    }

    #[test]
    fn majority_baseline_needs_no_train_stage() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = fixture_config(dir.path(), 120);
        cfg.model = "majority".to_string();
        cmd_ingest(&cfg).unwrap();
        cmd_label(&cfg).unwrap();
        cmd_split(&cfg).unwrap();
        cmd_preprocess(&cfg).unwrap();
        assert!(matches!(cmd_train(&cfg), Err(Error::Config(_))));
        cmd_evaluate(&cfg).unwrap();
        let metrics: serde_json::Value =
            serde_json::from_slice(&read_out(&cfg, "evaluate/ideology/majority/metrics.json"))
                .unwrap();
        assert_eq!(metrics["model"], "majority");
        // a constant predictor's macro recall is exactly half
        assert_eq!(metrics["mean"]["R"], 50.0);
    }

    #[test]
    fn model_runs_do_not_invalidate_each_other() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = fixture_config(dir.path(), 120);
        run_all(&cfg).unwrap();
        cfg.model = "majority".to_string();
        cmd_evaluate(&cfg).unwrap();
        cmd_report(&cfg).unwrap();
        // the earlier model's artifacts still verify and render
        cfg.model = "logreg_it".to_string();
        let rendered = cmd_report(&cfg).unwrap();
        assert!(rendered.contains("logreg_it"), "{rendered}");
    }

    #[test]
    fn unknown_model_selector_is_rejected() {
        assert!(ModelSpec::parse("bogus").is_err());
        let cfg = RunConfig {
            model: "bogus".to_string(),
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn neural_training_stage_produces_loadable_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = fixture_config(dir.path(), 120);
        cfg.model = "text_it".to_string();
        cfg.schedule = TrainSchedule {
            stages: vec![Stage {
                freeze: BTreeSet::new(),
                epochs: 1,
                lr: 1e-3,
            }],
            seeds: vec![0],
        };
        cmd_ingest(&cfg).unwrap();
        cmd_label(&cfg).unwrap();
        cmd_split(&cfg).unwrap();
        cmd_preprocess(&cfg).unwrap();
        cmd_train(&cfg).unwrap();
        let (model, log) =
            load_checkpoint(&cfg.out_dir.join("train/ideology/text_it/seed0/model.json")).unwrap();
        assert_eq!(model.kind, ModelKind::TextIt);
        assert_eq!(log.len(), 1);
        cmd_evaluate(&cfg).unwrap();
        let metrics: serde_json::Value =
            serde_json::from_slice(&read_out(&cfg, "evaluate/ideology/text_it/metrics.json"))
                .unwrap();
        assert_eq!(metrics["per_seed"].as_array().unwrap().len(), 1);
    }
}
