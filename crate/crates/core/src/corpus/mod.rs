//! Corpus construction: ad/sponsor records, task labeling from registry
//! identity, deduplication, language filtering, and chronological splits.

mod ingest;
mod language;

pub use ingest::{ingest, read_ads_jsonl, read_sponsors_csv, IngestReport, Reject};
pub use language::{LanguageDetector, StopwordDetector};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::PathBuf;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One online political ad, as extracted upstream (OCR text and dense
/// captions are consumed, never produced, by this toolkit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdRecord {
    pub ad_id: String,
    pub sponsor_id: String,
    pub start_date: NaiveDate,
    pub image_url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<PathBuf>,
    /// Text appearing on the ad image (IT).
    pub image_text: String,
    /// Dense-caption description of the image (D).
    pub densecap: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
}

impl AdRecord {
    /// The identity used for deduplication.
    pub fn dedup_key(&self) -> (&str, &str, &str) {
        (&self.image_url, &self.image_text, &self.densecap)
    }
}

/// Registry through which an ad sponsor is identified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegistryKind {
    /// Federal Election Commission committee: an official political party.
    Fec,
    /// Employer Identification Number: a third-party organization.
    Ein,
    /// State elections registration.
    State,
}

impl RegistryKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "FEC" => Some(RegistryKind::Fec),
            "EIN" => Some(RegistryKind::Ein),
            "STATE" => Some(RegistryKind::State),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RegistryKind::Fec => "FEC",
            RegistryKind::Ein => "EIN",
            RegistryKind::State => "STATE",
        }
    }
}

/// Party affiliation from the FEC registry; non-FEC sponsors are always
/// `Unknown`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Affiliation {
    Dem,
    Rep,
    Other,
    Unknown,
}

impl Affiliation {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "DEM" => Some(Affiliation::Dem),
            "REP" => Some(Affiliation::Rep),
            "OTHER" => Some(Affiliation::Other),
            "UNKNOWN" => Some(Affiliation::Unknown),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Affiliation::Dem => "DEM",
            Affiliation::Rep => "REP",
            Affiliation::Other => "OTHER",
            Affiliation::Unknown => "UNKNOWN",
        }
    }
}

/// Advertiser registry entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SponsorRecord {
    pub sponsor_id: String,
    pub name: String,
    pub registry_kind: RegistryKind,
    pub registry_id: String,
    pub affiliation: Affiliation,
}

impl SponsorRecord {
    /// EIN- and STATE-registered sponsors never carry a party affiliation.
    pub fn validate(&self) -> Result<()> {
        match self.registry_kind {
            RegistryKind::Fec => Ok(()),
            RegistryKind::Ein | RegistryKind::State => {
                if self.affiliation == Affiliation::Unknown {
                    Ok(())
                } else {
                    Err(Error::Malformed(format!(
                        "sponsor `{}`: {} registration cannot carry affiliation {}",
                        self.sponsor_id,
                        self.registry_kind.as_str(),
                        self.affiliation.as_str()
                    )))
                }
            }
        }
    }
}

/// The two prediction tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Ideology,
    SponsorType,
}

impl Task {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ideology" => Some(Task::Ideology),
            "sponsor_type" => Some(Task::SponsorType),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Ideology => "ideology",
            Task::SponsorType => "sponsor_type",
        }
    }

    /// The class encoded as 1 in binary form (first-named class of the task).
    pub fn positive_label(&self) -> Label {
        match self {
            Task::Ideology => Label::Conservative,
            Task::SponsorType => Label::PoliticalParty,
        }
    }

    /// The class encoded as 0 in binary form.
    pub fn negative_label(&self) -> Label {
        match self {
            Task::Ideology => Label::Liberal,
            Task::SponsorType => Label::ThirdParty,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Class label; valid pairings with tasks are enforced by [`TaskLabel::new`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Conservative,
    Liberal,
    PoliticalParty,
    ThirdParty,
}

impl Label {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "CONSERVATIVE" => Some(Label::Conservative),
            "LIBERAL" => Some(Label::Liberal),
            "POLITICAL_PARTY" => Some(Label::PoliticalParty),
            "THIRD_PARTY" => Some(Label::ThirdParty),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Conservative => "CONSERVATIVE",
            Label::Liberal => "LIBERAL",
            Label::PoliticalParty => "POLITICAL_PARTY",
            Label::ThirdParty => "THIRD_PARTY",
        }
    }

    pub fn task(&self) -> Task {
        match self {
            Label::Conservative | Label::Liberal => Task::Ideology,
            Label::PoliticalParty | Label::ThirdParty => Task::SponsorType,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A (task, label) pair with the pairing invariant enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskLabel {
    task: Task,
    label: Label,
}

impl TaskLabel {
    pub fn new(task: Task, label: Label) -> Result<Self> {
        if label.task() == task {
            Ok(TaskLabel { task, label })
        } else {
            Err(Error::Config(format!(
                "label {} does not belong to task {}",
                label.as_str(),
                task.as_str()
            )))
        }
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn label(&self) -> Label {
        self.label
    }
}

/// Train/dev/test assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "TRAIN" => Some(Split::Train),
            "DEV" => Some(Split::Dev),
            "TEST" => Some(Split::Test),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "TRAIN",
            Split::Dev => "DEV",
            Split::Test => "TEST",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Task 1: the sponsor's party ideology, derivable only for FEC committees
/// affiliated with one of the two major parties.
///
/// Returns `None` when the ad carries no ideology label (and is excluded
/// from the task).
pub fn label_ideology(ad: &AdRecord, sponsor: &SponsorRecord) -> Result<Option<TaskLabel>> {
    check_linkage(ad, sponsor)?;
    let label = match (sponsor.registry_kind, sponsor.affiliation) {
        (RegistryKind::Fec, Affiliation::Rep) => Some(Label::Conservative),
        (RegistryKind::Fec, Affiliation::Dem) => Some(Label::Liberal),
        _ => None,
    };
    label.map(|l| TaskLabel::new(Task::Ideology, l)).transpose()
}

/// Task 2: official political party (FEC) vs third-party organization (EIN).
/// State-registered sponsors are excluded from both tasks.
pub fn label_sponsor_type(ad: &AdRecord, sponsor: &SponsorRecord) -> Result<Option<TaskLabel>> {
    check_linkage(ad, sponsor)?;
    let label = match sponsor.registry_kind {
        RegistryKind::Fec => Some(Label::PoliticalParty),
        RegistryKind::Ein => Some(Label::ThirdParty),
        RegistryKind::State => None,
    };
    label
        .map(|l| TaskLabel::new(Task::SponsorType, l))
        .transpose()
}

fn check_linkage(ad: &AdRecord, sponsor: &SponsorRecord) -> Result<()> {
    if ad.sponsor_id != sponsor.sponsor_id {
        return Err(Error::SponsorMismatch {
            ad_id: ad.ad_id.clone(),
            expected: ad.sponsor_id.clone(),
            got: sponsor.sponsor_id.clone(),
        });
    }
    Ok(())
}

/// Collapse ads identical on `(image_url, image_text, densecap)` to the
/// earliest-dated record (ties broken by ascending `ad_id`). Output order is
/// the order of first occurrence of each identity, so the operation is
/// idempotent and never reorders distinct ads.
pub fn deduplicate(ads: &[AdRecord]) -> Vec<AdRecord> {
    let mut kept: Vec<AdRecord> = Vec::new();
    let mut index: HashMap<(String, String, String), usize> = HashMap::new();
    for ad in ads {
        let key = (
            ad.image_url.clone(),
            ad.image_text.clone(),
            ad.densecap.clone(),
        );
        match index.get(&key) {
            Some(&i) => {
                let cur = &kept[i];
                if (ad.start_date, &ad.ad_id) < (cur.start_date, &cur.ad_id) {
                    kept[i] = ad.clone();
                }
            }
            None => {
                index.insert(key, kept.len());
                kept.push(ad.clone());
            }
        }
    }
    kept
}

/// Keep only ads whose image text is detected as `lang`. Detection runs on
/// IT only; ads with undetectable text (e.g. empty IT) are removed.
pub fn filter_language(
    ads: &[AdRecord],
    lang: &str,
    detector: &dyn LanguageDetector,
) -> Vec<AdRecord> {
    ads.iter()
        .filter(|ad| detector.detect(&ad.image_text).as_deref() == Some(lang))
        .cloned()
        .collect()
}

/// Bucket sizes for an n-element chronological split: the first two buckets
/// take `floor(f_i * n)` elements, the last takes the remainder.
pub fn split_sizes(n: usize, fractions: (f64, f64, f64)) -> Result<(usize, usize, usize)> {
    let (f_train, f_dev, f_test) = fractions;
    let sum = f_train + f_dev + f_test;
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::BadFractions(sum));
    }
    if f_train < 0.0 || f_dev < 0.0 || f_test < 0.0 {
        return Err(Error::BadFractions(sum));
    }
    let n_train = (f_train * n as f64).floor() as usize;
    let n_dev = (f_dev * n as f64).floor() as usize;
    let n_train = n_train.min(n);
    let n_dev = n_dev.min(n - n_train);
    Ok((n_train, n_dev, n - n_train - n_dev))
}

/// Assign each ad to TRAIN/DEV/TEST by ascending `(start_date, ad_id)`.
/// The returned vector is aligned with the input order.
pub fn chronological_split(ads: &[AdRecord], fractions: (f64, f64, f64)) -> Result<Vec<Split>> {
    let (n_train, n_dev, _) = split_sizes(ads.len(), fractions)?;
    let mut order: Vec<usize> = (0..ads.len()).collect();
    order.sort_by(|&a, &b| {
        (ads[a].start_date, &ads[a].ad_id).cmp(&(ads[b].start_date, &ads[b].ad_id))
    });
    let mut splits = vec![Split::Train; ads.len()];
    for (rank, &i) in order.iter().enumerate() {
        splits[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_dev {
            Split::Dev
        } else {
            Split::Test
        };
    }
    Ok(splits)
}

/// One ad with its per-task label and split assignment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledAd {
    pub ad: AdRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ideology: Option<(Label, Split)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sponsor_type: Option<(Label, Split)>,
}

impl LabeledAd {
    pub fn for_task(&self, task: Task) -> Option<(Label, Split)> {
        match task {
            Task::Ideology => self.ideology,
            Task::SponsorType => self.sponsor_type,
        }
    }
}

/// Deduplicated ads with per-task labels and chronological split
/// assignments.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LabeledCorpus {
    pub ads: Vec<LabeledAd>,
}

impl LabeledCorpus {
    /// Validates the corpus invariants: unique ad ids, unique dedup triples,
    /// and label/task pairing.
    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        let mut triples = BTreeSet::new();
        for la in &self.ads {
            if !ids.insert(la.ad.ad_id.clone()) {
                return Err(Error::DuplicateAdId(la.ad.ad_id.clone()));
            }
            let (u, t, d) = la.ad.dedup_key();
            if !triples.insert((u.to_string(), t.to_string(), d.to_string())) {
                return Err(Error::Malformed(format!(
                    "ads share (image_url, image_text, densecap); offending ad `{}`",
                    la.ad.ad_id
                )));
            }
            if let Some((label, _)) = la.ideology {
                if label.task() != Task::Ideology {
                    return Err(Error::Malformed(format!(
                        "ad `{}` carries {} for the ideology task",
                        la.ad.ad_id,
                        label.as_str()
                    )));
                }
            }
            if let Some((label, _)) = la.sponsor_type {
                if label.task() != Task::SponsorType {
                    return Err(Error::Malformed(format!(
                        "ad `{}` carries {} for the sponsor-type task",
                        la.ad.ad_id,
                        label.as_str()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Ads labeled for `task`, with their label and split.
    pub fn task_ads(&self, task: Task) -> Vec<(&LabeledAd, Label, Split)> {
        self.ads
            .iter()
            .filter_map(|la| la.for_task(task).map(|(l, s)| (la, l, s)))
            .collect()
    }
}

/// Per-split summary used by the stats report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitStats {
    pub count: usize,
    pub class_counts: BTreeMap<String, usize>,
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    pub avg_tokens_it: f64,
    pub avg_tokens_d: f64,
    pub avg_tokens_joined: f64,
    /// Set when the split is empty and averages default to 0.
    pub empty: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskStats {
    pub task: Task,
    pub splits: BTreeMap<Split, SplitStats>,
    pub total: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusStats {
    pub tasks: Vec<TaskStats>,
    pub warnings: Vec<String>,
}

/// Counts, class percentages, date ranges, and average token lengths per
/// task and split. `token_counts` maps ad_id to (IT tokens, D tokens) as
/// produced by the preprocessing tokenizer.
pub fn corpus_stats(
    corpus: &LabeledCorpus,
    token_counts: &BTreeMap<String, (usize, usize)>,
) -> CorpusStats {
    let mut tasks = Vec::new();
    let mut warnings = Vec::new();
    for task in [Task::Ideology, Task::SponsorType] {
        let ads = corpus.task_ads(task);
        let mut splits = BTreeMap::new();
        for split in [Split::Train, Split::Dev, Split::Test] {
            let members: Vec<_> = ads.iter().filter(|(_, _, s)| *s == split).collect();
            let count = members.len();
            let mut class_counts: BTreeMap<String, usize> = BTreeMap::new();
            let mut start: Option<NaiveDate> = None;
            let mut end: Option<NaiveDate> = None;
            let (mut sum_it, mut sum_d) = (0usize, 0usize);
            for (la, label, _) in &members {
                *class_counts.entry(label.as_str().to_string()).or_insert(0) += 1;
                let d = la.ad.start_date;
                start = Some(start.map_or(d, |s| s.min(d)));
                end = Some(end.map_or(d, |e| e.max(d)));
                if let Some(&(it, dd)) = token_counts.get(&la.ad.ad_id) {
                    sum_it += it;
                    sum_d += dd;
                }
            }
            let empty = count == 0;
            if empty {
                warnings.push(format!(
                    "task {} split {} is empty; averages reported as 0",
                    task.as_str(),
                    split.as_str()
                ));
            }
            let denom = count.max(1) as f64;
            splits.insert(
                split,
                SplitStats {
                    count,
                    class_counts,
                    start,
                    end,
                    avg_tokens_it: sum_it as f64 / denom,
                    avg_tokens_d: sum_d as f64 / denom,
                    avg_tokens_joined: (sum_it + sum_d) as f64 / denom,
                    empty,
                },
            );
        }
        let total = ads.len();
        tasks.push(TaskStats {
            task,
            splits,
            total,
        });
    }
    CorpusStats { tasks, warnings }
}
