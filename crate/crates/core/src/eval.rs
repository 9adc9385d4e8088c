//! Macro-averaged precision/recall/F1, the majority-class baseline, and
//! aggregation over random seeds.
//!
//! Metrics are reported as percentages. Division by zero (a class never
//! predicted, or absent from the truth) yields 0 for the affected metric;
//! this convention is what makes the constant-baseline macro F1 values
//! exactly reproducible.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Label, Task};
use crate::error::{Error, Result};

/// Precision/recall/F1 for one class, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// One evaluation run: both classes plus their unweighted means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Indexed by encoded label (0, 1).
    pub per_class: [ClassMetrics; 2],
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

/// The macro triple used in aggregate summaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroSummary {
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "F1")]
    pub f1: f64,
}

impl RunMetrics {
    pub fn summary(&self) -> MacroSummary {
        MacroSummary {
            p: self.macro_precision,
            r: self.macro_recall,
            f1: self.macro_f1,
        }
    }
}

fn rate(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Macro precision/recall/F1 over binary labels encoded as 0/1.
pub fn macro_metrics(y_true: &[u8], y_pred: &[u8]) -> Result<RunMetrics> {
    if y_true.is_empty() {
        return Err(Error::EmptyInput("macro_metrics needs predictions".into()));
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::DimMismatch(format!(
            "{} true labels vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if let Some(bad) = y_true.iter().chain(y_pred).find(|&&y| y > 1) {
        return Err(Error::Malformed(format!(
            "labels must be encoded as 0/1 (got {bad})"
        )));
    }
    let mut per_class = [ClassMetrics {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    }; 2];
    for (c, slot) in per_class.iter_mut().enumerate() {
        let c = c as u8;
        let tp = y_true
            .iter()
            .zip(y_pred)
            .filter(|&(&t, &p)| t == c && p == c)
            .count();
        let fp = y_pred.iter().filter(|&&p| p == c).count() - tp;
        let fn_ = y_true.iter().filter(|&&t| t == c).count() - tp;
        let precision = rate(tp, tp + fp);
        let recall = rate(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        *slot = ClassMetrics {
            precision: precision * 100.0,
            recall: recall * 100.0,
            f1: f1 * 100.0,
        };
    }
    Ok(RunMetrics {
        macro_precision: (per_class[0].precision + per_class[1].precision) / 2.0,
        macro_recall: (per_class[0].recall + per_class[1].recall) / 2.0,
        macro_f1: (per_class[0].f1 + per_class[1].f1) / 2.0,
        per_class,
    })
}

/// The constant predictor of the most frequent training label. Ties go to
/// the lexicographically smaller label name.
pub fn majority_baseline(train_labels: &[Label]) -> Result<Label> {
    if train_labels.is_empty() {
        return Err(Error::EmptyInput(
            "majority baseline needs training labels".into(),
        ));
    }
    let mut counts: std::collections::BTreeMap<&str, (usize, Label)> =
        std::collections::BTreeMap::new();
    for &label in train_labels {
        counts.entry(label.as_str()).or_insert((0, label)).0 += 1;
    }
    let mut best: Option<(usize, &str, Label)> = None;
    for (&name, &(count, label)) in &counts {
        let wins = match best {
            None => true,
            Some((c, n, _)) => count > c || (count == c && name < n),
        };
        if wins {
            best = Some((count, name, label));
        }
    }
    Ok(best.expect("non-empty").2)
}

/// One seed's outcome inside an aggregate report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub metrics: RunMetrics,
}

/// Aggregate over seeds, plus the identifiers the metrics file carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub model: String,
    pub runs: Vec<SeedRun>,
    pub mean: MacroSummary,
    pub std: MacroSummary,
}

/// Mean and sample standard deviation (n−1) of the macro triples.
pub fn aggregate(runs: &[RunMetrics]) -> Result<(MacroSummary, MacroSummary)> {
    if runs.is_empty() {
        return Err(Error::EmptyInput("aggregate needs at least one run".into()));
    }
    type Field = fn(&RunMetrics) -> f64;
    let n = runs.len() as f64;
    let mean_of = |f: Field| runs.iter().map(f).sum::<f64>() / n;
    let std_of = |f: Field, mean: f64| {
        if runs.len() < 2 {
            0.0
        } else {
            (runs.iter().map(|r| (f(r) - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        }
    };
    let (fp, fr, ff): (Field, Field, Field) =
        (|r| r.macro_precision, |r| r.macro_recall, |r| r.macro_f1);
    let mean = MacroSummary {
        p: mean_of(fp),
        r: mean_of(fr),
        f1: mean_of(ff),
    };
    let std = MacroSummary {
        p: std_of(fp, mean.p),
        r: std_of(fr, mean.r),
        f1: std_of(ff, mean.f1),
    };
    Ok((mean, std))
}

/// Runs `run` once per seed and aggregates. Any failing seed aborts with an
/// error whose message carries the completed seeds' macro F1 values.
pub fn multi_seed_run<F>(task: Task, model: &str, seeds: &[u64], mut run: F) -> Result<EvalReport>
where
    F: FnMut(u64) -> Result<RunMetrics>,
{
    if seeds.len() < 2 {
        return Err(Error::Config(format!(
            "multi-seed evaluation needs at least 2 seeds (got {})",
            seeds.len()
        )));
    }
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for &seed in seeds {
        match run(seed) {
            Ok(metrics) => runs.push(SeedRun { seed, metrics }),
            Err(e) => failures.push((seed, e.to_string())),
        }
    }
    if !failures.is_empty() {
        let done: Vec<String> = runs
            .iter()
            .map(|r| format!("seed {}: F1 {:.2}", r.seed, r.metrics.macro_f1))
            .collect();
        let failed: Vec<String> = failures
            .iter()
            .map(|(s, e)| format!("seed {s}: {e}"))
            .collect();
        return Err(Error::PartialSeedRuns {
            failed: failures.len(),
            total: seeds.len(),
            detail: format!(
                "failed [{}]; completed [{}]",
                failed.join("; "),
                done.join(", ")
            ),
        });
    }
    let metrics: Vec<RunMetrics> = runs.iter().map(|r| r.metrics.clone()).collect();
    let (mean, std) = aggregate(&metrics)?;
    Ok(EvalReport {
        task: task.as_str().to_string(),
        model: model.to_string(),
        runs,
        mean,
        std,
    })
}

/// metrics.json: `{task, model, per_seed:[{P,R,F1}], mean:{...}, std:{...}}`.
#[derive(Serialize, Deserialize)]
struct MetricsFile {
    task: String,
    model: String,
    per_seed: Vec<MacroSummary>,
    mean: MacroSummary,
    std: MacroSummary,
}

pub fn write_metrics(report: &EvalReport, path: &Path) -> Result<()> {
    let file = MetricsFile {
        task: report.task.clone(),
        model: report.model.clone(),
        per_seed: report.runs.iter().map(|r| r.metrics.summary()).collect(),
        mean: report.mean,
        std: report.std,
    };
    let json = serde_json::to_string_pretty(&file).expect("metrics serialize");
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(n1: usize, n0: usize, pred: u8) -> RunMetrics {
        let mut y_true = vec![1u8; n1];
        y_true.extend(vec![0u8; n0]);
        let y_pred = vec![pred; n1 + n0];
        macro_metrics(&y_true, &y_pred).unwrap()
    }

    #[test]
    fn perfect_predictions_score_100() {
        let y = [0u8, 1, 0, 1, 1];
        let m = macro_metrics(&y, &y).unwrap();
        assert_eq!(m.macro_precision, 100.0);
        assert_eq!(m.macro_recall, 100.0);
        assert_eq!(m.macro_f1, 100.0);
    }

    #[test]
    fn ideology_majority_baseline_f1() {
        // test split: 453 Conservative (encoded 1), 150 Liberal; predict all
        // Conservative
        let m = constant(453, 150, 1);
        assert!((m.macro_f1 - 42.90).abs() < 0.01, "{}", m.macro_f1);
        assert_eq!(m.macro_recall, 50.0);
        assert!(
            (m.macro_precision - 37.56).abs() < 0.01,
            "{}",
            m.macro_precision
        );
    }

    #[test]
    fn sponsor_type_majority_baseline_f1() {
        // test split: 561 Political Party (encoded 1), 953 Third-Party;
        // predict all Third-Party
        let m = constant(561, 953, 0);
        assert!((m.macro_f1 - 38.62).abs() <= 0.01, "{}", m.macro_f1);
        assert_eq!(m.macro_recall, 50.0);
    }

    #[test]
    fn constant_predictor_macro_recall_is_exactly_half() {
        for pred in [0u8, 1] {
            let m = constant(7, 13, pred);
            assert_eq!(m.macro_recall, 50.0);
            // macro F1 is half the predicted class's F1
            let f1 = m.per_class[pred as usize].f1;
            assert!((m.macro_f1 - f1 / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn relabeling_both_sides_is_invariant() {
        let y_true = [0u8, 1, 1, 0, 1, 0, 0, 1, 1];
        let y_pred = [0u8, 1, 0, 0, 1, 1, 0, 1, 0];
        let m = macro_metrics(&y_true, &y_pred).unwrap();
        let flip = |ys: &[u8]| ys.iter().map(|&y| 1 - y).collect::<Vec<_>>();
        let f = macro_metrics(&flip(&y_true), &flip(&y_pred)).unwrap();
        assert_eq!(m.macro_precision, f.macro_precision);
        assert_eq!(m.macro_recall, f.macro_recall);
        assert_eq!(m.macro_f1, f.macro_f1);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        assert!(macro_metrics(&[], &[]).is_err());
        assert!(macro_metrics(&[0, 1], &[0]).is_err());
        assert!(macro_metrics(&[0, 2], &[0, 1]).is_err());
    }

    #[test]
    fn majority_baseline_picks_most_frequent() {
        let labels = [Label::Conservative, Label::Conservative, Label::Liberal];
        assert_eq!(majority_baseline(&labels).unwrap(), Label::Conservative);
        let labels = [Label::ThirdParty, Label::ThirdParty, Label::PoliticalParty];
        assert_eq!(majority_baseline(&labels).unwrap(), Label::ThirdParty);
    }

    #[test]
    fn majority_tie_goes_to_lexicographically_smaller_name() {
        let labels = [Label::Liberal, Label::Conservative];
        assert_eq!(majority_baseline(&labels).unwrap(), Label::Conservative);
        let labels = [Label::ThirdParty, Label::PoliticalParty];
        assert_eq!(majority_baseline(&labels).unwrap(), Label::PoliticalParty);
        assert!(majority_baseline(&[]).is_err());
    }

    fn with_f1(f1: f64) -> RunMetrics {
        RunMetrics {
            per_class: [ClassMetrics {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0,
            }; 2],
            macro_precision: f1,
            macro_recall: f1,
            macro_f1: f1,
        }
    }

    #[test]
    fn aggregate_hand_arithmetic() {
        let runs = [with_f1(80.0), with_f1(82.0), with_f1(84.0)];
        let (mean, std) = aggregate(&runs).unwrap();
        assert_eq!(mean.f1, 82.0);
        assert_eq!(std.f1, 2.0);
        // mean inside the per-seed range
        assert!(mean.f1 >= 80.0 && mean.f1 <= 84.0);
    }

    #[test]
    fn aggregate_identical_runs_has_zero_std() {
        let runs = [with_f1(55.5), with_f1(55.5), with_f1(55.5)];
        let (mean, std) = aggregate(&runs).unwrap();
        assert_eq!(mean.f1, 55.5);
        assert_eq!(std.f1, 0.0);
    }

    #[test]
    fn multi_seed_aggregates_or_reports_partials() {
        let report = multi_seed_run(Task::Ideology, "logreg_it", &[0, 1, 2], |seed| {
            Ok(with_f1(80.0 + 2.0 * seed as f64))
        })
        .unwrap();
        assert_eq!(report.mean.f1, 82.0);
        assert_eq!(report.std.f1, 2.0);
        assert_eq!(report.runs.len(), 3);

        let err = multi_seed_run(Task::Ideology, "logreg_it", &[0, 1, 2], |seed| {
            if seed == 1 {
                Err(Error::Other("boom".into()))
            } else {
                Ok(with_f1(80.0))
            }
        })
        .unwrap_err();
        match err {
            Error::PartialSeedRuns {
                failed,
                total,
                detail,
            } => {
                assert_eq!((failed, total), (1, 3));
                assert!(detail.contains("seed 0"), "{detail}");
                assert!(detail.contains("boom"), "{detail}");
            }
            other => panic!("unexpected error {other}"),
        }

        assert!(multi_seed_run(Task::Ideology, "x", &[0], |_| Ok(with_f1(1.0))).is_err());
    }

    #[test]
    fn metrics_file_shape() {
        let report = multi_seed_run(Task::SponsorType, "fusion_itd", &[0, 1], |seed| {
            Ok(with_f1(70.0 + seed as f64))
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.json");
        write_metrics(&report, &path).unwrap();
        let value: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(value["task"], "sponsor_type");
        assert_eq!(value["model"], "fusion_itd");
        assert_eq!(value["per_seed"].as_array().unwrap().len(), 2);
        assert_eq!(value["per_seed"][0]["F1"], 70.0);
        assert_eq!(value["mean"]["F1"], 70.5);
        assert!(value["std"]["P"].is_number());
    }
}
