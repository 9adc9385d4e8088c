//! Plain-text rendering of evaluation metrics and correlation tables.
//!
//! The renderers consume the serialized artifacts (metrics.json,
//! correlations.csv) rather than in-memory structs so `polads report` can
//! format results from any earlier run.

use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Deserialize)]
struct MetricsDoc {
    task: String,
    model: String,
    per_seed: Vec<Macro>,
    mean: Macro,
    std: Macro,
}

#[derive(Deserialize)]
struct Macro {
    #[serde(rename = "P")]
    p: f64,
    #[serde(rename = "R")]
    r: f64,
    #[serde(rename = "F1")]
    f1: f64,
}

/// Renders a metrics.json document as a small fixed-width table: the
/// mean over seeds with standard deviations, then one row per seed.
pub fn render_metrics(json: &str) -> Result<String> {
    let doc: MetricsDoc =
        serde_json::from_str(json).map_err(|e| Error::Malformed(format!("metrics.json: {e}")))?;
    let mut out = String::new();
    out.push_str(&format!("== {} / {} ==\n\n", doc.task, doc.model));
    out.push_str(&format!("{:<6} {:>14} {:>14} {:>14}\n", "", "P", "R", "F1"));
    out.push_str(&format!(
        "{:<6} {:>14} {:>14} {:>14}\n",
        "mean",
        format!("{:.2} ({:.2})", doc.mean.p, doc.std.p),
        format!("{:.2} ({:.2})", doc.mean.r, doc.std.r),
        format!("{:.2} ({:.2})", doc.mean.f1, doc.std.f1),
    ));
    out.push('\n');
    out.push_str(&format!(
        "{:<6} {:>14} {:>14} {:>14}\n",
        "seed", "P", "R", "F1"
    ));
    for (i, m) in doc.per_seed.iter().enumerate() {
        out.push_str(&format!(
            "{:<6} {:>14.2} {:>14.2} {:>14.2}\n",
            i, m.p, m.r, m.f1
        ));
    }
    Ok(out)
}

/// Renders a correlations.csv document as one block per class, keeping
/// the file's row order (descending r within each class).
pub fn render_correlations(csv_text: &str) -> Result<String> {
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let mut blocks: Vec<(String, Vec<[String; 4]>)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Malformed(format!("correlations.csv: {e}")))?;
        if record.len() != 6 {
            return Err(Error::Malformed(format!(
                "correlations.csv: expected 6 fields, got {}",
                record.len()
            )));
        }
        let class = record[1].to_string();
        let row = [
            record[0].to_string(),
            record[2].to_string(),
            record[3].to_string(),
            record[4].to_string(),
        ];
        match blocks.last_mut() {
            Some((name, rows)) if *name == class => rows.push(row),
            _ => blocks.push((class, vec![row])),
        }
    }
    let mut out = String::new();
    out.push_str("== correlated unigrams ==\n");
    if blocks.is_empty() {
        out.push_str("\n(no features passed the significance threshold)\n");
        return Ok(out);
    }
    for (class, rows) in &blocks {
        out.push_str(&format!("\n{class}\n"));
        out.push_str(&format!(
            "  {:<24} {:>10} {:>10} {:>12}\n",
            "feature", "r", "t", "p"
        ));
        for [feature, r, t, p] in rows {
            out.push_str(&format!("  {feature:<24} {r:>10} {t:>10} {p:>12}\n"));
        }
    }
    Ok(out)
}
