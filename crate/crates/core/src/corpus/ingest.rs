//! Readers for the two raw inputs: `ads.jsonl` and `sponsors.csv`.
//!
//! Malformed lines never abort a run; they are quarantined with their line
//! number and a reason so the ingest is auditable. Duplicate identifiers are
//! data corruption and abort immediately.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use super::{AdRecord, Affiliation, RegistryKind, SponsorRecord};
use crate::error::{Error, Result};

/// One quarantined input line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    /// 1-based line number in the source file.
    pub line_no: usize,
    pub reason: String,
}

/// All records (and quarantined lines) from one ingest.
#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub ads: Vec<AdRecord>,
    pub sponsors: Vec<SponsorRecord>,
    pub rejects: Vec<Reject>,
}

#[derive(Deserialize)]
struct RawAd {
    ad_id: String,
    sponsor_id: String,
    start_date: String,
    image_url: String,
    #[serde(default)]
    image_path: Option<std::path::PathBuf>,
    image_text: String,
    densecap: String,
    #[serde(default)]
    language: Option<String>,
}

/// Reads ads from a JSON-lines file. Well-formed lines each yield one
/// record; malformed lines are returned as rejects. A repeated `ad_id` is
/// fatal.
pub fn read_ads_jsonl(path: &Path) -> Result<(Vec<AdRecord>, Vec<Reject>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut ads = Vec::new();
    let mut rejects = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawAd = match serde_json::from_str(&line) {
            Ok(raw) => raw,
            Err(e) => {
                rejects.push(Reject {
                    line_no,
                    reason: format!("ads.jsonl: {e}"),
                });
                continue;
            }
        };
        if raw.ad_id.is_empty() {
            rejects.push(Reject {
                line_no,
                reason: "ads.jsonl: empty ad_id".to_string(),
            });
            continue;
        }
        let start_date = match raw.start_date.parse() {
            Ok(d) => d,
            Err(e) => {
                rejects.push(Reject {
                    line_no,
                    reason: format!("ads.jsonl: bad start_date `{}`: {e}", raw.start_date),
                });
                continue;
            }
        };
        if !seen.insert(raw.ad_id.clone()) {
            return Err(Error::DuplicateAdId(raw.ad_id));
        }
        ads.push(AdRecord {
            ad_id: raw.ad_id,
            sponsor_id: raw.sponsor_id,
            start_date,
            image_url: raw.image_url,
            image_path: raw.image_path,
            image_text: raw.image_text,
            densecap: raw.densecap,
            language: raw.language,
        });
    }
    Ok((ads, rejects))
}

/// Reads the sponsor registry CSV (`sponsor_id,name,registry_kind,
/// registry_id,affiliation`). Rows with unknown enum values, a missing
/// field, or a forbidden kind/affiliation pairing are quarantined. A
/// repeated `sponsor_id` is fatal.
pub fn read_sponsors_csv(path: &Path) -> Result<(Vec<SponsorRecord>, Vec<Reject>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(BufReader::new(file));
    let mut sponsors = Vec::new();
    let mut rejects = Vec::new();
    let mut seen = BTreeSet::new();
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line_no = e.position().map(|p| p.line() as usize).unwrap_or(0);
                rejects.push(Reject {
                    line_no,
                    reason: format!("sponsors.csv: {e}"),
                });
                continue;
            }
        };
        let line_no = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != 5 {
            rejects.push(Reject {
                line_no,
                reason: format!("sponsors.csv: expected 5 fields, got {}", record.len()),
            });
            continue;
        }
        let kind = match RegistryKind::parse(&record[2]) {
            Some(k) => k,
            None => {
                rejects.push(Reject {
                    line_no,
                    reason: format!("sponsors.csv: unknown registry_kind `{}`", &record[2]),
                });
                continue;
            }
        };
        let affiliation = match Affiliation::parse(&record[4]) {
            Some(a) => a,
            None => {
                rejects.push(Reject {
                    line_no,
                    reason: format!("sponsors.csv: unknown affiliation `{}`", &record[4]),
                });
                continue;
            }
        };
        let sponsor = SponsorRecord {
            sponsor_id: record[0].to_string(),
            name: record[1].to_string(),
            registry_kind: kind,
            registry_id: record[3].to_string(),
            affiliation,
        };
        if sponsor.sponsor_id.is_empty() {
            rejects.push(Reject {
                line_no,
                reason: "sponsors.csv: empty sponsor_id".to_string(),
            });
            continue;
        }
        if let Err(e) = sponsor.validate() {
            rejects.push(Reject {
                line_no,
                reason: format!("sponsors.csv: {e}"),
            });
            continue;
        }
        if !seen.insert(sponsor.sponsor_id.clone()) {
            return Err(Error::Malformed(format!(
                "duplicate sponsor_id `{}` in {}",
                sponsor.sponsor_id,
                path.display()
            )));
        }
        sponsors.push(sponsor);
    }
    Ok((sponsors, rejects))
}

/// Reads both inputs and merges their quarantine lists (reasons carry the
/// source file name; line numbers are per source file).
pub fn ingest(ads_path: &Path, sponsors_path: &Path) -> Result<IngestReport> {
    let (ads, mut rejects) = read_ads_jsonl(ads_path)?;
    let (sponsors, sponsor_rejects) = read_sponsors_csv(sponsors_path)?;
    rejects.extend(sponsor_rejects);
    Ok(IngestReport {
        ads,
        sponsors,
        rejects,
    })
}
