//! Seed-deterministic synthetic corpus for end-to-end checks.
//!
//! Each ad carries two independent uniform bits: a text cue token (`t0` or
//! `t1`) inside the image text, and an image whose mean intensity is dark
//! or bright. The label is the AND of the bits, so any single-modality
//! model tops out at 75% expected accuracy while a fusion model can solve
//! the task outright.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{AdRecord, Affiliation, RegistryKind, SponsorRecord};
use crate::error::{Error, Result};

/// Pixel base intensities for the two image states.
const DARK: f64 = 60.0;
const BRIGHT: f64 = 200.0;
const NOISE: f64 = 20.0;
/// Side length of generated images.
pub const IMAGE_SIDE: u32 = 16;

#[derive(Debug, Clone)]
pub struct AndCorpus {
    pub ads: Vec<AdRecord>,
    pub sponsors: Vec<SponsorRecord>,
    /// Parallel to `ads`.
    pub images: Vec<RgbImage>,
    pub text_bits: Vec<u8>,
    pub image_bits: Vec<u8>,
    /// AND of the two bit vectors; 1 maps to the Conservative sponsor.
    pub labels: Vec<u8>,
    /// Names the fixture gazetteer should contain.
    pub gazetteer: Vec<String>,
}

fn synth_image(bit: u8, rng: &mut ChaCha8Rng) -> RgbImage {
    let base = if bit == 1 { BRIGHT } else { DARK };
    RgbImage::from_fn(IMAGE_SIDE, IMAGE_SIDE, |_, _| {
        let mut px = [0u8; 3];
        for channel in &mut px {
            let value = base + rng.random_range(-NOISE..NOISE);
            *channel = value.clamp(0.0, 255.0) as u8;
        }
        Rgb(px)
    })
}

/// Generates `n` ads (n ≥ 100) with label = text bit AND image bit. The
/// two sponsors are FEC committees, so the corpus carries ideology labels:
/// label 1 becomes the Republican sponsor, label 0 the Democratic one.
pub fn make_and_corpus(n: usize, seed: u64) -> Result<AndCorpus> {
    if n < 100 {
        return Err(Error::Config(format!(
            "synthetic corpus needs n >= 100 (got {n})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let epoch = NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date");
    let mut corpus = AndCorpus {
        ads: Vec::with_capacity(n),
        sponsors: vec![
            SponsorRecord {
                sponsor_id: "and-rep".to_string(),
                name: "Committee for T1 Synthetic".to_string(),
                registry_kind: RegistryKind::Fec,
                registry_id: "C0000001".to_string(),
                affiliation: Affiliation::Rep,
            },
            SponsorRecord {
                sponsor_id: "and-dem".to_string(),
                name: "Committee for T0 Synthetic".to_string(),
                registry_kind: RegistryKind::Fec,
                registry_id: "C0000002".to_string(),
                affiliation: Affiliation::Dem,
            },
        ],
        images: Vec::with_capacity(n),
        text_bits: Vec::with_capacity(n),
        image_bits: Vec::with_capacity(n),
        labels: Vec::with_capacity(n),
        gazetteer: vec!["Alex Morgan".to_string()],
    };
    for i in 0..n {
        let tbit: u8 = rng.random_range(0..2);
        let ibit: u8 = rng.random_range(0..2);
        let label = tbit & ibit;
        let ad_id = format!("and-{i:06}");
        let cue = if tbit == 1 { "t1" } else { "t0" };
        let mut image_text = format!("Vote for our future {cue} now.");
        if rng.random_range(0..10) == 0 {
            image_text.push_str(" Alex Morgan agrees.");
        }
        corpus.images.push(synth_image(ibit, &mut rng));
        corpus.ads.push(AdRecord {
            ad_id: ad_id.clone(),
            sponsor_id: if label == 1 { "and-rep" } else { "and-dem" }.to_string(),
            start_date: epoch + chrono::Duration::days(i as i64),
            image_url: format!("synthetic://and/{ad_id}.png"),
            image_path: None,
            image_text,
            densecap: "a sign with bold text on a banner".to_string(),
            language: None,
        });
        corpus.text_bits.push(tbit);
        corpus.image_bits.push(ibit);
        corpus.labels.push(label);
    }
    Ok(corpus)
}

/// File layout produced by `write_fixture`.
#[derive(Debug, Clone)]
pub struct FixturePaths {
    pub ads: PathBuf,
    pub sponsors: PathBuf,
    pub gazetteer: PathBuf,
    pub images_dir: PathBuf,
}

/// Writes the corpus as pipeline inputs: `ads.jsonl` (with image paths
/// relative to the fixture directory), `sponsors.csv`, `gazetteer.txt`,
/// and one PNG per ad under `images/`.
pub fn write_fixture(corpus: &AndCorpus, dir: &Path) -> Result<FixturePaths> {
    let images_dir = dir.join("images");
    std::fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
    let mut lines = String::new();
    for (ad, img) in corpus.ads.iter().zip(&corpus.images) {
        let png = images_dir.join(format!("{}.png", ad.ad_id));
        img.save(&png)
            .map_err(|e| Error::Malformed(format!("cannot write {}: {e}", png.display())))?;
        let mut ad = ad.clone();
        ad.image_path = Some(PathBuf::from(format!("images/{}.png", ad.ad_id)));
        lines.push_str(&serde_json::to_string(&ad).expect("ad serializes"));
        lines.push('\n');
    }
    let ads = dir.join("ads.jsonl");
    std::fs::write(&ads, lines).map_err(|e| Error::io(&ads, e))?;

    let mut csv = String::from("sponsor_id,name,registry_kind,registry_id,affiliation\n");
    for s in &corpus.sponsors {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            s.sponsor_id,
            s.name,
            s.registry_kind.as_str(),
            s.registry_id,
            s.affiliation.as_str()
        ));
    }
    let sponsors = dir.join("sponsors.csv");
    std::fs::write(&sponsors, csv).map_err(|e| Error::io(&sponsors, e))?;

    let gazetteer = dir.join("gazetteer.txt");
    std::fs::write(&gazetteer, corpus.gazetteer.join("\n") + "\n")
        .map_err(|e| Error::io(&gazetteer, e))?;

    Ok(FixturePaths {
        ads,
        sponsors,
        gazetteer,
        images_dir,
    })
}
