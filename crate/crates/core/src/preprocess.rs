//! Text and image preprocessing.
//!
//! The tokenizer is specified here in full rather than delegated to an
//! external library, so that every stage downstream is bit-exact
//! reproducible. The pinned pipeline for text is: lowercase, replace URLs
//! with `<url>`, replace gazetteer person names with `<person>`
//! (longest match first), then split on whitespace and peel leading and
//! trailing punctuation off each chunk as separate tokens. Internal
//! punctuation (apostrophes, hyphens, and anything else between the first
//! and last alphanumeric character) stays attached.
//!
//! Images are decoded, bilinearly resized to a square, and scaled to
//! [0,1] by dividing by 255.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;
use std::sync::OnceLock;

use image::RgbImage;
use ndarray::Array3;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Knobs for text and image preprocessing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// A token is kept only if it occurs in at least this many distinct
    /// training ads; rarer tokens become the unknown placeholder.
    pub min_ad_frequency: usize,
    /// Hard cap on sequence length (head truncation).
    pub max_tokens: usize,
    pub placeholder_url: String,
    pub placeholder_person: String,
    pub placeholder_unknown: String,
    /// Output images are `image_side` x `image_side` pixels.
    pub image_side: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            min_ad_frequency: 5,
            max_tokens: 512,
            placeholder_url: "<url>".to_string(),
            placeholder_person: "<person>".to_string(),
            placeholder_unknown: "<unk>".to_string(),
            image_side: 300,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_ad_frequency < 1 {
            return Err(Error::Config("min_ad_frequency must be >= 1".into()));
        }
        if self.max_tokens < 1 {
            return Err(Error::Config("max_tokens must be >= 1".into()));
        }
        if self.image_side < 1 {
            return Err(Error::Config("image_side must be >= 1".into()));
        }
        let mut set = BTreeSet::new();
        for p in [
            &self.placeholder_url,
            &self.placeholder_person,
            &self.placeholder_unknown,
        ] {
            if !set.insert(p) {
                return Err(Error::Config(format!(
                    "placeholders must be distinct: `{p}`"
                )));
            }
        }
        Ok(())
    }

    pub fn is_placeholder(&self, token: &str) -> bool {
        token == self.placeholder_url
            || token == self.placeholder_person
            || token == self.placeholder_unknown
    }
}

/// One ad after tokenization. `tokens_joined` is the concatenation of the
/// image-text tokens and the dense-caption tokens, in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "TokenizedAdWire", into = "TokenizedAdWire")]
pub struct TokenizedAd {
    pub ad_id: String,
    pub tokens_it: Vec<String>,
    pub tokens_d: Vec<String>,
    pub tokens_joined: Vec<String>,
}

impl TokenizedAd {
    pub fn new(ad_id: String, tokens_it: Vec<String>, tokens_d: Vec<String>) -> Self {
        let tokens_joined = tokens_it.iter().chain(tokens_d.iter()).cloned().collect();
        TokenizedAd {
            ad_id,
            tokens_it,
            tokens_d,
            tokens_joined,
        }
    }
}

/// Serialized form: the joined view is derived, never stored.
#[derive(Serialize, Deserialize)]
struct TokenizedAdWire {
    ad_id: String,
    tokens_it: Vec<String>,
    tokens_d: Vec<String>,
}

impl From<TokenizedAdWire> for TokenizedAd {
    fn from(w: TokenizedAdWire) -> Self {
        TokenizedAd::new(w.ad_id, w.tokens_it, w.tokens_d)
    }
}

impl From<TokenizedAd> for TokenizedAdWire {
    fn from(t: TokenizedAd) -> Self {
        TokenizedAdWire {
            ad_id: t.ad_id,
            tokens_it: t.tokens_it,
            tokens_d: t.tokens_d,
        }
    }
}

/// Person names to replace with the person placeholder. Matching is
/// case-insensitive and longest-entry-first; entries are normalized with
/// the same edge-punctuation stripping the tokenizer uses.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    /// Entries as word sequences, longest first (ties lexicographic) so a
    /// scan can take the first hit.
    entries: Vec<Vec<String>>,
}

impl Gazetteer {
    pub fn from_entries<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut entries: Vec<Vec<String>> = names
            .into_iter()
            .filter_map(|name| {
                let words: Vec<String> = name
                    .as_ref()
                    .to_lowercase()
                    .split_whitespace()
                    .map(|w| chunk_core(w).to_string())
                    .collect();
                if words.is_empty() || words.iter().any(|w| w.is_empty()) {
                    None
                } else {
                    Some(words)
                }
            })
            .collect();
        entries.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        entries.dedup();
        Gazetteer { entries }
    }

    /// Loads one name per line; blank lines are skipped.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Gazetteer::from_entries(
            text.lines().map(str::trim).filter(|l| !l.is_empty()),
        ))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

fn url_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:https?://|www\.)\S+").expect("static regex"))
}

/// The part of a whitespace chunk between its first and last alphanumeric
/// character; empty when the chunk is pure punctuation.
fn chunk_core(chunk: &str) -> &str {
    let start = chunk.char_indices().find(|(_, c)| c.is_alphanumeric());
    let Some((start, _)) = start else {
        return "";
    };
    let (end, last) = chunk
        .char_indices()
        .rfind(|(_, c)| c.is_alphanumeric())
        .expect("a first alphanumeric implies a last");
    &chunk[start..end + last.len_utf8()]
}

/// Leading punctuation, core, trailing punctuation of a chunk.
fn chunk_parts(chunk: &str) -> (&str, &str, &str) {
    let core = chunk_core(chunk);
    if core.is_empty() {
        return (chunk, "", "");
    }
    let start = core.as_ptr() as usize - chunk.as_ptr() as usize;
    (&chunk[..start], core, &chunk[start + core.len()..])
}

/// Replaces gazetteer matches with the person placeholder, operating on
/// whitespace chunks. A multi-word entry must run over consecutive chunks
/// with no punctuation at the seams (the first chunk may carry leading and
/// the last trailing punctuation, which survive as chunks of their own).
/// Placeholder chunks are never part of a match.
fn replace_persons(chunks: Vec<String>, cfg: &PreprocessConfig, gaz: &Gazetteer) -> Vec<String> {
    if gaz.is_empty() {
        return chunks;
    }
    let mut out = Vec::with_capacity(chunks.len());
    let mut i = 0;
    'outer: while i < chunks.len() {
        if !cfg.is_placeholder(&chunks[i]) {
            for entry in &gaz.entries {
                let k = entry.len();
                if i + k > chunks.len() {
                    continue;
                }
                let mut ok = true;
                for (j, word) in entry.iter().enumerate() {
                    let chunk = &chunks[i + j];
                    if cfg.is_placeholder(chunk) {
                        ok = false;
                        break;
                    }
                    let (lead, core, trail) = chunk_parts(chunk);
                    if core != word
                        || (j > 0 && !lead.is_empty())
                        || (j + 1 < k && !trail.is_empty())
                    {
                        ok = false;
                        break;
                    }
                }
                if ok {
                    let (lead, _, _) = chunk_parts(&chunks[i]);
                    let (_, _, trail) = chunk_parts(&chunks[i + k - 1]);
                    if !lead.is_empty() {
                        out.push(lead.to_string());
                    }
                    out.push(cfg.placeholder_person.clone());
                    if !trail.is_empty() {
                        out.push(trail.to_string());
                    }
                    i += k;
                    continue 'outer;
                }
            }
        }
        out.push(chunks[i].clone());
        i += 1;
    }
    out
}

/// Splits one whitespace chunk into tokens: each leading and trailing
/// punctuation character becomes its own token; the core stays whole.
/// Placeholder chunks pass through untouched.
fn tokenize_chunk(chunk: &str, cfg: &PreprocessConfig, out: &mut Vec<String>) {
    if chunk.is_empty() {
        return;
    }
    if cfg.is_placeholder(chunk) {
        out.push(chunk.to_string());
        return;
    }
    let (lead, core, trail) = chunk_parts(chunk);
    for c in lead.chars() {
        out.push(c.to_string());
    }
    if !core.is_empty() {
        out.push(core.to_string());
    }
    for c in trail.chars() {
        out.push(c.to_string());
    }
}

/// Normalizes raw ad text to a token sequence: lowercase, URL and person
/// placeholders, whitespace split, edge-punctuation split. Idempotent on
/// its own (space-joined) output.
pub fn normalize_text(raw: &str, cfg: &PreprocessConfig, gaz: &Gazetteer) -> Vec<String> {
    let lowered = raw.to_lowercase();
    let replaced = url_regex().replace_all(&lowered, format!(" {} ", cfg.placeholder_url).as_str());
    let chunks: Vec<String> = replaced.split_whitespace().map(str::to_string).collect();
    let chunks = replace_persons(chunks, cfg, gaz);
    let mut tokens = Vec::with_capacity(chunks.len());
    for chunk in &chunks {
        tokenize_chunk(chunk, cfg, &mut tokens);
    }
    tokens
}

/// The set of tokens that survive unknown-token replacement: everything
/// occurring in at least `min_ad_frequency` distinct training ads
/// (membership counts once per ad, over the union of both text views),
/// plus the placeholders.
pub fn build_unknown_set(train_ads: &[TokenizedAd], cfg: &PreprocessConfig) -> HashSet<String> {
    let mut df: HashMap<&str, usize> = HashMap::new();
    for ad in train_ads {
        let uniq: HashSet<&str> = ad
            .tokens_it
            .iter()
            .chain(ad.tokens_d.iter())
            .map(String::as_str)
            .collect();
        for token in uniq {
            *df.entry(token).or_insert(0) += 1;
        }
    }
    let mut keep: HashSet<String> = df
        .into_iter()
        .filter(|&(_, n)| n >= cfg.min_ad_frequency)
        .map(|(t, _)| t.to_string())
        .collect();
    keep.insert(cfg.placeholder_url.clone());
    keep.insert(cfg.placeholder_person.clone());
    keep.insert(cfg.placeholder_unknown.clone());
    keep
}

/// Replaces every token outside `keep` with the unknown placeholder.
/// Sequence lengths never change and placeholders are never replaced.
pub fn apply_unknowns(
    ad: &TokenizedAd,
    keep: &HashSet<String>,
    cfg: &PreprocessConfig,
) -> TokenizedAd {
    let map = |tokens: &[String]| -> Vec<String> {
        tokens
            .iter()
            .map(|t| {
                if keep.contains(t) || cfg.is_placeholder(t) {
                    t.clone()
                } else {
                    cfg.placeholder_unknown.clone()
                }
            })
            .collect()
    };
    TokenizedAd::new(ad.ad_id.clone(), map(&ad.tokens_it), map(&ad.tokens_d))
}

/// Head truncation: keep the first `max_tokens` tokens.
pub fn truncate(tokens: &[String], cfg: &PreprocessConfig) -> Vec<String> {
    tokens.iter().take(cfg.max_tokens).cloned().collect()
}

/// A decoded, resized image with values in [0,1], laid out
/// (row, column, channel).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    pub pixels: Array3<f64>,
}

impl ImageTensor {
    pub fn side(&self) -> usize {
        self.pixels.shape()[0]
    }
}

/// Bilinear resize with the pixel-center convention
/// (`src = (dst + 0.5) * scale - 0.5`), which is exactly the identity when
/// source and destination sizes agree.
fn resize_bilinear(img: &RgbImage, side: usize) -> Array3<f64> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = Array3::zeros((side, side, 3));
    let scale_x = w as f64 / side as f64;
    let scale_y = h as f64 / side as f64;
    for y in 0..side {
        let sy = ((y as f64 + 0.5) * scale_y - 0.5).max(0.0);
        let y0 = (sy.floor() as usize).min(h - 1);
        let y1 = (y0 + 1).min(h - 1);
        let fy = sy - y0 as f64;
        for x in 0..side {
            let sx = ((x as f64 + 0.5) * scale_x - 0.5).max(0.0);
            let x0 = (sx.floor() as usize).min(w - 1);
            let x1 = (x0 + 1).min(w - 1);
            let fx = sx - x0 as f64;
            for c in 0..3 {
                let p = |xx: usize, yy: usize| img.get_pixel(xx as u32, yy as u32).0[c] as f64;
                let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
                let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
                out[[y, x, c]] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    out
}

/// Resizes a decoded image and scales values to [0,1].
pub fn normalize_rgb(img: &RgbImage, cfg: &PreprocessConfig) -> ImageTensor {
    let mut pixels = resize_bilinear(img, cfg.image_side);
    pixels.mapv_inplace(|v| v / 255.0);
    ImageTensor { pixels }
}

/// Loads, resizes, and scales an ad image. Failures to read or decode are
/// reported against the owning ad.
pub fn normalize_image(path: &Path, ad_id: &str, cfg: &PreprocessConfig) -> Result<ImageTensor> {
    let img = image::open(path).map_err(|e| Error::BadImage {
        ad_id: ad_id.to_string(),
        detail: format!("{}: {e}", path.display()),
    })?;
    Ok(normalize_rgb(&img.to_rgb8(), cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> PreprocessConfig {
        PreprocessConfig::default()
    }

    fn toks(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn campaign_slogan_tokenizes_with_person_placeholder() {
        let gaz = Gazetteer::from_entries(["defazio"]);
        let got = normalize_text(
            "FIGHTING FOR WORKING FAMILIES, FOR GOOD JOBS, AND FAIR PAY. PAID FOR BY DEFAZIO FOR CONGRESS",
            &cfg(),
            &gaz,
        );
        assert_eq!(
            got,
            toks(&[
                "fighting", "for", "working", "families", ",", "for", "good", "jobs", ",", "and",
                "fair", "pay", ".", "paid", "for", "by", "<person>", "for", "congress",
            ])
        );
    }

    #[test]
    fn urls_collapse_to_placeholder() {
        let got = normalize_text(
            "Visit https://vote.example NOW",
            &cfg(),
            &Gazetteer::default(),
        );
        assert_eq!(got, toks(&["visit", "<url>", "now"]));
        let got = normalize_text("see www.example.org/x today", &cfg(), &Gazetteer::default());
        assert_eq!(got, toks(&["see", "<url>", "today"]));
    }

    #[test]
    fn empty_text_gives_no_tokens() {
        assert!(normalize_text("", &cfg(), &Gazetteer::default()).is_empty());
    }

    #[test]
    fn edge_punctuation_splits_but_internal_stays() {
        let got = normalize_text("(Don't stop!)", &cfg(), &Gazetteer::default());
        assert_eq!(got, toks(&["(", "don't", "stop", "!", ")"]));
        let got = normalize_text("well-known \"facts\"...", &cfg(), &Gazetteer::default());
        assert_eq!(
            got,
            toks(&["well-known", "\"", "facts", "\"", ".", ".", "."])
        );
    }

    #[test]
    fn multiword_names_match_across_chunks() {
        let gaz = Gazetteer::from_entries(["Peter DeFazio", "DeFazio"]);
        let got = normalize_text("paid by Peter DeFazio, thanks", &cfg(), &gaz);
        assert_eq!(got, toks(&["paid", "by", "<person>", ",", "thanks"]));
        // seam punctuation blocks a multi-word match; the single-word entry
        // still fires on the second chunk
        let got = normalize_text("peter, defazio", &cfg(), &gaz);
        assert_eq!(got, toks(&["peter", ",", "<person>"]));
    }

    #[test]
    fn longest_gazetteer_entry_wins() {
        let gaz = Gazetteer::from_entries(["mary", "mary ann"]);
        let got = normalize_text("ask mary ann today", &cfg(), &gaz);
        assert_eq!(got, toks(&["ask", "<person>", "today"]));
    }

    #[test]
    fn placeholders_survive_renormalization() {
        let gaz = Gazetteer::from_entries(["defazio", "url", "person"]);
        let first = normalize_text("see www.x.org (DeFazio!)", &cfg(), &gaz);
        assert_eq!(got_join(&first), "see <url> ( <person> ! )");
        let second = normalize_text(&got_join(&first), &cfg(), &gaz);
        assert_eq!(first, second);
    }

    fn got_join(tokens: &[String]) -> String {
        tokens.join(" ")
    }

    #[test]
    fn unknown_set_uses_document_frequency() {
        let c = cfg();
        // "ballot" in exactly 5 ads; "rare" 10 times inside 1 ad
        let mut ads: Vec<TokenizedAd> = (0..5)
            .map(|i| {
                TokenizedAd::new(
                    format!("a{i}"),
                    toks(&["ballot", "vote"]),
                    toks(&["a", "sign"]),
                )
            })
            .collect();
        ads.push(TokenizedAd::new(
            "a5".into(),
            toks(&["rare"; 10]),
            toks(&["<person>"]),
        ));
        let keep = build_unknown_set(&ads, &c);
        assert!(keep.contains("ballot"));
        assert!(!keep.contains("rare"));
        assert!(keep.contains("<person>"));
        assert!(keep.contains("<unk>"));
        // "vote"/"a"/"sign" also sit in 5 ads
        assert!(keep.contains("sign"));
    }

    #[test]
    fn membership_counts_both_views_once_per_ad() {
        let c = PreprocessConfig {
            min_ad_frequency: 2,
            ..cfg()
        };
        // "flag" appears once in IT of ad0 and once in D of ad1: df = 2
        let ads = vec![
            TokenizedAd::new("a0".into(), toks(&["flag"]), toks(&[])),
            TokenizedAd::new("a1".into(), toks(&[]), toks(&["flag", "flag"])),
        ];
        let keep = build_unknown_set(&ads, &c);
        assert!(keep.contains("flag"));
    }

    #[test]
    fn apply_unknowns_preserves_length_and_placeholders() {
        let c = cfg();
        let ad = TokenizedAd::new(
            "a".into(),
            toks(&["keepme", "dropme", "<person>"]),
            toks(&["<url>", "gone"]),
        );
        let keep: HashSet<String> = ["keepme".to_string()].into_iter().collect();
        let out = apply_unknowns(&ad, &keep, &c);
        assert_eq!(out.tokens_it, toks(&["keepme", "<unk>", "<person>"]));
        assert_eq!(out.tokens_d, toks(&["<url>", "<unk>"]));
        assert_eq!(out.tokens_joined.len(), ad.tokens_joined.len());

        // identity when everything is kept
        let all: HashSet<String> = ad.tokens_joined.iter().cloned().collect();
        assert_eq!(apply_unknowns(&ad, &all, &c), ad);

        // empty keep set replaces everything except placeholders
        let none = HashSet::new();
        let out = apply_unknowns(&ad, &none, &c);
        assert_eq!(out.tokens_it, toks(&["<unk>", "<unk>", "<person>"]));
    }

    #[test]
    fn truncation_keeps_the_head() {
        let c = PreprocessConfig {
            max_tokens: 3,
            ..cfg()
        };
        let t = toks(&["a", "b", "c", "d", "e"]);
        assert_eq!(truncate(&t, &c), toks(&["a", "b", "c"]));
        let short = toks(&["a"]);
        assert_eq!(truncate(&short, &c), short);
    }

    #[test]
    fn config_invariants_are_enforced() {
        assert!(cfg().validate().is_ok());
        let bad = PreprocessConfig {
            max_tokens: 0,
            ..cfg()
        };
        assert!(bad.validate().is_err());
        let clash = PreprocessConfig {
            placeholder_person: "<url>".into(),
            ..cfg()
        };
        assert!(clash.validate().is_err());
    }

    fn uniform(side: u32, value: u8) -> RgbImage {
        RgbImage::from_pixel(side, side, image::Rgb([value, value, value]))
    }

    #[test]
    fn image_scaling_hits_exact_values() {
        let c = PreprocessConfig {
            image_side: 8,
            ..cfg()
        };
        let white = normalize_rgb(&uniform(20, 255), &c);
        assert!(white.pixels.iter().all(|&v| v == 1.0));
        let black = normalize_rgb(&uniform(20, 0), &c);
        assert!(black.pixels.iter().all(|&v| v == 0.0));
        let gray = normalize_rgb(&uniform(20, 128), &c);
        let expect = 128.0 / 255.0;
        assert!(gray.pixels.iter().all(|&v| (v - expect).abs() < 1e-12));
        assert_eq!(gray.pixels.shape(), &[8, 8, 3]);
    }

    #[test]
    fn same_size_resize_is_identity() {
        let c = PreprocessConfig {
            image_side: 5,
            ..cfg()
        };
        let mut img = RgbImage::new(5, 5);
        for (i, p) in img.pixels_mut().enumerate() {
            let v = (i * 9 % 256) as u8;
            *p = image::Rgb([v, v.wrapping_add(31), v.wrapping_mul(3)]);
        }
        let out = normalize_rgb(&img, &c);
        for y in 0..5 {
            for x in 0..5 {
                for ch in 0..3 {
                    let orig = img.get_pixel(x as u32, y as u32).0[ch] as f64 / 255.0;
                    assert!((out.pixels[[y, x, ch]] - orig).abs() <= 1.0 / 255.0);
                }
            }
        }
    }

    #[test]
    fn undecodable_image_names_the_ad() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.png");
        std::fs::write(&path, b"not a png").unwrap();
        let err = normalize_image(&path, "ad-7", &cfg()).unwrap_err();
        assert!(err.to_string().contains("ad-7"));
    }

    #[test]
    fn tokenized_ad_wire_format_omits_joined() {
        let ad = TokenizedAd::new("a".into(), toks(&["x"]), toks(&["y"]));
        let json = serde_json::to_string(&ad).unwrap();
        assert!(!json.contains("tokens_joined"));
        let back: TokenizedAd = serde_json::from_str(&json).unwrap();
        assert_eq!(back.tokens_joined, toks(&["x", "y"]));
    }
}
