//! Feature extraction for the linear models and the lexical analysis:
//! bag-of-n-grams TF-IDF vectors and per-ad unit-normalized unigram
//! frequencies.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An n-gram vocabulary fitted on training ads. Index assignment is by
/// lexicographic term order, so fitting is insensitive to ad order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub ngram_range: (usize, usize),
    /// term -> dense index in 0..V
    pub index: BTreeMap<String, usize>,
    /// term -> number of training ads containing it
    pub document_frequency: BTreeMap<String, usize>,
    /// number of training ads the vocabulary was fitted on
    pub n_docs: usize,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Smoothed inverse document frequency, monotone non-increasing in df.
    pub fn idf(&self, term: &str) -> Option<f64> {
        let df = *self.document_frequency.get(term)?;
        Some(((1 + self.n_docs) as f64 / (1 + df) as f64).ln() + 1.0)
    }
}

/// Multiset of the n-grams of `tokens` for `lo..=hi`, with counts. N-gram
/// keys join tokens with `_`, which the tokenizer never emits as a joiner.
fn ngram_counts(tokens: &[String], range: (usize, usize)) -> HashMap<String, usize> {
    let (lo, hi) = range;
    let mut counts = HashMap::new();
    for n in lo..=hi {
        if n == 0 || n > tokens.len() {
            continue;
        }
        for window in tokens.windows(n) {
            *counts.entry(window.join("_")).or_insert(0) += 1;
        }
    }
    counts
}

/// Fits a vocabulary over every n-gram occurring in the training ads.
pub fn fit_vocabulary<'a, I>(train_docs: I, ngram_range: (usize, usize)) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a [String]>,
{
    let (lo, hi) = ngram_range;
    if lo < 1 || lo > hi {
        return Err(Error::Config(format!(
            "ngram_range ({lo},{hi}) must satisfy 1 <= lo <= hi"
        )));
    }
    let mut document_frequency: BTreeMap<String, usize> = BTreeMap::new();
    let mut n_docs = 0usize;
    for doc in train_docs {
        n_docs += 1;
        for term in ngram_counts(doc, ngram_range).into_keys() {
            *document_frequency.entry(term).or_insert(0) += 1;
        }
    }
    if n_docs == 0 {
        return Err(Error::EmptyInput("vocabulary fit on zero ads".into()));
    }
    let index = document_frequency
        .keys()
        .enumerate()
        .map(|(i, t)| (t.clone(), i))
        .collect();
    Ok(Vocabulary {
        ngram_range,
        index,
        document_frequency,
        n_docs,
    })
}

/// A sparse feature vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub pairs: Vec<(usize, f64)>,
    pub dim: usize,
}

impl FeatureVector {
    pub fn l2_norm(&self) -> f64 {
        self.pairs.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.pairs.iter().map(|&(i, w)| w * dense[i]).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for &(i, w) in &self.pairs {
            v[i] = w;
        }
        v
    }
}

/// TF-IDF transform: weight(t) = count(t in ad) * idf(t), L2-normalized.
/// Out-of-vocabulary terms are ignored.
pub fn tfidf(tokens: &[String], vocab: &Vocabulary) -> FeatureVector {
    let mut pairs: Vec<(usize, f64)> = ngram_counts(tokens, vocab.ngram_range)
        .into_iter()
        .filter_map(|(term, tf)| {
            let &i = vocab.index.get(&term)?;
            let idf = vocab.idf(&term).expect("indexed terms have df");
            Some((i, tf as f64 * idf))
        })
        .collect();
    pairs.sort_by_key(|&(i, _)| i);
    let norm = pairs.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, w) in &mut pairs {
            *w /= norm;
        }
    }
    FeatureVector {
        pairs,
        dim: vocab.len(),
    }
}

/// Per-ad unigram frequencies normalized to sum to one. Returns `None` for
/// an empty token sequence (such ads are excluded from the analysis).
pub fn unigram_relative_freq(tokens: &[String]) -> Option<BTreeMap<String, f64>> {
    if tokens.is_empty() {
        return None;
    }
    let mut counts: BTreeMap<String, f64> = BTreeMap::new();
    for t in tokens {
        *counts.entry(t.clone()).or_insert(0.0) += 1.0;
    }
    let total = tokens.len() as f64;
    for v in counts.values_mut() {
        *v /= total;
    }
    Some(counts)
}

/// Writes `term<TAB>index<TAB>df`, one row per term, in index order.
pub fn write_vocab_tsv(vocab: &Vocabulary, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut rows: Vec<(&String, &usize)> = vocab.index.iter().collect();
    rows.sort_by_key(|&(_, i)| *i);
    for (term, i) in rows {
        let df = vocab.document_frequency[term];
        writeln!(w, "{term}\t{i}\t{df}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a vocabulary written by [`write_vocab_tsv`]. The fitted corpus
/// size is recovered as the maximum df (a lower bound adequate for
/// inspection; training always refits from tokens).
pub fn read_vocab_tsv(path: &Path, ngram_range: (usize, usize)) -> Result<Vocabulary> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut index = BTreeMap::new();
    let mut document_frequency = BTreeMap::new();
    let mut max_df = 0usize;
    for (ln, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (term, idx, df) = (parts.next(), parts.next(), parts.next());
        let (Some(term), Some(idx), Some(df), None) = (term, idx, df, parts.next()) else {
            return Err(Error::Malformed(format!(
                "{}:{}: expected term<TAB>index<TAB>df",
                path.display(),
                ln + 1
            )));
        };
        let idx: usize = idx
            .parse()
            .map_err(|_| Error::Malformed(format!("{}:{}: bad index", path.display(), ln + 1)))?;
        let df: usize = df
            .parse()
            .map_err(|_| Error::Malformed(format!("{}:{}: bad df", path.display(), ln + 1)))?;
        max_df = max_df.max(df);
        index.insert(term.to_string(), idx);
        document_frequency.insert(term.to_string(), df);
    }
    Ok(Vocabulary {
        ngram_range,
        index,
        document_frequency,
        n_docs: max_df,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn two_token_ad_with_bigrams_has_three_terms() {
        let doc = toks(&["a", "b"]);
        let vocab = fit_vocabulary([doc.as_slice()], (1, 2)).unwrap();
        assert_eq!(vocab.len(), 3);
        assert!(vocab.index.contains_key("a"));
        assert!(vocab.index.contains_key("b"));
        assert!(vocab.index.contains_key("a_b"));
    }

    #[test]
    fn document_frequency_counts_ads_not_occurrences() {
        let d1 = toks(&["a", "a", "b"]);
        let vocab = fit_vocabulary([d1.as_slice()], (1, 1)).unwrap();
        assert_eq!(vocab.document_frequency["a"], 1);

        let d1 = toks(&["a"]);
        let d2 = toks(&["a", "b"]);
        let vocab = fit_vocabulary([d1.as_slice(), d2.as_slice()], (1, 1)).unwrap();
        assert_eq!(vocab.document_frequency["a"], 2);
        assert_eq!(vocab.document_frequency["b"], 1);
    }

    #[test]
    fn fitting_is_ad_order_insensitive() {
        let d1 = toks(&["b", "c"]);
        let d2 = toks(&["a"]);
        let v1 = fit_vocabulary([d1.as_slice(), d2.as_slice()], (1, 2)).unwrap();
        let v2 = fit_vocabulary([d2.as_slice(), d1.as_slice()], (1, 2)).unwrap();
        assert_eq!(v1.index, v2.index);
        assert_eq!(v1.document_frequency, v2.document_frequency);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(fit_vocabulary(std::iter::empty::<&[String]>(), (1, 3)).is_err());
    }

    #[test]
    fn idf_of_ubiquitous_term_is_one() {
        // N=2, df=2: ln(3/3)+1 = 1
        let d1 = toks(&["x"]);
        let d2 = toks(&["x"]);
        let vocab = fit_vocabulary([d1.as_slice(), d2.as_slice()], (1, 1)).unwrap();
        assert!((vocab.idf("x").unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn idf_is_monotone_in_df() {
        let docs: Vec<Vec<String>> = vec![
            toks(&["a", "b"]),
            toks(&["a", "b"]),
            toks(&["a", "c"]),
            toks(&["a"]),
        ];
        let refs: Vec<&[String]> = docs.iter().map(|d| d.as_slice()).collect();
        let vocab = fit_vocabulary(refs, (1, 1)).unwrap();
        // df: a=4, b=2, c=1
        assert!(vocab.idf("a").unwrap() <= vocab.idf("b").unwrap());
        assert!(vocab.idf("b").unwrap() <= vocab.idf("c").unwrap());
    }

    #[test]
    fn single_known_term_normalizes_to_unit_coordinate() {
        let d1 = toks(&["vote"]);
        let d2 = toks(&["other"]);
        let vocab = fit_vocabulary([d1.as_slice(), d2.as_slice()], (1, 1)).unwrap();
        let v = tfidf(&toks(&["vote", "unseen", "unseen"]), &vocab);
        assert_eq!(v.pairs.len(), 1);
        assert!((v.pairs[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tfidf_matches_direct_formula_on_toy_corpus() {
        let docs = [
            toks(&["vote", "for", "change"]),
            toks(&["vote", "vote", "now"]),
            toks(&["change", "now"]),
        ];
        let refs: Vec<&[String]> = docs.iter().map(|d| d.as_slice()).collect();
        let vocab = fit_vocabulary(refs, (1, 2)).unwrap();
        for doc in &docs {
            let got = tfidf(doc, &vocab).to_dense();
            // independent recomputation straight from the formula
            let mut expect = vec![0.0; vocab.len()];
            for n in 1..=2usize {
                if n > doc.len() {
                    continue;
                }
                for w in doc.windows(n) {
                    let term = w.join("_");
                    let i = vocab.index[&term];
                    let df = vocab.document_frequency[&term] as f64;
                    let idf = ((1.0 + 3.0) / (1.0 + df)).ln() + 1.0;
                    expect[i] += idf; // one occurrence at a time
                }
            }
            let norm = expect.iter().map(|w| w * w).sum::<f64>().sqrt();
            for e in &mut expect {
                *e /= norm;
            }
            for (g, e) in got.iter().zip(&expect) {
                assert!((g - e).abs() < 1e-12, "got {g}, expected {e}");
            }
            let l2: f64 = got.iter().map(|w| w * w).sum::<f64>().sqrt();
            assert!((l2 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_vocabulary_ad_yields_zero_vector() {
        let d = toks(&["known"]);
        let vocab = fit_vocabulary([d.as_slice()], (1, 1)).unwrap();
        let v = tfidf(&toks(&["mystery"]), &vocab);
        assert!(v.pairs.is_empty());
    }

    #[test]
    fn unigram_frequencies_sum_to_one() {
        let f = unigram_relative_freq(&toks(&["a", "a", "b", "c"])).unwrap();
        assert!((f["a"] - 0.5).abs() < 1e-12);
        assert!((f["b"] - 0.25).abs() < 1e-12);
        assert!((f["c"] - 0.25).abs() < 1e-12);
        assert!((f.values().sum::<f64>() - 1.0).abs() < 1e-12);

        let f = unigram_relative_freq(&toks(&["a"])).unwrap();
        assert!((f["a"] - 1.0).abs() < 1e-12);

        assert!(unigram_relative_freq(&[]).is_none());
    }

    #[test]
    fn vocab_tsv_roundtrips() {
        let d1 = toks(&["b", "a"]);
        let d2 = toks(&["a"]);
        let vocab = fit_vocabulary([d1.as_slice(), d2.as_slice()], (1, 2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.tsv");
        write_vocab_tsv(&vocab, &path).unwrap();
        let back = read_vocab_tsv(&path, (1, 2)).unwrap();
        assert_eq!(back.index, vocab.index);
        assert_eq!(back.document_frequency, vocab.document_frequency);
        assert_eq!(back.n_docs, 2);
    }
}
