//! Language filtering. Detection is pluggable so a real identifier can be
//! swapped in; the built-in detector is a stopword-overlap heuristic that
//! only distinguishes English from everything else.

use std::collections::HashSet;

/// Identifies the language of a short text, returning a lowercase tag such
/// as `"en"`, or `None` when the text is undetectable (e.g. empty).
pub trait LanguageDetector {
    fn detect(&self, text: &str) -> Option<String>;
}

/// English function words. High-frequency closed-class words are reliable
/// language markers even in the short, shouty register of ad copy.
const ENGLISH_STOPWORDS: &[&str] = &[
    "i",
    "me",
    "my",
    "myself",
    "we",
    "our",
    "ours",
    "ourselves",
    "you",
    "you're",
    "you've",
    "you'll",
    "you'd",
    "your",
    "yours",
    "yourself",
    "yourselves",
    "he",
    "him",
    "his",
    "himself",
    "she",
    "she's",
    "her",
    "hers",
    "herself",
    "it",
    "it's",
    "its",
    "itself",
    "they",
    "them",
    "their",
    "theirs",
    "themselves",
    "what",
    "which",
    "who",
    "whom",
    "this",
    "that",
    "that'll",
    "these",
    "those",
    "am",
    "is",
    "are",
    "was",
    "were",
    "be",
    "been",
    "being",
    "have",
    "has",
    "had",
    "having",
    "do",
    "does",
    "did",
    "doing",
    "a",
    "an",
    "the",
    "and",
    "but",
    "if",
    "or",
    "because",
    "as",
    "until",
    "while",
    "of",
    "at",
    "by",
    "for",
    "with",
    "about",
    "against",
    "between",
    "into",
    "through",
    "during",
    "before",
    "after",
    "above",
    "below",
    "to",
    "from",
    "up",
    "down",
    "in",
    "out",
    "on",
    "off",
    "over",
    "under",
    "again",
    "further",
    "then",
    "once",
    "here",
    "there",
    "when",
    "where",
    "why",
    "how",
    "all",
    "any",
    "both",
    "each",
    "few",
    "more",
    "most",
    "other",
    "some",
    "such",
    "no",
    "nor",
    "not",
    "only",
    "own",
    "same",
    "so",
    "than",
    "too",
    "very",
    "s",
    "t",
    "can",
    "will",
    "just",
    "don",
    "don't",
    "should",
    "should've",
    "now",
    "d",
    "ll",
    "m",
    "o",
    "re",
    "ve",
    "y",
    "ain",
    "aren",
    "aren't",
    "couldn",
    "couldn't",
    "didn",
    "didn't",
    "doesn",
    "doesn't",
    "hadn",
    "hadn't",
    "hasn",
    "hasn't",
    "haven",
    "haven't",
    "isn",
    "isn't",
    "ma",
    "mightn",
    "mightn't",
    "mustn",
    "mustn't",
    "needn",
    "needn't",
    "shan",
    "shan't",
    "shouldn",
    "shouldn't",
    "wasn",
    "wasn't",
    "weren",
    "weren't",
    "won",
    "won't",
    "wouldn",
    "wouldn't",
];

/// Flags a text as English when at least `threshold` of its word tokens are
/// English function words.
pub struct StopwordDetector {
    stopwords: HashSet<&'static str>,
    threshold: f64,
}

impl StopwordDetector {
    pub fn new(threshold: f64) -> Self {
        StopwordDetector {
            stopwords: ENGLISH_STOPWORDS.iter().copied().collect(),
            threshold,
        }
    }
}

impl Default for StopwordDetector {
    fn default() -> Self {
        StopwordDetector::new(0.1)
    }
}

impl LanguageDetector for StopwordDetector {
    fn detect(&self, text: &str) -> Option<String> {
        let lowered = text.to_lowercase();
        let words: Vec<&str> = lowered
            .split_whitespace()
            .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric() && c != '\''))
            .filter(|w| !w.is_empty())
            .collect();
        if words.is_empty() {
            return None;
        }
        let hits = words
            .iter()
            .filter(|w| self.stopwords.contains(**w))
            .count();
        if hits as f64 / words.len() as f64 >= self.threshold {
            Some("en".to_string())
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn english_slogan_is_detected() {
        let d = StopwordDetector::default();
        assert_eq!(d.detect("VOTE FOR CHANGE TODAY").as_deref(), Some("en"));
    }

    #[test]
    fn spanish_slogan_is_not_english() {
        let d = StopwordDetector::default();
        assert_eq!(d.detect("VOTA HOY POR EL CAMBIO"), None);
    }

    #[test]
    fn empty_text_is_undetectable() {
        let d = StopwordDetector::default();
        assert_eq!(d.detect(""), None);
        assert_eq!(d.detect("   \t "), None);
    }

    #[test]
    fn punctuation_does_not_hide_stopwords() {
        let d = StopwordDetector::default();
        assert_eq!(d.detect("THE: future!").as_deref(), Some("en"));
    }

    #[test]
    fn filter_language_keeps_only_detected_ads() {
        use crate::corpus::{filter_language, AdRecord};
        let mk = |id: &str, text: &str| AdRecord {
            ad_id: id.into(),
            sponsor_id: "s1".into(),
            start_date: "2020-01-01".parse().unwrap(),
            image_url: format!("http://x/{id}"),
            image_path: None,
            image_text: text.into(),
            densecap: "a sign".into(),
            language: None,
        };
        let ads = vec![
            mk("a", "VOTE FOR CHANGE TODAY"),
            mk("b", "VOTA HOY POR EL CAMBIO"),
            mk("c", ""),
        ];
        let kept = filter_language(&ads, "en", &StopwordDetector::default());
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].ad_id, "a");
    }
}
