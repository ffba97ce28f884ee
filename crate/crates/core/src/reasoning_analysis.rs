//! Term frequencies of correctly classified reasoning responses.
//!
//! Unigrams drop stopwords. Bigrams pair tokens that were adjacent in the
//! response and both survived filtering, so no bigram spans a stopword.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::crash_data::SeverityClass;
use crate::label_extraction::PredictedLabel;

const SHIPPED_STOPWORDS: &str = include_str!("../assets/text/stopwords.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    /// One word per line; blank lines and `#` comments are ignored.
    pub fn from_text(text: &str) -> Self {
        Stopwords(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn shipped() -> Self {
        Stopwords::from_text(SHIPPED_STOPWORDS)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }
}

impl Default for Stopwords {
    fn default() -> Self {
        Stopwords::shipped()
    }
}

fn joiner_kept(prev: Option<char>, c: char, next: Option<char>) -> bool {
    let alnum = |x: Option<char>| x.is_some_and(char::is_alphanumeric);
    let digit = |x: Option<char>| x.is_some_and(|x| x.is_ascii_digit());
    match c {
        '-' | '/' => alnum(prev) && alnum(next),
        '.' => digit(prev) && digit(next),
        _ => false,
    }
}

/// Lowercases, splits on whitespace and strips punctuation.
///
/// `-` and `/` survive between alphanumerics (`rear-end`, `km/hr`), `.`
/// between digits. Other punctuation is removed without splitting.
pub fn normalize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let chars: Vec<char> = raw.chars().collect();
            let mut tok = String::with_capacity(raw.len());
            for (i, &c) in chars.iter().enumerate() {
                let prev = i.checked_sub(1).map(|j| chars[j]);
                let next = chars.get(i + 1).copied();
                if c.is_alphanumeric() || joiner_kept(prev, c, next) {
                    tok.extend(c.to_lowercase());
                }
            }
            (!tok.is_empty()).then_some(tok)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermFrequencyTable {
    pub class: SeverityClass,
    pub unigrams: BTreeMap<String, usize>,
    pub bigrams: BTreeMap<String, usize>,
    pub total_responses: usize,
}

impl TermFrequencyTable {
    pub fn new(class: SeverityClass) -> Self {
        TermFrequencyTable {
            class,
            unigrams: BTreeMap::new(),
            bigrams: BTreeMap::new(),
            total_responses: 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.unigrams.is_empty() && self.bigrams.is_empty()
    }

    /// Unigrams and bigrams together; bigrams contain a space so never collide.
    pub fn entries(&self) -> impl Iterator<Item = (&str, usize)> {
        self.unigrams
            .iter()
            .chain(&self.bigrams)
            .map(|(t, n)| (t.as_str(), *n))
    }

    pub fn unigram_total(&self) -> usize {
        self.unigrams.values().sum()
    }

    fn add_response(&mut self, text: &str, stopwords: &Stopwords) {
        self.total_responses += 1;
        let tokens = normalize(text);
        let kept: Vec<Option<&str>> = tokens
            .iter()
            .map(|t| (!stopwords.contains(t)).then_some(t.as_str()))
            .collect();
        for t in kept.iter().flatten() {
            *self.unigrams.entry(t.to_string()).or_default() += 1;
        }
        for pair in kept.windows(2) {
            if let [Some(a), Some(b)] = pair {
                *self.bigrams.entry(format!("{a} {b}")).or_default() += 1;
            }
        }
    }
}

/// Per-class tables built only from responses whose prediction is correct.
pub fn term_frequencies(
    responses: &[(&str, SeverityClass, PredictedLabel)],
    stopwords: &Stopwords,
) -> BTreeMap<SeverityClass, TermFrequencyTable> {
    let mut tables: BTreeMap<_, _> = SeverityClass::ALL
        .iter()
        .map(|c| (*c, TermFrequencyTable::new(*c)))
        .collect();
    for (text, truth, predicted) in responses {
        if predicted.class() == Some(*truth) {
            tables
                .get_mut(truth)
                .expect("every class has a table")
                .add_response(text, stopwords);
        }
    }
    tables
}

/// Top `k` terms as TSV with a `term\tcount` header; ties sort by term.
pub fn emit_table(table: &TermFrequencyTable, k: usize) -> String {
    let mut rows: Vec<(&str, usize)> = table.entries().collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut out = String::from("term\tcount\n");
    for (term, n) in rows.into_iter().take(k) {
        out.push_str(term);
        out.push('\t');
        out.push_str(&n.to_string());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use SeverityClass::*;

    fn ok(c: SeverityClass) -> PredictedLabel {
        PredictedLabel::Resolved { class: c, span: (0, 1) }
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize("Rear-end collision."), ["rear-end", "collision"]);
        assert!(normalize("").is_empty());
        assert_eq!(normalize("100 km/hr speeding"), ["100", "km/hr", "speeding"]);
        assert_eq!(normalize("T-intersection, (head-on) driver's 0.5 -- /x"), [
            "t-intersection",
            "head-on",
            "drivers",
            "0.5",
            "x"
        ]);
    }

    #[test]
    fn single_fatal_response_hand_count() {
        let tables = term_frequencies(
            &[("head-on collision at excessive speed", Fatal, ok(Fatal))],
            &Stopwords::shipped(),
        );
        let t = &tables[&Fatal];
        let uni: Vec<_> = t.unigrams.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        assert_eq!(uni, [("collision", 1), ("excessive", 1), ("head-on", 1), ("speed", 1)]);
        let bi: Vec<_> = t.bigrams.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        assert_eq!(bi, [("excessive speed", 1), ("head-on collision", 1)]);
        assert!(tables[&SeriousInjury].is_empty() && tables[&MinorOrNonInjury].is_empty());
    }

    #[test]
    fn misclassified_contribute_nothing() {
        let tables = term_frequencies(
            &[
                ("wet road", Fatal, ok(SeriousInjury)),
                ("slow speed", MinorOrNonInjury, PredictedLabel::Unresolved),
            ],
            &Stopwords::shipped(),
        );
        assert!(tables.values().all(|t| t.is_empty() && t.total_responses == 0));
    }

    #[test]
    fn duplicates_double() {
        let r = ("rear-end collision", SeriousInjury, ok(SeriousInjury));
        let tables = term_frequencies(&[r, r], &Stopwords::shipped());
        assert_eq!(tables[&SeriousInjury].unigrams["collision"], 2);
        assert_eq!(tables[&SeriousInjury].bigrams["rear-end collision"], 2);
        assert_eq!(tables[&SeriousInjury].total_responses, 2);
    }

    #[test]
    fn emit_ties_and_truncation() {
        let mut t = TermFrequencyTable::new(Fatal);
        t.unigrams.insert("b".into(), 3);
        t.unigrams.insert("a".into(), 3);
        t.unigrams.insert("c".into(), 1);
        assert_eq!(emit_table(&t, 2), "term\tcount\na\t3\nb\t3\n");
        assert_eq!(emit_table(&t, 10), "term\tcount\na\t3\nb\t3\nc\t1\n");
    }

    #[test]
    fn stopword_file_format() {
        let s = Stopwords::from_text("# comment\nThe\n\n of \n");
        assert!(s.contains("the") && s.contains("of"));
        assert!(!s.contains("# comment"));
        assert!(!Stopwords::shipped().contains("accident"));
    }

    proptest! {
        #[test]
        fn unigram_total_matches_surviving_tokens(words in prop::collection::vec("[a-z]{1,6}|the|of|at", 0..40)) {
            let text = words.join(" ");
            let sw = Stopwords::shipped();
            let tables = term_frequencies(&[(&text, Fatal, ok(Fatal))], &sw);
            let surviving = normalize(&text).iter().filter(|t| !sw.contains(t)).count();
            prop_assert_eq!(tables[&Fatal].unigram_total(), surviving);
            for (a, b) in tables[&Fatal].bigrams.keys().map(|k| k.split_once(' ').unwrap()) {
                prop_assert!(!sw.contains(a) && !sw.contains(b));
            }
        }
    }
}
