//! Mapping free-text model responses to severity classes.
//!
//! Matching is case-insensitive with whitespace runs collapsed; there is no
//! fuzzy matching. When several labels occur, the last one wins, and at any
//! position the longest label is preferred.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crash_data::SeverityClass;
use crate::prompting::label_set;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("`{label}` is not a display label (prompt engineering: {pe})")]
pub struct UnknownLabel {
    pub label: String,
    pub pe: bool,
}

/// Byte range into the original response text.
pub type Span = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "WirePrediction", into = "WirePrediction")]
pub enum PredictedLabel {
    Resolved { class: SeverityClass, span: Span },
    Unresolved,
}

impl PredictedLabel {
    pub fn class(&self) -> Option<SeverityClass> {
        match self {
            PredictedLabel::Resolved { class, .. } => Some(*class),
            PredictedLabel::Unresolved => None,
        }
    }

    pub fn matched_span(&self) -> Option<Span> {
        match self {
            PredictedLabel::Resolved { span, .. } => Some(*span),
            PredictedLabel::Unresolved => None,
        }
    }

    pub fn is_unresolved(&self) -> bool {
        matches!(self, PredictedLabel::Unresolved)
    }

    pub fn as_str(&self) -> &'static str {
        self.class().map(SeverityClass::as_str).unwrap_or("Unresolved")
    }
}

#[derive(Serialize, Deserialize)]
struct WirePrediction {
    label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    span: Option<Span>,
}

impl From<PredictedLabel> for WirePrediction {
    fn from(p: PredictedLabel) -> Self {
        WirePrediction {
            label: p.as_str().to_string(),
            span: p.matched_span(),
        }
    }
}

impl From<WirePrediction> for PredictedLabel {
    fn from(w: WirePrediction) -> Self {
        match (w.label.parse::<SeverityClass>(), w.span) {
            (Ok(class), Some(span)) => PredictedLabel::Resolved { class, span },
            _ => PredictedLabel::Unresolved,
        }
    }
}

/// Case-folded, whitespace-collapsed text with a map back to source offsets.
struct Folded {
    text: String,
    /// For each char of `text`: (byte offset in `text`, source byte range).
    origin: Vec<(usize, usize, usize)>,
}

impl Folded {
    fn new(src: &str) -> Self {
        let mut text = String::with_capacity(src.len());
        let mut origin: Vec<(usize, usize, usize)> = Vec::with_capacity(src.len());
        let mut in_space = false;
        for (i, c) in src.char_indices() {
            let end = i + c.len_utf8();
            if c.is_whitespace() {
                if in_space {
                    if let Some(last) = origin.last_mut() {
                        last.2 = end;
                    }
                } else {
                    origin.push((text.len(), i, end));
                    text.push(' ');
                    in_space = true;
                }
                continue;
            }
            in_space = false;
            for lc in c.to_lowercase() {
                origin.push((text.len(), i, end));
                text.push(lc);
            }
        }
        Folded { text, origin }
    }

    /// Source byte range covering folded bytes `start..end`.
    fn source_span(&self, start: usize, end: usize) -> Span {
        let first = self.origin.partition_point(|o| o.0 < start);
        let last = self.origin.partition_point(|o| o.0 < end) - 1;
        (self.origin[first].1, self.origin[last].2)
    }
}

fn fold_label(label: &str) -> String {
    label.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Extracts the final verdict from a response.
pub fn extract_label(response_text: &str, pe: bool) -> PredictedLabel {
    let folded = Folded::new(response_text);
    let mut hits: Vec<(usize, usize, SeverityClass)> = Vec::new();
    for (class, display) in label_set(pe).entries() {
        let needle = fold_label(display);
        hits.extend(
            folded
                .text
                .match_indices(&needle)
                .map(|(start, m)| (start, start + m.len(), class)),
        );
    }
    // earliest start first, longest first at a shared start
    hits.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
    let mut cursor = 0;
    let mut last = None;
    for (start, end, class) in hits {
        if start >= cursor {
            last = Some((start, end, class));
            cursor = end;
        }
    }
    match last {
        Some((start, end, class)) => PredictedLabel::Resolved {
            class,
            span: folded.source_span(start, end),
        },
        None => PredictedLabel::Unresolved,
    }
}

/// Inverse of the display mapping of [`label_set`].
///
/// Surrounding quotes, a trailing period and case are ignored.
pub fn canonicalize(display_label: &str, pe: bool) -> Result<SeverityClass, UnknownLabel> {
    let quote = |c| matches!(c, '"' | '\'' | '`');
    let cleaned = display_label
        .trim()
        .trim_matches(quote)
        .trim_end_matches('.')
        .trim_matches(quote);
    let wanted = fold_label(cleaned);
    label_set(pe)
        .entries()
        .into_iter()
        .find(|(_, d)| fold_label(d) == wanted)
        .map(|(c, _)| c)
        .ok_or_else(|| UnknownLabel {
            label: display_label.to_string(),
            pe,
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompting::{FATAL_LABEL, SERIOUS_LABEL, SOFT_FATAL_LABEL};
    use proptest::prelude::*;

    #[test]
    fn soft_label_is_fatal_under_pe() {
        let p = extract_label(SOFT_FATAL_LABEL, true);
        assert_eq!(p.class(), Some(SeverityClass::Fatal));
        assert_eq!(p.matched_span(), Some((0, SOFT_FATAL_LABEL.len())));
    }

    #[test]
    fn exact_minor_label() {
        assert_eq!(
            extract_label("Minor or non-injury accident", false).class(),
            Some(SeverityClass::MinorOrNonInjury)
        );
    }

    #[test]
    fn last_occurrence_wins_in_reasoning() {
        let text = "The vehicles collided at an intersection.\n\n\
                    One could argue this is a Serious injury accident given the low speed.\n\
                    However the pedestrian was struck at 100 km/hr, so therefore this is a Fatal accident.";
        let p = extract_label(text, false);
        assert_eq!(p.class(), Some(SeverityClass::Fatal));
        let (s, e) = p.matched_span().unwrap();
        assert_eq!(&text[s..e], "Fatal accident");
    }

    #[test]
    fn no_label_is_unresolved() {
        assert_eq!(extract_label("I cannot determine the severity.", false), PredictedLabel::Unresolved);
        assert_eq!(extract_label("", true), PredictedLabel::Unresolved);
    }

    #[test]
    fn bare_fatal_is_not_a_pe_label() {
        assert_eq!(extract_label("Fatal accident", true), PredictedLabel::Unresolved);
    }

    #[test]
    fn lexical_variants() {
        let t = "Answer: \"FATAL   ACCIDENTS\".";
        let p = extract_label(t, false);
        assert_eq!(p.class(), Some(SeverityClass::Fatal));
        let (s, e) = p.matched_span().unwrap();
        assert_eq!(&t[s..e], "FATAL   ACCIDENT");
        let wrapped = "serious\ninjury\taccident";
        assert_eq!(extract_label(wrapped, true).class(), Some(SeverityClass::SeriousInjury));
    }

    #[test]
    fn span_survives_case_folding_expansion() {
        // 'İ' lowercases to two chars
        let t = "İİ Serious injury accident";
        let (s, e) = extract_label(t, false).matched_span().unwrap();
        assert_eq!(&t[s..e], SERIOUS_LABEL);
    }

    #[test]
    fn canonicalize_cases() {
        assert_eq!(canonicalize(SOFT_FATAL_LABEL, true), Ok(SeverityClass::Fatal));
        for pe in [false, true] {
            assert_eq!(canonicalize(SERIOUS_LABEL, pe), Ok(SeverityClass::SeriousInjury));
        }
        assert_eq!(canonicalize("'fatal accident.'", false), Ok(SeverityClass::Fatal));
        assert!(canonicalize(FATAL_LABEL, true).is_err());
        assert!(canonicalize("Severe accident", false).is_err());
    }

    #[test]
    fn wire_format() {
        let p = extract_label("x Fatal accident", false);
        assert_eq!(serde_json::to_string(&p).unwrap(), r#"{"label":"Fatal","span":[2,16]}"#);
        assert_eq!(serde_json::to_string(&PredictedLabel::Unresolved).unwrap(), r#"{"label":"Unresolved"}"#);
        let back: PredictedLabel = serde_json::from_str(r#"{"label":"Fatal","span":[2,16]}"#).unwrap();
        assert_eq!(back, p);
    }

    proptest! {
        #[test]
        fn round_trip_every_display(pe in any::<bool>(), idx in 0usize..3) {
            let class = SeverityClass::ALL[idx];
            let display = label_set(pe).display(class);
            prop_assert_eq!(extract_label(display, pe).class(), Some(class));
            prop_assert_eq!(canonicalize(display, pe), Ok(class));
        }

        #[test]
        fn total_on_arbitrary_input(text in any::<String>(), pe in any::<bool>()) {
            let p = extract_label(&text, pe);
            if let Some((s, e)) = p.matched_span() {
                prop_assert!(s < e && e <= text.len());
                prop_assert!(text.is_char_boundary(s) && text.is_char_boundary(e));
            }
        }

        #[test]
        fn embedding_preserves_class(
            prefix in "[a-z ,.;:]{0,60}",
            suffix in "[a-z ,.;:]{0,60}",
            pe in any::<bool>(),
            idx in 0usize..3,
        ) {
            let class = SeverityClass::ALL[idx];
            let text = format!("{prefix} {} {suffix}", label_set(pe).display(class));
            // random lowercase prose is far too short to spell a label by chance
            prop_assert_eq!(extract_label(&text, pe).class(), Some(class));
        }
    }
}
