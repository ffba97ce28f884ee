//! Confusion matrices, per-class precision/recall/F1 and macro averages.
//!
//! Unresolved predictions get their own confusion-matrix column. They count
//! as false negatives for the true class and as false positives for no class.
//! A zero denominator yields 0 and sets the matching `degenerate` flag.

mod scalar;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::crash_data::SeverityClass;
use crate::label_extraction::PredictedLabel;
use crate::prompting::{label_set, PromptStrategy};

pub use scalar::Scalar;

const UNRESOLVED: &str = "Unresolved";
const UNRESOLVED_COL: usize = 3;

/// Counts indexed by (true class, predicted class or unresolved).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "BTreeMap<String, BTreeMap<String, usize>>")]
#[serde(try_from = "BTreeMap<String, BTreeMap<String, usize>>")]
pub struct ConfusionMatrix {
    counts: [[usize; 4]; 3],
}

fn column(predicted: Option<SeverityClass>) -> usize {
    predicted.map(SeverityClass::index).unwrap_or(UNRESOLVED_COL)
}

impl ConfusionMatrix {
    pub fn record(&mut self, truth: SeverityClass, predicted: Option<SeverityClass>) {
        self.counts[truth.index()][column(predicted)] += 1;
    }

    pub fn from_outcomes<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (SeverityClass, Option<SeverityClass>)>,
    {
        let mut cm = ConfusionMatrix::default();
        for (t, p) in pairs {
            cm.record(t, p);
        }
        cm
    }

    pub fn get(&self, truth: SeverityClass, predicted: Option<SeverityClass>) -> usize {
        self.counts[truth.index()][column(predicted)]
    }

    pub fn row_total(&self, truth: SeverityClass) -> usize {
        self.counts[truth.index()].iter().sum()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn unresolved(&self) -> usize {
        self.counts.iter().map(|row| row[UNRESOLVED_COL]).sum()
    }

    pub fn true_positives(&self, c: SeverityClass) -> usize {
        self.counts[c.index()][c.index()]
    }

    /// Other classes predicted as `c`.
    pub fn false_positives(&self, c: SeverityClass) -> usize {
        SeverityClass::ALL
            .iter()
            .filter(|t| **t != c)
            .map(|t| self.counts[t.index()][c.index()])
            .sum()
    }

    /// Instances of `c` predicted as anything else, unresolved included.
    pub fn false_negatives(&self, c: SeverityClass) -> usize {
        self.row_total(c) - self.true_positives(c)
    }
}

impl From<ConfusionMatrix> for BTreeMap<String, BTreeMap<String, usize>> {
    fn from(cm: ConfusionMatrix) -> Self {
        SeverityClass::ALL
            .iter()
            .map(|t| {
                let mut row: BTreeMap<String, usize> = SeverityClass::ALL
                    .iter()
                    .map(|p| (p.to_string(), cm.get(*t, Some(*p))))
                    .collect();
                row.insert(UNRESOLVED.to_string(), cm.get(*t, None));
                (t.to_string(), row)
            })
            .collect()
    }
}

impl TryFrom<BTreeMap<String, BTreeMap<String, usize>>> for ConfusionMatrix {
    type Error = String;

    fn try_from(map: BTreeMap<String, BTreeMap<String, usize>>) -> Result<Self, Self::Error> {
        let mut cm = ConfusionMatrix::default();
        for (t, row) in map {
            let truth: SeverityClass = t.parse()?;
            for (p, n) in row {
                let col = if p == UNRESOLVED { UNRESOLVED_COL } else { p.parse::<SeverityClass>()?.index() };
                cm.counts[truth.index()][col] = n;
            }
        }
        Ok(cm)
    }
}

/// Tabulates (truth, prediction) pairs.
pub fn confusion(pairs: &[(SeverityClass, PredictedLabel)]) -> ConfusionMatrix {
    ConfusionMatrix::from_outcomes(pairs.iter().map(|(t, p)| (*t, p.class())))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
    /// Class-specific accuracy; equal to recall.
    pub accuracy: T,
    pub precision_degenerate: bool,
    pub recall_degenerate: bool,
}

fn ratio<T: Scalar>(num: usize, den: usize) -> (T, bool) {
    if den == 0 {
        (T::zero(), true)
    } else {
        (T::from_count(num) / T::from_count(den), false)
    }
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_score<T: Scalar>(precision: T, recall: T) -> T {
    let sum = precision + recall;
    if sum == T::zero() {
        T::zero()
    } else {
        (T::one() + T::one()) * precision * recall / sum
    }
}

pub fn class_metrics<T: Scalar>(cm: &ConfusionMatrix, c: SeverityClass) -> ClassMetrics<T> {
    let tp = cm.true_positives(c);
    let (precision, precision_degenerate) = ratio::<T>(tp, tp + cm.false_positives(c));
    let (recall, recall_degenerate) = ratio::<T>(tp, tp + cm.false_negatives(c));
    ClassMetrics {
        precision,
        recall,
        f1: f1_score(precision, recall),
        accuracy: recall,
        precision_degenerate,
        recall_degenerate,
    }
}

/// Unweighted mean.
pub fn macro_average<T: Scalar>(values: &[T]) -> T {
    if values.is_empty() {
        return T::zero();
    }
    let sum = values.iter().fold(T::zero(), |acc, v| acc + *v);
    sum / T::from_count(values.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport<T> {
    pub strategy: PromptStrategy,
    pub model_id: String,
    pub n: usize,
    pub unresolved_count: usize,
    pub macro_accuracy: T,
    pub macro_f1: T,
    pub per_class: BTreeMap<SeverityClass, ClassMetrics<T>>,
    pub confusion: ConfusionMatrix,
}

impl<T: Scalar> EvaluationReport<T> {
    pub fn from_confusion(cm: ConfusionMatrix, strategy: PromptStrategy, model_id: impl Into<String>) -> Self {
        let per_class: BTreeMap<_, _> = SeverityClass::ALL
            .iter()
            .map(|c| (*c, class_metrics::<T>(&cm, *c)))
            .collect();
        let ordered = |f: fn(&ClassMetrics<T>) -> T| -> Vec<T> {
            SeverityClass::ALL.iter().map(|c| f(&per_class[c])).collect()
        };
        EvaluationReport {
            strategy,
            model_id: model_id.into(),
            n: cm.total(),
            unresolved_count: cm.unresolved(),
            macro_accuracy: macro_average(&ordered(|m| m.accuracy)),
            macro_f1: macro_average(&ordered(|m| m.f1)),
            per_class,
            confusion: cm,
        }
    }

    pub fn class(&self, c: SeverityClass) -> &ClassMetrics<T> {
        &self.per_class[&c]
    }
}

pub fn report<T: Scalar>(
    pairs: &[(SeverityClass, PredictedLabel)],
    strategy: PromptStrategy,
    model_id: &str,
) -> EvaluationReport<T> {
    EvaluationReport::from_confusion(confusion(pairs), strategy, model_id)
}

/// Results table: one row per (strategy, model).
pub fn markdown_table<T: Scalar>(reports: &[EvaluationReport<T>]) -> String {
    let labels = label_set(false);
    let mut out = format!(
        "| Setting | Model | Macro F1-score | Macro-accuracy | {} | {} | {} |\n",
        labels.fatal_display, labels.serious_display, labels.minor_display
    );
    out.push_str("|---|---|---:|---:|---:|---:|---:|\n");
    for r in reports {
        let _ = write!(
            out,
            "| {} | {} | {:.4} | {:.4} |",
            r.strategy,
            r.model_id,
            r.macro_f1.to_f64(),
            r.macro_accuracy.to_f64()
        );
        for c in SeverityClass::ALL {
            let _ = write!(out, " {:.2} |", r.class(c).accuracy.to_f64());
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;
    use proptest::prelude::*;
    use SeverityClass::*;

    fn resolved(c: SeverityClass) -> PredictedLabel {
        PredictedLabel::Resolved { class: c, span: (0, 1) }
    }

    #[test]
    fn empty_is_all_zero() {
        let cm = confusion(&[]);
        assert_eq!(cm.total(), 0);
        let r = report::<f64>(&[], PromptStrategy::ZS, "m");
        assert_eq!(r.macro_accuracy, 0.0);
        assert!(r.class(Fatal).precision_degenerate && r.class(Fatal).recall_degenerate);
    }

    #[test]
    fn perfect_diagonal() {
        let pairs: Vec<_> = SeverityClass::ALL.iter().map(|c| (*c, resolved(*c))).collect();
        let cm = confusion(&pairs);
        for c in SeverityClass::ALL {
            assert_eq!(cm.get(c, Some(c)), 1);
            let m = class_metrics::<f64>(&cm, c);
            assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn nine_pair_fixture_hand_tabulated() {
        let u = PredictedLabel::Unresolved;
        let pairs = [
            (Fatal, resolved(Fatal)),
            (Fatal, resolved(SeriousInjury)),
            (Fatal, u),
            (SeriousInjury, resolved(SeriousInjury)),
            (SeriousInjury, resolved(SeriousInjury)),
            (SeriousInjury, resolved(MinorOrNonInjury)),
            (MinorOrNonInjury, resolved(SeriousInjury)),
            (MinorOrNonInjury, resolved(MinorOrNonInjury)),
            (MinorOrNonInjury, resolved(Fatal)),
        ];
        let cm = confusion(&pairs);
        //            F  S  M  U
        // Fatal      1  1  0  1
        // Serious    0  2  1  0
        // Minor      1  1  1  0
        let expect = [[1, 1, 0, 1], [0, 2, 1, 0], [1, 1, 1, 0]];
        for t in SeverityClass::ALL {
            for (col, p) in [Some(Fatal), Some(SeriousInjury), Some(MinorOrNonInjury), None].iter().enumerate() {
                assert_eq!(cm.get(t, *p), expect[t.index()][col], "{t} -> {p:?}");
            }
        }
        assert_eq!(cm.unresolved(), 1);
        // Fatal: tp 1, fp 1, fn 2
        let f = class_metrics::<Rational64>(&cm, Fatal);
        assert_eq!(f.precision, Rational64::new(1, 2));
        assert_eq!(f.recall, Rational64::new(1, 3));
        assert_eq!(f.f1, Rational64::new(2, 5));
        // Serious: tp 2, fp 2, fn 1
        let s = class_metrics::<Rational64>(&cm, SeriousInjury);
        assert_eq!((s.precision, s.recall), (Rational64::new(1, 2), Rational64::new(2, 3)));
        let r = report::<Rational64>(&pairs, PromptStrategy::ZS, "m");
        // accuracies 1/3, 2/3, 1/3
        assert_eq!(r.macro_accuracy, Rational64::new(4, 9));
    }

    #[test]
    fn symmetric_five_five_five() {
        // tp 5, fp 5, fn 5 for Fatal
        let mut cm = ConfusionMatrix::default();
        for _ in 0..5 {
            cm.record(Fatal, Some(Fatal));
            cm.record(SeriousInjury, Some(Fatal));
            cm.record(Fatal, Some(MinorOrNonInjury));
        }
        let m = class_metrics::<f64>(&cm, Fatal);
        assert_eq!((m.precision, m.recall, m.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn fatal_accuracy_22_of_50() {
        let mut cm = ConfusionMatrix::default();
        for i in 0..50 {
            cm.record(Fatal, Some(if i < 22 { Fatal } else { SeriousInjury }));
        }
        assert_eq!(class_metrics::<f64>(&cm, Fatal).accuracy, 0.44);
    }

    fn cm_with_accuracies(correct: [usize; 3]) -> ConfusionMatrix {
        let mut cm = ConfusionMatrix::default();
        for (c, k) in SeverityClass::ALL.iter().zip(correct) {
            for i in 0..50 {
                cm.record(*c, if i < k { Some(*c) } else { None });
            }
        }
        cm
    }

    #[test]
    fn macro_accuracy_of_published_rows() {
        for (correct, expected) in [([22, 17, 29], 0.4533), ([0, 50, 1], 0.3400), ([20, 32, 19], 0.4733)] {
            let r = EvaluationReport::<f64>::from_confusion(cm_with_accuracies(correct), PromptStrategy::ZS, "m");
            assert!((r.macro_accuracy - expected).abs() < 5e-5, "{correct:?}: {}", r.macro_accuracy);
        }
    }

    #[test]
    fn unresolved_is_not_a_false_positive() {
        let cm = ConfusionMatrix::from_outcomes([(Fatal, None), (SeriousInjury, Some(SeriousInjury))]);
        for c in SeverityClass::ALL {
            assert_eq!(cm.false_positives(c), 0);
        }
        assert_eq!(cm.false_negatives(Fatal), 1);
    }

    #[test]
    fn confusion_json_round_trip() {
        let cm = ConfusionMatrix::from_outcomes([(Fatal, None), (MinorOrNonInjury, Some(Fatal))]);
        let json = serde_json::to_string(&cm).unwrap();
        assert!(json.contains(r#""Fatal":{"Fatal":0,"MinorOrNonInjury":0,"SeriousInjury":0,"Unresolved":1}"#));
        assert_eq!(serde_json::from_str::<ConfusionMatrix>(&json).unwrap(), cm);
    }

    #[test]
    fn markdown_shape() {
        let r = EvaluationReport::<f64>::from_confusion(cm_with_accuracies([22, 17, 29]), PromptStrategy::ZS, "llama3-70b");
        let md = markdown_table(&[r]);
        let lines: Vec<_> = md.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].contains("Macro F1-score | Macro-accuracy | Fatal accident"));
        assert!(lines[2].starts_with("| ZS | llama3-70b |"));
        assert!(lines[2].ends_with("| 0.4533 | 0.44 | 0.34 | 0.58 |"), "{}", lines[2]);
    }

    fn outcome() -> impl Strategy<Value = (SeverityClass, Option<SeverityClass>)> {
        let class = prop::sample::select(SeverityClass::ALL.to_vec());
        (class.clone(), prop::option::weighted(0.85, class))
    }

    proptest! {
        #[test]
        fn permutation_invariant(mut pairs in prop::collection::vec(outcome(), 0..80), seed in any::<u64>()) {
            let a = EvaluationReport::<f64>::from_confusion(ConfusionMatrix::from_outcomes(pairs.clone()), PromptStrategy::ZS, "m");
            use rand::{seq::SliceRandom, SeedableRng};
            pairs.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let b = EvaluationReport::<f64>::from_confusion(ConfusionMatrix::from_outcomes(pairs), PromptStrategy::ZS, "m");
            prop_assert_eq!(a, b);
        }

        #[test]
        fn bounds_hold(pairs in prop::collection::vec(outcome(), 1..120)) {
            let r = EvaluationReport::<f64>::from_confusion(ConfusionMatrix::from_outcomes(pairs), PromptStrategy::ZS, "m");
            let f1s: Vec<f64> = r.per_class.values().map(|m| m.f1).collect();
            for m in r.per_class.values() {
                for v in [m.precision, m.recall, m.f1, m.accuracy] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
            let lo = f1s.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = f1s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(r.macro_f1 >= lo - 1e-12 && r.macro_f1 <= hi + 1e-12);
            prop_assert!((0.0..=1.0).contains(&r.macro_accuracy));
        }
    }
}
