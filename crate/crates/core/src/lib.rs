//! Batch evaluation harness for LLM crash-severity classification.
//!
//! Tabular crash records are rendered into narratives, wrapped in one of the
//! prompting strategies, sent to a chat-completion endpoint (or a scripted
//! mock), and the free-text answers are mapped back to severity classes and
//! scored.
//!
//! Metric types are generic over [`metrics::Scalar`]; the aliases below fix
//! the scalar for everyday use.

pub mod crash_data;
pub mod label_extraction;
pub mod llm_client;
pub mod metrics;
pub mod narrative;
pub mod prompting;
pub mod reasoning_analysis;
pub mod runner;

pub use num_rational::Rational64;

pub use crash_data::{CrashRecord, Dataset, SeverityClass};
pub use label_extraction::PredictedLabel;
pub use prompting::{ChatPrompt, PromptStrategy};

/// Per-class metrics in `f64`.
pub type ClassMetrics = metrics::ClassMetrics<f64>;
/// Evaluation report in `f64`.
pub type EvaluationReport = metrics::EvaluationReport<f64>;
/// Per-class metrics in exact rational arithmetic.
pub type ExactClassMetrics = metrics::ClassMetrics<Rational64>;
/// Evaluation report in exact rational arithmetic.
pub type ExactEvaluationReport = metrics::EvaluationReport<Rational64>;
