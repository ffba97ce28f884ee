use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::crash_data::SeverityMapping;
use crate::llm_client::{DecodingParams, ModelSpec};
use crate::prompting::PromptStrategy;

use super::RunError;

fn default_n_per_class() -> usize {
    50
}

fn default_strategies() -> Vec<PromptStrategy> {
    PromptStrategy::PAPER.to_vec()
}

fn default_parallelism() -> usize {
    4
}

fn default_max_retries() -> u32 {
    3
}

fn default_timeout() -> u64 {
    120
}

fn default_top_k() -> usize {
    50
}

/// One experiment, loaded from a single JSON document.
///
/// Relative paths are resolved against the directory holding the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_map_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity_mapping: Option<SeverityMapping>,
    #[serde(default = "default_n_per_class")]
    pub n_per_class: usize,
    pub seed: u64,
    /// Defaults to `seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exemplar_seed: Option<u64>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<PromptStrategy>,
    /// Permits FS_CoT and FS_PE_CoT.
    #[serde(default)]
    pub allow_extra_paper: bool,
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub params: DecodingParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knowledge_facts_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display_mappings_path: Option<PathBuf>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub min_request_interval_ms: u64,
    #[serde(default = "default_timeout")]
    pub request_timeout_s: u64,
    /// Rows per term-frequency TSV.
    #[serde(default = "default_top_k")]
    pub top_k_terms: usize,
}

impl ExperimentConfig {
    /// Minimal config; everything else takes its default.
    pub fn new(data_path: impl Into<PathBuf>, output_dir: impl Into<PathBuf>, seed: u64, models: Vec<ModelSpec>) -> Self {
        ExperimentConfig {
            data_path: data_path.into(),
            schema_map_path: None,
            severity_mapping: None,
            n_per_class: default_n_per_class(),
            seed,
            exemplar_seed: None,
            strategies: default_strategies(),
            allow_extra_paper: false,
            models,
            params: DecodingParams::default(),
            cache_path: None,
            output_dir: output_dir.into(),
            knowledge_facts_path: None,
            template_path: None,
            display_mappings_path: None,
            parallelism: default_parallelism(),
            max_retries: default_max_retries(),
            min_request_interval_ms: 0,
            request_timeout_s: default_timeout(),
            top_k_terms: default_top_k(),
        }
    }

    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, RunError> {
        let mut cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| RunError::Config(format!("invalid config: {e}")))?;
        cfg.resolve_paths(base_dir);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        ExperimentConfig::from_json(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data_path);
        fix(&mut self.output_dir);
        for p in [
            &mut self.schema_map_path,
            &mut self.cache_path,
            &mut self.knowledge_facts_path,
            &mut self.template_path,
            &mut self.display_mappings_path,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn exemplar_seed(&self) -> u64 {
        self.exemplar_seed.unwrap_or(self.seed)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let fail = |m: String| Err(RunError::Config(m));
        if self.strategies.is_empty() {
            return fail("no strategies selected".into());
        }
        let mut seen = HashSet::new();
        for s in &self.strategies {
            if !seen.insert(*s) {
                return fail(format!("strategy {s} listed twice"));
            }
            if s.is_extra_paper() && !self.allow_extra_paper {
                return fail(format!("strategy {s} is outside the standard six; set allow_extra_paper"));
            }
        }
        if self.models.is_empty() {
            return fail("no models configured".into());
        }
        let mut ids = HashSet::new();
        for m in &self.models {
            if !ids.insert(m.model_id.as_str()) {
                return fail(format!("model `{}` listed twice", m.model_id));
            }
            m.effective_params(&self.params)
                .validate()
                .map_err(|e| RunError::Config(format!("model `{}`: {e}", m.model_id)))?;
        }
        if self.n_per_class == 0 {
            return fail("n_per_class must be positive".into());
        }
        if self.parallelism == 0 {
            return fail("parallelism must be positive".into());
        }
        if self.top_k_terms == 0 {
            return fail("top_k_terms must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_relative_paths() {
        let cfg = ExperimentConfig::from_json(
            r#"{"data_path": "data.csv", "seed": 7, "output_dir": "/abs/out",
                "models": [{"model_id": "gpt-3.5-turbo", "auth_ref": "OPENAI_API_KEY", "top_p": 0.01}]}"#,
            Path::new("/cfg"),
        )
        .unwrap();
        assert_eq!(cfg.data_path, PathBuf::from("/cfg/data.csv"));
        assert_eq!(cfg.output_dir, PathBuf::from("/abs/out"));
        assert_eq!(cfg.n_per_class, 50);
        assert_eq!(cfg.parallelism, 4);
        assert_eq!(cfg.strategies, PromptStrategy::PAPER);
        assert_eq!(cfg.exemplar_seed(), 7);
        assert_eq!(cfg.params, DecodingParams::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn extra_paper_needs_flag() {
        let mut cfg = ExperimentConfig::new("d", "o", 1, vec![ModelSpec::new("m")]);
        cfg.strategies = vec![PromptStrategy::FS_COT];
        assert!(matches!(cfg.validate(), Err(RunError::Config(_))));
        cfg.allow_extra_paper = true;
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_bad_configs() {
        let base = ExperimentConfig::new("d", "o", 1, vec![ModelSpec::new("m")]);
        let mut c = base.clone();
        c.strategies = vec![PromptStrategy::ZS, PromptStrategy::ZS];
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.models.clear();
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.models[0].top_p = Some(2.0);
        assert!(c.validate().is_err());
        let mut c = base;
        c.parallelism = 0;
        assert!(c.validate().is_err());
        assert!(ExperimentConfig::from_json(r#"{"seed": 1}"#, Path::new(".")).is_err());
        assert!(ExperimentConfig::from_json(
            r#"{"data_path":"d","seed":1,"output_dir":"o","models":[],"strategies":["ZS_XX"]}"#,
            Path::new(".")
        )
        .is_err());
    }
}
