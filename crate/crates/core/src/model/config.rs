use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("top_k_tables must be at least 1")]
    ZeroTables,
    #[error("top_j_columns must be at least 1")]
    ZeroColumns,
    #[error("temperature must be non-negative, got {0}")]
    NegativeTemperature(f64),
    #[error("fuzzy_threshold must lie in [0, 1], got {0}")]
    Threshold(f64),
}

/// Pipeline knobs. Every stage toggle defaults to enabled; switching one off
/// reproduces the matching ablation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub top_k_tables: usize,
    pub top_j_columns: usize,
    pub enable_schema_filtering: bool,
    pub enable_value_detection: bool,
    pub enable_value_linking: bool,
    pub enable_llm_correction: bool,
    /// Deterministic symbol substitution; when off the trusted model is
    /// asked to unmask the SQL instead.
    pub enable_sql_reconstruction: bool,
    pub enable_slm_correction: bool,
    pub temperature: f64,
    pub max_retries: u32,
    /// Refuse untrusted calls whose prompt leaks a sensitive token.
    pub strict_leak_guard: bool,
    /// Minimum lexical similarity for the fuzzy reference linker.
    pub fuzzy_threshold: f64,
    /// Classification failures count as in-policy instead of ε.
    pub strict_classification: bool,
    pub sidecar_timeout_secs: u64,
    pub exec_timeout_secs: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            top_k_tables: 4,
            top_j_columns: 5,
            enable_schema_filtering: true,
            enable_value_detection: true,
            enable_value_linking: true,
            enable_llm_correction: true,
            enable_sql_reconstruction: true,
            enable_slm_correction: true,
            temperature: 0.0,
            max_retries: 2,
            strict_leak_guard: true,
            fuzzy_threshold: 0.8,
            strict_classification: false,
            sidecar_timeout_secs: 10,
            exec_timeout_secs: 30,
        }
    }
}

/// Names accepted by [`PipelineConfig::disable`].
pub const STAGES: [&str; 6] = [
    "schema-filtering",
    "value-detection",
    "value-linking",
    "llm-correction",
    "sql-reconstruction",
    "slm-correction",
];

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.top_k_tables == 0 {
            return Err(ConfigError::ZeroTables);
        }
        if self.top_j_columns == 0 {
            return Err(ConfigError::ZeroColumns);
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(ConfigError::NegativeTemperature(self.temperature));
        }
        if !(0.0..=1.0).contains(&self.fuzzy_threshold) {
            return Err(ConfigError::Threshold(self.fuzzy_threshold));
        }
        Ok(())
    }

    /// Switch off a stage by its CLI name. Returns false for unknown names.
    pub fn disable(&mut self, stage: &str) -> bool {
        let flag = match stage.trim() {
            "schema-filtering" => &mut self.enable_schema_filtering,
            "value-detection" => &mut self.enable_value_detection,
            "value-linking" => &mut self.enable_value_linking,
            "llm-correction" => &mut self.enable_llm_correction,
            "sql-reconstruction" => &mut self.enable_sql_reconstruction,
            "slm-correction" => &mut self.enable_slm_correction,
            _ => return false,
        };
        *flag = false;
        true
    }
}
