//! The end-to-end translation pipeline.

use std::fmt;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::exec::{execute_sql, Outcome};
use super::extract::{extract_sql, one_line};
use crate::gateway::{
    Backend, Event, Exchange, GatewayError, TemplateId, TemplateSet, Trace, UsageRecord,
};
use crate::linking::{ground_truth_links, Linker};
use crate::masking::{mask, unmask_sql, LeakGuard, MaskedBundle};
use crate::model::{
    ConfigError, DatabaseSchema, Labels, LinkingMap, NlQuestion, PipelineConfig, PrivacyPolicy,
    SymbolTable,
};
use crate::schema::{rank_schema, serialize_schema, Ranker};

/// Pipeline stage, attached to errors and degradation events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Configuration,
    Generation,
    AbstractCorrection,
    Reconstruction,
    ConcreteCorrection,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Configuration => "configuration",
            Stage::Generation => "generation",
            Stage::AbstractCorrection => "abstract-correction",
            Stage::Reconstruction => "reconstruction",
            Stage::ConcreteCorrection => "concrete-correction",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage}: {source}")]
    Gateway {
        stage: Stage,
        #[source]
        source: GatewayError,
    },
    #[error("{stage}: no SQL statement in completion")]
    NoSql { stage: Stage, completion: String },
    #[error("configuration: {0}")]
    Config(#[from] ConfigError),
}

impl PipelineError {
    pub fn stage(&self) -> Stage {
        match self {
            PipelineError::Gateway { stage, .. } | PipelineError::NoSql { stage, .. } => *stage,
            PipelineError::Config(_) => Stage::Configuration,
        }
    }

    /// The leak guard refused an untrusted call.
    pub fn is_leak_refusal(&self) -> bool {
        matches!(self, PipelineError::Gateway { source, .. } if source.is_leak_refusal())
    }
}

/// Where the masking function comes from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum MaskingMode {
    /// Linking plus the privacy policy.
    #[default]
    Policy,
    /// Exactly the annotated tokens, bypassing linking.
    GroundTruth(Vec<String>),
    /// Nothing is masked; leaks are logged rather than refused.
    Disabled,
}

/// Output of the abstraction stage: everything the untrusted model may see,
/// plus the trusted-side state needed to undo it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Abstraction {
    /// Schema after relevance filtering.
    pub schema: DatabaseSchema,
    pub links: LinkingMap,
    pub labels: Labels,
    pub bundle: MaskedBundle,
    /// Strictness of the guard for untrusted calls.
    pub strict_guard: bool,
    /// Policy the guard enforces.
    pub policy: PrivacyPolicy,
}

impl Abstraction {
    pub fn guard(&self) -> LeakGuard {
        LeakGuard::new(
            &self.schema,
            &self.policy,
            &self.labels,
            &self.bundle.symbol_table,
            self.strict_guard,
        )
    }
}

/// Serializable copy of a [`Trace`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub exchanges: Vec<Exchange>,
    pub events: Vec<Event>,
    pub usage: Vec<UsageRecord>,
}

impl From<&Trace> for Audit {
    fn from(trace: &Trace) -> Self {
        Audit {
            exchanges: trace.exchanges(),
            events: trace.events(),
            usage: trace.ledger.records(),
        }
    }
}

/// Every intermediate form of one translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Translation {
    pub question: String,
    pub abstraction: Abstraction,
    pub abstract_sql: String,
    pub corrected_abstract_sql: String,
    /// Symbols in the corrected abstract SQL the symbol table does not know.
    pub unknown_symbols: Vec<String>,
    pub reconstructed_sql: String,
    pub first_outcome: Outcome,
    pub final_sql: String,
    pub outcome: Outcome,
}

/// Backends, templates, policy and knobs for translating questions.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: PipelineConfig,
    pub policy: PrivacyPolicy,
    pub templates: TemplateSet,
    pub untrusted: Backend,
    /// Local model for linking, classification and concrete correction.
    /// Without one, linking is fuzzy and concrete correction is skipped.
    pub trusted: Option<Backend>,
    pub ranker: Ranker,
}

/// `T1 -> Patients` lines for the model-unmask prompt.
fn mapping_text(symbols: &SymbolTable) -> String {
    let mut lines: Vec<String> = Vec::new();
    for (name, symbol) in symbols.tables() {
        lines.push(format!("{symbol} -> {name}"));
    }
    for (table, column, symbol) in symbols.columns() {
        lines.push(format!("{symbol} -> {table}.{column}"));
    }
    for (literal, entry) in symbols.values() {
        lines.push(format!(
            "{} -> '{}'",
            entry.symbol,
            literal.replace('\'', "''")
        ));
    }
    lines.join("\n")
}

impl Pipeline {
    pub fn new(untrusted: Backend) -> Self {
        Pipeline {
            config: PipelineConfig::default(),
            policy: PrivacyPolicy::full(),
            templates: TemplateSet::default(),
            untrusted,
            trusted: None,
            ranker: Ranker::Lexical,
        }
    }

    fn linker<'a>(&'a self, trace: &'a Trace) -> Linker<'a> {
        Linker {
            backend: self.trusted.as_ref(),
            templates: &self.templates,
            config: &self.config,
            trace,
        }
    }

    fn exec_timeout(&self) -> Duration {
        Duration::from_secs(self.config.exec_timeout_secs)
    }

    /// Filter, link, classify and mask. Makes no untrusted calls.
    pub fn abstraction(
        &self,
        question: &NlQuestion,
        schema: &DatabaseSchema,
        mode: &MaskingMode,
        trace: &Trace,
    ) -> Abstraction {
        let filtered = if self.config.enable_schema_filtering {
            rank_schema(question, schema, &self.config, &self.ranker, trace).retained
        } else {
            schema.clone()
        };
        let linker = self.linker(trace);
        let (links, policy, mask_policy, labels, strict) = match mode {
            MaskingMode::Policy => {
                let links = linker.link(question, &filtered);
                let literals: Vec<&str> = links
                    .value_links
                    .iter()
                    .map(|v| v.literal.as_str())
                    .collect();
                let labels = linker.labels(&self.policy, &filtered, &literals);
                let p = self.policy.clone();
                (links, p.clone(), p, labels, self.config.strict_leak_guard)
            }
            MaskingMode::GroundTruth(tokens) => {
                let links = ground_truth_links(question, &filtered, tokens);
                let p = PrivacyPolicy::full();
                (
                    links,
                    p.clone(),
                    p,
                    Labels::new(),
                    self.config.strict_leak_guard,
                )
            }
            MaskingMode::Disabled => {
                let nothing = PrivacyPolicy::custom(
                    Vec::<String>::new(),
                    Vec::<(String, String)>::new(),
                    false,
                );
                (
                    LinkingMap::default(),
                    self.policy.clone(),
                    nothing,
                    Labels::new(),
                    false,
                )
            }
        };
        let bundle = mask(question, &filtered, &links, &mask_policy, &labels);
        Abstraction {
            schema: filtered,
            links,
            labels,
            bundle,
            strict_guard: strict,
            policy,
        }
    }

    /// Abstract SQL from the untrusted model.
    pub fn generate_abstract_sql(
        &self,
        abstraction: &Abstraction,
        trace: &Trace,
    ) -> Result<String, PipelineError> {
        let bundle = &abstraction.bundle;
        let question = bundle.prompt_question();
        let schema = bundle.prompt_schema();
        let prompt = self
            .templates
            .render(
                TemplateId::SqlGeneration,
                &[("NL_QUESTION", &question), ("DB_SCHEMA", &schema)],
            )
            .map_err(|e| PipelineError::Gateway {
                stage: Stage::Generation,
                source: e.into(),
            })?;
        let completion = self
            .untrusted
            .complete(&prompt, Some(&abstraction.guard()), trace)
            .map_err(|source| PipelineError::Gateway {
                stage: Stage::Generation,
                source,
            })?;
        extract_sql(&completion).ok_or(PipelineError::NoSql {
            stage: Stage::Generation,
            completion,
        })
    }

    /// One untrusted correction round over the abstract SQL. Any failure
    /// keeps `candidate`.
    pub fn correct_abstract_sql(
        &self,
        abstraction: &Abstraction,
        candidate: &str,
        trace: &Trace,
    ) -> String {
        let bundle = &abstraction.bundle;
        let question = bundle.prompt_question();
        let schema = bundle.prompt_schema();
        let reply = self
            .templates
            .render(
                TemplateId::AbstractCorrection,
                &[
                    ("schema", &schema),
                    ("question", &question),
                    ("sql", candidate),
                ],
            )
            .map_err(GatewayError::from)
            .and_then(|p| {
                self.untrusted
                    .complete(&p, Some(&abstraction.guard()), trace)
            });
        match reply.map(|r| extract_sql(&r)) {
            Ok(Some(sql)) => sql,
            Ok(None) => candidate.to_string(),
            Err(e) => {
                trace.degrade("llm-correction", e.to_string());
                candidate.to_string()
            }
        }
    }

    /// Concrete SQL from abstract SQL: symbol substitution, or the trusted
    /// model when substitution is switched off. Returns the SQL and the
    /// unknown symbols found.
    pub fn reconstruct_sql(
        &self,
        symbols: &SymbolTable,
        abstract_sql: &str,
        trace: &Trace,
    ) -> (String, Vec<String>) {
        let substituted = unmask_sql(abstract_sql, symbols);
        if self.config.enable_sql_reconstruction {
            return (substituted.sql, substituted.unknown);
        }
        let Some(trusted) = &self.trusted else {
            trace.degrade(
                "sql-reconstruction",
                "no trusted backend for model unmasking",
            );
            return (abstract_sql.to_string(), substituted.unknown);
        };
        let mapping = mapping_text(symbols);
        let reply = self
            .templates
            .render(
                TemplateId::ModelUnmask,
                &[("mapping", &mapping), ("sql", abstract_sql)],
            )
            .map_err(GatewayError::from)
            .and_then(|p| trusted.complete(&p, None, trace));
        match reply.map(|r| extract_sql(&r)) {
            Ok(Some(sql)) => (sql, substituted.unknown),
            Ok(None) => (abstract_sql.to_string(), substituted.unknown),
            Err(e) => {
                trace.degrade("sql-reconstruction", e.to_string());
                (abstract_sql.to_string(), substituted.unknown)
            }
        }
    }

    /// One trusted correction round with execution feedback. Any failure
    /// keeps `candidate`.
    pub fn correct_concrete_sql(
        &self,
        question: &str,
        schema: &DatabaseSchema,
        candidate: &str,
        outcome: &Outcome,
        trace: &Trace,
    ) -> String {
        let Some(trusted) = &self.trusted else {
            trace.degrade("slm-correction", "no trusted backend");
            return candidate.to_string();
        };
        let yaml = serialize_schema(schema, true);
        let feedback = outcome.feedback();
        let reply = self
            .templates
            .render(
                TemplateId::ConcreteCorrection,
                &[
                    ("schema", &yaml),
                    ("question", question),
                    ("sql", candidate),
                    ("exec_res", &feedback),
                ],
            )
            .map_err(GatewayError::from)
            .and_then(|p| trusted.complete(&p, None, trace));
        match reply.map(|r| extract_sql(&r)) {
            Ok(Some(sql)) => one_line(&sql),
            Ok(None) => candidate.to_string(),
            Err(e) => {
                trace.degrade("slm-correction", e.to_string());
                candidate.to_string()
            }
        }
    }

    /// Translate `question` over `schema` and execute on `db`. Every call
    /// and event lands in `trace`, including for failed translations.
    pub fn translate_traced(
        &self,
        question: &str,
        schema: &DatabaseSchema,
        db: &Path,
        mode: &MaskingMode,
        trace: &Trace,
    ) -> Result<Translation, PipelineError> {
        self.config.validate()?;
        let q = NlQuestion::new(question);
        let abstraction = self.abstraction(&q, schema, mode, trace);
        self.finish(question, abstraction, db, trace)
    }

    /// Everything after abstraction: generation, corrections,
    /// reconstruction and execution.
    pub fn finish(
        &self,
        question: &str,
        abstraction: Abstraction,
        db: &Path,
        trace: &Trace,
    ) -> Result<Translation, PipelineError> {
        let abstract_sql = self.generate_abstract_sql(&abstraction, trace)?;
        let corrected_abstract_sql = if self.config.enable_llm_correction {
            self.correct_abstract_sql(&abstraction, &abstract_sql, trace)
        } else {
            abstract_sql.clone()
        };
        let (reconstructed_sql, unknown_symbols) = self.reconstruct_sql(
            &abstraction.bundle.symbol_table,
            &corrected_abstract_sql,
            trace,
        );
        let first_outcome = execute_sql(&reconstructed_sql, db, self.exec_timeout());
        let (final_sql, outcome) = if self.config.enable_slm_correction {
            let fixed = self.correct_concrete_sql(
                question,
                &abstraction.schema,
                &reconstructed_sql,
                &first_outcome,
                trace,
            );
            if fixed == reconstructed_sql {
                (fixed, first_outcome.clone())
            } else {
                let outcome = execute_sql(&fixed, db, self.exec_timeout());
                (fixed, outcome)
            }
        } else {
            (reconstructed_sql.clone(), first_outcome.clone())
        };
        Ok(Translation {
            question: question.to_string(),
            abstraction,
            abstract_sql,
            corrected_abstract_sql,
            unknown_symbols,
            reconstructed_sql,
            first_outcome,
            final_sql,
            outcome,
        })
    }

    /// [`translate_traced`](Self::translate_traced) with a fresh trace,
    /// returned alongside the result.
    pub fn translate(
        &self,
        question: &str,
        schema: &DatabaseSchema,
        db: &Path,
        mode: &MaskingMode,
    ) -> (Result<Translation, PipelineError>, Audit) {
        let trace = Trace::new();
        let result = self.translate_traced(question, schema, db, mode, &trace);
        (result, Audit::from(&trace))
    }
}
