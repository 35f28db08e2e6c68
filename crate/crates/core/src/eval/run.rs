//! Corpus loading and benchmark runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::compare::results_match;
use super::metrics::{masking_recall, reident_attack, reident_score};
use crate::gateway::{Backend, Event, Trace, UsageTotals};
use crate::model::{DatabaseSchema, NlQuestion};
use crate::par;
use crate::schema::ingest_schema;
use crate::sql::{execute_sql, MaskingMode, Outcome, Pipeline, PipelineError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// One benchmark question with its gold query and annotated sensitive
/// tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedExample {
    pub question: String,
    pub gold_sql: String,
    pub db_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<String>,
    #[serde(default)]
    pub gt_sensitive_tokens: Vec<String>,
}

impl AnnotatedExample {
    /// The question with the evidence appended.
    pub fn full_question(&self) -> String {
        match self.evidence.as_deref().map(str::trim) {
            Some(e) if !e.is_empty() => format!("{} {}", self.question.trim_end(), e),
            _ => self.question.clone(),
        }
    }
}

/// Read a JSONL corpus, one example per non-blank line.
pub fn load_corpus(path: &Path) -> Result<Vec<AnnotatedExample>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|source| EvalError::Json {
                path: path.to_path_buf(),
                line: n + 1,
                source,
            })
        })
        .collect()
}

/// `<db_dir>/<db_id>.sqlite`.
pub fn database_path(db_dir: &Path, db_id: &str) -> PathBuf {
    db_dir.join(format!("{db_id}.sqlite"))
}

/// How masking is decided during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskingKind {
    #[default]
    Policy,
    GroundTruth,
    Disabled,
}

#[derive(Debug, Clone)]
pub struct BenchmarkOptions {
    pub masking: MaskingKind,
    pub jobs: usize,
    /// Run the re-identification attack on every masked question.
    pub attacker: Option<Backend>,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self {
            masking: MaskingKind::Policy,
            jobs: par::default_jobs(),
            attacker: None,
        }
    }
}

/// Outcome of one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub index: usize,
    pub db_id: String,
    pub question: String,
    pub masked_question: Option<String>,
    pub predicted_sql: Option<String>,
    pub correct: bool,
    pub error: Option<String>,
    /// The gold query itself failed; the example is invalid.
    pub invalid_gold: bool,
    pub leak_refusal: bool,
    pub leak_violations: usize,
    pub masking_recall: Option<f64>,
    pub reident_score: Option<f64>,
    /// Pipeline calls only; attacker calls are excluded.
    pub usage: UsageTotals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub examples: usize,
    pub correct: usize,
    /// Execution accuracy in percent.
    pub ex: f64,
    /// Mean masking recall over examples with ground truth.
    pub mean_mr: Option<f64>,
    pub mr_skipped: usize,
    /// Mean re-identification score over attacked examples with symbols.
    pub mean_ri: Option<f64>,
    pub ri_skipped: usize,
    pub mean_tokens: f64,
    pub total_tokens: u64,
    pub approximate_tokens: bool,
    pub failures: usize,
    pub invalid_gold: usize,
    pub leak_refusals: usize,
    pub leak_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub aggregates: Aggregates,
    pub records: Vec<ExampleRecord>,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| par::stable_sum(values) / values.len() as f64)
}

/// Aggregates depend only on the multiset of records, so any permutation
/// of the corpus gives identical numbers.
pub fn aggregate(records: &[ExampleRecord]) -> Aggregates {
    let n = records.len();
    let correct = records.iter().filter(|r| r.correct).count();
    let mrs: Vec<f64> = records.iter().filter_map(|r| r.masking_recall).collect();
    let ris: Vec<f64> = records.iter().filter_map(|r| r.reident_score).collect();
    let usage = records
        .iter()
        .fold(UsageTotals::default(), |acc, r| acc.merge(r.usage));
    Aggregates {
        examples: n,
        correct,
        ex: if n == 0 {
            0.0
        } else {
            100.0 * correct as f64 / n as f64
        },
        mean_mr: mean(&mrs),
        mr_skipped: n - mrs.len(),
        mean_ri: mean(&ris),
        ri_skipped: n - ris.len(),
        mean_tokens: if n == 0 {
            0.0
        } else {
            usage.total_tokens() as f64 / n as f64
        },
        total_tokens: usage.total_tokens(),
        approximate_tokens: usage.approximate,
        failures: records.iter().filter(|r| r.error.is_some()).count(),
        invalid_gold: records.iter().filter(|r| r.invalid_gold).count(),
        leak_refusals: records.iter().filter(|r| r.leak_refusal).count(),
        leak_violations: records.iter().map(|r| r.leak_violations).sum(),
    }
}

fn count_violations(trace: &Trace) -> usize {
    trace
        .events()
        .iter()
        .filter(|e| matches!(e, Event::LeakViolation { .. }))
        .count()
}

fn run_one(
    index: usize,
    example: &AnnotatedExample,
    schema: Result<&DatabaseSchema, &String>,
    db: &Path,
    pipeline: &Pipeline,
    options: &BenchmarkOptions,
) -> ExampleRecord {
    let question = example.full_question();
    let mut record = ExampleRecord {
        index,
        db_id: example.db_id.clone(),
        question: question.clone(),
        masked_question: None,
        predicted_sql: None,
        correct: false,
        error: None,
        invalid_gold: false,
        leak_refusal: false,
        leak_violations: 0,
        masking_recall: None,
        reident_score: None,
        usage: UsageTotals::default(),
    };
    let schema = match schema {
        Ok(s) => s,
        Err(e) => {
            record.error = Some(e.clone());
            return record;
        }
    };
    let mode = match options.masking {
        MaskingKind::Policy => MaskingMode::Policy,
        MaskingKind::GroundTruth => MaskingMode::GroundTruth(example.gt_sensitive_tokens.clone()),
        MaskingKind::Disabled => MaskingMode::Disabled,
    };
    let trace = Trace::new();
    let nl = NlQuestion::new(question.as_str());
    let abstraction = pipeline.abstraction(&nl, schema, &mode, &trace);
    let masked: Vec<_> = abstraction
        .bundle
        .masked_spans
        .iter()
        .map(|m| m.span)
        .collect();
    record.masking_recall = masking_recall(&nl, &masked, &example.gt_sensitive_tokens);
    record.masked_question = Some(abstraction.bundle.masked_question.clone());
    if let Some(attacker) = &options.attacker {
        let attack_trace = Trace::new();
        let attack = reident_attack(
            &abstraction.bundle,
            attacker,
            Some(&abstraction.guard()),
            &pipeline.templates,
            &attack_trace,
        );
        record.reident_score = reident_score(&abstraction.bundle, &attack);
    }
    let result = pipeline
        .config
        .validate()
        .map_err(PipelineError::from)
        .and_then(|()| pipeline.finish(&question, abstraction, db, &trace));
    match result {
        Ok(t) => {
            let timeout = std::time::Duration::from_secs(pipeline.config.exec_timeout_secs);
            match execute_sql(&example.gold_sql, db, timeout) {
                Outcome::Rows { rows: gold } => {
                    record.correct = t.outcome.rows().is_some_and(|p| results_match(p, &gold));
                }
                other => {
                    record.invalid_gold = true;
                    record.error = Some(format!("gold SQL failed: {}", other.feedback()));
                }
            }
            record.predicted_sql = Some(t.final_sql);
        }
        Err(e) => {
            record.leak_refusal = e.is_leak_refusal();
            record.error = Some(e.to_string());
        }
    }
    record.leak_violations = count_violations(&trace);
    record.usage = trace.ledger.totals();
    record
}

/// Translate and score every example, `options.jobs` at a time. Failures
/// are recorded per example and never abort the run.
pub fn run_benchmark(
    corpus: &[AnnotatedExample],
    db_dir: &Path,
    pipeline: &Pipeline,
    options: &BenchmarkOptions,
) -> Report {
    let mut schemas: BTreeMap<&str, Result<DatabaseSchema, String>> = BTreeMap::new();
    for example in corpus {
        schemas.entry(example.db_id.as_str()).or_insert_with(|| {
            ingest_schema(&database_path(db_dir, &example.db_id)).map_err(|e| e.to_string())
        });
    }
    let indexed: Vec<(usize, &AnnotatedExample)> = corpus.iter().enumerate().collect();
    let records = par::map(&indexed, options.jobs, |&(i, example)| {
        let schema = schemas[example.db_id.as_str()].as_ref();
        run_one(
            i,
            example,
            schema,
            &database_path(db_dir, &example.db_id),
            pipeline,
            options,
        )
    });
    Report {
        aggregates: aggregate(&records),
        records,
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{:.2}", 100.0 * v))
}

/// Plain-text summary of a report.
pub fn render_text(report: &Report) -> String {
    let a = &report.aggregates;
    let mut out = String::new();
    let rows = [
        ("examples", a.examples.to_string()),
        ("EX (%)", format!("{:.2}", a.ex)),
        ("MR (%)", pct(a.mean_mr)),
        ("RI (%)", pct(a.mean_ri)),
        (
            "tokens / query",
            format!(
                "{:.1}{}",
                a.mean_tokens,
                if a.approximate_tokens {
                    " (approx.)"
                } else {
                    ""
                }
            ),
        ),
        ("MR skipped", a.mr_skipped.to_string()),
        ("RI skipped", a.ri_skipped.to_string()),
        ("failures", a.failures.to_string()),
        ("invalid gold", a.invalid_gold.to_string()),
        ("leak refusals", a.leak_refusals.to_string()),
        ("leak violations", a.leak_violations.to_string()),
    ];
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, v) in rows {
        let _ = writeln!(out, "{k:<width$}  {v}");
    }
    out.push('\n');
    let _ = writeln!(
        out,
        "{:>4}  {:<5}  {:>7}  {:>7}  question",
        "#", "EX", "MR", "RI"
    );
    for r in &report.records {
        let _ = writeln!(
            out,
            "{:>4}  {:<5}  {:>7}  {:>7}  {}",
            r.index,
            if r.correct { "ok" } else { "miss" },
            pct(r.masking_recall),
            pct(r.reident_score),
            r.question
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(correct: bool, mr: Option<f64>, tokens: u64) -> ExampleRecord {
        ExampleRecord {
            index: 0,
            db_id: "d".into(),
            question: "q".into(),
            masked_question: None,
            predicted_sql: None,
            correct,
            error: None,
            invalid_gold: false,
            leak_refusal: false,
            leak_violations: 0,
            masking_recall: mr,
            reident_score: None,
            usage: UsageTotals {
                calls: 1,
                prompt_tokens: tokens,
                completion_tokens: 0,
                approximate: false,
            },
        }
    }

    #[test]
    fn aggregates_skip_missing_metrics() {
        let a = aggregate(&[
            record(true, Some(1.0), 10),
            record(false, None, 20),
            record(true, Some(0.5), 30),
        ]);
        assert_eq!(a.correct, 2);
        assert!((a.ex - 200.0 / 3.0).abs() < 1e-9);
        assert_eq!(a.mean_mr, Some(0.75));
        assert_eq!(a.mr_skipped, 1);
        assert_eq!(a.mean_ri, None);
        assert_eq!(a.mean_tokens, 20.0);
    }

    #[test]
    fn evidence_is_appended() {
        let e = AnnotatedExample {
            question: "How many?".into(),
            gold_sql: "SELECT 1".into(),
            db_id: "d".into(),
            evidence: Some("x refers to y".into()),
            gt_sensitive_tokens: vec![],
        };
        assert_eq!(e.full_question(), "How many? x refers to y");
    }
}
