//! `sqlveil`: translate questions to SQL without showing sensitive schema
//! names or values to the untrusted model, audit the masking, and run
//! benchmark and re-identification evaluations.
//!
//! Exit codes: 0 success, 1 failure, 2 leak-guard refusal, 3 residual
//! sensitive text under `mask --strict`, 64 usage error.

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use sqlveil::eval::{
    database_path, load_corpus, reident_attack, reident_score, render_text, run_benchmark,
    AnnotatedExample, BenchmarkOptions, EvalError, MaskingKind,
};
use sqlveil::gateway::{Role, Trace};
use sqlveil::model::PolicyError;
use sqlveil::schema::{ingest_schema, IngestError};
use sqlveil::sql::{Audit, MaskingMode, PipelineError, Translation};
use sqlveil::{par, DatabaseSchema, NlQuestion};
use thiserror::Error;

use config::{parse_policy, parse_stage, unused_untrusted, Config, PolicyArg};

const EXIT_OK: u8 = 0;
const EXIT_FAILURE: u8 = 1;
const EXIT_LEAK_REFUSAL: u8 = 2;
const EXIT_RESIDUAL: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("configuration: {0}")]
    Config(String),
    #[error("schema: {0}")]
    Ingest(#[from] IngestError),
    #[error("policy: {0}")]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sqlveil", version, about = "Privacy-preserving text-to-SQL")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Translate one question and print the final SQL.
    Translate(TranslateArgs),
    /// Print the masked question, masked schema and symbol table without
    /// calling the untrusted model.
    Mask(MaskArgs),
    /// Run a benchmark corpus and write report.json and report.txt.
    Eval(EvalArgs),
    /// Run the re-identification attack over a corpus.
    Attack(AttackArgs),
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `full`, `category`, `category:a,b` or `custom:<file>`; defaults to
    /// the configured policy, else `full`.
    #[arg(long, value_parser = parse_policy)]
    policy: Option<PolicyArg>,
    /// Stages to switch off, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_stage)]
    ablate: Vec<String>,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct QuestionArgs {
    #[arg(long)]
    question: Option<String>,
    /// File holding the question; surrounding whitespace is trimmed.
    #[arg(long)]
    question_file: Option<PathBuf>,
}

impl QuestionArgs {
    fn read(&self) -> Result<String, CliError> {
        match (&self.question, &self.question_file) {
            (Some(q), _) => Ok(q.clone()),
            (None, Some(path)) => Ok(fs::read_to_string(path)
                .map_err(|e| CliError::io(path, e))?
                .trim()
                .to_string()),
            (None, None) => Err(CliError::Usage(
                "one of --question or --question-file is required".into(),
            )),
        }
    }
}

#[derive(Debug, Args)]
struct TranslateArgs {
    /// SQLite database to translate against.
    #[arg(long)]
    db: PathBuf,
    #[command(flatten)]
    question: QuestionArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Directory for audit.json.
    #[arg(long)]
    audit: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MaskArgs {
    #[arg(long)]
    db: PathBuf,
    #[command(flatten)]
    question: QuestionArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Directory for audit.json.
    #[arg(long)]
    audit: Option<PathBuf>,
    /// Exit 3 when sensitive text is left unmasked.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct CorpusArgs {
    /// JSONL file of annotated examples.
    #[arg(long)]
    corpus: PathBuf,
    /// Directory holding one `<db_id>.sqlite` per database.
    #[arg(long)]
    db_dir: PathBuf,
    /// Worker count; defaults to the number of processors.
    #[arg(long)]
    jobs: Option<usize>,
}

impl CorpusArgs {
    fn jobs(&self) -> usize {
        self.jobs.unwrap_or_else(par::default_jobs).max(1)
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Output directory for the reports.
    #[arg(long)]
    out: PathBuf,
    /// Mask exactly the annotated tokens instead of running linking.
    #[arg(long, conflicts_with = "no_masking")]
    gt_masking: bool,
    /// Send the concrete question and schema; leaks are logged, not refused.
    #[arg(long)]
    no_masking: bool,
    /// Also run the configured attacker on every masked question.
    #[arg(long)]
    with_attack: bool,
}

#[derive(Debug, Args)]
struct AttackArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Also write the attack report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_schema(db: &Path) -> Result<DatabaseSchema, CliError> {
    if !db.is_file() {
        return Err(CliError::io(
            db,
            io::Error::new(io::ErrorKind::NotFound, "database file not found"),
        ));
    }
    Ok(ingest_schema(db)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_audit(
    dir: &Path,
    question: &str,
    result: Result<&Translation, &PipelineError>,
    audit: &Audit,
) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let (translation, error) = match result {
        Ok(t) => (Some(t), None),
        Err(e) => (
            None,
            Some(json!({
                "stage": e.stage(),
                "message": e.to_string(),
                "leak_refusal": e.is_leak_refusal(),
            })),
        ),
    };
    let doc = json!({
        "question": question,
        "translation": translation,
        "error": error,
        "audit": audit,
    });
    write_json(&dir.join("audit.json"), &doc)
}

fn translate(args: &TranslateArgs) -> Result<u8, CliError> {
    let config = Config::load(args.pipeline.config.as_deref())?;
    let question = args.question.read()?;
    let schema = load_schema(&args.db)?;
    let policy = config.policy(args.pipeline.policy.as_ref())?;
    policy.validate(&schema)?;
    let untrusted = config.require_backend(Role::UntrustedLlm)?;
    let pipeline = config.pipeline(untrusted, policy, &args.pipeline.ablate)?;
    let trace = Trace::new();
    let result =
        pipeline.translate_traced(&question, &schema, &args.db, &MaskingMode::Policy, &trace);
    if let Some(dir) = &args.audit {
        write_audit(dir, &question, result.as_ref(), &Audit::from(&trace))?;
    }
    match result {
        Ok(t) => {
            println!("{}", t.final_sql);
            if t.outcome.is_ok() {
                Ok(EXIT_OK)
            } else {
                eprintln!("execution failed: {}", t.outcome.feedback());
                Ok(EXIT_FAILURE)
            }
        }
        Err(e) if e.is_leak_refusal() => {
            eprintln!("refused: {e}");
            Ok(EXIT_LEAK_REFUSAL)
        }
        Err(e) => {
            eprintln!("{e}");
            Ok(EXIT_FAILURE)
        }
    }
}

fn mask(args: &MaskArgs) -> Result<u8, CliError> {
    let config = Config::load(args.pipeline.config.as_deref())?;
    let question = args.question.read()?;
    let schema = load_schema(&args.db)?;
    let policy = config.policy(args.pipeline.policy.as_ref())?;
    policy.validate(&schema)?;
    let pipeline = config.pipeline(unused_untrusted(), policy, &args.pipeline.ablate)?;
    let trace = Trace::new();
    let abstraction = pipeline.abstraction(
        &NlQuestion::new(question.as_str()),
        &schema,
        &MaskingMode::Policy,
        &trace,
    );
    if let Some(dir) = &args.audit {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let doc = json!({
            "question": question,
            "abstraction": abstraction,
            "audit": Audit::from(&trace),
        });
        write_json(&dir.join("audit.json"), &doc)?;
    }
    let bundle = &abstraction.bundle;
    let text = serde_json::to_string_pretty(bundle).map_err(|e| CliError::Json {
        path: PathBuf::from("<stdout>"),
        source: e,
    })?;
    println!("{text}");
    if args.strict && !bundle.residual_sensitive.is_empty() {
        let spans: Vec<&str> = bundle
            .residual_sensitive
            .iter()
            .map(|r| r.text.as_str())
            .collect();
        eprintln!("unmasked sensitive text: {}", spans.join(", "));
        return Ok(EXIT_RESIDUAL);
    }
    Ok(EXIT_OK)
}

fn eval(args: &EvalArgs) -> Result<u8, CliError> {
    let config = Config::load(args.pipeline.config.as_deref())?;
    let corpus = load_corpus(&args.corpus.corpus)?;
    let policy = config.policy(args.pipeline.policy.as_ref())?;
    let untrusted = config.require_backend(Role::UntrustedLlm)?;
    let pipeline = config.pipeline(untrusted, policy, &args.pipeline.ablate)?;
    let attacker = if args.with_attack {
        Some(config.require_backend(Role::Attacker)?)
    } else {
        None
    };
    let masking = if args.gt_masking {
        MaskingKind::GroundTruth
    } else if args.no_masking {
        MaskingKind::Disabled
    } else {
        MaskingKind::Policy
    };
    let options = BenchmarkOptions {
        masking,
        jobs: args.corpus.jobs(),
        attacker,
    };
    let report = run_benchmark(&corpus, &args.corpus.db_dir, &pipeline, &options);
    fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    write_json(&args.out.join("report.json"), &report)?;
    let text = render_text(&report);
    let txt = args.out.join("report.txt");
    fs::write(&txt, &text).map_err(|e| CliError::io(&txt, e))?;
    print!("{text}");
    Ok(EXIT_OK)
}

/// Attack outcome for one example.
#[derive(Debug, Serialize)]
struct AttackRecord {
    index: usize,
    db_id: String,
    masked_question: Option<String>,
    /// Symbol to the attacker's guess, `null` when it declined.
    guesses: BTreeMap<String, Option<String>>,
    /// `null` when the question holds no symbol.
    reident_score: Option<f64>,
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct AttackReport {
    examples: usize,
    scored: usize,
    mean_ri: Option<f64>,
    records: Vec<AttackRecord>,
}

fn attack(args: &AttackArgs) -> Result<u8, CliError> {
    let config = Config::load(args.pipeline.config.as_deref())?;
    let corpus = load_corpus(&args.corpus.corpus)?;
    let policy = config.policy(args.pipeline.policy.as_ref())?;
    let attacker = config.require_backend(Role::Attacker)?;
    let pipeline = config.pipeline(unused_untrusted(), policy, &args.pipeline.ablate)?;
    let mut schemas: BTreeMap<&str, Result<DatabaseSchema, String>> = BTreeMap::new();
    for example in &corpus {
        schemas.entry(example.db_id.as_str()).or_insert_with(|| {
            ingest_schema(&database_path(&args.corpus.db_dir, &example.db_id))
                .map_err(|e| e.to_string())
        });
    }
    let indexed: Vec<(usize, &AnnotatedExample)> = corpus.iter().enumerate().collect();
    let records = par::map(&indexed, args.corpus.jobs(), |&(index, example)| {
        let mut record = AttackRecord {
            index,
            db_id: example.db_id.clone(),
            masked_question: None,
            guesses: BTreeMap::new(),
            reident_score: None,
            error: None,
        };
        let schema = match &schemas[example.db_id.as_str()] {
            Ok(s) => s,
            Err(e) => {
                record.error = Some(e.clone());
                return record;
            }
        };
        let trace = Trace::new();
        let question = NlQuestion::new(example.full_question());
        let abstraction = pipeline.abstraction(&question, schema, &MaskingMode::Policy, &trace);
        let result = reident_attack(
            &abstraction.bundle,
            &attacker,
            Some(&abstraction.guard()),
            &pipeline.templates,
            &trace,
        );
        record.reident_score = reident_score(&abstraction.bundle, &result);
        record.masked_question = Some(abstraction.bundle.masked_question);
        record.guesses = result.per_symbol;
        record
    });
    let scores: Vec<f64> = records.iter().filter_map(|r| r.reident_score).collect();
    let mean_ri = (!scores.is_empty()).then(|| par::stable_sum(&scores) / scores.len() as f64);
    let report = AttackReport {
        examples: records.len(),
        scored: scores.len(),
        mean_ri,
        records,
    };
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Json {
        path: PathBuf::from("<stdout>"),
        source: e,
    })?;
    println!("{text}");
    Ok(EXIT_OK)
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    match &cli.command {
        Command::Translate(args) => translate(args),
        Command::Mask(args) => mask(args),
        Command::Eval(args) => eval(args),
        Command::Attack(args) => attack(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
