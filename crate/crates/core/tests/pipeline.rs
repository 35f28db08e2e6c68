mod common;

use std::sync::Arc;
use std::time::Duration;

use common::{backend, perfect_pipeline, Fixture, Setup, TrustedBehaviour, CASES, RUNNING_EXAMPLE};
use sqlveil::eval::results_match;
use sqlveil::gateway::{Event, MockTransport, RecordingTransport, Role, TemplateId, Trace};
use sqlveil::masking::{mask, restore_question};
use sqlveil::model::Labels;
use sqlveil::sql::{execute_sql, MaskingMode, Outcome, Pipeline, Stage};
use sqlveil::{NlQuestion, PrivacyPolicy};

const T: Duration = Duration::from_secs(30);

#[test]
fn every_fixture_question_is_fully_linked_and_masked() {
    let fx = Fixture::new();
    for case in CASES.iter() {
        let q = NlQuestion::new(case.question);
        let schema = fx.schema(case.db);
        let links = case.links();
        assert_eq!(
            links.value_links.len(),
            case.values.len(),
            "{}",
            case.question
        );
        assert_eq!(
            links.reference_links.len(),
            case.refs.len(),
            "{}",
            case.question
        );
        let bundle = mask(&q, schema, &links, &PrivacyPolicy::full(), &Labels::new());
        assert!(
            bundle.residual_sensitive.is_empty(),
            "{}: {:?}",
            case.question,
            bundle.residual_sensitive
        );
        assert_eq!(restore_question(&bundle), case.question);
    }
}

#[test]
fn gold_queries_return_rows() {
    let fx = Fixture::new();
    for case in CASES.iter() {
        let out = execute_sql(case.gold, &fx.db(case.db), T);
        let rows = out
            .rows()
            .unwrap_or_else(|| panic!("{}: {out:?}", case.gold));
        assert!(!rows.is_empty(), "{}", case.gold);
    }
    let out = execute_sql(RUNNING_EXAMPLE.gold, &fx.db("hospital"), T);
    assert_eq!(out.feedback(), "[(2,)]");
}

#[test]
fn perfect_backends_reproduce_gold_results() {
    let fx = Fixture::new();
    let (pipeline, _) = perfect_pipeline(&fx, &Setup::default());
    for case in CASES.iter() {
        let (result, _) = pipeline.translate(
            case.question,
            fx.schema(case.db),
            &fx.db(case.db),
            &MaskingMode::Policy,
        );
        let t = result.unwrap_or_else(|e| panic!("{}: {e}", case.question));
        let gold = execute_sql(case.gold, &fx.db(case.db), T);
        let ok =
            matches!((t.outcome.rows(), gold.rows()), (Some(a), Some(b)) if results_match(a, b));
        assert!(ok, "{}: {} -> {:?}", case.question, t.final_sql, t.outcome);
        assert!(t.unknown_symbols.is_empty());
    }
}

#[test]
fn running_example_is_repaired_by_concrete_correction() {
    let fx = Fixture::new();
    let setup = Setup {
        trusted: TrustedBehaviour {
            fix_status_literal: true,
        },
        model_sql_for_running_example: true,
        ..Setup::default()
    };
    let (pipeline, _) = perfect_pipeline(&fx, &setup);
    let (result, audit) = pipeline.translate(
        RUNNING_EXAMPLE.question,
        fx.schema("hospital"),
        &fx.db("hospital"),
        &MaskingMode::Policy,
    );
    let t = result.unwrap();
    assert_eq!(
        t.abstraction.bundle.masked_question,
        "How many T1 did the V1 T3 with C3 as V2?; V1 is a value of the column C7; V2 is a value of the column C3"
    );
    assert!(
        t.reconstructed_sql.contains("hiv_status = 'positive'"),
        "{}",
        t.reconstructed_sql
    );
    assert_eq!(
        t.first_outcome,
        Outcome::Rows {
            rows: vec![vec![sqlveil::sql::Value::Integer(0)]]
        }
    );
    assert!(t.final_sql.contains("hiv_status = 1"));
    assert_eq!(t.outcome.feedback(), "[(2,)]");
    let correction = audit
        .exchanges
        .iter()
        .find(|e| e.template == TemplateId::ConcreteCorrection)
        .expect("concrete correction call");
    assert_eq!(correction.role, Role::TrustedSlm);
}

#[test]
fn concrete_prompts_stay_with_the_trusted_model() {
    let fx = Fixture::new();
    let (pipeline, recorder) = perfect_pipeline(&fx, &Setup::default());
    let (result, audit) = pipeline.translate(
        RUNNING_EXAMPLE.question,
        fx.schema("hospital"),
        &fx.db("hospital"),
        &MaskingMode::Policy,
    );
    result.unwrap();
    let sent = recorder.sent();
    let templates: Vec<TemplateId> = sent.iter().map(|(_, p)| p.template).collect();
    assert_eq!(
        templates,
        [TemplateId::SqlGeneration, TemplateId::AbstractCorrection]
    );
    for ex in &audit.exchanges {
        let untrusted_template = matches!(
            ex.template,
            TemplateId::SqlGeneration | TemplateId::AbstractCorrection
        );
        assert_eq!(
            ex.role == Role::UntrustedLlm,
            untrusted_template,
            "{:?}",
            ex.template
        );
    }
}

#[test]
fn untrusted_failure_is_a_generation_error() {
    let fx = Fixture::new();
    let pipeline = Pipeline::new(backend(Role::UntrustedLlm, MockTransport::new()));
    let (result, _) = pipeline.translate(
        RUNNING_EXAMPLE.question,
        fx.schema("hospital"),
        &fx.db("hospital"),
        &MaskingMode::Policy,
    );
    assert_eq!(result.unwrap_err().stage(), Stage::Generation);
}

#[test]
fn without_trusted_model_linking_is_fuzzy_and_correction_is_skipped() {
    let fx = Fixture::new();
    let recorder = Arc::new(RecordingTransport::new(
        MockTransport::new().with_responder(|p| {
            (p.template == TemplateId::SqlGeneration).then(|| "SELECT 1".to_string())
        }),
    ));
    let mut pipeline = Pipeline::new(sqlveil::gateway::Backend::new(
        common::profile(Role::UntrustedLlm),
        recorder.clone(),
    ));
    pipeline.config.enable_llm_correction = false;
    let trace = Trace::new();
    let t = pipeline
        .translate_traced(
            RUNNING_EXAMPLE.question,
            fx.schema("hospital"),
            &fx.db("hospital"),
            &MaskingMode::Policy,
            &trace,
        )
        .unwrap();
    let masked = &t.abstraction.bundle.masked_question;
    assert!(!masked.contains("New York Hospital"), "{masked}");
    assert!(!masked.contains("HIV status"), "{masked}");
    let stages: Vec<String> = trace
        .events()
        .into_iter()
        .filter_map(|e| match e {
            Event::Degradation { stage, .. } => Some(stage),
            _ => None,
        })
        .collect();
    assert!(stages.contains(&"slm-correction".to_string()), "{stages:?}");
    assert_eq!(t.outcome.feedback(), "[(1,)]");
    assert_eq!(recorder.sent().len(), 1);
}

#[test]
fn disabled_masking_sends_concrete_text_and_records_violations() {
    let fx = Fixture::new();
    let (pipeline, recorder) = perfect_pipeline(&fx, &Setup::default());
    let trace = Trace::new();
    let _ = pipeline.translate_traced(
        RUNNING_EXAMPLE.question,
        fx.schema("hospital"),
        &fx.db("hospital"),
        &MaskingMode::Disabled,
        &trace,
    );
    let sent = recorder.sent();
    assert!(sent[0].1.text.contains("New York Hospital"));
    assert!(trace
        .events()
        .iter()
        .any(|e| matches!(e, Event::LeakViolation { blocked: false, .. })));
}

#[test]
fn ground_truth_masking_hides_every_annotated_token() {
    let fx = Fixture::new();
    let (pipeline, _) = perfect_pipeline(&fx, &Setup::default());
    let tokens = RUNNING_EXAMPLE.sensitive_tokens();
    let abstraction = pipeline.abstraction(
        &NlQuestion::new(RUNNING_EXAMPLE.question),
        fx.schema("hospital"),
        &MaskingMode::GroundTruth(tokens.clone()),
        &Trace::new(),
    );
    let body = abstraction.bundle.body().to_string();
    for token in &tokens {
        assert!(!body.contains(token.as_str()), "{token} in {body}");
    }
}
