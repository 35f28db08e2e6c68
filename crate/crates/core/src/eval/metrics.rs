//! Masking recall, re-identification score and the simulated attack.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::gateway::{Backend, TemplateId, TemplateSet, Trace};
use crate::linking::parse::parse_arrows;
use crate::masking::{LeakGuard, MaskedBundle};
use crate::model::{NlQuestion, Span, Symbol};

/// Token identity for both metrics: trimmed, lowercased, inner whitespace
/// collapsed.
pub fn normalize_token(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Masking recall: the fraction of distinct ground-truth tokens that are masked.
///
/// A token counts as masked when one of its occurrences in the question
/// lies entirely inside masked spans, or when its text equals a masked
/// span's text. `None` when there is no ground truth.
pub fn masking_recall(
    question: &NlQuestion,
    masked: &[Span],
    ground_truth: &[String],
) -> Option<f64> {
    let truth: BTreeSet<String> = ground_truth
        .iter()
        .map(|t| normalize_token(t))
        .filter(|t| !t.is_empty())
        .collect();
    if truth.is_empty() {
        return None;
    }
    let masked_texts: BTreeSet<String> = masked
        .iter()
        .map(|&s| normalize_token(question.slice(s)))
        .collect();
    let covered = |span: Span| {
        let Some((first, last)) = question.tokens_of(span) else {
            return false;
        };
        (first..=last).all(|i| {
            let tok = question.tokens()[i];
            masked.iter().any(|m| m.contains(&tok))
        })
    };
    let hits = truth
        .iter()
        .filter(|t| masked_texts.contains(*t) || question.find(t).into_iter().any(covered))
        .count();
    Some(hits as f64 / truth.len() as f64)
}

/// What the attacker recovered.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackResult {
    /// Normalized guesses, G_s.
    pub guesses: BTreeSet<String>,
    /// Symbol → guess as the attacker wrote it; `None` for symbols it
    /// declined.
    pub per_symbol: BTreeMap<String, Option<String>>,
}

/// Parse `symbol -> original` lines. Lines whose left side is not a symbol
/// are ignored.
pub fn parse_attack(reply: &str) -> AttackResult {
    let mut result = AttackResult::default();
    for (left, right) in parse_arrows(reply) {
        let Some(symbol) = Symbol::parse(left.trim_matches(['[', ']'])) else {
            continue;
        };
        if let Some(guess) = &right {
            let g = normalize_token(guess);
            if !g.is_empty() {
                result.guesses.insert(g);
            }
        }
        result.per_symbol.insert(symbol.to_string(), right);
    }
    result
}

/// Prompt the attacker with Q′ and S′ only and collect its guesses. A
/// failed call or unparseable reply yields no guesses and a degradation
/// event.
pub fn reident_attack(
    bundle: &MaskedBundle,
    attacker: &Backend,
    guard: Option<&LeakGuard>,
    templates: &TemplateSet,
    trace: &Trace,
) -> AttackResult {
    let prompt = match templates.render(
        TemplateId::Reidentify,
        &[
            ("schema", &bundle.masked_schema_yaml),
            ("question", &bundle.masked_question),
        ],
    ) {
        Ok(p) => p,
        Err(e) => {
            trace.degrade("attack", e.to_string());
            return AttackResult::default();
        }
    };
    match attacker.complete(&prompt, guard, trace) {
        Ok(reply) => {
            let result = parse_attack(&reply);
            if result.per_symbol.is_empty() {
                trace.degrade("attack", "no symbol lines in attacker reply");
            }
            result
        }
        Err(e) => {
            trace.degrade("attack", e.to_string());
            AttackResult::default()
        }
    }
}

/// Re-identification score: one minus the fraction of question symbols whose original text
/// the attacker guessed exactly. `None` when the question body holds no
/// symbol.
pub fn reident_score(bundle: &MaskedBundle, attack: &AttackResult) -> Option<f64> {
    let symbols = bundle.body_symbols();
    if symbols.is_empty() {
        return None;
    }
    let recovered = symbols
        .iter()
        .filter(|&&s| {
            bundle
                .masked_spans
                .iter()
                .filter(|m| m.symbol == s)
                .any(|m| attack.guesses.contains(&normalize_token(&m.text)))
        })
        .count();
    Some(1.0 - recovered as f64 / symbols.len() as f64)
}
