//! Prompt templates and rendering.
//!
//! The generation and correction templates are stored verbatim. The linking,
//! classification, model-unmask and re-identification templates belong to
//! this crate. Placeholders are `{NAME}` with `NAME` in `[A-Za-z_]+`.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    SqlGeneration,
    AbstractCorrection,
    ConcreteCorrection,
    DetectValues,
    LinkValues,
    LinkReferences,
    ClassifyToken,
    ModelUnmask,
    Reidentify,
}

impl TemplateId {
    pub const ALL: [TemplateId; 9] = [
        TemplateId::SqlGeneration,
        TemplateId::AbstractCorrection,
        TemplateId::ConcreteCorrection,
        TemplateId::DetectValues,
        TemplateId::LinkValues,
        TemplateId::LinkReferences,
        TemplateId::ClassifyToken,
        TemplateId::ModelUnmask,
        TemplateId::Reidentify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateId::SqlGeneration => "sql_generation",
            TemplateId::AbstractCorrection => "abstract_correction",
            TemplateId::ConcreteCorrection => "concrete_correction",
            TemplateId::DetectValues => "detect_values",
            TemplateId::LinkValues => "link_values",
            TemplateId::LinkReferences => "link_references",
            TemplateId::ClassifyToken => "classify_token",
            TemplateId::ModelUnmask => "model_unmask",
            TemplateId::Reidentify => "reidentify",
        }
    }

    pub fn from_name(name: &str) -> Option<TemplateId> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }

    fn stock_text(self) -> &'static str {
        match self {
            TemplateId::SqlGeneration => include_str!("../../templates/sql_generation.txt"),
            TemplateId::AbstractCorrection => {
                include_str!("../../templates/abstract_correction.txt")
            }
            TemplateId::ConcreteCorrection => {
                include_str!("../../templates/concrete_correction.txt")
            }
            TemplateId::DetectValues => include_str!("../../templates/detect_values.txt"),
            TemplateId::LinkValues => include_str!("../../templates/link_values.txt"),
            TemplateId::LinkReferences => include_str!("../../templates/link_references.txt"),
            TemplateId::ClassifyToken => include_str!("../../templates/classify_token.txt"),
            TemplateId::ModelUnmask => include_str!("../../templates/model_unmask.txt"),
            TemplateId::Reidentify => include_str!("../../templates/reidentify.txt"),
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template `{template}` has unbound placeholder {{{placeholder}}}")]
    Unbound {
        template: TemplateId,
        placeholder: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub id: TemplateId,
    pub text: String,
    /// Shipped with the crate, as opposed to loaded from user configuration.
    pub stock: bool,
}

impl Template {
    pub fn stock(id: TemplateId) -> Self {
        Self {
            id,
            text: id.stock_text().to_string(),
            stock: true,
        }
    }

    pub fn placeholders(&self) -> Vec<String> {
        pieces(&self.text)
            .into_iter()
            .filter_map(|p| match p {
                Piece::Hole(h) => Some(h.to_string()),
                Piece::Text(_) => None,
            })
            .collect()
    }

    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<RenderedPrompt, TemplateError> {
        let mut segments = Vec::new();
        for piece in pieces(&self.text) {
            match piece {
                Piece::Text(t) => segments.push(Segment {
                    text: t.to_string(),
                    placeholder: None,
                }),
                Piece::Hole(name) => {
                    let value = bindings
                        .iter()
                        .find(|(k, _)| *k == name)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| TemplateError::Unbound {
                            template: self.id,
                            placeholder: name.to_string(),
                        })?;
                    segments.push(Segment {
                        text: value.to_string(),
                        placeholder: Some(name.to_string()),
                    });
                }
            }
        }
        let text = segments.iter().map(|s| s.text.as_str()).collect();
        Ok(RenderedPrompt {
            template: self.id,
            stock: self.stock,
            segments,
            text,
        })
    }
}

enum Piece<'a> {
    Text(&'a str),
    Hole(&'a str),
}

fn pieces(text: &str) -> Vec<Piece<'_>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut last = 0;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let mut j = i + 1;
            while j < bytes.len() && (bytes[j].is_ascii_alphabetic() || bytes[j] == b'_') {
                j += 1;
            }
            if j > i + 1 && j < bytes.len() && bytes[j] == b'}' {
                if last < i {
                    out.push(Piece::Text(&text[last..i]));
                }
                out.push(Piece::Hole(&text[i + 1..j]));
                last = j + 1;
                i = j + 1;
                continue;
            }
        }
        i += 1;
    }
    if last < text.len() {
        out.push(Piece::Text(&text[last..]));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub text: String,
    /// Placeholder this segment was bound to; `None` for template text.
    pub placeholder: Option<String>,
}

/// A prompt ready for a backend, remembering which parts came from the
/// template and which from bindings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub template: TemplateId,
    pub stock: bool,
    pub segments: Vec<Segment>,
    pub text: String,
}

impl RenderedPrompt {
    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn binding(&self, placeholder: &str) -> Option<&str> {
        self.segments
            .iter()
            .find(|s| s.placeholder.as_deref() == Some(placeholder))
            .map(|s| s.text.as_str())
    }

    /// Segments a leak scan must inspect: all bound values, plus the template
    /// text itself when the template is not a stock one.
    pub fn scannable(&self) -> impl Iterator<Item = &str> {
        self.segments
            .iter()
            .filter(move |s| s.placeholder.is_some() || !self.stock)
            .map(|s| s.text.as_str())
    }
}

/// The active template for each id; stock unless overridden.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: HashMap<TemplateId, Template>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            templates: TemplateId::ALL
                .into_iter()
                .map(|id| (id, Template::stock(id)))
                .collect(),
        }
    }
}

impl TemplateSet {
    pub fn with_override(mut self, id: TemplateId, text: impl Into<String>) -> Self {
        self.templates.insert(
            id,
            Template {
                id,
                text: text.into(),
                stock: false,
            },
        );
        self
    }

    pub fn get(&self, id: TemplateId) -> &Template {
        &self.templates[&id]
    }

    pub fn render(
        &self,
        id: TemplateId,
        bindings: &[(&str, &str)],
    ) -> Result<RenderedPrompt, TemplateError> {
        self.get(id).render(bindings)
    }
}

/// Instantiate a stock template.
pub fn render_prompt(
    id: TemplateId,
    bindings: &[(&str, &str)],
) -> Result<RenderedPrompt, TemplateError> {
    Template::stock(id).render(bindings)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_prompt_is_verbatim() {
        let p = render_prompt(
            TemplateId::SqlGeneration,
            &[
                ("NL_QUESTION", "How many [T1]?"),
                ("DB_SCHEMA", "'[T1]':\n    '[C1]': text"),
            ],
        )
        .unwrap();
        assert!(p
            .text
            .starts_with("You are an SQL generation assistant. Given \n\n(1) NL Question"));
        assert!(p
            .text
            .ends_with("NL Question: How many [T1]?\nDB Schema: '[T1]':\n    '[C1]': text"));
        assert!(p.text.contains("- Table and column names specified in the database schema are already wrapped in brackets."));
        assert!(p.text.contains("the database’s schema expressed in YAML"));
    }

    #[test]
    fn concrete_correction_binds_exec_result() {
        let p = render_prompt(
            TemplateId::ConcreteCorrection,
            &[
                ("schema", "s"),
                ("question", "q"),
                ("sql", "SELECT 1"),
                ("exec_res", "[]"),
            ],
        )
        .unwrap();
        assert!(p.text.contains("The execution result: [] \n"));
        assert!(p
            .text
            .starts_with("You are an SQL database expert tasked with correcting an SQL query."));
    }

    #[test]
    fn abstract_correction_placeholders() {
        let t = Template::stock(TemplateId::AbstractCorrection);
        assert_eq!(t.placeholders(), ["schema", "question", "sql"]);
        assert!(t
            .text
            .contains("Present your corrected query as a single line of SQL code."));
    }

    #[test]
    fn unbound_placeholder_is_named() {
        let err = render_prompt(TemplateId::SqlGeneration, &[("NL_QUESTION", "q")]).unwrap_err();
        assert_eq!(
            err,
            TemplateError::Unbound {
                template: TemplateId::SqlGeneration,
                placeholder: "DB_SCHEMA".into()
            }
        );
    }

    #[test]
    fn every_stock_template_renders_with_its_placeholders() {
        for id in TemplateId::ALL {
            let t = Template::stock(id);
            let names = t.placeholders();
            assert!(!names.is_empty(), "{id}");
            let bindings: Vec<(&str, &str)> = names.iter().map(|n| (n.as_str(), "x")).collect();
            t.render(&bindings).unwrap();
            assert_eq!(TemplateId::from_name(id.name()), Some(id));
        }
    }

    #[test]
    fn scannable_segments() {
        let stock = render_prompt(
            TemplateId::ClassifyToken,
            &[("categories", "a"), ("token", "Bob")],
        )
        .unwrap();
        let scanned: Vec<&str> = stock.scannable().collect();
        assert_eq!(scanned, ["a", "Bob"]);
        let custom = TemplateSet::default()
            .with_override(TemplateId::ClassifyToken, "Patients {token} {categories}")
            .render(
                TemplateId::ClassifyToken,
                &[("categories", "a"), ("token", "Bob")],
            )
            .unwrap();
        assert!(custom.scannable().any(|s| s.contains("Patients")));
    }

    #[test]
    fn lone_braces_are_text() {
        let t = Template {
            id: TemplateId::ModelUnmask,
            text: "a {} {x y} {ok}".into(),
            stock: false,
        };
        assert_eq!(t.placeholders(), ["ok"]);
        assert_eq!(t.render(&[("ok", "1")]).unwrap().text, "a {} {x y} 1");
    }
}
