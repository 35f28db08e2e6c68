use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::schema::DatabaseSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Every table, column and literal value is sensitive.
    Full,
    /// Only elements whose semantic category is in the policy's set.
    CategoryBased,
    /// Explicitly enumerated tables, columns and an all-literals flag.
    Custom,
}

/// Output of the labeling function: a category, or no category (ε).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Category(String),
    Epsilon,
}

impl Label {
    pub fn category(&self) -> Option<&str> {
        match self {
            Label::Category(c) => Some(c),
            Label::Epsilon => None,
        }
    }
}

/// Something a policy can mark sensitive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Element<'a> {
    Table(&'a str),
    Column { table: &'a str, column: &'a str },
    Literal(&'a str),
}

impl Element<'_> {
    /// Surface text the labeling function classifies.
    pub fn text(&self) -> &str {
        match self {
            Element::Table(t) => t,
            Element::Column { column, .. } => column,
            Element::Literal(l) => l,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Selected,
    NotSelected,
    /// Category-based policy asked about an element nobody has classified.
    NeedsLabel,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolicyError {
    #[error("policy names unknown table `{0}`")]
    UnknownTable(String),
    #[error("policy names unknown column `{0}.{1}`")]
    UnknownColumn(String, String),
    #[error("category-based policy needs at least one category")]
    NoCategories,
}

/// Which schema elements and literal values must never reach an untrusted
/// model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrivacyPolicy {
    pub kind: PolicyKind,
    #[serde(default)]
    pub categories: BTreeSet<String>,
    #[serde(default)]
    pub tables: BTreeSet<String>,
    /// `(table, column)` pairs, serialized as `"table.column"`.
    #[serde(default, with = "qualified_columns")]
    pub columns: BTreeSet<(String, String)>,
    #[serde(default)]
    pub literal_values: bool,
    /// Category-based only: treat elements the classifier could not label
    /// as sensitive instead of as ε.
    #[serde(default)]
    pub unlabeled_is_sensitive: bool,
}

pub const DEFAULT_CATEGORIES: [&str; 3] = ["name", "location", "occupation"];

impl PrivacyPolicy {
    pub fn full() -> Self {
        Self {
            kind: PolicyKind::Full,
            categories: BTreeSet::new(),
            tables: BTreeSet::new(),
            columns: BTreeSet::new(),
            literal_values: true,
            unlabeled_is_sensitive: false,
        }
    }

    pub fn category_based<I, S>(categories: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            kind: PolicyKind::CategoryBased,
            categories: categories.into_iter().map(Into::into).collect(),
            ..Self::full()
        }
    }

    pub fn default_categories() -> Self {
        Self::category_based(DEFAULT_CATEGORIES)
    }

    pub fn custom<T, C>(tables: T, columns: C, literal_values: bool) -> Self
    where
        T: IntoIterator<Item = String>,
        C: IntoIterator<Item = (String, String)>,
    {
        Self {
            kind: PolicyKind::Custom,
            categories: BTreeSet::new(),
            tables: tables.into_iter().collect(),
            columns: columns.into_iter().collect(),
            literal_values,
            unlabeled_is_sensitive: false,
        }
    }

    /// Custom sets may only name schema elements; category-based policies
    /// need a nonempty category set.
    pub fn validate(&self, schema: &DatabaseSchema) -> Result<(), PolicyError> {
        match self.kind {
            PolicyKind::Full => Ok(()),
            PolicyKind::CategoryBased if self.categories.is_empty() => {
                Err(PolicyError::NoCategories)
            }
            PolicyKind::CategoryBased => Ok(()),
            PolicyKind::Custom => {
                for t in &self.tables {
                    if schema.table(t).is_none() {
                        return Err(PolicyError::UnknownTable(t.clone()));
                    }
                }
                for (t, c) in &self.columns {
                    if schema.column(t, c).is_none() {
                        return Err(PolicyError::UnknownColumn(t.clone(), c.clone()));
                    }
                }
                Ok(())
            }
        }
    }

    /// Whether `element` is sensitive. `label` is the labeling function's
    /// output for the element's text, when it has been computed.
    pub fn selects(&self, element: Element<'_>, label: Option<&Label>) -> Decision {
        let yes = |b: bool| {
            if b {
                Decision::Selected
            } else {
                Decision::NotSelected
            }
        };
        match self.kind {
            PolicyKind::Full => Decision::Selected,
            PolicyKind::CategoryBased => match label {
                None => Decision::NeedsLabel,
                Some(Label::Epsilon) => Decision::NotSelected,
                Some(Label::Category(c)) => yes(self.categories.contains(c)),
            },
            PolicyKind::Custom => match element {
                Element::Table(t) => yes(self.tables.iter().any(|x| x.eq_ignore_ascii_case(t))),
                Element::Column { table, column } => yes(self
                    .columns
                    .iter()
                    .any(|(t, c)| t.eq_ignore_ascii_case(table) && c.eq_ignore_ascii_case(column))),
                Element::Literal(_) => yes(self.literal_values),
            },
        }
    }

    /// [`selects`](Self::selects) with `NeedsLabel` resolved by
    /// `unlabeled_is_sensitive`.
    pub fn is_sensitive(&self, element: Element<'_>, labels: &Labels) -> bool {
        match self.selects(element, labels.get(element.text())) {
            Decision::Selected => true,
            Decision::NotSelected => false,
            Decision::NeedsLabel => self.unlabeled_is_sensitive,
        }
    }
}

/// Free-function form of [`PrivacyPolicy::selects`].
pub fn policy_selects(
    policy: &PrivacyPolicy,
    element: Element<'_>,
    label: Option<&Label>,
) -> Decision {
    policy.selects(element, label)
}

/// Labeling-function results keyed by lowercased, trimmed text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labels(HashMap<String, Label>);

impl Labels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, text: &str, label: Label) {
        self.0.insert(normalize(text), label);
    }

    pub fn get(&self, text: &str) -> Option<&Label> {
        self.0.get(&normalize(text))
    }

    pub fn contains(&self, text: &str) -> bool {
        self.0.contains_key(&normalize(text))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn normalize(text: &str) -> String {
    text.trim().to_lowercase()
}

mod qualified_columns {
    use std::collections::BTreeSet;

    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        set: &BTreeSet<(String, String)>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        s.collect_seq(set.iter().map(|(t, c)| format!("{t}.{c}")))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeSet<(String, String)>, D::Error> {
        Vec::<String>::deserialize(d)?
            .into_iter()
            .map(|q| {
                q.split_once('.')
                    .map(|(t, c)| (t.to_string(), c.to_string()))
                    .ok_or_else(|| D::Error::custom(format!("expected table.column, got `{q}`")))
            })
            .collect()
    }
}
