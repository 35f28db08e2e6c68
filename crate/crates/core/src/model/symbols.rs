use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::policy::{Element, Labels, PrivacyPolicy};
use super::schema::DatabaseSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SymbolKind {
    Table,
    Column,
    Value,
}

impl SymbolKind {
    fn prefix(self) -> char {
        match self {
            SymbolKind::Table => 'T',
            SymbolKind::Column => 'C',
            SymbolKind::Value => 'V',
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

/// An abstract placeholder such as `T1`, `C12` or `V2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Symbol {
    pub kind: SymbolKind,
    pub index: u32,
}

impl Symbol {
    pub fn new(kind: SymbolKind, index: u32) -> Self {
        Self { kind, index }
    }

    /// Parses the exact shape `[TCV][1-9][0-9]*`.
    pub fn parse(s: &str) -> Option<Symbol> {
        let mut chars = s.chars();
        let kind = match chars.next()? {
            'T' => SymbolKind::Table,
            'C' => SymbolKind::Column,
            'V' => SymbolKind::Value,
            _ => return None,
        };
        let digits = chars.as_str();
        if digits.is_empty()
            || digits.starts_with('0')
            || !digits.bytes().all(|b| b.is_ascii_digit())
        {
            return None;
        }
        digits.parse().ok().map(|index| Symbol { kind, index })
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.kind.prefix(), self.index)
    }
}

impl FromStr for Symbol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Symbol::parse(s).ok_or_else(|| format!("not a symbol: `{s}`"))
    }
}

impl Serialize for Symbol {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Symbol {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// What a symbol stands for.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Concrete {
    Table { name: String },
    Column { table: String, column: String },
    Value { literal: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueEntry {
    pub symbol: Symbol,
    /// Column the literal was linked to, when linking resolved one.
    pub column: Option<(String, String)>,
}

/// Bijective map between concrete identifiers/literals and symbols.
///
/// Table and column symbols are numbered in schema declaration order, with
/// column indices global across tables. Indices whose symbol text collides
/// (case-insensitively) with a concrete identifier are skipped.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "SymbolTableRepr", into = "SymbolTableRepr")]
pub struct SymbolTable {
    tables: IndexMap<String, Symbol>,
    columns: IndexMap<(String, String), Symbol>,
    values: IndexMap<String, ValueEntry>,
    reverse: HashMap<Symbol, Concrete>,
    reserved: BTreeSet<String>,
    next: [u32; 3],
}

impl SymbolTable {
    /// Symbols for every policy-selected table and column of `schema`.
    /// The value map starts empty.
    pub fn fresh(schema: &DatabaseSchema, policy: &PrivacyPolicy, labels: &Labels) -> Self {
        Self::fresh_reserving(schema, policy, labels, std::iter::empty())
    }

    /// [`fresh`](Self::fresh), additionally keeping symbols clear of
    /// `words` (for instance every token of the question being masked).
    pub fn fresh_reserving<'a>(
        schema: &DatabaseSchema,
        policy: &PrivacyPolicy,
        labels: &Labels,
        words: impl IntoIterator<Item = &'a str>,
    ) -> Self {
        let mut reserved: BTreeSet<String> = schema.identifiers().into_iter().collect();
        reserved.extend(words.into_iter().map(str::to_lowercase));
        let mut st = SymbolTable {
            reserved,
            ..Default::default()
        };
        for table in schema.tables() {
            if policy.is_sensitive(Element::Table(&table.name), labels) {
                st.add_table(&table.name);
            }
        }
        for (table, column) in schema.columns() {
            let element = Element::Column {
                table: &table.name,
                column: &column.name,
            };
            if policy.is_sensitive(element, labels) {
                st.add_column(&table.name, &column.name);
            }
        }
        st
    }

    fn allocate(&mut self, kind: SymbolKind) -> Symbol {
        loop {
            self.next[kind.slot()] += 1;
            let symbol = Symbol::new(kind, self.next[kind.slot()]);
            if !self.reserved.contains(&symbol.to_string().to_lowercase()) {
                return symbol;
            }
        }
    }

    pub fn add_table(&mut self, name: &str) -> Symbol {
        if let Some(s) = self.tables.get(name) {
            return *s;
        }
        let symbol = self.allocate(SymbolKind::Table);
        self.tables.insert(name.to_string(), symbol);
        self.reverse.insert(
            symbol,
            Concrete::Table {
                name: name.to_string(),
            },
        );
        symbol
    }

    pub fn add_column(&mut self, table: &str, column: &str) -> Symbol {
        let key = (table.to_string(), column.to_string());
        if let Some(s) = self.columns.get(&key) {
            return *s;
        }
        let symbol = self.allocate(SymbolKind::Column);
        self.columns.insert(key, symbol);
        self.reverse.insert(
            symbol,
            Concrete::Column {
                table: table.to_string(),
                column: column.to_string(),
            },
        );
        symbol
    }

    /// Symbol for `literal`, allocating the next `V<i>` on first sight.
    /// Identical literals share a symbol; the first resolved column sticks.
    pub fn add_value(&mut self, literal: &str, column: Option<(String, String)>) -> Symbol {
        if let Some(entry) = self.values.get_mut(literal) {
            if entry.column.is_none() {
                entry.column = column;
            }
            return entry.symbol;
        }
        self.reserved.insert(literal.to_lowercase());
        let symbol = self.allocate(SymbolKind::Value);
        self.values
            .insert(literal.to_string(), ValueEntry { symbol, column });
        self.reverse.insert(
            symbol,
            Concrete::Value {
                literal: literal.to_string(),
            },
        );
        symbol
    }

    pub fn table_symbol(&self, name: &str) -> Option<Symbol> {
        self.tables.get(name).copied().or_else(|| {
            self.tables
                .iter()
                .find(|(k, _)| k.eq_ignore_ascii_case(name))
                .map(|(_, s)| *s)
        })
    }

    pub fn column_symbol(&self, table: &str, column: &str) -> Option<Symbol> {
        self.columns
            .get(&(table.to_string(), column.to_string()))
            .copied()
            .or_else(|| {
                self.columns
                    .iter()
                    .find(|((t, c), _)| {
                        t.eq_ignore_ascii_case(table) && c.eq_ignore_ascii_case(column)
                    })
                    .map(|(_, s)| *s)
            })
    }

    pub fn value(&self, literal: &str) -> Option<&ValueEntry> {
        self.values.get(literal)
    }

    /// Inverse map.
    pub fn resolve(&self, symbol: Symbol) -> Option<&Concrete> {
        self.reverse.get(&symbol)
    }

    /// Whether `word` is a concrete identifier or literal (so a symbol-shaped
    /// word in SQL may legitimately be concrete).
    pub fn is_reserved(&self, word: &str) -> bool {
        self.reserved.contains(&word.to_lowercase())
    }

    pub fn tables(&self) -> impl Iterator<Item = (&str, Symbol)> {
        self.tables.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn columns(&self) -> impl Iterator<Item = (&str, &str, Symbol)> {
        self.columns
            .iter()
            .map(|((t, c), v)| (t.as_str(), c.as_str(), *v))
    }

    pub fn values(&self) -> impl Iterator<Item = (&str, &ValueEntry)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.reverse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reverse.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
struct ColumnEntryRepr {
    table: String,
    column: String,
    symbol: Symbol,
}

#[derive(Serialize, Deserialize)]
struct ValueEntryRepr {
    literal: String,
    symbol: Symbol,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    table: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    column: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct SymbolTableRepr {
    tables: IndexMap<String, Symbol>,
    columns: Vec<ColumnEntryRepr>,
    values: Vec<ValueEntryRepr>,
    #[serde(default)]
    reserved: BTreeSet<String>,
}

impl From<SymbolTable> for SymbolTableRepr {
    fn from(st: SymbolTable) -> Self {
        SymbolTableRepr {
            tables: st.tables,
            columns: st
                .columns
                .into_iter()
                .map(|((table, column), symbol)| ColumnEntryRepr {
                    table,
                    column,
                    symbol,
                })
                .collect(),
            values: st
                .values
                .into_iter()
                .map(|(literal, e)| {
                    let (table, column) =
                        e.column.map_or((None, None), |(t, c)| (Some(t), Some(c)));
                    ValueEntryRepr {
                        literal,
                        symbol: e.symbol,
                        table,
                        column,
                    }
                })
                .collect(),
            reserved: st.reserved,
        }
    }
}

impl From<SymbolTableRepr> for SymbolTable {
    fn from(r: SymbolTableRepr) -> Self {
        let mut st = SymbolTable {
            reserved: r.reserved,
            ..Default::default()
        };
        let bump = |st: &mut SymbolTable, s: Symbol| {
            let slot = &mut st.next[s.kind.slot()];
            *slot = (*slot).max(s.index);
        };
        for (name, symbol) in r.tables {
            st.reverse
                .insert(symbol, Concrete::Table { name: name.clone() });
            st.tables.insert(name, symbol);
            bump(&mut st, symbol);
        }
        for c in r.columns {
            st.reverse.insert(
                c.symbol,
                Concrete::Column {
                    table: c.table.clone(),
                    column: c.column.clone(),
                },
            );
            st.columns.insert((c.table, c.column), c.symbol);
            bump(&mut st, c.symbol);
        }
        for v in r.values {
            st.reverse.insert(
                v.symbol,
                Concrete::Value {
                    literal: v.literal.clone(),
                },
            );
            let column = v.table.zip(v.column);
            st.values.insert(
                v.literal,
                ValueEntry {
                    symbol: v.symbol,
                    column,
                },
            );
            bump(&mut st, v.symbol);
        }
        st
    }
}
