use serde::{Deserialize, Serialize};

/// Half-open byte range `[start, end)` over a question's text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

/// A natural-language question and its word segmentation.
///
/// Tokens are maximal runs of alphanumeric characters and underscores;
/// a `.` or `,` between two digits stays inside the token so `3.5` and
/// `1,000` are single tokens. Everything between tokens is separator text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub struct NlQuestion {
    text: String,
    tokens: Vec<Span>,
}

impl From<String> for NlQuestion {
    fn from(text: String) -> Self {
        Self::new(text)
    }
}

impl From<NlQuestion> for String {
    fn from(q: NlQuestion) -> Self {
        q.text
    }
}

impl NlQuestion {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = segment(&text);
        Self { text, tokens }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn tokens(&self) -> &[Span] {
        &self.tokens
    }

    pub fn slice(&self, span: Span) -> &str {
        &self.text[span.start..span.end]
    }

    pub fn token_text(&self, index: usize) -> &str {
        self.slice(self.tokens[index])
    }

    /// Span covering tokens `first..=last`.
    pub fn token_range(&self, first: usize, last: usize) -> Span {
        Span::new(self.tokens[first].start, self.tokens[last].end)
    }

    /// Token indices `(first, last)` exactly covered by `span`, if its edges
    /// fall on token boundaries.
    pub fn tokens_of(&self, span: Span) -> Option<(usize, usize)> {
        let first = self.tokens.iter().position(|t| t.start == span.start)?;
        let last = self.tokens.iter().position(|t| t.end == span.end)?;
        (first <= last).then_some((first, last))
    }

    /// Every n-gram of up to `max_n` consecutive tokens as `(first, last)`.
    pub fn ngrams(&self, max_n: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n_tokens = self.tokens.len();
        (0..n_tokens).flat_map(move |first| {
            (first..n_tokens.min(first + max_n)).map(move |last| (first, last))
        })
    }

    /// Lowercased tokens of `first..=last` joined by single spaces.
    pub fn normalized_range(&self, first: usize, last: usize) -> String {
        (first..=last)
            .map(|i| self.token_text(i).to_lowercase())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Occurrences of `needle` aligned to token boundaries, compared
    /// token-by-token case-insensitively so spacing and punctuation
    /// differences between the needle and the question do not matter.
    pub fn find(&self, needle: &str) -> Vec<Span> {
        let wanted: Vec<String> = segment(needle)
            .into_iter()
            .map(|s| needle[s.start..s.end].to_lowercase())
            .collect();
        if wanted.is_empty() || wanted.len() > self.tokens.len() {
            return Vec::new();
        }
        (0..=self.tokens.len() - wanted.len())
            .filter(|&first| {
                wanted
                    .iter()
                    .enumerate()
                    .all(|(k, w)| self.token_text(first + k).to_lowercase() == *w)
            })
            .map(|first| self.token_range(first, first + wanted.len() - 1))
            .collect()
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Word segmentation shared by questions, model outputs and identifiers.
pub fn segment(text: &str) -> Vec<Span> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !is_word_char(chars[i].1) {
            i += 1;
            continue;
        }
        let start = chars[i].0;
        let mut j = i;
        loop {
            j += 1;
            if j >= chars.len() {
                break;
            }
            let c = chars[j].1;
            if is_word_char(c) {
                continue;
            }
            let numeric_joint = (c == '.' || c == ',')
                && chars[j - 1].1.is_ascii_digit()
                && chars.get(j + 1).is_some_and(|(_, n)| n.is_ascii_digit());
            if !numeric_joint {
                break;
            }
        }
        let end = chars.get(j).map_or(text.len(), |(b, _)| *b);
        spans.push(Span::new(start, end));
        i = j;
    }
    spans
}

/// Lowercased words of an identifier: `hiv_status` and `HivStatus` both
/// become `hiv status`.
pub fn split_identifier(name: &str) -> String {
    let mut words: Vec<String> = Vec::new();
    for span in segment(name) {
        for part in name[span.start..span.end].split('_') {
            let mut current = String::new();
            let mut prev: Option<char> = None;
            for c in part.chars() {
                let boundary = prev.is_some_and(|p| {
                    (p.is_lowercase() && c.is_uppercase())
                        || (p.is_alphabetic() && c.is_ascii_digit())
                        || (p.is_ascii_digit() && c.is_alphabetic())
                });
                if boundary && !current.is_empty() {
                    words.push(std::mem::take(&mut current));
                }
                current.extend(c.to_lowercase());
                prev = Some(c);
            }
            if !current.is_empty() {
                words.push(current);
            }
        }
    }
    words.join(" ")
}
