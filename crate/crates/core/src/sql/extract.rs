//! Pulling one SQL statement out of a model completion.

/// Body of the first fenced code block, or the whole text when there is
/// none or the fence never closes.
fn unfence(text: &str) -> &str {
    let Some(open) = text.find("```") else {
        return text;
    };
    let after = &text[open + 3..];
    let body_start = after.find('\n').map_or(after.len(), |n| n + 1);
    let first_line = after[..body_start].trim();
    let body = if first_line.chars().all(|c| c.is_ascii_alphanumeric()) {
        &after[body_start..]
    } else {
        after
    };
    match body.find("```") {
        Some(close) => &body[..close],
        None => text,
    }
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Byte offset of the first `SELECT` or `WITH` keyword standing as a word.
fn statement_start(text: &str) -> Option<usize> {
    let lower = text.to_ascii_lowercase();
    let bytes = lower.as_bytes();
    let at_word = |i: usize, kw: &str| {
        lower[i..].starts_with(kw)
            && (i == 0 || !is_word_byte(bytes[i - 1]))
            && bytes.get(i + kw.len()).is_none_or(|&b| !is_word_byte(b))
    };
    (0..bytes.len())
        .find(|&i| lower.is_char_boundary(i) && (at_word(i, "select") || at_word(i, "with")))
}

/// Text from `start` up to the first `;` or blank line outside quotes.
fn statement_end(text: &str) -> usize {
    let mut quote: Option<char> = None;
    let mut newline_run = 0;
    for (i, c) in text.char_indices() {
        match quote {
            Some(q) => {
                if c == q || (q == '[' && c == ']') {
                    quote = None;
                }
            }
            None => match c {
                '\'' | '"' | '`' | '[' => quote = Some(c),
                ';' => return i,
                '\n' => {
                    newline_run += 1;
                    if newline_run == 2 {
                        return i;
                    }
                    continue;
                }
                c if c.is_whitespace() => continue,
                _ => {}
            },
        }
        newline_run = 0;
    }
    text.len()
}

/// Collapse whitespace runs outside quotes into single spaces.
pub fn one_line(sql: &str) -> String {
    let mut out = String::with_capacity(sql.len());
    let mut quote: Option<char> = None;
    let mut pending_space = false;
    for c in sql.trim().chars() {
        match quote {
            Some(q) => {
                out.push(c);
                if c == q || (q == '[' && c == ']') {
                    quote = None;
                }
            }
            None if c.is_whitespace() => pending_space = true,
            None => {
                if pending_space {
                    out.push(' ');
                    pending_space = false;
                }
                if matches!(c, '\'' | '"' | '`' | '[') {
                    quote = Some(c);
                }
                out.push(c);
            }
        }
    }
    out
}

/// The first SELECT statement of a completion: code fences and leading
/// prose are stripped, and the statement ends at an unquoted `;` or a
/// blank line. The result is a single line.
pub fn extract_sql(completion: &str) -> Option<String> {
    let text = unfence(completion);
    let start = statement_start(text)?;
    let rest = &text[start..];
    let mut sql = one_line(&rest[..statement_end(rest)]);
    if sql.matches('`').count() % 2 == 1 && sql.ends_with('`') {
        sql.pop();
        sql = sql.trim_end().to_string();
    }
    (!sql.is_empty()).then_some(sql)
}
