//! Parsers for line-oriented model replies.

fn strip_bullet(line: &str) -> &str {
    let line = line.trim();
    for prefix in ["- ", "* ", "• "] {
        if let Some(rest) = line.strip_prefix(prefix) {
            return rest.trim_start();
        }
    }
    let digits = line.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(rest) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return rest.trim_start();
        }
    }
    line
}

/// Remove one layer of matching quotes or backticks.
pub fn unquote(s: &str) -> &str {
    let s = s.trim();
    for q in ['\'', '"', '`', '‘', '“'] {
        let close = match q {
            '‘' => '’',
            '“' => '”',
            other => other,
        };
        if s.len() >= 2 && s.starts_with(q) && s.ends_with(close) {
            return s[q.len_utf8()..s.len() - close.len_utf8()].trim();
        }
    }
    s
}

fn is_none(s: &str) -> bool {
    let s = s.trim().trim_end_matches('.');
    s.eq_ignore_ascii_case("none") || s.eq_ignore_ascii_case("n/a") || s == "ε"
}

fn content_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(strip_bullet)
        .filter(|l| !l.is_empty() && !l.starts_with("```"))
}

/// One item per line, bullets and quotes removed, `NONE` lines dropped.
pub fn parse_list(text: &str) -> Vec<String> {
    content_lines(text)
        .map(unquote)
        .filter(|l| !l.is_empty() && !is_none(l))
        .map(str::to_string)
        .collect()
}

/// `left -> right` pairs; `right` is `None` for an explicit `NONE`. Lines
/// without an arrow are ignored.
pub fn parse_arrows(text: &str) -> Vec<(String, Option<String>)> {
    content_lines(text)
        .filter_map(|line| {
            let (left, right) = ["->", "→", "=>"].iter().find_map(|a| line.split_once(a))?;
            let left = unquote(left);
            if left.is_empty() {
                return None;
            }
            let right = unquote(right.trim().trim_end_matches(['.', ',', ';']));
            let right = (!right.is_empty() && !is_none(right)).then(|| right.to_string());
            Some((left.to_string(), right))
        })
        .collect()
}

/// `table.column` or `table` with optional brackets or quotes around
/// either part.
pub fn split_target(target: &str) -> (String, Option<String>) {
    let clean =
        |s: &str| unquote(s.trim().trim_start_matches('[').trim_end_matches(']')).to_string();
    match target.split_once('.') {
        Some((t, c)) => (clean(t), Some(clean(c))),
        None => (clean(target), None),
    }
}
