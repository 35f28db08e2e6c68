//! Result-set equality for execution accuracy.

use std::cmp::Ordering;

use crate::sql::{Row, Value};

/// Absolute tolerance for numeric cells.
pub const FLOAT_TOLERANCE: f64 = 1e-6;

fn numeric(v: &Value) -> Option<f64> {
    match v {
        Value::Integer(i) => Some(*i as f64),
        Value::Real(r) => Some(*r),
        _ => None,
    }
}

/// Cell equality: numbers within [`FLOAT_TOLERANCE`] (integers and reals
/// compare by value), text exactly, null only to null.
pub fn cells_match(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Null, Value::Null) => true,
        (Value::Text(x), Value::Text(y)) => x == y,
        (Value::Integer(x), Value::Integer(y)) => x == y,
        _ => match (numeric(a), numeric(b)) {
            (Some(x), Some(y)) => x == y || (x - y).abs() <= FLOAT_TOLERANCE,
            _ => false,
        },
    }
}

/// Rows equal cell by cell in column order.
pub fn rows_match(a: &Row, b: &Row) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| cells_match(x, y))
}

fn rank(v: &Value) -> u8 {
    match v {
        Value::Null => 0,
        Value::Integer(_) | Value::Real(_) => 1,
        Value::Text(_) => 2,
    }
}

fn cmp_cell(a: &Value, b: &Value) -> Ordering {
    rank(a).cmp(&rank(b)).then_with(|| match (a, b) {
        (Value::Text(x), Value::Text(y)) => x.cmp(y),
        _ => match (numeric(a), numeric(b)) {
            (Some(x), Some(y)) => x.total_cmp(&y),
            _ => Ordering::Equal,
        },
    })
}

fn cmp_row(a: &Row, b: &Row) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| cmp_cell(x, y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

/// Perfect matching between the rows of `a` and `b` by augmenting paths.
fn perfect_matching(a: &[Row], b: &[Row]) -> bool {
    let adj: Vec<Vec<usize>> = a
        .iter()
        .map(|ra| (0..b.len()).filter(|&j| rows_match(ra, &b[j])).collect())
        .collect();
    let mut owner: Vec<Option<usize>> = vec![None; b.len()];
    fn augment(
        i: usize,
        adj: &[Vec<usize>],
        owner: &mut [Option<usize>],
        seen: &mut [bool],
    ) -> bool {
        for &j in &adj[i] {
            if seen[j] {
                continue;
            }
            seen[j] = true;
            if owner[j].is_none_or(|k| augment(k, adj, owner, seen)) {
                owner[j] = Some(i);
                return true;
            }
        }
        false
    }
    (0..a.len()).all(|i| augment(i, &adj, &mut owner, &mut vec![false; b.len()]))
}

/// Largest result for which the exact matching fallback runs.
const MATCHING_LIMIT: usize = 2_000;

/// Multiset equality of two results, insensitive to row order and
/// sensitive to column order.
pub fn results_match(a: &[Row], b: &[Row]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut sa: Vec<&Row> = a.iter().collect();
    let mut sb: Vec<&Row> = b.iter().collect();
    sa.sort_by(|x, y| cmp_row(x, y));
    sb.sort_by(|x, y| cmp_row(x, y));
    if sa.iter().zip(&sb).all(|(x, y)| rows_match(x, y)) {
        return true;
    }
    a.len() <= MATCHING_LIMIT && perfect_matching(a, b)
}
