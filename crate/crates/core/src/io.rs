//! Plain-text formats.
//!
//! * Profile files: one row per line, whitespace-separated probabilities, in
//!   any order; zeros may be written or omitted. Lines starting with `#` and
//!   blank lines are ignored. The number of rows fixes `n`.
//! * Triplet files: one `i j p` line per nonzero matrix entry, 1-based indices.

use std::fmt::Write as _;

use crate::env_model::{RowProfile, StochasticMatrix};
use crate::error::{Error, Result};

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub fn parse_profiles(text: &str) -> Result<Vec<RowProfile>> {
    let rows: Vec<(usize, &str)> = content_lines(text).collect();
    let n = rows.len();
    rows.into_iter()
        .enumerate()
        .map(|(i, (line, body))| {
            let weights = body
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map_err(|e| Error::Parse { line, reason: format!("{tok:?}: {e}") })
                })
                .collect::<Result<Vec<f64>>>()?;
            if weights.iter().any(|&w| w < 0.0) {
                return Err(Error::Parse { line, reason: "negative probability".into() });
            }
            RowProfile::from_unsorted(i, weights, n).map_err(|e| Error::Parse { line, reason: e.to_string() })
        })
        .collect()
}

pub fn format_profiles(profiles: &[RowProfile]) -> String {
    let mut out = String::new();
    for p in profiles {
        let line: Vec<String> = p.weights().iter().map(|w| w.to_string()).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

pub fn format_triplets(matrix: &StochasticMatrix) -> String {
    let mut out = String::new();
    for i in 0..matrix.n() {
        let (cols, vals) = matrix.row(i);
        for (c, p) in cols.iter().zip(vals) {
            let _ = writeln!(out, "{} {} {}", i + 1, c + 1, p);
        }
    }
    out
}

/// Reads triplets back into a matrix of dimension `n`.
pub fn parse_triplets(text: &str, n: usize) -> Result<StochasticMatrix> {
    let mut rows = vec![Vec::new(); n];
    for (line, body) in content_lines(text) {
        let toks: Vec<&str> = body.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(Error::Parse { line, reason: format!("expected 3 fields, found {}", toks.len()) });
        }
        let idx = |s: &str| -> Result<usize> {
            let v: usize = s.parse().map_err(|e| Error::Parse { line, reason: format!("{s:?}: {e}") })?;
            if v == 0 || v > n {
                return Err(Error::Parse { line, reason: format!("index {v} outside 1..={n}") });
            }
            Ok(v - 1)
        };
        let (i, j) = (idx(toks[0])?, idx(toks[1])?);
        let p: f64 = toks[2].parse().map_err(|e| Error::Parse { line, reason: format!("{:?}: {e}", toks[2]) })?;
        rows[i].push((j, p));
    }
    StochasticMatrix::from_rows(n, rows)
}
