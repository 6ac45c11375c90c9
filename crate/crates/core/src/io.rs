//! JSONL readers and writers for distributions and top-k records.
//!
//! Each distribution line is `{"p": [..]}`; each top-k line is
//! `{"V": .., "topk": [[id, prob], ..]}`. Blank lines are skipped. Errors
//! carry the 1-based line number.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simplex::{ProbDist, SimplexError};
use crate::topk::{TopKError, TruncatedDist};

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("read failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed record: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: {source}")]
    Invalid { line: usize, source: SimplexError },
    #[error("line {line}: {source}")]
    InvalidTopK { line: usize, source: TopKError },
}

impl RecordError {
    /// `true` for malformed or invalid input, `false` for IO failures.
    pub fn is_validation(&self) -> bool {
        !matches!(self, RecordError::Io(_))
    }
}

#[derive(Deserialize)]
struct RawDist {
    p: Vec<f64>,
}

#[derive(Serialize)]
struct DistRecord<'a> {
    p: &'a [f64],
}

fn lines<R: BufRead>(reader: R) -> impl Iterator<Item = (usize, std::io::Result<String>)> {
    reader.lines().enumerate().map(|(i, l)| (i + 1, l))
}

pub fn read_dists<R: BufRead>(reader: R) -> Result<Vec<ProbDist>, RecordError> {
    let mut out = Vec::new();
    for (line, text) in lines(reader) {
        let text = text?;
        if text.trim().is_empty() {
            continue;
        }
        let raw: RawDist = serde_json::from_str(&text).map_err(|e| RecordError::Parse {
            line,
            msg: e.to_string(),
        })?;
        let p = ProbDist::validate(raw.p).map_err(|source| RecordError::Invalid { line, source })?;
        out.push(p);
    }
    Ok(out)
}

pub fn read_truncated<R: BufRead>(reader: R) -> Result<Vec<TruncatedDist>, RecordError> {
    read_truncated_with(reader, None)
}

/// Like [`read_truncated`], but records may omit `V` when `default_vocab` is
/// given. A record whose `V` disagrees with `default_vocab` is rejected.
pub fn read_truncated_with<R: BufRead>(
    reader: R,
    default_vocab: Option<usize>,
) -> Result<Vec<TruncatedDist>, RecordError> {
    #[derive(Deserialize)]
    struct Raw {
        #[serde(rename = "V")]
        v: Option<usize>,
        topk: Vec<(usize, f64)>,
    }
    let mut out = Vec::new();
    for (line, text) in lines(reader) {
        let text = text?;
        if text.trim().is_empty() {
            continue;
        }
        let raw: Raw = serde_json::from_str(&text).map_err(|e| RecordError::Parse {
            line,
            msg: e.to_string(),
        })?;
        let v = match (raw.v, default_vocab) {
            (Some(a), Some(b)) if a != b => {
                return Err(RecordError::Parse {
                    line,
                    msg: format!("V = {a} disagrees with the requested vocabulary {b}"),
                })
            }
            (Some(v), _) | (None, Some(v)) => v,
            (None, None) => {
                return Err(RecordError::Parse {
                    line,
                    msg: "missing field `V`".into(),
                })
            }
        };
        let t = TruncatedDist::new(raw.topk, v).map_err(|source| RecordError::InvalidTopK { line, source })?;
        out.push(t);
    }
    Ok(out)
}

/// One `{"p":[..]}` line. `decimals = None` gives shortest round-trip output.
pub fn render_dist(p: &ProbDist, decimals: Option<usize>) -> String {
    match decimals {
        None => serde_json::to_string(&DistRecord { p: p.values() }).expect("finite floats serialize"),
        Some(d) => {
            let body: Vec<String> = p.values().iter().map(|v| format!("{v:.d$}")).collect();
            format!("{{\"p\":[{}]}}", body.join(","))
        }
    }
}

pub fn write_dists<W: Write>(mut w: W, dists: &[ProbDist], decimals: Option<usize>) -> std::io::Result<()> {
    for p in dists {
        writeln!(w, "{}", render_dist(p, decimals))?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_and_renders() {
        let input = "{\"p\":[0.8,0.2]}\n\n{\"p\": [0.25, 0.25, 0.5]}\n";
        let ds = read_dists(input.as_bytes()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(render_dist(&ds[0], None), "{\"p\":[0.8,0.2]}");
        let q = ProbDist::validate(vec![2.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert_eq!(render_dist(&q, Some(4)), "{\"p\":[0.6667,0.3333]}");
        let back = read_dists(render_dist(&q, None).as_bytes()).unwrap();
        assert_eq!(back[0], q);
    }

    #[test]
    fn errors_cite_line() {
        let e = read_dists("not json\n".as_bytes()).unwrap_err();
        assert!(matches!(e, RecordError::Parse { line: 1, .. }));
        assert!(e.to_string().contains("line 1"));
        let e = read_dists("{\"p\":[0.5,0.5]}\n{\"p\":[0.9,0.3]}\n".as_bytes()).unwrap_err();
        assert!(matches!(e, RecordError::Invalid { line: 2, .. }));
        assert!(e.is_validation());
    }

    #[test]
    fn reads_topk_records() {
        let ts = read_truncated("{\"V\":5,\"topk\":[[0,0.5],[1,0.3]]}\n".as_bytes()).unwrap();
        assert_eq!(ts[0].vocab(), 5);
        let e = read_truncated("{\"V\":2,\"topk\":[[0,0.5],[1,0.3]]}\n".as_bytes()).unwrap_err();
        assert!(matches!(e, RecordError::InvalidTopK { line: 1, .. }));
        assert!(read_truncated("{\"topk\":[[0,0.5]]}\n".as_bytes()).is_err());
    }

    #[test]
    fn default_vocab_fills_and_checks() {
        let ts = read_truncated_with("{\"topk\":[[3,0.5]]}\n".as_bytes(), Some(6)).unwrap();
        assert_eq!(ts[0].vocab(), 6);
        let e = read_truncated_with("\n{\"V\":5,\"topk\":[[3,0.5]]}\n".as_bytes(), Some(6)).unwrap_err();
        assert!(matches!(e, RecordError::Parse { line: 2, .. }));
    }
}
