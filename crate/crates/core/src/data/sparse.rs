//! SVMlight sparse text: `label idx:val idx:val ...` with 1-based, strictly
//! ascending indices. Blank lines are skipped and `#` starts a comment.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Dense samples with raw or ±1-mapped labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSamples {
    pub x: Array2<f64>,
    pub labels: Vec<f64>,
}

impl LabeledSamples {
    /// Distinct labels in ascending order.
    pub fn classes(&self) -> Vec<f64> {
        let mut c = self.labels.clone();
        c.sort_by(|a, b| a.total_cmp(b));
        c.dedup();
        c
    }
}

pub fn load_sparse_text(path: &Path, dim: Option<usize>) -> Result<LabeledSamples> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sparse_text(&text, dim, &path.display().to_string())
}

/// Parses SVMlight text. The feature dimension is the largest index seen
/// unless `dim` is given (an index beyond `dim` is then an error). With
/// exactly two distinct labels they are mapped to ±1: `{-1, +1}` stay as
/// they are, otherwise the lower label becomes -1.
pub fn parse_sparse_text(text: &str, dim: Option<usize>, source: &str) -> Result<LabeledSamples> {
    let err = |line: usize, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_idx = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| err(lineno, format!("invalid label {label_tok:?}")))?;
        if !label.is_finite() {
            return Err(err(lineno, format!("non-finite label {label_tok:?}")));
        }
        let mut feats = Vec::new();
        let mut prev = 0usize;
        for tok in tokens {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| err(lineno, format!("expected idx:val, got {tok:?}")))?;
            let idx: usize = i.parse().map_err(|_| err(lineno, format!("invalid index {i:?}")))?;
            if idx == 0 {
                return Err(err(lineno, "indices are 1-based".into()));
            }
            if idx <= prev {
                return Err(err(lineno, format!("index {idx} does not follow {prev} in ascending order")));
            }
            let val: f64 = v.parse().map_err(|_| err(lineno, format!("invalid value {v:?}")))?;
            if !val.is_finite() {
                return Err(err(lineno, format!("non-finite value at index {idx}")));
            }
            if let Some(d) = dim {
                if idx > d {
                    return Err(err(lineno, format!("index {idx} exceeds dimension {d}")));
                }
            }
            prev = idx;
            feats.push((idx, val));
        }
        max_idx = max_idx.max(prev);
        labels.push(label);
        rows.push(feats);
    }
    let d = dim.unwrap_or(max_idx);
    let mut x = Array2::zeros((rows.len(), d));
    for (r, feats) in rows.iter().enumerate() {
        for &(idx, val) in feats {
            x[[r, idx - 1]] = val;
        }
    }
    let mut out = LabeledSamples { x, labels };
    let classes = out.classes();
    if classes.len() == 2 && !(classes[0] == -1.0 && classes[1] == 1.0) {
        let low = classes[0];
        for l in &mut out.labels {
            *l = if *l == low { -1.0 } else { 1.0 };
        }
    }
    Ok(out)
}

/// Writes rows as SVMlight text; zero entries are omitted.
pub fn write_sparse_text(path: &Path, x: ArrayView2<f64>, labels: &[f64]) -> Result<()> {
    if x.nrows() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: labels.len(),
        });
    }
    let mut out = String::new();
    for (row, label) in x.rows().into_iter().zip(labels) {
        write!(out, "{label}").expect("writing to a String");
        for (j, v) in row.iter().enumerate() {
            if *v != 0.0 {
                write!(out, " {}:{v}", j + 1).expect("writing to a String");
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_examples() {
        let s = parse_sparse_text("1 1:0.5 3:2\n", Some(3), "t").unwrap();
        assert_eq!(s.labels, vec![1.0]);
        assert_eq!(s.x.row(0).to_vec(), vec![0.5, 0.0, 2.0]);

        let s = parse_sparse_text("-1\n", Some(2), "t").unwrap();
        assert_eq!(s.labels, vec![-1.0]);
        assert_eq!(s.x.row(0).to_vec(), vec![0.0, 0.0]);

        let e = parse_sparse_text("1 1:1\n\n1 2:1 1:1\n", None, "t").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
    }

    #[test]
    fn malformed_lines() {
        for bad in ["x 1:1", "1 0:1", "1 1-1", "1 1:abc", "1 4:1"] {
            assert!(parse_sparse_text(bad, Some(3), "t").is_err(), "{bad}");
        }
        assert!(parse_sparse_text("1 1:1 1:2", None, "t").is_err());
    }

    #[test]
    fn comments_and_binary_mapping() {
        let s = parse_sparse_text("# header\n0 1:1\n\n1 2:1 # trailing\n", None, "t").unwrap();
        assert_eq!(s.labels, vec![-1.0, 1.0]);
        assert_eq!(s.x.ncols(), 2);
        let m = parse_sparse_text("3 1:1\n1 1:2\n2 1:3\n", None, "t").unwrap();
        assert_eq!(m.labels, vec![3.0, 1.0, 2.0]);
        assert_eq!(m.classes(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.txt");
        let text = "1 1:0.5 3:-2.25\n-1\n1 2:1e-7\n";
        let s = parse_sparse_text(text, Some(3), "t").unwrap();
        write_sparse_text(&p, s.x.view(), &s.labels).unwrap();
        let back = load_sparse_text(&p, Some(3)).unwrap();
        assert_eq!(back, s);
    }
}
