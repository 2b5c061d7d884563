//! Plain-text dense matrix format used for contribution matrices and NMF
//! factors.
//!
//! ```text
//! # rectex matrix v1
//! kind=contributions rows=<R> cols=<C> target=<c>
//! labels=0,1,1,...
//! <R lines of C comma-separated reals>
//! ```
//!
//! `target` and `labels` are optional. Reals use the shortest decimal form
//! that parses back to the same value, so a dump reloads bit-exactly.

use std::fmt::Write as _;

use ndarray::Array2;

use crate::data::Category;
use crate::error::{Error, Result};

const MAGIC: &str = "# rectex matrix v1";

#[derive(Debug, Clone, PartialEq)]
pub struct TextMatrix {
    pub kind: String,
    pub values: Array2<f64>,
    pub target: Option<Category>,
    pub labels: Option<Vec<bool>>,
}

impl TextMatrix {
    pub fn to_text(&self) -> String {
        let (rows, cols) = self.values.dim();
        let mut out = String::with_capacity(rows * cols * 12 + 64);
        out.push_str(MAGIC);
        out.push('\n');
        let _ = write!(out, "kind={} rows={rows} cols={cols}", self.kind);
        if let Some(t) = self.target {
            let _ = write!(out, " target={t}");
        }
        out.push('\n');
        if let Some(labels) = &self.labels {
            out.push_str("labels=");
            for (i, &l) in labels.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push(if l { '1' } else { '0' });
            }
            out.push('\n');
        }
        for row in self.values.rows() {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::format("text matrix", msg);
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(bad("missing header line".into()));
        }
        let meta = lines
            .next()
            .ok_or_else(|| bad("missing shape line".into()))?;
        let mut kind = String::new();
        let (mut rows, mut cols, mut target) = (None, None, None);
        for token in meta.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| bad(format!("bad token {token:?}")))?;
            let parse_usize = |v: &str| v.parse::<usize>().map_err(|_| bad(format!("bad {key}")));
            match key {
                "kind" => kind = value.to_owned(),
                "rows" => rows = Some(parse_usize(value)?),
                "cols" => cols = Some(parse_usize(value)?),
                "target" => target = Some(Category(parse_usize(value)?)),
                _ => return Err(bad(format!("unknown key {key:?}"))),
            }
        }
        let rows = rows.ok_or_else(|| bad("missing rows".into()))?;
        let cols = cols.ok_or_else(|| bad("missing cols".into()))?;

        let mut labels = None;
        let mut data = Vec::with_capacity(rows * cols);
        let mut seen_rows = 0;
        for line in lines {
            if let Some(rest) = line.strip_prefix("labels=") {
                let parsed: Result<Vec<bool>> = rest
                    .split(',')
                    .map(|s| match s {
                        "0" => Ok(false),
                        "1" => Ok(true),
                        _ => Err(bad(format!("bad label {s:?}"))),
                    })
                    .collect();
                let parsed = parsed?;
                if parsed.len() != cols {
                    return Err(bad(format!("{} labels for {cols} columns", parsed.len())));
                }
                labels = Some(parsed);
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let before = data.len();
            for cell in line.split(',') {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| bad(format!("bad value {cell:?} on row {seen_rows}")))?;
                data.push(v);
            }
            if data.len() - before != cols {
                return Err(bad(format!("row {seen_rows} has the wrong width")));
            }
            seen_rows += 1;
        }
        if seen_rows != rows {
            return Err(bad(format!("expected {rows} rows, found {seen_rows}")));
        }
        let values = Array2::from_shape_vec((rows, cols), data).map_err(|e| bad(e.to_string()))?;
        Ok(TextMatrix {
            kind,
            values,
            target,
            labels,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            rows in 1usize..5,
            cols in 1usize..6,
            seed in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::ZERO, 30),
            with_labels in any::<bool>(),
        ) {
            let values = Array2::from_shape_fn((rows, cols), |(i, j)| seed[(i * cols + j) % seed.len()]);
            let m = TextMatrix {
                kind: "H".into(),
                values,
                target: Some(Category(2)),
                labels: with_labels.then(|| (0..cols).map(|j| j % 2 == 0).collect()),
            };
            let back = TextMatrix::from_text(&m.to_text()).unwrap();
            prop_assert_eq!(back.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            m.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!(back.labels, m.labels);
            prop_assert_eq!(back.target, m.target);
        }
    }

    #[test]
    fn wrong_width_rejected() {
        let text = "# rectex matrix v1\nkind=W rows=1 cols=2\n1,2,3\n";
        assert!(TextMatrix::from_text(text).is_err());
    }
}
