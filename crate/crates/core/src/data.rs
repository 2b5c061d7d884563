//! Numerical tabular datasets: loading, validation, stratified splitting and
//! labeling by a black-box classifier.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blackbox::Classifier;
use crate::error::{Error, Result};

/// A 1-based category id in `1..=C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Category(pub usize);

impl Category {
    /// Zero-based position, for indexing per-category tables.
    pub fn index(self) -> usize {
        self.0 - 1
    }

    pub fn from_index(index: usize) -> Self {
        Category(index + 1)
    }

    /// All categories `1..=count`.
    pub fn all(count: usize) -> impl Iterator<Item = Category> {
        (1..=count).map(Category)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    attribute_names: Vec<String>,
    rows: Vec<Vec<f64>>,
    source_labels: Option<Vec<Category>>,
    category_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset, validating shape, finiteness and attribute names.
    pub fn new(attribute_names: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_labels(attribute_names, rows, None, Vec::new())
    }

    pub fn with_labels(
        attribute_names: Vec<String>,
        rows: Vec<Vec<f64>>,
        source_labels: Option<Vec<Category>>,
        category_names: Vec<String>,
    ) -> Result<Self> {
        if attribute_names.is_empty() {
            return Err(Error::Schema("dataset needs at least one attribute".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &attribute_names {
            if name.trim().is_empty() {
                return Err(Error::Schema("empty attribute name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate attribute name {name:?}")));
            }
        }
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let m = attribute_names.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Schema(format!(
                    "row {i} has {} values, expected {m}",
                    row.len()
                )));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteValue { row: i, column: j });
            }
        }
        if let Some(labels) = &source_labels {
            if labels.len() != rows.len() {
                return Err(Error::Schema(format!(
                    "{} labels for {} rows",
                    labels.len(),
                    rows.len()
                )));
            }
            if let Some(bad) = labels
                .iter()
                .find(|c| c.0 == 0 || c.0 > category_names.len())
            {
                return Err(Error::Schema(format!(
                    "label {bad} outside 1..={}",
                    category_names.len()
                )));
            }
        }
        Ok(Dataset {
            attribute_names,
            rows,
            source_labels,
            category_names,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Number of attributes `m`.
    pub fn num_attributes(&self) -> usize {
        self.attribute_names.len()
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn source_labels(&self) -> Option<&[Category]> {
        self.source_labels.as_deref()
    }

    /// Names of the source-label categories, indexed by `Category::index`.
    pub fn category_names(&self) -> &[String] {
        &self.category_names
    }

    /// Column `j` as an owned vector.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// Indices of zero-variance attributes. They are kept in the dataset but
    /// contribute no interpretable features.
    pub fn constant_attributes(&self) -> Vec<usize> {
        (0..self.num_attributes())
            .filter(|&j| {
                let first = self.rows[0][j];
                self.rows.iter().all(|r| r[j] == first)
            })
            .collect()
    }

    fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            attribute_names: self.attribute_names.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            source_labels: self
                .source_labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            category_names: self.category_names.clone(),
        }
    }

    /// Writes the canonical delimited form: header row, `'\n'` line endings,
    /// shortest round-trip decimal reals, label column last when present.
    pub fn write_delimited<W: Write>(&self, out: W, options: &LoadOptions) -> Result<()> {
        let mut writer = csv::WriterBuilder::new()
            .delimiter(options.delimiter)
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let label_col = options.label_column.as_deref().unwrap_or("label");
        let mut header: Vec<&str> = self.attribute_names.iter().map(String::as_str).collect();
        if self.source_labels.is_some() {
            header.push(label_col);
        }
        writer.write_record(&header).map_err(csv_error)?;
        for (i, row) in self.rows.iter().enumerate() {
            let mut record: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            if let Some(labels) = &self.source_labels {
                record.push(self.category_names[labels[i].index()].clone());
            }
            writer.write_record(&record).map_err(csv_error)?;
        }
        writer
            .flush()
            .map_err(|e| Error::io("<dataset writer>", e))?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>, options: &LoadOptions) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_delimited(std::io::BufWriter::new(file), options)
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format {
        what: "delimited text",
        message: e.to_string(),
    }
}

/// How to read a delimited file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadOptions {
    pub delimiter: u8,
    /// Name of the column holding ground-truth labels; it is excluded from the
    /// attributes.
    pub label_column: Option<String>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            delimiter: b',',
            label_column: None,
        }
    }
}

impl LoadOptions {
    pub fn with_label(label_column: impl Into<String>) -> Self {
        LoadOptions {
            label_column: Some(label_column.into()),
            ..Default::default()
        }
    }
}

/// Loads a delimited text file with a header row.
///
/// Parse errors report 1-based file line and column numbers (the header is
/// line 1).
pub fn load_dataset(path: impl AsRef<Path>, options: &LoadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file, options)
}

pub fn read_dataset<R: Read>(input: R, options: &LoadOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(str::to_owned)
        .collect();
    let label_pos = match &options.label_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Schema(format!("label column {name:?} not in header")))?,
        ),
        None => None,
    };
    let attribute_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != label_pos)
        .map(|(_, h)| h.clone())
        .collect();

    let mut rows = Vec::new();
    let mut raw_labels = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let line = r + 2;
        let record = record.map_err(|e| Error::Parse {
            row: line,
            column: 0,
            message: e.to_string(),
        })?;
        if record.len() != header.len() {
            return Err(Error::Parse {
                row: line,
                column: record.len().min(header.len()) + 1,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let mut row = Vec::with_capacity(attribute_names.len());
        for (c, cell) in record.iter().enumerate() {
            if Some(c) == label_pos {
                raw_labels.push(cell.to_owned());
                continue;
            }
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                row: line,
                column: c + 1,
                message: format!("{cell:?} is not a real number"),
            })?;
            if !value.is_finite() {
                return Err(Error::NonFiniteValue {
                    row: line,
                    column: c + 1,
                });
            }
            row.push(value);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let (labels, names) = if label_pos.is_some() {
        let (l, n) = encode_labels(&raw_labels);
        (Some(l), n)
    } else {
        (None, Vec::new())
    };
    Dataset::with_labels(attribute_names, rows, labels, names)
}

/// Maps raw label strings onto categories `1..=C`. Numeric labels are ordered
/// numerically, anything else lexicographically.
fn encode_labels(raw: &[String]) -> (Vec<Category>, Vec<String>) {
    let mut names: Vec<String> = raw.to_vec();
    names.sort();
    names.dedup();
    let numeric: Option<Vec<f64>> = names.iter().map(|n| n.parse::<f64>().ok()).collect();
    if let Some(values) = numeric {
        let mut paired: Vec<(f64, String)> = values.into_iter().zip(names).collect();
        paired.sort_by(|a, b| a.0.total_cmp(&b.0));
        names = paired.into_iter().map(|(_, n)| n).collect();
    }
    let lookup: BTreeMap<&str, Category> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), Category::from_index(i)))
        .collect();
    let labels = raw.iter().map(|r| lookup[r.as_str()]).collect();
    (labels, names)
}

/// Number of training rows for a split: `floor(fraction * N)`, so the test
/// side receives `ceil((1 - fraction) * N)`.
pub fn train_size(n: usize, train_fraction: f64) -> usize {
    ((train_fraction * n as f64) + 1e-9).floor() as usize
}

/// Deterministic shuffled split, stratified by source labels when present.
pub fn split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let n = dataset.len();
    let n_train = train_size(n, train_fraction);
    if n_train == 0 || n_train == n {
        return Err(Error::DegenerateSplit {
            train: n_train,
            test: n - n_train,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let strata: Vec<Vec<usize>> = match dataset.source_labels() {
        Some(labels) => {
            let mut by_class: BTreeMap<Category, Vec<usize>> = BTreeMap::new();
            for (i, &c) in labels.iter().enumerate() {
                by_class.entry(c).or_default().push(i);
            }
            by_class.into_values().collect()
        }
        None => vec![(0..n).collect()],
    };

    // Largest-remainder allocation so the strata quotas sum to n_train.
    let ideal: Vec<f64> = strata
        .iter()
        .map(|s| s.len() as f64 * n_train as f64 / n as f64)
        .collect();
    let mut quota: Vec<usize> = ideal.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..strata.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = ideal[a] - ideal[a].floor();
        let fb = ideal[b] - ideal[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut missing = n_train - quota.iter().sum::<usize>();
    for &s in order.iter().cycle() {
        if missing == 0 {
            break;
        }
        if quota[s] < strata[s].len() {
            quota[s] += 1;
            missing -= 1;
        }
    }

    let mut train_idx = Vec::with_capacity(n_train);
    let mut test_idx = Vec::with_capacity(n - n_train);
    for (stratum, &q) in strata.into_iter().zip(&quota) {
        let mut stratum = stratum;
        stratum.shuffle(&mut rng);
        train_idx.extend_from_slice(&stratum[..q]);
        test_idx.extend_from_slice(&stratum[q..]);
    }
    train_idx.shuffle(&mut rng);
    test_idx.shuffle(&mut rng);
    Ok((dataset.subset(&train_idx), dataset.subset(&test_idx)))
}

/// A dataset together with the black box's labeling of every row, i.e. the
/// partition of the rows into per-category sets.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    dataset: Dataset,
    model_labels: Vec<Category>,
    category_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(
        dataset: Dataset,
        model_labels: Vec<Category>,
        category_names: Vec<String>,
    ) -> Result<Self> {
        if model_labels.len() != dataset.len() {
            return Err(Error::Schema(format!(
                "{} model labels for {} rows",
                model_labels.len(),
                dataset.len()
            )));
        }
        let c = category_names.len();
        if let Some(bad) = model_labels.iter().find(|l| l.0 == 0 || l.0 > c) {
            return Err(Error::Schema(format!("model label {bad} outside 1..={c}")));
        }
        Ok(LabeledDataset {
            dataset,
            model_labels,
            category_names,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn model_labels(&self) -> &[Category] {
        &self.model_labels
    }

    pub fn num_categories(&self) -> usize {
        self.category_names.len()
    }

    pub fn category_names(&self) -> &[String] {
        &self.category_names
    }

    pub fn len(&self) -> usize {
        self.dataset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dataset.is_empty()
    }

    /// One-vs-rest view: `true` where the model assigned `target`.
    pub fn target_mask(&self, target: Category) -> Vec<bool> {
        self.model_labels.iter().map(|&l| l == target).collect()
    }

    /// Sizes of the per-category sets, indexed by `Category::index`.
    pub fn partition_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_categories()];
        for l in &self.model_labels {
            sizes[l.index()] += 1;
        }
        sizes
    }
}

/// Labels every row with the model's prediction.
pub fn label_with(dataset: &Dataset, model: &dyn Classifier) -> Result<LabeledDataset> {
    let labels = model.predict(dataset.rows())?;
    let c = model.num_categories();
    let names = if dataset.category_names().len() == c {
        dataset.category_names().to_vec()
    } else {
        (1..=c).map(|i| i.to_string()).collect()
    };
    LabeledDataset::new(dataset.clone(), labels, names)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, label: Option<&str>) -> Result<Dataset> {
        let options = LoadOptions {
            label_column: label.map(str::to_owned),
            ..Default::default()
        };
        read_dataset(text.as_bytes(), &options)
    }

    #[test]
    fn minimal_file() {
        let d = parse("a\n0.5\n", None).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.num_attributes(), 1);
        assert_eq!(d.attribute_names(), ["a"]);
        assert_eq!(d.row(0), [0.5]);
    }

    #[test]
    fn infinite_cell_is_rejected_with_coordinates() {
        let err = parse("a,b\n1,2\n3,inf\n", None).unwrap_err();
        assert!(
            matches!(err, Error::NonFiniteValue { row: 3, column: 2 }),
            "{err}"
        );
    }

    #[test]
    fn bad_cell_reports_coordinates() {
        let err = parse("a,b\n1,x\n", None).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Parse {
                    row: 2,
                    column: 2,
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn header_only_is_empty() {
        assert!(matches!(parse("a,b\n", None), Err(Error::EmptyDataset)));
    }

    #[test]
    fn duplicate_names_rejected() {
        assert!(matches!(parse("a,a\n1,2\n", None), Err(Error::Schema(_))));
    }

    #[test]
    fn label_column_by_name() {
        let d = parse("y,a\n2,0.1\n10,0.2\n2,0.3\n", Some("y")).unwrap();
        assert_eq!(d.attribute_names(), ["a"]);
        assert_eq!(d.category_names(), ["2", "10"]);
        assert_eq!(
            d.source_labels().unwrap(),
            [Category(1), Category(2), Category(1)]
        );
    }

    #[test]
    fn missing_label_column() {
        assert!(matches!(parse("a\n1\n", Some("y")), Err(Error::Schema(_))));
    }

    #[test]
    fn split_sizes_single_class() {
        let rows = (0..10).map(|i| vec![i as f64]).collect();
        let d = Dataset::with_labels(
            vec!["x".into()],
            rows,
            Some(vec![Category(1); 10]),
            vec!["only".into()],
        )
        .unwrap();
        let (train, test) = split(&d, 0.7, 3).unwrap();
        assert_eq!((train.len(), test.len()), (7, 3));
    }

    #[test]
    fn split_is_deterministic_and_exact() {
        let rows: Vec<Vec<f64>> = (0..31)
            .map(|i| vec![i as f64, (i * 7 % 5) as f64])
            .collect();
        let labels = (0..31).map(|i| Category(1 + i % 3)).collect();
        let d = Dataset::with_labels(
            vec!["a".into(), "b".into()],
            rows,
            Some(labels),
            vec!["p".into(), "q".into(), "r".into()],
        )
        .unwrap();
        let (a1, b1) = split(&d, 0.6, 11).unwrap();
        let (a2, b2) = split(&d, 0.6, 11).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        let mut all: Vec<f64> = a1.rows().iter().chain(b1.rows()).map(|r| r[0]).collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..31).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn split_degenerate() {
        let d = Dataset::new(vec!["x".into()], vec![vec![1.0], vec![2.0]]).unwrap();
        assert!(matches!(
            split(&d, 0.3, 0),
            Err(Error::DegenerateSplit { .. })
        ));
    }

    #[test]
    fn constant_attributes_flagged() {
        let d = Dataset::new(
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 5.0], vec![2.0, 5.0]],
        )
        .unwrap();
        assert_eq!(d.constant_attributes(), vec![1]);
    }
}
