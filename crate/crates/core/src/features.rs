//! Interpretable feature space: indicators `1[x_j <= b]` over quantile cut
//! points of each attribute.

use std::fmt::Write as _;

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Default number of quantile bins per attribute.
pub const DEFAULT_BINS: usize = 4;

/// The indicator `1[x_attribute <= bound]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feature {
    pub attribute: usize,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCatalog {
    attribute_names: Vec<String>,
    features: Vec<Feature>,
    bins_per_attribute: usize,
    /// Strictly increasing bounds per attribute.
    cut_points: Vec<Vec<f64>>,
    /// Index of the first feature of each attribute.
    offsets: Vec<usize>,
}

/// Binary embedding of an instance: bit `i` is set iff the attribute of
/// feature `i` is at most that feature's bound.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InterpretableVector(pub Vec<bool>);

impl InterpretableVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn hamming(&self, other: &InterpretableVector) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }
}

/// Quantile of sorted data with linear interpolation between order
/// statistics: position `p * (n - 1)`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

/// Builds the catalog from training data: per attribute, the `q - 1`
/// interior quantiles with duplicates collapsed. Bounds at or above the
/// attribute's maximum are dropped since their indicator is constant on the
/// training data. Zero-variance attributes contribute nothing.
pub fn build_catalog(train: &Dataset, q: usize) -> Result<FeatureCatalog> {
    if q < 2 {
        return Err(Error::InvalidConfig(format!(
            "bins per attribute must be at least 2, got {q}"
        )));
    }
    let mut cut_points = Vec::with_capacity(train.num_attributes());
    for j in 0..train.num_attributes() {
        let mut values = train.column(j);
        values.sort_by(f64::total_cmp);
        let max = values[values.len() - 1];
        let mut cuts: Vec<f64> = Vec::with_capacity(q - 1);
        if values[0] < max {
            for i in 1..q {
                let b = quantile_sorted(&values, i as f64 / q as f64);
                if b < max && cuts.last().is_none_or(|&last| b > last) {
                    cuts.push(b);
                }
            }
        }
        cut_points.push(cuts);
    }
    FeatureCatalog::from_cut_points(train.attribute_names().to_vec(), cut_points, q)
}

impl FeatureCatalog {
    pub fn from_cut_points(
        attribute_names: Vec<String>,
        cut_points: Vec<Vec<f64>>,
        bins_per_attribute: usize,
    ) -> Result<Self> {
        if cut_points.len() != attribute_names.len() {
            return Err(Error::Schema(format!(
                "{} cut-point lists for {} attributes",
                cut_points.len(),
                attribute_names.len()
            )));
        }
        let mut features = Vec::new();
        let mut offsets = Vec::with_capacity(cut_points.len());
        for (j, cuts) in cut_points.iter().enumerate() {
            if cuts.windows(2).any(|w| w[0] >= w[1]) || cuts.iter().any(|c| !c.is_finite()) {
                return Err(Error::Schema(format!(
                    "cut points of attribute {j} are not strictly increasing"
                )));
            }
            offsets.push(features.len());
            features.extend(cuts.iter().map(|&bound| Feature {
                attribute: j,
                bound,
            }));
        }
        if features.is_empty() {
            return Err(Error::NoUsableFeatures);
        }
        Ok(FeatureCatalog {
            attribute_names,
            features,
            bins_per_attribute,
            cut_points,
            offsets,
        })
    }

    /// Number of features `M`.
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn feature(&self, i: usize) -> Result<Feature> {
        self.features.get(i).copied().ok_or(Error::IndexOutOfRange {
            index: i,
            len: self.len(),
        })
    }

    pub fn bins_per_attribute(&self) -> usize {
        self.bins_per_attribute
    }

    pub fn num_attributes(&self) -> usize {
        self.attribute_names.len()
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn cut_points(&self, attribute: usize) -> &[f64] {
        &self.cut_points[attribute]
    }

    /// Range of feature indices belonging to `attribute`.
    pub fn features_of(&self, attribute: usize) -> std::ops::Range<usize> {
        let start = self.offsets[attribute];
        start..start + self.cut_points[attribute].len()
    }

    /// Bin index of `value`: 0 for `(-inf, b_1]`, `i` for `(b_i, b_{i+1}]`,
    /// and the number of cuts for the open top bin.
    pub fn bin_of(&self, attribute: usize, value: f64) -> usize {
        self.cut_points[attribute].partition_point(|&b| value > b)
    }

    pub fn embed(&self, x: &[f64]) -> InterpretableVector {
        InterpretableVector(
            self.features
                .iter()
                .map(|f| x[f.attribute] <= f.bound)
                .collect(),
        )
    }

    /// Human-readable constraint: `"name ≤ b"`, or `"b < name"` for the
    /// complemented feature.
    pub fn feature_description(&self, i: usize, complemented: bool) -> Result<String> {
        let f = self.feature(i)?;
        let name = &self.attribute_names[f.attribute];
        Ok(if complemented {
            format!("{} < {name}", format_bound(f.bound))
        } else {
            format!("{name} ≤ {}", format_bound(f.bound))
        })
    }

    /// One line per feature, `index,attribute_name,bound`, after a `# q=<q>`
    /// comment line.
    pub fn to_text(&self) -> String {
        let mut out = format!("# q={}\n", self.bins_per_attribute);
        for (i, f) in self.features.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i},{},{}",
                quote_field(&self.attribute_names[f.attribute]),
                f.bound
            );
        }
        out
    }

    /// Parses [`FeatureCatalog::to_text`] output against the dataset's
    /// attribute names.
    pub fn from_text(text: &str, attribute_names: &[String]) -> Result<Self> {
        let mut q = DEFAULT_BINS;
        let mut cut_points = vec![Vec::new(); attribute_names.len()];
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        if let Some(line) = text.lines().find(|l| l.starts_with("# q=")) {
            q = line[4..]
                .trim()
                .parse()
                .map_err(|_| Error::format("feature catalog", format!("bad header {line:?}")))?;
        }
        for (expected, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::format("feature catalog", e.to_string()))?;
            if record.len() != 3 {
                return Err(Error::format(
                    "feature catalog",
                    "expected 3 fields per line",
                ));
            }
            let index: usize = record[0]
                .parse()
                .map_err(|_| Error::format("feature catalog", "bad index"))?;
            if index != expected {
                return Err(Error::format(
                    "feature catalog",
                    "indices must be consecutive",
                ));
            }
            let attribute = attribute_names
                .iter()
                .position(|n| n == &record[1])
                .ok_or_else(|| {
                    Error::format(
                        "feature catalog",
                        format!("unknown attribute {:?}", &record[1]),
                    )
                })?;
            let bound: f64 = record[2]
                .parse()
                .map_err(|_| Error::format("feature catalog", "bad bound"))?;
            cut_points[attribute].push(bound);
        }
        let catalog = FeatureCatalog::from_cut_points(attribute_names.to_vec(), cut_points, q)?;
        Ok(catalog)
    }
}

fn quote_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Bound formatting used in rule renderings, e.g. `12.85` or `755.0`.
pub fn format_bound(b: f64) -> String {
    format!("{b:?}")
}
