//! Fidelity of extracted explanations against the model's own labels.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{Category, LabeledDataset};
use crate::rules::{CategoryExplanation, Clustering};

/// One-vs-rest confusion counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    /// Counts `(predicted, actual)` pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = Confusion::default();
        for (predicted, actual) in pairs {
            match (predicted, actual) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Harmonic mean of precision and recall; 0 when there is no true
    /// positive.
    pub fn f1(&self) -> f64 {
        if self.tp == 0 {
            return 0.0;
        }
        2.0 * self.tp as f64 / (2 * self.tp + self.fp + self.fn_) as f64
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub category: Category,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub rectangle_count: usize,
    pub constraint_count: usize,
}

/// Precision, recall and F1 of rectangle membership against the model's
/// one-vs-rest labels.
pub fn category_f1(explanation: &CategoryExplanation, data: &LabeledDataset) -> CategoryScore {
    let labels = data.target_mask(explanation.category);
    let c = explanation.confusion(data.dataset().rows(), &labels);
    CategoryScore {
        category: explanation.category,
        precision: c.precision(),
        recall: c.recall(),
        f1: c.f1(),
        rectangle_count: explanation.rectangle_count(),
        constraint_count: explanation.constraint_count(),
    }
}

/// Unweighted mean of per-category F1.
pub fn macro_f1(scores: &[CategoryScore]) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().map(|s| s.f1).sum::<f64>() / scores.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub per_category: Vec<CategoryScore>,
    pub macro_f1: f64,
    pub dataset_split: Split,
    pub model_descriptor: String,
}

/// Scores every category of `explanations` on `data`. Categories without an
/// explanation count as F1 0.
pub fn fidelity_report(
    explanations: &[CategoryExplanation],
    data: &LabeledDataset,
    split: Split,
    model_descriptor: &str,
) -> FidelityReport {
    let per_category: Vec<CategoryScore> = Category::all(data.num_categories())
        .map(|c| match explanations.iter().find(|e| e.category == c) {
            Some(e) => category_f1(e, data),
            None => category_f1(&CategoryExplanation::unexplained(c), data),
        })
        .collect();
    FidelityReport {
        macro_f1: macro_f1(&per_category),
        per_category,
        dataset_split: split,
        model_descriptor: model_descriptor.to_owned(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PuritySummary {
    pub r: usize,
    pub clusters: usize,
    pub median: f64,
    pub mean: f64,
    pub min: f64,
}

/// Median, mean and minimum purity over all clusters of all clusterings
/// sharing one `r`. Returns `None` when there are no clusters.
pub fn purity_summary(r: usize, clusterings: &[&Clustering]) -> Option<PuritySummary> {
    summarize_purities(r, clusterings.iter().flat_map(|c| c.purities()).collect())
}

/// Median, mean and minimum of pooled cluster purities.
pub fn summarize_purities(r: usize, mut purities: Vec<f64>) -> Option<PuritySummary> {
    if purities.is_empty() {
        return None;
    }
    purities.sort_by(f64::total_cmp);
    let n = purities.len();
    let median = if n % 2 == 1 {
        purities[n / 2]
    } else {
        (purities[n / 2 - 1] + purities[n / 2]) / 2.0
    };
    Some(PuritySummary {
        r,
        clusters: n,
        median,
        mean: purities.iter().sum::<f64>() / n as f64,
        min: purities[0],
    })
}

/// Text rendering: per category, one rule line per rectangle
/// followed by the fidelity numbers of each report.
pub fn render_text(
    explanations: &[CategoryExplanation],
    attribute_names: &[String],
    category_names: &[String],
    reports: &[&FidelityReport],
) -> String {
    let mut out = String::new();
    if let Some(first) = reports.first() {
        let _ = writeln!(out, "model: {}", first.model_descriptor);
    }
    for report in reports {
        let _ = writeln!(
            out,
            "macro F1 ({}): {:.4}",
            report.dataset_split.as_str(),
            report.macro_f1
        );
    }
    for (c, explanation) in explanations.iter().enumerate() {
        let name = category_names
            .get(explanation.category.index())
            .map(String::as_str)
            .unwrap_or("?");
        let _ = writeln!(out);
        let _ = writeln!(out, "category {} ({name})", explanation.category);
        if explanation.unexplained || explanation.rectangles.is_empty() {
            let _ = writeln!(out, "  no rule extracted");
        } else {
            for rect in &explanation.rectangles {
                let _ = writeln!(out, "  {}", rect.describe(attribute_names));
            }
        }
        for report in reports {
            if let Some(s) = report.per_category.get(c) {
                let _ = writeln!(
                    out,
                    "  {}: precision {:.4} recall {:.4} F1 {:.4} ({} rectangles, {} constraints)",
                    report.dataset_split.as_str(),
                    s.precision,
                    s.recall,
                    s.f1,
                    s.rectangle_count,
                    s.constraint_count
                );
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::rules::{ClusterStats, Interval, Rectangle};

    fn one_dim(values: &[f64], labels: &[usize]) -> LabeledDataset {
        let ds = Dataset::new(vec!["x".into()], values.iter().map(|&v| vec![v]).collect()).unwrap();
        LabeledDataset::new(
            ds,
            labels.iter().map(|&l| Category(l)).collect(),
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    fn rule(upper: f64) -> CategoryExplanation {
        CategoryExplanation {
            category: Category(1),
            rectangles: vec![Rectangle::unconstrained().constrain(0, Interval::at_most(upper))],
            sources: vec![],
            unexplained: false,
        }
    }

    #[test]
    fn perfect_cover() {
        let data = one_dim(&[1.0, 2.0, 3.0, 4.0], &[1, 1, 2, 2]);
        let s = category_f1(&rule(2.0), &data);
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn empty_rule_set_scores_zero() {
        let data = one_dim(&[1.0, 2.0], &[1, 2]);
        let s = category_f1(&CategoryExplanation::unexplained(Category(1)), &data);
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn six_instance_hand_count() {
        // x <= 3 covers 1,2,3; truth is {1,2,4}: TP 2, FP 1, FN 1.
        let data = one_dim(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[1, 1, 2, 1, 2, 2]);
        let s = category_f1(&rule(3.0), &data);
        let two_thirds = 2.0 / 3.0;
        assert_eq!(
            (s.precision, s.recall, s.f1),
            (two_thirds, two_thirds, two_thirds)
        );
    }

    #[test]
    fn macro_is_plain_mean() {
        let data = one_dim(&[1.0, 2.0], &[1, 2]);
        let report = fidelity_report(&[rule(1.0)], &data, Split::Train, "m");
        assert_eq!(report.per_category.len(), 2);
        assert_eq!(report.macro_f1, 0.5);
    }

    fn clustering(purities: &[f64]) -> Clustering {
        Clustering {
            assignments: vec![],
            centroids: vec![],
            stats: purities
                .iter()
                .map(|&p| ClusterStats {
                    size: 2,
                    target_count: 1,
                    purity: p,
                    majority: false,
                })
                .collect(),
            inertia: 0.0,
        }
    }

    #[test]
    fn purity_statistics() {
        let pure = clustering(&[1.0, 1.0, 1.0]);
        let s = purity_summary(3, &[&pure]).unwrap();
        assert_eq!((s.median, s.mean, s.min), (1.0, 1.0, 1.0));
        let mixed = clustering(&[1.0, 0.5]);
        let s = purity_summary(2, &[&mixed]).unwrap();
        assert_eq!((s.median, s.mean, s.min), (0.75, 0.75, 0.5));
        assert!(purity_summary(1, &[]).is_none());
    }

    #[test]
    fn unexplained_rendering() {
        let text = render_text(
            &[CategoryExplanation::unexplained(Category(1))],
            &["x".into()],
            &["a".into()],
            &[],
        );
        assert!(text.contains("no rule extracted"));
    }
}
