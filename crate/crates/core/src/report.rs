//! Versioned JSON rule-set document.
//!
//! Field order is fixed by the struct definitions and maps are never used,
//! so identical runs serialize to identical bytes. Bounds are written with
//! round-trip precision; a reloaded rule set makes the same membership
//! decisions as the in-memory one.

use serde::{Deserialize, Serialize};

use crate::data::Category;
use crate::error::{Error, Result};
use crate::evaluation::{render_text, FidelityReport};
use crate::rules::{CategoryExplanation, ExtractionParams, Interval, Op, Rectangle, RuleSource};

pub const FORMAT_NAME: &str = "rectex-rules";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub source: String,
    pub train_rows: usize,
    pub test_rows: usize,
    pub attributes: Vec<String>,
    pub categories: Vec<String>,
}

/// Run-wide settings recorded alongside the rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub bins: usize,
    pub num_samples: usize,
    pub kernel_width: f64,
    pub ridge_strength: f64,
    pub flip_probability: f64,
    pub rank: usize,
    pub nmf_max_iters: usize,
    pub nmf_tolerance: f64,
    pub r_max: usize,
    pub kmeans_restarts: usize,
    pub majority_share: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintDoc {
    pub attribute: String,
    pub op: Op,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectangleDoc {
    pub constraints: Vec<ConstraintDoc>,
    pub cluster: usize,
    pub cluster_size: usize,
    pub bases: Vec<usize>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRules {
    pub category: Category,
    pub name: String,
    pub unexplained: bool,
    pub params: Option<ExtractionParams>,
    pub rectangles: Vec<RectangleDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSetDocument {
    pub format: String,
    pub version: u32,
    pub dataset: DatasetDescriptor,
    pub model: String,
    pub test_accuracy: Option<f64>,
    pub hyperparameters: Hyperparameters,
    pub categories: Vec<CategoryRules>,
    pub fidelity: Vec<FidelityReport>,
}

impl RuleSetDocument {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dataset: DatasetDescriptor,
        model: String,
        test_accuracy: Option<f64>,
        hyperparameters: Hyperparameters,
        explanations: &[CategoryExplanation],
        params: &[Option<ExtractionParams>],
        fidelity: Vec<FidelityReport>,
    ) -> Self {
        let categories = explanations
            .iter()
            .zip(params)
            .map(|(e, p)| CategoryRules {
                category: e.category,
                name: dataset
                    .categories
                    .get(e.category.index())
                    .cloned()
                    .unwrap_or_else(|| e.category.to_string()),
                unexplained: e.unexplained,
                params: *p,
                rectangles: e
                    .rectangles
                    .iter()
                    .zip(&e.sources)
                    .map(|(rect, src)| RectangleDoc {
                        constraints: rect
                            .constraints()
                            .into_iter()
                            .map(|c| ConstraintDoc {
                                attribute: dataset.attributes[c.attribute].clone(),
                                op: c.op,
                                bound: c.bound,
                            })
                            .collect(),
                        cluster: src.cluster,
                        cluster_size: src.cluster_size,
                        bases: src.bases.clone(),
                        weights: src.weights.clone(),
                    })
                    .collect(),
            })
            .collect();
        RuleSetDocument {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            dataset,
            model,
            test_accuracy,
            hyperparameters,
            categories,
            fidelity,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("rule set serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: RuleSetDocument =
            serde_json::from_str(text).map_err(|e| Error::format("rule set", e.to_string()))?;
        if doc.format != FORMAT_NAME {
            return Err(Error::format(
                "rule set",
                format!("unknown format {:?}", doc.format),
            ));
        }
        if doc.version != FORMAT_VERSION {
            return Err(Error::format(
                "rule set",
                format!("unsupported version {}", doc.version),
            ));
        }
        Ok(doc)
    }

    /// Rebuilds the in-memory rule sets, resolving attribute names against
    /// the document's attribute list.
    pub fn explanations(&self) -> Result<Vec<CategoryExplanation>> {
        let names = &self.dataset.attributes;
        self.categories
            .iter()
            .map(|cat| {
                let mut rectangles = Vec::new();
                let mut sources = Vec::new();
                for doc in &cat.rectangles {
                    let mut rect = Rectangle::unconstrained();
                    for c in &doc.constraints {
                        let attribute =
                            names
                                .iter()
                                .position(|n| *n == c.attribute)
                                .ok_or_else(|| {
                                    Error::format(
                                        "rule set",
                                        format!("unknown attribute {:?}", c.attribute),
                                    )
                                })?;
                        let interval = match c.op {
                            Op::AtMost => Interval::at_most(c.bound),
                            Op::GreaterThan => Interval::greater_than(c.bound),
                        };
                        rect = rect.constrain(attribute, interval);
                    }
                    rectangles.push(rect);
                    sources.push(RuleSource {
                        cluster: doc.cluster,
                        cluster_size: doc.cluster_size,
                        bases: doc.bases.clone(),
                        weights: doc.weights.clone(),
                    });
                }
                Ok(CategoryExplanation {
                    category: cat.category,
                    rectangles,
                    sources,
                    unexplained: cat.unexplained,
                })
            })
            .collect()
    }

    /// Human-readable report.
    pub fn render(&self) -> Result<String> {
        let explanations = self.explanations()?;
        let reports: Vec<&FidelityReport> = self.fidelity.iter().collect();
        let mut out = render_text(
            &explanations,
            &self.dataset.attributes,
            &self.dataset.categories,
            &reports,
        );
        if let Some(acc) = self.test_accuracy {
            out = format!("model test accuracy: {acc:.4}\n{out}");
        }
        Ok(out)
    }
}
