//! Rule-like explanations for black-box tabular classifiers.
//!
//! The black box is probed around every training instance with perturbed
//! copies; weighted linear surrogates over binary threshold features give a
//! contribution matrix per category. Its sign-split nonnegative
//! factorization yields a small set of base vectors (each a conjunction of
//! threshold constraints) and a low-dimensional embedding of every
//! instance's explanation. Clustering the embeddings and combining the
//! heaviest base vectors of each cluster produces a union of axis-aligned
//! rectangles per category, scored by F1 against the model's own labels.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blackbox;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod explainer;
pub mod factorization;
pub mod features;
pub mod matrix_text;
pub mod pipeline;
pub mod report;
pub mod rules;
pub mod synthetic;

pub use blackbox::{BlackBoxModel, Classifier, ForestConfig, RandomForest};
pub use config::{ModelSpec, RunConfig};
pub use data::{Category, Dataset, LabeledDataset, LoadOptions};
pub use error::{Error, Result};
pub use evaluation::{CategoryScore, Confusion, FidelityReport, PuritySummary, Split};
pub use explainer::{ContributionMatrix, PerturbationConfig};
pub use factorization::{Factorization, NmfConfig, StackedMatrix};
pub use features::FeatureCatalog;
pub use report::RuleSetDocument;
pub use rules::{CategoryExplanation, ExtractionParams, Interval, Rectangle, SearchSpace};
