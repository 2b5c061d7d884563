//! The classifier under explanation. Only its predictions are ever used.

mod forest;
mod oracle;

pub use forest::{train_forest, DecisionTree, ForestConfig, RandomForest};
pub use oracle::{connect_oracle, format_row, serve_oracle, OracleClient, DEFAULT_ORACLE_TIMEOUT};

use crate::data::Category;
use crate::error::Result;

/// A black-box classifier `f: R^m -> {1..C}`.
///
/// Implementations must be pure: repeated calls on the same row agree, and a
/// batch prediction equals the per-row predictions in order.
pub trait Classifier: Send + Sync {
    fn num_categories(&self) -> usize;

    fn input_dim(&self) -> usize;

    fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<Category>>;

    fn predict_one(&self, row: &[f64]) -> Result<Category> {
        Ok(self.predict(&[row.to_vec()])?[0])
    }

    /// Short human-readable description for reports.
    fn descriptor(&self) -> String {
        format!(
            "classifier(m={}, C={})",
            self.input_dim(),
            self.num_categories()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    BuiltinForest,
    ExternalOracle,
}

/// Either a built-in random forest or an external prediction oracle.
#[derive(Debug)]
pub enum BlackBoxModel {
    Forest(RandomForest),
    Oracle(OracleClient),
}

impl BlackBoxModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            BlackBoxModel::Forest(_) => ModelKind::BuiltinForest,
            BlackBoxModel::Oracle(_) => ModelKind::ExternalOracle,
        }
    }

    fn inner(&self) -> &dyn Classifier {
        match self {
            BlackBoxModel::Forest(f) => f,
            BlackBoxModel::Oracle(o) => o,
        }
    }
}

impl Classifier for BlackBoxModel {
    fn num_categories(&self) -> usize {
        self.inner().num_categories()
    }

    fn input_dim(&self) -> usize {
        self.inner().input_dim()
    }

    fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<Category>> {
        self.inner().predict(rows)
    }

    fn descriptor(&self) -> String {
        self.inner().descriptor()
    }
}

/// Predicts the same category for every input.
#[derive(Debug, Clone)]
pub struct ConstantModel {
    pub category: Category,
    pub num_categories: usize,
    pub input_dim: usize,
}

impl Classifier for ConstantModel {
    fn num_categories(&self) -> usize {
        self.num_categories
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<Category>> {
        Ok(vec![self.category; rows.len()])
    }

    fn descriptor(&self) -> String {
        format!("constant({})", self.category)
    }
}

/// Fraction of rows whose prediction matches the source label.
pub fn accuracy(model: &dyn Classifier, data: &crate::data::Dataset) -> Result<Option<f64>> {
    let Some(truth) = data.source_labels() else {
        return Ok(None);
    };
    let predicted = model.predict(data.rows())?;
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(Some(hits as f64 / data.len() as f64))
}
