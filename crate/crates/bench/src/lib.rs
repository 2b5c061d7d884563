//! Shared fixtures for the pipeline benchmarks.

use rectex_core::blackbox::train_forest;
use rectex_core::data::{label_with, split};
use rectex_core::features::build_catalog;
use rectex_core::synthetic::{planted_dataset, PlantedSpec};
use rectex_core::{
    ContributionMatrix, FeatureCatalog, ForestConfig, LabeledDataset, PerturbationConfig,
    RandomForest,
};

pub struct Fixture {
    pub model: RandomForest,
    pub catalog: FeatureCatalog,
    pub train: LabeledDataset,
    pub perturbation: PerturbationConfig,
}

/// A forest trained on planted data of `rows` rows, with its labeled
/// training split and quartile catalog.
pub fn planted_fixture(rows: usize) -> Fixture {
    let (data, _) = planted_dataset(&PlantedSpec {
        rows,
        ..Default::default()
    })
    .expect("planted data");
    let (train, _) = split(&data, 0.7, 0).expect("split");
    let model = train_forest(
        &train,
        &ForestConfig {
            num_trees: 50,
            ..Default::default()
        },
    )
    .expect("forest");
    let catalog = build_catalog(&train, 4).expect("catalog");
    let train = label_with(&train, &model).expect("labels");
    Fixture {
        model,
        catalog,
        train,
        perturbation: PerturbationConfig {
            num_samples: 500,
            kernel_width: Some(1.0),
            ridge_strength: 0.1,
            flip_probability: 0.2,
            seed: 0,
        },
    }
}

impl Fixture {
    pub fn contributions(&self) -> Vec<ContributionMatrix> {
        let targets: Vec<_> = rectex_core::Category::all(self.train.num_categories()).collect();
        rectex_core::explainer::build_contribution_matrices(
            &self.model,
            &self.catalog,
            &self.train,
            &targets,
            &self.perturbation,
        )
        .expect("contributions")
        .0
    }
}
