//! End-to-end runs: split, label, explain, factorize, extract, evaluate.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::blackbox::{accuracy, connect_oracle, train_forest, BlackBoxModel, Classifier};
use crate::config::{ModelSpec, RunConfig};
use crate::data::{
    label_with, load_dataset, split, Category, Dataset, LabeledDataset, LoadOptions,
};
use crate::error::{Error, Result};
use crate::evaluation::{fidelity_report, purity_summary, FidelityReport, PuritySummary, Split};
use crate::explainer::{build_contribution_matrices, ContributionMatrix};
use crate::factorization::{nmf, stack_nonnegative, Factorization};
use crate::features::{build_catalog, FeatureCatalog};
use crate::matrix_text::TextMatrix;
use crate::report::{DatasetDescriptor, Hyperparameters, RuleSetDocument};
use crate::rules::{
    cluster_embeddings_with_share, default_theta_grid, kmeans_seed, search_params,
    CategoryExplanation, Clustering, ExtractionParams,
};

pub const RULES_FILE: &str = "rules.json";
pub const REPORT_FILE: &str = "report.txt";
pub const CATALOG_FILE: &str = "catalog.txt";
pub const CONFIG_FILE: &str = "run.conf";

pub fn contributions_file(c: Category) -> String {
    format!("contributions_{}.txt", c.0)
}

/// Everything up to and including the feature catalog.
#[derive(Debug)]
pub struct Prepared {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub catalog: FeatureCatalog,
    pub model: BlackBoxModel,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
}

pub fn load_split(config: &RunConfig) -> Result<(Dataset, Dataset)> {
    let options = LoadOptions {
        delimiter: config.delimiter,
        label_column: config.label_column.clone(),
    };
    let data = load_dataset(&config.dataset, &options)?;
    split(&data, config.train_fraction, config.seed)
}

/// Builds the black box named by the config. A forest trains on `train`.
pub fn build_model(config: &RunConfig, train: &Dataset) -> Result<BlackBoxModel> {
    match &config.model {
        ModelSpec::Forest { .. } => {
            let forest_config = config.forest_config().expect("forest spec");
            Ok(BlackBoxModel::Forest(train_forest(train, &forest_config)?))
        }
        ModelSpec::Oracle {
            command,
            categories,
            timeout,
        } => Ok(BlackBoxModel::Oracle(connect_oracle(
            command,
            train.num_attributes(),
            *categories,
            *timeout,
        )?)),
    }
}

pub fn prepare(config: &RunConfig) -> Result<Prepared> {
    config.validate()?;
    let (train_raw, test_raw) = load_split(config)?;
    let model = build_model(config, &train_raw)?;
    let train = label_with(&train_raw, &model)?;
    let test = label_with(&test_raw, &model)?;
    let catalog = build_catalog(&train_raw, config.bins)?;
    Ok(Prepared {
        train_accuracy: accuracy(&model, &train_raw)?,
        test_accuracy: accuracy(&model, &test_raw)?,
        train,
        test,
        catalog,
        model,
    })
}

/// Rejects ranks above `min(2M, N)` before any expensive work.
pub fn check_rank(rank: usize, catalog: &FeatureCatalog, n: usize) -> Result<()> {
    let max = (2 * catalog.len()).min(n);
    if rank == 0 || rank > max {
        return Err(Error::InvalidConfig(format!(
            "rank k = {rank} violates k <= min(2M, N) = min({}, {n}) = {max}",
            2 * catalog.len()
        )));
    }
    Ok(())
}

/// One contribution matrix per category over the training split.
pub fn contributions(config: &RunConfig, prepared: &Prepared) -> Result<Vec<ContributionMatrix>> {
    let targets: Vec<Category> = Category::all(prepared.train.num_categories()).collect();
    let (matrices, _) = build_contribution_matrices(
        &prepared.model,
        &prepared.catalog,
        &prepared.train,
        &targets,
        &config.perturbation_config(),
    )?;
    Ok(matrices)
}

#[derive(Debug, Clone)]
pub struct CategoryOutcome {
    pub category: Category,
    pub factorization: Factorization,
    pub params: ExtractionParams,
    pub explanation: CategoryExplanation,
    pub clusterings: Vec<Clustering>,
}

fn tag(category: Category) -> impl Fn(Error) -> Error {
    move |e| Error::InCategory {
        category,
        source: Box::new(e),
    }
}

fn extract_one(
    config: &RunConfig,
    train: &LabeledDataset,
    catalog: &FeatureCatalog,
    matrix: &ContributionMatrix,
    rank: usize,
) -> Result<CategoryOutcome> {
    let stacked = stack_nonnegative(matrix);
    let fact = nmf(&stacked, &config.nmf_config(rank))?;
    let space = config.search_space(default_theta_grid(&fact.w));
    let labels = train.target_mask(matrix.target);
    let outcome = search_params(
        &fact,
        &labels,
        catalog,
        train.dataset().rows(),
        matrix.target,
        &space,
    )?;
    Ok(CategoryOutcome {
        category: matrix.target,
        factorization: fact,
        params: outcome.params,
        explanation: outcome.explanation,
        clusterings: outcome.clusterings,
    })
}

/// Factorizes and searches every category at `rank`.
pub fn extract_categories(
    config: &RunConfig,
    train: &LabeledDataset,
    catalog: &FeatureCatalog,
    matrices: &[ContributionMatrix],
    rank: usize,
) -> Result<Vec<CategoryOutcome>> {
    check_rank(rank, catalog, train.len())?;
    for m in matrices {
        if m.num_features() != catalog.len() || m.num_instances() != train.len() {
            return Err(tag(m.target)(Error::Schema(format!(
                "contribution matrix is {}x{}, expected {}x{}",
                m.num_features(),
                m.num_instances(),
                catalog.len(),
                train.len()
            ))));
        }
    }
    matrices
        .par_iter()
        .map(|m| extract_one(config, train, catalog, m, rank).map_err(tag(m.target)))
        .collect()
}

#[derive(Debug)]
pub struct ExtractRun {
    pub prepared: Prepared,
    pub matrices: Vec<ContributionMatrix>,
    pub outcomes: Vec<CategoryOutcome>,
    pub train_report: FidelityReport,
    pub test_report: FidelityReport,
    pub document: RuleSetDocument,
}

impl ExtractRun {
    pub fn explanations(&self) -> Vec<CategoryExplanation> {
        self.outcomes
            .iter()
            .map(|o| o.explanation.clone())
            .collect()
    }
}

fn hyperparameters(config: &RunConfig, catalog: &FeatureCatalog, rank: usize) -> Hyperparameters {
    let p = config.perturbation_config();
    Hyperparameters {
        bins: config.bins,
        num_samples: config.num_samples,
        kernel_width: p.width_for(catalog.len()),
        ridge_strength: config.ridge_strength,
        flip_probability: config.flip_probability,
        rank,
        nmf_max_iters: config.nmf_max_iters,
        nmf_tolerance: config.nmf_tolerance,
        r_max: config.r_max,
        kmeans_restarts: config.kmeans_restarts,
        majority_share: config.majority_share,
        seed: config.seed,
    }
}

fn finish(
    config: &RunConfig,
    prepared: Prepared,
    matrices: Vec<ContributionMatrix>,
    rank: usize,
) -> Result<ExtractRun> {
    let outcomes = extract_categories(config, &prepared.train, &prepared.catalog, &matrices, rank)?;
    let explanations: Vec<CategoryExplanation> =
        outcomes.iter().map(|o| o.explanation.clone()).collect();
    let descriptor = prepared.model.descriptor();
    let train_report = fidelity_report(&explanations, &prepared.train, Split::Train, &descriptor);
    let test_report = fidelity_report(&explanations, &prepared.test, Split::Test, &descriptor);
    let params: Vec<Option<ExtractionParams>> = outcomes.iter().map(|o| Some(o.params)).collect();
    let document = RuleSetDocument::new(
        DatasetDescriptor {
            source: config
                .dataset
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            train_rows: prepared.train.len(),
            test_rows: prepared.test.len(),
            attributes: prepared.train.dataset().attribute_names().to_vec(),
            categories: prepared.train.category_names().to_vec(),
        },
        descriptor,
        prepared.test_accuracy,
        hyperparameters(config, &prepared.catalog, rank),
        &explanations,
        &params,
        vec![test_report.clone(), train_report.clone()],
    );
    Ok(ExtractRun {
        prepared,
        matrices,
        outcomes,
        train_report,
        test_report,
        document,
    })
}

/// The full pipeline at `config.rank`.
pub fn run_extract(config: &RunConfig) -> Result<ExtractRun> {
    let prepared = prepare(config)?;
    check_rank(config.rank, &prepared.catalog, prepared.train.len())?;
    let matrices = contributions(config, &prepared)?;
    finish(config, prepared, matrices, config.rank)
}

/// Reads contribution matrices and the catalog written by
/// [`write_contributions`] from `dir`.
pub fn read_contributions(
    dir: &Path,
    attribute_names: &[String],
    num_categories: usize,
) -> Result<(FeatureCatalog, Vec<ContributionMatrix>)> {
    let read = |name: String| {
        let path = dir.join(name);
        fs::read_to_string(&path).map_err(|e| Error::io(path, e))
    };
    let catalog = FeatureCatalog::from_text(&read(CATALOG_FILE.into())?, attribute_names)?;
    let matrices = Category::all(num_categories)
        .map(|c| {
            let m = ContributionMatrix::from_text_matrix(TextMatrix::from_text(&read(
                contributions_file(c),
            )?)?)?;
            if m.target != c {
                return Err(Error::format(
                    "contribution dump",
                    format!("file for category {c} holds target {}", m.target),
                ));
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    Ok((catalog, matrices))
}

/// Runs factorization onward from dumped contribution matrices. The black box
/// is still consulted to label the splits.
pub fn run_from_contributions(config: &RunConfig, dir: &Path) -> Result<ExtractRun> {
    let mut prepared = prepare(config)?;
    let (catalog, matrices) = read_contributions(
        dir,
        prepared.train.dataset().attribute_names(),
        prepared.train.num_categories(),
    )?;
    for m in &matrices {
        if m.labels != prepared.train.target_mask(m.target) {
            return Err(tag(m.target)(Error::Schema(
                "dumped labels disagree with the model's labeling of the training split".into(),
            )));
        }
    }
    prepared.catalog = catalog;
    finish(config, prepared, matrices, config.rank)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_contributions(
    dir: &Path,
    catalog: &FeatureCatalog,
    matrices: &[ContributionMatrix],
) -> Result<()> {
    create_dir(dir)?;
    write(&dir.join(CATALOG_FILE), &catalog.to_text())?;
    for m in matrices {
        write(
            &dir.join(contributions_file(m.target)),
            &m.to_text_matrix().to_text(),
        )?;
    }
    Ok(())
}

/// Writes the rule set, the text report, the catalog and the effective
/// config; with `dump_matrices` also the contribution matrices and the
/// factors of every category.
pub fn write_outputs(config: &RunConfig, run: &ExtractRun) -> Result<()> {
    let dir = &config.output;
    create_dir(dir)?;
    write(&dir.join(RULES_FILE), &run.document.to_json())?;
    write(&dir.join(REPORT_FILE), &run.document.render()?)?;
    write(&dir.join(CONFIG_FILE), &config.to_text())?;
    if config.dump_matrices {
        write_contributions(dir, &run.prepared.catalog, &run.matrices)?;
        for o in &run.outcomes {
            let c = o.category.0;
            let mut w = o.factorization.w_text();
            w.target = Some(o.category);
            let mut h = o.factorization.h_text();
            h.target = Some(o.category);
            write(&dir.join(format!("w_{c}.txt")), &w.to_text())?;
            write(&dir.join(format!("h_{c}.txt")), &h.to_text())?;
        }
    } else {
        write(&dir.join(CATALOG_FILE), &run.prepared.catalog.to_text())?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub k: usize,
    /// Macro F1 on (train, test), or the failure message.
    pub result: std::result::Result<(f64, f64), String>,
}

/// One extraction per rank, sharing the contribution matrices. A failing
/// rank is reported in its row and does not affect the others.
pub fn run_ksweep(config: &RunConfig, ranks: &[usize]) -> Result<Vec<SweepRow>> {
    let prepared = prepare(config)?;
    let matrices = contributions(config, &prepared)?;
    Ok(ranks
        .iter()
        .map(|&k| {
            let result =
                extract_categories(config, &prepared.train, &prepared.catalog, &matrices, k)
                    .map(|outcomes| {
                        let explanations: Vec<CategoryExplanation> =
                            outcomes.into_iter().map(|o| o.explanation).collect();
                        let d = prepared.model.descriptor();
                        (
                            fidelity_report(&explanations, &prepared.train, Split::Train, &d)
                                .macro_f1,
                            fidelity_report(&explanations, &prepared.test, Split::Test, &d)
                                .macro_f1,
                        )
                    })
                    .map_err(|e| e.to_string());
            SweepRow { k, result }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PurityRow {
    pub r: usize,
    /// Purity of every cluster of every category's embedding.
    pub purities: Vec<f64>,
    pub summary: std::result::Result<PuritySummary, String>,
}

/// Clusters each category's embedded explanations (rank `config.rank`)
/// into `r` clusters for every requested `r`.
pub fn run_purity(config: &RunConfig, rs: &[usize]) -> Result<Vec<PurityRow>> {
    let prepared = prepare(config)?;
    check_rank(config.rank, &prepared.catalog, prepared.train.len())?;
    let matrices = contributions(config, &prepared)?;
    let factorizations: Vec<(Category, Factorization)> = matrices
        .par_iter()
        .map(|m| {
            nmf(&stack_nonnegative(m), &config.nmf_config(config.rank))
                .map(|f| (m.target, f))
                .map_err(tag(m.target))
        })
        .collect::<Result<_>>()?;
    Ok(rs
        .iter()
        .map(|&r| {
            let clusterings: std::result::Result<Vec<Clustering>, String> = factorizations
                .iter()
                .map(|(c, f)| {
                    cluster_embeddings_with_share(
                        &f.h,
                        &prepared.train.target_mask(*c),
                        r,
                        config.kmeans_restarts,
                        kmeans_seed(config.seed, r),
                        config.majority_share,
                    )
                    .map_err(|e| tag(*c)(e).to_string())
                })
                .collect();
            match clusterings {
                Ok(cs) => {
                    let refs: Vec<&Clustering> = cs.iter().collect();
                    PurityRow {
                        r,
                        purities: cs.iter().flat_map(Clustering::purities).collect(),
                        summary: purity_summary(r, &refs).ok_or_else(|| "no clusters".into()),
                    }
                }
                Err(e) => PurityRow {
                    r,
                    purities: Vec::new(),
                    summary: Err(e),
                },
            }
        })
        .collect())
}
