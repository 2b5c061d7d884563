//! Per-instance local surrogates over the interpretable feature space and the
//! contribution matrix built from them.
//!
//! For an instance `x` with embedding `z0`, each perturbation flips every bit
//! of `z0` independently with the configured flip probability. Per attribute, the tightest
//! asserted upper bound (the lowest bound whose bit is set; the open top bin
//! if none is) selects a bin, and a training value is drawn uniformly from it.
//! The perturbed instance is re-embedded so the regression sees the features
//! the model was actually queried at. Samples are weighted by
//! `exp(-d^2 / width^2)` with `d` the Hamming distance to `z0` over `sqrt(M)`,
//! and a weighted ridge fit of the 0/1 target response on `z` gives the
//! contributions.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blackbox::Classifier;
use crate::data::{Category, Dataset, LabeledDataset};
use crate::error::{Error, Result};
use crate::features::FeatureCatalog;
use crate::matrix_text::TextMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    pub num_samples: usize,
    /// Kernel width; `None` means `0.75 * sqrt(M)`.
    pub kernel_width: Option<f64>,
    pub ridge_strength: f64,
    /// Probability of flipping each bit of the instance's embedding.
    pub flip_probability: f64,
    pub seed: u64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig {
            num_samples: 1000,
            kernel_width: None,
            ridge_strength: 1.0,
            flip_probability: 0.5,
            seed: 0,
        }
    }
}

impl PerturbationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples < 10 {
            return Err(Error::InvalidConfig(format!(
                "num_samples must be at least 10, got {}",
                self.num_samples
            )));
        }
        if let Some(w) = self.kernel_width {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "kernel width {w} must be > 0"
                )));
            }
        }
        if !(self.ridge_strength >= 0.0) {
            return Err(Error::InvalidConfig("ridge strength must be >= 0".into()));
        }
        if !(self.flip_probability > 0.0 && self.flip_probability <= 1.0) {
            return Err(Error::InvalidConfig(
                "flip probability must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn width_for(&self, num_features: usize) -> f64 {
        self.kernel_width
            .unwrap_or_else(|| 0.75 * (num_features as f64).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceExplanation {
    pub contributions: Vec<f64>,
    pub intercept: f64,
    pub instance_index: usize,
    pub target: Category,
    /// Every sampled response was identical; contributions are all zero.
    pub degenerate: bool,
    /// Weighted share of samples where `contributions . z + intercept > 1/2`
    /// agrees with the model's 0/1 response.
    pub local_fidelity: f64,
    /// F1 of that thresholded surrogate against the model's response.
    pub local_f1: f64,
}

/// Features by instances matrix of contributions for one target category.
#[derive(Debug, Clone, PartialEq)]
pub struct ContributionMatrix {
    pub values: Array2<f64>,
    pub target: Category,
    /// `true` where the model labels the instance with `target`.
    pub labels: Vec<bool>,
}

impl ContributionMatrix {
    pub fn num_features(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_instances(&self) -> usize {
        self.values.ncols()
    }

    pub fn to_text_matrix(&self) -> TextMatrix {
        TextMatrix {
            kind: "contributions".into(),
            values: self.values.clone(),
            target: Some(self.target),
            labels: Some(self.labels.clone()),
        }
    }

    pub fn from_text_matrix(m: TextMatrix) -> Result<Self> {
        let target = m
            .target
            .ok_or_else(|| Error::format("contribution matrix", "missing target"))?;
        let labels = m
            .labels
            .ok_or_else(|| Error::format("contribution matrix", "missing labels"))?;
        if m.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::format("contribution matrix", "non-finite entry"));
        }
        Ok(ContributionMatrix {
            values: m.values,
            target,
            labels,
        })
    }
}

/// Draws attribute values from training data restricted to a catalog bin.
pub struct BinSampler<'a> {
    catalog: &'a FeatureCatalog,
    sorted: Vec<Vec<f64>>,
}

impl<'a> BinSampler<'a> {
    pub fn new(catalog: &'a FeatureCatalog, train: &Dataset) -> Self {
        let sorted = (0..catalog.num_attributes())
            .map(|j| {
                let mut v = train.column(j);
                v.sort_by(f64::total_cmp);
                v
            })
            .collect();
        BinSampler { catalog, sorted }
    }

    pub fn sample(&self, attribute: usize, bin: usize, rng: &mut ChaCha8Rng) -> f64 {
        let cuts = self.catalog.cut_points(attribute);
        let lo = if bin == 0 {
            f64::NEG_INFINITY
        } else {
            cuts[bin - 1]
        };
        let hi = cuts.get(bin).copied().unwrap_or(f64::INFINITY);
        let values = &self.sorted[attribute];
        let start = values.partition_point(|&v| v <= lo);
        let end = values.partition_point(|&v| v <= hi);
        if start < end {
            return values[rng.gen_range(start..end)];
        }
        // No training value falls in the bin.
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => {
                let v = rng.gen_range(lo..hi);
                if v > lo {
                    v
                } else {
                    hi
                }
            }
            (false, true) => hi,
            (true, false) => lo + lo.abs().max(1.0) * 1e-9,
            (false, false) => 0.0,
        }
    }
}

/// Perturbation sample around one instance, shared by all target categories.
struct Neighborhood {
    /// Re-embedded perturbations as 0/1 reals, one row per sample.
    design: Array2<f64>,
    weights: Vec<f64>,
    predictions: Vec<Category>,
}

fn sample_neighborhood(
    model: &dyn Classifier,
    catalog: &FeatureCatalog,
    sampler: &BinSampler<'_>,
    x: &[f64],
    config: &PerturbationConfig,
    seed: u64,
) -> Result<Neighborhood> {
    if x.len() != catalog.num_attributes() || model.input_dim() != catalog.num_attributes() {
        return Err(Error::Schema(format!(
            "instance has {} attributes, catalog {}, model {}",
            x.len(),
            catalog.num_attributes(),
            model.input_dim()
        )));
    }
    let m = catalog.len();
    let width = config.width_for(m);
    let z0 = catalog.embed(x);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut design = Array2::<f64>::zeros((config.num_samples, m));
    let mut weights = Vec::with_capacity(config.num_samples);
    let mut instances = Vec::with_capacity(config.num_samples);
    let mut bits = vec![false; m];
    for s in 0..config.num_samples {
        for (i, bit) in bits.iter_mut().enumerate() {
            *bit = if rng.gen_bool(config.flip_probability) {
                !z0.0[i]
            } else {
                z0.0[i]
            };
        }
        let mut perturbed = x.to_vec();
        for (j, value) in perturbed.iter_mut().enumerate() {
            let range = catalog.features_of(j);
            if range.is_empty() {
                continue;
            }
            let width_j = range.len();
            let bin = bits[range].iter().position(|&b| b).unwrap_or(width_j);
            *value = sampler.sample(j, bin, &mut rng);
        }
        let z = catalog.embed(&perturbed);
        let d = z.hamming(&z0) as f64 / (m as f64).sqrt();
        weights.push((-(d * d) / (width * width)).exp());
        for (i, &b) in z.0.iter().enumerate() {
            if b {
                design[[s, i]] = 1.0;
            }
        }
        instances.push(perturbed);
    }
    let predictions = model.predict(&instances)?;
    if predictions.len() != instances.len() {
        return Err(Error::OracleFailure(format!(
            "{} predictions for {} rows",
            predictions.len(),
            instances.len()
        )));
    }
    Ok(Neighborhood {
        design,
        weights,
        predictions,
    })
}

/// Result of a weighted ridge fit with an unpenalized intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

/// Weighted, centered normal equations sharing one factorization across
/// several responses.
pub struct WeightedRidge {
    means: Vec<f64>,
    centered: Array2<f64>,
    weights: Vec<f64>,
    weight_sum: f64,
    chol: Array2<f64>,
}

impl WeightedRidge {
    /// Prepares `min_b sum_s w_s (y_s - a - b.z_s)^2 + ridge |b|^2`.
    pub fn new(design: &Array2<f64>, weights: &[f64], ridge: f64) -> Result<Self> {
        let (n, m) = design.dim();
        let weight_sum: f64 = weights.iter().sum();
        if n == 0 || !(weight_sum > 0.0) {
            return Err(Error::InsufficientData("no weighted samples".into()));
        }
        let mut means = vec![0.0; m];
        for (row, &w) in design.rows().into_iter().zip(weights) {
            for (mu, &v) in means.iter_mut().zip(row) {
                *mu += w * v;
            }
        }
        means.iter_mut().for_each(|mu| *mu /= weight_sum);
        let mut centered = design.clone();
        for mut row in centered.rows_mut() {
            for (v, mu) in row.iter_mut().zip(&means) {
                *v -= mu;
            }
        }
        let mut scaled = centered.clone();
        for (mut row, &w) in scaled.rows_mut().into_iter().zip(weights) {
            row.mapv_inplace(|v| v * w);
        }
        let mut gram = centered.t().dot(&scaled);
        for i in 0..m {
            gram[[i, i]] += ridge;
        }
        let chol = match cholesky(&gram) {
            Some(c) => c,
            None => {
                // Singular without ridge; nudge the diagonal.
                let scale = (0..m).map(|i| gram[[i, i]]).fold(0.0, f64::max).max(1.0);
                for i in 0..m {
                    gram[[i, i]] += 1e-10 * scale;
                }
                cholesky(&gram).ok_or_else(|| {
                    Error::InsufficientData("weighted normal equations not solvable".into())
                })?
            }
        };
        Ok(WeightedRidge {
            means,
            centered,
            weights: weights.to_vec(),
            weight_sum,
            chol,
        })
    }

    pub fn fit(&self, response: &[f64]) -> RidgeFit {
        let y_mean = response
            .iter()
            .zip(&self.weights)
            .map(|(y, w)| y * w)
            .sum::<f64>()
            / self.weight_sum;
        let m = self.means.len();
        let mut rhs = vec![0.0; m];
        for ((row, &w), &y) in self
            .centered
            .rows()
            .into_iter()
            .zip(&self.weights)
            .zip(response)
        {
            let r = w * (y - y_mean);
            if r != 0.0 {
                for (acc, &v) in rhs.iter_mut().zip(row) {
                    *acc += r * v;
                }
            }
        }
        let coefficients = cholesky_solve(&self.chol, &rhs);
        let intercept = y_mean
            - coefficients
                .iter()
                .zip(&self.means)
                .map(|(b, mu)| b * mu)
                .sum::<f64>();
        RidgeFit {
            coefficients,
            intercept,
        }
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if !(sum > 0.0) {
                    return None;
                }
                l[[i, i]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &Array2<f64>, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

fn explain_from(
    hood: &Neighborhood,
    ridge: &WeightedRidge,
    target: Category,
    instance_index: usize,
) -> InstanceExplanation {
    let m = hood.design.ncols();
    let response: Vec<f64> = hood
        .predictions
        .iter()
        .map(|&p| if p == target { 1.0 } else { 0.0 })
        .collect();
    let first = response[0];
    if response.iter().all(|&y| y == first) {
        return InstanceExplanation {
            contributions: vec![0.0; m],
            intercept: first,
            instance_index,
            target,
            degenerate: true,
            local_fidelity: 1.0,
            local_f1: if first > 0.5 { 1.0 } else { 0.0 },
        };
    }
    let fit = ridge.fit(&response);
    let (mut agree, mut total) = (0.0, 0.0);
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for ((row, &w), &y) in hood
        .design
        .rows()
        .into_iter()
        .zip(&hood.weights)
        .zip(&response)
    {
        let score: f64 = fit.intercept
            + row
                .iter()
                .zip(&fit.coefficients)
                .map(|(z, b)| z * b)
                .sum::<f64>();
        let predicted = score > 0.5;
        let actual = y > 0.5;
        total += w;
        if predicted == actual {
            agree += w;
        }
        match (predicted, actual) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    let local_f1 = if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    };
    InstanceExplanation {
        contributions: fit.coefficients,
        intercept: fit.intercept,
        instance_index,
        target,
        degenerate: false,
        local_fidelity: agree / total,
        local_f1,
    }
}

/// Explains one instance with respect to `target`.
pub fn explain_instance(
    model: &dyn Classifier,
    catalog: &FeatureCatalog,
    x: &[f64],
    target: Category,
    config: &PerturbationConfig,
    train: &Dataset,
) -> Result<InstanceExplanation> {
    config.validate()?;
    let sampler = BinSampler::new(catalog, train);
    let hood = sample_neighborhood(model, catalog, &sampler, x, config, config.seed)?;
    let ridge = WeightedRidge::new(&hood.design, &hood.weights, config.ridge_strength)?;
    Ok(explain_from(&hood, &ridge, target, 0))
}

/// Per-instance diagnostics gathered while building contribution matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationDiagnostics {
    /// `degenerate[c][j]`: instance `j` had a constant response for target `c`.
    pub degenerate: Vec<Vec<bool>>,
    pub local_fidelity: Vec<Vec<f64>>,
    pub local_f1: Vec<Vec<f64>>,
}

/// Builds one contribution matrix per target category. Every instance is
/// perturbed once (seed `config.seed + j`) and the sample is shared by all
/// targets, so each matrix equals what
/// [`build_contribution_matrix`] produces for that target alone.
pub fn build_contribution_matrices(
    model: &dyn Classifier,
    catalog: &FeatureCatalog,
    data: &LabeledDataset,
    targets: &[Category],
    config: &PerturbationConfig,
) -> Result<(Vec<ContributionMatrix>, ExplanationDiagnostics)> {
    config.validate()?;
    let sampler = BinSampler::new(catalog, data.dataset());
    let per_instance: Result<Vec<Vec<InstanceExplanation>>> = (0..data.len())
        .into_par_iter()
        .map(|j| {
            let seed = config.seed.wrapping_add(j as u64);
            let hood = sample_neighborhood(
                model,
                catalog,
                &sampler,
                data.dataset().row(j),
                config,
                seed,
            )?;
            let ridge = WeightedRidge::new(&hood.design, &hood.weights, config.ridge_strength)?;
            Ok(targets
                .iter()
                .map(|&t| explain_from(&hood, &ridge, t, j))
                .collect())
        })
        .collect();
    let per_instance = per_instance?;

    let m = catalog.len();
    let n = data.len();
    let mut matrices = Vec::with_capacity(targets.len());
    let mut diagnostics = ExplanationDiagnostics {
        degenerate: Vec::new(),
        local_fidelity: Vec::new(),
        local_f1: Vec::new(),
    };
    for (t, &target) in targets.iter().enumerate() {
        let mut values = Array2::<f64>::zeros((m, n));
        for (j, explanations) in per_instance.iter().enumerate() {
            for (i, &v) in explanations[t].contributions.iter().enumerate() {
                values[[i, j]] = v;
            }
        }
        diagnostics
            .degenerate
            .push(per_instance.iter().map(|e| e[t].degenerate).collect());
        diagnostics
            .local_fidelity
            .push(per_instance.iter().map(|e| e[t].local_fidelity).collect());
        diagnostics
            .local_f1
            .push(per_instance.iter().map(|e| e[t].local_f1).collect());
        matrices.push(ContributionMatrix {
            values,
            target,
            labels: data.target_mask(target),
        });
    }
    Ok((matrices, diagnostics))
}

pub fn build_contribution_matrix(
    model: &dyn Classifier,
    catalog: &FeatureCatalog,
    data: &LabeledDataset,
    target: Category,
    config: &PerturbationConfig,
) -> Result<ContributionMatrix> {
    let (mut matrices, _) = build_contribution_matrices(model, catalog, data, &[target], config)?;
    Ok(matrices.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blackbox::ConstantModel;
    use crate::features::build_catalog;

    /// `1[x[attribute] <= bound]` as category 2, else 1.
    struct Threshold {
        attribute: usize,
        bound: f64,
        m: usize,
    }

    impl Classifier for Threshold {
        fn num_categories(&self) -> usize {
            2
        }
        fn input_dim(&self) -> usize {
            self.m
        }
        fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<Category>> {
            Ok(rows
                .iter()
                .map(|r| {
                    Category(if r[self.attribute] <= self.bound {
                        2
                    } else {
                        1
                    })
                })
                .collect())
        }
    }

    fn grid_dataset() -> Dataset {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                vec![
                    (i % 10) as f64,
                    (i / 10) as f64 * 1.5,
                    ((i * 7) % 13) as f64,
                ]
            })
            .collect();
        Dataset::new(vec!["a".into(), "b".into(), "c".into()], rows).unwrap()
    }

    #[test]
    fn constant_model_gives_zero_contributions() {
        let d = grid_dataset();
        let cat = build_catalog(&d, 4).unwrap();
        let model = ConstantModel {
            category: Category(1),
            num_categories: 2,
            input_dim: 3,
        };
        let e = explain_instance(
            &model,
            &cat,
            d.row(3),
            Category(1),
            &PerturbationConfig::default(),
            &d,
        )
        .unwrap();
        assert!(e.degenerate);
        assert!(e.contributions.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn threshold_model_feature_dominates() {
        let d = grid_dataset();
        let cat = build_catalog(&d, 4).unwrap();
        let feature = cat.features_of(0).start + 1;
        let bound = cat.features()[feature].bound;
        let model = Threshold {
            attribute: 0,
            bound,
            m: 3,
        };
        let config = PerturbationConfig {
            seed: 5,
            ..Default::default()
        };
        for row in [0, 4, 9] {
            let e = explain_instance(&model, &cat, d.row(row), Category(2), &config, &d).unwrap();
            let (argmax, _) = e
                .contributions
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .unwrap();
            assert_eq!(argmax, feature, "row {row}: {:?}", e.contributions);
            assert!(e.contributions[feature] > 0.0);
            let runner_up = e
                .contributions
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != feature)
                .map(|(_, c)| c.abs())
                .fold(0.0, f64::max);
            assert!(e.contributions[feature].abs() > runner_up);
            assert!(e.local_fidelity >= 0.8, "fidelity {}", e.local_fidelity);
        }
    }

    #[test]
    fn huge_ridge_shrinks_to_zero() {
        let d = grid_dataset();
        let cat = build_catalog(&d, 4).unwrap();
        let model = Threshold {
            attribute: 1,
            bound: 1.5,
            m: 3,
        };
        let config = PerturbationConfig {
            ridge_strength: 1e12,
            ..Default::default()
        };
        let e = explain_instance(&model, &cat, d.row(0), Category(2), &config, &d).unwrap();
        assert!(e.contributions.iter().all(|c| c.abs() < 1e-9));
    }

    #[test]
    fn explanation_is_deterministic() {
        let d = grid_dataset();
        let cat = build_catalog(&d, 4).unwrap();
        let model = Threshold {
            attribute: 2,
            bound: 6.0,
            m: 3,
        };
        let config = PerturbationConfig::default();
        let a = explain_instance(&model, &cat, d.row(7), Category(1), &config, &d).unwrap();
        let b = explain_instance(&model, &cat, d.row(7), Category(1), &config, &d).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bins_are_respected_by_sampler() {
        let d = grid_dataset();
        let cat = build_catalog(&d, 4).unwrap();
        let sampler = BinSampler::new(&cat, &d);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for bin in 0..=cat.cut_points(0).len() {
            for _ in 0..50 {
                let v = sampler.sample(0, bin, &mut rng);
                assert_eq!(cat.bin_of(0, v), bin);
            }
        }
    }

    #[test]
    fn small_config_rejected() {
        let config = PerturbationConfig {
            num_samples: 5,
            ..Default::default()
        };
        assert!(config.validate().is_err());
    }
}
