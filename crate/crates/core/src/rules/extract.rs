use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kmeans::{cluster_embeddings_with_share, Clustering, DEFAULT_RESTARTS};
use super::rectangle::{rectangle_from_base, Rectangle};
use crate::data::Category;
use crate::error::{Error, Result};
use crate::evaluation::Confusion;
use crate::factorization::Factorization;
use crate::features::{quantile_sorted, FeatureCatalog};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionParams {
    /// Number of k-means clusters.
    pub r: usize,
    /// Base-vector entries above this become constraints.
    pub theta_w: f64,
    /// Base vectors combined per cluster.
    pub k_theta: usize,
    pub r_max: usize,
    pub kmeans_restarts: usize,
    /// Target share a cluster must strictly exceed to yield a rule.
    pub majority_share: f64,
    pub seed: u64,
}

/// Seed for the k-means run at `r` clusters.
pub fn kmeans_seed(seed: u64, r: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(r as u64)
}

/// Provenance of one rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleSource {
    pub cluster: usize,
    pub cluster_size: usize,
    /// Chosen base vectors, heaviest first.
    pub bases: Vec<usize>,
    /// Centroid weights of the chosen base vectors.
    pub weights: Vec<f64>,
}

/// Rule set of one category: a union of rectangles.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryExplanation {
    pub category: Category,
    pub rectangles: Vec<Rectangle>,
    pub sources: Vec<RuleSource>,
    /// No cluster was mostly labeled by the category.
    pub unexplained: bool,
}

impl CategoryExplanation {
    pub fn unexplained(category: Category) -> Self {
        CategoryExplanation {
            category,
            rectangles: Vec::new(),
            sources: Vec::new(),
            unexplained: true,
        }
    }

    /// Membership in the union.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.rectangles.iter().any(|r| r.contains(x))
    }

    pub fn rectangle_count(&self) -> usize {
        self.rectangles.len()
    }

    pub fn constraint_count(&self) -> usize {
        self.rectangles
            .iter()
            .map(Rectangle::constraint_count)
            .sum()
    }

    pub fn confusion(&self, rows: &[Vec<f64>], labels: &[bool]) -> Confusion {
        Confusion::from_pairs(
            rows.iter()
                .map(|x| self.contains(x))
                .zip(labels.iter().copied()),
        )
    }
}

/// `B_{c,i}`: intersection of the rectangles of the `k_theta` heaviest
/// centroid entries (ties to the lower index).
pub fn rules_from_cluster(
    centroid: &[f64],
    w: &Array2<f64>,
    k_theta: usize,
    theta_w: f64,
    catalog: &FeatureCatalog,
) -> (Rectangle, Vec<usize>, Vec<f64>) {
    let bases = top_indices(centroid, k_theta);
    let rect = bases.iter().fold(Rectangle::unconstrained(), |acc, &l| {
        let base = w.column(l).to_vec();
        acc.intersect(&rectangle_from_base(&base, theta_w, catalog))
    });
    let weights = bases.iter().map(|&l| centroid[l]).collect();
    (rect, bases, weights)
}

fn top_indices(values: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(count);
    order
}

/// Builds a rule set from an existing clustering. Rectangles follow cluster size
/// (largest first); empty and exactly duplicated rectangles are dropped.
fn assemble(
    clustering: &Clustering,
    base_rects: Option<&[Rectangle]>,
    w: &Array2<f64>,
    theta_w: f64,
    k_theta: usize,
    catalog: &FeatureCatalog,
    category: Category,
) -> CategoryExplanation {
    let mut order: Vec<usize> = (0..clustering.stats.len())
        .filter(|&c| clustering.stats[c].majority)
        .collect();
    if order.is_empty() {
        return CategoryExplanation::unexplained(category);
    }
    order.sort_by(|&a, &b| {
        clustering.stats[b]
            .size
            .cmp(&clustering.stats[a].size)
            .then(a.cmp(&b))
    });
    let mut rectangles: Vec<Rectangle> = Vec::new();
    let mut sources = Vec::new();
    for c in order {
        let centroid = &clustering.centroids[c];
        let (rect, bases, weights) = match base_rects {
            Some(cached) => {
                let bases = top_indices(centroid, k_theta);
                let rect = bases.iter().fold(Rectangle::unconstrained(), |acc, &l| {
                    acc.intersect(&cached[l])
                });
                let weights = bases.iter().map(|&l| centroid[l]).collect();
                (rect, bases, weights)
            }
            None => rules_from_cluster(centroid, w, k_theta, theta_w, catalog),
        };
        if rect.is_empty() || rectangles.contains(&rect) {
            continue;
        }
        rectangles.push(rect);
        sources.push(RuleSource {
            cluster: c,
            cluster_size: clustering.stats[c].size,
            bases,
            weights,
        });
    }
    let unexplained = rectangles.is_empty();
    CategoryExplanation {
        category,
        rectangles,
        sources,
        unexplained,
    }
}

/// Extraction at fixed hyperparameters.
pub fn extract_category(
    h: &Array2<f64>,
    w: &Array2<f64>,
    labels: &[bool],
    catalog: &FeatureCatalog,
    params: &ExtractionParams,
    category: Category,
) -> Result<CategoryExplanation> {
    if params.k_theta == 0 || params.k_theta > w.ncols() {
        return Err(Error::InvalidConfig(format!(
            "k_theta = {} outside 1..={}",
            params.k_theta,
            w.ncols()
        )));
    }
    let clustering = cluster_embeddings_with_share(
        h,
        labels,
        params.r,
        params.kmeans_restarts,
        kmeans_seed(params.seed, params.r),
        params.majority_share,
    )?;
    Ok(assemble(
        &clustering,
        None,
        w,
        params.theta_w,
        params.k_theta,
        catalog,
        category,
    ))
}

/// Deciles (10%..90%) of the positive entries of `w`, linear interpolation,
/// together with 0.1..0.9 as fractions of each column maximum.
pub fn default_theta_grid(w: &Array2<f64>) -> Vec<f64> {
    let mut positive: Vec<f64> = w.iter().copied().filter(|&v| v > 0.0).collect();
    if positive.is_empty() {
        return vec![0.0];
    }
    positive.sort_by(f64::total_cmp);
    let mut grid: Vec<f64> = (1..10)
        .map(|d| quantile_sorted(&positive, d as f64 / 10.0))
        .chain((1..10).map(|d| d as f64 / 10.0))
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub r_max: usize,
    pub theta_grid: Vec<f64>,
    /// Largest `k_theta` tried; `None` means the factorization rank.
    pub k_theta_max: Option<usize>,
    pub kmeans_restarts: usize,
    pub majority_share: f64,
    pub seed: u64,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            r_max: 5,
            theta_grid: Vec::new(),
            k_theta_max: None,
            kmeans_restarts: DEFAULT_RESTARTS,
            majority_share: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub params: ExtractionParams,
    pub explanation: CategoryExplanation,
    /// Confusion of the chosen explanation on the search data.
    pub confusion: Confusion,
    pub trials: usize,
    /// Clusterings computed for each `r` in `1..=r_max`.
    pub clusterings: Vec<Clustering>,
}

/// Exhaustive search over `r in 1..=r_max`, `theta_w` in the grid and
/// `k_theta in 1..=k`, maximizing F1 on `rows`/`labels`. Ties prefer fewer
/// rectangles, then fewer constraints, then smaller `r`, then the earliest
/// grid point.
pub fn search_params(
    fact: &Factorization,
    labels: &[bool],
    catalog: &FeatureCatalog,
    rows: &[Vec<f64>],
    category: Category,
    space: &SearchSpace,
) -> Result<SearchOutcome> {
    let mut grid = space.theta_grid.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let k = fact.rank;
    let k_max = space.k_theta_max.unwrap_or(k).min(k);
    if grid.is_empty() || space.r_max == 0 || k_max == 0 {
        return Err(Error::EmptyGrid);
    }
    if rows.len() != labels.len() || labels.len() != fact.h.ncols() {
        return Err(Error::Schema(
            "search rows, labels and embedded explanations disagree in length".into(),
        ));
    }
    let n = labels.len();
    let r_top = space.r_max.min(n);
    let clusterings: Vec<Clustering> = (1..=r_top)
        .into_par_iter()
        .map(|r| {
            cluster_embeddings_with_share(
                &fact.h,
                labels,
                r,
                space.kmeans_restarts,
                kmeans_seed(space.seed, r),
                space.majority_share,
            )
        })
        .collect::<Result<_>>()?;
    let base_rects: Vec<Vec<Rectangle>> = grid
        .iter()
        .map(|&theta| {
            (0..k)
                .map(|l| rectangle_from_base(&fact.base_vector(l), theta, catalog))
                .collect()
        })
        .collect();

    type Trial = (ExtractionParams, CategoryExplanation, Confusion);
    let per_r: Vec<Option<Trial>> = clusterings
        .par_iter()
        .enumerate()
        .map(|(ri, clustering)| {
            let r = ri + 1;
            let mut best: Option<Trial> = None;
            for (ti, &theta) in grid.iter().enumerate() {
                for k_theta in 1..=k_max {
                    let explanation = assemble(
                        clustering,
                        Some(&base_rects[ti]),
                        &fact.w,
                        theta,
                        k_theta,
                        catalog,
                        category,
                    );
                    let confusion = explanation.confusion(rows, labels);
                    let params = ExtractionParams {
                        r,
                        theta_w: theta,
                        k_theta,
                        r_max: space.r_max,
                        kmeans_restarts: space.kmeans_restarts,
                        majority_share: space.majority_share,
                        seed: space.seed,
                    };
                    let candidate = (params, explanation, confusion);
                    if best.as_ref().is_none_or(|b| better(&candidate, b)) {
                        best = Some(candidate);
                    }
                }
            }
            best
        })
        .collect();
    let mut best: Option<Trial> = None;
    for candidate in per_r.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| better(&candidate, b)) {
            best = Some(candidate);
        }
    }
    let (params, explanation, confusion) = best.ok_or(Error::EmptyGrid)?;
    Ok(SearchOutcome {
        params,
        explanation,
        confusion,
        trials: r_top * grid.len() * k_max,
        clusterings,
    })
}

/// Strictly better: higher F1, then simpler. Equal candidates keep the
/// incumbent, which was visited first.
fn better(
    a: &(ExtractionParams, CategoryExplanation, Confusion),
    b: &(ExtractionParams, CategoryExplanation, Confusion),
) -> bool {
    let (fa, fb) = (a.2.f1(), b.2.f1());
    if fa != fb {
        return fa > fb;
    }
    let key = |t: &(ExtractionParams, CategoryExplanation, Confusion)| {
        (t.1.rectangle_count(), t.1.constraint_count(), t.0.r)
    };
    key(a) < key(b)
}
