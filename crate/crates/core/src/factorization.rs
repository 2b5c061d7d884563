//! Sign split of a contribution matrix and its nonnegative factorization.

use ndarray::{Array2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explainer::ContributionMatrix;
use crate::matrix_text::TextMatrix;

const EPS: f64 = 1e-12;

/// Sign-split contributions: rows `0..M` hold positive parts, rows `M..2M` the
/// magnitudes of negative parts (the complemented features).
#[derive(Debug, Clone, PartialEq)]
pub struct StackedMatrix {
    values: Array2<f64>,
    feature_count: usize,
}

impl StackedMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// `M`, half the row count.
    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn num_instances(&self) -> usize {
        self.values.ncols()
    }

    /// Positive parts minus negative parts.
    pub fn reconstruct(&self) -> Array2<f64> {
        let m = self.feature_count;
        let pos = self.values.slice(ndarray::s![..m, ..]);
        let neg = self.values.slice(ndarray::s![m.., ..]);
        &pos - &neg
    }
}

pub fn stack_nonnegative(contributions: &ContributionMatrix) -> StackedMatrix {
    stack_values(&contributions.values)
}

pub fn stack_values(signed: &Array2<f64>) -> StackedMatrix {
    let (m, n) = signed.dim();
    let mut values = Array2::<f64>::zeros((2 * m, n));
    for ((i, j), &v) in signed.indexed_iter() {
        if v > 0.0 {
            values[[i, j]] = v;
        } else if v < 0.0 {
            values[[i + m, j]] = -v;
        }
    }
    StackedMatrix {
        values,
        feature_count: m,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmfConfig {
    pub rank: usize,
    pub max_iters: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for NmfConfig {
    fn default() -> Self {
        NmfConfig {
            rank: 10,
            max_iters: 500,
            tolerance: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    /// `2M x k` basis; column `l` is base vector `w_l`.
    pub w: Array2<f64>,
    /// `k x N` embedded explanations; column `j` belongs to instance `j`.
    pub h: Array2<f64>,
    pub rank: usize,
    /// `||V - WH||_F` at termination.
    pub final_objective: f64,
    pub iterations_run: usize,
    /// Objective after initialization and after every iteration.
    pub objective_history: Vec<f64>,
}

impl Factorization {
    /// Base vector `w_l` as a slice-backed owned vector.
    pub fn base_vector(&self, l: usize) -> Vec<f64> {
        self.w.column(l).to_vec()
    }

    pub fn w_text(&self) -> TextMatrix {
        TextMatrix {
            kind: "W".into(),
            values: self.w.clone(),
            target: None,
            labels: None,
        }
    }

    pub fn h_text(&self) -> TextMatrix {
        TextMatrix {
            kind: "H".into(),
            values: self.h.clone(),
            target: None,
            labels: None,
        }
    }
}

pub fn frobenius_residual(v: &Array2<f64>, w: &Array2<f64>, h: &Array2<f64>) -> f64 {
    let approx = w.dot(h);
    Zip::from(v)
        .and(&approx)
        .fold(0.0, |acc, &a, &b| acc + (a - b) * (a - b))
        .sqrt()
}

/// Lee-Seung multiplicative updates minimizing `||V - WH||_F`.
///
/// `W` entries are drawn from `(0, 1]` and scaled by `sqrt(mean(V) / k)`.
/// `H` draws one value per row and repeats it across columns, so identical
/// input columns keep identical embeddings throughout. Stops after
/// `max_iters` or when the relative objective decrease drops below
/// `tolerance`.
pub fn nmf(stacked: &StackedMatrix, config: &NmfConfig) -> Result<Factorization> {
    nmf_values(stacked.values(), config)
}

pub fn nmf_values(v: &Array2<f64>, config: &NmfConfig) -> Result<Factorization> {
    let (rows, cols) = v.dim();
    let k = config.rank;
    let max_rank = rows.min(cols);
    if k == 0 || k > max_rank {
        return Err(Error::RankTooLarge { k, max: max_rank });
    }
    if config.max_iters == 0 {
        return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
    }
    if !(config.tolerance > 0.0) {
        return Err(Error::InvalidConfig("tolerance must be > 0".into()));
    }
    if v.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::InvalidConfig(
            "factorization input must be finite and nonnegative".into(),
        ));
    }
    if v.iter().all(|&x| x == 0.0) {
        return Ok(Factorization {
            w: Array2::zeros((rows, k)),
            h: Array2::zeros((k, cols)),
            rank: k,
            final_objective: 0.0,
            iterations_run: 0,
            objective_history: vec![0.0],
        });
    }

    let scale = (v.mean().unwrap_or(0.0) / k as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut unit = || 1.0 - rng.gen::<f64>();
    let mut w = Array2::from_shape_simple_fn((rows, k), || unit() * scale);
    let row_init: Vec<f64> = (0..k).map(|_| unit() * scale).collect();
    let mut h = Array2::from_shape_fn((k, cols), |(l, _)| row_init[l]);

    let mut objective = frobenius_residual(v, &w, &h);
    let mut history = vec![objective];
    let mut iterations = 0;
    while iterations < config.max_iters {
        let wt_v = w.t().dot(v);
        let wt_w_h = w.t().dot(&w).dot(&h);
        Zip::from(&mut h)
            .and(&wt_v)
            .and(&wt_w_h)
            .for_each(|x, &num, &den| *x *= num / (den + EPS));

        let v_ht = v.dot(&h.t());
        let w_h_ht = w.dot(&h.dot(&h.t()));
        Zip::from(&mut w)
            .and(&v_ht)
            .and(&w_h_ht)
            .for_each(|x, &num, &den| *x *= num / (den + EPS));

        iterations += 1;
        let next = frobenius_residual(v, &w, &h);
        history.push(next);
        let previous = objective;
        objective = next;
        if objective == 0.0 || (previous - objective) / previous < config.tolerance {
            break;
        }
    }
    normalize_columns(&mut w, &mut h);
    Ok(Factorization {
        w,
        h,
        rank: k,
        final_objective: objective,
        iterations_run: iterations,
        objective_history: history,
    })
}

/// Rescales every nonzero column of `w` so its largest entry is 1 and the
/// matching row of `h` inversely, leaving the product unchanged up to
/// rounding.
fn normalize_columns(w: &mut Array2<f64>, h: &mut Array2<f64>) {
    for l in 0..w.ncols() {
        let peak = w.column(l).iter().fold(0.0f64, |a, &v| a.max(v));
        if peak > 0.0 {
            w.column_mut(l).mapv_inplace(|v| v / peak);
            h.row_mut(l).mapv_inplace(|v| v * peak);
        }
    }
}

/// The `k x N` matrix of embedded explanations.
pub fn embed_explanations(fact: &Factorization) -> &Array2<f64> {
    &fact.h
}

/// True when every recorded objective is at most its predecessor. Increases
/// up to `rel_slack` times the initial objective are tolerated as rounding
/// noise near an exact fit.
pub fn objective_is_monotone(history: &[f64], rel_slack: f64) -> bool {
    let scale = history.first().map_or(0.0, |h| h.abs());
    history.windows(2).all(|w| w[1] <= w[0] + rel_slack * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Category;
    use ndarray::array;
    use proptest::prelude::*;

    fn contributions(values: Array2<f64>) -> ContributionMatrix {
        let n = values.ncols();
        ContributionMatrix {
            values,
            target: Category(1),
            labels: vec![false; n],
        }
    }

    #[test]
    fn sign_split_by_definition() {
        let s = stack_nonnegative(&contributions(array![[1.0, -2.0]]));
        assert_eq!(s.values(), &array![[1.0, 0.0], [0.0, 2.0]]);
    }

    #[test]
    fn nonnegative_input_has_zero_negative_block() {
        let s = stack_nonnegative(&contributions(array![[1.0, 0.5], [0.0, 3.0]]));
        assert!(s
            .values()
            .slice(ndarray::s![2.., ..])
            .iter()
            .all(|&v| v == 0.0));
    }

    proptest! {
        #[test]
        fn split_reconstructs_exactly(values in proptest::collection::vec(-5.0f64..5.0, 12)) {
            let signed = Array2::from_shape_vec((3, 4), values).unwrap();
            let s = stack_values(&signed);
            prop_assert!(s.values().iter().all(|&v| v >= 0.0));
            prop_assert_eq!(s.reconstruct(), signed.clone());
            for i in 0..3 {
                for j in 0..4 {
                    prop_assert_eq!(s.values()[[i, j]] * s.values()[[i + 3, j]], 0.0);
                }
            }
        }
    }

    #[test]
    fn rank_one_recovery() {
        let u = array![1.0, 2.0, 0.5, 3.0];
        let v = array![0.3, 1.0, 2.0, 0.1, 4.0];
        let outer = Array2::from_shape_fn((4, 5), |(i, j)| u[i] * v[j]);
        let norm = outer.iter().map(|x| x * x).sum::<f64>().sqrt();
        let config = NmfConfig {
            rank: 1,
            max_iters: 2000,
            tolerance: 1e-12,
            seed: 3,
        };
        let f = nmf_values(&outer, &config).unwrap();
        assert!(f.final_objective < 1e-6 * norm, "{}", f.final_objective);
        assert!(objective_is_monotone(&f.objective_history, 1e-12));
    }

    #[test]
    fn zero_matrix() {
        let f = nmf_values(
            &Array2::zeros((4, 3)),
            &NmfConfig {
                rank: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(f.final_objective, 0.0);
        assert!(f.w.iter().chain(f.h.iter()).all(|&x| x == 0.0));
    }

    #[test]
    fn rank_too_large() {
        let s = stack_values(&array![[1.0, 2.0, 3.0], [0.5, -1.0, 2.0]]);
        let config = NmfConfig {
            rank: 5,
            ..Default::default()
        };
        assert!(matches!(
            nmf(&s, &config),
            Err(Error::RankTooLarge { k: 5, max: 3 })
        ));
    }

    #[test]
    fn identity_basis_gives_h_equal_v() {
        // With k = rows and W fixed at the identity, the H update converges to V.
        let v = array![[1.0, 0.0, 2.0], [0.5, 3.0, 0.0]];
        let mut h = Array2::from_elem((2, 3), 1.0);
        let w = Array2::<f64>::eye(2);
        for _ in 0..200 {
            let num = w.t().dot(&v);
            let den = w.t().dot(&w).dot(&h);
            Zip::from(&mut h)
                .and(&num)
                .and(&den)
                .for_each(|x, &a, &b| *x *= a / (b + EPS));
        }
        assert!(h.iter().zip(v.iter()).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn duplicate_columns_stay_identical() {
        let signed = array![
            [1.0, -0.5, 1.0, 0.2],
            [0.0, 2.0, 0.0, -1.0],
            [0.3, 0.1, 0.3, 0.0]
        ];
        let s = stack_values(&signed);
        let f = nmf(
            &s,
            &NmfConfig {
                rank: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(f.h.column(0), f.h.column(2));
    }

    #[test]
    fn residual_within_objective() {
        let signed = array![[1.0, -0.5, 0.7], [0.2, 2.0, -0.4], [0.3, 0.1, 0.9]];
        let s = stack_values(&signed);
        let f = nmf(
            &s,
            &NmfConfig {
                rank: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let h = embed_explanations(&f);
        for j in 0..3 {
            let approx = f.w.dot(&h.column(j));
            let resid = (&s.values().column(j) - &approx)
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt();
            assert!(resid <= f.final_objective + 1e-12);
        }
    }
}
