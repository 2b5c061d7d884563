//! Weighted ridge fits checked against a dense solve of the full normal
//! equations, intercept included and left unpenalized.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use proptest::prelude::*;
use rectex_core::explainer::WeightedRidge;

fn oracle(design: &[Vec<f64>], weights: &[f64], y: &[f64], ridge: f64) -> (f64, Vec<f64>) {
    let m = design[0].len();
    let mut a = DMatrix::<f64>::zeros(m + 1, m + 1);
    let mut b = DVector::<f64>::zeros(m + 1);
    for ((row, &w), &t) in design.iter().zip(weights).zip(y) {
        let mut z = vec![1.0];
        z.extend_from_slice(row);
        for i in 0..=m {
            b[i] += w * z[i] * t;
            for j in 0..=m {
                a[(i, j)] += w * z[i] * z[j];
            }
        }
    }
    for i in 1..=m {
        a[(i, i)] += ridge;
    }
    let x = a.lu().solve(&b).expect("oracle system solvable");
    (x[0], x.iter().skip(1).copied().collect())
}

fn fit(design: &[Vec<f64>], weights: &[f64], y: &[f64], ridge: f64) -> (f64, Vec<f64>) {
    let m = design[0].len();
    let flat: Vec<f64> = design.iter().flatten().copied().collect();
    let d = Array2::from_shape_vec((design.len(), m), flat).unwrap();
    let f = WeightedRidge::new(&d, weights, ridge).unwrap().fit(y);
    (f.intercept, f.coefficients)
}

#[test]
fn three_samples() {
    let design = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
    let weights = [1.0, 0.5, 0.25];
    let y = [1.0, 0.0, 1.0];
    let (a, b) = fit(&design, &weights, &y, 0.3);
    let (a0, b0) = oracle(&design, &weights, &y, 0.3);
    assert!((a - a0).abs() < 1e-12, "{a} vs {a0}");
    for (u, v) in b.iter().zip(&b0) {
        assert!((u - v).abs() < 1e-12, "{b:?} vs {b0:?}");
    }
}

proptest! {
    #[test]
    fn matches_dense_solve(
        n in 3usize..30,
        m in 1usize..6,
        seed in any::<u64>(),
        ridge in 0.05f64..5.0,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let design: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..m).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect())
            .collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let (a, b) = fit(&design, &weights, &y, ridge);
        let (a0, b0) = oracle(&design, &weights, &y, ridge);
        prop_assert!((a - a0).abs() < 1e-9);
        for (u, v) in b.iter().zip(&b0) {
            prop_assert!((u - v).abs() < 1e-9);
        }
    }
}
