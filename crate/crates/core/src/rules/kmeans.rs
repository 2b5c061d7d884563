use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_RESTARTS: usize = 10;
const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(points: &[Vec<f64>], r: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first].clone()];
    let mut dist: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while centroids.len() < r {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, &d) in dist.iter().enumerate() {
                if d > 0.0 {
                    pick = Some(i);
                    if target < d {
                        break;
                    }
                    target -= d;
                }
            }
            pick.expect("positive total implies a positive distance")
        } else {
            // Every remaining point coincides with a centre.
            chosen.iter().position(|c| !c).unwrap_or(0)
        };
        chosen[pick] = true;
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &points[pick]));
        }
        centroids.push(points[pick].clone());
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> KMeansFit {
    let dim = points[0].len();
    let r = centroids.len();
    let mut assignments = vec![usize::MAX; points.len()];
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        for (a, p) in assignments.iter_mut().zip(points) {
            let (c, _) = nearest(p, &centroids);
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; r];
        let mut counts = vec![0usize; r];
        for (&a, p) in assignments.iter().zip(points) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..r {
            // An empty cluster keeps its previous centre.
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    let inertia = assignments
        .iter()
        .zip(points)
        .map(|(&a, p)| sq_dist(p, &centroids[a]))
        .sum();
    KMeansFit {
        assignments,
        centroids,
        inertia,
    }
}

/// Best-of-`restarts` k-means with k-means++ seeding, squared Euclidean
/// distance and at most 300 Lloyd iterations per restart.
pub fn kmeans(points: &[Vec<f64>], r: usize, restarts: usize, seed: u64) -> Result<KMeansFit> {
    let n = points.len();
    if r == 0 || r > n {
        return Err(Error::TooManyClusters { r, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansFit> = None;
    for _ in 0..restarts.max(1) {
        let init = plus_plus_init(points, r, &mut rng);
        let fit = lloyd(points, init);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterStats {
    pub size: usize,
    /// Members labeled with the target category.
    pub target_count: usize,
    /// Share of members carrying the cluster's most common label.
    pub purity: f64,
    /// Target-labeled members are a strict majority.
    pub majority: bool,
}

/// Clusters of embedded explanations. Clusters left empty by k-means are
/// dropped, so there may be fewer than `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub stats: Vec<ClusterStats>,
    pub inertia: f64,
}

impl Clustering {
    /// Number of target-majority clusters.
    pub fn majority_count(&self) -> usize {
        self.stats.iter().filter(|s| s.majority).count()
    }

    pub fn purities(&self) -> Vec<f64> {
        self.stats.iter().map(|s| s.purity).collect()
    }
}

/// Clusters the columns of `h` and scores each cluster against the
/// one-vs-rest labels. A cluster is a majority cluster when strictly more
/// than half of its members are target-labeled.
pub fn cluster_embeddings(
    h: &Array2<f64>,
    labels: &[bool],
    r: usize,
    restarts: usize,
    seed: u64,
) -> Result<Clustering> {
    cluster_embeddings_with_share(h, labels, r, restarts, seed, 0.5)
}

/// As [`cluster_embeddings`], with the majority flag set when the target
/// share strictly exceeds `majority_share`.
pub fn cluster_embeddings_with_share(
    h: &Array2<f64>,
    labels: &[bool],
    r: usize,
    restarts: usize,
    seed: u64,
    majority_share: f64,
) -> Result<Clustering> {
    let points: Vec<Vec<f64>> = h.columns().into_iter().map(|c| c.to_vec()).collect();
    if labels.len() != points.len() {
        return Err(Error::Schema(format!(
            "{} labels for {} embedded explanations",
            labels.len(),
            points.len()
        )));
    }
    let fit = kmeans(&points, r, restarts, seed)?;

    let mut size = vec![0usize; r];
    let mut target = vec![0usize; r];
    for (&a, &l) in fit.assignments.iter().zip(labels) {
        size[a] += 1;
        if l {
            target[a] += 1;
        }
    }
    let mut remap = vec![usize::MAX; r];
    let mut centroids = Vec::new();
    let mut stats = Vec::new();
    for c in 0..r {
        if size[c] == 0 {
            continue;
        }
        remap[c] = stats.len();
        centroids.push(fit.centroids[c].clone());
        let other = size[c] - target[c];
        stats.push(ClusterStats {
            size: size[c],
            target_count: target[c],
            purity: target[c].max(other) as f64 / size[c] as f64,
            majority: target[c] as f64 > majority_share * size[c] as f64,
        });
    }
    Ok(Clustering {
        assignments: fit.assignments.iter().map(|&a| remap[a]).collect(),
        centroids,
        stats,
        inertia: fit.inertia,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_clouds() -> (Array2<f64>, Vec<bool>) {
        let mut cols = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            let e = i as f64 * 0.01;
            cols.push([0.0 + e, 0.1 - e]);
            labels.push(true);
            cols.push([5.0 - e, 5.0 + e]);
            labels.push(false);
        }
        let h = Array2::from_shape_fn((2, cols.len()), |(r, c)| cols[c][r]);
        (h, labels)
    }

    #[test]
    fn separated_clouds_are_pure() {
        let (h, labels) = two_clouds();
        let c = cluster_embeddings(&h, &labels, 2, 10, 1).unwrap();
        assert_eq!(c.purities(), vec![1.0, 1.0]);
        assert_eq!(c.majority_count(), 1);
    }

    #[test]
    fn r_equal_n_gives_singletons() {
        let (h, labels) = two_clouds();
        let n = labels.len();
        let c = cluster_embeddings(&h, &labels, n, 3, 0).unwrap();
        assert_eq!(c.stats.len(), n);
        assert!(c.stats.iter().all(|s| s.size == 1 && s.purity == 1.0));
    }

    #[test]
    fn single_cluster_purity_is_majority_fraction() {
        let (h, mut labels) = two_clouds();
        labels[1] = true;
        labels[3] = true;
        let c = cluster_embeddings(&h, &labels, 1, 1, 0).unwrap();
        assert_eq!(c.stats[0].purity, 12.0 / 20.0);
        assert!(c.stats[0].majority);
    }

    #[test]
    fn ties_are_not_majority() {
        let h = Array2::from_shape_vec((1, 2), vec![0.0, 0.0]).unwrap();
        let c = cluster_embeddings(&h, &[true, false], 1, 1, 0).unwrap();
        assert!(!c.stats[0].majority);
        assert_eq!(c.stats[0].purity, 0.5);
    }

    #[test]
    fn too_many_clusters() {
        let (h, labels) = two_clouds();
        assert!(matches!(
            cluster_embeddings(&h, &labels, 21, 1, 0),
            Err(Error::TooManyClusters { r: 21, n: 20 })
        ));
    }

    #[test]
    fn deterministic_for_seed() {
        let (h, labels) = two_clouds();
        let a = cluster_embeddings(&h, &labels, 4, 5, 9).unwrap();
        let b = cluster_embeddings(&h, &labels, 4, 5, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn identical_points_do_not_panic() {
        let h = Array2::zeros((3, 6));
        let c = cluster_embeddings(&h, &[true; 6], 3, 2, 0).unwrap();
        assert_eq!(c.stats.iter().map(|s| s.size).sum::<usize>(), 6);
    }
}
