//! Normalized-cut spectral partitioning: eigenvectors of the symmetric
//! normalized Laplacian, row-normalized, discretized by seeded k-means.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::affinity::AffinityMatrix;
use crate::error::{Error, Result};

const KMEANS_MAX_ITER: usize = 100;
const KMEANS_TOL: f64 = 1e-8;

/// Eigenvectors of the normalized Laplacian of an affinity matrix, ordered by
/// ascending eigenvalue. Computed once and reused for every cluster count.
#[derive(Debug, Clone)]
pub struct SpectralEmbedding {
    /// Columns are eigenvectors.
    vectors: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

impl SpectralEmbedding {
    pub fn new(w: &AffinityMatrix) -> Result<Self> {
        let n = w.len();
        if n == 0 {
            return Ok(SpectralEmbedding {
                vectors: DMatrix::zeros(0, 0),
                eigenvalues: Vec::new(),
            });
        }
        // isolated rows get degree one
        let inv_sqrt: Vec<f64> = (0..n)
            .map(|i| {
                let d: f64 = w.matrix.row(i).iter().sum();
                if d > 0.0 {
                    1.0 / d.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let laplacian = DMatrix::from_fn(n, n, |i, j| {
            let a = inv_sqrt[i] * w.matrix[(i, j)] * inv_sqrt[j];
            if i == j {
                1.0 - a
            } else {
                -a
            }
        });
        if laplacian.iter().any(|v| !v.is_finite()) {
            return Err(Error::Eigen("laplacian has non-finite entries".into()));
        }
        let eig = SymmetricEigen::try_new(laplacian, f64::EPSILON, 10_000)
            .ok_or_else(|| Error::Eigen(format!("no convergence on a {n}x{n} laplacian")))?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[a]
                .total_cmp(&eig.eigenvalues[b])
                .then(a.cmp(&b))
        });
        let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
        let eigenvalues = order.iter().map(|&j| eig.eigenvalues[j]).collect();
        Ok(SpectralEmbedding {
            vectors,
            eigenvalues,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Rows of the first `k` eigenvectors, each scaled to unit length.
    fn points(&self, k: usize) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|i| {
                let row: Vec<f64> = (0..k).map(|j| self.vectors[(i, j)]).collect();
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    row.iter().map(|v| v / norm).collect()
                } else {
                    row
                }
            })
            .collect()
    }

    /// Labels in `0..k`, deterministic in `(k, seed)`.
    pub fn partition(&self, k: usize, seed: u64) -> Result<Vec<usize>> {
        let n = self.len();
        if k == 0 || k > n {
            return Err(Error::InvalidClusterCount { k, items: n });
        }
        if k == 1 {
            return Ok(vec![0; n]);
        }
        Ok(kmeans(&self.points(k), k, seed))
    }
}

pub fn spectral_partition(w: &AffinityMatrix, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 || k > w.len() {
        return Err(Error::InvalidClusterCount { k, items: w.len() });
    }
    SpectralEmbedding::new(w)?.partition(k, seed)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    centers
        .iter()
        .enumerate()
        .map(|(c, center)| (c, sq_dist(p, center)))
        .fold(
            (0, f64::INFINITY),
            |best, cur| if cur.1 < best.1 { cur } else { best },
        )
}

fn kmeans_pp(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centers = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    pick = Some(i);
                    if target < d {
                        break;
                    }
                    target -= d;
                }
            }
            pick.expect("positive total weight")
        } else {
            // every point coincides with a center
            (0..n).find(|&i| !chosen[i]).expect("k <= n")
        };
        chosen[next] = true;
        centers.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &points[next]));
        }
    }
    centers
}

/// Lloyd iterations from a k-means++ start. An emptied cluster is reseeded
/// with the point farthest from its center.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<usize> {
    let n = points.len();
    let dim = points.first().map_or(0, Vec::len);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = kmeans_pp(points, k, &mut rng);
    let mut labels = vec![0; n];
    for _ in 0..KMEANS_MAX_ITER {
        let mut dists = vec![0.0; n];
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centers);
            labels[i] = c;
            dists[i] = d;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .unwrap();
                let old = labels[far];
                counts[old] -= 1;
                for (s, v) in sums[old].iter_mut().zip(&points[far]) {
                    *s -= v;
                }
                labels[far] = c;
                dists[far] = 0.0;
                counts[c] = 1;
                sums[c] = points[far].clone();
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            let new: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(sq_dist(&new, &centers[c]));
            centers[c] = new;
        }
        if shift.sqrt() < KMEANS_TOL {
            break;
        }
    }
    for (i, p) in points.iter().enumerate() {
        labels[i] = nearest(p, &centers).0;
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(sizes: &[usize]) -> AffinityMatrix {
        let n: usize = sizes.iter().sum();
        let mut block_of = Vec::new();
        for (b, &s) in sizes.iter().enumerate() {
            block_of.extend(std::iter::repeat_n(b, s));
        }
        AffinityMatrix {
            matrix: DMatrix::from_fn(
                n,
                n,
                |i, j| if block_of[i] == block_of[j] { 1.0 } else { 0.0 },
            ),
            n_point_tracks: n,
        }
    }

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
    }

    #[test]
    fn separates_components() {
        let w = block(&[3, 2]);
        for seed in 0..10 {
            let labels = spectral_partition(&w, 2, seed).unwrap();
            assert!(same_partition(&labels, &[0, 0, 0, 1, 1]), "{labels:?}");
        }
    }

    #[test]
    fn single_cluster() {
        let w = block(&[2, 2]);
        assert_eq!(spectral_partition(&w, 1, 0).unwrap(), vec![0; 4]);
    }

    #[test]
    fn one_cluster_per_item() {
        let mut w = block(&[5]);
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    w.matrix[(i, j)] = 0.1 * ((i + j) % 3) as f64 + 0.05 * i.max(j) as f64;
                }
            }
        }
        for seed in 0..5 {
            let mut labels = spectral_partition(&w, 5, seed).unwrap();
            labels.sort();
            assert_eq!(labels, vec![0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn bad_cluster_counts() {
        let w = block(&[2]);
        assert!(spectral_partition(&w, 3, 0).is_err());
        assert!(spectral_partition(&w, 0, 0).is_err());
    }

    #[test]
    fn isolated_rows_are_regularized() {
        let mut w = block(&[2, 1]);
        w.matrix[(2, 2)] = 0.0;
        let e = SpectralEmbedding::new(&w).unwrap();
        assert!(e.eigenvalues().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn deterministic_in_seed() {
        let w = block(&[3, 3, 2]);
        let e = SpectralEmbedding::new(&w).unwrap();
        assert_eq!(e.partition(4, 9).unwrap(), e.partition(4, 9).unwrap());
    }
}
