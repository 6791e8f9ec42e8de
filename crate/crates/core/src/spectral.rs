//! Affinity fusion and normalized spectral clustering with k-means++.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

const DEGREE_FLOOR: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;
pub const DEFAULT_RESTARTS: usize = 20;
pub const KMEANS_MAX_ITERS: usize = 300;

/// A symmetric, nonnegative, finite `N x N` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct AffinityMatrix(Matrix);

impl AffinityMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::ShapeMismatch {
                op: "affinity",
                expected: "nonempty square matrix".into(),
                found: format!("{}x{}", m.nrows(), m.ncols()),
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("affinity"));
        }
        if m.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidArgument("affinity has negative entries".into()));
        }
        let scale = m.amax().max(1.0);
        if (&m - m.transpose()).amax() > SYMMETRY_TOL * scale {
            return Err(Error::InvalidArgument("affinity is not symmetric".into()));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }
}

/// `A = (1/V) sum_v (|Z_v| + |Z_v^T|) / 2`.
pub fn fuse_affinity(z: &[Matrix]) -> Result<AffinityMatrix> {
    let first = z.first().ok_or_else(|| Error::InvalidArgument("no coefficient matrices".into()))?;
    let n = first.nrows();
    let mut a = Matrix::zeros(n, n);
    for zv in z {
        if zv.shape() != (n, n) {
            return Err(Error::ShapeMismatch {
                op: "fuse_affinity",
                expected: format!("{n}x{n}"),
                found: format!("{}x{}", zv.nrows(), zv.ncols()),
            });
        }
        let abs = zv.abs();
        a += &abs + abs.transpose();
    }
    a /= 2.0 * z.len() as f64;
    AffinityMatrix::new(a)
}

fn inv_sqrt_degrees(a: &AffinityMatrix) -> DVector<f64> {
    let m = a.matrix();
    DVector::from_iterator(m.nrows(), m.row_iter().map(|r| 1.0 / (r.sum() + DEGREE_FLOOR).sqrt()))
}

/// `L = I - D^{-1/2} A D^{-1/2}` with a small floor on the degrees.
pub fn normalized_laplacian(a: &AffinityMatrix) -> Matrix {
    let d = inv_sqrt_degrees(a);
    let n = a.n();
    let mut l = Matrix::identity(n, n);
    let m = a.matrix();
    for j in 0..n {
        for i in 0..n {
            l[(i, j)] -= d[i] * m[(i, j)] * d[j];
        }
    }
    l
}

/// Eigenvectors of the `k` smallest Laplacian eigenvalues, rows normalized to
/// unit length. Returns an `N x k` matrix.
pub fn spectral_embedding(a: &AffinityMatrix, k: usize) -> Result<Matrix> {
    let n = a.n();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("cannot embed {n} samples into {k} clusters")));
    }
    let l = normalized_laplacian(a);
    let eig = SymmetricEigen::new(l);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let mut emb = Matrix::zeros(n, k);
    for (c, &idx) in order.iter().take(k).enumerate() {
        emb.set_column(c, &eig.eigenvectors.column(idx));
    }
    for mut row in emb.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    Ok(emb)
}

#[derive(Clone, Debug)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centers: Matrix,
    pub inertia: f64,
    pub iterations: usize,
}

fn sq_dist(points: &Matrix, i: usize, centers: &Matrix, c: usize) -> f64 {
    (0..points.ncols()).map(|d| (points[(i, d)] - centers[(c, d)]).powi(2)).sum()
}

fn plus_plus_init(points: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = points.nrows();
    let mut centers = Matrix::zeros(k, points.ncols());
    centers.set_row(0, &points.row(rng.random_range(0..n)));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centers, 0)).collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.set_row(c, &points.row(pick));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(points, i, &centers, c));
        }
    }
    centers
}

fn lloyd(points: &Matrix, mut centers: Matrix, max_iters: usize) -> KMeansResult {
    let (n, k) = (points.nrows(), centers.nrows());
    let mut labels = vec![usize::MAX; n];
    let mut iterations = 0;
    for it in 0..max_iters {
        iterations = it + 1;
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let mut best = (f64::INFINITY, 0);
            for c in 0..k {
                let d = sq_dist(points, i, &centers, c);
                if d < best.0 {
                    best = (d, c);
                }
            }
            if *label != best.1 {
                *label = best.1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Matrix::zeros(k, points.ncols());
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            let mut row = sums.row_mut(l);
            row += points.row(i);
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                let row = sums.row(c) / counts[c] as f64;
                centers.set_row(c, &row);
            } else {
                // revive an empty cluster at the point farthest from its center
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(points, a, &centers, labels[a]).total_cmp(&sq_dist(points, b, &centers, labels[b]))
                    })
                    .unwrap_or(0);
                centers.set_row(c, &points.row(far));
            }
        }
    }
    let inertia = labels.iter().enumerate().map(|(i, &l)| sq_dist(points, i, &centers, l)).sum();
    KMeansResult {
        labels,
        centers,
        inertia,
        iterations,
    }
}

/// Lloyd's k-means with k-means++ seeding, best of `restarts` runs by inertia.
/// Restart `r` draws from stream `r` of a ChaCha generator keyed by `seed`, so
/// results do not depend on thread scheduling.
pub fn kmeans(points: &Matrix, k: usize, seed: u64, restarts: usize) -> Result<KMeansResult> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("cannot split {n} points into {k} clusters")));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("k-means input"));
    }
    let runs: Vec<KMeansResult> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let centers = plus_plus_init(points, k, &mut rng);
            lloyd(points, centers, KMEANS_MAX_ITERS)
        })
        .collect();
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.inertia < a.inertia { b } else { a })
        .expect("at least one restart");
    Ok(best)
}

/// Normalized spectral clustering of an affinity into `k` groups.
pub fn spectral_cluster(a: &AffinityMatrix, k: usize, seed: u64, restarts: usize) -> Result<Vec<usize>> {
    let emb = spectral_embedding(a, k)?;
    Ok(kmeans(&emb, k, seed, restarts)?.labels)
}

/// Affinity with `sizes` diagonal blocks of ones.
pub fn block_affinity(sizes: &[usize]) -> AffinityMatrix {
    let n: usize = sizes.iter().sum();
    let mut m = DMatrix::zeros(n, n);
    let mut start = 0;
    for &s in sizes {
        m.view_mut((start, start), (s, s)).fill(1.0);
        start += s;
    }
    AffinityMatrix(m)
}
