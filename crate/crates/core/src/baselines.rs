//! Reference methods: single-view low-rank representation (LRR), naive
//! multi-view LRR, a Gaussian-kernel spectral baseline (SPC) and the unrotated
//! tensor variant.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::solver::{self, column_shrink, MultiViewDataset, SolverConfig, SolverOutput};
use crate::spectral::{fuse_affinity, AffinityMatrix};
use crate::tensor::Matrix;
use crate::tsvd::svt;

#[derive(Clone, Debug)]
pub struct LrrOutput {
    pub z: Matrix,
    pub e: Matrix,
    pub iterations: usize,
    pub converged: bool,
}

fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// LRR with the default penalty schedule.
pub fn lrr(x: &Matrix, lambda: f64) -> Result<Matrix> {
    Ok(lrr_with(x, &SolverConfig::new(lambda))?.z)
}

/// Inexact ALM for `min lambda ||E||_{2,1} + ||J||_*` subject to
/// `X = X Z + E` and `Z = J`. Uses `mu0`, `rho0`, `eta`, the caps, `epsilon`
/// and `max_iters` from `config`; `rotated` is ignored.
pub fn lrr_with(x: &Matrix, config: &SolverConfig) -> Result<LrrOutput> {
    config.validate()?;
    let (d, n) = x.shape();
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("LRR needs a nonempty data matrix".into()));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("LRR data"));
    }
    let xtx = x.tr_mul(x);
    let mut z = Matrix::zeros(n, n);
    let mut j = Matrix::zeros(n, n);
    let mut w = Matrix::zeros(n, n);
    let mut e = Matrix::zeros(d, n);
    let mut y = Matrix::zeros(d, n);
    let (mut mu, mut rho) = (config.mu0, config.rho0);
    let mut iterations = 0;
    let mut converged = false;
    for it in 0..config.max_iters {
        iterations = it + 1;
        let system = Matrix::identity(n, n) + &xtx * (mu / rho);
        let chol = system.cholesky().ok_or(Error::LinearSolve { view: 0 })?;
        let rhs = x.tr_mul(&(&y + (x - &e) * mu)) / rho - &w / rho + &j;
        z = chol.solve(&rhs);
        e = column_shrink(&(x - x * &z + &y / mu), config.lambda / mu);
        j = svt(&(&z + &w / rho), 1.0 / rho)?;
        let recon = x - x * &z - &e;
        let gap = &z - &j;
        y += &recon * mu;
        w += &gap * rho;
        mu = (config.eta * mu).min(config.mu_max);
        rho = (config.eta * rho).min(config.rho_max);
        if !z.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged {
                iteration: iterations,
                what: "Z",
            });
        }
        if max_abs(&recon) < config.epsilon && max_abs(&gap) < config.epsilon {
            converged = true;
            break;
        }
    }
    Ok(LrrOutput {
        z,
        e,
        iterations,
        converged,
    })
}

/// Independent LRR per view, one `lambda` per view.
pub fn naive_multiview(data: &MultiViewDataset, lambdas: &[f64], config: &SolverConfig) -> Result<Vec<LrrOutput>> {
    if lambdas.len() != data.n_views() {
        return Err(Error::InvalidArgument(format!(
            "{} lambdas for {} views",
            lambdas.len(),
            data.n_views()
        )));
    }
    data.views()
        .par_iter()
        .zip(lambdas)
        .map(|(x, &lambda)| lrr_with(x, &SolverConfig { lambda, ..config.clone() }))
        .collect()
}

/// Fused naive multi-view affinity.
pub fn naive_affinity(outputs: &[LrrOutput]) -> Result<AffinityMatrix> {
    let z: Vec<Matrix> = outputs.iter().map(|o| o.z.clone()).collect();
    fuse_affinity(&z)
}

/// Median Euclidean distance over distinct sample pairs.
pub fn median_distance(x: &Matrix) -> f64 {
    let n = x.ncols();
    let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push((x.column(i) - x.column(j)).norm());
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    }
}

/// Gaussian kernel `exp(-||x_i - x_j||^2 / (2 sigma^2))` with a zero diagonal.
/// `sigma` defaults to the median pairwise distance.
pub fn spc_affinity(x: &Matrix, sigma: Option<f64>) -> Result<AffinityMatrix> {
    let sigma = match sigma {
        Some(s) => s,
        None => median_distance(x),
    };
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("kernel width must be positive, got {sigma}")));
    }
    let n = x.ncols();
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let d2 = (x.column(i) - x.column(j)).norm_squared();
            let v = (-d2 / (2.0 * sigma * sigma)).exp();
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    AffinityMatrix::new(a)
}

/// The tensor solver on the plain `N x N x V` stack.
pub fn ut_svd_msc(data: &MultiViewDataset, config: &SolverConfig) -> Result<SolverOutput> {
    solver::run(data, &SolverConfig {
        rotated: false,
        ..config.clone()
    })
}
