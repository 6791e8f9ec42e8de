//! ADMM solver for t-SVD multi-view subspace clustering.
//!
//! Solves
//!
//! ```text
//! min  lambda * ||E||_{2,1} + ||G||_tnn
//! s.t. X_v = X_v Z_v + E_v            (every view v)
//!      G   = Phi(Z_1, ..., Z_V)
//! ```
//!
//! where `E = [E_1; ...; E_V]` stacks the per-view errors and `Phi` merges the
//! `N x N` coefficient matrices into an `N x N x V` tensor, rotated to
//! `N x V x N` unless the unrotated variant is requested. Each iteration
//! updates `Z_v` (closed form), `E` (column shrinkage), `G` (tubal shrinkage),
//! the multipliers `Y_v`, `W`, and finally grows both penalties by `eta`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Tensor3};
use crate::tsvd::{real_svd, tubal_shrink, ttnn};

/// Multi-view data: `V` matrices of shape `d_v x N` (columns are samples).
#[derive(Clone, Debug, PartialEq)]
pub struct MultiViewDataset {
    views: Vec<Matrix>,
    labels: Option<Vec<usize>>,
    clusters: usize,
}

impl MultiViewDataset {
    /// Labels are 0-based cluster indices below `clusters`.
    pub fn new(views: Vec<Matrix>, labels: Option<Vec<usize>>, clusters: usize) -> Result<Self> {
        let first = views
            .first()
            .ok_or_else(|| Error::Dataset("at least one view is required".into()))?;
        let n = first.ncols();
        if n == 0 {
            return Err(Error::Dataset("views must contain at least one sample".into()));
        }
        for (v, x) in views.iter().enumerate() {
            if x.ncols() != n {
                return Err(Error::Dataset(format!(
                    "view {} has {} samples but view 1 has {n}",
                    v + 1,
                    x.ncols()
                )));
            }
            if x.nrows() == 0 {
                return Err(Error::Dataset(format!("view {} has no features", v + 1)));
            }
            if !x.iter().all(|a| a.is_finite()) {
                return Err(Error::Dataset(format!("view {} contains non-finite values", v + 1)));
            }
        }
        if clusters == 0 {
            return Err(Error::Dataset("cluster count must be positive".into()));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::Dataset(format!("{} labels for {n} samples", l.len())));
            }
            if let Some(bad) = l.iter().find(|&&c| c >= clusters) {
                return Err(Error::Dataset(format!("label {} outside 1..={clusters}", bad + 1)));
            }
        }
        Ok(Self {
            views,
            labels,
            clusters,
        })
    }

    pub fn views(&self) -> &[Matrix] {
        &self.views
    }

    pub fn view(&self, v: usize) -> &Matrix {
        &self.views[v]
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn n_samples(&self) -> usize {
        self.views[0].ncols()
    }

    pub fn view_dims(&self) -> Vec<usize> {
        self.views.iter().map(|x| x.nrows()).collect()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn clusters(&self) -> usize {
        self.clusters
    }

    /// Dataset restricted to a single view, keeping labels and cluster count.
    pub fn single_view(&self, v: usize) -> Result<Self> {
        let x = self
            .views
            .get(v)
            .ok_or_else(|| Error::InvalidArgument(format!("view {} out of range 1..={}", v + 1, self.n_views())))?;
        Self::new(vec![x.clone()], self.labels.clone(), self.clusters)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub lambda: f64,
    pub mu0: f64,
    pub rho0: f64,
    pub eta: f64,
    pub mu_max: f64,
    pub rho_max: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    /// Rotate the coefficient tensor to `N x V x N` (false gives the
    /// unrotated `N x N x V` variant).
    pub rotated: bool,
}

impl SolverConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            mu0: 1e-5,
            rho0: 1e-4,
            eta: 2.0,
            mu_max: 1e10,
            rho_max: 1e10,
            epsilon: 1e-7,
            max_iters: 200,
            rotated: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")))
            }
        };
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        positive("mu0", self.mu0)?;
        positive("rho0", self.rho0)?;
        positive("mu_max", self.mu_max)?;
        positive("rho_max", self.rho_max)?;
        positive("epsilon", self.epsilon)?;
        if !(self.eta > 1.0) || !self.eta.is_finite() {
            return Err(Error::InvalidArgument(format!("eta must be > 1, got {}", self.eta)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// All ADMM unknowns and multipliers.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    pub z: Vec<Matrix>,
    /// Stacked error `[E_1; ...; E_V]`, `(sum d_v) x N`.
    pub e: Matrix,
    pub y: Vec<Matrix>,
    pub g: Tensor3,
    pub w: Tensor3,
    pub mu: f64,
    pub rho: f64,
    pub iter: usize,
}

/// Per-iteration errors and penalties.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    /// Mean over views of `||X_v - X_v Z_v - E_v||_inf`.
    pub reconstruction: Vec<f64>,
    /// Mean over views of `||Z_v - G_v||_inf`.
    pub matching: Vec<f64>,
    /// Penalties in effect during each iteration.
    pub mu: Vec<f64>,
    pub rho: Vec<f64>,
    pub converged: bool,
}

impl ConvergenceTrace {
    pub fn iterations(&self) -> usize {
        self.reconstruction.len()
    }
}

#[derive(Clone, Debug)]
pub struct SolverOutput {
    pub state: SolverState,
    pub trace: ConvergenceTrace,
}

impl SolverOutput {
    pub fn z(&self) -> &[Matrix] {
        &self.state.z
    }
}

/// `(I + c X^T X)^{-1}` for any `c >= 0`, from the thin SVD of `X` computed
/// once: with `X^T X = Q diag(s^2) Q^T` the inverse is
/// `I - Q diag(c s^2 / (1 + c s^2)) Q^T`.
#[derive(Clone, Debug)]
struct ViewSystem {
    basis: Matrix,
    sq_singular: Vec<f64>,
    row_offset: usize,
}

impl ViewSystem {
    fn new(x: &Matrix, row_offset: usize) -> Result<Self> {
        let (_, sigma, vt) = real_svd(x).ok_or(Error::SvdFailed { slice: 0 })?;
        Ok(Self {
            basis: vt.transpose(),
            sq_singular: sigma.iter().map(|s| s * s).collect(),
            row_offset,
        })
    }

    fn solve_in_place(&self, c: f64, b: &mut Matrix) {
        let mut coeff = self.basis.tr_mul(b);
        for (i, mut row) in coeff.row_iter_mut().enumerate() {
            let s2 = self.sq_singular[i];
            row *= c * s2 / (1.0 + c * s2);
        }
        b.gemm(-1.0, &self.basis, &coeff, 1.0);
    }
}

fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Sum of column Euclidean norms.
pub fn l21_norm(m: &Matrix) -> f64 {
    m.column_iter().map(|c| c.norm()).sum()
}

/// Column-wise shrinkage: the minimizer of `t ||E||_{2,1} + 0.5 ||E - D||_F^2`.
pub fn column_shrink(d: &Matrix, threshold: f64) -> Matrix {
    let mut e = d.clone();
    for mut col in e.column_iter_mut() {
        let norm = col.norm();
        if norm > threshold {
            col *= (norm - threshold) / norm;
        } else {
            col.fill(0.0);
        }
    }
    e
}

/// Merges per-view `N x N` coefficient matrices into the solver tensor:
/// `N x V x N` with `out(j, v, i) = Z_v(i, j)` when rotated, else the plain
/// `N x N x V` stack.
pub fn merge_views(z: &[Matrix], rotated: bool) -> Tensor3 {
    let n = z[0].nrows();
    let views = z.len();
    if rotated {
        let mut out = Tensor3::zeros(n, views, n);
        for (v, zv) in z.iter().enumerate() {
            for j in 0..n {
                for i in 0..n {
                    out.set(j, v, i, zv[(i, j)]);
                }
            }
        }
        out
    } else {
        Tensor3::from_slices(z).expect("views share N")
    }
}

/// Extracts view `v` from a tensor produced by [`merge_views`].
pub fn view_of(t: &Tensor3, v: usize, rotated: bool) -> Matrix {
    if rotated {
        let n = t.dims().0;
        Matrix::from_fn(n, n, |i, j| t.get(j, v, i))
    } else {
        t.slice(v)
    }
}

pub struct Solver<'a> {
    data: &'a MultiViewDataset,
    config: SolverConfig,
    systems: Vec<ViewSystem>,
}

impl<'a> Solver<'a> {
    pub fn new(data: &'a MultiViewDataset, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let mut offset = 0;
        let mut systems = Vec::with_capacity(data.n_views());
        for x in data.views() {
            systems.push(ViewSystem::new(x, offset)?);
            offset += x.nrows();
        }
        Ok(Self { data, config, systems })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn data(&self) -> &MultiViewDataset {
        self.data
    }

    fn tensor_dims(&self) -> (usize, usize, usize) {
        let n = self.data.n_samples();
        let v = self.data.n_views();
        if self.config.rotated {
            (n, v, n)
        } else {
            (n, n, v)
        }
    }

    /// All-zero starting point.
    pub fn initial_state(&self) -> SolverState {
        let n = self.data.n_samples();
        let (a, b, c) = self.tensor_dims();
        let rows: usize = self.data.view_dims().iter().sum();
        SolverState {
            z: vec![Matrix::zeros(n, n); self.data.n_views()],
            e: Matrix::zeros(rows, n),
            y: self.data.views().iter().map(|x| Matrix::zeros(x.nrows(), n)).collect(),
            g: Tensor3::zeros(a, b, c),
            w: Tensor3::zeros(a, b, c),
            mu: self.config.mu0,
            rho: self.config.rho0,
            iter: 0,
        }
    }

    /// Starting point with given coefficient matrices (e.g. per-view LRR
    /// solutions) and `G = Phi(Z)`.
    pub fn warm_state(&self, z: Vec<Matrix>) -> Result<SolverState> {
        let n = self.data.n_samples();
        if z.len() != self.data.n_views() || z.iter().any(|m| m.shape() != (n, n)) {
            return Err(Error::ShapeMismatch {
                op: "warm_state",
                expected: format!("{} matrices of {n}x{n}", self.data.n_views()),
                found: format!("{} matrices", z.len()),
            });
        }
        let mut state = self.initial_state();
        state.g = merge_views(&z, self.config.rotated);
        state.z = z;
        Ok(state)
    }

    fn error_block<'s>(&self, state: &'s SolverState, v: usize) -> nalgebra::DMatrixView<'s, f64> {
        let sys = &self.systems[v];
        state.e.rows(sys.row_offset, self.data.view(v).nrows())
    }

    /// `X_v - X_v Z_v - E_v` for the current state.
    pub fn residual(&self, state: &SolverState, v: usize) -> Matrix {
        let x = self.data.view(v);
        let mut r = x - self.error_block(state, v);
        r.gemm(-1.0, x, &state.z[v], 1.0);
        r
    }

    /// Closed-form minimizer of the augmented Lagrangian over `Z_v`:
    /// `(I + mu/rho X^T X)^{-1} [ (X^T Y + mu X^T X - mu X^T E - W_v)/rho + G_v ]`.
    pub fn update_z(&self, v: usize, state: &SolverState) -> Matrix {
        let x = self.data.view(v);
        let (mu, rho) = (state.mu, state.rho);
        let mut m = &state.y[v] + (x - self.error_block(state, v)) * mu;
        m /= rho;
        let mut b = x.tr_mul(&m);
        b -= view_of(&state.w, v, self.config.rotated) / rho;
        b += view_of(&state.g, v, self.config.rotated);
        self.systems[v].solve_in_place(mu / rho, &mut b);
        b
    }

    /// Column shrinkage of `D = [X_v - X_v Z_v + Y_v / mu]_v` at `lambda / mu`.
    pub fn update_e(&self, state: &SolverState) -> Result<Matrix> {
        let mu = state.mu;
        if !(mu > 0.0) {
            return Err(Error::InvalidArgument(format!("E update needs mu > 0, got {mu}")));
        }
        let n = self.data.n_samples();
        let mut d = Matrix::zeros(state.e.nrows(), n);
        for (v, x) in self.data.views().iter().enumerate() {
            let mut block = x + &state.y[v] / mu;
            block.gemm(-1.0, x, &state.z[v], 1.0);
            d.rows_mut(self.systems[v].row_offset, x.nrows()).copy_from(&block);
        }
        Ok(column_shrink(&d, self.config.lambda / mu))
    }

    /// Tubal shrinkage of `Phi(Z) + W / rho` at `1 / rho`.
    pub fn update_g(&self, state: &SolverState) -> Result<Tensor3> {
        let z = merge_views(&state.z, self.config.rotated);
        let f = z.add_scaled(1.0 / state.rho, &state.w);
        tubal_shrink(&f, 1.0 / state.rho)
    }

    /// Dual ascent on `Y_v`, `W`, then `mu`, `rho` grow by `eta` up to their caps.
    pub fn update_multipliers(&self, state: &mut SolverState) {
        for v in 0..self.data.n_views() {
            let r = self.residual(state, v);
            state.y[v] += r * state.mu;
        }
        let z = merge_views(&state.z, self.config.rotated);
        state.w = state.w.add_scaled(state.rho, &(&z - &state.g));
        state.mu = (self.config.eta * state.mu).min(self.config.mu_max);
        state.rho = (self.config.eta * state.rho).min(self.config.rho_max);
    }

    /// One full iteration: Z, E, G, multipliers and penalties.
    pub fn step(&self, state: &mut SolverState) -> Result<()> {
        let z: Vec<Matrix> = (0..self.data.n_views())
            .into_par_iter()
            .map(|v| self.update_z(v, state))
            .collect();
        state.z = z;
        state.e = self.update_e(state)?;
        state.g = self.update_g(state)?;
        self.update_multipliers(state);
        state.iter += 1;
        if state.z.iter().any(|m| !m.iter().all(|a| a.is_finite())) {
            return Err(Error::Diverged {
                iteration: state.iter,
                what: "Z",
            });
        }
        if !state.e.iter().all(|a| a.is_finite()) {
            return Err(Error::Diverged {
                iteration: state.iter,
                what: "E",
            });
        }
        if !state.g.is_finite() {
            return Err(Error::Diverged {
                iteration: state.iter,
                what: "G",
            });
        }
        Ok(())
    }

    /// Per-view `(||X_v - X_v Z_v - E_v||_inf, ||Z_v - G_v||_inf)`.
    pub fn view_errors(&self, state: &SolverState) -> Vec<(f64, f64)> {
        (0..self.data.n_views())
            .map(|v| {
                let recon = max_abs(&self.residual(state, v));
                let gv = view_of(&state.g, v, self.config.rotated);
                (recon, max_abs(&(&state.z[v] - gv)))
            })
            .collect()
    }

    /// Mean reconstruction and match errors over views.
    pub fn trace_errors(&self, state: &SolverState) -> (f64, f64) {
        let errs = self.view_errors(state);
        let v = errs.len() as f64;
        (
            errs.iter().map(|e| e.0).sum::<f64>() / v,
            errs.iter().map(|e| e.1).sum::<f64>() / v,
        )
    }

    /// Augmented Lagrangian at `state`; the tensor inner product is the sum of
    /// entrywise products.
    pub fn lagrangian(&self, state: &SolverState) -> Result<f64> {
        let mut value = self.config.lambda * l21_norm(&state.e) + ttnn(&state.g)?;
        for v in 0..self.data.n_views() {
            let r = self.residual(state, v);
            value += state.y[v].dot(&r) + 0.5 * state.mu * r.norm_squared();
        }
        let gap = &merge_views(&state.z, self.config.rotated) - &state.g;
        value += state.w.inner(&gap) + 0.5 * state.rho * gap.inner(&gap);
        Ok(value)
    }

    /// Iterates from `state` until both residuals fall below `epsilon` in every
    /// view or `max_iters` is reached.
    pub fn run_from(&self, mut state: SolverState) -> Result<SolverOutput> {
        let mut trace = ConvergenceTrace::default();
        let eps = self.config.epsilon;
        for _ in 0..self.config.max_iters {
            let (mu, rho) = (state.mu, state.rho);
            self.step(&mut state)?;
            let errs = self.view_errors(&state);
            let v = errs.len() as f64;
            trace.reconstruction.push(errs.iter().map(|e| e.0).sum::<f64>() / v);
            trace.matching.push(errs.iter().map(|e| e.1).sum::<f64>() / v);
            trace.mu.push(mu);
            trace.rho.push(rho);
            if errs.iter().all(|&(r, m)| r < eps && m < eps) {
                trace.converged = true;
                break;
            }
        }
        Ok(SolverOutput { state, trace })
    }

    pub fn run(&self) -> Result<SolverOutput> {
        self.run_from(self.initial_state())
    }
}

/// Runs the solver from the all-zero initialization.
pub fn run(data: &MultiViewDataset, config: &SolverConfig) -> Result<SolverOutput> {
    Solver::new(data, config.clone())?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::testutil::rng;
    use rand::Rng;

    fn random_matrix(r: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0))
    }

    fn random_dataset(r: &mut impl Rng, dims: &[usize], n: usize) -> MultiViewDataset {
        MultiViewDataset::new(dims.iter().map(|&d| random_matrix(r, d, n)).collect(), None, 2).unwrap()
    }

    fn random_state(solver: &Solver, r: &mut impl Rng, mu: f64, rho: f64) -> SolverState {
        let mut s = solver.initial_state();
        for z in &mut s.z {
            *z = random_matrix(r, z.nrows(), z.ncols());
        }
        for y in &mut s.y {
            *y = random_matrix(r, y.nrows(), y.ncols());
        }
        s.e = random_matrix(r, s.e.nrows(), s.e.ncols());
        let (a, b, c) = s.g.dims();
        s.g = Tensor3::from_fn(a, b, c, |_, _, _| r.random_range(-1.0..1.0));
        s.w = Tensor3::from_fn(a, b, c, |_, _, _| r.random_range(-1.0..1.0));
        s.mu = mu;
        s.rho = rho;
        s
    }

    #[test]
    fn dataset_validation() {
        let x = Matrix::zeros(3, 4);
        assert!(MultiViewDataset::new(vec![], None, 2).is_err());
        assert!(MultiViewDataset::new(vec![x.clone(), Matrix::zeros(2, 5)], None, 2).is_err());
        assert!(MultiViewDataset::new(vec![x.clone()], Some(vec![0, 1, 2, 0]), 2).is_err());
        assert!(MultiViewDataset::new(vec![x.clone()], Some(vec![0, 1]), 2).is_err());
        let d = MultiViewDataset::new(vec![x, Matrix::zeros(2, 4)], Some(vec![0, 1, 1, 0]), 2).unwrap();
        assert_eq!(d.view_dims(), vec![3, 2]);
        assert_eq!(d.n_samples(), 4);
    }

    #[test]
    fn config_defaults() {
        let c = SolverConfig::new(0.5);
        assert_eq!((c.mu0, c.rho0, c.eta, c.mu_max, c.rho_max, c.epsilon), (1e-5, 1e-4, 2.0, 1e10, 1e10, 1e-7));
        assert_eq!(c.max_iters, 200);
        assert!(c.validate().is_ok());
        assert!(SolverConfig { eta: 1.0, ..c.clone() }.validate().is_err());
        assert!(SolverConfig { lambda: -1.0, ..c }.validate().is_err());
    }

    #[test]
    fn merge_and_extract_views() {
        let mut r = rng(40);
        let z: Vec<Matrix> = (0..3).map(|_| random_matrix(&mut r, 4, 4)).collect();
        for rotated in [true, false] {
            let t = merge_views(&z, rotated);
            assert_eq!(t.dims(), if rotated { (4, 3, 4) } else { (4, 4, 3) });
            for (v, zv) in z.iter().enumerate() {
                assert_eq!(&view_of(&t, v, rotated), zv);
            }
        }
        let t = merge_views(&z, true);
        assert_eq!(t, crate::tensor::rotate(&Tensor3::from_slices(&z).unwrap()));
    }

    #[test]
    fn update_z_identity_data() {
        let n = 4;
        let data = MultiViewDataset::new(vec![Matrix::identity(n, n)], None, 1).unwrap();
        let cfg = SolverConfig {
            rotated: false,
            ..SolverConfig::new(1.0)
        };
        let solver = Solver::new(&data, cfg).unwrap();
        let mut s = solver.initial_state();
        s.mu = 0.3;
        s.rho = 0.7;
        let z = solver.update_z(0, &s);
        let want = Matrix::identity(n, n) * (0.3 / (0.3 + 0.7));
        assert!((z - want).abs().max() < 1e-14);
    }

    #[test]
    fn update_z_without_data_term() {
        let mut r = rng(41);
        let data = random_dataset(&mut r, &[3, 5], 6);
        let solver = Solver::new(&data, SolverConfig::new(1.0)).unwrap();
        let mut s = random_state(&solver, &mut r, 1.0, 2.0);
        s.mu = 0.0;
        for y in &mut s.y {
            y.fill(0.0);
        }
        for v in 0..2 {
            let z = solver.update_z(v, &s);
            let want = view_of(&s.g, v, true) - view_of(&s.w, v, true) / 2.0;
            assert!((z - want).abs().max() < 1e-12);
        }
    }

    /// Z-subproblem objective of view `v` as a function of `z`.
    fn z_objective(solver: &Solver, s: &SolverState, v: usize, z: &Matrix) -> f64 {
        let x = solver.data.view(v);
        let r = x - x * z - solver.error_block(s, v);
        let gap = z - view_of(&s.g, v, solver.config.rotated);
        s.y[v].dot(&r)
            + 0.5 * s.mu * r.norm_squared()
            + view_of(&s.w, v, solver.config.rotated).dot(&gap)
            + 0.5 * s.rho * gap.norm_squared()
    }

    #[test]
    fn update_z_is_stationary() {
        let mut r = rng(42);
        let data = random_dataset(&mut r, &[4, 7], 5);
        let solver = Solver::new(&data, SolverConfig::new(1.0)).unwrap();
        let s = random_state(&solver, &mut r, 0.8, 1.3);
        for v in 0..2 {
            let z = solver.update_z(v, &s);
            let h = 1e-6;
            let mut worst: f64 = 0.0;
            for j in 0..5 {
                for i in 0..5 {
                    let mut zp = z.clone();
                    zp[(i, j)] += h;
                    let mut zm = z.clone();
                    zm[(i, j)] -= h;
                    let g = (z_objective(&solver, &s, v, &zp) - z_objective(&solver, &s, v, &zm)) / (2.0 * h);
                    worst = worst.max(g.abs());
                }
            }
            assert!(worst <= 1e-5, "gradient {worst}");
        }
    }

    #[test]
    fn update_e_cases() {
        let x = Matrix::from_column_slice(2, 2, &[2.0, 0.0, 0.1, 0.1]);
        let data = MultiViewDataset::new(vec![x.clone()], None, 1).unwrap();
        let solver = Solver::new(&data, SolverConfig { rotated: false, ..SolverConfig::new(1.0) }).unwrap();
        let mut s = solver.initial_state();
        s.mu = 2.0; // lambda / mu = 0.5
        let e = solver.update_e(&s).unwrap();
        // column norm 2 scaled by 0.75, small column zeroed
        assert!((e.column(0) - x.column(0) * 0.75).norm() < 1e-15);
        assert_eq!(e.column(1).norm(), 0.0);

        let solver0 = Solver::new(&data, SolverConfig { rotated: false, ..SolverConfig::new(0.0) }).unwrap();
        let e = solver0.update_e(&s).unwrap();
        assert_eq!(e, x);

        s.mu = 0.0;
        assert!(solver.update_e(&s).is_err());
    }

    #[test]
    fn update_g_extremes() {
        let mut r = rng(43);
        let data = random_dataset(&mut r, &[3, 4], 5);
        let solver = Solver::new(&data, SolverConfig::new(1.0)).unwrap();
        let mut s = random_state(&solver, &mut r, 1.0, 1e12);
        let g = solver.update_g(&s).unwrap();
        let want = merge_views(&s.z, true).add_scaled(1.0 / s.rho, &s.w);
        assert!((&g - &want).max_abs() < 1e-6);

        s.rho = 1e-6;
        s.w = Tensor3::zeros(5, 2, 5);
        assert_eq!(solver.update_g(&s).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn multipliers_unchanged_at_feasible_point() {
        let data = MultiViewDataset::new(vec![Matrix::identity(3, 3)], None, 1).unwrap();
        let cfg = SolverConfig {
            mu_max: 1.0,
            ..SolverConfig::new(1.0)
        };
        let solver = Solver::new(&data, cfg).unwrap();
        let mut s = solver.initial_state();
        s.z[0] = Matrix::identity(3, 3);
        s.g = merge_views(&s.z, true);
        s.y[0] = Matrix::from_element(3, 3, 0.25);
        s.w = Tensor3::from_fn(3, 1, 3, |i, _, k| (i + k) as f64);
        s.mu = 1.0;
        let (y0, w0) = (s.y.clone(), s.w.clone());
        solver.update_multipliers(&mut s);
        assert_eq!(s.y, y0);
        assert_eq!(s.w, w0);
        assert_eq!(s.mu, 1.0);
        assert_eq!(s.rho, 2e-4);
    }

    #[test]
    fn block_updates_do_not_increase_lagrangian() {
        let mut r = rng(44);
        for rotated in [true, false] {
            let data = random_dataset(&mut r, &[4, 6, 3], 6);
            let cfg = SolverConfig {
                rotated,
                ..SolverConfig::new(0.7)
            };
            let solver = Solver::new(&data, cfg).unwrap();
            let mut s = random_state(&solver, &mut r, 0.9, 1.1);
            let mut prev = solver.lagrangian(&s).unwrap();
            for v in 0..3 {
                s.z[v] = solver.update_z(v, &s);
                let now = solver.lagrangian(&s).unwrap();
                assert!(now <= prev + 1e-9, "Z_{v}: {now} > {prev}");
                prev = now;
            }
            s.e = solver.update_e(&s).unwrap();
            let now = solver.lagrangian(&s).unwrap();
            assert!(now <= prev + 1e-9, "E: {now} > {prev}");
            prev = now;
            s.g = solver.update_g(&s).unwrap();
            let now = solver.lagrangian(&s).unwrap();
            assert!(now <= prev + 1e-9, "G: {now} > {prev}");
        }
    }

    #[test]
    fn trace_errors_cases() {
        let data = MultiViewDataset::new(vec![Matrix::zeros(2, 3)], None, 1).unwrap();
        let solver = Solver::new(&data, SolverConfig::new(1.0)).unwrap();
        let s = solver.initial_state();
        assert_eq!(solver.trace_errors(&s), (0.0, 0.0));

        let mut r = rng(45);
        let data = random_dataset(&mut r, &[3, 2], 4);
        let solver = Solver::new(&data, SolverConfig::new(1.0)).unwrap();
        let s = random_state(&solver, &mut r, 1.0, 1.0);
        let (recon, matching) = solver.trace_errors(&s);
        let mut want_r = 0.0;
        let mut want_m = 0.0;
        let mut row = 0;
        for v in 0..2 {
            let x = data.view(v);
            let ev = s.e.rows(row, x.nrows()).into_owned();
            row += x.nrows();
            want_r += (x - x * &s.z[v] - ev).abs().max() / 2.0;
            let gv = Matrix::from_fn(4, 4, |i, j| s.g.get(j, v, i));
            want_m += (&s.z[v] - gv).abs().max() / 2.0;
        }
        assert!((recon - want_r).abs() < 1e-14 && (matching - want_m).abs() < 1e-14);
    }

    #[test]
    fn feasible_state_has_zero_reconstruction_error() {
        let mut r = rng(46);
        let data = random_dataset(&mut r, &[3], 4);
        let solver = Solver::new(&data, SolverConfig::new(1.0)).unwrap();
        let mut s = random_state(&solver, &mut r, 1.0, 1.0);
        let x = data.view(0);
        s.e = x - x * &s.z[0];
        let (recon, matching) = solver.trace_errors(&s);
        assert!(recon < 1e-14);
        assert!(matching > 0.0);
    }

    #[test]
    fn penalties_are_monotone_and_clamped() {
        let mut r = rng(47);
        let data = random_dataset(&mut r, &[5, 4], 8);
        let cfg = SolverConfig {
            max_iters: 60,
            ..SolverConfig::new(0.5)
        };
        let out = run(&data, &cfg).unwrap();
        let t = &out.trace;
        assert!(t.mu.windows(2).all(|w| w[1] >= w[0]));
        assert!(t.rho.windows(2).all(|w| w[1] >= w[0]));
        assert!(t.mu.iter().all(|&m| m <= 1e10) && t.rho.iter().all(|&m| m <= 1e10));
        assert_eq!(t.iterations(), t.mu.len());
    }

    #[test]
    fn runs_are_bitwise_deterministic() {
        let mut r = rng(48);
        let data = random_dataset(&mut r, &[5, 6, 4], 10);
        let cfg = SolverConfig::new(0.3);
        let a = run(&data, &cfg).unwrap();
        let b = run(&data, &cfg).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.state.z, b.state.z);
    }

    #[test]
    fn rotated_and_unrotated_shapes_differ_for_single_view() {
        let mut r = rng(49);
        let data = random_dataset(&mut r, &[4], 5);
        let rot = Solver::new(&data, SolverConfig::new(1.0)).unwrap().initial_state();
        let unrot = Solver::new(&data, SolverConfig { rotated: false, ..SolverConfig::new(1.0) })
            .unwrap()
            .initial_state();
        assert_eq!(rot.g.dims(), (5, 1, 5));
        assert_eq!(unrot.g.dims(), (5, 5, 1));
    }

    #[test]
    fn one_step_matches_hand_rolled_updates() {
        let mut r = rng(50);
        let data = random_dataset(&mut r, &[4, 3], 5);
        let cfg = SolverConfig::new(0.6);
        let solver = Solver::new(&data, cfg.clone()).unwrap();
        let mut s = solver.initial_state();
        solver.step(&mut s).unwrap();

        // sequential application with dense inverses
        let (mu, rho) = (cfg.mu0, cfg.rho0);
        let n = 5;
        let mut z = Vec::new();
        for v in 0..2 {
            let x = data.view(v);
            let sys = Matrix::identity(n, n) + x.transpose() * x * (mu / rho);
            let rhs = (x.transpose() * x * mu) / rho;
            z.push(sys.try_inverse().unwrap() * rhs);
        }
        let d = {
            let blocks: Vec<Matrix> = (0..2).map(|v| data.view(v) - data.view(v) * &z[v]).collect();
            let mut d = Matrix::zeros(7, n);
            d.rows_mut(0, 4).copy_from(&blocks[0]);
            d.rows_mut(4, 3).copy_from(&blocks[1]);
            d
        };
        let e = column_shrink(&d, cfg.lambda / mu);
        let zt = merge_views(&z, true);
        let g = tubal_shrink(&zt, 1.0 / rho).unwrap();
        let w = (&zt - &g).scale(rho);
        for v in 0..2 {
            assert!((&s.z[v] - &z[v]).abs().max() < 1e-10);
        }
        assert!((&s.e - &e).abs().max() < 1e-10);
        assert!((&s.g - &g).max_abs() < 1e-10);
        assert!((&s.w - &w).max_abs() < 1e-10);
        let y0 = (data.view(0) - data.view(0) * &z[0] - e.rows(0, 4)) * mu;
        assert!((&s.y[0] - y0).abs().max() < 1e-12);
        assert_eq!((s.mu, s.rho), (2.0 * mu, 2.0 * rho));
    }

    #[test]
    fn non_finite_data_is_rejected() {
        let mut x = Matrix::zeros(2, 3);
        x[(0, 0)] = f64::NAN;
        assert!(MultiViewDataset::new(vec![x], None, 1).is_err());
    }
}
