//! t-SVD, tensor multi-rank, the t-SVD tensor nuclear norm and its proximal
//! operator (tubal shrinkage).
//!
//! Everything here works slice-by-slice in the Fourier domain along mode 3.
//! For a real tensor only slices `0..=n3/2` are decomposed; the remaining
//! slices are conjugates of those. Slices that are their own conjugate
//! (slice 0, and slice `n3/2` for even `n3`) are real up to rounding and are
//! decomposed with a real SVD so that the inverse transform stays real.

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{fft3, ifft3, independent_slices, ComplexMatrix, ComplexTensor3, Matrix, Tensor3};

/// Default relative tolerance for [`multirank`].
pub const MULTIRANK_TOL: f64 = 1e-8;

/// `X = U * S * V^T` with orthogonal `U`, `V` and f-diagonal `S`.
#[derive(Clone, Debug)]
pub struct TsvdFactors {
    pub u: Tensor3,
    pub s: Tensor3,
    pub v: Tensor3,
}

/// Rank of every Fourier-domain frontal slice.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiRank(pub Vec<usize>);

impl MultiRank {
    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Sum of slice ranks (the l1 norm of the multi-rank vector).
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }
}

fn is_self_conjugate(k: usize, n3: usize) -> bool {
    k == 0 || 2 * k == n3
}

fn to_complex(m: &Matrix) -> ComplexMatrix {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Thin SVD `(U, sigma, V^T)` of a real matrix, singular values in
/// nonincreasing order.
pub(crate) fn real_svd(m: &Matrix) -> Option<(Matrix, DVector<f64>, Matrix)> {
    let (r, c) = m.shape();
    let svd = faer::Mat::<f64>::from_fn(r, c, |i, j| m[(i, j)]).thin_svd().ok()?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let k = s.nrows();
    Some((
        Matrix::from_fn(r, k, |i, j| u[(i, j)]),
        DVector::from_fn(k, |i, _| s[i]),
        Matrix::from_fn(k, c, |i, j| v[(j, i)]),
    ))
}

/// Thin SVD `(U, sigma, V^H)` of a complex matrix, singular values in
/// nonincreasing order.
pub(crate) fn complex_svd(m: &ComplexMatrix) -> Option<(ComplexMatrix, DVector<f64>, ComplexMatrix)> {
    let (r, c) = m.shape();
    let svd = faer::Mat::<Complex64>::from_fn(r, c, |i, j| m[(i, j)]).thin_svd().ok()?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let k = s.nrows();
    Some((
        ComplexMatrix::from_fn(r, k, |i, j| u[(i, j)]),
        DVector::from_fn(k, |i, _| s[i].re),
        ComplexMatrix::from_fn(k, c, |i, j| v[(j, i)].conj()),
    ))
}

/// Thin SVD of one Fourier slice, `(U, sigma, V^H)`, singular values in
/// nonincreasing order.
fn slice_svd(m: &ComplexMatrix, k: usize, n3: usize) -> Result<(ComplexMatrix, DVector<f64>, ComplexMatrix)> {
    if is_self_conjugate(k, n3) {
        let (u, s, vt) = real_svd(&m.map(|c| c.re)).ok_or(Error::SvdFailed { slice: k })?;
        Ok((to_complex(&u), s, to_complex(&vt)))
    } else {
        complex_svd(m).ok_or(Error::SvdFailed { slice: k })
    }
}

fn slice_singular_values(m: &ComplexMatrix, k: usize, n3: usize) -> Result<DVector<f64>> {
    let (r, c) = m.shape();
    let values = if is_self_conjugate(k, n3) {
        faer::Mat::<f64>::from_fn(r, c, |i, j| m[(i, j)].re).singular_values()
    } else {
        faer::Mat::<Complex64>::from_fn(r, c, |i, j| m[(i, j)]).singular_values()
    };
    values.map(DVector::from_vec).map_err(|_| Error::SvdFailed { slice: k })
}

/// Extends `n x r` orthonormal columns to an `n x n` unitary matrix.
fn complete_basis(q: &ComplexMatrix) -> ComplexMatrix {
    let (n, r) = q.shape();
    if r >= n {
        return q.clone();
    }
    let mut aug = ComplexMatrix::zeros(n, r + n);
    aug.view_mut((0, 0), (n, r)).copy_from(q);
    aug.view_mut((0, r), (n, n)).fill_with_identity();
    let mut full = aug.qr().q();
    full.view_mut((0, 0), (n, r)).copy_from(q);
    full
}

fn ensure_finite(x: &Tensor3, what: &'static str) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Applies `f` to every independent Fourier slice of `x` (in parallel) and
/// returns the results in slice order.
fn map_half_spectrum<T, F>(xf: &ComplexTensor3, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, ComplexMatrix) -> Result<T> + Sync,
{
    let n3 = xf.dims().2;
    (0..independent_slices(n3))
        .into_par_iter()
        .map(|k| f(k, xf.slice(k)))
        .collect()
}

/// t-SVD via per-slice SVDs in the Fourier domain.
pub fn tsvd(x: &Tensor3) -> Result<TsvdFactors> {
    ensure_finite(x, "tsvd input")?;
    let (n1, n2, n3) = x.dims();
    let xf = fft3(x);
    let parts = map_half_spectrum(&xf, |k, m| {
        let (u, sigma, vt) = slice_svd(&m, k, n3)?;
        let u_full = complete_basis(&u);
        let v_full = complete_basis(&vt.adjoint());
        let mut s = ComplexMatrix::zeros(n1, n2);
        for (i, &sv) in sigma.iter().enumerate() {
            s[(i, i)] = Complex64::new(sv, 0.0);
        }
        Ok((u_full, s, v_full))
    })?;
    let mut uh = Vec::with_capacity(parts.len());
    let mut sh = Vec::with_capacity(parts.len());
    let mut vh = Vec::with_capacity(parts.len());
    for (u, s, v) in parts {
        uh.push(u);
        sh.push(s);
        vh.push(v);
    }
    let u = ifft3(&ComplexTensor3::from_half_spectrum(n1, n1, n3, uh))?;
    let s = ifft3(&ComplexTensor3::from_half_spectrum(n1, n2, n3, sh))?;
    let v = ifft3(&ComplexTensor3::from_half_spectrum(n2, n2, n3, vh))?;
    Ok(TsvdFactors { u, s, v })
}

/// Singular values of every Fourier slice (all `n3` of them, nonincreasing).
pub fn fourier_singular_values(x: &Tensor3) -> Result<Vec<DVector<f64>>> {
    ensure_finite(x, "fourier_singular_values input")?;
    let n3 = x.dims().2;
    let xf = fft3(x);
    let half = map_half_spectrum(&xf, |k, m| slice_singular_values(&m, k, n3))?;
    Ok((0..n3).map(|k| half[k.min(n3 - k)].clone()).collect())
}

/// t-SVD tensor nuclear norm: sum of all Fourier-domain singular values.
pub fn ttnn(x: &Tensor3) -> Result<f64> {
    Ok(fourier_singular_values(x)?.iter().map(|s| s.sum()).sum())
}

/// Counts, per Fourier slice, singular values above `tol` times the largest
/// singular value over all slices.
pub fn multirank(x: &Tensor3, tol: f64) -> Result<MultiRank> {
    if !(tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("multirank tolerance must be >= 0, got {tol}")));
    }
    let sv = fourier_singular_values(x)?;
    let largest = sv.iter().flat_map(|s| s.iter().copied()).fold(0.0, f64::max);
    let cutoff = tol * largest;
    Ok(MultiRank(
        sv.iter()
            .map(|s| if largest == 0.0 { 0 } else { s.iter().filter(|&&v| v > cutoff).count() })
            .collect(),
    ))
}

/// Truncated t-SVD keeping the first `k` singular tubes.
pub fn truncate(x: &Tensor3, k: usize) -> Result<Tensor3> {
    let (n1, n2, n3) = x.dims();
    if k == 0 || k > n1.min(n2) {
        return Err(Error::InvalidArgument(format!(
            "truncation rank must be in 1..={}, got {k}",
            n1.min(n2)
        )));
    }
    ensure_finite(x, "truncate input")?;
    let xf = fft3(x);
    let half = map_half_spectrum(&xf, |j, m| {
        let (u, sigma, vt) = slice_svd(&m, j, n3)?;
        let mut scaled = vt;
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            let w = if i < k { sigma[i] } else { 0.0 };
            row *= Complex64::new(w, 0.0);
        }
        Ok(u * scaled)
    })?;
    ifft3(&ComplexTensor3::from_half_spectrum(n1, n2, n3, half))
}

/// Shrink factor `(1 - t/s)_+`, defined as 0 at `s = 0`.
#[inline]
pub fn shrink_factor(s: f64, threshold: f64) -> f64 {
    if s > 0.0 {
        (1.0 - threshold / s).max(0.0)
    } else {
        0.0
    }
}

fn svt_from_parts(u: ComplexMatrix, sigma: &DVector<f64>, mut vt: ComplexMatrix, threshold: f64) -> ComplexMatrix {
    let keep = sigma.iter().take_while(|&&s| s > threshold).count();
    if keep == 0 {
        return ComplexMatrix::zeros(u.nrows(), vt.ncols());
    }
    for (i, mut row) in vt.rows_mut(0, keep).row_iter_mut().enumerate() {
        row *= Complex64::new(sigma[i] * shrink_factor(sigma[i], threshold), 0.0);
    }
    u.columns(0, keep) * vt.rows(0, keep)
}

/// Matrix singular value thresholding `U (S - t)_+ V^T` of a real matrix.
pub fn svt(m: &Matrix, threshold: f64) -> Result<Matrix> {
    let (u, sigma, mut vt) = real_svd(m).ok_or(Error::SvdFailed { slice: 0 })?;
    let keep = sigma.iter().take_while(|&&s| s > threshold).count();
    if keep == 0 {
        return Ok(Matrix::zeros(m.nrows(), m.ncols()));
    }
    for (i, mut row) in vt.rows_mut(0, keep).row_iter_mut().enumerate() {
        row *= sigma[i] - threshold;
    }
    Ok(u.columns(0, keep) * vt.rows(0, keep))
}

/// Complex counterpart of [`svt`], the per-slice proximal step.
pub fn svt_complex(m: &ComplexMatrix, threshold: f64) -> Result<ComplexMatrix> {
    let (u, sigma, vt) = complex_svd(m).ok_or(Error::SvdFailed { slice: 0 })?;
    Ok(svt_from_parts(u, &sigma, vt, threshold))
}

/// Tubal shrinkage: the minimizer of `tau * ||G||_tnn + 0.5 * ||G - F||_F^2`.
///
/// Each Fourier slice of `F` is soft-thresholded at `n3 * tau`.
pub fn tubal_shrink(f: &Tensor3, tau: f64) -> Result<Tensor3> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!("tubal shrinkage needs tau > 0, got {tau}")));
    }
    ensure_finite(f, "tubal_shrink input")?;
    let (n1, n2, n3) = f.dims();
    let threshold = n3 as f64 * tau;
    let ff = fft3(f);
    let half = map_half_spectrum(&ff, |k, m| {
        let (u, sigma, vt) = slice_svd(&m, k, n3)?;
        Ok(svt_from_parts(u, &sigma, vt, threshold))
    })?;
    ifft3(&ComplexTensor3::from_half_spectrum(n1, n2, n3, half))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::testutil::*;
    use crate::tensor::{bcirc, bdiag_complex, tidentity, tproduct, ttranspose};

    fn reconstruct(f: &TsvdFactors) -> Tensor3 {
        tproduct(&f.u, &tproduct(&f.s, &ttranspose(&f.v)).unwrap()).unwrap()
    }

    fn orthogonality_residual(q: &Tensor3) -> f64 {
        let n = q.dims().0;
        let n3 = q.dims().2;
        let id = tidentity(n, n3);
        let a = (&tproduct(&ttranspose(q), q).unwrap() - &id).frobenius_norm();
        let b = (&tproduct(q, &ttranspose(q)).unwrap() - &id).frobenius_norm();
        a.max(b)
    }

    fn assert_f_diagonal(s: &Tensor3) {
        let (n1, n2, n3) = s.dims();
        for k in 0..n3 {
            for j in 0..n2 {
                for i in 0..n1 {
                    if i != j {
                        assert_eq!(s.get(i, j, k), 0.0);
                    }
                }
            }
        }
    }

    fn dense_nuclear_norm(m: &Matrix) -> f64 {
        m.singular_values().sum()
    }

    #[test]
    fn svt_at_zero_reproduces_rank_deficient_matrices() {
        use rand::Rng;
        let mut r = rng(33);
        for _ in 0..200 {
            let n = r.random_range(4..14);
            let k = r.random_range(1..4);
            let a = Matrix::from_fn(n, k, |_, _| r.random_range(-1.0..1.0));
            let b = Matrix::from_fn(k, n, |_, _| r.random_range(-1.0..1.0));
            let m = &a * &b + Matrix::identity(n, n) * r.random_range(0.0..1e-3);
            assert!((svt(&m, 0.0).unwrap() - &m).norm() <= 1e-10 * m.norm().max(1.0));
        }
    }

    #[test]
    fn tsvd_single_slice_is_matrix_svd() {
        let mut r = rng(20);
        let x = random_tensor(&mut r, 4, 3, 1);
        let f = tsvd(&x).unwrap();
        let want = x.slice(0).singular_values();
        for i in 0..3 {
            assert!((f.s.get(i, i, 0) - want[i]).abs() < 1e-12);
        }
        assert!(rel_diff(&x, &reconstruct(&f)) < 1e-12);
    }

    #[test]
    fn tsvd_of_identity() {
        let f = tsvd(&tidentity(3, 4)).unwrap();
        assert!(rel_diff(&tidentity(3, 4), &f.s) < 1e-12);
        assert!(orthogonality_residual(&f.u) < 1e-12);
        assert!(rel_diff(&tidentity(3, 4), &reconstruct(&f)) < 1e-12);
    }

    #[test]
    fn tsvd_random_factors_are_valid() {
        let mut r = rng(21);
        for &(n1, n2, n3) in &[(4, 3, 5), (3, 4, 4), (2, 5, 2), (5, 5, 3)] {
            let x = random_tensor(&mut r, n1, n2, n3);
            let f = tsvd(&x).unwrap();
            assert_eq!(f.u.dims(), (n1, n1, n3));
            assert_eq!(f.s.dims(), (n1, n2, n3));
            assert_eq!(f.v.dims(), (n2, n2, n3));
            assert!(rel_diff(&x, &reconstruct(&f)) < 1e-8);
            assert!(orthogonality_residual(&f.u) < 1e-8);
            assert!(orthogonality_residual(&f.v) < 1e-8);
            assert_f_diagonal(&f.s);
            // Fourier diagonal of S is real, nonnegative and sorted
            let sf = fft3(&f.s);
            for k in 0..n3 {
                let mut prev = f64::INFINITY;
                for i in 0..n1.min(n2) {
                    let d = sf.get(i, i, k);
                    assert!(d.im.abs() < 1e-10 && d.re >= -1e-12 && d.re <= prev + 1e-12);
                    prev = d.re;
                }
            }
        }
    }

    #[test]
    fn ttnn_simple_cases() {
        assert_eq!(ttnn(&Tensor3::zeros(3, 2, 4)).unwrap(), 0.0);
        let mut r = rng(22);
        let x = random_tensor(&mut r, 4, 3, 1);
        assert!((ttnn(&x).unwrap() - dense_nuclear_norm(&x.slice(0))).abs() < 1e-12);
    }

    #[test]
    fn ttnn_equals_block_circulant_and_block_diagonal_nuclear_norms() {
        let mut r = rng(23);
        let x = random_tensor(&mut r, 3, 3, 3);
        let t = ttnn(&x).unwrap();
        let via_bcirc = dense_nuclear_norm(&bcirc(&x));
        assert!((t - via_bcirc).abs() / t < 1e-8);
        let via_bdiag: f64 = bdiag_complex(&fft3(&x)).singular_values().sum();
        assert!((t - via_bdiag).abs() / t < 1e-8);

        let y = random_tensor(&mut r, 2, 2, 3);
        let t = ttnn(&y).unwrap();
        assert!((t - dense_nuclear_norm(&bcirc(&y))).abs() / t < 1e-8);
    }

    #[test]
    fn ttnn_is_a_norm_on_samples() {
        let mut r = rng(24);
        for _ in 0..10 {
            let x = random_tensor(&mut r, 3, 4, 3);
            let y = random_tensor(&mut r, 3, 4, 3);
            let alpha = -2.5;
            let tx = ttnn(&x).unwrap();
            assert!((ttnn(&x.scale(alpha)).unwrap() - alpha.abs() * tx).abs() < 1e-10 * tx.max(1.0));
            assert!(ttnn(&(&x + &y)).unwrap() <= tx + ttnn(&y).unwrap() + 1e-10);
        }
    }

    #[test]
    fn multirank_cases() {
        assert_eq!(multirank(&tidentity(3, 2), MULTIRANK_TOL).unwrap(), MultiRank(vec![3, 3]));
        assert_eq!(multirank(&Tensor3::zeros(3, 3, 4), MULTIRANK_TOL).unwrap(), MultiRank(vec![0; 4]));
        let mut r = rng(25);
        let a = random_tensor(&mut r, 5, 2, 4);
        let b = random_tensor(&mut r, 2, 4, 4);
        let x = tproduct(&a, &b).unwrap();
        let mr = multirank(&x, MULTIRANK_TOL).unwrap();
        assert!(mr.as_slice().iter().all(|&v| v <= 2), "{mr:?}");
        assert!(multirank(&x, -1.0).is_err());
    }

    #[test]
    fn truncate_properties() {
        let mut r = rng(26);
        let x = random_tensor(&mut r, 4, 4, 3);
        assert!(rel_diff(&x, &truncate(&x, 4).unwrap()) < 1e-12);
        assert!(truncate(&x, 0).is_err());
        assert!(truncate(&x, 5).is_err());

        let sv = fourier_singular_values(&x).unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..=4 {
            let err = (&x - &truncate(&x, k).unwrap()).frobenius_norm();
            let tail: f64 = sv.iter().map(|s| s.iter().skip(k).map(|v| v * v).sum::<f64>()).sum::<f64>() / 3.0;
            assert!((err * err - tail).abs() < 1e-10, "k={k}");
            assert!(err <= prev + 1e-12);
            prev = err;
        }
    }

    #[test]
    fn tubal_shrink_extremes() {
        let mut r = rng(27);
        let f = random_tensor(&mut r, 3, 4, 3);
        let largest = fourier_singular_values(&f).unwrap().iter().map(|s| s[0]).fold(0.0, f64::max);
        let g = tubal_shrink(&f, largest / 3.0).unwrap();
        assert_eq!(g.max_abs(), 0.0);
        let g = tubal_shrink(&f, 1e-12).unwrap();
        assert!((&g - &f).max_abs() <= 1e-8);
        assert!(tubal_shrink(&f, 0.0).is_err());
        assert!(tubal_shrink(&f.map(|_| f64::NAN), 0.1).is_err());
    }

    #[test]
    fn tubal_shrink_matches_block_circulant_svt() {
        let mut r = rng(28);
        let f = random_tensor(&mut r, 3, 3, 2);
        let tau = 0.1;
        let g = tubal_shrink(&f, tau).unwrap();
        let oracle = svt(&bcirc(&f), 2.0 * tau).unwrap();
        for k in 0..2 {
            let block = oracle.view((3 * k, 0), (3, 3)).into_owned();
            assert!((block - g.slice(k)).abs().max() < 1e-8);
        }
    }

    #[test]
    fn tubal_shrink_fixed_point_per_fourier_slice() {
        let mut r = rng(29);
        let f = random_tensor(&mut r, 4, 3, 5);
        let tau = 0.2;
        let gf = fft3(&tubal_shrink(&f, tau).unwrap());
        let ff = fft3(&f);
        for k in 0..5 {
            let want = svt_complex(&ff.slice(k), 5.0 * tau).unwrap();
            assert!((want - gf.slice(k)).norm() < 1e-10);
        }
    }

    #[test]
    fn shrink_factor_at_zero() {
        assert_eq!(shrink_factor(0.0, 1.0), 0.0);
        assert_eq!(shrink_factor(2.0, 0.5), 0.75);
        assert_eq!(shrink_factor(0.4, 0.5), 0.0);
    }

    #[test]
    fn f_diagonal_product_convolves_diagonal_tubes() {
        let mut r = rng(30);
        let mk = |r: &mut rand_chacha::ChaCha8Rng| {
            let base = random_tensor(r, 3, 3, 4);
            Tensor3::from_fn(3, 3, 4, |i, j, k| if i == j { base.get(i, j, k) } else { 0.0 })
        };
        let a = mk(&mut r);
        let b = mk(&mut r);
        let c = tproduct(&a, &b).unwrap();
        for i in 0..3 {
            let want = circular_convolution(&a.tube(i, i), &b.tube(i, i));
            for (k, w) in want.iter().enumerate() {
                assert!((c.get(i, i, k) - w).abs() < 1e-12);
            }
            for j in 0..3 {
                if i != j {
                    assert!(c.tube(i, j).iter().all(|v| v.abs() < 1e-12));
                }
            }
        }
    }
}
