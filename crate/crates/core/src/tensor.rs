//! Dense third-order tensors and the circulant algebra built on them.
//!
//! A [`Tensor3`] of size `n1 x n2 x n3` is stored as `n3` frontal slices, each
//! an `n1 x n2` column-major matrix laid out back to back, so a frontal slice
//! is a contiguous block and can be borrowed as a matrix view without copying.
//! All indices in code are 0-based.
//!
//! The t-product `X * Y` multiplies tube fibers by circular convolution. It is
//! computed slice-wise in the Fourier domain along mode 3; [`bcirc`] and
//! [`bvec`] give the equivalent dense definition used by the tests.

use nalgebra::{DMatrix, DMatrixView};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type ComplexMatrix = DMatrix<Complex64>;

/// Relative imaginary residue tolerated when casting an inverse transform back
/// to real numbers.
pub const IMAG_RESIDUE_TOL: f64 = 1e-10;

/// Number of Fourier slices that carry independent information for a real
/// input of depth `n3`; the rest are complex conjugates of these.
pub fn independent_slices(n3: usize) -> usize {
    n3 / 2 + 1
}

/// Index of the slice whose transform is the complex conjugate of slice `k`.
pub fn conjugate_slice(k: usize, n3: usize) -> usize {
    (n3 - k) % n3
}

/// Dense real tensor of size `n1 x n2 x n3`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    dims: (usize, usize, usize),
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n1: usize, n2: usize, n3: usize) -> Self {
        Self {
            dims: (n1, n2, n3),
            data: vec![0.0; n1 * n2 * n3],
        }
    }

    pub fn from_fn(n1: usize, n2: usize, n3: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(n1, n2, n3);
        for k in 0..n3 {
            for j in 0..n2 {
                for i in 0..n1 {
                    t.data[(k * n2 + j) * n1 + i] = f(i, j, k);
                }
            }
        }
        t
    }

    /// Builds a tensor from raw slice-major storage (slice `k` occupies
    /// `data[k*n1*n2 .. (k+1)*n1*n2]`, column-major inside the slice).
    pub fn from_vec(n1: usize, n2: usize, n3: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n1 * n2 * n3 {
            return Err(Error::ShapeMismatch {
                op: "Tensor3::from_vec",
                expected: format!("{} elements", n1 * n2 * n3),
                found: format!("{} elements", data.len()),
            });
        }
        Ok(Self {
            dims: (n1, n2, n3),
            data,
        })
    }

    /// Stacks equally sized matrices as frontal slices.
    pub fn from_slices(slices: &[Matrix]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::InvalidArgument("at least one frontal slice is required".into()))?;
        let (n1, n2) = first.shape();
        let mut data = Vec::with_capacity(n1 * n2 * slices.len());
        for (k, s) in slices.iter().enumerate() {
            if s.shape() != (n1, n2) {
                return Err(Error::ShapeMismatch {
                    op: "Tensor3::from_slices",
                    expected: format!("{n1}x{n2}"),
                    found: format!("{}x{} at slice {k}", s.nrows(), s.ncols()),
                });
            }
            data.extend_from_slice(s.as_slice());
        }
        Ok(Self {
            dims: (n1, n2, slices.len()),
            data,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        let (n1, n2, _) = self.dims;
        (k * n2 + j) * n1 + i
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let o = self.offset(i, j, k);
        self.data[o] = value;
    }

    /// Borrowed view of frontal slice `k`.
    pub fn slice_view(&self, k: usize) -> DMatrixView<'_, f64> {
        let (n1, n2, _) = self.dims;
        DMatrixView::from_slice(&self.data[k * n1 * n2..(k + 1) * n1 * n2], n1, n2)
    }

    /// Owned copy of frontal slice `k`.
    pub fn slice(&self, k: usize) -> Matrix {
        self.slice_view(k).into_owned()
    }

    pub fn set_slice(&mut self, k: usize, m: &Matrix) {
        let (n1, n2, _) = self.dims;
        assert_eq!(m.shape(), (n1, n2), "frontal slice shape");
        self.data[k * n1 * n2..(k + 1) * n1 * n2].copy_from_slice(m.as_slice());
    }

    /// Mode-3 fiber `T(i, j, :)`.
    pub fn tube(&self, i: usize, j: usize) -> Vec<f64> {
        (0..self.dims.2).map(|k| self.get(i, j, k)).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Sum of entrywise products.
    pub fn inner(&self, other: &Tensor3) -> f64 {
        assert_eq!(self.dims, other.dims, "inner product dims");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn scale(&self, alpha: f64) -> Tensor3 {
        self.map(|v| alpha * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor3 {
        Tensor3 {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &Tensor3) -> Tensor3 {
        assert_eq!(self.dims, other.dims, "add_scaled dims");
        Tensor3 {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + alpha * b).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Add for &Tensor3 {
    type Output = Tensor3;
    fn add(self, rhs: &Tensor3) -> Tensor3 {
        self.add_scaled(1.0, rhs)
    }
}

impl std::ops::Sub for &Tensor3 {
    type Output = Tensor3;
    fn sub(self, rhs: &Tensor3) -> Tensor3 {
        self.add_scaled(-1.0, rhs)
    }
}

/// Mode-3 Fourier transform of a [`Tensor3`].
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor3 {
    dims: (usize, usize, usize),
    data: Vec<Complex64>,
}

impl ComplexTensor3 {
    pub fn zeros(n1: usize, n2: usize, n3: usize) -> Self {
        Self {
            dims: (n1, n2, n3),
            data: vec![Complex64::new(0.0, 0.0); n1 * n2 * n3],
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> Complex64 {
        let (n1, n2, _) = self.dims;
        self.data[(k * n2 + j) * n1 + i]
    }

    pub fn slice(&self, k: usize) -> ComplexMatrix {
        let (n1, n2, _) = self.dims;
        ComplexMatrix::from_column_slice(n1, n2, &self.data[k * n1 * n2..(k + 1) * n1 * n2])
    }

    pub fn set_slice(&mut self, k: usize, m: &ComplexMatrix) {
        let (n1, n2, _) = self.dims;
        assert_eq!(m.shape(), (n1, n2), "frontal slice shape");
        self.data[k * n1 * n2..(k + 1) * n1 * n2].copy_from_slice(m.as_slice());
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Fills slices above the independent half with conjugates of their
    /// mirror slices, as required for a transform of real data.
    pub fn mirror_conjugates(&mut self) {
        let (n1, n2, n3) = self.dims;
        let m = n1 * n2;
        for k in independent_slices(n3)..n3 {
            let src = conjugate_slice(k, n3);
            for p in 0..m {
                self.data[k * m + p] = self.data[src * m + p].conj();
            }
        }
    }

    /// Builds the transform of a real tensor from its independent slices
    /// `0..independent_slices(n3)`.
    pub fn from_half_spectrum(n1: usize, n2: usize, n3: usize, half: Vec<ComplexMatrix>) -> Self {
        assert_eq!(half.len(), independent_slices(n3));
        let mut out = Self::zeros(n1, n2, n3);
        for (k, s) in half.iter().enumerate() {
            out.set_slice(k, s);
        }
        out.mirror_conjugates();
        out
    }
}

/// Forward DFT along mode 3 (unnormalized, as `fft(X, [], 3)`).
pub fn fft3(t: &Tensor3) -> ComplexTensor3 {
    let (n1, n2, n3) = t.dims;
    let m = n1 * n2;
    let mut tubes = vec![Complex64::new(0.0, 0.0); m * n3];
    for k in 0..n3 {
        for p in 0..m {
            tubes[p * n3 + k] = Complex64::new(t.data[k * m + p], 0.0);
        }
    }
    if n3 > 1 && m > 0 {
        FftPlanner::new().plan_fft_forward(n3).process(&mut tubes);
    }
    let mut out = ComplexTensor3::zeros(n1, n2, n3);
    for k in 0..n3 {
        for p in 0..m {
            out.data[k * m + p] = tubes[p * n3 + k];
        }
    }
    out
}

/// Inverse DFT along mode 3 followed by a checked cast to real.
///
/// Fails with [`Error::ImaginaryResidue`] when the imaginary part exceeds
/// [`IMAG_RESIDUE_TOL`] relative to the Frobenius norm of the result.
pub fn ifft3(tf: &ComplexTensor3) -> Result<Tensor3> {
    let (n1, n2, n3) = tf.dims;
    let m = n1 * n2;
    let mut tubes = vec![Complex64::new(0.0, 0.0); m * n3];
    for k in 0..n3 {
        for p in 0..m {
            tubes[p * n3 + k] = tf.data[k * m + p];
        }
    }
    if n3 > 1 && m > 0 {
        FftPlanner::new().plan_fft_inverse(n3).process(&mut tubes);
    }
    let scale = 1.0 / n3 as f64;
    let mut out = Tensor3::zeros(n1, n2, n3);
    let (mut re2, mut im2) = (0.0, 0.0);
    for k in 0..n3 {
        for p in 0..m {
            let v = tubes[p * n3 + k] * scale;
            re2 += v.re * v.re;
            im2 += v.im * v.im;
            out.data[k * m + p] = v.re;
        }
    }
    let total = (re2 + im2).sqrt();
    if total > 0.0 {
        let residue = im2.sqrt() / total;
        if residue > IMAG_RESIDUE_TOL || !residue.is_finite() {
            return Err(Error::ImaginaryResidue {
                residue,
                limit: IMAG_RESIDUE_TOL,
            });
        }
    } else if !total.is_finite() {
        return Err(Error::NonFinite("ifft3 input"));
    }
    Ok(out)
}

/// Block circulant matrix: block `(r, c)` is frontal slice `(r - c) mod n3`.
pub fn bcirc(t: &Tensor3) -> Matrix {
    let (n1, n2, n3) = t.dims;
    let mut out = Matrix::zeros(n1 * n3, n2 * n3);
    for r in 0..n3 {
        for c in 0..n3 {
            let k = (r + n3 - c) % n3;
            out.view_mut((r * n1, c * n2), (n1, n2)).copy_from(&t.slice_view(k));
        }
    }
    out
}

/// Frontal slices stacked vertically.
pub fn bvec(t: &Tensor3) -> Matrix {
    let (n1, n2, n3) = t.dims;
    let mut out = Matrix::zeros(n1 * n3, n2);
    for k in 0..n3 {
        out.view_mut((k * n1, 0), (n1, n2)).copy_from(&t.slice_view(k));
    }
    out
}

/// Inverse of [`bvec`] for a target depth `n3`.
pub fn bvfold(m: &Matrix, n3: usize) -> Result<Tensor3> {
    if n3 == 0 || m.nrows() % n3 != 0 {
        return Err(Error::ShapeMismatch {
            op: "bvfold",
            expected: format!("row count divisible by {n3}"),
            found: format!("{} rows", m.nrows()),
        });
    }
    let n1 = m.nrows() / n3;
    let n2 = m.ncols();
    let slices: Vec<Matrix> = (0..n3).map(|k| m.view((k * n1, 0), (n1, n2)).into_owned()).collect();
    Tensor3::from_slices(&slices)
}

/// Block diagonal matrix of the frontal slices.
pub fn bdiag(t: &Tensor3) -> Matrix {
    let (n1, n2, n3) = t.dims;
    let mut out = Matrix::zeros(n1 * n3, n2 * n3);
    for k in 0..n3 {
        out.view_mut((k * n1, k * n2), (n1, n2)).copy_from(&t.slice_view(k));
    }
    out
}

/// Complex counterpart of [`bdiag`], used on Fourier-domain tensors.
pub fn bdiag_complex(t: &ComplexTensor3) -> ComplexMatrix {
    let (n1, n2, n3) = t.dims;
    let mut out = ComplexMatrix::zeros(n1 * n3, n2 * n3);
    for k in 0..n3 {
        out.view_mut((k * n1, k * n2), (n1, n2)).copy_from(&t.slice(k));
    }
    out
}

/// Inverse of [`bdiag`]; rejects matrices with nonzeros off the diagonal blocks.
pub fn bdfold(m: &Matrix, n3: usize) -> Result<Tensor3> {
    if n3 == 0 || m.nrows() % n3 != 0 || m.ncols() % n3 != 0 {
        return Err(Error::ShapeMismatch {
            op: "bdfold",
            expected: format!("both dimensions divisible by {n3}"),
            found: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    let n1 = m.nrows() / n3;
    let n2 = m.ncols() / n3;
    for col in 0..m.ncols() {
        for row in 0..m.nrows() {
            if row / n1 != col / n2 && m[(row, col)] != 0.0 {
                return Err(Error::NotBlockDiagonal { row, col });
            }
        }
    }
    let slices: Vec<Matrix> = (0..n3).map(|k| m.view((k * n1, k * n2), (n1, n2)).into_owned()).collect();
    Tensor3::from_slices(&slices)
}

/// t-product `X * Y` of an `n1 x n2 x n3` and an `n2 x n4 x n3` tensor,
/// computed as slice-wise matrix products in the Fourier domain.
pub fn tproduct(x: &Tensor3, y: &Tensor3) -> Result<Tensor3> {
    let (n1, n2, n3) = x.dims;
    let (m2, n4, m3) = y.dims;
    if n2 != m2 || n3 != m3 {
        return Err(Error::ShapeMismatch {
            op: "tproduct",
            expected: format!("{n2}x?x{n3} right operand"),
            found: format!("{m2}x{n4}x{m3}"),
        });
    }
    let xf = fft3(x);
    let yf = fft3(y);
    let half: Vec<ComplexMatrix> = (0..independent_slices(n3)).map(|k| xf.slice(k) * yf.slice(k)).collect();
    ifft3(&ComplexTensor3::from_half_spectrum(n1, n4, n3, half))
}

/// Tensor transpose: every frontal slice transposed, slices `2..n3` reversed.
pub fn ttranspose(x: &Tensor3) -> Tensor3 {
    let (n1, n2, n3) = x.dims;
    let mut out = Tensor3::zeros(n2, n1, n3);
    for k in 0..n3 {
        let src = conjugate_slice(k, n3);
        out.set_slice(k, &x.slice_view(src).transpose());
    }
    out
}

/// Identity tensor: first frontal slice is `I_{n1}`, the others are zero.
pub fn tidentity(n1: usize, n3: usize) -> Tensor3 {
    let mut out = Tensor3::zeros(n1, n1, n3);
    for i in 0..n1 {
        out.set(i, i, 0, 1.0);
    }
    out
}

/// Cyclic dimension shift `n1 x n2 x n3 -> n2 x n3 x n1` with
/// `out(j, k, i) = t(i, j, k)`.
///
/// Applied to the stacked `N x N x V` coefficient tensor this gives the
/// `N x V x N` layout whose mode-3 fibers are the per-view self-representation
/// vectors of each sample.
pub fn rotate(t: &Tensor3) -> Tensor3 {
    let (n1, n2, n3) = t.dims;
    let mut out = Tensor3::zeros(n2, n3, n1);
    for k in 0..n3 {
        for j in 0..n2 {
            for i in 0..n1 {
                out.set(j, k, i, t.get(i, j, k));
            }
        }
    }
    out
}

/// Exact inverse of [`rotate`].
pub fn unrotate(t: &Tensor3) -> Tensor3 {
    let (n2, n3, n1) = t.dims;
    let mut out = Tensor3::zeros(n1, n2, n3);
    for k in 0..n3 {
        for j in 0..n2 {
            for i in 0..n1 {
                out.set(i, j, k, t.get(j, k, i));
            }
        }
    }
    out
}

/// Mode-`mode` unfolding (`mode` in 1..=3); columns are the mode fibers.
pub fn unfold(t: &Tensor3, mode: usize) -> Result<Matrix> {
    let (n1, n2, n3) = t.dims;
    let out = match mode {
        1 => Matrix::from_fn(n1, n2 * n3, |i, c| t.get(i, c % n2, c / n2)),
        2 => Matrix::from_fn(n2, n1 * n3, |j, c| t.get(c % n1, j, c / n1)),
        3 => Matrix::from_fn(n3, n1 * n2, |k, c| t.get(c % n1, c / n1, k)),
        _ => return Err(Error::InvalidArgument(format!("unfold mode must be 1, 2 or 3, got {mode}"))),
    };
    Ok(out)
}

/// Inverse of [`unfold`].
pub fn fold(m: &Matrix, mode: usize, dims: (usize, usize, usize)) -> Result<Tensor3> {
    let (n1, n2, n3) = dims;
    let expected = match mode {
        1 => (n1, n2 * n3),
        2 => (n2, n1 * n3),
        3 => (n3, n1 * n2),
        _ => return Err(Error::InvalidArgument(format!("fold mode must be 1, 2 or 3, got {mode}"))),
    };
    if m.shape() != expected {
        return Err(Error::ShapeMismatch {
            op: "fold",
            expected: format!("{}x{}", expected.0, expected.1),
            found: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    Ok(Tensor3::from_fn(n1, n2, n3, |i, j, k| match mode {
        1 => m[(i, j + k * n2)],
        2 => m[(j, i + k * n1)],
        _ => m[(k, i + j * n1)],
    }))
}
