//! Dense complex linear algebra.
//!
//! [`CMatrix`] is a thin wrapper over a column-major `nalgebra` matrix. All
//! spectra and singular values are returned in descending order, so "the
//! lowest `r` eigenvalues" is always a suffix slice.

use alloc::format;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_traits::Zero;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{contract, Error, Result};

pub type C64 = Complex64;

/// Tolerance on `|h - h^†|` (entrywise, relative to the largest entry) for
/// a matrix to be accepted as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

const SVD_MAX_ITER: usize = 100_000;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix(DMatrix<C64>);

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        CMatrix(DMatrix::identity(n, n))
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        CMatrix(DMatrix::from_fn(rows, cols, |i, j| f(i, j)))
    }

    /// Builds a matrix from entries in row-major order, rejecting non-finite values.
    pub fn from_row_major(rows: usize, cols: usize, entries: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(contract(format!("empty matrix shape {rows}x{cols}")));
        }
        if entries.len() != rows * cols {
            return Err(contract(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(contract("non-finite matrix entry"));
        }
        Ok(CMatrix(DMatrix::from_row_slice(rows, cols, &entries)))
    }

    /// Real matrix from row-major entries. Panics on a length mismatch.
    pub fn from_real(rows: usize, cols: usize, entries: &[f64]) -> Self {
        assert_eq!(entries.len(), rows * cols, "from_real: wrong entry count");
        CMatrix::from_fn(rows, cols, |i, j| c64(entries[i * cols + j], 0.0))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        CMatrix::from_fn(n, n, |i, j| if i == j { c64(diag[i], 0.0) } else { C64::zero() })
    }

    /// `|v><v|`
    pub fn outer(v: &[C64]) -> Self {
        let n = v.len();
        CMatrix::from_fn(n, n, |i, j| v[i] * v[j].conj())
    }

    pub fn from_matrix(m: DMatrix<C64>) -> Self {
        CMatrix(m)
    }

    pub fn as_matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, z: C64) {
        self.0[(i, j)] = z;
    }

    pub fn to_row_major(&self) -> Vec<C64> {
        let (r, c) = self.shape();
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        self.0.column(j).iter().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn adjoint(&self) -> Self {
        CMatrix(self.0.adjoint())
    }

    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.cols(), other.rows(), "matmul shape mismatch");
        CMatrix(&self.0 * &other.0)
    }

    pub fn kron(&self, other: &CMatrix) -> CMatrix {
        CMatrix(self.0.kronecker(&other.0))
    }

    pub fn scale(&self, c: C64) -> CMatrix {
        CMatrix(&self.0 * c)
    }

    pub fn scale_real(&self, c: f64) -> CMatrix {
        self.scale(c64(c, 0.0))
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermitian_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_defect() <= tol * self.max_abs().max(1.0)
    }

    /// `(m + m^†) / 2`
    pub fn hermitian_part(&self) -> CMatrix {
        CMatrix((&self.0 + self.0.adjoint()) * c64(0.5, 0.0))
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(&self.0 - &rhs.0)
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs)
    }
}

/// Thin singular value decomposition `m = u diag(s) v^†`.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: CMatrix,
    /// Descending, nonnegative.
    pub s: Vec<f64>,
    pub v: CMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> CMatrix {
        let k = self.s.len();
        let us = CMatrix::from_fn(self.u.rows(), k, |i, j| self.u.get(i, j) * self.s[j]);
        us.matmul(&self.v.adjoint())
    }
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    idx
}

pub fn svd(m: &CMatrix) -> Result<Svd> {
    let (rows, cols) = m.shape();
    let fail = Error::NumericFailure { op: "svd", rows, cols };
    if !m.is_finite() {
        return Err(fail);
    }
    let dec = m
        .0
        .clone()
        .try_svd(true, true, f64::EPSILON, SVD_MAX_ITER)
        .ok_or(fail.clone())?;
    let (u, v_t) = match (dec.u, dec.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(fail),
    };
    let raw: Vec<f64> = dec.singular_values.iter().copied().collect();
    let order = descending_order(&raw);
    let k = raw.len();
    let s = order.iter().map(|&i| raw[i]).collect();
    let u = CMatrix::from_fn(rows, k, |i, j| u[(i, order[j])]);
    let v = CMatrix::from_fn(cols, k, |i, j| v_t[(order[j], i)].conj());
    Ok(Svd { u, s, v })
}

/// Singular values only, descending.
pub fn singular_values(m: &CMatrix) -> Result<Vec<f64>> {
    let (rows, cols) = m.shape();
    let fail = Error::NumericFailure { op: "svd", rows, cols };
    if !m.is_finite() {
        return Err(fail);
    }
    let dec = m
        .0
        .clone()
        .try_svd(false, false, f64::EPSILON, SVD_MAX_ITER)
        .ok_or(fail)?;
    let mut s: Vec<f64> = dec.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Eigendecomposition of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermitianSpectrum {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Column `i` belongs to `eigenvalues[i]`.
    pub eigenvectors: CMatrix,
}

impl HermitianSpectrum {
    /// `sum_{i in idx} |v_i><v_i|`
    pub fn projector(&self, idx: impl IntoIterator<Item = usize>) -> CMatrix {
        let cols: Vec<usize> = idx.into_iter().collect();
        projector_onto(&select_columns(&self.eigenvectors, &cols))
    }

    pub fn reassemble(&self) -> CMatrix {
        let v = &self.eigenvectors;
        let vl = CMatrix::from_fn(v.rows(), v.cols(), |i, j| v.get(i, j) * self.eigenvalues[j]);
        vl.matmul(&v.adjoint())
    }
}

fn checked_hermitian(h: &CMatrix, op: &str) -> Result<CMatrix> {
    if !h.is_square() {
        return Err(contract(format!("{op}: non-square {}x{} input", h.rows(), h.cols())));
    }
    if !h.is_finite() {
        return Err(Error::NumericFailure {
            op: "eigh",
            rows: h.rows(),
            cols: h.cols(),
        });
    }
    if !h.is_hermitian(HERMITIAN_TOL) {
        return Err(contract(format!(
            "{op}: input is not Hermitian (defect {:e})",
            h.hermitian_defect()
        )));
    }
    Ok(h.hermitian_part())
}

pub fn eigh(h: &CMatrix) -> Result<HermitianSpectrum> {
    let sym = checked_hermitian(h, "eigh")?;
    let n = sym.rows();
    let dec = sym
        .0
        .try_symmetric_eigen(f64::EPSILON, SVD_MAX_ITER)
        .ok_or(Error::NumericFailure { op: "eigh", rows: n, cols: n })?;
    let raw: Vec<f64> = dec.eigenvalues.iter().copied().collect();
    let order = descending_order(&raw);
    let eigenvalues = order.iter().map(|&i| raw[i]).collect();
    let eigenvectors = CMatrix::from_fn(n, n, |i, j| dec.eigenvectors[(i, order[j])]);
    Ok(HermitianSpectrum {
        eigenvalues,
        eigenvectors,
    })
}

/// Eigenvalues only, descending.
pub fn eigvalsh(h: &CMatrix) -> Result<Vec<f64>> {
    let sym = checked_hermitian(h, "eigvalsh")?;
    let mut ev: Vec<f64> = sym.0.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    Ok(ev)
}

pub fn trace_norm(m: &CMatrix) -> Result<f64> {
    if !m.is_square() {
        return Err(contract(format!(
            "trace_norm: non-square {}x{} input",
            m.rows(),
            m.cols()
        )));
    }
    Ok(singular_values(m)?.iter().sum())
}

/// Clips negative eigenvalues to zero and renormalizes to unit trace.
pub fn project_psd_unit_trace(m: &CMatrix) -> Result<CMatrix> {
    let spec = eigh(m)?;
    let clipped: Vec<f64> = spec.eigenvalues.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateInput(
            "project_psd_unit_trace: no positive eigenvalue".into(),
        ));
    }
    let v = &spec.eigenvectors;
    let vl = CMatrix::from_fn(v.rows(), v.cols(), |i, j| v.get(i, j) * (clipped[j] / total));
    Ok(vl.matmul(&v.adjoint()).hermitian_part())
}

pub fn select_columns(m: &CMatrix, cols: &[usize]) -> CMatrix {
    CMatrix::from_fn(m.rows(), cols.len(), |i, j| m.get(i, cols[j]))
}

/// `V V^†` for a matrix with orthonormal columns.
pub fn projector_onto(basis: &CMatrix) -> CMatrix {
    if basis.cols() == 0 {
        return CMatrix::zeros(basis.rows(), basis.rows());
    }
    basis.matmul(&basis.adjoint()).hermitian_part()
}

/// Largest entrywise deviation of `v^† v` from the identity.
pub fn orthonormality_defect(v: &CMatrix) -> f64 {
    let g = v.adjoint().matmul(v);
    let id = CMatrix::identity(v.cols());
    (&g - &id).max_abs()
}

pub fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}
