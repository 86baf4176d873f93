//! Brute-force references for small systems.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{contract, Error, Result};
use crate::linalg::{self, c64, CMatrix, C64};
use crate::mps::{DenseState, MpsState, DENSE_CAP};
use crate::witness::WitnessSet;

/// Largest dense operator dimension the oracle will diagonalize.
pub const OPERATOR_CAP: usize = 4096;

/// Default tolerance for ground-space membership.
pub const ZERO_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseOperator {
    pub dim: usize,
    pub matrix: CMatrix,
}

impl DenseOperator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() || !matrix.is_hermitian(linalg::HERMITIAN_TOL) {
            return Err(contract("dense operator must be square and Hermitian"));
        }
        Ok(DenseOperator {
            dim: matrix.rows(),
            matrix,
        })
    }

    /// `|H v|` for a dense state `v` of matching dimension.
    pub fn residual_norm(&self, v: &DenseState) -> f64 {
        let col = CMatrix::from_fn(v.amplitudes.len(), 1, |i, _| v.amplitudes[i]);
        self.matrix.matmul(&col).frobenius_norm()
    }
}

fn checked_dim(d: usize, n: usize, cap: usize) -> Result<usize> {
    d.checked_pow(n as u32)
        .filter(|&t| t <= cap)
        .ok_or(Error::OracleCap {
            requested: (d as f64).powi(n as i32).min(usize::MAX as f64) as usize,
            cap,
        })
}

/// Partial trace of `|ψ><ψ|` onto sites `site .. site + width` (0-based).
pub fn dense_reduction(psi: &DenseState, site: usize, width: usize) -> Result<CMatrix> {
    if width == 0 || site + width > psi.n {
        return Err(contract(format!(
            "window of width {width} at site {site} exceeds {} sites",
            psi.n
        )));
    }
    let mid = psi.d.pow(width as u32);
    let right = psi.d.pow((psi.n - site - width) as u32);
    let left = psi.d.pow(site as u32);
    let amp = &psi.amplitudes;
    let mut rho = CMatrix::zeros(mid, mid);
    for s in 0..mid {
        for t in 0..mid {
            let mut acc = C64::new(0.0, 0.0);
            for l in 0..left {
                let base = l * mid * right;
                for r in 0..right {
                    acc += amp[base + s * right + r] * amp[base + t * right + r].conj();
                }
            }
            rho.set(s, t, acc);
        }
    }
    Ok(rho)
}

/// Applies `op` to site `site` of an amplitude vector.
fn apply_site(amp: &[C64], n: usize, d: usize, site: usize, op: &CMatrix) -> Vec<C64> {
    let right = d.pow((n - site - 1) as u32);
    let left = d.pow(site as u32);
    let mut out = vec![C64::new(0.0, 0.0); amp.len()];
    for l in 0..left {
        for r in 0..right {
            for s in 0..d {
                let mut acc = C64::new(0.0, 0.0);
                for t in 0..d {
                    acc += op.get(s, t) * amp[(l * d + t) * right + r];
                }
                out[(l * d + s) * right + r] = acc;
            }
        }
    }
    out
}

/// `<ψ| O_1 ⊗ … ⊗ O_n |ψ>`
pub fn dense_expectation_product(psi: &DenseState, ops: &[CMatrix]) -> Result<C64> {
    if ops.len() != psi.n || ops.iter().any(|o| o.shape() != (psi.d, psi.d)) {
        return Err(contract("one d x d operator per site required"));
    }
    let mut v = psi.amplitudes.clone();
    for (site, op) in ops.iter().enumerate() {
        v = apply_site(&v, psi.n, psi.d, site, op);
    }
    Ok(linalg::vdot(&psi.amplitudes, &v))
}

/// `Σ_j 1 ⊗ h_j ⊗ 1` on `n_blocks` sites of dimension `block_dim`.
pub fn dense_hamiltonian(ws: &WitnessSet, n_blocks: usize, block_dim: usize) -> Result<DenseOperator> {
    if ws.d != block_dim || ws.bonds() + 1 != n_blocks {
        return Err(contract(format!(
            "{} projectors on dimension {} do not fit {n_blocks} sites of dimension {block_dim}",
            ws.bonds(),
            ws.d
        )));
    }
    let dim = checked_dim(block_dim, n_blocks, OPERATOR_CAP)?;
    let mut h = CMatrix::zeros(dim, dim);
    for (k, proj) in ws.projectors.iter().enumerate() {
        let left = CMatrix::identity(block_dim.pow(k as u32));
        let right = CMatrix::identity(block_dim.pow((n_blocks - k - 2) as u32));
        h = &h + &left.kron(proj).kron(&right);
    }
    DenseOperator::new(h)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapReport {
    pub ground_energy: f64,
    pub gap: f64,
    pub ground_degeneracy: usize,
}

pub fn exact_gap(h: &DenseOperator, zero_tol: f64) -> Result<GapReport> {
    if h.dim > OPERATOR_CAP {
        return Err(Error::OracleCap {
            requested: h.dim,
            cap: OPERATOR_CAP,
        });
    }
    let mut ev = linalg::eigvalsh(&h.matrix)?;
    ev.reverse();
    let ground_energy = ev[0];
    let ground_degeneracy = ev.iter().filter(|&&e| e <= ground_energy + zero_tol).count();
    let next = ev
        .iter()
        .copied()
        .find(|&e| e > ground_energy + zero_tol)
        .ok_or(Error::DegenerateSpectrum)?;
    Ok(GapReport {
        ground_energy,
        gap: next - ground_energy,
        ground_degeneracy,
    })
}

/// `|<Ψ|Φ>|` with `Ψ` expanded densely.
pub fn exact_fidelity(psi: &MpsState, true_state: &DenseState) -> Result<f64> {
    if psi.n() != true_state.n || psi.d() != true_state.d {
        return Err(contract("estimate and reference live on different spaces"));
    }
    let dense = psi.to_dense_capped(DENSE_CAP)?;
    Ok(dense.overlap(true_state).norm().min(1.0))
}

/// `√λ` for the largest eigenvalue `λ < 1 - one_tol` of `P Q P` with
/// `P = h_l ⊗ 1`, `Q = 1 ⊗ h_r` on three sites of dimension `d`.
pub fn dense_pqp_gamma(d: usize, left: &CMatrix, right: &CMatrix, one_tol: f64) -> f64 {
    let id = CMatrix::identity(d);
    let p = left.kron(&id);
    let q = id.kron(right);
    let pqp = p.matmul(&q).matmul(&p).hermitian_part();
    let ev = linalg::eigvalsh(&pqp).expect("three-site operator is small");
    ev.into_iter()
        .filter(|&e| e < 1.0 - one_tol)
        .fold(0.0f64, f64::max)
        .max(0.0)
        .sqrt()
}

/// Smallest eigenvalue of `PQ + QP + γ (P + Q)` on three sites.
pub fn anticommutator_min_eigenvalue(
    d: usize,
    left: &CMatrix,
    right: &CMatrix,
    gamma: f64,
) -> Result<f64> {
    let id = CMatrix::identity(d);
    let p = left.kron(&id);
    let q = id.kron(right);
    let m = &(&p.matmul(&q) + &q.matmul(&p)) + &(&p + &q).scale(c64(gamma, 0.0));
    let ev = linalg::eigvalsh(&m.hermitian_part())?;
    Ok(ev.last().copied().unwrap_or(0.0))
}

/// Eigenvector of the smallest eigenvalue, as a dense state.
pub fn ground_state(h: &DenseOperator, n: usize, d: usize) -> Result<DenseState> {
    let spec = linalg::eigh(&h.matrix)?;
    let v = spec.eigenvectors.column(h.dim - 1);
    DenseState::new(n, d, v)
}
