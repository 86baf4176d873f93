//! MPS estimates from tomography data.
//!
//! Two methods are provided. The empirical-parent route builds projectors
//! from the small-eigenvalue subspaces of the window estimates and finds the
//! ground state of their sum by single-site DMRG at fixed bond dimension.
//! The variational route minimizes `Σ_j ‖ρ_j(Ψ) - σ_j‖_tr` directly, one site
//! tensor at a time, accepting only steps that do not increase it.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{config, contract, Error, Result};
use crate::linalg::{self, c64, CMatrix, C64};
use crate::mps::{fold_cols, fold_rows, open_bond_profile, unfold_cols, unfold_rows, MpsState};
use crate::tomo::TomographyData;
use crate::witness::WitnessSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Dmrg,
    Variational,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReconstructOptions {
    pub bond_dim: usize,
    pub max_sweeps: usize,
    /// A sweep that lowers the objective by less than this ends the run.
    pub convergence_tol: f64,
    pub seed: u64,
    pub method: Method,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        ReconstructOptions {
            bond_dim: 2,
            max_sweeps: 50,
            convergence_tol: 1e-10,
            seed: 0,
            method: Method::Dmrg,
        }
    }
}

impl ReconstructOptions {
    pub fn validate(&self) -> Result<()> {
        if self.bond_dim == 0 {
            return Err(config("bond dimension must be at least 1"));
        }
        if self.max_sweeps == 0 {
            return Err(config("max_sweeps must be at least 1"));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(config("convergence tolerance must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRecord {
    /// 0 is the initial state.
    pub sweep: usize,
    pub objective: f64,
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    /// Canonicalized estimate on the blocked sites.
    pub state: MpsState,
    pub objective: f64,
    pub log: Vec<SweepRecord>,
    pub converged: bool,
}

/// Runs the selected method end to end.
pub fn reconstruct(data: &TomographyData, opts: &ReconstructOptions) -> Result<Reconstruction> {
    match opts.method {
        Method::Dmrg => {
            let ws = empirical_parent(data, opts.bond_dim)?;
            dmrg_ground(&ws, opts)
        }
        Method::Variational => variational_fit(data, opts),
    }
}

/// Eigenvalue gaps below this at the rank cut are treated as ties.
pub const CUT_TIE_TOL: f64 = 1e-12;

/// `h_j` projects onto the eigenvectors of `σ_j` outside the `r_j` largest
/// eigenvalues, where `r_j` is the largest reduction rank an open-boundary
/// MPS of bond dimension `bond_dim` can have on window `j`:
/// `D_{j-1} D_{j+1}` for the profile `min(bond_dim, d^j, d^(n-j))`.
/// In the bulk this is `bond_dim^2`.
pub fn empirical_parent(data: &TomographyData, bond_dim: usize) -> Result<WitnessSet> {
    data.validate()?;
    if bond_dim == 0 {
        return Err(config("bond dimension must be at least 1"));
    }
    let d = data.block_dim;
    let d2 = d * d;
    if d2 <= bond_dim * bond_dim {
        return Err(config(format!(
            "two-block dimension {d2} must exceed the squared bond dimension {}",
            bond_dim * bond_dim
        )));
    }
    let profile = open_bond_profile(data.n_blocks, d, bond_dim);
    let mut supports = Vec::with_capacity(data.windows.len());
    for (k, w) in data.windows.iter().enumerate() {
        let keep = profile[k] * profile[k + 2];
        let spec = linalg::eigh(&w.sigma)?;
        let above = spec.eigenvalues[keep - 1];
        let below = spec.eigenvalues[keep];
        if above - below < CUT_TIE_TOL {
            return Err(Error::IllConditionedCut {
                window: w.j,
                below,
                above,
            });
        }
        let idx: Vec<usize> = (0..keep).collect();
        supports.push(linalg::select_columns(&spec.eigenvectors, &idx));
    }
    WitnessSet::from_supports(d, supports)
}

/// Row-major reshape of a vector into a `rows x cols` matrix.
fn reshape(v: &[C64], rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |i, j| v[i * cols + j])
}

/// Operators of the left block seen from site `i`: the terms entirely inside
/// sites `0..i-1`, and the term on `(i-1, i)` in the left basis of bond `i`.
struct LeftEnv {
    block: CMatrix,
    bridge: CMatrix,
}

/// Operators of the right block seen from site `i`: the terms inside
/// `i+1..n-1`, and the term on `(i, i+1)` in the right basis of bond `i+1`.
struct RightEnv {
    block: CMatrix,
    bridge: CMatrix,
}

struct Sweeper<'a> {
    ws: &'a WitnessSet,
    d: usize,
    bonds: Vec<usize>,
    tensors: Vec<Vec<CMatrix>>,
    left: Vec<Option<LeftEnv>>,
    right: Vec<Option<RightEnv>>,
}

impl<'a> Sweeper<'a> {
    fn new(ws: &'a WitnessSet, init: MpsState) -> Self {
        let n = init.n();
        let mut s = Sweeper {
            ws,
            d: init.d(),
            bonds: init.bond_dims().to_vec(),
            tensors: init.tensors().to_vec(),
            left: (0..n).map(|_| None).collect(),
            right: (0..n).map(|_| None).collect(),
        };
        let d = s.d;
        s.left[0] = Some(LeftEnv {
            block: CMatrix::zeros(1, 1),
            bridge: CMatrix::zeros(d, d),
        });
        s.right[n - 1] = Some(RightEnv {
            block: CMatrix::zeros(1, 1),
            bridge: CMatrix::zeros(d, d),
        });
        for i in (1..n).rev() {
            s.extend_right(i);
        }
        s
    }

    fn n(&self) -> usize {
        self.tensors.len()
    }

    /// Site `i` is right-canonical; builds the right environment of site `i-1`.
    fn extend_right(&mut self, i: usize) {
        let d = self.d;
        let (dl, dr) = (self.bonds[i], self.bonds[i + 1]);
        let env = self.right[i].as_ref().expect("right environment");
        // columns of v are the right basis vectors of bond i, indexed (s, c)
        let v = unfold_rows(&self.tensors[i], dl, dr).as_matrix().transpose();
        let v = CMatrix::from_matrix(v);
        let inner = &CMatrix::identity(d).kron(&env.block) + &env.bridge;
        let block = v.adjoint().matmul(&inner).matmul(&v);
        let iv = CMatrix::identity(d).kron(&v);
        let h = self.ws.projectors[i - 1].kron(&CMatrix::identity(dr));
        let bridge = iv.adjoint().matmul(&h).matmul(&iv);
        self.right[i - 1] = Some(RightEnv { block, bridge });
    }

    /// Site `i` is left-isometric; builds the left environment of site `i+1`.
    fn extend_left(&mut self, i: usize) {
        let d = self.d;
        let (dl, dr) = (self.bonds[i], self.bonds[i + 1]);
        let env = self.left[i].as_ref().expect("left environment");
        // rows (a, s), columns the left basis of bond i+1
        let a = unfold_cols(&self.tensors[i], dl, dr);
        let inner = &env.block.kron(&CMatrix::identity(d)) + &env.bridge;
        let block = a.adjoint().matmul(&inner).matmul(&a);
        let ai = a.kron(&CMatrix::identity(d));
        let h = CMatrix::identity(dl).kron(&self.ws.projectors[i]);
        let bridge = ai.adjoint().matmul(&h).matmul(&ai);
        self.left[i + 1] = Some(LeftEnv { block, bridge });
    }

    fn effective(&self, i: usize) -> CMatrix {
        let d = self.d;
        let (dl, dr) = (self.bonds[i], self.bonds[i + 1]);
        let l = self.left[i].as_ref().expect("left environment");
        let r = self.right[i].as_ref().expect("right environment");
        let mut h = l.block.kron(&CMatrix::identity(d * dr));
        h = &h + &CMatrix::identity(dl * d).kron(&r.block);
        if i > 0 {
            h = &h + &l.bridge.kron(&CMatrix::identity(dr));
        }
        if i + 1 < self.n() {
            h = &h + &CMatrix::identity(dl).kron(&r.bridge);
        }
        h.hermitian_part()
    }

    fn local_vector(&self, i: usize) -> Vec<C64> {
        let (dl, dr) = (self.bonds[i], self.bonds[i + 1]);
        let mut v = Vec::with_capacity(dl * self.d * dr);
        for a in 0..dl {
            for s in 0..self.d {
                for b in 0..dr {
                    v.push(self.tensors[i][s].get(a, b));
                }
            }
        }
        v
    }

    fn energy_at(&self, i: usize) -> f64 {
        let v = self.local_vector(i);
        let h = self.effective(i);
        let col = CMatrix::from_fn(v.len(), 1, |r, _| v[r]);
        let num = linalg::vdot(&v, &h.matmul(&col).column(0)).re;
        num / linalg::vec_norm(&v).powi(2)
    }

    /// Replaces site `i` by the lowest eigenvector of its effective Hamiltonian.
    fn optimize(&mut self, i: usize) -> Result<(f64, Vec<C64>)> {
        let h = self.effective(i);
        let spec = linalg::eigh(&h)?;
        let last = spec.eigenvalues.len() - 1;
        Ok((spec.eigenvalues[last], spec.eigenvectors.column(last)))
    }

    fn move_right(&mut self, i: usize, v: &[C64]) -> Result<()> {
        let d = self.d;
        let (dl, dr) = (self.bonds[i], self.bonds[i + 1]);
        let m = reshape(v, dl * d, dr);
        let dec = linalg::svd(&m)?;
        let u = CMatrix::from_fn(dl * d, dr, |r, c| dec.u.get(r, c));
        self.tensors[i] = fold_cols(&u, d, dl);
        let carry = CMatrix::from_fn(dr, dr, |r, c| dec.v.get(c, r).conj() * dec.s[r]);
        for t in self.tensors[i + 1].iter_mut() {
            *t = carry.matmul(t);
        }
        self.extend_left(i);
        Ok(())
    }

    fn move_left(&mut self, i: usize, v: &[C64]) -> Result<()> {
        let d = self.d;
        let (dl, dr) = (self.bonds[i], self.bonds[i + 1]);
        let m = reshape(v, dl, d * dr);
        let dec = linalg::svd(&m)?;
        let vh = CMatrix::from_fn(dl, d * dr, |r, c| dec.v.get(c, r).conj());
        self.tensors[i] = fold_rows(&vh, d, dr);
        let carry = CMatrix::from_fn(dl, dl, |r, c| dec.u.get(r, c) * dec.s[c]);
        for t in self.tensors[i - 1].iter_mut() {
            *t = t.matmul(&carry);
        }
        self.extend_right(i);
        Ok(())
    }

    /// One left-to-right pass followed by one right-to-left pass.
    fn sweep(&mut self) -> Result<f64> {
        let n = self.n();
        let mut energy = 0.0;
        for i in 0..n - 1 {
            let (e, v) = self.optimize(i)?;
            energy = e;
            self.move_right(i, &v)?;
        }
        for i in (1..n).rev() {
            let (e, v) = self.optimize(i)?;
            energy = e;
            self.move_left(i, &v)?;
        }
        // site 0 absorbed the final carry; keep it normalized
        let norm: f64 = self.tensors[0]
            .iter()
            .map(|t| t.frobenius_norm().powi(2))
            .sum::<f64>()
            .sqrt();
        for t in self.tensors[0].iter_mut() {
            *t = t.scale_real(1.0 / norm);
        }
        Ok(energy)
    }

    fn into_state(self) -> Result<MpsState> {
        MpsState::new(self.d, self.bonds, self.tensors)?.canonicalize()
    }
}

/// Minimizes `Σ_j <Ψ|h_j|Ψ>` over open-boundary MPS with bond profile
/// `min(bond_dim, d^j, d^(n-j))`, starting from a seeded random state.
pub fn dmrg_ground(ws: &WitnessSet, opts: &ReconstructOptions) -> Result<Reconstruction> {
    opts.validate()?;
    let n = ws.bonds() + 1;
    if n < 2 {
        return Err(contract("need at least one window"));
    }
    let init = MpsState::random(n, ws.d, opts.bond_dim, opts.seed)?;
    dmrg_from(ws, init, opts)
}

/// Same as [`dmrg_ground`] from a given initial state.
pub fn dmrg_from(ws: &WitnessSet, init: MpsState, opts: &ReconstructOptions) -> Result<Reconstruction> {
    opts.validate()?;
    if init.n() != ws.bonds() + 1 || init.d() != ws.d || !init.is_open() {
        return Err(contract("initial state does not match the witness set"));
    }
    let init = init.canonicalize()?;
    let mut sweeper = Sweeper::new(ws, init);
    let mut objective = sweeper.energy_at(0);
    let mut log = alloc::vec![SweepRecord { sweep: 0, objective }];
    let mut converged = false;
    for sweep in 1..=opts.max_sweeps {
        let e = sweeper.sweep()?;
        let drop = objective - e;
        objective = e;
        log.push(SweepRecord { sweep, objective });
        if drop < opts.convergence_tol {
            converged = true;
            break;
        }
    }
    let state = sweeper.into_state()?;
    Ok(Reconstruction {
        state,
        objective,
        log,
        converged,
    })
}

/// `Σ_j ‖ρ_j(Ψ) - σ_j‖_tr` over all windows, in any gauge.
pub fn fit_objective(psi: &MpsState, data: &TomographyData) -> Result<f64> {
    let reductions = psi.pair_reductions_any_gauge();
    let mut total = 0.0;
    for (rho, w) in reductions.iter().zip(&data.windows) {
        total += linalg::trace_norm(&(rho - &w.sigma))?;
    }
    Ok(total)
}

const FD_STEP: f64 = 1e-7;
const LINE_SEARCH_HALVINGS: usize = 30;

/// Minimizes the trace-norm misfit from a seeded random open-boundary start.
pub fn variational_fit(data: &TomographyData, opts: &ReconstructOptions) -> Result<Reconstruction> {
    opts.validate()?;
    data.validate()?;
    let init = MpsState::random(data.n_blocks, data.block_dim, opts.bond_dim, opts.seed)?;
    variational_from(data, init, opts)
}

/// Same as [`variational_fit`] from a given initial state.
pub fn variational_from(
    data: &TomographyData,
    init: MpsState,
    opts: &ReconstructOptions,
) -> Result<Reconstruction> {
    opts.validate()?;
    if init.n() != data.n_blocks || init.d() != data.block_dim {
        return Err(contract("initial state does not match the data"));
    }
    let mut psi = init;
    let mut objective = fit_objective(&psi, data)?;
    let mut log = alloc::vec![SweepRecord { sweep: 0, objective }];
    let mut converged = false;
    for sweep in 1..=opts.max_sweeps {
        let before = objective;
        for site in 0..psi.n() {
            let (next, value) = descend_site(&psi, site, data, objective)?;
            psi = next;
            objective = value;
        }
        log.push(SweepRecord { sweep, objective });
        if before - objective < opts.convergence_tol {
            converged = true;
            break;
        }
    }
    let state = psi.canonicalize()?;
    Ok(Reconstruction {
        state,
        objective,
        log,
        converged,
    })
}

fn with_site(psi: &MpsState, site: usize, mats: Vec<CMatrix>) -> Result<MpsState> {
    let mut tensors = psi.tensors().to_vec();
    tensors[site] = mats;
    MpsState::new(psi.d(), psi.bond_dims().to_vec(), tensors)
}

/// Finite-difference subgradient step on one site with backtracking; returns
/// the input unchanged when no trial step improves the objective.
fn descend_site(
    psi: &MpsState,
    site: usize,
    data: &TomographyData,
    current: f64,
) -> Result<(MpsState, f64)> {
    let mats = psi.tensors()[site].clone();
    let scale = mats
        .iter()
        .map(|m| m.frobenius_norm().powi(2))
        .sum::<f64>()
        .sqrt()
        .max(1e-12);
    let h = FD_STEP * scale;
    let mut grad: Vec<CMatrix> = mats.iter().map(|m| CMatrix::zeros(m.rows(), m.cols())).collect();
    for s in 0..mats.len() {
        for a in 0..mats[s].rows() {
            for b in 0..mats[s].cols() {
                for dir in [c64(1.0, 0.0), c64(0.0, 1.0)] {
                    let mut trial = mats.clone();
                    let cur = trial[s].get(a, b);
                    trial[s].set(a, b, cur + dir * h);
                    let value = fit_objective(&with_site(psi, site, trial)?, data)?;
                    let g = grad[s].get(a, b);
                    grad[s].set(a, b, g + dir * ((value - current) / h));
                }
            }
        }
    }
    let gnorm = grad
        .iter()
        .map(|m| m.frobenius_norm().powi(2))
        .sum::<f64>()
        .sqrt();
    if !(gnorm > 0.0) || !gnorm.is_finite() {
        return Ok((psi.clone(), current));
    }
    let mut step = 0.25 * scale / gnorm;
    for _ in 0..LINE_SEARCH_HALVINGS {
        let trial: Vec<CMatrix> = mats
            .iter()
            .zip(&grad)
            .map(|(m, g)| m - &g.scale_real(step))
            .collect();
        let candidate = with_site(psi, site, trial)?;
        if candidate.norm_sqr() > 0.0 {
            let value = fit_objective(&candidate, data)?;
            if value <= current {
                return Ok((candidate, value));
            }
        }
        step *= 0.5;
    }
    Ok((psi.clone(), current))
}
