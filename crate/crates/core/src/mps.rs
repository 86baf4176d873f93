//! Matrix product states with a trace closure,
//! `|Ψ> = Σ Tr[A_1^{s_1} ··· A_n^{s_n}] |s_1 … s_n>`.
//!
//! Bond dimensions are stored explicitly (`n + 1` of them, first equal to
//! last). An open chain has boundary bond dimension 1, in which case the trace
//! is just the scalar product. Site indices in this module are 0-based.
//!
//! The canonical gauge used throughout is `Σ_s A^s (A^s)^† = 1` at every site.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_traits::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{config, contract, Error, Result};
use crate::linalg::{self, c64, CMatrix, C64};

/// Default cap on the number of amplitudes a dense expansion may hold.
pub const DENSE_CAP: usize = 1 << 20;

/// Tolerance on `Σ_s A^s (A^s)^† = 1` accepted as canonical.
pub const CANONICAL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Canonical {
    None,
    Left,
}

#[derive(Clone, Debug)]
pub struct MpsState {
    d: usize,
    bond_dims: Vec<usize>,
    /// `tensors[site][s]` has shape `bond_dims[site] x bond_dims[site + 1]`.
    tensors: Vec<Vec<CMatrix>>,
    canonical: Canonical,
}

/// Full amplitude vector, first site most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseState {
    pub n: usize,
    pub d: usize,
    pub amplitudes: Vec<C64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NamedState {
    Ghz,
    GhzPhase(f64),
    W,
    Cluster,
    Aklt,
    Random { seed: u64, bond_dim: usize },
}

impl MpsState {
    pub fn new(d: usize, bond_dims: Vec<usize>, tensors: Vec<Vec<CMatrix>>) -> Result<Self> {
        let n = tensors.len();
        if n == 0 {
            return Err(contract("an MPS needs at least one site"));
        }
        if d == 0 {
            return Err(contract("physical dimension must be positive"));
        }
        if bond_dims.len() != n + 1 {
            return Err(contract(format!(
                "{} bond dimensions for {n} sites",
                bond_dims.len()
            )));
        }
        if bond_dims.iter().any(|&b| b == 0) {
            return Err(contract("bond dimensions must be positive"));
        }
        if bond_dims[0] != bond_dims[n] {
            return Err(contract(format!(
                "trace closure needs matching boundary bonds, got {} and {}",
                bond_dims[0], bond_dims[n]
            )));
        }
        for (site, mats) in tensors.iter().enumerate() {
            if mats.len() != d {
                return Err(contract(format!(
                    "site {site} has {} matrices, expected {d}",
                    mats.len()
                )));
            }
            for m in mats {
                if m.shape() != (bond_dims[site], bond_dims[site + 1]) {
                    return Err(contract(format!(
                        "site {site}: tensor shape {:?}, expected {:?}",
                        m.shape(),
                        (bond_dims[site], bond_dims[site + 1])
                    )));
                }
                if !m.is_finite() {
                    return Err(contract(format!("site {site}: non-finite entry")));
                }
            }
        }
        Ok(MpsState {
            d,
            bond_dims,
            tensors,
            canonical: Canonical::None,
        })
    }

    pub fn n(&self) -> usize {
        self.tensors.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn bond_dims(&self) -> &[usize] {
        &self.bond_dims
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims.iter().copied().max().unwrap_or(1)
    }

    pub fn tensors(&self) -> &[Vec<CMatrix>] {
        &self.tensors
    }

    pub fn tensor(&self, site: usize, s: usize) -> &CMatrix {
        &self.tensors[site][s]
    }

    pub fn canonical(&self) -> Canonical {
        self.canonical
    }

    /// True when the boundary bond is 1, i.e. the trace closure is a scalar.
    pub fn is_open(&self) -> bool {
        self.bond_dims[0] == 1
    }

    /// Largest deviation of `Σ_s A^s (A^s)^†` from the identity over all sites.
    pub fn canonical_defect(&self) -> f64 {
        self.tensors
            .iter()
            .map(|mats| {
                let rows = mats[0].rows();
                let mut acc = DMatrix::<C64>::zeros(rows, rows);
                for a in mats {
                    acc += a.as_matrix() * a.as_matrix().adjoint();
                }
                acc -= DMatrix::identity(rows, rows);
                acc.iter().map(|z| z.norm()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    fn require_canonical(&self, op: &str) -> Result<()> {
        if self.canonical != Canonical::Left {
            return Err(contract(format!("{op} requires a canonicalized MPS")));
        }
        Ok(())
    }

    /// `<Ψ|Ψ>` by transfer contraction.
    pub fn norm_sqr(&self) -> f64 {
        Chain::new(self).norm_sqr()
    }

    /// Brings every site into the gauge `Σ_s A^s (A^s)^† = 1` by a right-to-left
    /// sweep of SVDs, pushing the remainder into the neighbouring site. The
    /// physical state is unchanged up to normalization.
    pub fn canonicalize(&self) -> Result<MpsState> {
        let norm = self.norm_sqr();
        if !(norm > 1e-300) || !norm.is_finite() {
            return Err(Error::DegenerateInput("canonicalize: zero state".into()));
        }
        let mut out = self.clone();
        let closure = out.bond_dims[0];
        if closure == 1 {
            out.sweep_right_to_left()?;
            let first = &mut out.tensors[0];
            let total: f64 = first.iter().map(|a| a.frobenius_norm().powi(2)).sum();
            let scale = total.sqrt().recip();
            for a in first.iter_mut() {
                *a = a.scale_real(scale);
            }
        } else {
            // The leftover on the closed bond is moved around the ring until it
            // is proportional to a unitary, which preserves the gauge.
            let mut converged = false;
            for _ in 0..500 {
                out.sweep_right_to_left()?;
                let d = out.d;
                let cols = d * out.bond_dims[1];
                if cols < closure {
                    return Err(Error::DegenerateInput(format!(
                        "canonicalize: closure bond {closure} exceeds site-0 rank bound {cols}"
                    )));
                }
                let m = unfold_rows(&out.tensors[0], closure, out.bond_dims[1]);
                let dec = linalg::svd(&m)?;
                let smax = dec.s[0];
                if smax <= 0.0 {
                    return Err(Error::DegenerateInput("canonicalize: zero state".into()));
                }
                out.tensors[0] = fold_rows(&dec.v.adjoint(), d, out.bond_dims[1]);
                let rest = CMatrix::from_fn(closure, closure, |i, j| {
                    dec.u.get(i, j) * (dec.s[j] / smax)
                });
                let last = out.n() - 1;
                for a in out.tensors[last].iter_mut() {
                    *a = a.matmul(&rest);
                }
                if dec.s[closure - 1] / smax > 1.0 - 1e-14 {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::DegenerateInput(
                    "canonicalize: trace-closed MPS has no uniform canonical gauge".into(),
                ));
            }
        }
        out.canonical = Canonical::Left;
        Ok(out)
    }

    /// Sites n-1 .. 1 become canonical; the remainder accumulates in site 0.
    fn sweep_right_to_left(&mut self) -> Result<()> {
        let d = self.d;
        for site in (1..self.n()).rev() {
            let rows = self.bond_dims[site];
            let right = self.bond_dims[site + 1];
            let m = unfold_rows(&self.tensors[site], rows, right);
            let dec = linalg::svd(&m)?;
            let k = dec.s.len();
            let smax = dec.s[0].max(f64::MIN_POSITIVE);
            self.tensors[site] = fold_rows(&dec.v.adjoint(), d, right);
            let us = CMatrix::from_fn(rows, k, |i, j| dec.u.get(i, j) * (dec.s[j] / smax));
            for a in self.tensors[site - 1].iter_mut() {
                *a = a.matmul(&us);
            }
            self.bond_dims[site] = k;
        }
        Ok(())
    }

    /// Groups `k` contiguous sites into one site of dimension `d^k`.
    pub fn block(&self, k: usize) -> Result<MpsState> {
        let n = self.n();
        if k == 0 || n % k != 0 {
            return Err(config(format!("block size {k} does not divide {n} sites")));
        }
        if k == 1 {
            return Ok(self.clone());
        }
        let big_d = self.d.checked_pow(k as u32).ok_or_else(|| config("d^k overflows"))?;
        let mut tensors = Vec::with_capacity(n / k);
        let mut bond_dims = Vec::with_capacity(n / k + 1);
        for b in 0..n / k {
            bond_dims.push(self.bond_dims[b * k]);
            let mut mats: Vec<CMatrix> = self.tensors[b * k].clone();
            for site in b * k + 1..(b + 1) * k {
                let mut next = Vec::with_capacity(mats.len() * self.d);
                for m in &mats {
                    for a in &self.tensors[site] {
                        next.push(m.matmul(a));
                    }
                }
                mats = next;
            }
            debug_assert_eq!(mats.len(), big_d);
            tensors.push(mats);
        }
        bond_dims.push(self.bond_dims[n]);
        let mut out = MpsState::new(big_d, bond_dims, tensors)?;
        out.canonical = self.canonical;
        Ok(out)
    }

    /// Reduced density matrix on sites `site .. site + width` (0-based),
    /// computed by transfer contraction.
    pub fn reduction(&self, site: usize, width: usize) -> Result<CMatrix> {
        let k = self.reduction_factor(site, width)?;
        Ok(k.matmul(&k.adjoint()))
    }

    /// A factor `K` with `reduction(site, width) = K K^†`. Its column count is
    /// at most the product of the two bond dimensions bracketing the window.
    pub fn reduction_factor(&self, site: usize, width: usize) -> Result<CMatrix> {
        self.require_canonical("reduction")?;
        self.check_window(site, width)?;
        Chain::new(self).reduction_factor(site, width)
    }

    fn check_window(&self, site: usize, width: usize) -> Result<()> {
        if width == 0 || site + width > self.n() {
            return Err(contract(format!(
                "window of width {width} at site {site} exceeds {} sites",
                self.n()
            )));
        }
        Ok(())
    }

    /// Reduction factors of all `n - 1` nearest-neighbour windows.
    pub fn pair_reduction_factors(&self) -> Result<Vec<CMatrix>> {
        self.require_canonical("reduction")?;
        Ok(Chain::new(self).all_pair_factors())
    }

    /// Same as [`pair_reduction_factors`](Self::pair_reduction_factors) without
    /// the gauge requirement; used by the reconstruction sweeps.
    pub(crate) fn pair_reductions_any_gauge(&self) -> Vec<CMatrix> {
        Chain::new(self)
            .all_pair_factors()
            .iter()
            .map(|k| k.matmul(&k.adjoint()))
            .collect()
    }

    /// `<Ψ| O_1 ⊗ … ⊗ O_n |Ψ> / <Ψ|Ψ>`.
    pub fn expectation_product(&self, ops: &[CMatrix]) -> Result<C64> {
        if ops.len() != self.n() {
            return Err(contract(format!(
                "{} operators for {} sites",
                ops.len(),
                self.n()
            )));
        }
        if let Some(bad) = ops.iter().position(|o| o.shape() != (self.d, self.d)) {
            return Err(contract(format!(
                "operator {bad} has shape {:?}, expected {}x{}",
                ops[bad].shape(),
                self.d,
                self.d
            )));
        }
        let chain = Chain::new(self);
        let norm = chain.norm_sqr();
        if !(norm > 0.0) {
            return Err(Error::DegenerateInput("expectation of a zero state".into()));
        }
        let mut env = DMatrix::<C64>::from_element(1, 1, C64::one());
        for (site, op) in ops.iter().enumerate() {
            let t = &chain.tensors[site];
            let cols = t[0].ncols();
            let mut next = DMatrix::<C64>::zeros(cols, cols);
            for (s, ts) in t.iter().enumerate() {
                let env_ts = &env * ts;
                for (sp, tsp) in t.iter().enumerate() {
                    let w = op.get(sp, s);
                    if w != C64::zero() {
                        next += (tsp.adjoint() * &env_ts) * w;
                    }
                }
            }
            env = next;
        }
        Ok(env[(0, 0)] / norm)
    }

    /// Dense normalized amplitude vector.
    pub fn to_dense(&self) -> Result<DenseState> {
        self.to_dense_capped(DENSE_CAP)
    }

    pub fn to_dense_capped(&self, cap: usize) -> Result<DenseState> {
        let n = self.n();
        let total = self
            .d
            .checked_pow(n as u32)
            .filter(|&t| t <= cap)
            .ok_or(Error::OracleCap {
                requested: (self.d as f64).powi(n as i32).min(usize::MAX as f64) as usize,
                cap,
            })?;
        let chain = Chain::new(self);
        // partial[config] is the row vector v(s_1..s_j)
        let mut partial: Vec<DMatrix<C64>> = vec![DMatrix::from_element(1, 1, C64::one())];
        for site in 0..n {
            let mut next = Vec::with_capacity(partial.len() * self.d);
            for v in &partial {
                for t in &chain.tensors[site] {
                    next.push(v * t);
                }
            }
            partial = next;
        }
        debug_assert_eq!(partial.len(), total);
        let mut amplitudes: Vec<C64> = partial.iter().map(|v| v[(0, 0)]).collect();
        let norm = linalg::vec_norm(&amplitudes);
        if !(norm > 0.0) {
            return Err(Error::DegenerateInput("dense expansion of a zero state".into()));
        }
        for a in amplitudes.iter_mut() {
            *a /= norm;
        }
        Ok(DenseState {
            n,
            d: self.d,
            amplitudes,
        })
    }

    /// A random MPS with i.i.d. complex Gaussian entries (unit variance), with
    /// open boundaries and bond dimensions `min(bond_dim, d^j, d^(n-j))`.
    pub fn random(n: usize, d: usize, bond_dim: usize, seed: u64) -> Result<MpsState> {
        if n == 0 || d == 0 || bond_dim == 0 {
            return Err(config("random MPS needs n, d, bond_dim >= 1"));
        }
        let bond_dims = open_bond_profile(n, d, bond_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = core::f64::consts::FRAC_1_SQRT_2;
        let tensors = (0..n)
            .map(|site| {
                (0..d)
                    .map(|_| {
                        CMatrix::from_fn(bond_dims[site], bond_dims[site + 1], |_, _| {
                            let re: f64 = StandardNormal.sample(&mut rng);
                            let im: f64 = StandardNormal.sample(&mut rng);
                            c64(re * scale, im * scale)
                        })
                    })
                    .collect()
            })
            .collect();
        MpsState::new(d, bond_dims, tensors)?.canonicalize()
    }
}

/// `min(bond_dim, d^j, d^(n-j))` for `j = 0..=n`.
pub fn open_bond_profile(n: usize, d: usize, bond_dim: usize) -> Vec<usize> {
    let cap = |k: usize| -> usize {
        let mut p = 1usize;
        for _ in 0..k {
            p = p.saturating_mul(d);
            if p >= bond_dim {
                return bond_dim;
            }
        }
        p.min(bond_dim)
    };
    (0..=n).map(|j| cap(j).min(cap(n - j))).collect()
}

/// Builds one of the standard example states, canonicalized.
pub fn named_state(name: NamedState, n: usize, d: usize) -> Result<MpsState> {
    if n == 0 {
        return Err(config("named state needs at least one site"));
    }
    let need = |want: usize, label: &str| -> Result<()> {
        if d != want {
            return Err(config(format!("{label} requires d = {want}, got {d}")));
        }
        Ok(())
    };
    let state = match name {
        NamedState::Ghz => {
            need(2, "ghz")?;
            ghz(n, 0.0)?
        }
        NamedState::GhzPhase(phi) => {
            need(2, "ghz_phase")?;
            ghz(n, phi)?
        }
        NamedState::W => {
            need(2, "w")?;
            let a0 = CMatrix::identity(2);
            let a1 = CMatrix::from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]);
            open_uniform(n, &[a0, a1], &[1.0, 0.0], &[0.0, 1.0])?
        }
        NamedState::Cluster => {
            need(2, "cluster")?;
            // bond index carries the previous spin; A^s[a, b] = δ_{b s} (-1)^{a s} / √2
            let h = core::f64::consts::FRAC_1_SQRT_2;
            let a0 = CMatrix::from_real(2, 2, &[h, 0.0, h, 0.0]);
            let a1 = CMatrix::from_real(2, 2, &[0.0, h, 0.0, -h]);
            open_uniform(n, &[a0, a1], &[1.0, 0.0], &[1.0, 1.0])?
        }
        NamedState::Aklt => {
            need(3, "aklt")?;
            open_uniform(n, &aklt_matrices(), &[1.0, 0.0], &[1.0, 0.0])?
        }
        NamedState::Random { seed, bond_dim } => return MpsState::random(n, d, bond_dim, seed),
    };
    state.canonicalize()
}

/// AKLT matrices for spin-1 basis order (m = +1, 0, -1); they already satisfy
/// `Σ_s A^s (A^s)^† = 1`.
pub fn aklt_matrices() -> [CMatrix; 3] {
    let p = (2.0f64 / 3.0).sqrt();
    let z = (1.0f64 / 3.0).sqrt();
    [
        CMatrix::from_real(2, 2, &[0.0, p, 0.0, 0.0]),
        CMatrix::from_real(2, 2, &[-z, 0.0, 0.0, z]),
        CMatrix::from_real(2, 2, &[0.0, 0.0, -p, 0.0]),
    ]
}

fn ghz(n: usize, phi: f64) -> Result<MpsState> {
    let a0 = CMatrix::from_diagonal(&[1.0, 0.0]);
    let a1 = CMatrix::from_diagonal(&[0.0, 1.0]);
    let mut tensors = vec![vec![a0, a1]; n];
    let mut phased = CMatrix::zeros(2, 2);
    phased.set(1, 1, C64::from_polar(1.0, phi));
    tensors[n - 1][1] = phased;
    MpsState::new(2, vec![2; n + 1], tensors)
}

/// Translation-invariant bulk matrices with boundary vectors absorbed into the
/// first and last sites.
fn open_uniform(n: usize, mats: &[CMatrix], left: &[f64], right: &[f64]) -> Result<MpsState> {
    let dd = mats[0].rows();
    let l = CMatrix::from_real(1, dd, left);
    let r = CMatrix::from_real(dd, 1, right);
    let d = mats.len();
    let mut tensors = Vec::with_capacity(n);
    for site in 0..n {
        let site_mats = mats
            .iter()
            .map(|a| {
                let mut m = a.clone();
                if site == 0 {
                    m = l.matmul(&m);
                }
                if site == n - 1 {
                    m = m.matmul(&r);
                }
                m
            })
            .collect();
        tensors.push(site_mats);
    }
    let mut bond_dims = vec![dd; n + 1];
    bond_dims[0] = 1;
    bond_dims[n] = 1;
    MpsState::new(d, bond_dims, tensors)
}

/// Site tensor as a `rows x (d * cols)` matrix, column index `s * cols + b`.
pub(crate) fn unfold_rows(mats: &[CMatrix], rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, mats.len() * cols, |a, sb| mats[sb / cols].get(a, sb % cols))
}

/// Inverse of [`unfold_rows`].
pub(crate) fn fold_rows(m: &CMatrix, d: usize, cols: usize) -> Vec<CMatrix> {
    (0..d)
        .map(|s| CMatrix::from_fn(m.rows(), cols, |a, b| m.get(a, s * cols + b)))
        .collect()
}

/// Site tensor as a `(rows * d) x cols` matrix, row index `a * d + s`.
pub(crate) fn unfold_cols(mats: &[CMatrix], rows: usize, cols: usize) -> CMatrix {
    let d = mats.len();
    CMatrix::from_fn(rows * d, cols, |as_, b| mats[as_ % d].get(as_ / d, b))
}

/// Inverse of [`unfold_cols`].
pub(crate) fn fold_cols(m: &CMatrix, d: usize, rows: usize) -> Vec<CMatrix> {
    (0..d)
        .map(|s| CMatrix::from_fn(rows, m.cols(), |a, b| m.get(a * d + s, b)))
        .collect()
}

/// Open-chain view of an MPS: for a trace closure of dimension `c > 1` the
/// closure index is carried along every bond, so bond dimensions become
/// `c * D_j` and the boundary bonds become 1.
pub(crate) struct Chain {
    pub tensors: Vec<Vec<DMatrix<C64>>>,
}

impl Chain {
    pub fn new(psi: &MpsState) -> Chain {
        let c = psi.bond_dims[0];
        let n = psi.n();
        if c == 1 {
            return Chain {
                tensors: psi
                    .tensors
                    .iter()
                    .map(|mats| mats.iter().map(|m| m.as_matrix().clone()).collect())
                    .collect(),
            };
        }
        let tensors = (0..n)
            .map(|site| {
                psi.tensors[site]
                    .iter()
                    .map(|m| {
                        let a = m.as_matrix();
                        let (r, q) = a.shape();
                        if n == 1 {
                            // Tr[A] as a 1x1 matrix
                            return DMatrix::from_element(1, 1, a.trace());
                        }
                        if site == 0 {
                            DMatrix::from_fn(1, c * q, |_, ab| a[(ab / q, ab % q)])
                        } else if site == n - 1 {
                            DMatrix::from_fn(c * r, 1, |aa, _| a[(aa % r, aa / r)])
                        } else {
                            DMatrix::<C64>::identity(c, c).kronecker(a)
                        }
                    })
                    .collect()
            })
            .collect();
        Chain { tensors }
    }

    pub fn n(&self) -> usize {
        self.tensors.len()
    }

    /// `left[j]` sums the left block over sites `0..j`; `left[0] = [1]`.
    pub fn left_envs(&self) -> Vec<DMatrix<C64>> {
        let mut envs = Vec::with_capacity(self.n() + 1);
        envs.push(DMatrix::from_element(1, 1, C64::one()));
        for mats in &self.tensors {
            let prev = envs.last().unwrap();
            let cols = mats[0].ncols();
            let mut next = DMatrix::<C64>::zeros(cols, cols);
            for t in mats {
                next += t.adjoint() * prev * t;
            }
            envs.push(next);
        }
        envs
    }

    /// `right[j]` sums the right block over sites `j..n`; `right[n] = [1]`.
    pub fn right_envs(&self) -> Vec<DMatrix<C64>> {
        let n = self.n();
        let mut envs = vec![DMatrix::<C64>::zeros(0, 0); n + 1];
        envs[n] = DMatrix::from_element(1, 1, C64::one());
        for site in (0..n).rev() {
            let rows = self.tensors[site][0].nrows();
            let mut next = DMatrix::<C64>::zeros(rows, rows);
            for t in &self.tensors[site] {
                next += t * &envs[site + 1] * t.adjoint();
            }
            envs[site] = next;
        }
        envs
    }

    pub fn norm_sqr(&self) -> f64 {
        self.left_envs().last().unwrap()[(0, 0)].re
    }

    pub fn reduction_factor(&self, site: usize, width: usize) -> Result<CMatrix> {
        let left = self.left_envs();
        let right = self.right_envs();
        let norm = left[self.n()][(0, 0)].re;
        if !(norm > 0.0) {
            return Err(Error::DegenerateInput("reduction of a zero state".into()));
        }
        Ok(self.window_factor(&left[site], &right[site + width], site, width, norm))
    }

    pub fn all_pair_factors(&self) -> Vec<CMatrix> {
        let left = self.left_envs();
        let right = self.right_envs();
        let norm = left[self.n()][(0, 0)].re;
        (0..self.n().saturating_sub(1))
            .map(|j| self.window_factor(&left[j], &right[j + 2], j, 2, norm))
            .collect()
    }

    fn window_factor(
        &self,
        left: &DMatrix<C64>,
        right: &DMatrix<C64>,
        site: usize,
        width: usize,
        norm: f64,
    ) -> CMatrix {
        let l = psd_factor(left);
        let r = psd_factor(right);
        // rows[config] = l^† W^config
        let mut rows: Vec<DMatrix<C64>> = vec![l.adjoint()];
        for k in site..site + width {
            let mut next = Vec::with_capacity(rows.len() * self.tensors[k].len());
            for m in &rows {
                for t in &self.tensors[k] {
                    next.push(m * t);
                }
            }
            rows = next;
        }
        let rl = l.ncols();
        let rr = r.ncols();
        let scale = norm.sqrt().recip();
        let mut out = CMatrix::zeros(rows.len(), rl * rr);
        for (cfg, m) in rows.iter().enumerate() {
            let block = m * &r;
            for a in 0..rl {
                for c in 0..rr {
                    out.set(cfg, a * rr + c, block[(a, c)] * scale);
                }
            }
        }
        out
    }
}

/// `f` with `f f^† = m` for a Hermitian PSD `m`, dropping numerically null directions.
fn psd_factor(m: &DMatrix<C64>) -> DMatrix<C64> {
    let n = m.nrows();
    if n == 1 {
        return DMatrix::from_element(1, 1, c64(m[(0, 0)].re.max(0.0).sqrt(), 0.0));
    }
    let herm = (m + m.adjoint()) * c64(0.5, 0.0);
    let dec = herm.symmetric_eigen();
    let top = dec.eigenvalues.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..n)
        .filter(|&i| dec.eigenvalues[i] > top * 1e-15)
        .collect();
    if keep.is_empty() {
        return DMatrix::zeros(n, 1);
    }
    DMatrix::from_fn(n, keep.len(), |i, j| {
        dec.eigenvectors[(i, keep[j])] * dec.eigenvalues[keep[j]].sqrt()
    })
}

impl DenseState {
    pub fn new(n: usize, d: usize, amplitudes: Vec<C64>) -> Result<Self> {
        if d.checked_pow(n as u32) != Some(amplitudes.len()) {
            return Err(contract(format!(
                "{} amplitudes for {n} sites of dimension {d}",
                amplitudes.len()
            )));
        }
        let norm = linalg::vec_norm(&amplitudes);
        if (norm - 1.0).abs() > 1e-10 {
            return Err(contract(format!("dense state has norm {norm}")));
        }
        Ok(DenseState { n, d, amplitudes })
    }

    /// `<self|other>`
    pub fn overlap(&self, other: &DenseState) -> C64 {
        linalg::vdot(&self.amplitudes, &other.amplitudes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{dense_expectation_product, dense_reduction};

    fn close(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
        a.shape() == b.shape() && (a - b).max_abs() <= tol
    }

    fn fidelity(a: &DenseState, b: &DenseState) -> f64 {
        a.overlap(b).norm()
    }

    fn pauli_x() -> CMatrix {
        CMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0])
    }

    fn pauli_z() -> CMatrix {
        CMatrix::from_diagonal(&[1.0, -1.0])
    }

    #[test]
    fn ghz_is_already_canonical() {
        let raw = ghz(4, 0.0).unwrap();
        assert!(raw.canonical_defect() < 1e-14);
        let can = raw.canonicalize().unwrap();
        assert!(can.canonical_defect() < 1e-12);
        let f = fidelity(&raw.to_dense().unwrap(), &can.to_dense().unwrap());
        assert!((f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_canonical_identity() {
        for seed in 0..5 {
            let psi = MpsState::random(6, 2, 3, seed).unwrap();
            assert_eq!(psi.canonical(), Canonical::Left);
            assert!(psi.canonical_defect() < 1e-12);
            assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn product_state_canonicalizes_to_unit_vectors() {
        let psi = MpsState::random(5, 3, 1, 9).unwrap();
        assert_eq!(psi.max_bond_dim(), 1);
        for mats in psi.tensors() {
            let w: f64 = mats.iter().map(|a| a.get(0, 0).norm_sqr()).sum();
            assert!((w - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn canonicalize_rejects_zero_state() {
        let z = CMatrix::zeros(1, 1);
        let psi = MpsState::new(2, vec![1, 1], vec![vec![z.clone(), z]]).unwrap();
        assert!(matches!(psi.canonicalize(), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn dense_expansions_of_named_states() {
        let h = core::f64::consts::FRAC_1_SQRT_2;
        let ghz3 = named_state(NamedState::Ghz, 3, 2).unwrap().to_dense().unwrap();
        let mut want = vec![C64::zero(); 8];
        want[0] = c64(h, 0.0);
        want[7] = c64(h, 0.0);
        assert!(fidelity(&ghz3, &DenseState::new(3, 2, want).unwrap()) > 1.0 - 1e-12);

        let w3 = named_state(NamedState::W, 3, 2).unwrap().to_dense().unwrap();
        let t = (1.0f64 / 3.0).sqrt();
        let mut want = vec![C64::zero(); 8];
        for idx in [4, 2, 1] {
            want[idx] = c64(t, 0.0);
        }
        assert!(fidelity(&w3, &DenseState::new(3, 2, want).unwrap()) > 1.0 - 1e-12);
    }

    #[test]
    fn cluster_state_amplitudes() {
        let n = 4;
        let dense = named_state(NamedState::Cluster, n, 2).unwrap().to_dense().unwrap();
        let amp = 0.25;
        let want: Vec<C64> = (0..16usize)
            .map(|idx| {
                let bits: Vec<usize> = (0..n).map(|k| (idx >> (n - 1 - k)) & 1).collect();
                let parity: usize = bits.windows(2).map(|w| w[0] * w[1]).sum();
                c64(if parity % 2 == 0 { amp } else { -amp }, 0.0)
            })
            .collect();
        assert!(fidelity(&dense, &DenseState::new(n, 2, want).unwrap()) > 1.0 - 1e-12);
    }

    #[test]
    fn product_state_dense_is_tensor_product() {
        let psi = MpsState::random(3, 2, 1, 4).unwrap();
        let v: Vec<Vec<C64>> = psi.tensors().iter().map(|m| vec![m[0].get(0, 0), m[1].get(0, 0)]).collect();
        let dense = psi.to_dense().unwrap();
        for idx in 0..8usize {
            let want = v[0][idx >> 2] * v[1][(idx >> 1) & 1] * v[2][idx & 1];
            assert!((dense.amplitudes[idx] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn dense_cap_is_enforced() {
        let psi = named_state(NamedState::Aklt, 8, 3).unwrap();
        assert!(matches!(psi.to_dense_capped(1000), Err(Error::OracleCap { cap: 1000, .. })));
    }

    #[test]
    fn block_preserves_state() {
        let ghz4 = named_state(NamedState::Ghz, 4, 2).unwrap();
        let b = ghz4.block(2).unwrap();
        assert_eq!((b.n(), b.d()), (2, 4));
        assert!(fidelity(&b.to_dense().unwrap(), &ghz4.to_dense().unwrap()) > 1.0 - 1e-12);

        let same = ghz4.block(1).unwrap();
        assert_eq!(same.tensors(), ghz4.tensors());

        let aklt = named_state(NamedState::Aklt, 6, 3).unwrap();
        let b = aklt.block(2).unwrap();
        assert_eq!((b.n(), b.d(), b.max_bond_dim()), (3, 9, 2));
        assert!(b.canonical_defect() < 1e-12);

        assert!(matches!(aklt.block(4), Err(Error::Configuration(_))));
    }

    #[test]
    fn ghz_pair_reduction() {
        let ghz4 = named_state(NamedState::Ghz, 4, 2).unwrap();
        let rho = ghz4.reduction(0, 2).unwrap();
        let want = CMatrix::from_diagonal(&[0.5, 0.0, 0.0, 0.5]);
        assert!(close(&rho, &want, 1e-12));
        let oracle = dense_reduction(&ghz4.to_dense().unwrap(), 0, 2).unwrap();
        assert!(close(&rho, &oracle, 1e-12));
    }

    #[test]
    fn product_state_reduction_is_pure() {
        let zero = CMatrix::from_real(1, 1, &[1.0]);
        let one = CMatrix::from_real(1, 1, &[0.0]);
        let psi = MpsState::new(2, vec![1; 6], vec![vec![zero, one]; 5])
            .unwrap()
            .canonicalize()
            .unwrap();
        for j in 0..4 {
            let rho = psi.reduction(j, 2).unwrap();
            assert!(close(&rho, &CMatrix::from_diagonal(&[1.0, 0.0, 0.0, 0.0]), 1e-12));
        }
    }

    #[test]
    fn aklt_pair_reductions() {
        let psi = named_state(NamedState::Aklt, 8, 3).unwrap();
        assert_eq!(psi.max_bond_dim(), 2);
        let dense = psi.to_dense().unwrap();
        for j in 0..7 {
            let rho = psi.reduction(j, 2).unwrap();
            let oracle = dense_reduction(&dense, j, 2).unwrap();
            assert!(close(&rho, &oracle, 1e-10));
            let rank = linalg::eigvalsh(&rho).unwrap().iter().filter(|&&x| x > 1e-9).count();
            // edge spins pin the boundary windows to rank D = 2
            let want = if j == 0 || j == 6 { 2 } else { 4 };
            assert_eq!(rank, want, "window {j}");
        }
    }

    #[test]
    fn reduction_requires_canonical_form() {
        let psi = ghz(3, 0.0).unwrap();
        assert!(matches!(psi.reduction(0, 2), Err(Error::ContractViolation(_))));
        let can = psi.canonicalize().unwrap();
        assert!(matches!(can.reduction(2, 2), Err(Error::ContractViolation(_))));
    }

    #[test]
    fn string_operator_on_phased_ghz() {
        for phi in [0.0, 0.3, core::f64::consts::FRAC_PI_2, 2.0] {
            for n in 3..=6 {
                let psi = named_state(NamedState::GhzPhase(phi), n, 2).unwrap();
                let e = psi.expectation_product(&vec![pauli_x(); n]).unwrap();
                assert!((e.re - phi.cos()).abs() < 1e-12 && e.im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn expectation_edge_cases() {
        let psi = named_state(NamedState::Ghz, 3, 2).unwrap();
        let id = psi.expectation_product(&vec![CMatrix::identity(2); 3]).unwrap();
        assert!((id - C64::one()).norm() < 1e-12);
        let z = psi
            .expectation_product(&[pauli_z(), CMatrix::identity(2), CMatrix::identity(2)])
            .unwrap();
        assert!(z.norm() < 1e-12);
        assert!(psi.expectation_product(&[pauli_z()]).is_err());
        assert!(psi
            .expectation_product(&vec![CMatrix::identity(3); 3])
            .is_err());
    }

    #[test]
    fn named_state_parameter_checks() {
        assert!(matches!(named_state(NamedState::Aklt, 4, 2), Err(Error::Configuration(_))));
        assert!(matches!(named_state(NamedState::Ghz, 4, 3), Err(Error::Configuration(_))));
        assert!(matches!(named_state(NamedState::W, 0, 2), Err(Error::Configuration(_))));
    }

    #[test]
    fn constructor_validates_shapes() {
        let a = CMatrix::zeros(1, 2);
        assert!(MpsState::new(2, vec![1, 2], vec![vec![a.clone(), a.clone()]]).is_err());
        assert!(MpsState::new(2, vec![1, 2, 1], vec![vec![a.clone()], vec![a]]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn reductions_match_dense_partial_traces(
                n in 2usize..7, d in 2usize..4, bond in 1usize..4, seed in any::<u64>()
            ) {
                let psi = MpsState::random(n, d, bond, seed).unwrap();
                let dense = psi.to_dense().unwrap();
                for width in 1..=3usize.min(n) {
                    for j in 0..=n - width {
                        let rho = psi.reduction(j, width).unwrap();
                        let oracle = dense_reduction(&dense, j, width).unwrap();
                        prop_assert!(close(&rho, &oracle, 1e-9));
                    }
                }
            }

            #[test]
            fn canonicalize_preserves_state(
                n in 1usize..7, bond in 1usize..4, seed in any::<u64>()
            ) {
                let raw = {
                    let can = MpsState::random(n, 2, bond, seed).unwrap();
                    // undo the gauge with random invertible scalings
                    let mut t = can.tensors().to_vec();
                    for (k, site) in t.iter_mut().enumerate() {
                        for a in site.iter_mut() {
                            *a = a.scale_real(1.0 + 0.3 * k as f64);
                        }
                    }
                    MpsState::new(2, can.bond_dims().to_vec(), t).unwrap()
                };
                let can = raw.canonicalize().unwrap();
                prop_assert!(can.canonical_defect() < 1e-12);
                let f = fidelity(&raw.to_dense().unwrap(), &can.to_dense().unwrap());
                prop_assert!((f - 1.0).abs() < 1e-9);
            }

            #[test]
            fn block_commutes_with_dense_expansion(
                blocks in 1usize..4, k in 1usize..4, bond in 1usize..4, seed in any::<u64>()
            ) {
                let psi = MpsState::random(blocks * k, 2, bond, seed).unwrap();
                let a = psi.to_dense().unwrap();
                let b = psi.block(k).unwrap().to_dense().unwrap();
                let diff = a.amplitudes.iter().zip(&b.amplitudes).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
                prop_assert!(diff <= 1e-10);
            }

            #[test]
            fn expectation_matches_dense(n in 1usize..6, bond in 1usize..4, seed in any::<u64>()) {
                let psi = MpsState::random(n, 2, bond, seed).unwrap();
                let ops: Vec<CMatrix> = (0..n)
                    .map(|k| {
                        let t = (seed.wrapping_add(k as u64) % 97) as f64 / 97.0;
                        CMatrix::from_fn(2, 2, |i, j| c64(t + i as f64, t * j as f64 - 0.2))
                    })
                    .collect();
                let e = psi.expectation_product(&ops).unwrap();
                let oracle = dense_expectation_product(&psi.to_dense().unwrap(), &ops).unwrap();
                prop_assert!((e - oracle).norm() <= 1e-9 * oracle.norm().max(1.0));
            }
        }
    }
}
