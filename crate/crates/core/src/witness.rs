//! Certification of an MPS estimate against tomography data.
//!
//! The estimate's parent Hamiltonian `H = Σ_j h_j` serves as a witness: `h_j`
//! projects onto the kernel of the estimate's reduction on the pair of sites
//! `(j, j+1)`. If the two-site maps `Γ_j` are injective, the ground state of
//! `H` is unique, and the canonical angles between neighbouring kernels bound
//! the spectral gap from below by `1 - 2γ`. Together with the data this yields
//! `τ = Σ_j (Tr[h_j σ_j] + ε_j) / gap` and the fidelity bound `F ≥ √(1 - τ)`.
//!
//! Bonds and windows are labelled `j = 1 … n-1` (1-based), matching the
//! tomography file format.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{contract, Error, Result};
use crate::linalg::{self, CMatrix, C64};
use crate::mps::{Canonical, MpsState};
use crate::tomo::TomographyData;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thresholds {
    /// Smallest singular value of every `Γ_j` must reach this.
    pub gamma_threshold: f64,
    /// Reduction eigenvalues at or below this belong to the kernel.
    pub rank_tol: f64,
    /// Eigenvalues of `h_j h_{j+1} h_j` at or above `1 - one_tol` count as one.
    pub one_tol: f64,
    /// Eigenvalues of the restricted parent Hamiltonian below this count as zero
    /// in the ground-space dimension check.
    pub ground_tol: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            gamma_threshold: 1e-6,
            rank_tol: 1e-8,
            one_tol: 1e-8,
            ground_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BondGamma {
    pub j: usize,
    /// `D_{j-1} D_{j+1}`, the dimension of the matrices `X` fed to `Γ_j`.
    pub domain_dim: usize,
    /// Descending, length `min(domain_dim, d^2)`.
    pub singular_values: Vec<f64>,
    /// Zero whenever the domain is larger than the two-site space.
    pub min_singular: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GammaReport {
    pub bonds: Vec<BondGamma>,
    pub min_singular: f64,
    pub invertible: bool,
}

/// Matrix representation of `Γ_j : X ↦ Σ_{s,t} Tr[X A_j^s A_{j+1}^t] |s,t>`
/// for the 0-based window starting at `site`.
pub fn gamma_map(psi: &MpsState, site: usize) -> CMatrix {
    let d = psi.d();
    let left = psi.bond_dims()[site];
    let right = psi.bond_dims()[site + 2];
    let mut out = CMatrix::zeros(d * d, left * right);
    for s in 0..d {
        for t in 0..d {
            let prod = psi.tensor(site, s).matmul(psi.tensor(site + 1, t));
            // Tr[X M] = Σ_{a,b} X[b,a] M[a,b]
            for a in 0..left {
                for b in 0..right {
                    out.set(s * d + t, b * left + a, prod.get(a, b));
                }
            }
        }
    }
    out
}

pub fn gamma_report(psi: &MpsState, threshold: f64) -> Result<GammaReport> {
    require_canonical(psi)?;
    let d2 = psi.d() * psi.d();
    let mut bonds = Vec::with_capacity(psi.n().saturating_sub(1));
    for site in 0..psi.n().saturating_sub(1) {
        let m = gamma_map(psi, site);
        let singular_values = linalg::singular_values(&m)?;
        let domain_dim = m.cols();
        let min_singular = if domain_dim > d2 {
            0.0
        } else {
            singular_values.last().copied().unwrap_or(0.0)
        };
        bonds.push(BondGamma {
            j: site + 1,
            domain_dim,
            singular_values,
            min_singular,
        });
    }
    let min_singular = bonds
        .iter()
        .map(|b| b.min_singular)
        .fold(f64::INFINITY, f64::min);
    let invertible = bonds
        .iter()
        .all(|b| b.domain_dim <= d2 && b.min_singular >= threshold);
    Ok(GammaReport {
        bonds,
        min_singular,
        invertible,
    })
}

fn require_canonical(psi: &MpsState) -> Result<()> {
    if psi.canonical() != Canonical::Left {
        return Err(contract("certification stage requires a canonicalized MPS"));
    }
    Ok(())
}

/// Nearest-neighbour projectors `h_j` on `d^2`-dimensional pair spaces.
#[derive(Clone, Debug)]
pub struct WitnessSet {
    /// Local (blocked) physical dimension.
    pub d: usize,
    pub projectors: Vec<CMatrix>,
    pub ranks: Vec<usize>,
    /// Orthonormal basis of the range of `1 - h_j`, one `d^2 x (d^2 - rank)` matrix per bond.
    pub supports: Vec<CMatrix>,
}

impl WitnessSet {
    /// Builds a witness set from orthonormal bases of the complements `range(1 - h_j)`.
    pub fn from_supports(d: usize, supports: Vec<CMatrix>) -> Result<WitnessSet> {
        let d2 = d * d;
        let mut projectors = Vec::with_capacity(supports.len());
        let mut ranks = Vec::with_capacity(supports.len());
        for (k, s) in supports.iter().enumerate() {
            if s.rows() != d2 {
                return Err(contract(format!(
                    "support {} has {} rows, expected {d2}",
                    k + 1,
                    s.rows()
                )));
            }
            if s.cols() > 0 && linalg::orthonormality_defect(s) > 1e-10 {
                return Err(contract(format!("support {} is not orthonormal", k + 1)));
            }
            let h = &CMatrix::identity(d2) - &linalg::projector_onto(s);
            projectors.push(h);
            ranks.push(d2 - s.cols());
        }
        Ok(WitnessSet {
            d,
            projectors,
            ranks,
            supports,
        })
    }

    /// Builds a witness set from explicit projectors.
    pub fn from_projectors(d: usize, projectors: Vec<CMatrix>) -> Result<WitnessSet> {
        let d2 = d * d;
        let mut supports = Vec::with_capacity(projectors.len());
        for (k, h) in projectors.iter().enumerate() {
            if h.shape() != (d2, d2) {
                return Err(contract(format!("projector {} has wrong shape", k + 1)));
            }
            if (&h.matmul(h) - h).max_abs() > 1e-10 || !h.is_hermitian(1e-10) {
                return Err(contract(format!("h_{} is not an orthogonal projector", k + 1)));
            }
            let spec = linalg::eigh(h)?;
            let keep: Vec<usize> = (0..d2).filter(|&i| spec.eigenvalues[i] < 0.5).collect();
            supports.push(linalg::select_columns(&spec.eigenvectors, &keep));
        }
        let mut ws = WitnessSet::from_supports(d, supports)?;
        ws.projectors = projectors;
        Ok(ws)
    }

    pub fn bonds(&self) -> usize {
        self.projectors.len()
    }
}

/// Orthonormal basis of the eigenvectors of `K K^†` with eigenvalue above
/// `rank_tol`, rejecting eigenvalues within a factor 10 of the tolerance.
pub(crate) fn support_of_factor(factor: &CMatrix, rank_tol: f64, bond: usize) -> Result<CMatrix> {
    let dec = linalg::svd(factor)?;
    let mut keep = Vec::new();
    for (i, &s) in dec.s.iter().enumerate() {
        let ev = s * s;
        if ev > rank_tol / 10.0 && ev < rank_tol * 10.0 {
            return Err(Error::IllConditionedKernel { bond, value: ev });
        }
        if ev > rank_tol {
            keep.push(i);
        }
    }
    Ok(linalg::select_columns(&dec.u, &keep))
}

/// `h_j` projects onto the kernel of the estimate's reduction on `(j, j+1)`.
pub fn parent_projectors(psi: &MpsState, rank_tol: f64) -> Result<WitnessSet> {
    let factors = psi.pair_reduction_factors()?;
    let supports = factors
        .iter()
        .enumerate()
        .map(|(k, f)| support_of_factor(f, rank_tol, k + 1))
        .collect::<Result<Vec<_>>>()?;
    WitnessSet::from_supports(psi.d(), supports)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GammaAngles {
    /// `γ_j` for `j = 1 … n-2`.
    pub gammas: Vec<f64>,
    pub gamma: f64,
}

/// Cosines of the canonical angles between `range(1 - h_j) ⊗ C^d` and
/// `C^d ⊗ range(1 - h_{j+1})` on three sites.
///
/// Apart from angles 0 and π/2 these coincide with the angles between the
/// ranges of `h_j ⊗ 1` and `1 ⊗ h_{j+1}`, so the eigenvalues of
/// `h_j h_{j+1} h_j` strictly between 0 and 1 are the squares of the
/// returned values that lie strictly between 0 and 1. Working with the
/// complements keeps the matrices small when `h_j` has large rank.
pub fn complement_cosines(d: usize, left: &CMatrix, right: &CMatrix) -> Result<Vec<f64>> {
    let rl = left.cols();
    let rr = right.cols();
    if rl == 0 || rr == 0 {
        return Ok(Vec::new());
    }
    // <φ_a ⊗ e_u | e_v ⊗ χ_b> = Σ_m conj(φ_a[v, m]) χ_b[m, u]
    let mut overlap = CMatrix::zeros(rl * d, d * rr);
    for a in 0..rl {
        for u in 0..d {
            for v in 0..d {
                for b in 0..rr {
                    let mut acc = C64::new(0.0, 0.0);
                    for m in 0..d {
                        acc += left.get(v * d + m, a).conj() * right.get(m * d + u, b);
                    }
                    overlap.set(a * d + u, v * rr + b, acc);
                }
            }
        }
    }
    let mut s = linalg::singular_values(&overlap)?;
    for x in s.iter_mut() {
        *x = x.min(1.0);
    }
    Ok(s)
}

/// `γ_j` is the square root of the largest eigenvalue of `h_j h_{j+1} h_j`
/// that is not one; `γ = max_j γ_j` (zero for a single bond).
pub fn gamma_angles(ws: &WitnessSet, one_tol: f64) -> Result<GammaAngles> {
    let mut gammas = Vec::with_capacity(ws.bonds().saturating_sub(1));
    for k in 0..ws.bonds().saturating_sub(1) {
        let cos = complement_cosines(ws.d, &ws.supports[k], &ws.supports[k + 1])?;
        let mut best = 0.0f64;
        for c in cos {
            let ev = c * c;
            if ev > 1.0 - 10.0 * one_tol && ev < 1.0 - one_tol {
                return Err(Error::IllConditionedAngle {
                    bond: k + 1,
                    value: ev,
                });
            }
            if ev < 1.0 - one_tol {
                best = best.max(ev);
            }
        }
        gammas.push(best.sqrt());
    }
    let gamma = gammas.iter().copied().fold(0.0, f64::max);
    Ok(GammaAngles { gammas, gamma })
}

/// Dimension of the common kernel of all `h_j`, or `None` when the partial
/// kernels grow beyond `cap` candidate dimensions.
///
/// The kernel of `h_1 + … + h_{m-1}` on the first `m` sites is grown one site
/// at a time: each new candidate space is `kernel ⊗ C^d`, on which `h_{m}` is
/// diagonalized and only its null space is kept.
pub fn ground_space_dimension(ws: &WitnessSet, zero_tol: f64, cap: usize) -> Result<Option<usize>> {
    let d = ws.d;
    if ws.bonds() == 0 {
        return Ok(None);
    }
    // basis[(c, s), a]: kernel vector a on the first m sites, written in terms
    // of the previous kernel basis c and the newest site s
    let mut basis = ws.supports[0].clone();
    for k in 1..ws.bonds() {
        let prev = basis.rows() / d;
        let g = basis.cols();
        if g == 0 {
            return Ok(Some(0));
        }
        if g * d > cap {
            return Ok(None);
        }
        let support = &ws.supports[k];
        let r = support.cols();
        // restricted h_k = 1 - Σ_c Y_c^† Y_c,  Y_c[q, (a, t)] = Σ_s conj(S[(s,t), q]) B[(c,s), a]
        let mut overlap = CMatrix::zeros(g * d, g * d);
        let mut y = CMatrix::zeros(r, g * d);
        for c in 0..prev {
            for q in 0..r {
                for a in 0..g {
                    for t in 0..d {
                        let mut acc = C64::new(0.0, 0.0);
                        for s in 0..d {
                            acc += support.get(s * d + t, q).conj() * basis.get(c * d + s, a);
                        }
                        y.set(q, a * d + t, acc);
                    }
                }
            }
            overlap = &overlap + &y.adjoint().matmul(&y);
        }
        let restricted = &CMatrix::identity(g * d) - &overlap;
        let spec = linalg::eigh(&restricted)?;
        let null: Vec<usize> = (0..g * d)
            .filter(|&i| spec.eigenvalues[i] <= zero_tol)
            .collect();
        basis = linalg::select_columns(&spec.eigenvectors, &null);
    }
    Ok(Some(basis.cols()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GapSource {
    /// `1 - 2γ`
    Analytic,
    /// An externally computed spectral gap of the parent Hamiltonian.
    Numeric(f64),
}

impl GapSource {
    pub fn label(&self) -> &'static str {
        match self {
            GapSource::Analytic => "analytic_1_minus_2gamma",
            GapSource::Numeric(_) => "numeric",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailureReason {
    /// Some `Γ_j` is not injective.
    GammaSingular,
    /// The gap bound is not positive.
    VacuousGap,
    /// The parent Hamiltonian has more than one ground state.
    DegenerateGroundSpace,
}

impl FailureReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            FailureReason::GammaSingular => "gamma-singular",
            FailureReason::VacuousGap => "vacuous-gap",
            FailureReason::DegenerateGroundSpace => "degenerate-ground-space",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Certified,
    Failed(FailureReason),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SiteTerm {
    pub j: usize,
    pub trace_h_sigma: f64,
    pub epsilon: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    pub status: Status,
    pub gamma_min_singular: f64,
    pub gammas: Vec<f64>,
    pub gamma: Option<f64>,
    pub gap_bound: Option<f64>,
    pub gap_source: GapSource,
    pub ground_space_dim: Option<usize>,
    pub tau: Option<f64>,
    pub fidelity_lower_bound: f64,
    pub per_site: Vec<SiteTerm>,
}

impl Certificate {
    pub fn is_certified(&self) -> bool {
        self.status == Status::Certified
    }

    pub fn failure(&self) -> Option<FailureReason> {
        match self.status {
            Status::Certified => None,
            Status::Failed(r) => Some(r),
        }
    }
}

/// Largest candidate dimension explored by the ground-space check. Within
/// `certify` the candidates are further limited to `D_max^2 d`, the most an
/// open-chain kernel of the estimate can need.
pub const GROUND_SPACE_CAP: usize = 1024;

/// `τ = Σ_j (Tr[h_j σ_j] + ε_j) / gap` and `√(max(0, 1 - τ))`.
pub fn tau_and_bound(per_site: &[SiteTerm], gap: f64) -> (f64, f64) {
    let total: f64 = per_site.iter().map(|t| t.trace_h_sigma + t.epsilon).sum();
    let tau = total / gap;
    (tau, (1.0 - tau).max(0.0).sqrt())
}

/// Runs the full certification stage on an estimate and a dataset blocked
/// the same way.
pub fn certify(
    psi: &MpsState,
    data: &TomographyData,
    gap_source: GapSource,
    thresholds: &Thresholds,
) -> Result<Certificate> {
    if psi.n() != data.n_blocks || psi.d() != data.block_dim {
        return Err(contract(format!(
            "estimate has {} sites of dimension {}, data has {} blocks of dimension {}",
            psi.n(),
            psi.d(),
            data.n_blocks,
            data.block_dim
        )));
    }
    data.validate()?;
    if let Some(w) = data.windows.iter().find(|w| !(w.epsilon >= 0.0)) {
        return Err(contract(format!("window {} has negative epsilon", w.j)));
    }
    let psi = if psi.canonical() == Canonical::Left {
        psi.clone()
    } else {
        psi.canonicalize()?
    };

    let mut cert = Certificate {
        status: Status::Certified,
        gamma_min_singular: 0.0,
        gammas: Vec::new(),
        gamma: None,
        gap_bound: None,
        gap_source,
        ground_space_dim: None,
        tau: None,
        fidelity_lower_bound: 0.0,
        per_site: Vec::new(),
    };

    let report = gamma_report(&psi, thresholds.gamma_threshold)?;
    cert.gamma_min_singular = report.min_singular;
    if !report.invertible {
        cert.status = Status::Failed(FailureReason::GammaSingular);
        return Ok(cert);
    }

    let ws = parent_projectors(&psi, thresholds.rank_tol)?;
    let angles = gamma_angles(&ws, thresholds.one_tol)?;
    cert.gammas = angles.gammas;
    cert.gamma = Some(angles.gamma);

    let gap = match gap_source {
        GapSource::Analytic => 1.0 - 2.0 * angles.gamma,
        GapSource::Numeric(g) => g,
    };
    cert.gap_bound = Some(gap);
    if !(gap > 0.0) || !gap.is_finite() {
        cert.status = Status::Failed(FailureReason::VacuousGap);
        return Ok(cert);
    }

    let cap = (psi.max_bond_dim().pow(2) * psi.d()).min(GROUND_SPACE_CAP);
    let dim = ground_space_dimension(&ws, thresholds.ground_tol, cap)?;
    cert.ground_space_dim = dim;
    if dim != Some(1) {
        cert.status = Status::Failed(FailureReason::DegenerateGroundSpace);
        return Ok(cert);
    }

    cert.per_site = data
        .windows
        .iter()
        .zip(&ws.projectors)
        .map(|(w, h)| SiteTerm {
            j: w.j,
            trace_h_sigma: trace_product(h, &w.sigma).max(0.0),
            epsilon: w.epsilon,
        })
        .collect();
    let (tau, bound) = tau_and_bound(&cert.per_site, gap);
    cert.tau = Some(tau);
    cert.fidelity_lower_bound = bound;
    Ok(cert)
}

/// `Re Tr[a b]`
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    let n = a.rows();
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..n {
            acc += (a.get(i, k) * b.get(k, i)).re;
        }
    }
    acc
}

/// Expands `h` acting on sites `(0, 1)` of three to `h ⊗ 1`, and `1 ⊗ h` for sites `(1, 2)`.
pub fn three_site_pair(d: usize, left: &CMatrix, right: &CMatrix) -> (CMatrix, CMatrix) {
    let id = CMatrix::identity(d);
    (left.kron(&id), id.kron(right))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mps::{named_state, NamedState};
    use crate::oracle::{anticommutator_min_eigenvalue, dense_pqp_gamma};
    use crate::linalg::c64;
    use crate::tomo::exact_reductions;

    fn diag_projector(bits: &[f64]) -> CMatrix {
        CMatrix::from_diagonal(bits)
    }

    #[test]
    fn ghz_gamma_maps_are_singular() {
        for n in 3..=6 {
            let psi = named_state(NamedState::Ghz, n, 2).unwrap();
            let report = gamma_report(&psi, 1e-6).unwrap();
            assert!(!report.invertible);
            for b in &report.bonds {
                assert_eq!(b.singular_values.len(), 4);
                // image spanned by |00> and |11>
                assert_eq!(b.singular_values.iter().filter(|&&s| s > 1e-12).count(), 2);
            }
        }
    }

    #[test]
    fn random_gamma_maps_are_injective() {
        let psi = MpsState::random(6, 2, 2, 7).unwrap().block(2).unwrap();
        let report = gamma_report(&psi, 1e-6).unwrap();
        assert!(report.invertible, "{report:?}");
        assert!(report.min_singular > 1e-3);
    }

    #[test]
    fn product_state_gamma_report() {
        let psi = MpsState::random(4, 2, 1, 3).unwrap();
        let report = gamma_report(&psi, 1e-6).unwrap();
        assert!(report.bonds.iter().all(|b| b.domain_dim == 1 && b.singular_values.len() == 1));
        // a product of unit vectors: Γ maps 1 onto a unit vector
        assert!((report.min_singular - 1.0).abs() < 1e-12);
        assert!(report.invertible);
        assert!(!gamma_report(&psi, 1.5).unwrap().invertible);
    }

    #[test]
    fn gamma_report_needs_canonical_input() {
        let raw = MpsState::new(
            1,
            alloc::vec![1, 1, 1],
            alloc::vec![alloc::vec![CMatrix::identity(1)]; 2],
        )
        .unwrap();
        assert!(gamma_report(&raw, 1e-6).is_err());
    }

    #[test]
    fn ghz_parent_projectors() {
        let psi = named_state(NamedState::Ghz, 4, 2).unwrap();
        let ws = parent_projectors(&psi, 1e-8).unwrap();
        let want = diag_projector(&[0.0, 1.0, 1.0, 0.0]);
        for h in &ws.projectors {
            assert!((h - &want).max_abs() < 1e-12);
        }
        assert_eq!(ws.ranks, [2, 2, 2]);
    }

    #[test]
    fn aklt_parent_projector_ranks() {
        let psi = named_state(NamedState::Aklt, 8, 3).unwrap();
        let ws = parent_projectors(&psi, 1e-8).unwrap();
        // bulk kernels are the spin-2 sector; the pinned edges have rank-2 reductions
        assert_eq!(ws.ranks, [7, 5, 5, 5, 5, 5, 7]);
    }

    #[test]
    fn product_state_parent_projectors() {
        let zero = CMatrix::from_real(1, 1, &[1.0]);
        let one = CMatrix::from_real(1, 1, &[0.0]);
        let psi = MpsState::new(2, alloc::vec![1; 5], alloc::vec![alloc::vec![zero, one]; 4])
            .unwrap()
            .canonicalize()
            .unwrap();
        let ws = parent_projectors(&psi, 1e-8).unwrap();
        let want = diag_projector(&[0.0, 1.0, 1.0, 1.0]);
        for h in &ws.projectors {
            assert!((h - &want).max_abs() < 1e-12);
        }
        assert_eq!(ws.ranks, [3, 3, 3]);
    }

    #[test]
    fn witness_projector_invariants() {
        let psi = MpsState::random(6, 2, 2, 21).unwrap().block(2).unwrap();
        let ws = parent_projectors(&psi, 1e-8).unwrap();
        for (k, h) in ws.projectors.iter().enumerate() {
            assert!((&h.matmul(h) - h).max_abs() < 1e-10);
            assert!(h.is_hermitian(1e-10));
            let rho = psi.reduction(k, 2).unwrap();
            assert!(trace_product(h, &rho).abs() < 1e-10);
        }
    }

    #[test]
    fn ambiguous_kernel_is_rejected() {
        let mut factor = CMatrix::zeros(4, 2);
        factor.set(0, 0, c64(1.0, 0.0));
        factor.set(1, 1, c64(1e-4, 0.0)); // eigenvalue 1e-8 == rank_tol
        assert!(matches!(
            support_of_factor(&factor, 1e-8, 3),
            Err(Error::IllConditionedKernel { bond: 3, .. })
        ));
    }

    #[test]
    fn ghz_gamma_is_zero() {
        let psi = named_state(NamedState::Ghz, 5, 2).unwrap();
        let ws = parent_projectors(&psi, 1e-8).unwrap();
        let angles = gamma_angles(&ws, 1e-8).unwrap();
        assert!(angles.gammas.iter().all(|&g| g.abs() < 1e-12));
        assert!(angles.gamma.abs() < 1e-12);
    }

    #[test]
    fn identical_commuting_projectors_give_zero_gamma() {
        // h ⊗ 1 and 1 ⊗ h with h = 1: both are the identity, every eigenvalue is one
        let ws = WitnessSet::from_projectors(2, alloc::vec![CMatrix::identity(4); 2]).unwrap();
        assert_eq!(gamma_angles(&ws, 1e-8).unwrap().gamma, 0.0);
        let ws = WitnessSet::from_projectors(2, alloc::vec![CMatrix::zeros(4, 4); 3]).unwrap();
        assert_eq!(gamma_angles(&ws, 1e-8).unwrap().gamma, 0.0);
    }

    #[test]
    fn gamma_matches_dense_principal_angles() {
        for seed in 0..6 {
            let psi = MpsState::random(6, 2, 2, seed).unwrap().block(2).unwrap();
            let ws = parent_projectors(&psi, 1e-8).unwrap();
            let angles = gamma_angles(&ws, 1e-8).unwrap();
            for k in 0..ws.bonds() - 1 {
                let oracle = dense_pqp_gamma(ws.d, &ws.projectors[k], &ws.projectors[k + 1], 1e-8);
                assert!((angles.gammas[k] - oracle).abs() < 1e-9, "seed {seed} bond {k}");
            }
        }
        for seed in 0..4 {
            let psi = MpsState::random(6, 3, 2, seed).unwrap();
            let ws = parent_projectors(&psi, 1e-8).unwrap();
            let angles = gamma_angles(&ws, 1e-8).unwrap();
            for k in 0..ws.bonds() - 1 {
                let oracle = dense_pqp_gamma(3, &ws.projectors[k], &ws.projectors[k + 1], 1e-8);
                assert!((angles.gammas[k] - oracle).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ambiguous_angle_is_rejected() {
        let d = 2;
        // cos^2 = 1 - 9e-10 sits between 1 - 10 one_tol and 1 - one_tol
        let theta: f64 = 3e-5;
        let mut s1 = CMatrix::zeros(4, 1);
        s1.set(0, 0, c64(1.0, 0.0));
        let mut s2 = CMatrix::zeros(4, 1);
        s2.set(0, 0, c64(theta.cos(), 0.0));
        s2.set(3, 0, c64(theta.sin(), 0.0));
        let ws = WitnessSet::from_supports(d, alloc::vec![s1, s2]).unwrap();
        let cos = complement_cosines(d, &ws.supports[0], &ws.supports[1]).unwrap();
        assert!(cos.iter().any(|&c| (c - theta.cos()).abs() < 1e-12));
        let res = gamma_angles(&ws, 1e-10);
        assert!(matches!(res, Err(Error::IllConditionedAngle { bond: 1, .. })), "{res:?}");
    }

    #[test]
    fn anticommutator_inequality_on_random_bonds() {
        for seed in 0..4 {
            let psi = MpsState::random(8, 2, 2, seed).unwrap().block(2).unwrap();
            let ws = parent_projectors(&psi, 1e-8).unwrap();
            let angles = gamma_angles(&ws, 1e-8).unwrap();
            for k in 0..ws.bonds() - 1 {
                let m = anticommutator_min_eigenvalue(
                    ws.d,
                    &ws.projectors[k],
                    &ws.projectors[k + 1],
                    angles.gammas[k],
                )
                .unwrap();
                assert!(m >= -1e-10, "seed {seed} bond {k}: {m}");
            }
        }
    }

    #[test]
    fn ground_space_of_ghz_is_two_fold() {
        let psi = named_state(NamedState::Ghz, 4, 2).unwrap();
        let ws = parent_projectors(&psi, 1e-8).unwrap();
        assert_eq!(ground_space_dimension(&ws, 1e-6, 4096).unwrap(), Some(2));
    }

    #[test]
    fn ground_space_of_open_aklt_is_unique() {
        let psi = named_state(NamedState::Aklt, 7, 3).unwrap();
        let ws = parent_projectors(&psi, 1e-8).unwrap();
        assert_eq!(ground_space_dimension(&ws, 1e-6, 4096).unwrap(), Some(1));
    }

    #[test]
    fn exact_data_certifies_with_zero_tau() {
        let psi = MpsState::random(8, 2, 2, 5).unwrap();
        let data = exact_reductions(&psi, 2).unwrap();
        let blocked = psi.block(2).unwrap();
        let ws = parent_projectors(&blocked, 1e-8).unwrap();
        let h = crate::oracle::dense_hamiltonian(&ws, 4, 4).unwrap();
        let gap = crate::oracle::exact_gap(&h, 1e-9).unwrap().gap;
        let cert = certify(&blocked, &data, GapSource::Numeric(gap), &Thresholds::default()).unwrap();
        assert!(cert.is_certified(), "{cert:?}");
        assert!(cert.tau.unwrap() <= 1e-10);
        assert!(cert.fidelity_lower_bound >= 1.0 - 1e-10);
    }

    #[test]
    fn ghz_estimate_fails_gamma_singular() {
        let psi = named_state(NamedState::Ghz, 4, 2).unwrap();
        let data = exact_reductions(&psi, 1).unwrap();
        let cert = certify(&psi, &data, GapSource::Analytic, &Thresholds::default()).unwrap();
        assert_eq!(cert.failure(), Some(FailureReason::GammaSingular));
    }

    #[test]
    fn large_gamma_is_vacuous() {
        let per_site = [SiteTerm { j: 1, trace_h_sigma: 0.0, epsilon: 0.0 }];
        let gap = 1.0 - 2.0 * 0.6;
        let psi = named_state(NamedState::Aklt, 4, 3).unwrap();
        let data = exact_reductions(&psi, 1).unwrap();
        let cert = certify(&psi, &data, GapSource::Numeric(gap), &Thresholds::default()).unwrap();
        assert_eq!(cert.failure(), Some(FailureReason::VacuousGap));
        assert_eq!(tau_and_bound(&per_site, 0.5), (0.0, 1.0));
    }

    #[test]
    fn tau_at_least_one_is_vacuous_but_certified() {
        let per_site = [
            SiteTerm { j: 1, trace_h_sigma: 0.3, epsilon: 0.2 },
            SiteTerm { j: 2, trace_h_sigma: 0.1, epsilon: 0.4 },
        ];
        let (tau, bound) = tau_and_bound(&per_site, 0.9);
        assert!(tau > 1.0);
        assert_eq!(bound, 0.0);
    }

    #[test]
    fn misaligned_data_is_rejected() {
        let psi = MpsState::random(8, 2, 2, 5).unwrap();
        let data = exact_reductions(&psi, 2).unwrap();
        assert!(matches!(
            certify(&psi, &data, GapSource::Analytic, &Thresholds::default()),
            Err(Error::ContractViolation(_))
        ));
        let mut bad = data.clone();
        bad.windows[0].epsilon = -1e-3;
        let blocked = psi.block(2).unwrap();
        assert!(matches!(
            certify(&blocked, &bad, GapSource::Analytic, &Thresholds::default()),
            Err(Error::ContractViolation(_))
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn tau_is_monotone(
                base in proptest::collection::vec((0.0f64..0.2, 0.0f64..0.2), 1..6),
                bump in 0.0f64..0.1,
                which in 0usize..6,
                gap in 0.05f64..1.0,
            ) {
                let terms: Vec<SiteTerm> = base.iter().enumerate()
                    .map(|(k, &(t, e))| SiteTerm { j: k + 1, trace_h_sigma: t, epsilon: e })
                    .collect();
                let (tau0, f0) = tau_and_bound(&terms, gap);
                let k = which % terms.len();
                let mut more_eps = terms.clone();
                more_eps[k].epsilon += bump;
                let mut more_tr = terms.clone();
                more_tr[k].trace_h_sigma += bump;
                for t in [more_eps, more_tr] {
                    let (tau1, f1) = tau_and_bound(&t, gap);
                    prop_assert!(tau1 >= tau0);
                    prop_assert!(f1 <= f0);
                }
            }
        }
    }
}
