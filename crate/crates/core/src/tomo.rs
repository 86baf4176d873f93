//! Synthetic two-block tomography datasets.
//!
//! Every dataset pairs each window estimate `σ_j` with a radius `ε_j` such that
//! the true reduction lies within trace distance `ε_j` (simultaneously over all
//! windows with probability at least `confidence`, or surely when the
//! confidence is absent).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{config, contract, Result};
use crate::linalg::{self, c64, CMatrix, C64};
use crate::mps::MpsState;

/// Tolerance for the density-matrix checks on window estimates.
pub const STATE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    /// 1-based index of the first blocked site.
    pub j: usize,
    pub sigma: CMatrix,
    pub epsilon: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TomographyData {
    pub n_blocks: usize,
    pub block_dim: usize,
    /// Simultaneous confidence of all radii; `None` means they hold surely.
    pub confidence: Option<f64>,
    pub windows: Vec<Window>,
}

impl TomographyData {
    pub fn validate(&self) -> Result<()> {
        if self.n_blocks < 2 || self.block_dim == 0 {
            return Err(contract("tomography data needs at least two blocks"));
        }
        if self.windows.len() != self.n_blocks - 1 {
            return Err(contract(format!(
                "{} windows for {} blocks",
                self.windows.len(),
                self.n_blocks
            )));
        }
        if let Some(c) = self.confidence {
            if !(c > 0.0 && c < 1.0) {
                return Err(contract(format!("confidence {c} outside (0, 1)")));
            }
        }
        let dim = self.block_dim * self.block_dim;
        for (k, w) in self.windows.iter().enumerate() {
            if w.j != k + 1 {
                return Err(contract(format!("window {} labelled j = {}", k + 1, w.j)));
            }
            if !(w.epsilon >= 0.0) || !w.epsilon.is_finite() {
                return Err(contract(format!("window {} has epsilon {}", w.j, w.epsilon)));
            }
            check_density(&w.sigma, dim).map_err(|e| match e {
                crate::Error::ContractViolation(m) => contract(format!("window {}: {m}", w.j)),
                other => other,
            })?;
        }
        Ok(())
    }
}

fn check_density(sigma: &CMatrix, dim: usize) -> Result<()> {
    if sigma.shape() != (dim, dim) {
        return Err(contract(format!("sigma has shape {:?}, expected {dim}x{dim}", sigma.shape())));
    }
    if !sigma.is_finite() || sigma.hermitian_defect() > STATE_TOL {
        return Err(contract("sigma is not Hermitian"));
    }
    let tr = sigma.trace();
    if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
        return Err(contract(format!("sigma has trace {tr}")));
    }
    let ev = linalg::eigvalsh(&sigma.hermitian_part())?;
    if ev.last().copied().unwrap_or(0.0) < -STATE_TOL {
        return Err(contract("sigma is not positive semidefinite"));
    }
    Ok(())
}

/// True reductions of the `k`-blocked state on every pair of neighbouring blocks.
pub fn exact_reductions(psi: &MpsState, k: usize) -> Result<TomographyData> {
    let blocked = psi.block(k)?;
    if blocked.n() < 2 {
        return Err(config(format!("blocking {} sites by {k} leaves fewer than two blocks", psi.n())));
    }
    let blocked = blocked.canonicalize()?;
    let factors = blocked.pair_reduction_factors()?;
    let windows = factors
        .iter()
        .enumerate()
        .map(|(i, f)| Window {
            j: i + 1,
            sigma: f.matmul(&f.adjoint()).hermitian_part(),
            epsilon: 0.0,
        })
        .collect();
    Ok(TomographyData {
        n_blocks: blocked.n(),
        block_dim: blocked.d(),
        confidence: None,
        windows,
    })
}

fn window_rng(seed: u64, j: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(j as u64);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c64(re, im)
}

/// Random Hermitian matrix with spectral norm exactly `level`.
fn random_hermitian(dim: usize, level: f64, rng: &mut ChaCha8Rng) -> Result<CMatrix> {
    let g = CMatrix::from_fn(dim, dim, |_, _| gaussian(rng)).hermitian_part();
    let ev = linalg::eigvalsh(&g)?;
    let norm = ev.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    Ok(g.scale_real(level / norm))
}

/// Adds seeded Hermitian noise of spectral norm `level` to every window and
/// projects back to density matrices. The radius grows by the realized trace
/// distance between the old and new estimate.
pub fn perturb(data: &TomographyData, level: f64, seed: u64) -> Result<TomographyData> {
    if !(level >= 0.0) || !level.is_finite() {
        return Err(config(format!("noise level {level} must be nonnegative")));
    }
    let mut out = data.clone();
    if level == 0.0 {
        return Ok(out);
    }
    let dim = data.block_dim * data.block_dim;
    for w in out.windows.iter_mut() {
        let mut rng = window_rng(seed, w.j);
        let noise = random_hermitian(dim, level, &mut rng)?;
        let noisy = linalg::project_psd_unit_trace(&(&w.sigma + &noise))?.hermitian_part();
        let moved = linalg::trace_norm(&(&w.sigma - &noisy))?;
        w.sigma = noisy;
        w.epsilon += moved;
    }
    Ok(out)
}

/// Orthonormal measurement bases of one qudit: the computational basis, and
/// for each pair of levels `a < b` the bases `(|a> ± |b>)/√2` and
/// `(|a> ± i|b>)/√2` completed by the remaining computational vectors.
/// Each basis is returned as a unitary whose columns are the basis vectors.
pub fn qudit_bases(q: usize) -> Vec<CMatrix> {
    let mut bases = vec![CMatrix::identity(q)];
    let h = core::f64::consts::FRAC_1_SQRT_2;
    for a in 0..q {
        for b in a + 1..q {
            for phase in [c64(1.0, 0.0), c64(0.0, 1.0)] {
                let mut u = CMatrix::identity(q);
                u.set(a, a, c64(h, 0.0));
                u.set(b, a, phase * h);
                u.set(a, b, c64(h, 0.0));
                u.set(b, b, -phase * h);
                bases.push(u);
            }
        }
    }
    bases
}

/// Dual frame of the single-qudit POVM `{Π_{b,o} / B}`: `duals[b][o]`
/// reconstructs `ρ = Σ_{b,o} Tr[Π_{b,o} ρ] / B · duals[b][o]`.
fn qudit_duals(q: usize, bases: &[CMatrix]) -> Result<Vec<Vec<CMatrix>>> {
    let nb = bases.len() as f64;
    let q2 = q * q;
    // frame operator on row-major vectorized operators
    let mut frame = CMatrix::zeros(q2, q2);
    let mut elements = Vec::with_capacity(bases.len());
    for u in bases {
        let mut per = Vec::with_capacity(q);
        for o in 0..q {
            let e = CMatrix::outer(&u.column(o)).scale_real(1.0 / nb);
            let v = e.to_row_major();
            for i in 0..q2 {
                for k in 0..q2 {
                    let cur = frame.get(i, k);
                    frame.set(i, k, cur + v[i] * v[k].conj());
                }
            }
            per.push(v);
        }
        elements.push(per);
    }
    let inv = frame
        .as_matrix()
        .clone()
        .try_inverse()
        .ok_or_else(|| config("measurement set is not informationally complete"))?;
    let inv = CMatrix::from_matrix(inv);
    elements
        .iter()
        .map(|per| {
            per.iter()
                .map(|v| {
                    let col = CMatrix::from_fn(q2, 1, |i, _| v[i]);
                    let dual = inv.matmul(&col);
                    CMatrix::from_row_major(q, q, dual.column(0))
                })
                .collect()
        })
        .collect()
}

/// Largest number of scalar operations tolerated when assembling estimates.
const SAMPLING_WORK_CAP: f64 = 4e8;

/// Simulates `shots` repetitions of every product-basis setting on every
/// window of the `k`-blocked state, reconstructs by linear inversion and
/// projects onto density matrices.
///
/// The radius combines the Weissman–Ordentlich L1 deviation bound for each
/// empirical outcome distribution, a union bound over all settings of all
/// windows at failure probability `1 - confidence`, the trace norms of the
/// dual operators, and the displacement of the final projection.
pub fn sample_measurements(
    psi: &MpsState,
    k: usize,
    shots: u64,
    confidence: f64,
    seed: u64,
) -> Result<TomographyData> {
    if shots == 0 {
        return Err(config("shots must be positive"));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(config(format!("confidence {confidence} outside (0, 1)")));
    }
    let exact = exact_reductions(psi, k)?;
    let q = psi.d();
    let qudits = 2 * k;
    let m = exact.block_dim * exact.block_dim;
    let bases = qudit_bases(q);
    let b1 = bases.len();
    let settings = b1.pow(qudits as u32);
    let work = settings as f64 * (m as f64).powi(3) * exact.windows.len() as f64;
    if work > SAMPLING_WORK_CAP {
        return Err(config(format!(
            "{settings} settings on a {m}-dimensional window exceed the sampling budget"
        )));
    }
    let duals = qudit_duals(q, &bases)?;
    let max_dual: Vec<f64> = duals
        .iter()
        .map(|per| {
            per.iter()
                .map(|d| linalg::trace_norm(d))
                .collect::<Result<Vec<_>>>()
                .map(|v| v.into_iter().fold(0.0, f64::max))
        })
        .collect::<Result<_>>()?;

    let delta = 1.0 - confidence;
    let union = (settings * exact.windows.len()) as f64;
    let n = shots as f64;
    let t = ((2.0 / n) * (union.ln() + m as f64 * core::f64::consts::LN_2 - delta.ln())).sqrt();

    let mut windows = Vec::with_capacity(exact.windows.len());
    for w in &exact.windows {
        let mut rng = window_rng(seed, w.j);
        let mut estimate = CMatrix::zeros(m, m);
        let mut dual_weight = 0.0;
        for setting in 0..settings {
            let digits = setting_digits(setting, b1, qudits);
            let u = digits
                .iter()
                .fold(CMatrix::identity(1), |acc, &b| acc.kron(&bases[b]));
            let rotated = u.adjoint().matmul(&w.sigma).matmul(&u);
            let probs: Vec<f64> = (0..m).map(|o| rotated.get(o, o).re.max(0.0)).collect();
            let counts = multinomial(shots, &probs, &mut rng)?;
            for (o, &c) in counts.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                let freq = c as f64 / n;
                let outcome = setting_digits(o, q, qudits);
                let dual = digits
                    .iter()
                    .zip(&outcome)
                    .fold(CMatrix::identity(1), |acc, (&b, &oi)| acc.kron(&duals[b][oi]));
                estimate = &estimate + &dual.scale_real(freq / settings as f64);
            }
            dual_weight += digits.iter().map(|&b| max_dual[b]).product::<f64>() / settings as f64;
        }
        let raw = estimate.hermitian_part();
        let sigma = linalg::project_psd_unit_trace(&raw)?.hermitian_part();
        let displacement = linalg::trace_norm(&(&raw - &sigma))?;
        let epsilon = (t * dual_weight + displacement).min(2.0);
        windows.push(Window {
            j: w.j,
            sigma,
            epsilon,
        });
    }
    Ok(TomographyData {
        n_blocks: exact.n_blocks,
        block_dim: exact.block_dim,
        confidence: Some(confidence),
        windows,
    })
}

/// Base-`radix` digits of `x`, most significant first.
fn setting_digits(mut x: usize, radix: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = x % radix;
        x /= radix;
    }
    out
}

fn multinomial(shots: u64, probs: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<u64>> {
    let total: f64 = probs.iter().sum();
    let mut remaining = shots;
    let mut mass = total;
    let mut out = vec![0u64; probs.len()];
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 || mass <= 0.0 {
            break;
        }
        if i + 1 == probs.len() {
            out[i] = remaining;
            break;
        }
        let frac = (p / mass).clamp(0.0, 1.0);
        let draw = Binomial::new(remaining, frac)
            .map_err(|_| config("invalid outcome probability"))?
            .sample(rng);
        out[i] = draw;
        remaining -= draw;
        mass -= p;
    }
    Ok(out)
}
