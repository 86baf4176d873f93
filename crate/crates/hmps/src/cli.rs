//! Subcommands of the `hmps` binary.
//!
//! Exit codes: 0 for success or a certified estimate, 2 for a heralded
//! certification failure, 1 for anything else.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hmps_core::mps::{named_state, MpsState, NamedState};
use hmps_core::reconstruct::{self, Method, ReconstructOptions, SweepRecord};
use hmps_core::tomo::{exact_reductions, perturb, sample_measurements, TomographyData};
use hmps_core::witness::{certify, gamma_report, Certificate, GapSource, Status, Thresholds};

use crate::demo::{self, DemoConfig, DemoRow};
use crate::io::{self, CertificateFile, Meta, MpsFile, TomographyFile};

#[derive(Debug, Parser)]
#[command(name = "hmps", version, about = "Certified MPS tomography from local reductions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a tomography dataset from a known state.
    Simulate(SimulateArgs),
    /// Reconstruct an MPS estimate from a tomography dataset.
    Reconstruct(ReconstructArgs),
    /// Certify an MPS estimate against a tomography dataset.
    Certify(CertifyArgs),
    /// Tabulate certified fidelity density against total error for AKLT.
    DemoAklt(DemoArgs),
}

#[derive(Debug, Clone, Copy, Args)]
pub struct ThresholdArgs {
    /// Smallest admissible singular value of the two-site maps.
    #[arg(long, default_value_t = 1e-6)]
    pub gamma_threshold: f64,
    /// Reduction eigenvalues at or below this span the parent kernel.
    #[arg(long, default_value_t = 1e-8)]
    pub rank_tol: f64,
    /// Eigenvalues within this of one count as one in the angle computation.
    #[arg(long, default_value_t = 1e-8)]
    pub one_tol: f64,
    /// Zero threshold of the ground-space dimension check.
    #[arg(long, default_value_t = 1e-6)]
    pub ground_tol: f64,
}

impl From<ThresholdArgs> for Thresholds {
    fn from(a: ThresholdArgs) -> Self {
        Thresholds {
            gamma_threshold: a.gamma_threshold,
            rank_tol: a.rank_tol,
            one_tol: a.one_tol,
            ground_tol: a.ground_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StateKind {
    Ghz,
    W,
    Cluster,
    Aklt,
    Random,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Named true state.
    #[arg(long, value_enum, required_unless_present = "mps", conflicts_with = "mps")]
    pub state: Option<StateKind>,
    /// True state read from an MPS file instead of a named state.
    #[arg(long)]
    pub mps: Option<PathBuf>,
    /// Number of sites of a named state.
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    /// Local dimension of GHZ, W and random states (AKLT uses 3, cluster 2).
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    /// Relative phase of the GHZ branch.
    #[arg(long, default_value_t = 0.0)]
    pub phase: f64,
    /// Bond dimension of a random state.
    #[arg(long, default_value_t = 2)]
    pub bond_dim: usize,
    /// Sites per block.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Spectral norm of the Hermitian noise added to each window.
    #[arg(long, default_value_t = 0.0, conflicts_with = "shots")]
    pub noise: f64,
    /// Simulate this many shots per product-basis setting instead of adding noise.
    #[arg(long)]
    pub shots: Option<u64>,
    /// Simultaneous confidence of the sampled error radii.
    #[arg(long, default_value_t = 0.95, requires = "shots")]
    pub confidence: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output tomography file.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the true state, blocked by k, as an MPS file.
    #[arg(long)]
    pub write_state: Option<PathBuf>,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Dmrg,
    Variational,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Tomography file.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Dmrg)]
    pub method: MethodArg,
    #[arg(long, default_value_t = 2)]
    pub bond_dim: usize,
    #[arg(long, default_value_t = 50)]
    pub max_sweeps: usize,
    /// Stop when a sweep lowers the objective by less than this.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output MPS file.
    #[arg(long)]
    pub out: PathBuf,
    /// Convergence log (CSV); defaults to the output path with a .csv extension.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GapArg {
    /// Use 1 - 2γ.
    Analytic,
    /// Use a supplied gap, or the exact gap of the estimate's parent Hamiltonian.
    Numeric,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    /// Estimate (MPS file), blocked or unblocked.
    #[arg(long)]
    pub mps: PathBuf,
    /// Tomography file.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = GapArg::Analytic)]
    pub gap: GapArg,
    /// Gap value for the numeric source; computed exactly when omitted.
    #[arg(long)]
    pub gap_value: Option<f64>,
    /// Certificate output file; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// Chain length.
    #[arg(long, default_value_t = 6)]
    pub n: usize,
    /// Comma-separated noise levels.
    #[arg(long, value_delimiter = ',', default_values_t = demo::DEFAULT_NOISE_GRID.to_vec())]
    pub noise_grid: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 2)]
    pub bond_dim: usize,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
}

/// Result of a subcommand that did not error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    HeraldedFailure,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::HeraldedFailure => 2,
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Reconstruct(a) => cmd_reconstruct(&a),
        Command::Certify(a) => cmd_certify(&a),
        Command::DemoAklt(a) => cmd_demo_aklt(&a),
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(outcome) => outcome.exit_code(),
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn true_state(a: &SimulateArgs) -> anyhow::Result<MpsState> {
    if let Some(path) = &a.mps {
        return io::read_mps(path);
    }
    let state = match a.state.expect("clap requires --state or --mps") {
        StateKind::Ghz => named_state(NamedState::GhzPhase(a.phase), a.n, a.d)?,
        StateKind::W => named_state(NamedState::W, a.n, a.d)?,
        StateKind::Cluster => named_state(NamedState::Cluster, a.n, 2)?,
        StateKind::Aklt => named_state(NamedState::Aklt, a.n, 3)?,
        StateKind::Random => named_state(
            NamedState::Random {
                seed: a.seed,
                bond_dim: a.bond_dim,
            },
            a.n,
            a.d,
        )?,
    };
    Ok(state)
}

pub fn cmd_simulate(a: &SimulateArgs) -> anyhow::Result<Outcome> {
    let psi = true_state(a)?;
    let thresholds: Thresholds = a.thresholds.into();
    let (data, meta) = match a.shots {
        Some(shots) => (
            sample_measurements(&psi, a.k, shots, a.confidence, a.seed)?,
            Meta::new("simulate", Some(a.seed), thresholds)
                .with("k", a.k)
                .with("shots", shots),
        ),
        None => (
            perturb(&exact_reductions(&psi, a.k)?, a.noise, a.seed)?,
            Meta::new("simulate", Some(a.seed), thresholds)
                .with("k", a.k)
                .with("noise", a.noise),
        ),
    };
    io::write_json(&a.out, &TomographyFile::from_data(&data, Some(meta.clone())))?;
    if let Some(path) = &a.write_state {
        let blocked = psi.block(a.k)?.canonicalize()?;
        io::write_json(path, &MpsFile::from_state(&blocked, Some(meta)))?;
    }
    let total: f64 = data.windows.iter().map(|w| w.epsilon).sum();
    println!("E = {total:.12e}");
    Ok(Outcome::Success)
}

pub fn write_convergence_csv(
    path: &Path,
    meta: &Meta,
    log: &[SweepRecord],
) -> anyhow::Result<()> {
    let mut file = File::create(path).with_context(|| format!("writing {}", path.display()))?;
    writeln!(file, "# {}", serde_json::to_string(meta)?)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["sweep", "objective"])?;
    for r in log {
        w.write_record([r.sweep.to_string(), format!("{:.17e}", r.objective)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_reconstruct(a: &ReconstructArgs) -> anyhow::Result<Outcome> {
    let data = io::read_tomography(&a.data)?;
    let opts = ReconstructOptions {
        bond_dim: a.bond_dim,
        max_sweeps: a.max_sweeps,
        convergence_tol: a.tol,
        seed: a.seed,
        method: match a.method {
            MethodArg::Dmrg => Method::Dmrg,
            MethodArg::Variational => Method::Variational,
        },
    };
    let out = reconstruct::reconstruct(&data, &opts)?;
    let meta = Meta::new("reconstruct", Some(a.seed), a.thresholds.into())
        .with(
            "method",
            match a.method {
                MethodArg::Dmrg => "dmrg",
                MethodArg::Variational => "variational",
            },
        )
        .with("bond_dim", a.bond_dim)
        .with("objective", out.objective)
        .with("sweeps", out.log.len().saturating_sub(1))
        .with("converged", out.converged);
    io::write_json(&a.out, &MpsFile::from_state(&out.state, Some(meta.clone())))?;
    let log_path = a.log.clone().unwrap_or_else(|| a.out.with_extension("csv"));
    write_convergence_csv(&log_path, &meta, &out.log)?;
    println!(
        "objective = {:.6e} after {} sweeps ({})",
        out.objective,
        out.log.len().saturating_sub(1),
        if out.converged { "converged" } else { "not converged" }
    );
    Ok(Outcome::Success)
}

/// Blocks an unblocked estimate so that its sites match the data's blocks.
fn align(psi: MpsState, data: &TomographyData) -> anyhow::Result<MpsState> {
    if psi.d() == data.block_dim {
        return Ok(psi);
    }
    let mut width = psi.d();
    let mut k = 1;
    while width < data.block_dim {
        width *= psi.d();
        k += 1;
    }
    if width != data.block_dim || psi.n() != k * data.n_blocks {
        bail!(
            "estimate with {} sites of dimension {} does not match {} blocks of dimension {}",
            psi.n(),
            psi.d(),
            data.n_blocks,
            data.block_dim
        );
    }
    Ok(psi.block(k)?)
}

pub fn certify_files(a: &CertifyArgs) -> anyhow::Result<(Certificate, Option<u64>)> {
    let file: MpsFile = io::read_json(&a.mps)?;
    let seed = file.meta.as_ref().and_then(|m| m.seed);
    let data = io::read_tomography(&a.data)?;
    let psi = align(file.to_state()?, &data)?.canonicalize()?;
    let thresholds: Thresholds = a.thresholds.into();
    let source = match (a.gap, a.gap_value) {
        (GapArg::Analytic, None) => GapSource::Analytic,
        (GapArg::Analytic, Some(_)) => bail!("--gap-value requires --gap numeric"),
        (GapArg::Numeric, Some(g)) => GapSource::Numeric(g),
        (GapArg::Numeric, None) => {
            // a singular estimate is rejected before the gap is consulted
            if gamma_report(&psi, thresholds.gamma_threshold)?.invertible {
                GapSource::Numeric(demo::parent_gap(&psi, &thresholds)?)
            } else {
                GapSource::Numeric(f64::NAN)
            }
        }
    };
    Ok((certify(&psi, &data, source, &thresholds)?, seed))
}

pub fn cmd_certify(a: &CertifyArgs) -> anyhow::Result<Outcome> {
    let (cert, seed) = certify_files(a)?;
    let meta = Meta::new("certify", seed, a.thresholds.into());
    let file = CertificateFile::from_certificate(&cert, Some(meta));
    match &a.out {
        Some(path) => io::write_json(path, &file)?,
        None => println!("{}", serde_json::to_string_pretty(&file)?),
    }
    match cert.status {
        Status::Certified => {
            eprintln!(
                "certified: tau = {:.6e}, fidelity >= {:.12}",
                cert.tau.unwrap_or(f64::NAN),
                cert.fidelity_lower_bound
            );
            Ok(Outcome::Success)
        }
        Status::Failed(reason) => {
            eprintln!("failed: {}", reason.as_str());
            Ok(Outcome::HeraldedFailure)
        }
    }
}

pub fn write_demo_csv(path: &Path, meta: &Meta, rows: &[DemoRow]) -> anyhow::Result<()> {
    let mut file = File::create(path).with_context(|| format!("writing {}", path.display()))?;
    writeln!(file, "# {}", serde_json::to_string(meta)?)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record([
        "noise",
        "total_error",
        "status",
        "gap",
        "tau",
        "fidelity_lower_bound",
        "fidelity_density_bound",
        "oracle_fidelity",
        "oracle_fidelity_density",
    ])?;
    for r in rows {
        w.write_record([
            format!("{:e}", r.noise),
            format!("{:.17e}", r.total_error),
            r.status.clone(),
            format!("{:.17e}", r.gap),
            r.tau.map(|t| format!("{t:.17e}")).unwrap_or_default(),
            format!("{:.17e}", r.fidelity_lower_bound),
            format!("{:.17e}", r.fidelity_density_bound),
            format!("{:.17e}", r.oracle_fidelity),
            format!("{:.17e}", r.oracle_fidelity_density),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_demo_aklt(a: &DemoArgs) -> anyhow::Result<Outcome> {
    let mut grid = a.noise_grid.clone();
    if grid.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        bail!("noise levels must be nonnegative");
    }
    grid.sort_by(f64::total_cmp);
    let cfg = DemoConfig {
        n: a.n,
        noise_grid: grid,
        seed: a.seed,
        bond_dim: a.bond_dim,
        thresholds: a.thresholds.into(),
        ..DemoConfig::default()
    };
    let rows = demo::aklt_curve(&cfg)?;
    let meta = Meta::new("demo-aklt", Some(a.seed), cfg.thresholds).with("n", a.n);
    write_demo_csv(&a.out, &meta, &rows)?;
    for r in &rows {
        println!(
            "E = {:.4e}  F^(1/n) >= {:.6}  oracle F^(1/n) = {:.6}",
            r.total_error, r.fidelity_density_bound, r.oracle_fidelity_density
        );
    }
    Ok(Outcome::Success)
}
