//! JSON file formats for states, tomography datasets and certificates.
//!
//! Complex numbers are two-element arrays `[re, im]`; matrices are nested
//! row-major arrays.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use hmps_core::linalg::{c64, CMatrix};
use hmps_core::mps::MpsState;
use hmps_core::tomo::{TomographyData, Window};
use hmps_core::witness::{Certificate, GapSource, Status, Thresholds};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const FORMAT_VERSION: u32 = 1;
pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub type Complex = [f64; 2];
pub type MatrixJson = Vec<Vec<Complex>>;

pub fn matrix_to_json(m: &CMatrix) -> MatrixJson {
    (0..m.rows())
        .map(|i| {
            (0..m.cols())
                .map(|j| {
                    let z = m.get(i, j);
                    [z.re, z.im]
                })
                .collect()
        })
        .collect()
}

pub fn matrix_from_json(rows: &MatrixJson, shape: (usize, usize), what: &str) -> anyhow::Result<CMatrix> {
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        bail!("{what}: expected a {}x{} matrix", shape.0, shape.1);
    }
    let entries = rows.iter().flatten().map(|&[re, im]| c64(re, im)).collect();
    CMatrix::from_row_major(shape.0, shape.1, entries).with_context(|| what.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdsJson {
    pub gamma_threshold: f64,
    pub rank_tol: f64,
    pub one_tol: f64,
    pub ground_tol: f64,
}

impl From<Thresholds> for ThresholdsJson {
    fn from(t: Thresholds) -> Self {
        ThresholdsJson {
            gamma_threshold: t.gamma_threshold,
            rank_tol: t.rank_tol,
            one_tol: t.one_tol,
            ground_tol: t.ground_tol,
        }
    }
}

impl From<ThresholdsJson> for Thresholds {
    fn from(t: ThresholdsJson) -> Self {
        Thresholds {
            gamma_threshold: t.gamma_threshold,
            rank_tol: t.rank_tol,
            one_tol: t.one_tol,
            ground_tol: t.ground_tol,
        }
    }
}

/// Provenance block embedded in every output file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub thresholds: ThresholdsJson,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Meta {
    pub fn new(command: &str, seed: Option<u64>, thresholds: Thresholds) -> Self {
        Meta {
            tool: TOOL_NAME.to_string(),
            version: TOOL_VERSION.to_string(),
            command: command.to_string(),
            seed,
            thresholds: thresholds.into(),
            extra: Map::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.extra.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpsFile {
    pub version: u32,
    pub n: usize,
    pub d: usize,
    pub bond_dims: Vec<usize>,
    /// `tensors[site][s][row][col]`
    pub tensors: Vec<Vec<MatrixJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<Meta>,
}

impl MpsFile {
    pub fn from_state(psi: &MpsState, meta: Option<Meta>) -> Self {
        MpsFile {
            version: FORMAT_VERSION,
            n: psi.n(),
            d: psi.d(),
            bond_dims: psi.bond_dims().to_vec(),
            tensors: psi
                .tensors()
                .iter()
                .map(|mats| mats.iter().map(matrix_to_json).collect())
                .collect(),
            meta,
        }
    }

    pub fn to_state(&self) -> anyhow::Result<MpsState> {
        check_version(self.version)?;
        if self.bond_dims.len() != self.n + 1 || self.tensors.len() != self.n {
            bail!("MPS file: {} sites need {} bond dimensions and {} site tensors", self.n, self.n + 1, self.n);
        }
        let mut tensors = Vec::with_capacity(self.n);
        for (site, mats) in self.tensors.iter().enumerate() {
            if mats.len() != self.d {
                bail!("MPS file: site {site} has {} matrices, expected {}", mats.len(), self.d);
            }
            let shape = (self.bond_dims[site], self.bond_dims[site + 1]);
            tensors.push(
                mats.iter()
                    .enumerate()
                    .map(|(s, m)| matrix_from_json(m, shape, &format!("MPS file: site {site}, index {s}")))
                    .collect::<anyhow::Result<Vec<_>>>()?,
            );
        }
        MpsState::new(self.d, self.bond_dims.clone(), tensors).context("MPS file")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowJson {
    pub j: usize,
    pub epsilon: f64,
    pub sigma: MatrixJson,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TomographyFile {
    pub version: u32,
    pub n_blocks: usize,
    pub block_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    pub windows: Vec<WindowJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<Meta>,
}

impl TomographyFile {
    pub fn from_data(data: &TomographyData, meta: Option<Meta>) -> Self {
        TomographyFile {
            version: FORMAT_VERSION,
            n_blocks: data.n_blocks,
            block_dim: data.block_dim,
            confidence: data.confidence,
            windows: data
                .windows
                .iter()
                .map(|w| WindowJson {
                    j: w.j,
                    epsilon: w.epsilon,
                    sigma: matrix_to_json(&w.sigma),
                })
                .collect(),
            meta,
        }
    }

    pub fn to_data(&self) -> anyhow::Result<TomographyData> {
        check_version(self.version)?;
        let dim = self.block_dim * self.block_dim;
        let windows = self
            .windows
            .iter()
            .map(|w| {
                Ok(Window {
                    j: w.j,
                    epsilon: w.epsilon,
                    sigma: matrix_from_json(&w.sigma, (dim, dim), &format!("tomography file: window {}", w.j))?,
                })
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        let data = TomographyData {
            n_blocks: self.n_blocks,
            block_dim: self.block_dim,
            confidence: self.confidence,
            windows,
        };
        data.validate().context("tomography file")?;
        Ok(data)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteTermJson {
    pub j: usize,
    pub trace_h_sigma: f64,
    pub epsilon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateFile {
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub gamma: Option<f64>,
    pub gammas: Vec<f64>,
    pub gap_bound: Option<f64>,
    pub gap_source: String,
    pub tau: Option<f64>,
    pub fidelity_lower_bound: f64,
    pub per_site: Vec<SiteTermJson>,
    pub gamma_min_singular: f64,
    pub ground_space_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<Meta>,
}

impl CertificateFile {
    pub fn from_certificate(cert: &Certificate, meta: Option<Meta>) -> Self {
        let (status, reason) = match cert.status {
            Status::Certified => ("certified", None),
            Status::Failed(r) => ("failed", Some(r.as_str().to_string())),
        };
        let meta = match (meta, cert.gap_source) {
            (Some(m), GapSource::Numeric(g)) => Some(m.with("gap_value", g)),
            (m, _) => m,
        };
        CertificateFile {
            status: status.to_string(),
            reason,
            gamma: cert.gamma,
            gammas: cert.gammas.clone(),
            gap_bound: cert.gap_bound,
            gap_source: cert.gap_source.label().to_string(),
            tau: cert.tau,
            fidelity_lower_bound: cert.fidelity_lower_bound,
            per_site: cert
                .per_site
                .iter()
                .map(|t| SiteTermJson {
                    j: t.j,
                    trace_h_sigma: t.trace_h_sigma,
                    epsilon: t.epsilon,
                })
                .collect(),
            gamma_min_singular: cert.gamma_min_singular,
            ground_space_dim: cert.ground_space_dim,
            meta,
        }
    }
}

fn check_version(v: u32) -> anyhow::Result<()> {
    if v != FORMAT_VERSION {
        bail!("unsupported format version {v}");
    }
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn read_mps(path: &Path) -> anyhow::Result<MpsState> {
    read_json::<MpsFile>(path)?.to_state()
}

pub fn read_tomography(path: &Path) -> anyhow::Result<TomographyData> {
    read_json::<TomographyFile>(path)?.to_data()
}

#[cfg(test)]
mod tests {
    use super::*;
    use hmps_core::mps::{named_state, NamedState};
    use hmps_core::tomo::{exact_reductions, perturb};

    #[test]
    fn mps_round_trip() {
        let psi = MpsState::random(5, 3, 2, 4).unwrap();
        let file = MpsFile::from_state(&psi, Some(Meta::new("test", Some(4), Thresholds::default())));
        let text = serde_json::to_string(&file).unwrap();
        let back: MpsFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, file);
        let state = back.to_state().unwrap();
        assert_eq!(state.tensors(), psi.tensors());
        assert_eq!(state.bond_dims(), psi.bond_dims());
    }

    #[test]
    fn mps_field_names_are_fixed() {
        let psi = named_state(NamedState::Ghz, 2, 2).unwrap();
        let value = serde_json::to_value(MpsFile::from_state(&psi, None)).unwrap();
        let obj = value.as_object().unwrap();
        let mut keys: Vec<_> = obj.keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(keys, ["bond_dims", "d", "n", "tensors", "version"]);
        let entry = &value["tensors"][0][1][1][1];
        assert!((entry[0].as_f64().unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(entry[1].as_f64(), Some(0.0));
    }

    #[test]
    fn tomography_round_trip() {
        let psi = named_state(NamedState::Aklt, 4, 3).unwrap();
        let data = perturb(&exact_reductions(&psi, 1).unwrap(), 0.01, 2).unwrap();
        let file = TomographyFile::from_data(&data, None);
        let text = serde_json::to_string(&file).unwrap();
        assert!(!text.contains("confidence"));
        let back: TomographyFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_data().unwrap(), data);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let psi = MpsState::random(3, 2, 2, 1).unwrap();
        let mut file = MpsFile::from_state(&psi, None);
        file.version = 2;
        assert!(file.to_state().is_err());
        let mut file = MpsFile::from_state(&psi, None);
        file.tensors[1][0].pop();
        assert!(file.to_state().is_err());
        let mut file = MpsFile::from_state(&psi, None);
        file.d = 3;
        assert!(file.to_state().is_err());

        let data = exact_reductions(&psi, 1).unwrap();
        let mut file = TomographyFile::from_data(&data, None);
        file.windows[0].epsilon = -0.1;
        assert!(file.to_data().is_err());
        let mut file = TomographyFile::from_data(&data, None);
        file.windows[0].sigma[0][0] = [3.0, 0.0];
        assert!(file.to_data().is_err());
    }

    #[test]
    fn meta_carries_extra_fields() {
        let meta = Meta::new("reconstruct", Some(7), Thresholds::default()).with("converged", false);
        let value = serde_json::to_value(&meta).unwrap();
        assert_eq!(value["converged"], Value::Bool(false));
        assert_eq!(value["seed"], serde_json::json!(7));
        assert_eq!(value["thresholds"]["one_tol"], serde_json::json!(1e-8));
        let back: Meta = serde_json::from_value(value).unwrap();
        assert_eq!(back, meta);
    }
}
