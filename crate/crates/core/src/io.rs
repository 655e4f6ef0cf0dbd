//! Coefficient files and solve metadata.
//!
//! Coefficient file layout, all little-endian:
//!
//! ```text
//! offset  size   field
//! 0       4      magic "SPHC"
//! 4       4      u32 format version (1)
//! 8       8      u64 number of spheres N
//! 16      4      u32 ell_max
//! 20      1      u8 role (0 = density, 1 = trace)
//! 21      3      zero padding
//! 24      8N     f64 radii
//! 24+8N   8N(ell_max+1)²   f64 coefficients, sphere-major, index ℓ² + ℓ + m within a sphere
//! ```

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::block_len;
use crate::solver::{Formulation, SolveReport, SolverSettings};
use crate::trace_space::{GlobalCoefficients, Role};

pub const MAGIC: &[u8; 4] = b"SPHC";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

pub fn encode_coefficients(u: &GlobalCoefficients) -> Vec<u8> {
    let n = u.n_spheres();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * (n + u.as_slice().len()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(u.ell_max() as u32).to_le_bytes());
    out.push(match u.role() {
        Role::Density => 0,
        Role::Trace => 1,
    });
    out.extend_from_slice(&[0; 3]);
    for r in u.radii().iter() {
        out.extend_from_slice(&r.to_le_bytes());
    }
    for v in u.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_f64s(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect()
}

pub fn decode_coefficients(bytes: &[u8]) -> Result<GlobalCoefficients> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::Format("not a coefficient file".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported coefficient file version {version}")));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let ell_max = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    let role = match bytes[20] {
        0 => Role::Density,
        1 => Role::Trace,
        other => return Err(Error::Format(format!("unknown role tag {other}"))),
    };
    let expected = n
        .checked_mul(1 + block_len(ell_max))
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Format("header sizes overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "coefficient file has {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let radii: Arc<[f64]> = read_f64s(&bytes[HEADER_LEN..HEADER_LEN + 8 * n]).into();
    let data = read_f64s(&bytes[HEADER_LEN + 8 * n..]);
    GlobalCoefficients::from_vec(radii, ell_max, role, data)
}

pub fn write_coefficients(path: &Path, u: &GlobalCoefficients) -> Result<()> {
    fs::write(path, encode_coefficients(u)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_coefficients(path: &Path) -> Result<GlobalCoefficients> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode_coefficients(&bytes)
}

/// Metadata record stored next to a solution's coefficient file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveMetadata {
    pub config_hash: String,
    pub ell_max: usize,
    pub formulation: Formulation,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub final_residual: f64,
    pub energy: f64,
    pub settings: SolverSettings,
    /// Seconds; absent in deterministic runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
}

impl SolveMetadata {
    pub fn from_report(report: &SolveReport, settings: &SolverSettings, config_hash: &str, deterministic: bool) -> Self {
        Self {
            config_hash: config_hash.to_string(),
            ell_max: report.solution.ell_max(),
            formulation: report.formulation,
            iterations: report.iterations,
            residuals: report.residual_history.clone(),
            final_residual: report.final_residual,
            energy: report.energy,
            settings: *settings,
            wall_time: (!deterministic).then(|| report.wall_time.as_secs_f64()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
