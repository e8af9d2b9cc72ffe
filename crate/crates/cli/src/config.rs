//! Subcommand configuration files. Relative paths resolve against the file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use pzflow::macro_model::{MacroCoefficients, MacroConfig};
use pzflow::sensitivity::AuditConfig;
use pzflow::{CanonicalGeometry, CellMesh, MaterialSet};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::CliError;

fn default_resolution() -> usize {
    32
}
fn default_eps0() -> f64 {
    1e-3
}
fn default_electrode() -> usize {
    2
}

/// Where the cell comes from: a mesh file or the canonical generator, and a material set.
#[derive(Clone, Debug, Deserialize)]
pub struct CellSource {
    /// Mesh JSON; the canonical cell is generated when absent.
    pub mesh: Option<PathBuf>,
    /// Canonical geometry; the reference geometry when absent.
    pub geometry: Option<CanonicalGeometry>,
    /// Elements per side of the generated cell.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    /// Material set JSON; the reference set at `eps0` when absent.
    pub materials: Option<PathBuf>,
    /// Cell size in m, used with the reference materials.
    #[serde(default = "default_eps0")]
    pub eps0: f64,
}

impl CellSource {
    pub fn load_mesh(&self, base: &Path) -> Result<CellMesh, CliError> {
        match &self.mesh {
            Some(p) => {
                let text = read_input(&base.join(p), "MissingMesh")?;
                CellMesh::from_json(&text).map_err(CliError::from)
            }
            None => {
                let g = self.geometry.clone().unwrap_or_else(CanonicalGeometry::reference);
                pzflow::generate_canonical_cell(&g, self.resolution).map_err(CliError::from)
            }
        }
    }

    pub fn load_materials(&self, base: &Path) -> Result<MaterialSet, CliError> {
        match &self.materials {
            Some(p) => {
                let text = read_input(&base.join(p), "MissingMaterial")?;
                serde_json::from_str(&text).map_err(|e| CliError::config("InvalidMaterial", e.to_string()))
            }
            None => Ok(MaterialSet::reference(self.eps0)),
        }
    }

    pub fn inputs(&self, base: &Path) -> Vec<PathBuf> {
        self.mesh.iter().chain(&self.materials).map(|p| base.join(p)).collect()
    }
}

#[derive(Clone, Debug, Deserialize)]
pub struct AuditFile {
    #[serde(flatten)]
    pub cell: CellSource,
    #[serde(flatten)]
    pub audit: AuditConfig,
}

#[derive(Clone, Debug, Deserialize)]
pub struct SimulateFile {
    #[serde(flatten)]
    pub run: MacroConfig,
    /// Explicit 1D coefficients; computed from the cell when absent.
    pub coefficients: Option<MacroCoefficients<f64>>,
    #[serde(flatten)]
    pub cell: CellSource,
    /// Actuated electrode, 1-based.
    #[serde(default = "default_electrode")]
    pub electrode: usize,
}

pub fn read_input(path: &Path, kind: &str) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::config(kind, format!("{}: {e}", path.display())))
}

/// Parses a config file and returns it with the directory relative paths resolve against.
pub fn load<C: DeserializeOwned>(path: &Path) -> Result<(C, PathBuf), CliError> {
    let text = read_input(path, "MissingConfig")?;
    let cfg = serde_json::from_str(&text).map_err(|e| CliError::config("InvalidConfig", format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}
