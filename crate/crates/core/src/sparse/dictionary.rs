use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::PatchGeometry;

pub const DICTIONARY_FORMAT: &str = "lsksvd-dict";
pub const DICTIONARY_VERSION: u32 = 1;

const UNIT_NORM_TOL: f64 = 1e-9;

/// A `k x K` matrix of unit-norm atoms tied to a patch geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: DMatrix<f64>,
    geometry: PatchGeometry,
}

impl Dictionary {
    /// Wraps `atoms`, which must already be unit-norm columns.
    pub fn new(atoms: DMatrix<f64>, geometry: PatchGeometry) -> Result<Self> {
        if atoms.nrows() != geometry.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} atom rows for a {}x{}x{} patch",
                atoms.nrows(),
                geometry.patch_size,
                geometry.patch_size,
                geometry.channels
            )));
        }
        if atoms.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "dictionary needs at least one atom".into(),
            ));
        }
        if atoms.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dictionary atoms"));
        }
        for (j, col) in atoms.column_iter().enumerate() {
            let norm = col.norm();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::InvalidArgument(format!("atom {j} has norm {norm}")));
            }
        }
        Ok(Self { atoms, geometry })
    }

    /// Normalizes every column; all-zero columns are rejected.
    pub fn from_unnormalized(mut atoms: DMatrix<f64>, geometry: PatchGeometry) -> Result<Self> {
        for (j, mut col) in atoms.column_iter_mut().enumerate() {
            let norm = col.norm();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "atom {j} cannot be normalized"
                )));
            }
            col /= norm;
        }
        Self::new(atoms, geometry)
    }

    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    pub fn geometry(&self) -> PatchGeometry {
        self.geometry
    }

    /// Signal dimension `k`.
    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }

    /// Atom count `K`.
    pub fn n_atoms(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn to_file(&self) -> DictionaryFile {
        DictionaryFile {
            format: DICTIONARY_FORMAT.to_string(),
            version: DICTIONARY_VERSION,
            patch_size: self.geometry.patch_size,
            channels: self.geometry.channels,
            k: self.dim(),
            n_atoms: self.n_atoms(),
            atoms: self
                .atoms
                .column_iter()
                .map(|c| c.iter().copied().collect())
                .collect(),
        }
    }

    pub fn from_file(file: DictionaryFile) -> Result<Self> {
        if file.format != DICTIONARY_FORMAT {
            return Err(Error::Format(format!(
                "unknown format tag {:?}",
                file.format
            )));
        }
        if file.version != DICTIONARY_VERSION {
            return Err(Error::Format(format!(
                "unsupported version {}",
                file.version
            )));
        }
        let geometry = PatchGeometry::new(file.patch_size, file.channels)?;
        if file.k != geometry.dim() {
            return Err(Error::Format(format!(
                "k = {} but patch geometry implies {}",
                file.k,
                geometry.dim()
            )));
        }
        if file.atoms.len() != file.n_atoms {
            return Err(Error::Format(format!(
                "K = {} but {} atoms listed",
                file.n_atoms,
                file.atoms.len()
            )));
        }
        if let Some(bad) = file.atoms.iter().find(|a| a.len() != file.k) {
            return Err(Error::Format(format!(
                "atom of length {} (k = {})",
                bad.len(),
                file.k
            )));
        }
        let atoms = DMatrix::from_fn(file.k, file.n_atoms, |i, j| file.atoms[j][i]);
        Self::new(atoms, geometry)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// On-disk dictionary document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryFile {
    pub format: String,
    pub version: u32,
    pub patch_size: usize,
    pub channels: usize,
    pub k: usize,
    #[serde(rename = "K")]
    pub n_atoms: usize,
    pub atoms: Vec<Vec<f64>>,
}

/// Sparse coefficients over a dictionary. `support` lists the nonzero
/// indices in the order the pursuit selected them.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub coefficients: Vec<f64>,
    pub support: Vec<usize>,
}

impl SparseCode {
    pub fn zeros(n_atoms: usize) -> Self {
        Self {
            coefficients: vec![0.0; n_atoms],
            support: Vec::new(),
        }
    }

    /// `D · α`.
    pub fn reconstruct(&self, dict: &Dictionary) -> Vec<f64> {
        let mut out = vec![0.0; dict.dim()];
        for &j in &self.support {
            let a = self.coefficients[j];
            for (o, d) in out.iter_mut().zip(dict.atoms().column(j).iter()) {
                *o += a * d;
            }
        }
        out
    }
}
