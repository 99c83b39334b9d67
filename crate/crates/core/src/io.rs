//! Chain and trajectory files.
//!
//! A chain file is JSON: either `{"d": 3, "matrix": [[...], ...], "initial": [...]}`
//! (with `d` and `initial` optional) or a bare matrix. Trajectory files hold
//! whitespace-separated state indices.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain::{Distribution, Trajectory, TransitionMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ChainFile {
    pub matrix: TransitionMatrix,
    pub initial: Option<Distribution>,
}

#[derive(Serialize)]
struct ChainFileOut<'a> {
    d: usize,
    matrix: &'a TransitionMatrix,
    #[serde(skip_serializing_if = "Option::is_none")]
    initial: Option<&'a Distribution>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ChainFileRepr {
    Full {
        #[serde(default)]
        d: Option<usize>,
        matrix: TransitionMatrix,
        #[serde(default)]
        initial: Option<Distribution>,
    },
    Bare(TransitionMatrix),
}

impl ChainFile {
    pub fn new(matrix: TransitionMatrix, initial: Option<Distribution>) -> Result<Self> {
        if let Some(init) = &initial {
            if init.d() != matrix.d() {
                return Err(Error::DimensionMismatch {
                    expected: matrix.d(),
                    found: init.d(),
                });
            }
        }
        Ok(Self { matrix, initial })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let (matrix, initial) = match serde_json::from_str::<ChainFileRepr>(text) {
            Ok(ChainFileRepr::Full { d, matrix, initial }) => {
                if let Some(d) = d.filter(|&d| d != matrix.d()) {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: matrix.d(),
                    });
                }
                (matrix, initial)
            }
            Ok(ChainFileRepr::Bare(m)) => (m, None),
            // re-parse strictly for a precise validation message
            Err(_) => {
                let v: serde_json::Value = serde_json::from_str(text)?;
                let raw = v.get("matrix").cloned().unwrap_or(v);
                return Err(serde_json::from_value::<TransitionMatrix>(raw)
                    .err()
                    .map(Error::from)
                    .unwrap_or_else(|| Error::Parse("malformed chain file".into())));
            }
        };
        Self::new(matrix, initial)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let out = ChainFileOut {
            d: self.matrix.d(),
            matrix: &self.matrix,
            initial: self.initial.as_ref(),
        };
        Ok(serde_json::to_string_pretty(&out)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }
}

pub fn read_trajectory(path: &Path, d: usize) -> Result<Trajectory> {
    Trajectory::parse(&std::fs::read_to_string(path)?, d)
}

pub fn write_trajectory(path: &Path, x: &Trajectory) -> Result<()> {
    std::fs::write(path, format!("{x}\n"))?;
    Ok(())
}
