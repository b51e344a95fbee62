//! JSON files for trained predictors and ratio models.

use std::path::Path;

use covashift::experiment::{FittedModel, Task};
use covashift::kernel::{BasisKind, KernelBasis, LinearModel};
use covashift::one_step::SoftmaxModel;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisFile {
    pub kind: String,
    pub input_dim: usize,
    pub bandwidth: f64,
    /// One row per center; empty for non-Gaussian bases.
    pub centers: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelFile {
    Linear {
        task: String,
        method: String,
        params: String,
        basis: BasisFile,
        coefficients: Vec<f64>,
    },
    Softmax {
        method: String,
        params: String,
        basis: BasisFile,
        /// One row per class.
        weights: Vec<Vec<f64>>,
    },
    Ratio {
        alpha: f64,
        lambda_g: f64,
        basis: BasisFile,
        coefficients: Vec<f64>,
    },
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], ncols: usize) -> Result<DMatrix<f64>, CliError> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::Model(format!("expected rows of length {ncols}")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn basis_file(b: &KernelBasis) -> BasisFile {
    let kind = match b.kind() {
        BasisKind::Gaussian => "gaussian",
        BasisKind::RawFeatures => "raw_features",
        BasisKind::Constant => "constant",
    };
    BasisFile {
        kind: kind.to_string(),
        input_dim: b.input_dim(),
        bandwidth: b.bandwidth(),
        centers: rows(b.centers()),
    }
}

pub fn basis_from(f: &BasisFile) -> Result<KernelBasis, CliError> {
    Ok(match f.kind.as_str() {
        "gaussian" => KernelBasis::gaussian(from_rows(&f.centers, f.input_dim)?, f.bandwidth)?,
        "raw_features" => KernelBasis::raw_features(f.input_dim),
        "constant" => KernelBasis::constant(f.input_dim),
        other => return Err(CliError::Model(format!("unknown basis kind {other:?}"))),
    })
}

pub fn task_name(t: Task) -> &'static str {
    match t {
        Task::Regression => "regression",
        Task::Binary => "binary",
        Task::Multiclass => "multiclass",
    }
}

impl ModelFile {
    pub fn from_fitted(model: &FittedModel, task: Task, method: &str, params: &str) -> Self {
        match model {
            FittedModel::Linear(m) => ModelFile::Linear {
                task: task_name(task).to_string(),
                method: method.to_string(),
                params: params.to_string(),
                basis: basis_file(m.basis()),
                coefficients: m.coefficients().iter().copied().collect(),
            },
            FittedModel::Softmax(m) => ModelFile::Softmax {
                method: method.to_string(),
                params: params.to_string(),
                basis: basis_file(m.basis()),
                weights: rows(m.weights()),
            },
        }
    }

    /// The predictor and the task it was trained for.
    pub fn to_fitted(&self) -> Result<(FittedModel, Task), CliError> {
        match self {
            ModelFile::Linear {
                task,
                basis,
                coefficients,
                ..
            } => {
                let m =
                    LinearModel::new(basis_from(basis)?, DVector::from_column_slice(coefficients))?;
                Ok((FittedModel::Linear(m), task.parse()?))
            }
            ModelFile::Softmax { basis, weights, .. } => {
                let b = basis_from(basis)?;
                let w = from_rows(weights, b.size())?;
                Ok((
                    FittedModel::Softmax(SoftmaxModel::new(b, w)?),
                    Task::Multiclass,
                ))
            }
            ModelFile::Ratio { .. } => Err(CliError::Model(
                "a ratio model is not a predictor; use a file written by `train`".into(),
            )),
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text =
            serde_json::to_string_pretty(self).map_err(|e| CliError::Model(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Model(format!("{}: {e}", path.display())))
    }
}
