use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Per-column statistics used for Z-score normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ZScore {
    pub mean: Vec<f64>,
    /// Population standard deviation.
    pub sd: Vec<f64>,
    /// Columns with zero variance; these are passed through unchanged.
    pub constant_columns: Vec<usize>,
}

impl ZScore {
    pub fn fit(x: &DMatrix<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::Empty("cannot normalize an empty matrix".into()));
        }
        let n = x.nrows() as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut sd = Vec::with_capacity(x.ncols());
        let mut constant_columns = Vec::new();
        for (j, col) in x.column_iter().enumerate() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
            if !var.is_finite() {
                return Err(Error::NonFinite(format!("column {j}")));
            }
            if var == 0.0 {
                constant_columns.push(j);
            }
            mean.push(m);
            sd.push(var.sqrt());
        }
        Ok(Self {
            mean,
            sd,
            constant_columns,
        })
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::Dimension(format!(
                "fitted on {} columns, got {}",
                self.mean.len(),
                x.ncols()
            )));
        }
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            if self.sd[j] == 0.0 {
                x[(i, j)]
            } else {
                (x[(i, j)] - self.mean[j]) / self.sd[j]
            }
        }))
    }
}

/// Normalize every column by the statistics of the whole matrix.
/// Constant columns are left unchanged and listed in the record.
pub fn zscore_fit_apply(x: &DMatrix<f64>) -> Result<(DMatrix<f64>, ZScore)> {
    let z = ZScore::fit(x)?;
    for j in &z.constant_columns {
        log::warn!("column {j} has zero variance and is left unscaled");
    }
    Ok((z.apply(x)?, z))
}
