use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::LinearModel;
use crate::loss::LossSpec;

/// Anything that maps input rows to output rows (1 column for scalar models,
/// K columns of logits for multiclass models).
pub trait Predictor {
    fn outputs(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>>;
}

impl Predictor for LinearModel {
    fn outputs(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let p = self.predict(x)?;
        Ok(DMatrix::from_column_slice(p.len(), 1, p.as_slice()))
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn outputs(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        (**self).outputs(x)
    }
}

/// Per-row losses of `model` on `(x, y)`.
pub fn pointwise_losses<P: Predictor + ?Sized>(
    model: &P,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    metric: &LossSpec,
) -> Result<Vec<f64>> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension(format!(
            "{} rows but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    let out = model.outputs(x)?;
    (0..x.nrows())
        .map(|i| {
            let row: Vec<f64> = out.row(i).iter().copied().collect();
            metric.value(&row, y[i])
        })
        .collect()
}
