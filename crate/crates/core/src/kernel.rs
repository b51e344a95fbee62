//! Linear-in-parameter models over Gaussian basis functions.
//!
//! A [`KernelBasis`] maps an input row `x ∈ R^d` to a feature vector of length
//! `b`; a [`LinearModel`] pairs a basis with a coefficient vector. Both the
//! predictor and the importance-weight model are built from these.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    /// `exp(-‖x − c_j‖² / 2σ²)` for each center `c_j`.
    Gaussian,
    /// The raw input coordinates followed by a constant 1.
    RawFeatures,
    /// A single basis function equal to 1 everywhere.
    Constant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelBasis {
    kind: BasisKind,
    /// b × d, one center per row. Empty (0 × d) for non-Gaussian kinds.
    centers: DMatrix<f64>,
    bandwidth: f64,
    input_dim: usize,
}

impl KernelBasis {
    pub fn gaussian(centers: DMatrix<f64>, bandwidth: f64) -> Result<Self> {
        if centers.nrows() == 0 || centers.ncols() == 0 {
            return Err(Error::Empty(
                "a Gaussian basis needs at least one center".into(),
            ));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        let input_dim = centers.ncols();
        Ok(Self {
            kind: BasisKind::Gaussian,
            centers,
            bandwidth,
            input_dim,
        })
    }

    pub fn raw_features(input_dim: usize) -> Self {
        Self {
            kind: BasisKind::RawFeatures,
            centers: DMatrix::zeros(0, input_dim),
            bandwidth: 1.0,
            input_dim,
        }
    }

    pub fn constant(input_dim: usize) -> Self {
        Self {
            kind: BasisKind::Constant,
            centers: DMatrix::zeros(0, input_dim),
            bandwidth: 1.0,
            input_dim,
        }
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn centers(&self) -> &DMatrix<f64> {
        &self.centers
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Number of basis functions `b`.
    pub fn size(&self) -> usize {
        match self.kind {
            BasisKind::Gaussian => self.centers.nrows(),
            BasisKind::RawFeatures => self.input_dim + 1,
            BasisKind::Constant => 1,
        }
    }

    /// Same centers, different bandwidth.
    pub fn with_bandwidth(&self, bandwidth: f64) -> Result<Self> {
        match self.kind {
            BasisKind::Gaussian => Self::gaussian(self.centers.clone(), bandwidth),
            _ => Ok(self.clone()),
        }
    }

    /// The n × b design matrix for `points` (n × d).
    pub fn design_matrix(&self, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if points.ncols() != self.input_dim {
            return Err(Error::Dimension(format!(
                "points have {} columns, basis expects {}",
                points.ncols(),
                self.input_dim
            )));
        }
        let n = points.nrows();
        Ok(match self.kind {
            BasisKind::Gaussian => {
                let denom = 2.0 * self.bandwidth * self.bandwidth;
                DMatrix::from_fn(n, self.size(), |i, j| {
                    let sq = squared_distance(points, i, &self.centers, j);
                    (-sq / denom).exp()
                })
            }
            BasisKind::RawFeatures => {
                let d = self.input_dim;
                DMatrix::from_fn(n, d + 1, |i, j| if j < d { points[(i, j)] } else { 1.0 })
            }
            BasisKind::Constant => DMatrix::from_element(n, 1, 1.0),
        })
    }
}

fn squared_distance(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    a.row(i)
        .iter()
        .zip(b.row(j).iter())
        .map(|(x, c)| (x - c) * (x - c))
        .sum()
}

/// Gaussian design matrix; rejects non-Gaussian bases.
pub fn gaussian_design_matrix(points: &DMatrix<f64>, basis: &KernelBasis) -> Result<DMatrix<f64>> {
    if basis.kind() != BasisKind::Gaussian {
        return Err(Error::InvalidParameter(format!(
            "expected a Gaussian basis, got {:?}",
            basis.kind()
        )));
    }
    basis.design_matrix(points)
}

/// Draw `b` kernel centers uniformly from the rows of `test_x`.
///
/// Rows are distinct when `b ≤ n_te`; otherwise they are drawn with replacement.
pub fn choose_centers(test_x: &DMatrix<f64>, b: usize, rng_seed: u64) -> Result<DMatrix<f64>> {
    let n = test_x.nrows();
    if n == 0 {
        return Err(Error::Empty(
            "cannot choose centers from an empty test set".into(),
        ));
    }
    if b == 0 {
        return Err(Error::InvalidParameter(
            "number of centers must be at least 1".into(),
        ));
    }
    let mut rng = seed::rng(rng_seed);
    let rows: Vec<usize> = if b <= n {
        index::sample(&mut rng, n, b).into_vec()
    } else {
        (0..b).map(|_| rng.random_range(0..n)).collect()
    };
    Ok(test_x.select_rows(&rows))
}

/// Median of the `n·b` Euclidean distances between `points` and `centers`.
///
/// Falls back to the smallest positive distance when the median is zero.
pub fn median_heuristic_bandwidth(points: &DMatrix<f64>, centers: &DMatrix<f64>) -> Result<f64> {
    if points.nrows() == 0 || centers.nrows() == 0 {
        return Err(Error::Empty(
            "median heuristic needs points and centers".into(),
        ));
    }
    if points.ncols() != centers.ncols() {
        return Err(Error::Dimension(format!(
            "points have {} columns, centers {}",
            points.ncols(),
            centers.ncols()
        )));
    }
    let mut dists = Vec::with_capacity(points.nrows() * centers.nrows());
    for i in 0..points.nrows() {
        for j in 0..centers.nrows() {
            dists.push(squared_distance(points, i, centers, j).sqrt());
        }
    }
    let med = median(&mut dists);
    if med > 0.0 {
        return Ok(med);
    }
    dists
        .iter()
        .copied()
        .filter(|d| *d > 0.0)
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::InvalidParameter("all sample-center distances are zero".into()))
}

/// Median with the even-count midpoint convention. Reorders `values`.
pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Coefficients over a basis: `f(x) = coefficientsᵀ φ(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    basis: KernelBasis,
    coefficients: DVector<f64>,
}

impl LinearModel {
    pub fn new(basis: KernelBasis, coefficients: DVector<f64>) -> Result<Self> {
        if coefficients.len() != basis.size() {
            return Err(Error::Dimension(format!(
                "{} coefficients for a basis of size {}",
                coefficients.len(),
                basis.size()
            )));
        }
        Ok(Self {
            basis,
            coefficients,
        })
    }

    pub fn zeros(basis: KernelBasis) -> Self {
        let b = basis.size();
        Self {
            basis,
            coefficients: DVector::zeros(b),
        }
    }

    pub fn basis(&self) -> &KernelBasis {
        &self.basis
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coefficients
    }

    pub fn set_coefficients(&mut self, coefficients: DVector<f64>) -> Result<()> {
        if coefficients.len() != self.basis.size() {
            return Err(Error::Dimension(format!(
                "{} coefficients for a basis of size {}",
                coefficients.len(),
                self.basis.size()
            )));
        }
        self.coefficients = coefficients;
        Ok(())
    }

    pub fn predict(&self, points: &DMatrix<f64>) -> Result<DVector<f64>> {
        Ok(self.basis.design_matrix(points)? * &self.coefficients)
    }
}

pub fn predict(model: &LinearModel, points: &DMatrix<f64>) -> Result<DVector<f64>> {
    model.predict(points)
}
