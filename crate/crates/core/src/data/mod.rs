//! Datasets, generators, preprocessing and on-disk formats.

mod blobs;
mod bundle;
mod io;
mod shift;
mod toy;
mod zscore;

pub use blobs::{generate_blobs, BlobsSpec};
pub use bundle::{read_bundle, write_bundle, Bundle, Meta, LABEL_COLUMN};
pub use io::{format_f64, read_csv_dataset, read_csv_table, write_csv, CsvTable, LabeledColumns};
pub use shift::{
    assign_by_direction, projections, shift_split, split_by_column, train_probability,
    CandidateRecord, ProbeTask, ShiftSplit, ShiftSplitSpec,
};
pub use toy::{generate_toy, sinc, ToySpec};
pub use zscore::{zscore_fit_apply, ZScore};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Labeled held-out test data used only for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

/// Labeled training samples plus unlabeled test inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train_x: DMatrix<f64>,
    pub train_y: DVector<f64>,
    pub test_x: DMatrix<f64>,
    pub eval: Option<EvalSet>,
    pub seed: u64,
}

impl Dataset {
    pub fn new(
        train_x: DMatrix<f64>,
        train_y: DVector<f64>,
        test_x: DMatrix<f64>,
        eval: Option<EvalSet>,
        seed: u64,
    ) -> Result<Self> {
        if train_x.nrows() == 0 {
            return Err(Error::Empty("training set has no rows".into()));
        }
        if test_x.nrows() == 0 {
            return Err(Error::Empty("test set has no rows".into()));
        }
        if train_y.len() != train_x.nrows() {
            return Err(Error::Dimension(format!(
                "{} training rows but {} labels",
                train_x.nrows(),
                train_y.len()
            )));
        }
        let d = train_x.ncols();
        if test_x.ncols() != d {
            return Err(Error::Dimension(format!(
                "train has {d} columns, test has {}",
                test_x.ncols()
            )));
        }
        if let Some(e) = &eval {
            if e.x.ncols() != d || e.x.nrows() != e.y.len() {
                return Err(Error::Dimension(format!(
                    "eval block is {}x{} with {} labels, expected {d} columns",
                    e.x.nrows(),
                    e.x.ncols(),
                    e.y.len()
                )));
            }
        }
        Ok(Self {
            train_x,
            train_y,
            test_x,
            eval,
            seed,
        })
    }

    pub fn n_train(&self) -> usize {
        self.train_x.nrows()
    }

    pub fn n_test(&self) -> usize {
        self.test_x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.train_x.ncols()
    }

    /// Train and test inputs stacked, train first.
    pub fn all_inputs(&self) -> DMatrix<f64> {
        let (n1, n2, d) = (self.n_train(), self.n_test(), self.dim());
        DMatrix::from_fn(n1 + n2, d, |i, j| {
            if i < n1 {
                self.train_x[(i, j)]
            } else {
                self.test_x[(i - n1, j)]
            }
        })
    }

    /// Restrict to the given train and test rows; the eval block is kept.
    pub fn subset(&self, train_idx: &[usize], test_idx: &[usize]) -> Result<Self> {
        Self::new(
            self.train_x.select_rows(train_idx),
            DVector::from_iterator(train_idx.len(), train_idx.iter().map(|&i| self.train_y[i])),
            self.test_x.select_rows(test_idx),
            self.eval.clone(),
            self.seed,
        )
    }
}
