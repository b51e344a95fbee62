//! Dataset bundles on disk: `train.csv` (features and label `y`), `test.csv`
//! (features), optional `eval.csv` (features and `y`) and a `meta` file of
//! `key=value` lines.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::io::{read_csv_dataset, write_csv};
use super::{Dataset, EvalSet};
use crate::error::{Error, Result};

pub const LABEL_COLUMN: &str = "y";

/// Ordered `key=value` metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Meta {
    entries: Vec<(String, String)>,
}

impl Meta {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert or replace a key.
    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut meta = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
                line: i + 1,
                message: format!("expected key=value, got {line:?}"),
            })?;
            meta.set(k.trim(), v.trim());
        }
        Ok(meta)
    }

    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub dataset: Dataset,
    pub feature_names: Vec<String>,
    pub meta: Meta,
}

impl Bundle {
    /// Bundle with default feature names `x0, x1, ...`.
    pub fn new(dataset: Dataset, meta: Meta) -> Self {
        let feature_names = (0..dataset.dim()).map(|j| format!("x{j}")).collect();
        Self {
            dataset,
            feature_names,
            meta,
        }
    }
}

fn with_label(x: &DMatrix<f64>, y: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone().insert_column(x.ncols(), 0.0);
    out.set_column(x.ncols(), y);
    out
}

pub fn write_bundle(dir: impl AsRef<Path>, bundle: &Bundle) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let d = &bundle.dataset;
    if bundle.feature_names.len() != d.dim() {
        return Err(Error::Dimension(format!(
            "{} feature names for {} columns",
            bundle.feature_names.len(),
            d.dim()
        )));
    }
    let mut labeled = bundle.feature_names.clone();
    labeled.push(LABEL_COLUMN.to_string());
    write_csv(
        dir.join("train.csv"),
        &labeled,
        &with_label(&d.train_x, &d.train_y),
    )?;
    write_csv(dir.join("test.csv"), &bundle.feature_names, &d.test_x)?;
    let eval_path = dir.join("eval.csv");
    match &d.eval {
        Some(e) => write_csv(&eval_path, &labeled, &with_label(&e.x, &e.y))?,
        None if eval_path.exists() => {
            std::fs::remove_file(&eval_path).map_err(|e| Error::io(&eval_path, e))?
        }
        None => {}
    }
    let mut meta = bundle.meta.clone();
    meta.set("seed", d.seed);
    let meta_path = dir.join("meta");
    std::fs::write(&meta_path, meta.render()).map_err(|e| Error::io(&meta_path, e))
}

pub fn read_bundle(dir: impl AsRef<Path>) -> Result<Bundle> {
    let dir = dir.as_ref();
    let (train_x, train_y, names) = read_csv_dataset(dir.join("train.csv"), Some(LABEL_COLUMN))?;
    let (test_x, _, test_names) = read_csv_dataset(dir.join("test.csv"), None)?;
    if test_names != names {
        return Err(Error::Dimension(format!(
            "train features {names:?} differ from test features {test_names:?}"
        )));
    }
    let eval_path = dir.join("eval.csv");
    let eval = if eval_path.exists() {
        let (x, y, _) = read_csv_dataset(&eval_path, Some(LABEL_COLUMN))?;
        Some(EvalSet {
            x,
            y: y.unwrap_or_default(),
        })
    } else {
        None
    };
    let meta_path = dir.join("meta");
    let meta = if meta_path.exists() {
        Meta::parse(&std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?)?
    } else {
        Meta::new()
    };
    let seed = match meta.get("seed") {
        Some(s) => s.parse().map_err(|_| Error::Config {
            line: 0,
            message: format!("seed {s:?} in meta is not an integer"),
        })?,
        None => 0,
    };
    let dataset = Dataset::new(train_x, train_y.unwrap_or_default(), test_x, eval, seed)?;
    Ok(Bundle {
        dataset,
        feature_names: names,
        meta,
    })
}
