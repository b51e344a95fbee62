//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # comments start with '#'
//! trials = 100
//! seed = 1
//! task = regression            # regression | binary | multiclass
//! data.source = toy            # toy | bundle | blobs
//! methods = erm, eiwerm, riwerm, one_step, one_step_tukey
//! method.one_step_tukey.kind = one_step
//! method.one_step_tukey.loss = tukey
//! method.eiwerm.tuning = median # median | full_grid | ulsif
//! ```
//!
//! Unknown keys are errors so typos never silently fall back to defaults.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use crate::data::{BlobsSpec, ToySpec};
use crate::error::{Error, Result};
use crate::loss::LossKind;
use crate::one_step::GradAltConfig;
use crate::selection::{Strategy, DEFAULT_FOLDS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    Erm,
    Iwerm,
    Eiwerm,
    Riwerm,
    OneStep,
    OneStepGrad,
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "erm" => Ok(MethodKind::Erm),
            "iwerm" => Ok(MethodKind::Iwerm),
            "eiwerm" => Ok(MethodKind::Eiwerm),
            "riwerm" => Ok(MethodKind::Riwerm),
            "one_step" | "onestep" => Ok(MethodKind::OneStep),
            "one_step_grad" => Ok(MethodKind::OneStepGrad),
            other => Err(Error::InvalidParameter(format!(
                "unknown method kind {other:?}"
            ))),
        }
    }
}

impl MethodKind {
    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Erm => "erm",
            MethodKind::Iwerm => "iwerm",
            MethodKind::Eiwerm => "eiwerm",
            MethodKind::Riwerm => "riwerm",
            MethodKind::OneStep => "one_step",
            MethodKind::OneStepGrad => "one_step_grad",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Regression,
    Binary,
    Multiclass,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "regression" => Ok(Task::Regression),
            "binary" => Ok(Task::Binary),
            "multiclass" => Ok(Task::Multiclass),
            other => Err(Error::InvalidParameter(format!("unknown task {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodConfig {
    pub label: String,
    pub kind: MethodKind,
    /// Training surrogate; `None` picks the task default.
    pub loss: Option<LossKind>,
    pub tuning: Strategy,
    /// Fixed values that bypass tuning of the corresponding parameter.
    pub lambda_f: Option<f64>,
    pub lambda_g: Option<f64>,
    pub gamma: Option<f64>,
    pub alpha: Option<f64>,
}

impl MethodConfig {
    fn new(label: &str) -> Self {
        Self {
            label: label.to_string(),
            kind: label.parse().unwrap_or(MethodKind::Erm),
            loss: None,
            tuning: Strategy::MedianHeuristic,
            lambda_f: None,
            lambda_g: None,
            gamma: None,
            alpha: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Toy(ToySpec),
    Blobs(BlobsSpec),
    /// A bundle directory; each trial subsamples `n_tr` training and `n_te`
    /// test rows (all rows when unset).
    Bundle {
        path: PathBuf,
        n_tr: Option<usize>,
        n_te: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub trials: usize,
    pub seed: u64,
    pub task: Task,
    pub source: DataSource,
    pub methods: Vec<MethodConfig>,
    /// Method whose mean error normalizes the summary.
    pub reference: Option<String>,
    /// Basis functions for f and g.
    pub basis_size: usize,
    pub folds: usize,
    pub grad: GradAltConfig,
}

fn parse_num<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config {
        line,
        message: format!("{key}: cannot parse {v:?}"),
    })
}

fn parse_pair(line: usize, key: &str, v: &str) -> Result<[f64; 2]> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => Ok([parse_num(line, key, a)?, parse_num(line, key, b)?]),
        _ => Err(Error::Config {
            line,
            message: format!("{key}: expected two comma-separated numbers"),
        }),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(usize, String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
                line: i + 1,
                message: format!("expected key = value, got {line:?}"),
            })?;
            entries.push((i + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let source_kind = entries
            .iter()
            .rev()
            .find(|(_, k, _)| k == "data.source")
            .map(|(_, _, v)| v.clone())
            .unwrap_or_else(|| "toy".to_string());
        let task = match entries.iter().rev().find(|(_, k, _)| k == "task") {
            Some((l, _, v)) => v.parse().map_err(|e: Error| Error::Config {
                line: *l,
                message: e.to_string(),
            })?,
            None if source_kind == "blobs" => Task::Multiclass,
            None => Task::Regression,
        };
        let mut cfg = ExperimentConfig {
            trials: 1,
            seed: 0,
            task,
            source: match source_kind.as_str() {
                "toy" => DataSource::Toy(ToySpec::default()),
                "blobs" => DataSource::Blobs(BlobsSpec::default()),
                "bundle" => DataSource::Bundle {
                    path: PathBuf::new(),
                    n_tr: None,
                    n_te: None,
                },
                other => {
                    return Err(Error::Config {
                        line: 0,
                        message: format!("unknown data.source {other:?}"),
                    })
                }
            },
            methods: Vec::new(),
            reference: None,
            basis_size: 50,
            folds: DEFAULT_FOLDS,
            grad: GradAltConfig::default(),
        };
        let mut method_keys: BTreeMap<String, Vec<(usize, String, String)>> = BTreeMap::new();
        let mut method_order: Option<Vec<String>> = None;
        for (line, key, v) in &entries {
            let line = *line;
            let key_s = key.as_str();
            match key_s {
                "trials" => cfg.trials = parse_num(line, key, v)?,
                "seed" => cfg.seed = parse_num(line, key, v)?,
                "task" | "data.source" => {}
                "reference" => cfg.reference = Some(v.clone()),
                "basis.b" | "basis_size" => cfg.basis_size = parse_num(line, key, v)?,
                "folds" => cfg.folds = parse_num(line, key, v)?,
                "methods" => {
                    method_order = Some(
                        v.split(',')
                            .map(|s| s.trim().to_string())
                            .filter(|s| !s.is_empty())
                            .collect(),
                    )
                }
                _ if key_s.starts_with("method.") => {
                    let rest = &key_s["method.".len()..];
                    let (label, field) = rest.rsplit_once('.').ok_or_else(|| Error::Config {
                        line,
                        message: format!("expected method.<label>.<field>, got {key}"),
                    })?;
                    method_keys.entry(label.to_string()).or_default().push((
                        line,
                        field.to_string(),
                        v.clone(),
                    ));
                }
                _ if key_s.starts_with("grad.") => {
                    cfg.set_grad(line, &key_s["grad.".len()..], v)?
                }
                _ if key_s.starts_with("data.") => {
                    cfg.set_data(line, &key_s["data.".len()..], v)?
                }
                _ => {
                    return Err(Error::Config {
                        line,
                        message: format!("unknown key {key:?}"),
                    })
                }
            }
        }
        let order = method_order.ok_or_else(|| Error::Config {
            line: 0,
            message: "missing `methods`".into(),
        })?;
        for label in &order {
            let mut m = MethodConfig::new(label);
            let mut kind_set = label.parse::<MethodKind>().is_ok();
            for (line, field, v) in method_keys.remove(label).unwrap_or_default() {
                let bad = |e: Error| Error::Config {
                    line,
                    message: e.to_string(),
                };
                match field.as_str() {
                    "kind" => {
                        m.kind = v.parse().map_err(bad)?;
                        kind_set = true;
                    }
                    "loss" => m.loss = Some(v.parse().map_err(bad)?),
                    "tuning" => m.tuning = v.parse().map_err(bad)?,
                    "lambda_f" => m.lambda_f = Some(parse_num(line, &field, &v)?),
                    "lambda_g" => m.lambda_g = Some(parse_num(line, &field, &v)?),
                    "gamma" => m.gamma = Some(parse_num(line, &field, &v)?),
                    "alpha" => m.alpha = Some(parse_num(line, &field, &v)?),
                    other => {
                        return Err(Error::Config {
                            line,
                            message: format!("unknown method field {other:?}"),
                        })
                    }
                }
            }
            if !kind_set {
                return Err(Error::Config {
                    line: 0,
                    message: format!("method {label:?} needs method.{label}.kind"),
                });
            }
            cfg.methods.push(m);
        }
        if let Some((label, rest)) = method_keys.into_iter().next() {
            return Err(Error::Config {
                line: rest.first().map(|r| r.0).unwrap_or(0),
                message: format!("method {label:?} is configured but not listed in `methods`"),
            });
        }
        if cfg.reference.is_none() && cfg.methods.iter().any(|m| m.label == "erm") {
            cfg.reference = Some("erm".into());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| {
            Err(Error::Config {
                line: 0,
                message: m.to_string(),
            })
        };
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.methods.is_empty() {
            return bad("at least one method is required");
        }
        let mut seen = std::collections::BTreeSet::new();
        for m in &self.methods {
            if !seen.insert(&m.label) {
                return bad(&format!("method {:?} is listed twice", m.label));
            }
            let grad = m.kind == MethodKind::OneStepGrad;
            if grad != (self.task == Task::Multiclass) && (grad || m.kind == MethodKind::OneStep) {
                return bad(&format!(
                    "method {:?}: one_step_grad is for multiclass tasks, one_step for regression and binary",
                    m.label
                ));
            }
        }
        if self.basis_size == 0 || self.folds < 2 {
            return bad("basis.b must be positive and folds at least 2");
        }
        if let DataSource::Bundle { path, .. } = &self.source {
            if path.as_os_str().is_empty() {
                return bad("data.path is required for bundle sources");
            }
        }
        self.grad.validate()
    }

    fn set_grad(&mut self, line: usize, field: &str, v: &str) -> Result<()> {
        let g = &mut self.grad;
        match field {
            "rounds" => g.rounds = parse_num(line, field, v)?,
            "epochs_g" => g.epochs_g = parse_num(line, field, v)?,
            "epochs_f" => g.epochs_f = parse_num(line, field, v)?,
            "batch_size" => g.batch_size = parse_num(line, field, v)?,
            "lr_g" => g.lr_g = parse_num(line, field, v)?,
            "lr_f" => g.lr_f = parse_num(line, field, v)?,
            "lr_f_halving_period" => g.lr_f_halving_period = parse_num(line, field, v)?,
            "pretrain_epochs" => g.pretrain_epochs = parse_num(line, field, v)?,
            "pretrain_lr" => g.pretrain_lr = parse_num(line, field, v)?,
            "g_cap" => g.g_cap = parse_num(line, field, v)?,
            other => {
                return Err(Error::Config {
                    line,
                    message: format!("unknown key grad.{other}"),
                })
            }
        }
        Ok(())
    }

    fn set_data(&mut self, line: usize, field: &str, v: &str) -> Result<()> {
        let unknown = || Error::Config {
            line,
            message: format!("unknown key data.{field} for this data source"),
        };
        match &mut self.source {
            DataSource::Toy(t) => match field {
                "n_tr" => t.n_tr = parse_num(line, field, v)?,
                "n_te" => t.n_te = parse_num(line, field, v)?,
                "n_eval" => t.n_eval = parse_num(line, field, v)?,
                "tr_mean" => t.tr_mean = parse_num(line, field, v)?,
                "tr_sd" => t.tr_sd = parse_num(line, field, v)?,
                "te_mean" => t.te_mean = parse_num(line, field, v)?,
                "te_sd" => t.te_sd = parse_num(line, field, v)?,
                "noise_sd" => t.noise_sd = parse_num(line, field, v)?,
                _ => return Err(unknown()),
            },
            DataSource::Blobs(b) => match field {
                "n_tr" => b.n_tr = parse_num(line, field, v)?,
                "n_te" => b.n_te = parse_num(line, field, v)?,
                "n_eval" => b.n_eval = parse_num(line, field, v)?,
                "tr_mean" => b.tr_mean = parse_pair(line, field, v)?,
                "te_mean" => b.te_mean = parse_pair(line, field, v)?,
                "tr_sd" => b.tr_sd = parse_num(line, field, v)?,
                "te_sd" => b.te_sd = parse_num(line, field, v)?,
                _ => return Err(unknown()),
            },
            DataSource::Bundle { path, n_tr, n_te } => match field {
                "path" => *path = PathBuf::from(v),
                "n_tr" => *n_tr = Some(parse_num(line, field, v)?),
                "n_te" => *n_te = Some(parse_num(line, field, v)?),
                _ => return Err(unknown()),
            },
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_example() {
        let cfg = ExperimentConfig::parse(
            "trials = 100\nseed=1 # master\nmethods = erm, eiwerm, one_step, one_step_tukey\n\
             method.one_step_tukey.kind = one_step\nmethod.one_step_tukey.loss = tukey\n\
             method.eiwerm.tuning = full_grid\ndata.n_eval = 500\n",
        )
        .unwrap();
        assert_eq!(cfg.trials, 100);
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.methods.len(), 4);
        assert_eq!(cfg.methods[3].kind, MethodKind::OneStep);
        assert_eq!(cfg.methods[3].loss, Some(LossKind::Tukey));
        assert_eq!(cfg.methods[1].tuning, Strategy::FullGrid);
        assert_eq!(cfg.reference.as_deref(), Some("erm"));
        match cfg.source {
            DataSource::Toy(t) => assert_eq!(t.n_eval, 500),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn errors_name_the_line() {
        let err = ExperimentConfig::parse("methods = erm\ntrials = many\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 2, .. }));
        assert!(ExperimentConfig::parse("methods = erm\nbogus = 1\n").is_err());
        assert!(ExperimentConfig::parse("trials = 1\n").is_err());
        assert!(ExperimentConfig::parse("methods = mine\n").is_err());
        assert!(ExperimentConfig::parse("methods = erm\ntrials = 0\n").is_err());
        assert!(ExperimentConfig::parse("methods = erm\nmethod.other.loss = tukey\n").is_err());
    }

    #[test]
    fn blobs_default_to_multiclass() {
        let cfg = ExperimentConfig::parse(
            "data.source = blobs\nmethods = erm, one_step_grad\ndata.te_mean = 1.5, 1\n",
        )
        .unwrap();
        assert_eq!(cfg.task, Task::Multiclass);
        assert!(ExperimentConfig::parse("data.source = blobs\nmethods = one_step\n").is_err());
    }
}
