//! Trials × methods with failure accounting and deterministic output.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::seq::index::sample;

use super::config::{DataSource, ExperimentConfig};
use super::methods::{run_method, TrialContext};
use crate::data::{generate_blobs, generate_toy, read_bundle, Bundle, Dataset};
use crate::error::{Error, Result};
use crate::seed;
use crate::stats::{summarize, MethodSummary, TrialRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub method: String,
    pub trial: usize,
    pub seed: u64,
    pub status: TrialStatus,
    pub error: Option<f64>,
    /// Failure message, empty on success.
    pub message: String,
    pub fit_seconds: f64,
    pub params: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    /// Sorted by (method, trial).
    pub rows: Vec<TrialRow>,
    pub summary: Vec<MethodSummary>,
}

/// Data for trial `trial` (seed `derive(cfg.seed, trial)`).
pub fn trial_dataset(
    cfg: &ExperimentConfig,
    bundle: Option<&Bundle>,
    trial_seed: u64,
) -> Result<Dataset> {
    match &cfg.source {
        DataSource::Toy(spec) => generate_toy(&crate::data::ToySpec {
            seed: trial_seed,
            ..spec.clone()
        }),
        DataSource::Blobs(spec) => generate_blobs(&crate::data::BlobsSpec {
            seed: trial_seed,
            ..spec.clone()
        }),
        DataSource::Bundle { n_tr, n_te, .. } => {
            let d = &bundle
                .ok_or_else(|| Error::Empty("bundle not loaded".into()))?
                .dataset;
            let mut rng = seed::rng(seed::derive_named(trial_seed, "subsample"));
            let mut draw = |n: usize, want: Option<usize>, what: &str| -> Result<Vec<usize>> {
                let k = want.unwrap_or(n);
                if k == 0 || k > n {
                    return Err(Error::InvalidParameter(format!(
                        "cannot draw {k} {what} rows from {n}"
                    )));
                }
                let mut idx = sample(&mut rng, n, k).into_vec();
                idx.sort_unstable();
                Ok(idx)
            };
            let tr = draw(d.n_train(), *n_tr, "training")?;
            let te = draw(d.n_test(), *n_te, "test")?;
            let mut out = d.subset(&tr, &te)?;
            out.seed = trial_seed;
            Ok(out)
        }
    }
}

/// Run every (trial, method) pair on a pool of `jobs` threads.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentResult> {
    cfg.validate()?;
    let bundle = match &cfg.source {
        DataSource::Bundle { path, .. } => Some(read_bundle(path)?),
        _ => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot build thread pool: {e}")))?;
    let per_trial: Vec<Vec<TrialRow>> = pool.install(|| {
        use rayon::prelude::*;
        (0..cfg.trials)
            .into_par_iter()
            .map(|trial| run_trial(cfg, bundle.as_ref(), trial))
            .collect()
    });
    let mut rows: Vec<TrialRow> = per_trial.into_iter().flatten().collect();
    rows.sort_by(|a, b| a.method.cmp(&b.method).then(a.trial.cmp(&b.trial)));

    let records: Vec<TrialRecord> = rows
        .iter()
        .filter_map(|r| {
            r.error.map(|error| TrialRecord {
                method: r.method.clone(),
                trial: r.trial,
                error,
                fit_seconds: r.fit_seconds,
            })
        })
        .collect();
    let mut failed: BTreeMap<String, usize> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.status == TrialStatus::Failed) {
        *failed.entry(r.method.clone()).or_default() += 1;
    }
    let order: Vec<String> = cfg.methods.iter().map(|m| m.label.clone()).collect();
    let summary = summarize(&records, &order, &failed, cfg.reference.as_deref());
    Ok(ExperimentResult { rows, summary })
}

fn run_trial(cfg: &ExperimentConfig, bundle: Option<&Bundle>, trial: usize) -> Vec<TrialRow> {
    let trial_seed = seed::derive(cfg.seed, trial as u64);
    let failed_all = |message: String| -> Vec<TrialRow> {
        cfg.methods
            .iter()
            .map(|m| TrialRow {
                method: m.label.clone(),
                trial,
                seed: trial_seed,
                status: TrialStatus::Failed,
                error: None,
                message: message.clone(),
                fit_seconds: 0.0,
                params: String::new(),
            })
            .collect()
    };
    let data = match trial_dataset(cfg, bundle, trial_seed) {
        Ok(d) => d,
        Err(e) => return failed_all(e.to_string()),
    };
    let ctx = TrialContext {
        data,
        task: cfg.task,
        seed: trial_seed,
        folds: cfg.folds,
        basis_size: cfg.basis_size,
        grad: cfg.grad.clone(),
    };
    cfg.methods
        .iter()
        .map(|m| {
            let start = Instant::now();
            let outcome = run_method(m, &ctx);
            let fit_seconds = start.elapsed().as_secs_f64();
            match outcome {
                Ok(o) if o.error.is_finite() => TrialRow {
                    method: m.label.clone(),
                    trial,
                    seed: trial_seed,
                    status: TrialStatus::Ok,
                    error: Some(o.error),
                    message: String::new(),
                    fit_seconds,
                    params: o.params,
                },
                Ok(o) => TrialRow {
                    method: m.label.clone(),
                    trial,
                    seed: trial_seed,
                    status: TrialStatus::Failed,
                    error: None,
                    message: format!("non-finite test error {}", o.error),
                    fit_seconds,
                    params: o.params,
                },
                Err(e) => {
                    log::warn!("{} trial {trial}: {e}", m.label);
                    TrialRow {
                        method: m.label.clone(),
                        trial,
                        seed: trial_seed,
                        status: TrialStatus::Failed,
                        error: None,
                        message: e.to_string(),
                        fit_seconds,
                        params: String::new(),
                    }
                }
            }
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(crate::data::format_f64).unwrap_or_default()
}

/// Write `trials.csv` and `summary.csv` into `dir`.
pub fn write_results(dir: impl AsRef<Path>, result: &ExperimentResult) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_err = |path: &Path, e: csv::Error| Error::io(path, std::io::Error::other(e));

    let path = dir.join("trials.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    w.write_record([
        "method",
        "trial",
        "seed",
        "status",
        "error",
        "fit_seconds",
        "params",
        "message",
    ])
    .map_err(|e| csv_err(&path, e))?;
    for r in &result.rows {
        let status = match r.status {
            TrialStatus::Ok => "ok",
            TrialStatus::Failed => "failed",
        };
        w.write_record([
            r.method.clone(),
            r.trial.to_string(),
            r.seed.to_string(),
            status.to_string(),
            fmt_opt(r.error),
            format!("{:.6}", r.fit_seconds),
            r.params.clone(),
            r.message.clone(),
        ])
        .map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    w.write_record([
        "method",
        "mean",
        "sd",
        "normalized_mean",
        "best_group_flag",
        "mean_fit_seconds",
        "trials_ok",
        "trials_failed",
        "valid",
    ])
    .map_err(|e| csv_err(&path, e))?;
    for s in &result.summary {
        w.write_record([
            s.method.clone(),
            crate::data::format_f64(s.mean),
            crate::data::format_f64(s.sd),
            fmt_opt(s.normalized_mean),
            (s.best_group as u8).to_string(),
            format!("{:.6}", s.mean_fit_seconds),
            s.trials_ok.to_string(),
            s.trials_failed.to_string(),
            s.valid.to_string(),
        ])
        .map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}
