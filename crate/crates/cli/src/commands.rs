//! Subcommand implementations.

use std::path::Path;

use covashift::data::{
    assign_by_direction, format_f64, generate_toy, read_bundle, read_csv_table,
    shift_split as search_split, split_by_column, write_bundle, write_csv, zscore_fit_apply,
    Bundle, Dataset, EvalSet, Meta, ShiftSplitSpec, ToySpec,
};
use covashift::experiment::{
    evaluate_fitted, fit_method, run_experiment, write_results, DataSource, ExperimentConfig,
    MethodConfig, MethodKind, Task, TrialContext,
};
use covashift::kernel::{choose_centers, median_heuristic_bandwidth, KernelBasis};
use covashift::one_step::bound::{self, BoundCheckConfig};
use covashift::one_step::GradAltConfig;
use covashift::ratio::{ratio_cv_score, rulsif_fit};
use covashift::seed;
use covashift::selection::{grid_search, Cell, FoldPlan, DEFAULT_LAMBDAS};
use nalgebra::{DMatrix, DVector};

use crate::model_file::{basis_file, task_name, ModelFile};
use crate::{
    BoundCheckArgs, CliError, EvaluateArgs, ExperimentArgs, FitRatioArgs, GenToyArgs,
    ShiftSplitArgs, TrainArgs,
};

pub fn gen_toy(a: &GenToyArgs) -> Result<(), CliError> {
    let spec = ToySpec {
        n_tr: a.n_tr,
        n_te: a.n_te,
        n_eval: a.n_eval,
        seed: a.seed,
        ..ToySpec::default()
    };
    let data = generate_toy(&spec)?;
    let mut meta = Meta::new();
    meta.set("source", "toy");
    meta.set("n_tr", spec.n_tr);
    meta.set("n_te", spec.n_te);
    meta.set("n_eval", spec.n_eval);
    write_bundle(&a.out, &Bundle::new(data, meta))?;
    println!(
        "wrote {} ({}/{}/{} rows)",
        a.out.display(),
        spec.n_tr,
        spec.n_te,
        spec.n_eval
    );
    Ok(())
}

fn rows_of(x: &DMatrix<f64>, y: &DVector<f64>, idx: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
    (
        x.select_rows(idx),
        DVector::from_iterator(idx.len(), idx.iter().map(|&i| y[i])),
    )
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|x| format_f64(*x))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn shift_split(a: &ShiftSplitArgs) -> Result<(), CliError> {
    let table = read_csv_table(&a.input)?;
    let label = table.column_index(&a.label).ok_or_else(|| {
        CliError::Usage(format!(
            "label column {:?} not found in {}",
            a.label,
            a.input.display()
        ))
    })?;
    let split_col = match &a.by_column {
        Some(c) => Some(table.column_index(c).ok_or_else(|| {
            CliError::Usage(format!("column {c:?} not found in {}", a.input.display()))
        })?),
        None => None,
    };
    if split_col == Some(label) {
        return Err(CliError::Usage("cannot split on the label column".into()));
    }
    let feature_cols: Vec<usize> = (0..table.headers.len())
        .filter(|&j| j != label && Some(j) != split_col)
        .collect();
    if feature_cols.is_empty() {
        return Err(CliError::Usage("no feature columns left".into()));
    }
    let names: Vec<String> = feature_cols
        .iter()
        .map(|&j| table.headers[j].clone())
        .collect();
    let raw = table.data.select_columns(&feature_cols);
    let y = table.data.column(label).into_owned();
    let x = if a.no_zscore {
        raw
    } else {
        zscore_fit_apply(&raw)?.0
    };

    let mut meta = Meta::new();
    meta.set("label", &a.label);
    meta.set("zscore", !a.no_zscore);
    let mut candidates = None;
    let (train_idx, test_idx) = if let Some(col) = split_col {
        meta.set("mode", "by_column");
        meta.set("column", &table.headers[col]);
        meta.set("train_values", join(&a.train_values));
        split_by_column(&table.data, col, &a.train_values)?
    } else if !a.direction.is_empty() {
        let assign_seed = a.assign_seed.unwrap_or_default();
        let side = assign_by_direction(&x, &a.direction, a.scale, assign_seed)?;
        meta.set("mode", "replay");
        meta.set("direction", join(&a.direction));
        meta.set("assign_seed", assign_seed);
        meta.set("scale", a.scale);
        (0..side.len()).partition(|&i| side[i])
    } else {
        let spec = ShiftSplitSpec {
            scale: a.scale,
            candidates: a.candidates,
            seed: a.seed,
            ..ShiftSplitSpec::default()
        };
        let split = search_split(&x, &y, &spec)?;
        let chosen = &split.records[split.chosen];
        meta.set("mode", "direction");
        meta.set("candidates", a.candidates);
        meta.set("chosen", split.chosen);
        meta.set("direction", join(&chosen.direction));
        meta.set("assign_seed", chosen.assign_seed);
        meta.set("scale", a.scale);
        candidates = Some(split.records.clone());
        (split.train_idx, split.test_idx)
    };
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(CliError::Failed(format!(
            "split leaves {} training and {} test rows; both sides must be nonempty",
            train_idx.len(),
            test_idx.len()
        )));
    }
    let (train_x, train_y) = rows_of(&x, &y, &train_idx);
    let (test_x, test_y) = rows_of(&x, &y, &test_idx);
    let eval = EvalSet {
        x: test_x.clone(),
        y: test_y,
    };
    let data = Dataset::new(train_x, train_y, test_x, Some(eval), a.seed)?;
    let bundle = Bundle {
        dataset: data,
        feature_names: names,
        meta,
    };
    write_bundle(&a.out, &bundle)?;
    if let Some(records) = candidates {
        let d = x.ncols();
        let mut headers: Vec<String> = ["index", "assign_seed", "n_train", "n_test", "metric"]
            .map(String::from)
            .to_vec();
        headers.extend((0..d).map(|j| format!("direction_{j}")));
        let table = DMatrix::from_fn(records.len(), headers.len(), |i, j| {
            let r = &records[i];
            match j {
                0 => r.index as f64,
                1 => r.assign_seed as f64,
                2 => r.n_train as f64,
                3 => r.n_test as f64,
                4 => r.metric.unwrap_or(f64::NAN),
                _ => r.direction[j - 5],
            }
        });
        write_csv(a.out.join("candidates.csv"), &headers, &table)?;
    }
    println!(
        "wrote {} ({} train / {} test rows)",
        a.out.display(),
        train_idx.len(),
        test_idx.len()
    );
    Ok(())
}

pub fn fit_ratio(a: &FitRatioArgs) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&a.alpha) {
        return Err(CliError::Usage(format!(
            "--alpha must lie in [0, 1], got {}",
            a.alpha
        )));
    }
    let d = read_bundle(&a.bundle)?.dataset;
    let centers = choose_centers(&d.test_x, a.basis, seed::derive_named(a.seed, "centers_g"))?;
    let sigma = median_heuristic_bandwidth(&d.all_inputs(), &centers)?;
    let basis = KernelBasis::gaussian(centers, sigma)?;
    let lambda_g = match a.lambda_g {
        Some(l) => l,
        None => {
            let plan = FoldPlan::paired(
                d.n_train(),
                d.n_test(),
                a.folds,
                seed::derive_named(a.seed, "folds"),
            )?;
            let cells: Vec<Cell> = DEFAULT_LAMBDAS
                .iter()
                .map(|&l| Cell {
                    lambda_g: Some(l),
                    ..Cell::default()
                })
                .collect();
            let r = grid_search(&cells, a.seed, |c, _| {
                ratio_cv_score(
                    &d.train_x,
                    &d.test_x,
                    &basis,
                    a.alpha,
                    c.lambda_g.unwrap_or(0.0),
                    &plan,
                )
            })?;
            r.best.lambda_g.unwrap_or(0.0)
        }
    };
    let model = rulsif_fit(&d.train_x, &d.test_x, &basis, a.alpha, lambda_g)?;
    ModelFile::Ratio {
        alpha: a.alpha,
        lambda_g,
        basis: basis_file(&basis),
        coefficients: model.model.coefficients().iter().copied().collect(),
    }
    .write(&a.out)?;
    let w = model.evaluate(&d.train_x)?;
    if let Some(path) = &a.weights_out {
        write_csv(
            path,
            &["weight".to_string()],
            &DMatrix::from_column_slice(w.len(), 1, w.as_slice()),
        )?;
    }
    println!(
        "sigma_g={} lambda_g={lambda_g} mean train weight={:.4}",
        format_f64(sigma),
        w.mean()
    );
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<(), CliError> {
    let data = read_bundle(&a.bundle)?.dataset;
    let grad = a.method == MethodKind::OneStepGrad;
    if grad != (a.task == Task::Multiclass) && (grad || a.method == MethodKind::OneStep) {
        return Err(CliError::Usage(
            "one_step_grad needs --task multiclass; one_step needs regression or binary".into(),
        ));
    }
    let method = MethodConfig {
        label: a.method.name().to_string(),
        kind: a.method,
        loss: a.loss,
        tuning: a.tuning,
        lambda_f: a.lambda_f,
        lambda_g: a.lambda_g,
        gamma: a.gamma,
        alpha: a.alpha,
    };
    let ctx = TrialContext {
        data,
        task: a.task,
        seed: a.seed,
        folds: a.folds,
        basis_size: a.basis,
        grad: GradAltConfig::default(),
    };
    let fitted = fit_method(&method, &ctx)?;
    ModelFile::from_fitted(&fitted.model, a.task, &method.label, &fitted.params).write(&a.out)?;
    println!("{} {}", method.label, fitted.params);
    Ok(())
}

pub fn evaluate(a: &EvaluateArgs) -> Result<(), CliError> {
    let (model, task) = ModelFile::read(&a.model)?.to_fitted()?;
    let d = read_bundle(&a.bundle)?.dataset;
    let eval = d
        .eval
        .as_ref()
        .ok_or_else(|| CliError::Failed(format!("{} has no eval.csv", a.bundle.display())))?;
    let error = evaluate_fitted(&model, eval, task)?;
    let metric = if task == Task::Regression {
        "mse"
    } else {
        "error_rate"
    };
    println!("task,metric,n,error");
    println!(
        "{},{metric},{},{}",
        task_name(task),
        eval.y.len(),
        format_f64(error)
    );
    Ok(())
}

fn resolve(base: &Path, p: &Path) -> std::path::PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn experiment(a: &ExperimentArgs, jobs: usize) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.config).map_err(|e| CliError::io(&a.config, e))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let DataSource::Bundle { path, .. } = &mut cfg.source {
        let base = a.config.parent().unwrap_or(Path::new("."));
        *path = resolve(base, path);
        if !path.is_dir() {
            return Err(CliError::Usage(format!(
                "bundle directory {} does not exist",
                path.display()
            )));
        }
    }
    let result = run_experiment(&cfg, jobs)?;
    write_results(&a.out, &result)?;
    println!(
        "{:<20} {:>12} {:>12} {:>10} {:>5} {:>8}",
        "method", "mean", "sd", "normalized", "best", "failed"
    );
    for s in &result.summary {
        println!(
            "{:<20} {:>12.6} {:>12.6} {:>10} {:>5} {:>8}{}",
            s.method,
            s.mean,
            s.sd,
            s.normalized_mean
                .map(|v| format!("{v:.4}"))
                .unwrap_or_default(),
            if s.best_group { "*" } else { "" },
            s.trials_failed,
            if s.valid { "" } else { "  (invalid)" }
        );
    }
    Ok(())
}

pub fn bound_check(a: &BoundCheckArgs) -> Result<(), CliError> {
    let config = BoundCheckConfig {
        n: a.n,
        pairs: a.pairs,
        ..BoundCheckConfig::default()
    };
    let report = bound::bound_check(&config, a.seed)?;
    if let Some(w) = &report.warning {
        eprintln!("warning: {w}");
    }
    println!("C = {}", format_f64(report.constant_c));
    for (i, o) in report.outcomes.iter().enumerate() {
        println!(
            "{} pair {i:>2}: J = {:.6} half R^2 = {:.6} margin = {:+.6} se = {:.2e}",
            if o.pass { "PASS" } else { "FAIL" },
            o.j_hat,
            o.half_risk_sq,
            o.margin,
            o.standard_error
        );
    }
    if report.all_pass() {
        Ok(())
    } else {
        let failed = report.outcomes.iter().filter(|o| !o.pass).count();
        Err(CliError::Failed(format!(
            "{failed} of {} pairs violate the bound",
            report.outcomes.len()
        )))
    }
}
