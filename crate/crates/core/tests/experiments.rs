use covashift::data::{generate_toy, write_bundle, Bundle, Dataset, EvalSet, Meta, ToySpec};
use covashift::experiment::{run_experiment, ExperimentConfig, TrialStatus};
use nalgebra::{DMatrix, DVector};

#[test]
fn bundle_source_subsamples_each_trial() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_toy(&ToySpec { n_tr: 120, n_te: 120, n_eval: 300, seed: 1, ..ToySpec::default() }).unwrap();
    write_bundle(dir.path(), &Bundle::new(data, Meta::new())).unwrap();
    let cfg = ExperimentConfig::parse(&format!(
        "trials = 3\nseed = 4\ndata.source = bundle\ndata.path = {}\ndata.n_tr = 60\ndata.n_te = 60\n\
         methods = erm, iwerm, riwerm\nbasis.b = 10\n",
        dir.path().display()
    ))
    .unwrap();
    let r = run_experiment(&cfg, 2).unwrap();
    assert_eq!(r.rows.len(), 9);
    assert!(r.rows.iter().all(|row| row.status == TrialStatus::Ok), "{:?}", r.rows);
    let seeds: std::collections::BTreeSet<u64> = r.rows.iter().map(|row| row.seed).collect();
    assert_eq!(seeds.len(), 3);
}

#[test]
fn oversized_subsample_fails_every_trial_without_aborting() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_toy(&ToySpec { n_eval: 50, seed: 1, ..ToySpec::default() }).unwrap();
    write_bundle(dir.path(), &Bundle::new(data, Meta::new())).unwrap();
    let cfg = ExperimentConfig::parse(&format!(
        "trials = 2\ndata.source = bundle\ndata.path = {}\ndata.n_tr = 1000\nmethods = erm\n",
        dir.path().display()
    ))
    .unwrap();
    let r = run_experiment(&cfg, 1).unwrap();
    assert!(r.rows.iter().all(|row| row.status == TrialStatus::Failed));
    assert_eq!(r.summary[0].trials_failed, 2);
    assert!(!r.summary[0].valid);
}

fn binary_bundle(dir: &std::path::Path) {
    let n = 120;
    let line = |i: usize, shift: f64| -> (f64, f64) {
        let x = -2.0 + 4.0 * (i as f64 + 0.5) / n as f64 + shift;
        (x, if x.sin() > 0.0 { 1.0 } else { -1.0 })
    };
    let (tx, ty): (Vec<f64>, Vec<f64>) = (0..n).map(|i| line(i, 0.0)).unzip();
    let (ex, ey): (Vec<f64>, Vec<f64>) = (0..n).map(|i| line(i, 0.7)).unzip();
    let data = Dataset::new(
        DMatrix::from_column_slice(n, 1, &tx),
        DVector::from_vec(ty),
        DMatrix::from_column_slice(n, 1, &ex),
        Some(EvalSet { x: DMatrix::from_column_slice(n, 1, &ex), y: DVector::from_vec(ey) }),
        0,
    )
    .unwrap();
    write_bundle(dir, &Bundle::new(data, Meta::new())).unwrap();
}

#[test]
fn binary_task_reports_error_rates() {
    let dir = tempfile::tempdir().unwrap();
    binary_bundle(dir.path());
    let cfg = ExperimentConfig::parse(&format!(
        "trials = 1\ntask = binary\ndata.source = bundle\ndata.path = {}\ndata.n_tr = 80\ndata.n_te = 80\n\
         methods = erm, eiwerm, one_step\nbasis.b = 10\n",
        dir.path().display()
    ))
    .unwrap();
    let r = run_experiment(&cfg, 1).unwrap();
    for row in &r.rows {
        let e = row.error.unwrap_or_else(|| panic!("{}: {}", row.method, row.message));
        assert!((0.0..=0.5).contains(&e), "{} error {e}", row.method);
    }
}
