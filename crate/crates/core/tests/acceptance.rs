//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::time::{Duration, Instant};

use covashift::data::{
    generate_toy, shift_split, write_bundle, Bundle, Dataset, Meta, ShiftSplitSpec, ToySpec,
};
use covashift::erm::{
    irls_tukey_fit, weighted_objective, weighted_ridge_coefficients, weighted_subgradient_fit,
};
use covashift::experiment::{
    fit_one_step, run_experiment, run_method, write_results, ExperimentConfig, MethodConfig, Task,
    TrialContext,
};
use covashift::kernel::{choose_centers, median_heuristic_bandwidth, KernelBasis};
use covashift::loss::LossSpec;
use covashift::one_step::bound::{bound_check, BoundCheckConfig};
use covashift::one_step::{
    g_step_closed_form, j_ub_gradient, weighted_ce_gradient, GradAltConfig, ObjectiveSpec, Prepared,
};
use covashift::ratio::{rulsif_fit, ulsif_fit};
use covashift::seed;
use covashift::selection::{iwcv_score, FoldAssignment, FoldPlan};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const TOY_TRIALS: usize = 100;
const ONE_STEP_MSE_RANGE: (f64, f64) = (0.010, 0.022);
const ERM_OVER_ONE_STEP: f64 = 3.0;
const TOY_BUDGET: Duration = Duration::from_secs(600);
const TUKEY_SLACK: f64 = 0.002;
const ORACLE_TOL: f64 = 1e-10;
const SUBGRADIENT_TOL: f64 = 1e-4;
const BOUND_BUDGET: Duration = Duration::from_secs(60);
const GRADIENT_INSTANCES: usize = 50;
const GRADIENT_REL_TOL: f64 = 1e-5;
const BLOBS_SEEDS: usize = 5;
const BLOBS_SLACK: f64 = 0.005;
const RESIDUAL_TOL: f64 = 1e-8;
const NO_SHIFT_SEEDS: u64 = 20;
const NO_SHIFT_REL: f64 = 0.10;
const NO_SHIFT_G_DEV: f64 = 0.2;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn mean_of(summary: &[covashift::stats::MethodSummary], method: &str) -> (f64, f64) {
    let s = summary
        .iter()
        .find(|s| s.method == method)
        .expect("method in summary");
    (s.mean, s.sd)
}

fn toy_table() -> (Vec<covashift::stats::MethodSummary>, Duration) {
    let cfg = ExperimentConfig::parse(&format!(
        "trials = {TOY_TRIALS}\nseed = 1\ntask = regression\ndata.source = toy\n\
         methods = erm, eiwerm, riwerm, one_step, one_step_tukey\n\
         method.one_step_tukey.kind = one_step\nmethod.one_step_tukey.loss = tukey\n"
    ))
    .unwrap();
    let jobs = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let start = Instant::now();
    let r = run_experiment(&cfg, jobs).unwrap();
    (r.summary, start.elapsed())
}

fn toy_reproduction(summary: &[covashift::stats::MethodSummary], elapsed: Duration) -> Outcome {
    let one = mean_of(summary, "one_step").0;
    let ri = mean_of(summary, "riwerm").0;
    let ei = mean_of(summary, "eiwerm").0;
    let erm = mean_of(summary, "erm").0;
    let pass = one < ri
        && ri <= ei
        && ei < erm
        && (ONE_STEP_MSE_RANGE.0..=ONE_STEP_MSE_RANGE.1).contains(&one)
        && erm > ERM_OVER_ONE_STEP * one
        && elapsed <= TOY_BUDGET;
    outcome(
        pass,
        format!(
            "one_step {one:.5} riwerm {ri:.5} eiwerm {ei:.5} erm {erm:.5} (erm/one_step {:.1}x) in {:.1}s",
            erm / one,
            elapsed.as_secs_f64()
        ),
    )
}

fn tukey_variant(summary: &[covashift::stats::MethodSummary]) -> Outcome {
    let (sq_mean, sq_sd) = mean_of(summary, "one_step");
    let (tk_mean, tk_sd) = mean_of(summary, "one_step_tukey");
    outcome(
        tk_mean <= sq_mean + TUKEY_SLACK && tk_sd <= sq_sd + TUKEY_SLACK,
        format!("tukey {tk_mean:.5} (sd {tk_sd:.5}) vs squared {sq_mean:.5} (sd {sq_sd:.5})"),
    )
}

fn toy_bases(data: &Dataset, b: usize, s: u64) -> (KernelBasis, KernelBasis) {
    let all = data.all_inputs();
    let fc = choose_centers(&data.test_x, b, seed::derive_named(s, "f")).unwrap();
    let gc = choose_centers(&data.test_x, b, seed::derive_named(s, "g")).unwrap();
    let fs = median_heuristic_bandwidth(&all, &fc).unwrap();
    let gs = median_heuristic_bandwidth(&all, &gc).unwrap();
    (
        KernelBasis::gaussian(fc, fs).unwrap(),
        KernelBasis::gaussian(gc, gs).unwrap(),
    )
}

fn oracle_equivalences() -> Outcome {
    let start = Instant::now();
    let data = generate_toy(&ToySpec {
        n_eval: 10,
        seed: 5,
        ..ToySpec::default()
    })
    .unwrap();
    let (fb, gb) = toy_bases(&data, 30, 5);
    let p = Prepared::new(&data, &fb, &gb).unwrap();
    let (m, lambda_g) = (1.5, 0.05);
    let spec = ObjectiveSpec {
        bound_m: m,
        ..ObjectiveSpec::new(LossSpec::squared(), 1e-3, lambda_g)
    };
    let step = g_step_closed_form(&p, &DVector::zeros(data.n_train()), &spec).unwrap();
    let u = ulsif_fit(&data.train_x, &data.test_x, &gb, lambda_g / (m * m)).unwrap();
    let g_diff = (&step.clipped - u.model.coefficients()).amax();

    let u0 = ulsif_fit(&data.train_x, &data.test_x, &gb, 1e-2).unwrap();
    let r0 = rulsif_fit(&data.train_x, &data.test_x, &gb, 0.0, 1e-2).unwrap();
    let rulsif_exact = u0.model.coefficients() == r0.model.coefficients();

    let w = DVector::from_fn(data.n_train(), |i, _| 0.5 + (i % 3) as f64 * 0.5);
    let lambda = 1e-2;
    let phi = fb.design_matrix(&data.train_x).unwrap();
    let alpha = weighted_ridge_coefficients(&phi, &data.train_y, &w, lambda).unwrap();
    let target = weighted_objective(
        &LossSpec::squared(),
        &(&phi * &alpha),
        &data.train_y,
        &w,
        &alpha,
        lambda,
    )
    .unwrap();
    let gd = weighted_subgradient_fit(
        &data.train_x,
        &data.train_y,
        &w,
        &fb,
        &LossSpec::squared(),
        lambda,
        20000,
        None,
    )
    .unwrap();
    let gap = gd.best_objective - target;
    let elapsed = start.elapsed();
    outcome(
        g_diff < ORACLE_TOL && rulsif_exact && gap < SUBGRADIENT_TOL && elapsed < Duration::from_secs(60),
        format!(
            "g-step vs uLSIF {g_diff:.1e}, RuLSIF(0) identical {rulsif_exact}, subgradient gap {gap:.1e} in {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn bound_ordering() -> Outcome {
    let start = Instant::now();
    let report = bound_check(&BoundCheckConfig::default(), 0).unwrap();
    let elapsed = start.elapsed();
    let worst = report
        .outcomes
        .iter()
        .map(|o| o.margin / o.standard_error.max(f64::MIN_POSITIVE))
        .fold(f64::INFINITY, f64::min);
    outcome(
        report.all_pass() && report.outcomes.len() == 20 && elapsed <= BOUND_BUDGET,
        format!(
            "{}/{} pairs pass, worst margin {worst:.2} SE, {:.1}s",
            report.outcomes.iter().filter(|o| o.pass).count(),
            report.outcomes.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn gradient_correctness() -> Outcome {
    let mut rng = seed::rng(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..GRADIENT_INSTANCES {
        let (n, n_te, b) = (
            rng.random_range(3..12),
            rng.random_range(3..12),
            rng.random_range(1..6),
        );
        let normal = |r: usize, c: usize, rng: &mut seed::Rng| {
            DMatrix::from_fn(r, c, |_, _| {
                Distribution::<f64>::sample(&StandardNormal, rng)
            })
        };
        let psi_tr = normal(n, b, &mut rng).map(f64::abs);
        let psi_te = normal(n_te, b, &mut rng).map(f64::abs);
        let beta = DVector::from_column_slice(normal(b, 1, &mut rng).as_slice());
        let losses = DVector::from_fn(n, |_, _| rng.random_range(0.0..2.0));
        let m = rng.random_range(0.5..2.0);
        let lg = rng.random_range(0.0..0.1);
        let f = |bv: &DVector<f64>| {
            j_ub_gradient(bv, &losses, &psi_tr, &psi_te, m, lg)
                .unwrap()
                .0
        };
        let (_, grad) = j_ub_gradient(&beta, &losses, &psi_tr, &psi_te, m, lg).unwrap();
        for j in 0..b {
            let h = 1e-5 * beta[j].abs().max(1.0);
            let (mut up, mut dn) = (beta.clone(), beta.clone());
            up[j] += h;
            dn[j] -= h;
            worst = worst.max(rel_err(grad[j], (f(&up) - f(&dn)) / (2.0 * h)));
        }

        let (k, d) = (rng.random_range(2..5), rng.random_range(1..5));
        let phi = normal(n, d, &mut rng);
        let wk = normal(k, d, &mut rng);
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let lf = rng.random_range(0.0..0.1);
        let ce = |mat: &DMatrix<f64>| weighted_ce_gradient(mat, &phi, &y, &w, lf).unwrap().0;
        let (_, g) = weighted_ce_gradient(&wk, &phi, &y, &w, lf).unwrap();
        for i in 0..k {
            for j in 0..d {
                let h = 1e-5 * wk[(i, j)].abs().max(1.0);
                let (mut up, mut dn) = (wk.clone(), wk.clone());
                up[(i, j)] += h;
                dn[(i, j)] -= h;
                worst = worst.max(rel_err(g[(i, j)], (ce(&up) - ce(&dn)) / (2.0 * h)));
            }
        }
    }
    outcome(
        worst < GRADIENT_REL_TOL,
        format!("{GRADIENT_INSTANCES} instances per gradient, worst relative error {worst:.1e}"),
    )
}

fn blobs_ordering() -> Outcome {
    let cfg = ExperimentConfig::parse(&format!(
        "trials = {BLOBS_SEEDS}\nseed = 1\ndata.source = blobs\nmethods = erm, eiwerm, one_step_grad\n"
    ))
    .unwrap();
    let r = run_experiment(&cfg, 1).unwrap();
    let acc = |m: &str| 1.0 - mean_of(&r.summary, m).0;
    let (grad, erm, ei) = (acc("one_step_grad"), acc("erm"), acc("eiwerm"));
    outcome(
        grad >= erm && grad >= ei - BLOBS_SLACK,
        format!(
            "accuracy one_step_grad {:.2}% erm {:.2}% eiwerm {:.2}%",
            100.0 * grad,
            100.0 * erm,
            100.0 * ei
        ),
    )
}

fn irls_monotone() -> bool {
    (0..5u64).all(|s| {
        let data = generate_toy(&ToySpec {
            n_eval: 10,
            seed: s,
            ..ToySpec::default()
        })
        .unwrap();
        let (fb, _) = toy_bases(&data, 20, s);
        let w = DVector::from_element(data.n_train(), 1.0);
        let fit =
            irls_tukey_fit(&data.train_x, &data.train_y, &w, &fb, 1e-3, 0.5, 100, 1e-10).unwrap();
        fit.trace
            .windows(2)
            .all(|p| p[1] <= p[0] + 1e-12 * p[0].abs().max(1.0))
    })
}

fn normal_equation_residual() -> f64 {
    let data = generate_toy(&ToySpec {
        n_eval: 10,
        seed: 11,
        ..ToySpec::default()
    })
    .unwrap();
    let (fb, _) = toy_bases(&data, 30, 11);
    let phi = fb.design_matrix(&data.train_x).unwrap();
    let w = DVector::from_fn(data.n_train(), |i, _| 0.2 + (i % 5) as f64 * 0.3);
    let lambda = 1e-3;
    let alpha = weighted_ridge_coefficients(&phi, &data.train_y, &w, lambda).unwrap();
    let n = data.n_train() as f64;
    let pw = DMatrix::from_fn(phi.nrows(), phi.ncols(), |i, j| phi[(i, j)] * w[i]);
    let lhs = pw.transpose() * &phi * &alpha + &alpha * (lambda * n);
    let rhs = pw.transpose() * &data.train_y;
    (lhs - &rhs).amax() / rhs.amax().max(1.0)
}

fn fold_partition_exact() -> bool {
    [(10, 2), (37, 5), (150, 5), (7, 7)].iter().all(|&(n, k)| {
        let f = FoldAssignment::new(n, k, 9).unwrap();
        let mut seen = vec![0usize; n];
        for fold in 0..k {
            let (keep, held) = f.split(fold);
            if keep.len() + held.len() != n || held.is_empty() {
                return false;
            }
            held.iter().for_each(|&i| seen[i] += 1);
        }
        seen.iter().all(|&c| c == 1)
    })
}

fn nonnegative_weights() -> bool {
    (0..5u64).all(|s| {
        let data = generate_toy(&ToySpec {
            n_eval: 10,
            seed: s,
            ..ToySpec::default()
        })
        .unwrap();
        let (_, gb) = toy_bases(&data, 50, s);
        let probe = DMatrix::from_fn(400, 1, |i, _| -3.0 + 0.02 * i as f64);
        [0.0, 0.5].iter().all(|&a| {
            let r = rulsif_fit(&data.train_x, &data.test_x, &gb, a, 1e-4).unwrap();
            r.evaluate(&probe).unwrap().iter().all(|v| *v >= 0.0)
        })
    })
}

fn iwcv_scaling_invariant() -> bool {
    let data = generate_toy(&ToySpec {
        n_eval: 10,
        seed: 3,
        ..ToySpec::default()
    })
    .unwrap();
    let (fb, _) = toy_bases(&data, 20, 3);
    let importance = DVector::from_iterator(
        data.n_train(),
        data.train_x
            .iter()
            .map(|x| ToySpec::default().importance(*x)),
    );
    let plan = FoldPlan::new(data.n_train(), 5, 4).unwrap();
    let lambdas = [1e-4, 1e-3, 1e-2, 1e-1, 1.0];
    let argmin = |scale: f64| {
        let imp = &importance * scale;
        let scores: Vec<f64> = lambdas
            .iter()
            .map(|&l| {
                iwcv_score(
                    &data.train_x,
                    &data.train_y,
                    &imp,
                    &plan,
                    &LossSpec::squared(),
                    |idx| {
                        let x = data.train_x.select_rows(idx);
                        let y =
                            DVector::from_iterator(idx.len(), idx.iter().map(|&i| data.train_y[i]));
                        let w = DVector::from_element(idx.len(), 1.0);
                        covashift::erm::weighted_ridge_fit(&x, &y, &w, &fb, l)
                    },
                )
                .unwrap()
            })
            .collect();
        (0..scores.len())
            .min_by(|&a, &b| scores[a].total_cmp(&scores[b]))
            .unwrap()
    };
    let base = argmin(1.0);
    [0.01, 3.0, 250.0].iter().all(|&s| argmin(s) == base)
}

fn files_identical(a: &std::path::Path, b: &std::path::Path, name: &str) -> bool {
    std::fs::read(a.join(name)).unwrap() == std::fs::read(b.join(name)).unwrap()
}

fn without_timing(path: &std::path::Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().clone();
    let keep: Vec<usize> = (0..headers.len())
        .filter(|&i| !headers[i].contains("seconds"))
        .collect();
    r.records()
        .map(|rec| rec.unwrap())
        .map(|rec| keep.iter().map(|&i| rec[i].to_string()).collect())
        .collect()
}

fn seed_determinism() -> bool {
    let dirs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for d in &dirs {
        let toy = generate_toy(&ToySpec {
            seed: 42,
            n_eval: 100,
            ..ToySpec::default()
        })
        .unwrap();
        write_bundle(d.path().join("bundle"), &Bundle::new(toy, Meta::new())).unwrap();
        let cfg = ExperimentConfig::parse(
            "trials = 2\nseed = 8\nmethods = erm, one_step\ndata.n_tr = 40\ndata.n_te = 40\ndata.n_eval = 100\nbasis.b = 10\n",
        )
        .unwrap();
        write_results(d.path().join("exp"), &run_experiment(&cfg, 2).unwrap()).unwrap();
    }
    let (a, b) = (dirs[0].path(), dirs[1].path());
    let bundles = ["train.csv", "test.csv", "eval.csv", "meta"]
        .iter()
        .all(|f| files_identical(&a.join("bundle"), &b.join("bundle"), f));
    let experiments = ["trials.csv", "summary.csv"]
        .iter()
        .all(|f| without_timing(&a.join("exp").join(f)) == without_timing(&b.join("exp").join(f)));

    let pool = generate_toy(&ToySpec {
        n_tr: 80,
        seed: 6,
        ..ToySpec::default()
    })
    .unwrap();
    let spec = ShiftSplitSpec {
        candidates: 5,
        seed: 6,
        ..ShiftSplitSpec::default()
    };
    let s1 = shift_split(&pool.train_x, &pool.train_y, &spec).unwrap();
    let s2 = shift_split(&pool.train_x, &pool.train_y, &spec).unwrap();
    let splits = s1.train_idx == s2.train_idx && s1.test_idx == s2.test_idx;

    let cfg = BoundCheckConfig {
        n: 2000,
        pairs: 3,
        ..BoundCheckConfig::default()
    };
    let bound = bound_check(&cfg, 3).unwrap().outcomes == bound_check(&cfg, 3).unwrap().outcomes;

    let g = GradAltConfig {
        rounds: 2,
        epochs_f: 2,
        epochs_g: 1,
        pretrain_epochs: 2,
        ..GradAltConfig::default()
    };
    let blob = covashift::data::generate_blobs(&covashift::data::BlobsSpec {
        n_eval: 50,
        seed: 2,
        ..Default::default()
    })
    .unwrap();
    let ctx = TrialContext {
        data: blob,
        task: Task::Multiclass,
        seed: 2,
        folds: 5,
        basis_size: 10,
        grad: g,
    };
    let m: MethodConfig = ExperimentConfig::parse("data.source = blobs\nmethods = one_step_grad\n")
        .unwrap()
        .methods[0]
        .clone();
    let grad = run_method(&m, &ctx).unwrap() == run_method(&m, &ctx).unwrap();

    bundles && experiments && splits && bound && grad
}

fn invariant_suites() -> Outcome {
    let irls = irls_monotone();
    let residual = normal_equation_residual();
    let folds = fold_partition_exact();
    let nonneg = nonnegative_weights();
    let iwcv = iwcv_scaling_invariant();
    let det = seed_determinism();
    outcome(
        irls && residual < RESIDUAL_TOL && folds && nonneg && iwcv && det,
        format!(
            "irls monotone {irls}, normal-equation residual {residual:.1e}, folds exact {folds}, \
             weights nonnegative {nonneg}, iwcv scale-invariant {iwcv}, deterministic {det}"
        ),
    )
}

fn no_shift_sanity() -> Outcome {
    let cfg = ExperimentConfig::parse("methods = erm, one_step\n").unwrap();
    let (erm_m, one_m) = (&cfg.methods[0], &cfg.methods[1]);
    let (mut ridge, mut one, mut dev) = (0.0, 0.0, 0.0);
    for s in 0..NO_SHIFT_SEEDS {
        let spec = ToySpec {
            te_mean: 1.0,
            te_sd: 0.5,
            seed: s,
            ..ToySpec::default()
        };
        let data = generate_toy(&spec).unwrap();
        let ctx = TrialContext {
            data,
            task: Task::Regression,
            seed: s,
            folds: 5,
            basis_size: 50,
            grad: GradAltConfig::default(),
        };
        ridge += run_method(erm_m, &ctx).unwrap().error;
        one += run_method(one_m, &ctx).unwrap().error;
        let (state, _) = fit_one_step(one_m, &ctx).unwrap();
        let g = state
            .g_model
            .predict(&ctx.data.all_inputs())
            .unwrap()
            .map(|v| v.max(0.0));
        dev += g.iter().map(|v| (v - 1.0).abs()).sum::<f64>() / g.len() as f64;
    }
    let k = NO_SHIFT_SEEDS as f64;
    let (ridge, one, dev) = (ridge / k, one / k, dev / k);
    let rel = (one - ridge).abs() / ridge;
    outcome(
        rel <= NO_SHIFT_REL && dev < NO_SHIFT_G_DEV,
        format!(
            "one_step {one:.5} vs ridge {ridge:.5} (relative {:.1}%), mean |g-1| {dev:.3}",
            100.0 * rel
        ),
    )
}

fn main() {
    let (summary, elapsed) = toy_table();
    let results = [
        ("1 toy reproduction", toy_reproduction(&summary, elapsed)),
        ("2 tukey variant", tukey_variant(&summary)),
        ("3 oracle equivalences", oracle_equivalences()),
        ("4 bound ordering", bound_ordering()),
        ("5 gradient correctness", gradient_correctness()),
        ("6 shifted blobs ordering", blobs_ordering()),
        ("7 invariant suites", invariant_suites()),
        ("8 no-shift sanity", no_shift_sanity()),
    ];
    for (name, o) in &results {
        println!(
            "{} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    if results.iter().any(|(_, o)| !o.pass) {
        std::process::exit(1);
    }
}
