//! Synthetic covariate shift: points are sent to the training side with
//! probability `σ(v)`, `v = scale · wᵀx / sd(wᵀx)`, for a random direction
//! `w`. Among several candidate directions the one whose probe model
//! generalizes worst from train to test is kept.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::erm::weighted_ridge_coefficients;
use crate::error::{Error, Result};
use crate::kernel::{choose_centers, median_heuristic_bandwidth, KernelBasis};
use crate::seed;

pub const MIN_POOL: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSplitSpec {
    pub scale: f64,
    pub candidates: usize,
    pub probe_lambda: f64,
    pub probe_centers: usize,
    pub seed: u64,
}

impl Default for ShiftSplitSpec {
    fn default() -> Self {
        Self {
            scale: 16.0,
            candidates: 50,
            probe_lambda: 1e-2,
            probe_centers: 20,
            seed: 0,
        }
    }
}

/// How probe predictions are scored on the test side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeTask {
    /// Mean squared error.
    Regression,
    /// Misclassification rate of `sign(f)` against labels mapped to ±1.
    Binary,
}

impl ProbeTask {
    /// Binary when every label is in {0, 1} or in {−1, 1}.
    pub fn infer(y: &DVector<f64>) -> Self {
        let zero_one = y.iter().all(|v| *v == 0.0 || *v == 1.0);
        let pm_one = y.iter().all(|v| *v == -1.0 || *v == 1.0);
        if zero_one || pm_one {
            ProbeTask::Binary
        } else {
            ProbeTask::Regression
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRecord {
    pub index: usize,
    pub direction: Vec<f64>,
    /// Seed of the Bernoulli assignment draws.
    pub assign_seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    /// Probe test metric; `None` when a side was empty or the probe failed.
    pub metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSplit {
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub chosen: usize,
    pub records: Vec<CandidateRecord>,
}

impl ShiftSplit {
    pub fn direction(&self) -> &[f64] {
        &self.records[self.chosen].direction
    }
}

/// `exp(v) / (1 + exp(v))`.
pub fn train_probability(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Scaled projections `scale · wᵀx / sd(wᵀx)` with the population sd over the pool.
pub fn projections(x: &DMatrix<f64>, direction: &[f64], scale: f64) -> Result<DVector<f64>> {
    if direction.len() != x.ncols() {
        return Err(Error::Dimension(format!(
            "direction has {} entries for {} columns",
            direction.len(),
            x.ncols()
        )));
    }
    let p = x * DVector::from_column_slice(direction);
    let n = p.len() as f64;
    let mean = p.sum() / n;
    let sd = (p.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(sd > 0.0) {
        return Err(Error::Degenerate(
            "projection onto the direction has zero variance".into(),
        ));
    }
    Ok(p.map(|v| scale * v / sd))
}

/// Bernoulli assignment along `direction`; `true` marks the training side.
pub fn assign_by_direction(
    x: &DMatrix<f64>,
    direction: &[f64],
    scale: f64,
    assign_seed: u64,
) -> Result<Vec<bool>> {
    let v = projections(x, direction, scale)?;
    let mut rng = seed::rng(assign_seed);
    Ok(v.iter()
        .map(|&vi| rng.random::<f64>() < train_probability(vi))
        .collect())
}

fn random_direction(d: usize, seed_: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed_);
    loop {
        let w: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return w.into_iter().map(|v| v / norm).collect();
        }
    }
}

fn probe_metric(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    train: &[usize],
    test: &[usize],
    task: ProbeTask,
    spec: &ShiftSplitSpec,
    seed_: u64,
) -> Result<f64> {
    let target = |v: f64| match task {
        ProbeTask::Binary if v == 0.0 => -1.0,
        _ => v,
    };
    let xt = x.select_rows(train);
    let yt = DVector::from_iterator(train.len(), train.iter().map(|&i| target(y[i])));
    let centers = choose_centers(&xt, spec.probe_centers, seed_)?;
    let sigma = median_heuristic_bandwidth(&xt, &centers)?;
    let basis = KernelBasis::gaussian(centers, sigma)?;
    let phi = basis.design_matrix(&xt)?;
    let alpha = weighted_ridge_coefficients(
        &phi,
        &yt,
        &DVector::from_element(train.len(), 1.0),
        spec.probe_lambda,
    )?;
    let pred = basis.design_matrix(&x.select_rows(test))? * alpha;
    let total: f64 = test
        .iter()
        .zip(pred.iter())
        .map(|(&i, &p)| {
            let t = target(y[i]);
            match task {
                ProbeTask::Regression => (p - t).powi(2),
                ProbeTask::Binary => f64::from(u8::from(p * t <= 0.0)),
            }
        })
        .sum();
    Ok(total / test.len() as f64)
}

/// Evaluate `spec.candidates` random directions and keep the split whose
/// probe has the worst test metric. Ties go to the lower candidate index.
pub fn shift_split(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    spec: &ShiftSplitSpec,
) -> Result<ShiftSplit> {
    if x.nrows() < MIN_POOL {
        return Err(Error::InvalidParameter(format!(
            "pool has {} rows, at least {MIN_POOL} are needed",
            x.nrows()
        )));
    }
    if y.len() != x.nrows() {
        return Err(Error::Dimension(format!(
            "{} rows but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    if spec.candidates == 0 || !(spec.scale > 0.0) {
        return Err(Error::InvalidParameter(
            "need a positive scale and at least one candidate".into(),
        ));
    }
    let task = ProbeTask::infer(y);
    let records: Vec<CandidateRecord> = (0..spec.candidates)
        .into_par_iter()
        .map(|k| {
            let cand_seed = seed::derive(spec.seed, k as u64);
            let direction = random_direction(x.ncols(), seed::derive_named(cand_seed, "direction"));
            let assign_seed = seed::derive_named(cand_seed, "assign");
            let mut record = CandidateRecord {
                index: k,
                direction,
                assign_seed,
                n_train: 0,
                n_test: 0,
                metric: None,
            };
            let Ok(side) = assign_by_direction(x, &record.direction, spec.scale, assign_seed)
            else {
                return record;
            };
            let (train, test) = partition(&side);
            record.n_train = train.len();
            record.n_test = test.len();
            if !train.is_empty() && !test.is_empty() {
                record.metric = probe_metric(
                    x,
                    y,
                    &train,
                    &test,
                    task,
                    spec,
                    seed::derive_named(cand_seed, "probe"),
                )
                .ok();
            }
            record
        })
        .collect();
    let chosen = records
        .iter()
        .filter_map(|r| r.metric.map(|m| (r.index, m)))
        .fold(None, |best: Option<(usize, f64)>, (i, m)| match best {
            Some((_, bm)) if bm >= m => best,
            _ => Some((i, m)),
        })
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Degenerate("every candidate direction left one side empty".into()))?;
    let side = assign_by_direction(
        x,
        &records[chosen].direction,
        spec.scale,
        records[chosen].assign_seed,
    )?;
    let (train_idx, test_idx) = partition(&side);
    Ok(ShiftSplit {
        train_idx,
        test_idx,
        chosen,
        records,
    })
}

fn partition(side: &[bool]) -> (Vec<usize>, Vec<usize>) {
    let train = (0..side.len()).filter(|&i| side[i]).collect();
    let test = (0..side.len()).filter(|&i| !side[i]).collect();
    (train, test)
}

/// Rows whose `column` value is in `train_values` go to train, the rest to test.
pub fn split_by_column(
    x: &DMatrix<f64>,
    column: usize,
    train_values: &[f64],
) -> Result<(Vec<usize>, Vec<usize>)> {
    if column >= x.ncols() {
        return Err(Error::Dimension(format!(
            "column {column} of {}",
            x.ncols()
        )));
    }
    let side: Vec<bool> = x
        .column(column)
        .iter()
        .map(|v| train_values.contains(v))
        .collect();
    let (train, test) = partition(&side);
    if train.is_empty() || test.is_empty() {
        return Err(Error::Degenerate(format!(
            "split leaves {} training and {} test rows",
            train.len(),
            test.len()
        )));
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_pool(n: usize, d: usize, seed_: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = seed::rng(seed_);
        let x: DMatrix<f64> = DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
        let y = DVector::from_fn(n, |i, _| x[(i, 0)].sin() + 0.1 * x[(i, 1 % d)]);
        (x, y)
    }

    #[test]
    fn logistic_values() {
        assert_eq!(train_probability(0.0), 0.5);
        assert!((train_probability(2.0) - 0.880797077977882).abs() < 1e-12);
        assert!((train_probability(-2.0) + train_probability(2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn projection_scale() {
        let x = DMatrix::from_column_slice(2, 1, &[-1.0, 1.0]);
        let v = projections(&x, &[1.0], 16.0).unwrap();
        assert_eq!(v.as_slice(), &[-16.0, 16.0]);
    }

    #[test]
    fn partition_covers_pool_and_replays() {
        let (x, y) = gaussian_pool(200, 3, 1);
        let spec = ShiftSplitSpec {
            candidates: 8,
            seed: 5,
            ..Default::default()
        };
        let s = shift_split(&x, &y, &spec).unwrap();
        let mut all: Vec<usize> = s.train_idx.iter().chain(&s.test_idx).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..200).collect::<Vec<_>>());
        let rec = &s.records[s.chosen];
        let side = assign_by_direction(&x, &rec.direction, spec.scale, rec.assign_seed).unwrap();
        let replay: Vec<usize> = (0..200).filter(|&i| side[i]).collect();
        assert_eq!(replay, s.train_idx);
        assert_eq!(s.records.len(), 8);
        assert!(s
            .records
            .iter()
            .filter_map(|r| r.metric)
            .all(|m| m <= rec.metric.unwrap()));
        assert_eq!(s, shift_split(&x, &y, &spec).unwrap());
    }

    #[test]
    fn replay_matches_logistic_probabilities() {
        let (x, _) = gaussian_pool(50, 2, 2);
        let w = [0.6, 0.8];
        let side = assign_by_direction(&x, &w, 16.0, 77).unwrap();
        let v = projections(&x, &w, 16.0).unwrap();
        let mut rng = seed::rng(77);
        for i in 0..50 {
            let u: f64 = rng.random();
            assert_eq!(side[i], u < train_probability(v[i]));
        }
    }

    #[test]
    fn train_side_is_high_projection_side() {
        for s in 0..20 {
            let (x, y) = gaussian_pool(300, 2, 100 + s);
            let split = shift_split(
                &x,
                &y,
                &ShiftSplitSpec {
                    candidates: 3,
                    seed: s,
                    ..Default::default()
                },
            )
            .unwrap();
            let w = DVector::from_column_slice(split.direction());
            let proj = &x * w;
            let mean = |idx: &[usize]| idx.iter().map(|&i| proj[i]).sum::<f64>() / idx.len() as f64;
            assert!(mean(&split.train_idx) - mean(&split.test_idx) > 0.0);
        }
    }

    #[test]
    fn column_split() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.1, 2.0, 0.2, 1.0, 0.3, 3.0, 0.4]);
        let (tr, te) = split_by_column(&x, 0, &[1.0]).unwrap();
        assert_eq!(tr, vec![0, 2]);
        assert_eq!(te, vec![1, 3]);
        assert!(split_by_column(&x, 0, &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn tiny_pool_is_error() {
        let (x, y) = gaussian_pool(5, 2, 3);
        assert!(shift_split(&x, &y, &ShiftSplitSpec::default()).is_err());
    }

    #[test]
    fn binary_labels_are_detected() {
        assert_eq!(
            ProbeTask::infer(&DVector::from_vec(vec![0.0, 1.0, 1.0])),
            ProbeTask::Binary
        );
        assert_eq!(
            ProbeTask::infer(&DVector::from_vec(vec![0.5, 1.0])),
            ProbeTask::Regression
        );
    }
}
