//! A 2-D multiclass problem with a shared posterior and shifted inputs.
//!
//! The posterior is `p(y = k | x) ∝ π_k N(x; c_k, s_k² I)`. Unequal `s_k`
//! make the Bayes boundaries quadratic, so a linear softmax classifier is
//! misspecified. Training and test inputs are drawn from different isotropic
//! Gaussians and labels are sampled from the posterior on both sides.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, EvalSet};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct BlobsSpec {
    pub n_tr: usize,
    pub n_te: usize,
    pub n_eval: usize,
    pub class_centers: Vec<[f64; 2]>,
    pub class_sds: Vec<f64>,
    pub class_priors: Vec<f64>,
    pub tr_mean: [f64; 2],
    pub tr_sd: f64,
    pub te_mean: [f64; 2],
    pub te_sd: f64,
    pub seed: u64,
}

impl Default for BlobsSpec {
    fn default() -> Self {
        Self {
            n_tr: 500,
            n_te: 500,
            n_eval: 5000,
            class_centers: vec![[0.0, 0.0], [2.0, 0.0], [1.0, 1.8]],
            class_sds: vec![0.6, 1.2, 0.8],
            class_priors: vec![1.0 / 3.0; 3],
            tr_mean: [0.3, 0.3],
            tr_sd: 1.0,
            te_mean: [1.6, 1.0],
            te_sd: 0.6,
            seed: 0,
        }
    }
}

impl BlobsSpec {
    pub fn n_classes(&self) -> usize {
        self.class_centers.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.n_classes();
        if k < 2 || self.class_sds.len() != k || self.class_priors.len() != k {
            return Err(Error::InvalidParameter(
                "need at least 2 classes with one sd and one prior each".into(),
            ));
        }
        if self.n_tr == 0 || self.n_te == 0 {
            return Err(Error::InvalidParameter(
                "sample counts must be at least 1".into(),
            ));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !self.class_sds.iter().all(|s| positive(*s))
            || !self.class_priors.iter().all(|p| positive(*p))
            || !positive(self.tr_sd)
            || !positive(self.te_sd)
        {
            return Err(Error::InvalidParameter(
                "standard deviations and priors must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Class probabilities at `x`.
    pub fn posterior(&self, x: [f64; 2]) -> Vec<f64> {
        let logs: Vec<f64> = (0..self.n_classes())
            .map(|k| {
                let c = self.class_centers[k];
                let s = self.class_sds[k];
                let d2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
                self.class_priors[k].ln() - 2.0 * s.ln() - d2 / (2.0 * s * s)
            })
            .collect();
        crate::loss::softmax(&logs)
    }
}

fn draw(
    spec: &BlobsSpec,
    n: usize,
    mean: [f64; 2],
    sd: f64,
    rng: &mut seed::Rng,
) -> (DMatrix<f64>, DVector<f64>) {
    let mut x = DMatrix::zeros(n, 2);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let a: f64 = StandardNormal.sample(rng);
        let b: f64 = StandardNormal.sample(rng);
        let p = [mean[0] + sd * a, mean[1] + sd * b];
        x[(i, 0)] = p[0];
        x[(i, 1)] = p[1];
        let post = spec.posterior(p);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut label = post.len() - 1;
        for (k, pk) in post.iter().enumerate() {
            acc += pk;
            if u < acc {
                label = k;
                break;
            }
        }
        y[i] = label as f64;
    }
    (x, y)
}

pub fn generate_blobs(spec: &BlobsSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = seed::rng(seed::derive_named(spec.seed, "blobs-train"));
    let (train_x, train_y) = draw(spec, spec.n_tr, spec.tr_mean, spec.tr_sd, &mut rng);
    let mut rng = seed::rng(seed::derive_named(spec.seed, "blobs-test"));
    let (test_x, _) = draw(spec, spec.n_te, spec.te_mean, spec.te_sd, &mut rng);
    let eval = if spec.n_eval > 0 {
        let mut rng = seed::rng(seed::derive_named(spec.seed, "blobs-eval"));
        let (x, y) = draw(spec, spec.n_eval, spec.te_mean, spec.te_sd, &mut rng);
        Some(EvalSet { x, y })
    } else {
        None
    };
    Dataset::new(train_x, train_y, test_x, eval, spec.seed)
}
