use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};

use super::{Dataset, EvalSet};
use crate::error::{Error, Result};
use crate::seed;

/// Normalized sinc, `sin(πx)/(πx)` with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// One-dimensional regression problem with Gaussian train and test inputs
/// and `y = sinc(x) + ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToySpec {
    pub n_tr: usize,
    pub n_te: usize,
    /// Labeled test-distribution pairs for reporting; 0 for none.
    pub n_eval: usize,
    pub tr_mean: f64,
    pub tr_sd: f64,
    pub te_mean: f64,
    pub te_sd: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for ToySpec {
    fn default() -> Self {
        Self {
            n_tr: 150,
            n_te: 150,
            n_eval: 10_000,
            tr_mean: 1.0,
            tr_sd: 0.5,
            te_mean: 2.0,
            te_sd: 0.25,
            noise_sd: 0.1,
            seed: 0,
        }
    }
}

impl ToySpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_tr == 0 || self.n_te == 0 {
            return Err(Error::InvalidParameter(
                "sample counts must be at least 1".into(),
            ));
        }
        for (name, sd) in [
            ("tr_sd", self.tr_sd),
            ("te_sd", self.te_sd),
            ("noise_sd", self.noise_sd),
        ] {
            if !(sd > 0.0 && sd.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {sd}"
                )));
            }
        }
        if !(self.tr_mean.is_finite() && self.te_mean.is_finite()) {
            return Err(Error::InvalidParameter("means must be finite".into()));
        }
        Ok(())
    }

    /// The exact density ratio `p_te(x) / p_tr(x)`.
    pub fn importance(&self, x: f64) -> f64 {
        let log_ratio = (self.tr_sd / self.te_sd).ln()
            - 0.5 * ((x - self.te_mean) / self.te_sd).powi(2)
            + 0.5 * ((x - self.tr_mean) / self.tr_sd).powi(2);
        log_ratio.exp()
    }
}

fn column(n: usize, mean: f64, sd: f64, rng: &mut seed::Rng) -> Result<DMatrix<f64>> {
    let dist = Normal::new(mean, sd).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(DMatrix::from_iterator(
        n,
        1,
        (0..n).map(|_| dist.sample(rng)),
    ))
}

fn labels(x: &DMatrix<f64>, noise_sd: f64, rng: &mut seed::Rng) -> Result<DVector<f64>> {
    let eps = Normal::new(0.0, noise_sd).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(DVector::from_iterator(
        x.nrows(),
        x.iter().map(|&v| sinc(v) + eps.sample(rng)),
    ))
}

/// Draw train, test and eval blocks from independent seed streams, so
/// changing one block's size leaves the others untouched.
pub fn generate_toy(spec: &ToySpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = seed::rng(seed::derive_named(spec.seed, "toy-train"));
    let train_x = column(spec.n_tr, spec.tr_mean, spec.tr_sd, &mut rng)?;
    let train_y = labels(&train_x, spec.noise_sd, &mut rng)?;
    let mut rng = seed::rng(seed::derive_named(spec.seed, "toy-test"));
    let test_x = column(spec.n_te, spec.te_mean, spec.te_sd, &mut rng)?;
    let eval = if spec.n_eval > 0 {
        let mut rng = seed::rng(seed::derive_named(spec.seed, "toy-eval"));
        let x = column(spec.n_eval, spec.te_mean, spec.te_sd, &mut rng)?;
        let y = labels(&x, spec.noise_sd, &mut rng)?;
        Some(EvalSet { x, y })
    } else {
        None
    };
    Dataset::new(train_x, train_y, test_x, eval, spec.seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinc_values() {
        assert_eq!(sinc(0.0), 1.0);
        assert!(sinc(1.0).abs() < 1e-15);
        assert!((sinc(0.5) - 2.0 / std::f64::consts::PI).abs() < 1e-15);
    }

    fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
        let z = (x - mean) / sd;
        (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
    }

    #[test]
    fn importance_matches_density_quotient() {
        let s = ToySpec::default();
        for x in [0.0, 1.0, 1.7, 2.0, 2.6] {
            let direct = normal_pdf(x, 2.0, 0.25) / normal_pdf(x, 1.0, 0.5);
            assert!((s.importance(x) - direct).abs() < 1e-12 * direct.max(1.0));
        }
    }

    #[test]
    fn sample_means() {
        let spec = ToySpec {
            n_tr: 100_000,
            n_te: 100_000,
            n_eval: 0,
            seed: 4,
            ..ToySpec::default()
        };
        let d = generate_toy(&spec).unwrap();
        assert!((d.train_x.mean() - 1.0).abs() < 0.01);
        assert!((d.test_x.mean() - 2.0).abs() < 0.005);
        assert!(d.eval.is_none());
    }

    #[test]
    fn default_sizes_and_determinism() {
        let a = generate_toy(&ToySpec::default()).unwrap();
        assert_eq!(
            (a.n_train(), a.n_test(), a.eval.as_ref().unwrap().y.len()),
            (150, 150, 10_000)
        );
        assert_eq!(a, generate_toy(&ToySpec::default()).unwrap());
        let b = generate_toy(&ToySpec {
            seed: 1,
            ..ToySpec::default()
        })
        .unwrap();
        assert_ne!(a.train_x, b.train_x);
    }

    #[test]
    fn eval_size_leaves_train_untouched() {
        let a = generate_toy(&ToySpec {
            n_eval: 10,
            ..ToySpec::default()
        })
        .unwrap();
        let b = generate_toy(&ToySpec {
            n_eval: 20,
            ..ToySpec::default()
        })
        .unwrap();
        assert_eq!(a.train_x, b.train_x);
        assert_eq!(a.test_x, b.test_x);
    }

    #[test]
    fn invalid_specs() {
        assert!(generate_toy(&ToySpec {
            n_tr: 0,
            ..ToySpec::default()
        })
        .is_err());
        assert!(generate_toy(&ToySpec {
            te_sd: 0.0,
            ..ToySpec::default()
        })
        .is_err());
    }
}
