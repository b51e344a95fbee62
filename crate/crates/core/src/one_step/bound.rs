//! Monte-Carlo check that `½ R² ≤ J(f, g)` on the toy Gaussian pair, where
//! `R` is the test risk of `f` under a bounded loss and `J` is the population
//! bound with `C = E_tr[r²]`.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::data::{sinc, ToySpec};
use crate::error::{Error, Result};
use crate::loss::tukey;
use crate::seed;

/// Sample sizes below this make the standard-error slack the dominant term.
pub const SMALL_SAMPLE_WARNING: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheckConfig {
    /// Labeled samples drawn from each side.
    pub n: usize,
    pub pairs: usize,
    /// Batches for the batch-means standard error.
    pub batches: usize,
    /// Tukey scale of the bounded true loss (m = 1).
    pub rho: f64,
    /// Allowed violation in standard errors.
    pub slack_se: f64,
    pub toy: ToySpec,
}

impl Default for BoundCheckConfig {
    fn default() -> Self {
        Self {
            n: 100_000,
            pairs: 20,
            batches: 20,
            rho: 0.5,
            slack_se: 3.0,
            toy: ToySpec::default(),
        }
    }
}

/// A predictor `a·sinc(x) + b + c·x` and a weight `max(0, s·r(x)^γ + t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundPair {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub s: f64,
    pub gamma: f64,
    pub t: f64,
}

impl BoundPair {
    /// `f = sinc`, `g = r`.
    pub fn exact() -> Self {
        Self {
            a: 1.0,
            b: 0.0,
            c: 0.0,
            s: 1.0,
            gamma: 1.0,
            t: 0.0,
        }
    }

    fn random(rng: &mut seed::Rng) -> Self {
        Self {
            a: rng.random_range(0.5..1.5),
            b: rng.random_range(-0.3..0.3),
            c: rng.random_range(-0.2..0.2),
            s: rng.random_range(0.5..1.5),
            gamma: rng.random_range(0.0..1.0),
            t: rng.random_range(-0.5..0.5),
        }
    }

    fn f(&self, x: f64) -> f64 {
        self.a * sinc(x) + self.b + self.c * x
    }

    fn g(&self, r: f64) -> f64 {
        (self.s * r.powf(self.gamma) + self.t).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairOutcome {
    pub pair: BoundPair,
    pub j_hat: f64,
    pub half_risk_sq: f64,
    /// `j_hat − half_risk_sq`.
    pub margin: f64,
    pub standard_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub constant_c: f64,
    pub outcomes: Vec<PairOutcome>,
    pub warning: Option<String>,
}

impl BoundReport {
    pub fn all_pass(&self) -> bool {
        self.outcomes.iter().all(|o| o.pass)
    }
}

struct Sample {
    x: Vec<f64>,
    y: Vec<f64>,
}

fn draw(n: usize, mean: f64, sd: f64, noise: f64, rng: &mut seed::Rng) -> Result<Sample> {
    let input = Normal::new(mean, sd).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let eps = Normal::new(0.0, noise).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let x: Vec<f64> = (0..n).map(|_| input.sample(rng)).collect();
    let y = x.iter().map(|&v| sinc(v) + eps.sample(rng)).collect();
    Ok(Sample { x, y })
}

/// `J − ½R²` on index ranges of the two samples.
#[allow(clippy::too_many_arguments)]
fn margin_on(
    pair: &BoundPair,
    tr: &Sample,
    te: &Sample,
    toy: &ToySpec,
    rho: f64,
    c: f64,
    tr_range: std::ops::Range<usize>,
    te_range: std::ops::Range<usize>,
) -> (f64, f64) {
    let n_tr = tr_range.len() as f64;
    let n_te = te_range.len() as f64;
    let (mut lg, mut g2) = (0.0, 0.0);
    for i in tr_range {
        let g = pair.g(toy.importance(tr.x[i]));
        lg += tukey(pair.f(tr.x[i]) - tr.y[i], rho) * g;
        g2 += g * g;
    }
    let (mut g_te, mut risk) = (0.0, 0.0);
    for i in te_range {
        g_te += pair.g(toy.importance(te.x[i]));
        risk += tukey(pair.f(te.x[i]) - te.y[i], rho);
    }
    let lg = lg / n_tr;
    let j = lg * lg + (g2 / n_tr - 2.0 * g_te / n_te + c);
    let r = risk / n_te;
    (j, 0.5 * r * r)
}

/// Run the ordering check on `config.pairs` pairs; the first pair is
/// [`BoundPair::exact`], the rest are random.
pub fn bound_check(config: &BoundCheckConfig, seed_: u64) -> Result<BoundReport> {
    if config.n == 0 || config.pairs == 0 {
        return Err(Error::InvalidParameter(
            "bound check needs n ≥ 1 and at least one pair".into(),
        ));
    }
    if config.batches < 2 || config.batches > config.n {
        return Err(Error::InvalidParameter(format!(
            "batch count {} must lie in 2..={}",
            config.batches, config.n
        )));
    }
    let toy = &config.toy;
    let mut rng = seed::rng(seed::derive_named(seed_, "bound-samples"));
    let tr = draw(config.n, toy.tr_mean, toy.tr_sd, toy.noise_sd, &mut rng)?;
    let te = draw(config.n, toy.te_mean, toy.te_sd, toy.noise_sd, &mut rng)?;
    let c = tr.x.iter().map(|&x| toy.importance(x).powi(2)).sum::<f64>() / config.n as f64;
    let mut pair_rng = seed::rng(seed::derive_named(seed_, "bound-pairs"));
    let batch_len = config.n / config.batches;
    let mut outcomes = Vec::with_capacity(config.pairs);
    for k in 0..config.pairs {
        let pair = if k == 0 {
            BoundPair::exact()
        } else {
            BoundPair::random(&mut pair_rng)
        };
        let (j_hat, half) = margin_on(
            &pair,
            &tr,
            &te,
            toy,
            config.rho,
            c,
            0..config.n,
            0..config.n,
        );
        let margins: Vec<f64> = (0..config.batches)
            .map(|b| {
                let r = b * batch_len..(b + 1) * batch_len;
                let (j, h) = margin_on(&pair, &tr, &te, toy, config.rho, c, r.clone(), r);
                j - h
            })
            .collect();
        let mean = margins.iter().sum::<f64>() / margins.len() as f64;
        let var =
            margins.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (margins.len() - 1) as f64;
        let se = (var / margins.len() as f64).sqrt();
        let margin = j_hat - half;
        outcomes.push(PairOutcome {
            pair,
            j_hat,
            half_risk_sq: half,
            margin,
            standard_error: se,
            pass: margin >= -config.slack_se * se,
        });
    }
    let warning = (config.n < SMALL_SAMPLE_WARNING).then(|| {
        format!(
            "n = {} is small; the standard-error slack dominates and the check has little power",
            config.n
        )
    });
    Ok(BoundReport {
        constant_c: c,
        outcomes,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_weight_makes_second_term_vanish() {
        let config = BoundCheckConfig {
            n: 20_000,
            pairs: 1,
            ..Default::default()
        };
        let report = bound_check(&config, 3).unwrap();
        let o = &report.outcomes[0];
        assert!(o.pass);
        // J ≈ R² when g = r, so the margin is about ½R²
        assert!((o.margin - o.half_risk_sq).abs() < 0.1 * o.half_risk_sq + 5.0 * o.standard_error);
    }

    #[test]
    fn small_samples_warn() {
        let config = BoundCheckConfig {
            n: 100,
            pairs: 2,
            batches: 5,
            ..Default::default()
        };
        assert!(bound_check(&config, 1).unwrap().warning.is_some());
        let config = BoundCheckConfig {
            n: 20_000,
            pairs: 2,
            ..Default::default()
        };
        assert!(bound_check(&config, 1).unwrap().warning.is_none());
    }

    #[test]
    fn deterministic() {
        let config = BoundCheckConfig {
            n: 5_000,
            pairs: 3,
            ..Default::default()
        };
        assert_eq!(
            bound_check(&config, 8).unwrap(),
            bound_check(&config, 8).unwrap()
        );
    }

    #[test]
    fn rejects_bad_config() {
        assert!(bound_check(
            &BoundCheckConfig {
                n: 0,
                ..Default::default()
            },
            0
        )
        .is_err());
        assert!(bound_check(
            &BoundCheckConfig {
                n: 10,
                batches: 20,
                ..Default::default()
            },
            0
        )
        .is_err());
    }
}
