use rand::distr::Open01;
use rand::Rng;
use rand_distr::{Distribution, Weibull};
use serde::{Deserialize, Serialize};

use super::{default_feature_names, SurvivalDataset, SurvivalRecord};
use crate::error::{Error, Result};
use crate::seed;

/// Weibull simulation design with a non-linear link on the first four covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n: usize,
    pub censor_fraction: f64,
    pub dim: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { n: 2000, censor_fraction: 0.4, dim: 9, seed: 0 }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 4 {
            return Err(Error::InvalidParameter(format!("dim must be at least 4, got {}", self.dim)));
        }
        if self.n == 0 {
            return Err(Error::InvalidParameter("n must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.censor_fraction) {
            return Err(Error::InvalidParameter(format!(
                "censor_fraction must lie in [0, 1), got {}",
                self.censor_fraction
            )));
        }
        Ok(())
    }

    /// Number of censored records, fixed by construction.
    pub fn censored_count(&self) -> usize {
        (self.censor_fraction * self.n as f64).round() as usize
    }
}

/// Weibull scale `Λ(x) = 2 + ln(13 x0 + 5 x1 + 7 x2) + x3`.
pub fn link(x: &[f64]) -> f64 {
    2.0 + (13.0 * x[0] + 5.0 * x[1] + 7.0 * x[2]).ln() + x[3]
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SurvivalDataset> {
    generate_synthetic_with_latent(cfg).map(|(d, _)| d)
}

/// Also returns the latent event time of every record.
///
/// Covariates are uniform on (0, 1]. Event times are Weibull with shape 2 and
/// scale `link(x)`. Exactly `censored_count()` records, chosen uniformly, are
/// censored at a time uniform on (0, T).
pub fn generate_synthetic_with_latent(cfg: &SyntheticConfig) -> Result<(SurvivalDataset, Vec<f64>)> {
    cfg.validate()?;
    let mut rng = seed::rng(seed::derive_seed(cfg.seed, seed::STREAM_SYNTHETIC, 0));
    let mut covariates = Vec::with_capacity(cfg.n);
    let mut latent = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let x: Vec<f64> = (0..cfg.dim).map(|_| 1.0 - rng.random::<f64>()).collect();
        let weibull = Weibull::new(link(&x), 2.0)
            .map_err(|e| Error::InvalidParameter(format!("weibull: {e}")))?;
        let t = loop {
            let t: f64 = weibull.sample(&mut rng);
            if t > 0.0 {
                break t;
            }
        };
        covariates.push(x);
        latent.push(t);
    }
    let mut censored = rand::seq::index::sample(&mut rng, cfg.n, cfg.censored_count()).into_vec();
    censored.sort_unstable();
    let mut is_censored = vec![false; cfg.n];
    let mut observed = latent.clone();
    for i in censored {
        is_censored[i] = true;
        observed[i] = loop {
            let u: f64 = rng.sample(Open01);
            let c = u * latent[i];
            if c > 0.0 && c < latent[i] {
                break c;
            }
        };
    }
    let records = covariates
        .into_iter()
        .zip(observed)
        .zip(is_censored)
        .map(|((x, y), c)| SurvivalRecord::new(x, y, !c))
        .collect();
    let data = SurvivalDataset::new(records, default_feature_names(cfg.dim))?;
    Ok((data, latent))
}
