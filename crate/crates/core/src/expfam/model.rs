use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Exp};

use super::NaturalParam;
use crate::error::{Error, Result};

/// Per-point likelihood attached to the Beta prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LikelihoodModel {
    /// Bern(z | θ), conjugate to the Beta prior.
    Bernoulli,
    /// Exp(z | θ) with mean θ; not conjugate.
    Exponential,
}

impl LikelihoodModel {
    pub fn is_conjugate(self) -> bool {
        matches!(self, LikelihoodModel::Bernoulli)
    }

    pub fn name(self) -> &'static str {
        match self {
            LikelihoodModel::Bernoulli => "beta-bernoulli",
            LikelihoodModel::Exponential => "beta-exponential",
        }
    }

    /// Log-loss ℓ(z | θ) = −ln p(z | θ).
    pub fn point_loss(self, z: f64, theta: f64) -> f64 {
        match self {
            LikelihoodModel::Bernoulli => -(z * theta.ln() + (1.0 - z) * (-theta).ln_1p()),
            LikelihoodModel::Exponential => theta.ln() + z / theta,
        }
    }

    /// Natural-parameter increment contributed by one observation, for
    /// conjugate models. Bernoulli z maps to (z, 1 − z).
    pub fn contribution(self, z: f64) -> Option<NaturalParam> {
        match self {
            LikelihoodModel::Bernoulli => Some(NaturalParam::new(z, 1.0 - z)),
            LikelihoodModel::Exponential => None,
        }
    }

    pub fn validate_point(self, z: f64) -> Result<()> {
        let ok = match self {
            LikelihoodModel::Bernoulli => z == 0.0 || z == 1.0,
            LikelihoodModel::Exponential => z.is_finite() && z >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidData(format!("{z} is outside the support of {}", self.name())))
        }
    }

    /// One draw from p(z | θ).
    pub fn sample_point<R: Rng + ?Sized>(self, theta: f64, rng: &mut R) -> Result<f64> {
        match self {
            LikelihoodModel::Bernoulli => {
                let d = Bernoulli::new(theta).map_err(|e| Error::Config(format!("theta {theta}: {e}")))?;
                Ok(if d.sample(rng) { 1.0 } else { 0.0 })
            }
            LikelihoodModel::Exponential => {
                if !(theta > 0.0) {
                    return Err(Error::Config(format!("theta {theta} must be positive")));
                }
                let d = Exp::new(1.0 / theta).map_err(|e| Error::Config(format!("theta {theta}: {e}")))?;
                Ok(d.sample(rng))
            }
        }
    }

    /// Sufficient summary of a dataset for this model's loss.
    pub fn summarize(self, data: &[f64]) -> Result<DataSummary> {
        for &z in data {
            self.validate_point(z)?;
        }
        Ok(DataSummary {
            count: data.len(),
            sum: data.iter().sum(),
        })
    }
}

/// Count and sum of a dataset; enough to evaluate either model's summed loss.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DataSummary {
    pub count: usize,
    pub sum: f64,
}

/// The per-agent objective shared by the protocol engine and the oracles:
/// likelihood model, temperature α and the local-loss normalization switch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub model: LikelihoodModel,
    pub alpha: f64,
    /// Divide each agent's summed loss by its dataset size.
    pub normalize_local_loss: bool,
}

impl Objective {
    pub fn new(model: LikelihoodModel, alpha: f64) -> Self {
        Objective {
            model,
            alpha,
            normalize_local_loss: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }

    /// Weight applied to the summed per-point loss of a dataset of size `n`.
    pub fn loss_weight(&self, n: usize) -> f64 {
        if self.normalize_local_loss && n > 0 {
            1.0 / n as f64
        } else {
            1.0
        }
    }

    /// Local loss L_k(θ) from a dataset summary (no temperature).
    pub fn local_loss(&self, summary: &DataSummary, theta: f64) -> f64 {
        if summary.count == 0 {
            return 0.0;
        }
        let n = summary.count as f64;
        let total = match self.model {
            LikelihoodModel::Bernoulli => -(summary.sum * theta.ln() + (n - summary.sum) * (-theta).ln_1p()),
            LikelihoodModel::Exponential => n * theta.ln() + summary.sum / theta,
        };
        total * self.loss_weight(summary.count)
    }

    /// Exact tempered conjugate factor (1/α)·w·Σ contrib(z), or `None` for a
    /// non-conjugate model.
    pub fn conjugate_factor(&self, data: &[f64]) -> Option<NaturalParam> {
        if !self.model.is_conjugate() {
            return None;
        }
        let raw: NaturalParam = data.iter().map(|&z| self.model.contribution(z).unwrap()).sum();
        let scale = self.loss_weight(data.len()) / self.alpha;
        Some(if scale == 1.0 { raw } else { raw * scale })
    }
}
