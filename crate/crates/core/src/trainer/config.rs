use serde::{Deserialize, Serialize};

use crate::edl::{Activation, DEFAULT_PHI};
use crate::error::{Error, Result};
use crate::info_volume::DEFAULT_RHO;

/// Every knob of a training run. Missing JSON fields take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Pre-training weight of the uncertainty-sort loss.
    pub lambda1: f64,
    /// Pre-training weight of the IVUM-guided EDL loss.
    pub lambda2: f64,
    /// Pre-training weight of the rank-weighted IVUM-guided EDL loss.
    pub lambda3: f64,
    /// Self-training counterparts of `lambda1..=lambda3`.
    pub lambda4: f64,
    pub lambda5: f64,
    pub lambda6: f64,
    pub phi: f64,
    pub rho: f64,
    pub eta: f64,
    pub epochs_pre: usize,
    pub epochs_self: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub image_size: usize,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub n_test: usize,
    pub activation: Activation,
    /// Standard deviation of the initial parameters.
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda1: 1.6,
            lambda2: 2.4,
            lambda3: 0.8,
            lambda4: 1.6,
            lambda5: 2.4,
            lambda6: 0.8,
            phi: DEFAULT_PHI,
            rho: DEFAULT_RHO,
            eta: 2.0 / 3.0,
            epochs_pre: 200,
            epochs_self: 300,
            learning_rate: 0.03,
            seed: 0,
            image_size: 64,
            n_labeled: 2,
            n_unlabeled: 38,
            n_test: 20,
            activation: Activation::Relu,
            init_scale: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn lambdas(&self) -> [f64; 6] {
        [
            self.lambda1,
            self.lambda2,
            self.lambda3,
            self.lambda4,
            self.lambda5,
            self.lambda6,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if let Some(l) = self
            .lambdas()
            .iter()
            .find(|l| !(**l >= 0.0 && l.is_finite()))
        {
            return bad(format!("loss weights must be >= 0, got {l}"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            ));
        }
        if !(self.phi >= 0.0 && self.phi.is_finite()) {
            return bad(format!("phi must be >= 0, got {}", self.phi));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidTolerance(self.rho));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::RatioOutOfRange(self.eta));
        }
        if self.n_labeled < 2 {
            return bad(format!("n_labeled must be >= 2, got {}", self.n_labeled));
        }
        if self.epochs_self > 0 && self.n_unlabeled < 2 {
            return bad("self-training needs at least 2 unlabeled images".into());
        }
        if self.image_size < 8 {
            return bad(format!("image_size must be >= 8, got {}", self.image_size));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return bad(format!("init_scale must be >= 0, got {}", self.init_scale));
        }
        Ok(())
    }
}
