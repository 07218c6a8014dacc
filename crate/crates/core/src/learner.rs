//! Pluggable nuisance learners for cross-fitting.

use serde::{Deserialize, Serialize};

use crate::dataset::Table;
use crate::error::{Error, Result};
use crate::fit::{fit_ratio_nuisance, fit_riesz_loss, FitDiagnostics, FittedNuisance};
use crate::functional::{NuisanceFn, ProblemSpec, Side};
use crate::sieve::Sieve;

pub const DEFAULT_TRIM: f64 = 0.01;

/// Fits one nuisance function on a training fold.  Learners are pure given
/// their configuration; the seed parameter exists for learners with
/// internal randomness and is ignored by the deterministic ones here.
pub trait NuisanceLearner: Send + Sync {
    fn fit(&self, train: &Table, spec: &ProblemSpec, side: Side, seed: u64)
        -> Result<FittedNuisance>;
}

/// The conditional-mean-ratio route (side a only; needs the spec's q).
pub struct RatioLearner {
    pub sieve_num: Sieve,
    pub sieve_den: Sieve,
    pub trim: f64,
}

impl RatioLearner {
    pub fn new(sieve: Sieve, trim: f64) -> Self {
        RatioLearner {
            sieve_num: sieve.clone(),
            sieve_den: sieve,
            trim,
        }
    }
}

impl NuisanceLearner for RatioLearner {
    fn fit(
        &self,
        train: &Table,
        spec: &ProblemSpec,
        side: Side,
        _seed: u64,
    ) -> Result<FittedNuisance> {
        if side != Side::A {
            return Err(Error::Config(
                "the ratio learner estimates side a; fit side b with the riesz_loss learner"
                    .into(),
            ));
        }
        fit_ratio_nuisance(train, spec, &self.sieve_num, &self.sieve_den, self.trim)
    }
}

/// The sign-adjusted empirical loss route; works for either side.
pub struct RieszLossLearner {
    pub sieve: Sieve,
}

impl NuisanceLearner for RieszLossLearner {
    fn fit(
        &self,
        train: &Table,
        spec: &ProblemSpec,
        side: Side,
        _seed: u64,
    ) -> Result<FittedNuisance> {
        fit_riesz_loss(train, spec, side, &self.sieve)
    }
}

/// Returns a fixed function regardless of the data: oracle nuisances in
/// tests and simulations, or deliberately misspecified ones.
pub struct FixedLearner {
    pub func: NuisanceFn,
}

impl FixedLearner {
    pub fn new(func: NuisanceFn) -> Self {
        FixedLearner { func }
    }
}

impl NuisanceLearner for FixedLearner {
    fn fit(
        &self,
        _train: &Table,
        _spec: &ProblemSpec,
        _side: Side,
        _seed: u64,
    ) -> Result<FittedNuisance> {
        Ok(FittedNuisance {
            func: self.func.clone(),
            diagnostics: FitDiagnostics::default(),
        })
    }
}

/// Serializable learner configuration (the CLI's JSON form).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum LearnerConfig {
    Ratio {
        sieve: Sieve,
        #[serde(default)]
        sieve_den: Option<Sieve>,
        #[serde(default = "default_trim")]
        trim: f64,
    },
    RieszLoss { sieve: Sieve },
}

fn default_trim() -> f64 {
    DEFAULT_TRIM
}

impl LearnerConfig {
    pub fn ratio(sieve: Sieve) -> Self {
        LearnerConfig::Ratio {
            sieve,
            sieve_den: None,
            trim: DEFAULT_TRIM,
        }
    }

    pub fn riesz(sieve: Sieve) -> Self {
        LearnerConfig::RieszLoss { sieve }
    }

    pub fn build(&self) -> Result<Box<dyn NuisanceLearner>> {
        match self {
            LearnerConfig::Ratio {
                sieve,
                sieve_den,
                trim,
            } => {
                if !(*trim > 0.0) {
                    return Err(Error::InvalidParam(format!(
                        "trim must be positive, got {trim}"
                    )));
                }
                Ok(Box::new(RatioLearner {
                    sieve_num: sieve.clone(),
                    sieve_den: sieve_den.clone().unwrap_or_else(|| sieve.clone()),
                    trim: *trim,
                }))
            }
            LearnerConfig::RieszLoss { sieve } => {
                Ok(Box::new(RieszLossLearner { sieve: sieve.clone() }))
            }
        }
    }
}
