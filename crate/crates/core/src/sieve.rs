//! Linear sieve bases for nuisance regression.
//!
//! A [`Sieve`] names a basis and a penalty; a [`FeatureMap`] is the
//! realized, data-bound feature expansion.  The first feature is always the
//! constant 1 and is never penalized.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::zkey;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// Constant plus one indicator per observed covariate stratum (the last
    /// stratum is the reference).  Least squares then reproduces stratum
    /// means exactly.
    Saturated,
    /// Constant, per-coordinate powers up to `degree`, and optionally all
    /// pairwise products of distinct coordinates.
    Polynomial { degree: usize, interactions: bool },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    L2,
    L1,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sieve {
    pub basis: Basis,
    #[serde(default = "default_penalty")]
    pub penalty: Penalty,
    #[serde(default)]
    pub lambda: f64,
}

fn default_penalty() -> Penalty {
    Penalty::L2
}

impl Default for Sieve {
    fn default() -> Self {
        Sieve {
            basis: Basis::Saturated,
            penalty: Penalty::L2,
            lambda: 0.0,
        }
    }
}

impl Sieve {
    pub fn saturated() -> Self {
        Sieve::default()
    }

    pub fn polynomial(degree: usize, interactions: bool) -> Self {
        Sieve {
            basis: Basis::Polynomial {
                degree,
                interactions,
            },
            penalty: Penalty::L2,
            lambda: 0.0,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_penalty(mut self, penalty: Penalty) -> Self {
        self.penalty = penalty;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::InvalidParam(format!(
                "penalty weight must be a finite nonnegative number, got {}",
                self.lambda
            )));
        }
        if let Basis::Polynomial { degree, .. } = self.basis {
            if degree == 0 {
                return Err(Error::InvalidParam(
                    "polynomial basis needs degree >= 1".into(),
                ));
            }
        }
        Ok(())
    }
}

/// A deterministic feature expansion of the covariate vector.
#[derive(Clone, Debug)]
pub enum FeatureMap {
    Polynomial {
        degree: usize,
        interactions: bool,
        dim: usize,
    },
    /// Strata discovered in training data, ordered by bit pattern.
    Indicators { strata: Vec<Vec<f64>> },
}

impl FeatureMap {
    /// Bind a basis to training covariate rows.
    pub fn build<'a>(basis: &Basis, zrows: impl Iterator<Item = &'a [f64]>, dim: usize) -> Result<FeatureMap> {
        match basis {
            Basis::Polynomial {
                degree,
                interactions,
            } => Ok(FeatureMap::Polynomial {
                degree: *degree,
                interactions: *interactions,
                dim,
            }),
            Basis::Saturated => {
                let mut seen = BTreeSet::new();
                let mut strata = Vec::new();
                for z in zrows {
                    if seen.insert(zkey(z)) {
                        strata.push(z.to_vec());
                    }
                }
                strata.sort_by(|a, b| zkey(a).cmp(&zkey(b)));
                if strata.is_empty() {
                    return Err(Error::EmptyDataset);
                }
                Ok(FeatureMap::Indicators { strata })
            }
        }
    }

    /// Number of features p.
    pub fn len(&self) -> usize {
        match self {
            FeatureMap::Polynomial {
                degree,
                interactions,
                dim,
            } => 1 + dim * degree + if *interactions { dim * (dim - 1) / 2 } else { 0 },
            FeatureMap::Indicators { strata } => strata.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn eval(&self, z: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.push(1.0);
        match self {
            FeatureMap::Polynomial {
                degree,
                interactions,
                dim,
            } => {
                for j in 0..*dim {
                    let mut p = 1.0;
                    for _ in 0..*degree {
                        p *= z[j];
                        out.push(p);
                    }
                }
                if *interactions {
                    for j in 0..*dim {
                        for k in (j + 1)..*dim {
                            out.push(z[j] * z[k]);
                        }
                    }
                }
            }
            FeatureMap::Indicators { strata } => {
                // all but the last stratum; exact bit equality
                for s in &strata[..strata.len() - 1] {
                    out.push(if s.as_slice() == z { 1.0 } else { 0.0 });
                }
            }
        }
    }
}
