//! Canonical exponential-family surrogate likelihoods.
//!
//! Each family contributes `w·r·z − b(z)` per observation, where `z` is the
//! network output (clamped to `[−B, B]` for the logistic families) and `w` is
//! the reward weight: 1 for the Gaussian and Bernoulli families, 2 for the
//! Gaussian/Bernoulli mixture, which is the sum of the other two per-sample
//! terms. Normalisation terms that depend on `r` alone are dropped.

use std::fmt;
use std::str::FromStr;

use crate::bandit::History;
use crate::error::Error;

/// Output clamp for the Bernoulli and mixture families.
pub const LOGISTIC_CLAMP: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FamilyName {
    Gaussian,
    Bernoulli,
    Mixture,
}

impl FamilyName {
    pub const ALL: [FamilyName; 3] = [Self::Gaussian, Self::Bernoulli, Self::Mixture];
}

impl fmt::Display for FamilyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gaussian => "gaussian",
            Self::Bernoulli => "bernoulli",
            Self::Mixture => "mixture",
        })
    }
}

impl FromStr for FamilyName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Self::Gaussian),
            "bernoulli" => Ok(Self::Bernoulli),
            "mixture" => Ok(Self::Mixture),
            other => Err(Error::Config(format!(
                "unknown likelihood '{other}' (expected gaussian, bernoulli or mixture)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateFamily {
    name: FamilyName,
    clamp: f64,
}

impl SurrogateFamily {
    pub fn new(name: FamilyName) -> Self {
        let clamp = match name {
            FamilyName::Gaussian => f64::INFINITY,
            FamilyName::Bernoulli | FamilyName::Mixture => LOGISTIC_CLAMP,
        };
        Self { name, clamp }
    }

    pub fn gaussian() -> Self {
        Self::new(FamilyName::Gaussian)
    }

    pub fn name(&self) -> FamilyName {
        self.name
    }

    /// `B`; infinite for the Gaussian family.
    pub fn clamp_bound(&self) -> f64 {
        self.clamp
    }

    pub fn clamp(&self, z: f64) -> f64 {
        z.clamp(-self.clamp, self.clamp)
    }

    pub fn reward_weight(&self) -> f64 {
        match self.name {
            FamilyName::Mixture => 2.0,
            _ => 1.0,
        }
    }

    /// Log-partition function `b(z)`.
    pub fn b(&self, z: f64) -> f64 {
        match self.name {
            FamilyName::Gaussian => 0.5 * z * z,
            FamilyName::Bernoulli => softplus(z),
            FamilyName::Mixture => 0.5 * z * z + softplus(z),
        }
    }

    pub fn b_prime(&self, z: f64) -> f64 {
        match self.name {
            FamilyName::Gaussian => z,
            FamilyName::Bernoulli => sigmoid(z),
            FamilyName::Mixture => z + sigmoid(z),
        }
    }

    pub fn b_second(&self, z: f64) -> f64 {
        let logistic = |z: f64| {
            let s = sigmoid(z);
            s * (1.0 - s)
        };
        match self.name {
            FamilyName::Gaussian => 1.0,
            FamilyName::Bernoulli => logistic(z),
            FamilyName::Mixture => 1.0 + logistic(z),
        }
    }

    /// `L_b`: smallest curvature on `[−B, B]`.
    pub fn curvature_lower(&self) -> f64 {
        let s = sigmoid(self.clamp);
        match self.name {
            FamilyName::Gaussian => 1.0,
            FamilyName::Bernoulli => s * (1.0 - s),
            FamilyName::Mixture => 1.0 + s * (1.0 - s),
        }
    }

    /// `U_b`: largest curvature.
    pub fn curvature_upper(&self) -> f64 {
        match self.name {
            FamilyName::Gaussian => 1.0,
            FamilyName::Bernoulli => 0.25,
            FamilyName::Mixture => 1.25,
        }
    }

    /// Per-observation log-likelihood at raw network output `z`.
    pub fn log_density(&self, reward: f64, z: f64) -> f64 {
        let z = self.clamp(z);
        self.reward_weight() * reward * z - self.b(z)
    }

    /// Derivative of [`log_density`](Self::log_density) with respect to `z`,
    /// with `b′` evaluated at the clamped output. Inside the operating
    /// interval this is exact; outside it still points back towards it.
    pub fn score(&self, reward: f64, z: f64) -> f64 {
        self.reward_weight() * reward - self.b_prime(self.clamp(z))
    }
}

pub fn make_family(name: FamilyName) -> SurrogateFamily {
    SurrogateFamily::new(name)
}

/// `Σ_s (w·r_s·z_s − b(z_s)) − (reg/2)·anchor_distance²` over the played
/// rounds of `history`, with `z_s = predictor(x_s)`.
pub fn log_likelihood<F>(
    family: &SurrogateFamily,
    history: &History,
    predictor: F,
    reg: f64,
    anchor_distance: f64,
) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let data: f64 = history
        .played()
        .map(|(x, r)| family.log_density(r, predictor(x)))
        .sum();
    data - 0.5 * reg * anchor_distance * anchor_distance
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
