use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::RanError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Downlink,
    Uplink,
}

/// One-way delay distribution, in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "lowercase")]
pub enum DelayDist {
    Constant { value: f64 },
    Uniform { min: f64, max: f64 },
    Exponential { mean: f64 },
    /// Resampled uniformly from recorded delays.
    Empirical { samples: Vec<f64> },
}

impl DelayDist {
    pub fn validate(&self) -> Result<(), RanError> {
        let ok = match self {
            DelayDist::Constant { value } => value.is_finite() && *value >= 0.0,
            DelayDist::Uniform { min, max } => {
                min.is_finite() && max.is_finite() && *min >= 0.0 && min <= max
            }
            DelayDist::Exponential { mean } => mean.is_finite() && *mean > 0.0,
            DelayDist::Empirical { samples } => {
                !samples.is_empty() && samples.iter().all(|s| s.is_finite() && *s >= 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(RanError::InvalidProfile(format!("{self:?}")))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DelayDist::Constant { value } => *value,
            DelayDist::Uniform { min, max } => {
                if min == max {
                    *min
                } else {
                    rng.random_range(*min..*max)
                }
            }
            DelayDist::Exponential { mean } => Exp::new(1.0 / mean)
                .expect("validated positive mean")
                .sample(rng),
            DelayDist::Empirical { samples } => samples[rng.random_range(0..samples.len())],
        }
    }
}

/// Per-UE latency and loss seen by app traffic crossing the RAN.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportProfile {
    pub dl: DelayDist,
    pub ul: DelayDist,
    #[serde(default)]
    pub loss: f64,
}

impl Default for TransportProfile {
    fn default() -> Self {
        TransportProfile {
            dl: DelayDist::Constant { value: 0.010 },
            ul: DelayDist::Constant { value: 0.010 },
            loss: 0.0,
        }
    }
}

impl TransportProfile {
    pub fn constant(secs: f64) -> Self {
        TransportProfile {
            dl: DelayDist::Constant { value: secs },
            ul: DelayDist::Constant { value: secs },
            loss: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), RanError> {
        self.dl.validate()?;
        self.ul.validate()?;
        if !(0.0..=1.0).contains(&self.loss) {
            return Err(RanError::InvalidProfile(format!(
                "loss probability {} outside [0,1]",
                self.loss
            )));
        }
        Ok(())
    }
}

/// Outcome of pushing one message across the RAN.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Transport {
    Delivered(f64),
    Lost,
}

impl Transport {
    pub fn delay(self) -> Option<f64> {
        match self {
            Transport::Delivered(d) => Some(d),
            Transport::Lost => None,
        }
    }
}
