use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Resolution knob for the sampled searches (BC region, DF intersection, CF grid).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Effort {
    Low,
    #[default]
    Default,
    High,
}

impl Effort {
    /// Beam directions sampled on each stream's arc.
    pub fn beam_points(self) -> usize {
        match self {
            Effort::Low => 9,
            Effort::Default => 17,
            Effort::High => 25,
        }
    }

    /// Steps of the power-split simplex.
    pub fn power_steps(self) -> usize {
        match self {
            Effort::Low => 8,
            Effort::Default => 16,
            Effort::High => 24,
        }
    }

    /// Steps of the weight simplex used to collect support points.
    pub fn direction_steps(self) -> usize {
        match self {
            Effort::Low => 10,
            Effort::Default => 20,
            Effort::High => 30,
        }
    }

    pub fn subregion_samples(self) -> usize {
        match self {
            Effort::Low => 11,
            Effort::Default => 21,
            Effort::High => 41,
        }
    }

    /// Points per axis of the (alpha, beta) grid of the DF fallback search.
    pub fn df_grid(self) -> usize {
        match self {
            Effort::Low => 11,
            Effort::Default => 21,
            Effort::High => 41,
        }
    }

    /// Points per axis of the CF quantization-noise grid.
    pub fn cf_grid(self) -> usize {
        match self {
            Effort::Low => 30,
            Effort::Default => 60,
            Effort::High => 120,
        }
    }

    /// Objective evaluations of the joint covariance/noise polish after the CF grid search.
    pub fn cf_polish_evals(self) -> usize {
        match self {
            Effort::Low => 1_000,
            Effort::Default => 12_000,
            Effort::High => 24_000,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Effort::Low => "low",
            Effort::Default => "default",
            Effort::High => "high",
        }
    }
}

impl fmt::Display for Effort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Effort {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "low" => Ok(Effort::Low),
            "default" => Ok(Effort::Default),
            "high" => Ok(Effort::High),
            other => Err(format!("unknown effort `{other}` (expected low, default or high)")),
        }
    }
}
