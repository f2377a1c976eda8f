use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AcdcError, Result};

/// A value that changes at given ticks and holds until the next change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step<T> {
    pub from: u64,
    pub value: T,
}

/// Piecewise-constant schedule over ticks; the first step must start at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Piecewise<T>(pub Vec<Step<T>>);

impl<T: Copy> Piecewise<T> {
    pub fn constant(value: T) -> Self {
        Piecewise(vec![Step { from: 0, value }])
    }

    pub fn at(&self, tick: u64) -> T {
        let idx = self.0.partition_point(|s| s.from <= tick);
        self.0[idx.saturating_sub(1)].value
    }

    fn validate(&self, what: &str) -> Result<()> {
        if self.0.first().map(|s| s.from) != Some(0) {
            return Err(AcdcError::Config(format!("{what} must define a value at tick 0")));
        }
        if self.0.windows(2).any(|w| w[0].from >= w[1].from) {
            return Err(AcdcError::Config(format!("{what} steps must have strictly increasing ticks")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Number of one-second ticks.
    pub duration: u64,
    /// Arriving flows per second.
    pub rate_schedule: Piecewise<f64>,
    /// Memory budget in bytes.
    pub mem_schedule: Piecewise<u64>,
    #[serde(default)]
    pub mpr: Option<f64>,
    /// Seconds added to the first batch after a classifier change.
    #[serde(default)]
    pub switch_cost_s: f64,
    /// Draw per-tick arrivals from a Poisson law instead of the exact rate.
    #[serde(default)]
    pub poisson_arrivals: bool,
}

impl Scenario {
    pub fn constant(duration: u64, rate: f64, mem: u64) -> Self {
        Scenario {
            duration,
            rate_schedule: Piecewise::constant(rate),
            mem_schedule: Piecewise::constant(mem),
            mpr: None,
            switch_cost_s: 0.0,
            poisson_arrivals: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.duration == 0 {
            return Err(AcdcError::Config("scenario duration must be at least 1 tick".into()));
        }
        self.rate_schedule.validate("rate_schedule")?;
        self.mem_schedule.validate("mem_schedule")?;
        if self.rate_schedule.0.iter().any(|s| !(s.value > 0.0 && s.value.is_finite())) {
            return Err(AcdcError::Config("every rate must be positive and finite".into()));
        }
        if let Some(mpr) = self.mpr {
            if !(0.0..=1.0).contains(&mpr) {
                return Err(AcdcError::Config(format!("mpr {mpr} outside [0, 1]")));
            }
        }
        if !(self.switch_cost_s >= 0.0 && self.switch_cost_s.is_finite()) {
            return Err(AcdcError::Config("switch_cost_s must be >= 0".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let s: Scenario = serde_json::from_slice(&std::fs::read(path.as_ref())?)?;
        s.validate()?;
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
