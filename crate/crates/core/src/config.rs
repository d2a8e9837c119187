use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::panel::Panel;

/// Instrument hyperparameters and the confidence level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IvxConfig {
    pub c_z: f64,
    pub theta: f64,
    pub ci_level: f64,
}

impl Default for IvxConfig {
    fn default() -> Self {
        Self {
            c_z: -1.0,
            theta: 0.95,
            ci_level: 0.95,
        }
    }
}

impl IvxConfig {
    pub fn new(c_z: f64, theta: f64, ci_level: f64) -> Result<Self> {
        let cfg = Self { c_z, theta, ci_level };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_z < 0.0 && self.c_z.is_finite()) {
            return Err(Error::InvalidConfig(format!("c_z must be negative, got {}", self.c_z)));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::InvalidConfig(format!("theta must lie in (0,1), got {}", self.theta)));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "ci_level must lie in (0,1), got {}",
                self.ci_level
            )));
        }
        Ok(())
    }

    /// `ρ_z = 1 + c_z / T^θ`.
    pub fn rho_z(&self, periods: usize) -> Result<f64> {
        let rz = 1.0 + self.c_z / (periods as f64).powf(self.theta);
        if rz > 0.0 && rz < 1.0 {
            Ok(rz)
        } else {
            Err(Error::InvalidConfig(format!(
                "instrument persistence {rz} outside (0,1) for T = {periods}"
            )))
        }
    }

    /// `ρ_z` for a panel, using the longest individual span.
    pub fn rho_z_for(&self, panel: &Panel) -> Result<f64> {
        self.rho_z(panel.max_periods())
    }

    /// Two-sided normal critical value `Φ⁻¹(1 − (1 − level)/2)`.
    pub fn critical_value(&self) -> f64 {
        normal_quantile(1.0 - (1.0 - self.ci_level) / 2.0)
    }
}

pub(crate) fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = IvxConfig::default();
        assert!(c.validate().is_ok());
        let rz = c.rho_z(100).unwrap();
        assert!((rz - (1.0 - 100f64.powf(-0.95))).abs() < 1e-15);
        assert!((c.critical_value() - 1.959963984540054).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(IvxConfig::new(0.5, 0.95, 0.95).is_err());
        assert!(IvxConfig::new(-1.0, 1.0, 0.95).is_err());
        assert!(IvxConfig::new(-1.0, 0.5, 1.0).is_err());
        assert!(IvxConfig::default().rho_z(1).is_err());
    }
}
