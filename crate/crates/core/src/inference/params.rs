use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ExpParams, LogisticParams, RawExpParams, DEFAULT_RTOL};

/// Which growth model a parameter vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    /// `(theta1, theta2, theta3)`: the identifiable exponential parametrisation.
    Exponential,
    /// `(beta1, beta2, x1_0, x2_0, sigma)`.
    ExponentialRaw,
    /// `(lambda1, lambda2, K, x1_0, x2_0, sigma)`, integrated with relative
    /// tolerance `rtol`.
    Logistic { rtol: f64 },
}

impl ModelKind {
    pub fn logistic() -> Self {
        ModelKind::Logistic { rtol: DEFAULT_RTOL }
    }

    pub fn names(&self) -> &'static [&'static str] {
        match self {
            ModelKind::Exponential => &["theta1", "theta2", "theta3"],
            ModelKind::ExponentialRaw => &["beta1", "beta2", "x1_0", "x2_0", "sigma"],
            ModelKind::Logistic { .. } => &["lambda1", "lambda2", "K", "x1_0", "x2_0", "sigma"],
        }
    }

    /// Positivity-constrained components, optimised on the log scale.
    pub fn log_scale(&self) -> &'static [bool] {
        match self {
            ModelKind::Exponential => &[false, true, true],
            ModelKind::ExponentialRaw => &[false, false, true, true, true],
            ModelKind::Logistic { .. } => &[false, false, true, true, true, true],
        }
    }

    pub fn dim(&self) -> usize {
        self.names().len()
    }

    /// The error scale is always the last component.
    pub fn sigma_index(&self) -> usize {
        self.dim() - 1
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names().iter().position(|n| *n == name).ok_or_else(|| {
            Error::InvalidParameter(format!("unknown parameter {name:?} for {self}"))
        })
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            ModelKind::Exponential => "exp",
            ModelKind::ExponentialRaw => "exp_raw",
            ModelKind::Logistic { .. } => "logistic",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

/// Natural-scale parameter values with per-component fixed flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub model: ModelKind,
    pub values: Vec<f64>,
    pub fixed: Vec<bool>,
}

impl ParamVector {
    pub fn new(model: ModelKind, values: Vec<f64>) -> Result<Self> {
        if values.len() != model.dim() {
            return Err(Error::InvalidParameter(format!(
                "{model} expects {} values, got {}",
                model.dim(),
                values.len()
            )));
        }
        let pv = Self {
            model,
            fixed: vec![false; values.len()],
            values,
        };
        pv.validate()?;
        Ok(pv)
    }

    pub fn exponential(p: ExpParams) -> Self {
        Self {
            model: ModelKind::Exponential,
            values: vec![p.theta1, p.theta2, p.theta3],
            fixed: vec![false; 3],
        }
    }

    pub fn exponential_raw(p: RawExpParams) -> Self {
        Self {
            model: ModelKind::ExponentialRaw,
            values: vec![p.beta1, p.beta2, p.x1_0, p.x2_0, p.sigma],
            fixed: vec![false; 5],
        }
    }

    pub fn logistic(p: LogisticParams) -> Self {
        Self {
            model: ModelKind::logistic(),
            values: vec![p.lambda1, p.lambda2, p.capacity, p.x1_0, p.x2_0, p.sigma],
            fixed: vec![false; 6],
        }
    }

    pub fn with_model(mut self, model: ModelKind) -> Self {
        assert_eq!(model.dim(), self.model.dim());
        self.model = model;
        self
    }

    /// Mark the named component as fixed at its current value.
    pub fn fix(mut self, name: &str) -> Result<Self> {
        let i = self.model.index_of(name)?;
        self.fixed[i] = true;
        Ok(self)
    }

    pub fn fix_at(mut self, name: &str, value: f64) -> Result<Self> {
        let i = self.model.index_of(name)?;
        self.values[i] = value;
        self.fixed[i] = true;
        self.validate()?;
        Ok(self)
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        Ok(self.values[self.model.index_of(name)?])
    }

    pub fn sigma(&self) -> f64 {
        self.values[self.model.sigma_index()]
    }

    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.values.len()).filter(|&i| !self.fixed[i]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, (&v, &log)) in self.values.iter().zip(self.model.log_scale()).enumerate() {
            let name = self.model.names()[i];
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite, got {v}"
                )));
            }
            if log && v <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be > 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// All components in optimiser coordinates.
    pub fn to_internal(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(self.model.log_scale())
            .map(|(&v, &log)| if log { v.ln() } else { v })
            .collect()
    }

    pub fn from_internal(model: ModelKind, internal: &[f64], fixed: Vec<bool>) -> Self {
        let values = internal
            .iter()
            .zip(model.log_scale())
            .map(|(&z, &log)| if log { z.exp() } else { z })
            .collect();
        Self {
            model,
            values,
            fixed,
        }
    }

    pub fn as_exponential(&self) -> Option<ExpParams> {
        match self.model {
            ModelKind::Exponential => Some(ExpParams {
                theta1: self.values[0],
                theta2: self.values[1],
                theta3: self.values[2],
            }),
            ModelKind::ExponentialRaw => {
                let v = &self.values;
                Some(ExpParams::from_raw(&RawExpParams {
                    beta1: v[0],
                    beta2: v[1],
                    x1_0: v[2],
                    x2_0: v[3],
                    sigma: v[4],
                }))
            }
            ModelKind::Logistic { .. } => None,
        }
    }

    pub fn as_logistic(&self) -> Option<LogisticParams> {
        match self.model {
            ModelKind::Logistic { .. } => {
                let v = &self.values;
                Some(LogisticParams {
                    lambda1: v[0],
                    lambda2: v[1],
                    capacity: v[2],
                    x1_0: v[3],
                    x2_0: v[4],
                    sigma: v[5],
                })
            }
            _ => None,
        }
    }
}

impl fmt::Display for ParamVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (name, v)) in self.model.names().iter().zip(&self.values).enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{name}={v:.6}")?;
            if self.fixed[i] {
                f.write_str(" (fixed)")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn internal_round_trip() {
        let pv =
            ParamVector::new(ModelKind::logistic(), vec![0.1, 0.2, 1e3, 10.0, 10.0, 0.2]).unwrap();
        let back = ParamVector::from_internal(pv.model, &pv.to_internal(), pv.fixed.clone());
        for (a, b) in pv.values.iter().zip(&back.values) {
            assert!((a - b).abs() <= 1e-12 * a.abs());
        }
    }

    #[test]
    fn fix_and_lookup() {
        let pv = ParamVector::new(ModelKind::Exponential, vec![0.1, 1.0, 0.2])
            .unwrap()
            .fix_at("theta2", 2.0)
            .unwrap();
        assert_eq!(pv.free_indices(), vec![0, 2]);
        assert_eq!(pv.get("theta2").unwrap(), 2.0);
        assert!(pv.clone().fix("nope").is_err());
        assert!(ParamVector::new(ModelKind::Exponential, vec![0.1, -1.0, 0.2]).is_err());
    }
}
