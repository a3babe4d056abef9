//! Two-population growth dynamics and the concentration observable.
//!
//! Population 1 is the modified population, Population 2 the control. The
//! exponential model has an analytic solution; the logistic model shares a
//! carrying capacity between the populations and is integrated numerically.
//!
//! The logistic system is integrated in log-normalised coordinates
//! `v_k = ln(x_k / K)`, which keeps both populations strictly positive and
//! makes the joint rescaling of `(K, x1(0), x2(0))` an exact symmetry of the
//! numerical solution as well as of the ODE.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{self, Tolerance};

/// Smallest distance of a reported concentration from 0 or 1.
pub const OBSERVABLE_GUARD: f64 = f64::EPSILON;

/// Default relative tolerance of the logistic integrator.
pub const DEFAULT_RTOL: f64 = 1e-8;

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be finite, got {v}"
        )))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    check_finite(name, v)?;
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be > 0, got {v}"
        )))
    }
}

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `1 / (1 + e^{-z})`.
pub(crate) fn logistic_fn(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Reparametrised exponential model: relative net growth, initial ratio and
/// error scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpParams {
    /// `beta2 - beta1`, per day.
    pub theta1: f64,
    /// `x2(0) / x1(0)`.
    pub theta2: f64,
    /// Error scale sigma.
    pub theta3: f64,
}

impl ExpParams {
    pub fn new(theta1: f64, theta2: f64, theta3: f64) -> Result<Self> {
        check_finite("theta1", theta1)?;
        check_positive("theta2", theta2)?;
        check_positive("theta3", theta3)?;
        Ok(Self {
            theta1,
            theta2,
            theta3,
        })
    }

    pub fn from_raw(raw: &RawExpParams) -> Self {
        Self {
            theta1: raw.beta2 - raw.beta1,
            theta2: raw.x2_0 / raw.x1_0,
            theta3: raw.sigma,
        }
    }
}

/// The five-component exponential parametrisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawExpParams {
    pub beta1: f64,
    pub beta2: f64,
    pub x1_0: f64,
    pub x2_0: f64,
    pub sigma: f64,
}

impl RawExpParams {
    pub fn new(beta1: f64, beta2: f64, x1_0: f64, x2_0: f64, sigma: f64) -> Result<Self> {
        check_finite("beta1", beta1)?;
        check_finite("beta2", beta2)?;
        check_positive("x1_0", x1_0)?;
        check_positive("x2_0", x2_0)?;
        check_positive("sigma", sigma)?;
        Ok(Self {
            beta1,
            beta2,
            x1_0,
            x2_0,
            sigma,
        })
    }

    fn validate(&self) -> Result<()> {
        Self::new(self.beta1, self.beta2, self.x1_0, self.x2_0, self.sigma).map(|_| ())
    }
}

impl From<ExpParams> for RawExpParams {
    /// Canonical representative: `x1(0) = 1`, `beta1 = 0`.
    fn from(p: ExpParams) -> Self {
        Self {
            beta1: 0.0,
            beta2: p.theta1,
            x1_0: 1.0,
            x2_0: p.theta2,
            sigma: p.theta3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub capacity: f64,
    pub x1_0: f64,
    pub x2_0: f64,
    pub sigma: f64,
}

impl LogisticParams {
    pub fn new(
        lambda1: f64,
        lambda2: f64,
        capacity: f64,
        x1_0: f64,
        x2_0: f64,
        sigma: f64,
    ) -> Result<Self> {
        let p = Self::unchecked(lambda1, lambda2, capacity, x1_0, x2_0, sigma)?;
        if x1_0 + x2_0 >= capacity {
            return Err(Error::InvalidParameter(format!(
                "x1_0 + x2_0 = {} must be below the capacity {capacity}",
                x1_0 + x2_0
            )));
        }
        Ok(p)
    }

    /// Like [`LogisticParams::new`] but without the `x1_0 + x2_0 < K`
    /// requirement. Optimisers move through that region freely; the dynamics
    /// remain well defined there (populations decay towards `K`).
    pub fn unchecked(
        lambda1: f64,
        lambda2: f64,
        capacity: f64,
        x1_0: f64,
        x2_0: f64,
        sigma: f64,
    ) -> Result<Self> {
        check_finite("lambda1", lambda1)?;
        check_finite("lambda2", lambda2)?;
        check_positive("capacity", capacity)?;
        check_positive("x1_0", x1_0)?;
        check_positive("x2_0", x2_0)?;
        check_positive("sigma", sigma)?;
        Ok(Self {
            lambda1,
            lambda2,
            capacity,
            x1_0,
            x2_0,
            sigma,
        })
    }
}

/// Cell numbers of both populations on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    pub times: Vec<f64>,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
}

fn check_times(times: &[f64]) -> Result<()> {
    if let Some(&first) = times.first() {
        if !(first >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "times must start at or after day 0, got {first}"
            )));
        }
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidParameter("times must be finite".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("times must be sorted".into()));
    }
    Ok(())
}

/// Analytic solution `x_k(t) = x_k(0) exp(beta_k t)`.
pub fn solve_exponential(
    params: impl Into<RawExpParams>,
    times: &[f64],
) -> Result<StateTrajectory> {
    let p: RawExpParams = params.into();
    p.validate()?;
    check_times(times)?;
    Ok(StateTrajectory {
        times: times.to_vec(),
        x1: times.iter().map(|t| p.x1_0 * (p.beta1 * t).exp()).collect(),
        x2: times.iter().map(|t| p.x2_0 * (p.beta2 * t).exp()).collect(),
    })
}

/// Numerical solution of the logistic two-population model with relative
/// tolerance `rtol` (the absolute tolerance on `x` is `rtol * K`).
pub fn solve_logistic(
    params: &LogisticParams,
    times: &[f64],
    rtol: f64,
) -> Result<StateTrajectory> {
    LogisticParams::new(
        params.lambda1,
        params.lambda2,
        params.capacity,
        params.x1_0,
        params.x2_0,
        params.sigma,
    )?;
    check_times(times)?;
    let k = params.capacity;
    let (lam1, lam2) = (params.lambda1, params.lambda2);
    let v0 = [(params.x1_0 / k).ln(), (params.x2_0 / k).ln()];
    let (sol, _) = ode::integrate(
        |_, v, dv| {
            let g = 1.0 - v[0].exp() - v[1].exp();
            dv[0] = lam1 * g;
            dv[1] = lam2 * g;
        },
        0.0,
        &v0,
        times,
        Tolerance::new(rtol, rtol),
    )?;
    Ok(StateTrajectory {
        times: times.to_vec(),
        x1: sol.iter().map(|v| k * v[0].exp()).collect(),
        x2: sol.iter().map(|v| k * v[1].exp()).collect(),
    })
}

/// Concentration of Population 1, `x1 / (x1 + x2)`, kept inside the open
/// unit interval.
pub fn observable(traj: &StateTrajectory) -> Result<Vec<f64>> {
    traj.x1
        .iter()
        .zip(&traj.x2)
        .map(|(&a, &b)| {
            if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
                return Err(Error::Evaluation(format!(
                    "trajectory must be positive and finite, got ({a}, {b})"
                )));
            }
            Ok(clamp_open(1.0 / (1.0 + b / a)))
        })
        .collect()
}

fn clamp_open(eta: f64) -> f64 {
    eta.clamp(f64::MIN_POSITIVE, 1.0 - OBSERVABLE_GUARD)
}

/// Closed-form exponential observable `1 / (1 + theta2 exp(theta1 t))`.
pub fn observable_exponential_closed_form(theta1: f64, theta2: f64, t: f64) -> f64 {
    clamp_open(logistic_fn(-(theta2.ln() + theta1 * t)))
}

/// `ln eta(t)` of the exponential model as a function of
/// `z = ln theta2 + theta1 t`.
#[inline]
pub(crate) fn exp_log_eta(z: f64) -> f64 {
    -softplus(z)
}

/// Log-observable of the logistic model and, optionally, its derivatives with
/// respect to `(lambda1, lambda2, ln K, ln x1_0, ln x2_0)`.
#[derive(Debug, Clone)]
pub(crate) struct LogisticLogEta {
    pub log_eta: Vec<f64>,
    pub sens: Option<Vec<[f64; 5]>>,
}

pub(crate) fn logistic_log_eta(
    params: &LogisticParams,
    times: &[f64],
    rtol: f64,
    with_sens: bool,
) -> Result<LogisticLogEta> {
    let k = params.capacity;
    let (lam1, lam2) = (params.lambda1, params.lambda2);
    let v1 = (params.x1_0 / k).ln();
    let v2 = (params.x2_0 / k).ln();
    if !with_sens {
        let (sol, _) = ode::integrate(
            |_, v, dv| {
                let g = 1.0 - v[0].exp() - v[1].exp();
                dv[0] = lam1 * g;
                dv[1] = lam2 * g;
            },
            0.0,
            &[v1, v2],
            times,
            Tolerance::new(rtol, rtol),
        )?;
        return Ok(LogisticLogEta {
            log_eta: sol.iter().map(|v| -softplus(v[1] - v[0])).collect(),
            sens: None,
        });
    }

    // State: v1, v2, then (dv1, dv2) with respect to lambda1, lambda2,
    // ln x1_0, ln x2_0. The ln K sensitivity is minus the sum of the last two.
    let y0 = [v1, v2, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0];
    let (sol, _) = ode::integrate(
        |_, y, dy| {
            let e1 = y[0].exp();
            let e2 = y[1].exp();
            let g = 1.0 - e1 - e2;
            dy[0] = lam1 * g;
            dy[1] = lam2 * g;
            for p in 0..4 {
                let s1 = y[2 + 2 * p];
                let s2 = y[3 + 2 * p];
                let dg = -(e1 * s1 + e2 * s2);
                dy[2 + 2 * p] = lam1 * dg + if p == 0 { g } else { 0.0 };
                dy[3 + 2 * p] = lam2 * dg + if p == 1 { g } else { 0.0 };
            }
        },
        0.0,
        &y0,
        times,
        Tolerance::new(rtol, rtol),
    )?;
    let mut log_eta = Vec::with_capacity(times.len());
    let mut sens = Vec::with_capacity(times.len());
    for y in &sol {
        let z = y[1] - y[0];
        log_eta.push(-softplus(z));
        // d ln eta = (1 - eta) (dv1 - dv2)
        let w = logistic_fn(z);
        let d = |p: usize| w * (y[2 + 2 * p] - y[3 + 2 * p]);
        let (dl1, dl2, dx1, dx2) = (d(0), d(1), d(2), d(3));
        sens.push([dl1, dl2, -(dx1 + dx2), dx1, dx2]);
    }
    Ok(LogisticLogEta {
        log_eta,
        sens: Some(sens),
    })
}
