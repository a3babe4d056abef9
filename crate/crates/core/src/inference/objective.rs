//! Log-normal observation likelihood and the penalised fitting objective.
//!
//! Measurements are modelled as `y = eta(t) * eps` with
//! `ln eps ~ N(-sigma^2/2, sigma^2)`, so `ln y` is normal with mean
//! `ln eta(t) - sigma^2/2` and standard deviation `sigma`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{exp_log_eta, logistic_fn, logistic_log_eta, LogisticParams};

use super::optimizer::Problem;
use super::params::{ModelKind, ParamVector};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Log-likelihood of `data` under `params` (penalty-free).
pub fn log_likelihood(params: &ParamVector, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyInput(
            "log-likelihood of an empty dataset".into(),
        ));
    }
    params.validate()?;
    let z = params.to_internal();
    let (log_eta, _) = model_log_eta(params.model, &z, data.distinct_times(), false)?;
    Ok(-nll_terms(
        &z,
        params.model.sigma_index(),
        data,
        &log_eta,
        None,
    ))
}

/// Log-observable at each distinct time, plus (optionally) its derivatives
/// with respect to the internal coordinates of the non-error parameters.
pub(crate) fn model_log_eta(
    model: ModelKind,
    z: &[f64],
    times: &[f64],
    want_grad: bool,
) -> Result<(Vec<f64>, Option<Vec<Vec<f64>>>)> {
    match model {
        ModelKind::Exponential | ModelKind::ExponentialRaw => {
            // z_i = ln(x2/x1) + (beta2 - beta1) t
            let (rate, log_ratio) = match model {
                ModelKind::Exponential => (z[0], z[1]),
                _ => (z[1] - z[0], z[3] - z[2]),
            };
            let mut log_eta = Vec::with_capacity(times.len());
            let mut grads = want_grad.then(|| Vec::with_capacity(times.len()));
            for &t in times {
                let arg = log_ratio + rate * t;
                let le = exp_log_eta(arg);
                if !le.is_finite() {
                    return Err(Error::Evaluation(format!("non-finite observable at t={t}")));
                }
                log_eta.push(le);
                if let Some(g) = grads.as_mut() {
                    // d ln eta / d arg = -(1 - eta)
                    let w = -logistic_fn(arg);
                    g.push(match model {
                        ModelKind::Exponential => vec![w * t, w],
                        _ => vec![-w * t, w * t, -w, w],
                    });
                }
            }
            Ok((log_eta, grads))
        }
        ModelKind::Logistic { rtol } => {
            let p = LogisticParams {
                lambda1: z[0],
                lambda2: z[1],
                capacity: z[2].exp(),
                x1_0: z[3].exp(),
                x2_0: z[4].exp(),
                sigma: z[5].exp(),
            };
            let r = logistic_log_eta(&p, times, rtol, want_grad)?;
            if r.log_eta.iter().any(|v| !v.is_finite()) {
                return Err(Error::Evaluation("non-finite logistic observable".into()));
            }
            let grads = r
                .sens
                .map(|s| s.into_iter().map(|row| row.to_vec()).collect());
            Ok((r.log_eta, grads))
        }
    }
}

/// Second derivatives of the log-observable with respect to the internal
/// model coordinates (all but the error scale), one matrix per time.
fn model_log_eta_hessian(model: ModelKind, z: &[f64], times: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    let m = model.dim() - 1;
    match model {
        ModelKind::Exponential | ModelKind::ExponentialRaw => {
            let (rate, log_ratio) = match model {
                ModelKind::Exponential => (z[0], z[1]),
                _ => (z[1] - z[0], z[3] - z[2]),
            };
            Ok(times
                .iter()
                .map(|&t| {
                    let p = logistic_fn(log_ratio + rate * t);
                    let maa = -p * (1.0 - p);
                    let c: Vec<f64> = match model {
                        ModelKind::Exponential => vec![t, 1.0],
                        _ => vec![-t, t, -1.0, 1.0],
                    };
                    DMatrix::from_fn(m, m, |i, j| maa * c[i] * c[j])
                })
                .collect())
        }
        ModelKind::Logistic { .. } => {
            // Forward differences of the sensitivities; the step is large
            // enough to sit above the integrator's tolerance noise.
            let (_, base) = model_log_eta(model, z, times, true)?;
            let base = base.expect("sensitivities");
            let mut out = vec![DMatrix::zeros(m, m); times.len()];
            let mut zp = z.to_vec();
            for j in 0..m {
                let h = 1e-4 * z[j].abs().max(1.0);
                zp[j] = z[j] + h;
                let (_, pert) = model_log_eta(model, &zp, times, true)?;
                let pert = pert.expect("sensitivities");
                zp[j] = z[j];
                for (k, hk) in out.iter_mut().enumerate() {
                    for i in 0..m {
                        hk[(i, j)] = (pert[k][i] - base[k][i]) / h;
                    }
                }
            }
            for hk in out.iter_mut() {
                let t = hk.transpose();
                *hk = (&*hk + t) * 0.5;
            }
            Ok(out)
        }
    }
}

/// Negative log-likelihood; fills `grad` (full internal dimension) when given.
fn nll_terms(
    z: &[f64],
    sigma_idx: usize,
    data: &Dataset,
    log_eta: &[f64],
    grad_parts: Option<(&[Vec<f64>], &mut [f64])>,
) -> f64 {
    let s = z[sigma_idx];
    let var = (2.0 * s).exp();
    let half_var = 0.5 * var;
    let n = data.len() as f64;
    let mut ss = 0.0;
    let mut sum_r = 0.0;
    // Residual sums per distinct time, for the chain rule.
    let mut per_time = vec![0.0; log_eta.len()];
    for (&ly, &ti) in data.log_values().iter().zip(data.time_index()) {
        let r = ly - log_eta[ti] + half_var;
        ss += r * r;
        sum_r += r;
        per_time[ti] += r;
    }
    let nll = n * (HALF_LN_2PI + s) + ss / (2.0 * var);
    if let Some((dle, grad)) = grad_parts {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (ti, rsum) in per_time.iter().enumerate() {
            for (j, d) in dle[ti].iter().enumerate() {
                grad[j] -= rsum / var * d;
            }
        }
        grad[sigma_idx] = n + sum_r - ss / var;
    }
    nll
}

/// Penalised negative log-likelihood over the free components of a model,
/// in optimiser coordinates.
#[derive(Debug, Clone)]
pub struct Objective {
    model: ModelKind,
    data: Arc<Dataset>,
    template: ParamVector,
    free: Vec<usize>,
    l2_weight: f64,
}

impl Objective {
    /// `template` supplies the values of fixed components and the fixed mask.
    pub fn new(data: Arc<Dataset>, template: ParamVector, l2_weight: f64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyInput("objective over an empty dataset".into()));
        }
        if !(l2_weight >= 0.0 && l2_weight.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "l2 weight must be >= 0, got {l2_weight}"
            )));
        }
        template.validate()?;
        let free = template.free_indices();
        Ok(Self {
            model: template.model,
            data,
            template,
            free,
            l2_weight,
        })
    }

    pub fn model(&self) -> ModelKind {
        self.model
    }

    pub fn data(&self) -> &Arc<Dataset> {
        &self.data
    }

    pub fn template(&self) -> &ParamVector {
        &self.template
    }

    pub fn free_indices(&self) -> &[usize] {
        &self.free
    }

    pub fn l2_weight(&self) -> f64 {
        self.l2_weight
    }

    pub fn with_l2_weight(&self, l2_weight: f64) -> Self {
        Self {
            l2_weight,
            ..self.clone()
        }
    }

    /// Same objective with the component `index` fixed at a natural-scale
    /// `value`; other components keep the template values.
    pub fn with_fixed(&self, index: usize, value: f64) -> Result<Self> {
        let mut t = self.template.clone();
        t.values[index] = value;
        t.fixed[index] = true;
        Self::new(self.data.clone(), t, self.l2_weight)
    }

    /// Replace the template values (fixed flags kept).
    pub fn with_template_values(&self, values: &[f64]) -> Result<Self> {
        let mut t = self.template.clone();
        t.values.copy_from_slice(values);
        Self::new(self.data.clone(), t, self.l2_weight)
    }

    pub fn with_data(&self, data: Arc<Dataset>) -> Result<Self> {
        Self::new(data, self.template.clone(), self.l2_weight)
    }

    /// Free components of `params` in optimiser coordinates.
    pub fn free_internal(&self, params: &ParamVector) -> Vec<f64> {
        let z = params.to_internal();
        self.free.iter().map(|&i| z[i]).collect()
    }

    fn full_internal(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.template.to_internal();
        for (k, &i) in self.free.iter().enumerate() {
            z[i] = x[k];
        }
        z
    }

    /// Parameter vector for free coordinates `x`.
    pub fn params_at(&self, x: &[f64]) -> ParamVector {
        ParamVector::from_internal(
            self.model,
            &self.full_internal(x),
            self.template.fixed.clone(),
        )
    }

    fn penalty(&self, x: &[f64]) -> f64 {
        self.l2_weight * x.iter().map(|v| v * v).sum::<f64>()
    }

    fn check_point(x: &[f64]) -> Result<()> {
        if x.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Evaluation("non-finite parameter".into()))
        }
    }

    /// Penalised negative log-likelihood.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        Self::check_point(x)?;
        let z = self.full_internal(x);
        let (log_eta, _) = model_log_eta(self.model, &z, self.data.distinct_times(), false)?;
        let v =
            nll_terms(&z, self.model.sigma_index(), &self.data, &log_eta, None) + self.penalty(x);
        finite(v)
    }

    /// Negative log-likelihood without the penalty.
    pub fn nll(&self, x: &[f64]) -> Result<f64> {
        Self::check_point(x)?;
        let z = self.full_internal(x);
        let (log_eta, _) = model_log_eta(self.model, &z, self.data.distinct_times(), false)?;
        finite(nll_terms(
            &z,
            self.model.sigma_index(),
            &self.data,
            &log_eta,
            None,
        ))
    }

    /// Penalised objective and its gradient with respect to the free
    /// coordinates.
    pub fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        Self::check_point(x)?;
        let z = self.full_internal(x);
        let (log_eta, dle) = model_log_eta(self.model, &z, self.data.distinct_times(), true)?;
        let dle = dle.expect("gradient requested");
        let mut full = vec![0.0; z.len()];
        let v = nll_terms(
            &z,
            self.model.sigma_index(),
            &self.data,
            &log_eta,
            Some((&dle, &mut full)),
        ) + self.penalty(x);
        let g: Vec<f64> = self
            .free
            .iter()
            .zip(x)
            .map(|(&i, &xi)| full[i] + 2.0 * self.l2_weight * xi)
            .collect();
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation("non-finite gradient".into()));
        }
        Ok((finite(v)?, g))
    }
}

/// Gradient of the penalised objective at `params`, in the optimiser
/// coordinates of the objective's free components.
pub fn gradient(objective: &Objective, params: &ParamVector) -> Result<Vec<f64>> {
    objective
        .value_grad(&objective.free_internal(params))
        .map(|(_, g)| g)
}

impl Objective {
    /// Hessian of the penalised objective in the free coordinates.
    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Self::check_point(x)?;
        let z = self.full_internal(x);
        let times = self.data.distinct_times();
        let (log_eta, dle) = model_log_eta(self.model, &z, times, true)?;
        let dle = dle.expect("gradient requested");
        let d2 = model_log_eta_hessian(self.model, &z, times)?;
        let si = self.model.sigma_index();
        let var = (2.0 * z[si]).exp();
        let nt = times.len();
        let mut count = vec![0.0; nt];
        let mut rsum = vec![0.0; nt];
        let mut ss = 0.0;
        for (&ly, &ti) in self.data.log_values().iter().zip(self.data.time_index()) {
            let r = ly - log_eta[ti] + 0.5 * var;
            count[ti] += 1.0;
            rsum[ti] += r;
            ss += r * r;
        }
        let dim = z.len();
        let mut h = DMatrix::zeros(dim, dim);
        for k in 0..nt {
            let mz = &dle[k];
            for i in 0..si {
                for j in 0..si {
                    h[(i, j)] += (count[k] * mz[i] * mz[j] - rsum[k] * d2[k][(i, j)]) / var;
                }
                h[(i, si)] += mz[i] * (2.0 * rsum[k] / var - count[k]);
            }
        }
        for i in 0..si {
            h[(si, i)] = h[(i, si)];
        }
        let n = self.data.len() as f64;
        let total_r: f64 = rsum.iter().sum();
        h[(si, si)] = n * var - 2.0 * total_r + 2.0 * ss / var;
        let f = &self.free;
        let out = DMatrix::from_fn(f.len(), f.len(), |r, c| {
            h[(f[r], f[c])] + if r == c { 2.0 * self.l2_weight } else { 0.0 }
        });
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation("non-finite Hessian".into()));
        }
        Ok(out)
    }
}

impl Problem for Objective {
    fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        Objective::value_grad(self, x)
    }

    fn hessian(&self, x: &[f64], _g: &[f64]) -> Result<DMatrix<f64>> {
        Objective::hessian(self, x)
    }
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Evaluation("non-finite objective".into()))
    }
}

/// Normal log-density, kept here for tests and diagnostics.
pub fn normal_log_density(x: f64, mean: f64, sd: f64) -> f64 {
    let r = (x - mean) / sd;
    -0.5 * (2.0 * PI).ln() - sd.ln() - 0.5 * r * r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Record;
    use crate::models::observable_exponential_closed_form;

    fn three_points() -> Dataset {
        Dataset::new(vec![
            Record::new(0.0, 0.48, "a"),
            Record::new(14.0, 0.31, "a"),
            Record::new(40.0, 0.09, "b"),
        ])
        .unwrap()
    }

    #[test]
    fn zero_residual_contribution() {
        let sigma: f64 = 0.3;
        let eta = observable_exponential_closed_form(0.05, 1.2, 10.0);
        let y = eta * (-sigma * sigma / 2.0).exp();
        let d = Dataset::new(vec![Record::new(10.0, y, "m")]).unwrap();
        let pv = ParamVector::new(ModelKind::Exponential, vec![0.05, 1.2, sigma]).unwrap();
        let ll = log_likelihood(&pv, &d).unwrap();
        let expect = -0.5 * (2.0 * PI * sigma * sigma).ln();
        assert!((ll - expect).abs() < 1e-12);
    }

    #[test]
    fn doubling_data_doubles_loglik() {
        let d = three_points();
        let mut recs = d.records().to_vec();
        recs.extend(d.records().iter().cloned());
        let dd = Dataset::new(recs).unwrap();
        let pv = ParamVector::new(ModelKind::Exponential, vec![0.04, 0.9, 0.25]).unwrap();
        let a = log_likelihood(&pv, &d).unwrap();
        let b = log_likelihood(&pv, &dd).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn raw_and_reparametrised_agree() {
        let d = three_points();
        let raw =
            ParamVector::new(ModelKind::ExponentialRaw, vec![0.3, 0.34, 7.0, 6.3, 0.25]).unwrap();
        let rep =
            ParamVector::new(ModelKind::Exponential, vec![0.34 - 0.3, 6.3 / 7.0, 0.25]).unwrap();
        let a = log_likelihood(&raw, &d).unwrap();
        let b = log_likelihood(&rep, &d).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn penalty_free_objective_is_negative_loglik() {
        let d = Arc::new(three_points());
        let pv = ParamVector::new(ModelKind::Exponential, vec![0.04, 0.9, 0.25]).unwrap();
        let obj = Objective::new(d.clone(), pv.clone(), 0.0).unwrap();
        let x = obj.free_internal(&pv);
        let v = obj.value(&x).unwrap();
        assert_eq!(v, -log_likelihood(&pv, &d).unwrap());
        assert_eq!(v.to_bits(), obj.value(&x).unwrap().to_bits());
        let pen = obj.with_l2_weight(1e-3).value(&x).unwrap();
        let expected_pen = 1e-3 * x.iter().map(|v| v * v).sum::<f64>();
        assert!((pen - v - expected_pen).abs() < 1e-12);
    }

    #[test]
    fn sigma_must_be_positive() {
        let d = three_points();
        let pv = ParamVector {
            model: ModelKind::Exponential,
            values: vec![0.1, 1.0, 0.0],
            fixed: vec![false; 3],
        };
        assert!(matches!(
            log_likelihood(&pv, &d),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn empty_data_rejected() {
        let d = Dataset::new(vec![]).unwrap();
        let pv = ParamVector::new(ModelKind::Exponential, vec![0.1, 1.0, 0.2]).unwrap();
        assert!(log_likelihood(&pv, &d).is_err());
    }
}
