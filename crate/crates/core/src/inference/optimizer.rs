//! Trust-region Newton minimiser for small, smooth problems.
//!
//! The Hessian is built from forward differences of the analytic gradient
//! and the subproblem is solved exactly through an eigendecomposition, which
//! copes with the singular and indefinite Hessians of non-identifiable models.
//! Simple lower bounds are handled with an active set.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrustRegionOptions {
    pub max_iter: usize,
    /// Converged when the projected gradient max-norm drops below this.
    pub gtol: f64,
    /// Converged when an accepted step (max-norm) is shorter than this.
    pub xtol: f64,
    pub initial_radius: f64,
    pub max_radius: f64,
}

impl Default for TrustRegionOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            gtol: 1e-8,
            xtol: 1e-8,
            initial_radius: 1.0,
            max_radius: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Gradient,
    Step,
    MaxIterations,
    Failed,
}

impl Termination {
    pub fn converged(self) -> bool {
        matches!(self, Termination::Gradient | Termination::Step)
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    /// Coordinates resting on their lower bound at termination.
    pub at_bound: Vec<bool>,
}

/// A smooth objective with gradient and Hessian.
pub trait Problem {
    fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// Hessian at `x`, where `g` is the gradient there. The default takes
    /// forward differences of the gradient.
    fn hessian(&self, x: &[f64], g: &[f64]) -> Result<DMatrix<f64>> {
        Ok(fd_hessian(|y| self.value_grad(y), x, g))
    }
}

/// Wraps a value-and-gradient closure; the Hessian is finite-differenced.
pub struct FnProblem<F>(pub F);

impl<F> Problem for FnProblem<F>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        (self.0)(x)
    }
}

/// Minimise `problem` from `x0`; `lower` holds per-coordinate lower bounds
/// (`-inf` for none).
pub fn minimize<P: Problem + ?Sized>(
    problem: &P,
    x0: &[f64],
    lower: &[f64],
    opts: &TrustRegionOptions,
) -> Result<Minimum> {
    let f = |x: &[f64]| problem.value_grad(x);
    let n = x0.len();
    let mut x: Vec<f64> = x0.iter().zip(lower).map(|(&v, &l)| v.max(l)).collect();
    let (mut fx, mut g) = f(&x)?;
    let mut evals = 1usize;
    let mut radius = opts.initial_radius;
    let mut iter = 0usize;
    let mut termination = Termination::MaxIterations;
    let mut active = vec![false; n];
    let mut last_model: Option<(DMatrix<f64>, DVector<f64>)> = None;

    while iter < opts.max_iter {
        for i in 0..n {
            active[i] = x[i] <= lower[i] && g[i] > 0.0;
        }
        let gnorm = proj_norm(&g, &active);
        if gnorm <= opts.gtol {
            termination = Termination::Gradient;
            break;
        }
        iter += 1;

        let free: Vec<usize> = (0..n).filter(|&i| !active[i]).collect();
        evals += 1;
        let full = match problem.hessian(&x, &g) {
            Ok(h) if h.iter().all(|v| v.is_finite()) => h,
            _ => {
                termination = Termination::Failed;
                break;
            }
        };
        let hess = DMatrix::from_fn(free.len(), free.len(), |r, c| full[(free[r], free[c])]);
        let gf = DVector::from_iterator(free.len(), free.iter().map(|&i| g[i]));
        last_model = Some((hess.clone(), gf.clone()));

        // Inner loop: shrink the radius until a step is accepted.
        let mut accepted = false;
        loop {
            let s = solve_subproblem(&hess, &gf, radius);
            let mut xn = x.clone();
            for (k, &i) in free.iter().enumerate() {
                xn[i] = (x[i] + s[k]).max(lower[i]);
            }
            let step: Vec<f64> = free.iter().map(|&i| xn[i] - x[i]).collect();
            let step_norm = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let sv = DVector::from_vec(step.clone());
            let predicted = -(gf.dot(&sv) + 0.5 * sv.dot(&(&hess * &sv)));

            let trial = f(&xn);
            evals += 1;
            let (fn_, gn) = match trial {
                Ok((v, gg)) if v.is_finite() => (v, gg),
                _ => {
                    radius = 0.25 * radius.min(norm2(&step));
                    if radius < 1e-14 {
                        break;
                    }
                    continue;
                }
            };
            let actual = fx - fn_;
            let rho = if predicted > 0.0 {
                actual / predicted
            } else if actual >= 0.0 {
                1.0
            } else {
                -1.0
            };
            // Below the rounding level of f the ratio is noise; fall back to
            // requiring a smaller gradient.
            let tiny = predicted.abs() <= 1e-13 * fx.abs().max(1.0);
            let gain = if tiny {
                proj_norm(&gn, &active) < proj_norm(&g, &active)
            } else {
                rho > 1e-4 && actual >= 0.0
            };
            if !gain || rho < 0.25 {
                radius = 0.25 * norm2(&step).max(radius * 1e-3).min(radius);
            } else if rho > 0.75 && norm2(&step) >= 0.99 * radius {
                radius = (2.0 * radius).min(opts.max_radius);
            }
            if gain {
                x = xn;
                fx = fn_;
                g = gn;
                accepted = true;
                if step_norm <= opts.xtol {
                    termination = Termination::Step;
                }
                break;
            }
            if radius < 1e-14 || step_norm <= 1e-15 {
                break;
            }
        }
        if termination == Termination::Step {
            break;
        }
        if !accepted {
            // No decrease achievable at working precision: a stationary point
            // up to rounding.
            termination = Termination::Step;
            break;
        }
    }

    for i in 0..n {
        active[i] = x[i] <= lower[i] && g[i] > 0.0;
    }
    let grad_norm = proj_norm(&g, &active);
    if termination == Termination::Step && grad_norm > opts.gtol {
        // Stalled before the gradient test: accept only if the Newton model
        // promises no meaningful further decrease.
        let ok = last_model
            .is_some_and(|(h, gf)| newton_decrement(&h, &gf) <= 1e-10 * fx.abs().max(1.0));
        if !ok {
            termination = Termination::Failed;
        }
    }
    Ok(Minimum {
        at_bound: x.iter().zip(lower).map(|(v, l)| v <= l).collect(),
        x,
        value: fx,
        grad_norm,
        iterations: iter,
        evaluations: evals,
        termination,
    })
}

/// Decrease predicted by a full Newton step, `g' H^-1 g / 2`; infinite
/// when the gradient has weight along a non-positive curvature direction.
fn newton_decrement(h: &DMatrix<f64>, g: &DVector<f64>) -> f64 {
    if g.is_empty() {
        return 0.0;
    }
    let eig = SymmetricEigen::new(h.clone());
    let gt = eig.eigenvectors.transpose() * g;
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut dec = 0.0;
    for (l, c) in eig.eigenvalues.iter().zip(gt.iter()) {
        if *l > 1e-14 * scale {
            dec += c * c / l;
        } else if c.abs() > 1e-8 {
            return f64::INFINITY;
        }
    }
    0.5 * dec
}

fn proj_norm(g: &[f64], active: &[bool]) -> f64 {
    g.iter()
        .zip(active)
        .filter(|(_, &a)| !a)
        .fold(0.0f64, |m, (v, _)| m.max(v.abs()))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Symmetrised forward-difference Hessian of a gradient function.
pub fn fd_hessian<F>(grad: F, x: &[f64], g: &[f64]) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let base = 1e-6 * x[j].abs().max(1.0);
        for step in [base, -base] {
            xp[j] = x[j] + step;
            if let Ok((_, gp)) = grad(&xp) {
                if gp.iter().all(|v| v.is_finite()) {
                    for i in 0..n {
                        h[(i, j)] = (gp[i] - g[i]) / step;
                    }
                    break;
                }
            }
        }
        xp[j] = x[j];
    }
    let ht = h.transpose();
    (h + ht) * 0.5
}

/// Exact minimiser of `g.s + s.H.s/2` subject to `|s| <= radius`.
fn solve_subproblem(h: &DMatrix<f64>, g: &DVector<f64>, radius: f64) -> Vec<f64> {
    let n = g.len();
    if n == 0 {
        return Vec::new();
    }
    let eig = SymmetricEigen::new(h.clone());
    let q = &eig.eigenvectors;
    let lam = &eig.eigenvalues;
    let gt = q.transpose() * g;
    let lmin = lam.iter().cloned().fold(f64::INFINITY, f64::min);

    let step_for = |mu: f64| -> DVector<f64> {
        let coef = DVector::from_iterator(n, (0..n).map(|i| -gt[i] / (lam[i] + mu)));
        q * coef
    };
    let snorm = |mu: f64| -> f64 {
        (0..n)
            .map(|i| (gt[i] / (lam[i] + mu)).powi(2))
            .sum::<f64>()
            .sqrt()
    };

    if lmin > 0.0 {
        let s = step_for(0.0);
        if s.iter().all(|v| v.is_finite()) && s.norm() <= radius {
            return s.iter().copied().collect();
        }
    }

    let lo0 = (-lmin).max(0.0);
    let lo = lo0 + (1e-12 * lo0).max(1e-300);
    if snorm(lo) <= radius {
        // Hard case: move to the boundary along the lowest eigenvector.
        let s = step_for(lo);
        let imin = (0..n).min_by(|&a, &b| lam[a].total_cmp(&lam[b])).unwrap();
        let v = q.column(imin).into_owned();
        let sn = s.norm();
        let extra = (radius * radius - sn * sn).max(0.0).sqrt();
        let sign = if s.dot(&v) >= 0.0 { 1.0 } else { -1.0 };
        let out = s + v * (sign * extra);
        return out.iter().copied().collect();
    }
    let mut a = lo;
    let mut b = lo0 + g.norm() / radius + 1.0;
    while snorm(b) > radius {
        b *= 2.0;
    }
    for _ in 0..300 {
        // Bisect geometrically while the bracket spans orders of magnitude.
        let mid = if b > 4.0 * a {
            (a * b).sqrt().max(2.0 * a)
        } else {
            0.5 * (a + b)
        };
        if snorm(mid) > radius {
            a = mid;
        } else {
            b = mid;
        }
        if (b - a) <= 1e-13 * b {
            break;
        }
    }
    step_for(b).iter().copied().collect()
}
