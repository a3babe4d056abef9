//! Adaptive Dormand–Prince 5(4) integrator.
//!
//! Small, allocation-light explicit solver for the smooth non-stiff systems in
//! this crate. Output is produced exactly at the requested times by clamping
//! the step to land on them.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Tolerance {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SolveStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

const MAX_STEPS: usize = 1_000_000;

// Dormand–Prince coefficients.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrate `dy/dt = rhs(t, y)` from `t0` and report the state at each
/// entry of `out_times` (sorted, all `>= t0`).
///
/// `atol` applies uniformly to every component.
pub fn integrate<F>(
    mut rhs: F,
    t0: f64,
    y0: &[f64],
    out_times: &[f64],
    tol: Tolerance,
) -> Result<(Vec<Vec<f64>>, SolveStats)>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut stats = SolveStats::default();
    let mut out = Vec::with_capacity(out_times.len());
    let mut t = t0;
    let mut y = y0.to_vec();
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::IntegrationFailure {
            last_time: t0,
            reason: "non-finite initial state".into(),
        });
    }

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];

    rhs(t, &y, &mut k1);
    stats.rhs_evals += 1;

    let t_final = out_times.last().copied().unwrap_or(t0);
    let mut h = initial_step(&mut rhs, t, &y, &k1, tol, t_final - t0, &mut stats);
    let mut steps = 0usize;

    for &target in out_times {
        if target < t {
            return Err(Error::InvalidParameter(format!(
                "output time {target} precedes current time {t}"
            )));
        }
        while t < target {
            steps += 1;
            if steps > MAX_STEPS {
                return Err(Error::IntegrationFailure {
                    last_time: t,
                    reason: "step budget exhausted".into(),
                });
            }
            let remaining = target - t;
            let hit = h >= remaining;
            let step = if hit { remaining } else { h };
            if step <= 1e-13 * t.abs().max(1.0) {
                return Err(Error::IntegrationFailure {
                    last_time: t,
                    reason: "step size underflow".into(),
                });
            }

            for i in 0..n {
                ytmp[i] = y[i] + step * A21 * k1[i];
            }
            rhs(t + C2 * step, &ytmp, &mut k2);
            for i in 0..n {
                ytmp[i] = y[i] + step * (A31 * k1[i] + A32 * k2[i]);
            }
            rhs(t + C3 * step, &ytmp, &mut k3);
            for i in 0..n {
                ytmp[i] = y[i] + step * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            rhs(t + C4 * step, &ytmp, &mut k4);
            for i in 0..n {
                ytmp[i] = y[i] + step * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            rhs(t + C5 * step, &ytmp, &mut k5);
            for i in 0..n {
                ytmp[i] = y[i]
                    + step * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            rhs(t + step, &ytmp, &mut k6);
            for i in 0..n {
                ynew[i] =
                    y[i] + step * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
            }
            rhs(t + step, &ynew, &mut k7);
            stats.rhs_evals += 6;

            let mut err = 0.0;
            let mut finite = true;
            for i in 0..n {
                if !ynew[i].is_finite() {
                    finite = false;
                    break;
                }
                let e = step
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = tol.atol + tol.rtol * y[i].abs().max(ynew[i].abs());
                err += (e / sc) * (e / sc);
            }
            let err = if finite {
                (err / n as f64).sqrt()
            } else {
                f64::INFINITY
            };

            if err <= 1.0 {
                stats.accepted += 1;
                t = if hit { target } else { t + step };
                std::mem::swap(&mut y, &mut ynew);
                std::mem::swap(&mut k1, &mut k7);
                let fac = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                // A step shortened to hit an output time says nothing about the
                // sustainable step size, so only grow from the nominal `h`.
                h = if hit { h.max(step * fac) } else { step * fac };
            } else {
                stats.rejected += 1;
                if !err.is_finite() {
                    h = step * 0.2;
                } else {
                    h = step * (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                }
                if !finite && h <= 1e-13 * t.abs().max(1.0) {
                    return Err(Error::IntegrationFailure {
                        last_time: t,
                        reason: "non-finite state".into(),
                    });
                }
            }
        }
        out.push(y.clone());
    }
    Ok((out, stats))
}

fn initial_step<F>(
    rhs: &mut F,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    tol: Tolerance,
    span: f64,
    stats: &mut SolveStats,
) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if span <= 0.0 {
        return 1.0;
    }
    let n = y0.len();
    let sc: Vec<f64> = y0.iter().map(|v| tol.atol + tol.rtol * v.abs()).collect();
    let d0 = rms(y0.iter().zip(&sc).map(|(v, s)| v / s), n);
    let d1 = rms(f0.iter().zip(&sc).map(|(v, s)| v / s), n);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    }
    .min(span);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; n];
    rhs(t0 + h0, &y1, &mut f1);
    stats.rhs_evals += 1;
    let d2 = rms(f1.iter().zip(f0).zip(&sc).map(|((a, b), s)| (a - b) / s), n) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    let h = (100.0 * h0).min(h1).min(span);
    if h.is_finite() && h > 0.0 {
        h
    } else {
        span.min(1e-3)
    }
}

fn rms(it: impl Iterator<Item = f64>, n: usize) -> f64 {
    (it.map(|v| v * v).sum::<f64>() / n as f64).sqrt()
}
