//! Design-preserving bootstrap intervals for the logistic growth difference
//! and parametric likelihood-ratio calibration (pp-plots).

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::{Dataset, Record};
use crate::error::{Error, Result};
use crate::inference::{
    fit_from_starts, local_minimize, start_points, FitConfig, FitResult, ModelKind, Objective,
};
use crate::profiles::{ConfidenceRegion, Interval, Threshold};
use crate::rng;
use crate::simulation::noise_factor;
use crate::stats::quantile_sorted;

pub const MIN_RESAMPLES: usize = 199;
/// Smallest dataset the bootstrap accepts.
pub const MIN_RECORDS: usize = 8;
/// Largest tolerated share of failed refits.
pub const MAX_FAILURE_RATE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapPlan {
    pub n_resamples: usize,
    pub seed: u64,
    /// Multi-start settings for the fit to the original data.
    pub fit: FitConfig,
    /// Starts per refit: the original estimate plus a Latin hypercube.
    pub refit_starts: usize,
}

impl Default for BootstrapPlan {
    fn default() -> Self {
        Self {
            n_resamples: 999,
            seed: 0,
            fit: FitConfig::default(),
            refit_starts: 3,
        }
    }
}

impl BootstrapPlan {
    pub fn validate(&self) -> Result<()> {
        if self.n_resamples < MIN_RESAMPLES {
            return Err(Error::Config(format!(
                "bootstrap needs at least {MIN_RESAMPLES} resamples, got {}",
                self.n_resamples
            )));
        }
        if self.refit_starts == 0 {
            return Err(Error::Config("refit_starts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Resample each measurement day with replacement, keeping its count.
pub fn stratified_indices(data: &Dataset, rng: &mut impl Rng) -> Vec<usize> {
    let mut out = Vec::with_capacity(data.len());
    for (_, idx) in data.strata() {
        for _ in 0..idx.len() {
            out.push(idx[rng.random_range(0..idx.len())]);
        }
    }
    out
}

fn check_design(data: &Dataset) -> Result<()> {
    if data.len() < MIN_RECORDS {
        return Err(Error::DesignViolation(format!(
            "bootstrap needs at least {MIN_RECORDS} records, got {}",
            data.len()
        )));
    }
    for (day, idx) in data.strata() {
        if idx.len() < 2 {
            return Err(Error::DesignViolation(format!(
                "day {day} has {} record(s); resampling needs at least 2",
                idx.len()
            )));
        }
    }
    Ok(())
}

fn check_failures(failed: usize, total: usize) -> Result<()> {
    if failed as f64 > MAX_FAILURE_RATE * total as f64 {
        Err(Error::Reliability { failed, total })
    } else {
        Ok(())
    }
}

/// Refit `objective` on `data`, starting from `fit.estimate` and a small
/// hypercube around it.
fn refit(
    objective: &Objective,
    data: Dataset,
    fit: &FitResult,
    plan: &BootstrapPlan,
    seed: u64,
) -> Result<FitResult> {
    let obj = objective.with_data(Arc::new(data))?;
    let cfg = FitConfig {
        n_starts: plan.refit_starts,
        ..plan.fit.clone()
    };
    let starts = start_points(&obj, &fit.estimate, &cfg, seed);
    fit_from_starts(&obj, &starts, &cfg)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapInterval {
    pub region: ConfidenceRegion,
    /// `lambda2 - lambda1` on the original data.
    pub estimate: f64,
    /// Sorted replicate differences of successful refits.
    pub replicates: Vec<f64>,
    pub failed: usize,
    pub n_resamples: usize,
}

impl BootstrapInterval {
    /// Percentile interval at another level from the same replicates.
    pub fn at_level(&self, level: f64) -> Interval {
        percentile_interval(&self.replicates, level)
    }

    /// Replicate distribution as CSV (`replicate,difference`).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["replicate", "difference"])?;
        for (i, d) in self.replicates.iter().enumerate() {
            wr.write_record([i.to_string(), d.to_string()])?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

pub fn percentile_interval(sorted: &[f64], level: f64) -> Interval {
    let a = 1.0 - level;
    Interval::new(
        quantile_sorted(sorted, a / 2.0),
        quantile_sorted(sorted, 1.0 - a / 2.0),
    )
}

/// Percentile interval of `lambda2 - lambda1` for a logistic objective (the
/// penalty, if any, stays active in every refit).
pub fn bootstrap_ci_difference(
    objective: &Objective,
    plan: &BootstrapPlan,
    level: f64,
) -> Result<BootstrapInterval> {
    plan.validate()?;
    if !matches!(objective.model(), ModelKind::Logistic { .. }) {
        return Err(Error::InvalidParameter(
            "the growth difference needs the logistic model".into(),
        ));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "level must lie in (0, 1), got {level}"
        )));
    }
    let data = objective.data().clone();
    check_design(&data)?;
    let fit = crate::inference::fit(objective, &plan.fit, plan.seed)?;
    let diff = |f: &FitResult| f.estimate.values[1] - f.estimate.values[0];
    let estimate = diff(&fit);

    let results: Vec<Option<f64>> = (0..plan.n_resamples)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(plan.seed, &[0xB007, b as u64]);
            let idx = stratified_indices(&data, &mut r);
            let resample = data.resampled(&idx).ok()?;
            let s = rng::derive_seed(plan.seed, &[0xB008, b as u64]);
            refit(objective, resample, &fit, plan, s)
                .ok()
                .map(|f| diff(&f))
        })
        .collect();
    let failed = results.iter().filter(|r| r.is_none()).count();
    check_failures(failed, plan.n_resamples)?;
    let mut replicates: Vec<f64> = results.into_iter().flatten().collect();
    replicates.sort_by(f64::total_cmp);
    let piece = percentile_interval(&replicates, level);
    let region = ConfidenceRegion::new(vec![piece], Threshold::Percentile, None, level, false)?;
    Ok(BootstrapInterval {
        region,
        estimate,
        replicates,
        failed,
        n_resamples: plan.n_resamples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PPClass {
    Perfect,
    Conservative,
    AntiConservative,
    Alternating,
}

impl fmt::Display for PPClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PPClass::Perfect => "perfect",
            PPClass::Conservative => "conservative",
            PPClass::AntiConservative => "anti-conservative",
            PPClass::Alternating => "alternating",
        })
    }
}

/// Half-width of the 95% consensus band for `n` replicates (the asymptotic
/// Kolmogorov critical value).
pub fn default_band(n: usize) -> f64 {
    1.358 / (n as f64).sqrt()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PPCurve {
    pub parameter: String,
    /// Sorted likelihood-ratio statistics.
    pub empirical_ratios: Vec<f64>,
    pub failed: usize,
    pub band: f64,
    pub classification: PPClass,
}

impl PPCurve {
    pub fn from_ratios(
        parameter: &str,
        mut ratios: Vec<f64>,
        failed: usize,
        band: f64,
    ) -> Result<Self> {
        if ratios.is_empty() {
            return Err(Error::EmptyInput("no likelihood-ratio statistics".into()));
        }
        ratios.sort_by(f64::total_cmp);
        let classification = classify_pp_points(&pp_points(&ratios), band);
        Ok(Self {
            parameter: parameter.to_string(),
            empirical_ratios: ratios,
            failed,
            band,
            classification,
        })
    }

    /// Empirical CDF of the statistics at `x`.
    pub fn ecdf(&self, x: f64) -> f64 {
        let n = self.empirical_ratios.partition_point(|&v| v <= x);
        n as f64 / self.empirical_ratios.len() as f64
    }

    /// `(chi2_1 CDF, ECDF)` pairs at the sorted statistics.
    pub fn points(&self) -> Vec<PPPoint> {
        pp_points(&self.empirical_ratios)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["parameter", "ratio", "chi2_cdf", "ecdf_below", "ecdf"])?;
        for (p, r) in self.points().iter().zip(&self.empirical_ratios) {
            wr.write_record([
                self.parameter.clone(),
                r.to_string(),
                p.theoretical.to_string(),
                p.empirical_below.to_string(),
                p.empirical.to_string(),
            ])?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// ECDF against theoretical CDF at one statistic; `empirical_below` is the
/// left limit of the ECDF there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PPPoint {
    pub theoretical: f64,
    pub empirical_below: f64,
    pub empirical: f64,
}

fn pp_points(sorted: &[f64]) -> Vec<PPPoint> {
    let chi = ChiSquared::new(1.0).expect("valid dof");
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &s)| PPPoint {
            theoretical: if s <= 0.0 { 0.0 } else { chi.cdf(s) },
            empirical_below: i as f64 / n,
            empirical: (i + 1) as f64 / n,
        })
        .collect()
}

/// ECDF above the band somewhere is conservative (ratios smaller than
/// chi-square); below is anti-conservative; both is alternating.
pub fn classify_pp_points(points: &[PPPoint], band: f64) -> PPClass {
    let above = points
        .iter()
        .any(|p| p.empirical_below - p.theoretical > band);
    let below = points.iter().any(|p| p.theoretical - p.empirical > band);
    match (above, below) {
        (false, false) => PPClass::Perfect,
        (true, false) => PPClass::Conservative,
        (false, true) => PPClass::AntiConservative,
        (true, true) => PPClass::Alternating,
    }
}

pub fn classify_pp(curve: &PPCurve, band: f64) -> PPClass {
    classify_pp_points(&curve.points(), band)
}

/// Parametric bootstrap of the likelihood-ratio statistic for `parameter`:
/// replicates are drawn from the fitted model and error model at the
/// original design, refitted without penalty, and the statistic
/// `2 (l(theta*) - PL(theta_hat_j))` is compared with chi-square(1).
pub fn pp_calibration(
    fit: &FitResult,
    objective: &Objective,
    parameter: &str,
    n_boot: usize,
    seed: u64,
    band: Option<f64>,
) -> Result<PPCurve> {
    if n_boot == 0 {
        return Err(Error::Config(
            "pp calibration needs at least one replicate".into(),
        ));
    }
    let model = objective.model();
    let j = model.index_of(parameter)?;
    if !objective.free_indices().contains(&j) {
        return Err(Error::InvalidParameter(format!("{parameter} is fixed")));
    }
    let base = objective.with_l2_weight(0.0);
    let truth = fit.estimate.clone();
    let data = objective.data().clone();
    let times = data.distinct_times().to_vec();
    let z = truth.to_internal();
    let (log_eta, _) = crate::inference::model_log_eta(model, &z, &times, false)?;
    let sigma = truth.sigma();
    let plan = BootstrapPlan {
        n_resamples: MIN_RESAMPLES,
        seed,
        fit: FitConfig {
            l2_weight: 0.0,
            ..FitConfig::default()
        },
        refit_starts: 3,
    };

    let results: Vec<Option<f64>> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(seed, &[0x99C1, b as u64]);
            let records: Vec<Record> = data
                .records()
                .iter()
                .zip(data.time_index())
                .map(|(rec, &ti)| Record {
                    value: log_eta[ti].exp() * noise_factor(sigma, &mut r),
                    ..rec.clone()
                })
                .collect();
            let replicate = Dataset::new(records).ok()?;
            let s = rng::derive_seed(seed, &[0x99C2, b as u64]);
            let full = refit(&base, replicate.clone(), fit, &plan, s).ok()?;
            let pinned = base
                .with_data(Arc::new(replicate))
                .ok()?
                .with_fixed(j, truth.values[j])
                .ok()?;
            let mut best = f64::INFINITY;
            for start in [&truth, &full.estimate] {
                let mut p = start.clone();
                p.values[j] = truth.values[j];
                let x0 = pinned.free_internal(&p);
                let v = if x0.is_empty() {
                    pinned.nll(&x0).ok()
                } else {
                    local_minimize(&pinned, &x0, &plan.fit.optimizer)
                        .ok()
                        .map(|m| m.value)
                };
                if let Some(v) = v {
                    best = best.min(v);
                }
            }
            best.is_finite()
                .then(|| (2.0 * (best + full.loglik)).max(0.0))
        })
        .collect();
    let failed = results.iter().filter(|r| r.is_none()).count();
    check_failures(failed, n_boot)?;
    let ratios: Vec<f64> = results.into_iter().flatten().collect();
    let band = band.unwrap_or_else(|| default_band(ratios.len()));
    PPCurve::from_ratios(parameter, ratios, failed, band)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::ChiSquared;

    fn chi_points(shift: f64) -> Vec<PPPoint> {
        let chi = ChiSquared::new(1.0).unwrap();
        (1..200)
            .map(|i| {
                let x = i as f64 * 0.05;
                let f = chi.cdf(x);
                PPPoint {
                    theoretical: f,
                    empirical_below: (f + shift).clamp(0.0, 1.0),
                    empirical: (f + shift).clamp(0.0, 1.0),
                }
            })
            .collect()
    }

    #[test]
    fn pp_classes() {
        let band = 0.05;
        assert_eq!(classify_pp_points(&chi_points(0.0), band), PPClass::Perfect);
        assert_eq!(
            classify_pp_points(&chi_points(1.5 * band), band),
            PPClass::Conservative
        );
        assert_eq!(
            classify_pp_points(&chi_points(-1.5 * band), band),
            PPClass::AntiConservative
        );
        let mut mixed = chi_points(1.5 * band);
        mixed.truncate(40);
        mixed.extend(chi_points(-1.5 * band).into_iter().skip(100));
        assert_eq!(classify_pp_points(&mixed, band), PPClass::Alternating);
    }

    #[test]
    fn ecdf_limits() {
        let c = PPCurve::from_ratios("theta1", vec![0.5, 0.1, 2.0], 0, 0.1).unwrap();
        assert_eq!(c.ecdf(0.0), 0.0);
        assert_eq!(c.ecdf(f64::INFINITY), 1.0);
        assert_eq!(c.empirical_ratios, vec![0.1, 0.5, 2.0]);
    }

    #[test]
    fn resampling_keeps_day_counts() {
        let mut recs = Vec::new();
        for (day, n) in [(0.0, 8), (14.0, 4), (40.0, 4)] {
            for k in 0..n {
                recs.push(Record::new(
                    day,
                    0.1 + 0.01 * k as f64,
                    format!("m{day}-{k}"),
                ));
            }
        }
        let ds = Dataset::new(recs).unwrap();
        let mut r = rng::stream(1, &[]);
        for _ in 0..50 {
            let idx = stratified_indices(&ds, &mut r);
            let re = ds.resampled(&idx).unwrap();
            for day in [0.0, 14.0, 40.0] {
                assert_eq!(re.count_at(day), ds.count_at(day));
            }
        }
    }

    #[test]
    fn plan_and_design_checks() {
        assert!(BootstrapPlan {
            n_resamples: 100,
            ..Default::default()
        }
        .validate()
        .is_err());
        let ds = Dataset::new(vec![
            Record::new(0.0, 0.5, "a"),
            Record::new(0.0, 0.5, "b"),
            Record::new(14.0, 0.4, "a"),
        ])
        .unwrap();
        assert_eq!(
            check_design(&ds).unwrap_err().category(),
            "design-violation"
        );
        assert!(check_failures(2, 10).is_ok());
        assert_eq!(check_failures(3, 10).unwrap_err().category(), "reliability");
    }

    #[test]
    fn percentile_levels_nest() {
        let xs: Vec<f64> = (0..999).map(|i| ((i * 37) % 999) as f64 / 10.0).collect();
        let mut s = xs.clone();
        s.sort_by(f64::total_cmp);
        let a = percentile_interval(&s, 0.9);
        let b = percentile_interval(&s, 0.95);
        assert!(b.lo <= a.lo && a.hi <= b.hi);
    }
}
