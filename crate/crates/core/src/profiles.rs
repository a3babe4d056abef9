//! Profile likelihoods, likelihood-based confidence regions and
//! identifiability classification.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{
    local_minimize, FitResult, Objective, ParamVector, Termination, TrustRegionOptions,
};

/// 95% quantile of the chi-square distribution with one degree of freedom.
pub const CHI1SQ_95: f64 = 3.84;
/// Cantelli-based threshold at the 95% level.
pub const CANTELLI_95: f64 = 7.16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Threshold {
    Chi1Sq,
    Cantelli,
    Custom(f64),
    /// Not a likelihood threshold: a bootstrap percentile interval.
    Percentile,
}

impl Threshold {
    /// The drop in `-2 log L` defining the region at significance `alpha`.
    /// The 5% values are the rounded constants 3.84 and 7.16.
    pub fn delta(self, alpha: f64) -> f64 {
        match self {
            Threshold::Chi1Sq if alpha == 0.05 => CHI1SQ_95,
            Threshold::Cantelli if alpha == 0.05 => CANTELLI_95,
            Threshold::Chi1Sq => {
                use statrs::distribution::{ChiSquared, ContinuousCDF};
                ChiSquared::new(1.0)
                    .expect("valid dof")
                    .inverse_cdf(1.0 - alpha)
            }
            // One-sided Chebyshev bound for a variable with mean 1, variance 2.
            Threshold::Cantelli => 1.0 + (2.0 * (1.0 - alpha) / alpha).sqrt(),
            Threshold::Custom(d) => d,
            Threshold::Percentile => f64::NAN,
        }
    }

    pub fn name(self) -> String {
        match self {
            Threshold::Chi1Sq => "chi1sq".into(),
            Threshold::Cantelli => "cantelli".into(),
            Threshold::Custom(d) => format!("custom({d})"),
            Threshold::Percentile => "percentile".into(),
        }
    }
}

impl From<Threshold> for String {
    fn from(t: Threshold) -> String {
        t.name()
    }
}

impl TryFrom<String> for Threshold {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for Threshold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chi1sq" => Ok(Threshold::Chi1Sq),
            "cantelli" => Ok(Threshold::Cantelli),
            "percentile" => Ok(Threshold::Percentile),
            _ => s
                .strip_prefix("custom(")
                .and_then(|r| r.strip_suffix(')'))
                .and_then(|v| v.parse().ok())
                .map(Threshold::Custom)
                .ok_or_else(|| Error::Config(format!("unknown threshold {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanPolicy {
    /// Threshold used to size steps: each step aims at `step_fraction * delta`
    /// of additional drop in `-2 log PL`.
    pub delta: f64,
    pub step_fraction: f64,
    /// A direction stops once the drop exceeds this.
    pub reach: f64,
    /// Maximum distance from the estimate in optimiser coordinates; a scan
    /// reaching it without crossing `reach` has an open end.
    pub travel_cap: f64,
    pub max_points: usize,
    pub min_step: f64,
    pub flat_tolerance: f64,
    pub optimizer: TrustRegionOptions,
}

impl Default for ScanPolicy {
    fn default() -> Self {
        Self {
            delta: CHI1SQ_95,
            step_fraction: 0.2,
            reach: CANTELLI_95 + 1.0,
            travel_cap: 20.0,
            max_points: 200,
            min_step: 1e-7,
            flat_tolerance: 1e-3,
            optimizer: TrustRegionOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndStatus {
    /// The drop exceeded the scan reach.
    Crossed,
    /// The travel cap was reached first.
    Open,
    /// Refits failed before either; the curve is truncated here.
    Truncated,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileCurve {
    pub parameter: String,
    pub index: usize,
    /// Whether the scan coordinate is the log of the parameter.
    pub log_scale: bool,
    /// Scan coordinate (optimiser scale), increasing.
    pub grid: Vec<f64>,
    pub profile_loglik: Vec<f64>,
    /// Estimate in the scan coordinate.
    pub mle_value: f64,
    pub mle_loglik: f64,
    pub lower_end: EndStatus,
    pub upper_end: EndStatus,
    /// A profile point beat the starting optimum by more than 1e-6.
    pub improved_optimum: bool,
}

impl ProfileCurve {
    /// Grid in natural units.
    pub fn natural_grid(&self) -> Vec<f64> {
        self.grid
            .iter()
            .map(|&q| if self.log_scale { q.exp() } else { q })
            .collect()
    }

    /// `-2 (PL(q) - l(theta_hat))` per grid point.
    pub fn drop(&self) -> Vec<f64> {
        self.profile_loglik
            .iter()
            .map(|pl| 2.0 * (self.mle_loglik - pl))
            .collect()
    }

    /// Range of the profile over the scan.
    pub fn range(&self) -> f64 {
        let (lo, hi) = self
            .profile_loglik
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                (a.min(v), b.max(v))
            });
        hi - lo
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_curves_csv(std::slice::from_ref(self), w)
    }
}

/// Profile curves as CSV with columns `parameter,q,profile_loglik`
/// (`q` in natural units).
pub fn write_curves_csv<W: Write>(curves: &[ProfileCurve], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["parameter", "q", "profile_loglik"])?;
    for c in curves {
        for (q, pl) in c.natural_grid().iter().zip(&c.profile_loglik) {
            wr.write_record([c.parameter.clone(), format!("{q:e}"), format!("{pl:e}")])?;
        }
    }
    wr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Profile of a free parameter around a fit. The profile is computed
/// without the penalty; the estimate is first re-optimised accordingly.
pub fn profile(
    parameter: &str,
    fit: &FitResult,
    objective: &Objective,
    scan: &ScanPolicy,
) -> Result<ProfileCurve> {
    let model = objective.model();
    let index = model.index_of(parameter)?;
    if !objective.free_indices().contains(&index) {
        return Err(Error::InvalidParameter(format!(
            "{parameter} is fixed and cannot be profiled"
        )));
    }
    let base = objective.with_l2_weight(0.0);
    let (mle, mle_loglik) = unpenalised_optimum(&base, &fit.estimate, &scan.optimizer)?;
    let log_scale = model.log_scale()[index];
    let z_hat = mle.to_internal();
    let q_hat = z_hat[index];

    let mut points = vec![(q_hat, mle_loglik)];
    let mut ends = [EndStatus::Open; 2];
    let mut best = mle_loglik;
    for (slot, dir) in [(0usize, -1.0f64), (1, 1.0)] {
        let (pts, end) = scan_direction(&base, &mle, index, dir, mle_loglik, scan)?;
        ends[slot] = end;
        for &(_, pl) in &pts {
            best = best.max(pl);
        }
        points.extend(pts);
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(ProfileCurve {
        parameter: parameter.to_string(),
        index,
        log_scale,
        grid: points.iter().map(|p| p.0).collect(),
        profile_loglik: points.iter().map(|p| p.1).collect(),
        mle_value: q_hat,
        mle_loglik: best,
        lower_end: ends[0],
        upper_end: ends[1],
        improved_optimum: best > mle_loglik + 1e-6,
    })
}

/// Re-optimise without the penalty, starting at `start`.
fn unpenalised_optimum(
    obj: &Objective,
    start: &ParamVector,
    opts: &TrustRegionOptions,
) -> Result<(ParamVector, f64)> {
    let x0 = obj.free_internal(start);
    let m = local_minimize(obj, &x0, opts)?;
    if m.termination.converged() && m.value <= obj.value(&x0)? {
        Ok((obj.params_at(&m.x), -obj.nll(&m.x)?))
    } else {
        Ok((start.clone(), -obj.nll(&x0)?))
    }
}

/// Refit with component `index` pinned at internal value `q`, starting the
/// remaining free coordinates at `warm` (full internal vector).
fn refit_at(
    base: &Objective,
    index: usize,
    q: f64,
    warm: &[f64],
    opts: &TrustRegionOptions,
) -> Option<(f64, Vec<f64>)> {
    let model = base.model();
    let natural = if model.log_scale()[index] { q.exp() } else { q };
    let mut values = ParamVector::from_internal(model, warm, base.template().fixed.clone()).values;
    values[index] = natural;
    let fixed_obj = base
        .with_template_values(&values)
        .ok()?
        .with_fixed(index, natural)
        .ok()?;
    let x0 = fixed_obj.free_internal(&fixed_obj.template().clone());
    if x0.is_empty() {
        let v = fixed_obj.nll(&x0).ok()?;
        return Some((-v, fixed_obj.params_at(&x0).to_internal()));
    }
    let m = local_minimize(&fixed_obj, &x0, opts).ok()?;
    if !m.termination.converged() && m.termination != Termination::MaxIterations {
        return None;
    }
    let pl = -fixed_obj.nll(&m.x).ok()?;
    pl.is_finite()
        .then(|| (pl, fixed_obj.params_at(&m.x).to_internal()))
}

fn scan_direction(
    base: &Objective,
    mle: &ParamVector,
    index: usize,
    dir: f64,
    mle_loglik: f64,
    scan: &ScanPolicy,
) -> Result<(Vec<(f64, f64)>, EndStatus)> {
    let z_hat = mle.to_internal();
    let q_hat = z_hat[index];
    let target = scan.step_fraction * scan.delta;
    let mut h = initial_step(base, mle, index, target);
    let mut out = Vec::new();
    let mut q = q_hat;
    let mut drop = 0.0;
    let mut z_prev = z_hat.clone();
    let mut z_prev2: Option<(Vec<f64>, f64)> = None;

    loop {
        if out.len() >= scan.max_points {
            return Ok((out, EndStatus::Truncated));
        }
        if (q - q_hat).abs() >= scan.travel_cap {
            return Ok((out, EndStatus::Open));
        }
        let step = h
            .min(scan.travel_cap - (q - q_hat).abs())
            .max(scan.min_step);
        let q_new = q + dir * step;
        // Secant predictor from the last two accepted points.
        let predicted = z_prev2.as_ref().map(|(zp2, hp)| {
            z_prev
                .iter()
                .zip(zp2)
                .map(|(a, b)| a + (a - b) * step / hp)
                .collect::<Vec<f64>>()
        });
        let mut result = None;
        if let Some(zp) = &predicted {
            result = refit_at(base, index, q_new, zp, &scan.optimizer);
        }
        let plain = refit_at(base, index, q_new, &z_prev, &scan.optimizer);
        result = match (result, plain) {
            (Some(a), Some(b)) => Some(if b.0 > a.0 { b } else { a }),
            (a, b) => a.or(b),
        };
        let Some((pl, z_new)) = result else {
            if h <= scan.min_step {
                return Ok((out, EndStatus::Truncated));
            }
            h *= 0.5;
            continue;
        };
        let d_new = 2.0 * (mle_loglik - pl);
        let inc = d_new - drop;
        if inc > 2.0 * target && h > scan.min_step && drop < scan.reach {
            h = (h * 0.5).max(scan.min_step);
            continue;
        }
        out.push((q_new, pl));
        z_prev2 = Some((std::mem::replace(&mut z_prev, z_new), step));
        q = q_new;
        drop = drop.max(d_new);
        if d_new >= scan.reach {
            return Ok((out, EndStatus::Crossed));
        }
        let factor = if inc <= 1e-12 {
            2.0
        } else {
            (target / inc).sqrt().clamp(0.5, 2.0)
        };
        h = (step * factor).min(scan.travel_cap / 10.0);
    }
}

/// First step from the local curvature of the unpenalised objective.
fn initial_step(base: &Objective, mle: &ParamVector, index: usize, target: f64) -> f64 {
    let x = base.free_internal(mle);
    let k = base
        .free_indices()
        .iter()
        .position(|&i| i == index)
        .expect("free");
    let fallback = 0.1;
    let Ok(h) = base.hessian(&x) else {
        return fallback;
    };
    // Curvature of the profile: inverse of the (k,k) entry of the inverse.
    match h.clone().try_inverse() {
        Some(inv) if inv[(k, k)] > 0.0 && inv[(k, k)].is_finite() => {
            // Near the optimum the drop is (q - q_hat)^2 / var.
            (target * inv[(k, k)]).sqrt().clamp(1e-4, 2.0)
        }
        _ => fallback,
    }
}

/// A closed interval with possibly infinite endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// Union of disjoint intervals in the scan coordinate of a parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRegion {
    pub pieces: Vec<Interval>,
    pub threshold: Threshold,
    /// Likelihood-ratio cutoff; bootstrap percentile regions have none.
    pub delta: Option<f64>,
    pub level: f64,
    /// Pieces are stored on the log scale of the parameter.
    pub log_scale: bool,
}

impl ConfidenceRegion {
    pub fn new(
        pieces: Vec<Interval>,
        threshold: Threshold,
        delta: Option<f64>,
        level: f64,
        log_scale: bool,
    ) -> Result<Self> {
        for p in &pieces {
            if p.lo.is_nan() || p.hi.is_nan() || p.lo > p.hi {
                return Err(Error::Validation(format!(
                    "invalid interval [{}, {}]",
                    p.lo, p.hi
                )));
            }
        }
        for w in pieces.windows(2) {
            if w[0].hi >= w[1].lo {
                return Err(Error::Validation(
                    "region pieces must be sorted and disjoint".into(),
                ));
            }
        }
        if pieces.is_empty() {
            return Err(Error::Validation(
                "a confidence region needs at least one piece".into(),
            ));
        }
        Ok(Self {
            pieces,
            threshold,
            delta,
            level,
            log_scale,
        })
    }

    /// Pieces in natural units; an open lower end of a log-scale parameter
    /// maps to 0.
    pub fn natural_pieces(&self) -> Vec<Interval> {
        self.pieces
            .iter()
            .map(|p| {
                if self.log_scale {
                    Interval::new(p.lo.exp(), p.hi.exp())
                } else {
                    *p
                }
            })
            .collect()
    }

    /// Membership of a natural-scale value.
    pub fn contains(&self, v: f64) -> bool {
        let q = if self.log_scale {
            if v <= 0.0 {
                return false;
            }
            v.ln()
        } else {
            v
        };
        self.pieces.iter().any(|p| p.contains(q))
    }

    pub fn is_bounded(&self) -> bool {
        self.pieces.first().is_some_and(|p| p.lo.is_finite())
            && self.pieces.last().is_some_and(|p| p.hi.is_finite())
    }

    /// Zero lies outside the region (natural scale).
    pub fn excludes_zero(&self) -> bool {
        !self.contains(0.0)
    }

    /// Every piece lies strictly below zero (natural scale).
    pub fn subset_of_negative(&self) -> bool {
        !self.log_scale && self.pieces.iter().all(|p| p.hi < 0.0)
    }

    pub fn subset_of_positive(&self) -> bool {
        self.log_scale || self.pieces.iter().all(|p| p.lo > 0.0)
    }

    /// `self` is contained in `other` (same parameter and scale).
    pub fn is_subset_of(&self, other: &ConfidenceRegion) -> bool {
        self.pieces
            .iter()
            .all(|p| other.pieces.iter().any(|o| o.lo <= p.lo && p.hi <= o.hi))
    }
}

fn fmt_end(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

impl fmt::Display for ConfidenceRegion {
    /// Natural-scale pieces joined by `U`, e.g. `(-inf,-0.286]U[-0.007,inf)`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}",
            format_pieces(&self.natural_pieces(), self.log_scale)
        )
    }
}

/// Render natural-scale pieces; `log_scale` renders a zero lower end as open.
pub fn format_pieces(pieces: &[Interval], log_scale: bool) -> String {
    pieces
        .iter()
        .map(|p| {
            let open_lo = p.lo == f64::NEG_INFINITY || (log_scale && p.lo == 0.0);
            let open_hi = p.hi == f64::INFINITY;
            format!(
                "{}{},{}{}",
                if open_lo { '(' } else { '[' },
                fmt_end(p.lo),
                fmt_end(p.hi),
                if open_hi { ')' } else { ']' }
            )
        })
        .collect::<Vec<_>>()
        .join("U")
}

/// Parse the textual form produced by [`format_pieces`]. Whitespace and the
/// unicode infinity sign are accepted.
pub fn parse_pieces(s: &str) -> Result<Vec<Interval>> {
    let cleaned: String = s
        .chars()
        .filter(|c| !c.is_whitespace())
        .collect::<String>()
        .replace('∞', "inf")
        .replace('−', "-")
        .replace('∪', "U");
    let mut out = Vec::new();
    for part in cleaned.split('U') {
        let bad = || Error::Parse {
            location: format!("interval {part:?}"),
            message: "expected [a,b], (-inf,b], [a,inf) or (-inf,inf)".into(),
        };
        let open = part.chars().next().ok_or_else(bad)?;
        let close = part.chars().last().ok_or_else(bad)?;
        if !matches!(open, '[' | '(') || !matches!(close, ']' | ')') || part.len() < 2 {
            return Err(bad());
        }
        let inner = &part[1..part.len() - 1];
        let (a, b) = inner.split_once(',').ok_or_else(bad)?;
        let parse = |t: &str| -> Result<f64> {
            match t {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                _ => t.parse::<f64>().map_err(|_| bad()),
            }
        };
        let (lo, hi) = (parse(a)?, parse(b)?);
        if lo > hi {
            return Err(bad());
        }
        out.push(Interval::new(lo, hi));
    }
    Ok(out)
}

/// Natural-scale pieces back into a region.
pub fn region_from_natural(
    pieces: &[Interval],
    threshold: Threshold,
    delta: Option<f64>,
    level: f64,
    log_scale: bool,
) -> Result<ConfidenceRegion> {
    let internal = pieces
        .iter()
        .map(|p| {
            if log_scale {
                Interval::new(p.lo.ln(), p.hi.ln())
            } else {
                *p
            }
        })
        .collect();
    ConfidenceRegion::new(internal, threshold, delta, level, log_scale)
}

/// `{q : -2 (PL(q) - l_hat) <= delta}` by linear interpolation in
/// `(q, -2 PL)` between grid points. Ends whose scan never exceeded `delta`
/// are open.
pub fn confidence_region(
    curve: &ProfileCurve,
    threshold: Threshold,
    alpha: f64,
) -> Result<ConfidenceRegion> {
    let delta = threshold.delta(alpha);
    if curve.grid.is_empty() {
        return Err(Error::EmptyInput("profile curve has no points".into()));
    }
    let q = &curve.grid;
    let d = curve.drop();
    let n = q.len();
    let inside = |i: usize| d[i] <= delta;
    let cross = |i: usize, j: usize| -> f64 {
        // Crossing between grid points i and j (one inside, one outside).
        let t = (delta - d[i]) / (d[j] - d[i]);
        q[i] + t * (q[j] - q[i])
    };
    let mut pieces = Vec::new();
    let mut i = 0;
    while i < n {
        if !inside(i) {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < n && inside(i + 1) {
            i += 1;
        }
        let lo = if start == 0 {
            f64::NEG_INFINITY
        } else {
            cross(start - 1, start)
        };
        let hi = if i == n - 1 {
            f64::INFINITY
        } else {
            cross(i, i + 1)
        };
        pieces.push(Interval::new(lo, hi));
        i += 1;
    }
    ConfidenceRegion::new(pieces, threshold, Some(delta), 1.0 - alpha, curve.log_scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdentifiabilityKind {
    StructuralNonIdentifiable,
    PracticalNonIdentifiable,
    Identifiable,
}

impl fmt::Display for IdentifiabilityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            IdentifiabilityKind::StructuralNonIdentifiable => "structural-non-identifiable",
            IdentifiabilityKind::PracticalNonIdentifiable => "practical-non-identifiable",
            IdentifiabilityKind::Identifiable => "identifiable",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilityVerdict {
    pub kind: IdentifiabilityKind,
    /// Profile range over the scan.
    pub flatness: f64,
    pub open_lower: bool,
    pub open_upper: bool,
}

pub fn classify_identifiability(
    curve: &ProfileCurve,
    region: &ConfidenceRegion,
    flat_tolerance: f64,
) -> IdentifiabilityVerdict {
    let flatness = curve.range();
    let open_lower = !region.pieces.first().is_some_and(|p| p.lo.is_finite());
    let open_upper = !region.pieces.last().is_some_and(|p| p.hi.is_finite());
    let kind = if flatness < flat_tolerance {
        IdentifiabilityKind::StructuralNonIdentifiable
    } else if open_lower || open_upper {
        IdentifiabilityKind::PracticalNonIdentifiable
    } else {
        IdentifiabilityKind::Identifiable
    };
    IdentifiabilityVerdict {
        kind,
        flatness,
        open_lower,
        open_upper,
    }
}

/// Region CSV with columns `parameter,threshold,delta,level,scale,region`.
pub fn write_regions_csv<W: Write>(rows: &[(String, ConfidenceRegion)], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "parameter",
        "threshold",
        "delta",
        "level",
        "scale",
        "region",
    ])?;
    for (name, r) in rows {
        wr.write_record([
            name.clone(),
            r.threshold.name(),
            r.delta.map_or_else(String::new, |d| d.to_string()),
            format!("{}", r.level),
            if r.log_scale {
                "log".into()
            } else {
                "linear".to_string()
            },
            region_to_exact_string(r),
        ])?;
    }
    wr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Exact textual form (stored scale, full precision) used for round trips.
fn region_to_exact_string(r: &ConfidenceRegion) -> String {
    format_pieces(&r.pieces, false)
}

pub fn read_regions_csv<R: std::io::Read>(r: R) -> Result<Vec<(String, ConfidenceRegion)>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (row, rec) in rd.records().enumerate() {
        let rec = rec?;
        let loc = |m: &str| Error::Parse {
            location: format!("row {}", row + 2),
            message: m.to_string(),
        };
        if rec.len() != 6 {
            return Err(loc("expected 6 columns"));
        }
        let threshold: Threshold = rec[1].parse()?;
        let delta = match &rec[2] {
            "" => None,
            d => Some(d.parse::<f64>().map_err(|_| loc("bad delta"))?),
        };
        let level: f64 = rec[3].parse().map_err(|_| loc("bad level"))?;
        let log_scale = match &rec[4] {
            "log" => true,
            "linear" => false,
            _ => return Err(loc("scale must be log or linear")),
        };
        let pieces = parse_pieces(&rec[5])?;
        out.push((
            rec[0].to_string(),
            ConfidenceRegion::new(pieces, threshold, delta, level, log_scale)?,
        ));
    }
    Ok(out)
}

/// Profile, region and verdict for one parameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileResult {
    pub curve: ProfileCurve,
    pub region: ConfidenceRegion,
    pub verdict: IdentifiabilityVerdict,
}

pub fn profile_all(
    fit: &FitResult,
    objective: &Objective,
    scan: &ScanPolicy,
    threshold: Threshold,
    alpha: f64,
) -> Result<Vec<ProfileResult>> {
    use rayon::prelude::*;
    let names = objective.model().names();
    objective
        .free_indices()
        .par_iter()
        .map(|&i| {
            let curve = profile(names[i], fit, objective, scan)?;
            let region = confidence_region(&curve, threshold, alpha)?;
            let verdict = classify_identifiability(&curve, &region, scan.flat_tolerance);
            Ok(ProfileResult {
                curve,
                region,
                verdict,
            })
        })
        .collect()
}
