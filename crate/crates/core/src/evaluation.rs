//! Detection rules for the five evaluation methods, study scoring and the
//! summary of the published PDX knockout results.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_ci_difference, BootstrapPlan};
use crate::data::{Dataset, Record};
use crate::error::{Error, Result};
use crate::inference::{fit, FitConfig, ModelKind, Objective, ParamVector};
use crate::profiles::{
    confidence_region, parse_pieces, profile, ConfidenceRegion, Interval, ScanPolicy, Threshold,
    CANTELLI_95, CHI1SQ_95,
};
use crate::rng;
use crate::simulation::{read_manifest, ManifestRow, StudyDataset};
use crate::stats::paired_t;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    T14,
    TEnd,
    ExpChi1sq,
    ExpCantelli,
    LogisticBoot,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::T14,
        Method::TEnd,
        Method::ExpChi1sq,
        Method::ExpCantelli,
        Method::LogisticBoot,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::T14 => "t14",
            Method::TEnd => "t_end",
            Method::ExpChi1sq => "exp_chi1sq",
            Method::ExpCantelli => "exp_cantelli",
            Method::LogisticBoot => "logistic_boot",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Effect,
    NoEffect,
    NotApplicable,
    /// The method could not be carried out (fit or bootstrap failure).
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Inhibiting,
    Enhancing,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Evidence {
    PValue(f64),
    Region(ConfidenceRegion),
    None,
}

impl fmt::Display for Evidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Evidence::PValue(p) => write!(f, "p={p}"),
            Evidence::Region(r) => write!(f, "{r}"),
            Evidence::None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionOutcome {
    pub method: Method,
    pub decision: Decision,
    pub direction: Direction,
    pub evidence: Evidence,
    pub alpha: f64,
    /// Why a method was skipped, failed or is degenerate.
    pub note: Option<String>,
}

impl DetectionOutcome {
    fn skipped(method: Method, alpha: f64, decision: Decision, note: impl Into<String>) -> Self {
        Self {
            method,
            decision,
            direction: Direction::None,
            evidence: Evidence::None,
            alpha,
            note: Some(note.into()),
        }
    }

    /// Decision from an interval: an effect when zero is excluded.
    pub fn from_region(method: Method, region: ConfidenceRegion, alpha: f64) -> Self {
        let (decision, direction) = region_decision(&region);
        Self {
            method,
            decision,
            direction,
            evidence: Evidence::Region(region),
            alpha,
            note: None,
        }
    }

    pub fn is_effect(&self) -> bool {
        self.decision == Decision::Effect
    }

    pub fn is_enhancing(&self) -> bool {
        self.is_effect() && self.direction == Direction::Enhancing
    }

    /// Matrix code: 1 inhibiting (or undirected) effect, -1 enhancing effect,
    /// 0 no effect, NA not applicable, ERR failed.
    pub fn code(&self) -> &'static str {
        match (self.decision, self.direction) {
            (Decision::Effect, Direction::Enhancing) => "-1",
            (Decision::Effect, _) => "1",
            (Decision::NoEffect, _) => "0",
            (Decision::NotApplicable, _) => "NA",
            (Decision::Failed, _) => "ERR",
        }
    }
}

fn region_decision(region: &ConfidenceRegion) -> (Decision, Direction) {
    if !region.excludes_zero() {
        return (Decision::NoEffect, Direction::None);
    }
    let direction = if region.subset_of_positive() {
        Direction::Inhibiting
    } else if region.subset_of_negative() {
        Direction::Enhancing
    } else {
        Direction::None
    };
    (Decision::Effect, direction)
}

/// Fixed logistic components: the carrying capacity and the modified
/// population's initial size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticFixed {
    pub capacity: f64,
    pub x1_0: f64,
}

impl Default for LogisticFixed {
    fn default() -> Self {
        Self {
            capacity: 1e9,
            x1_0: 5e4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    pub alpha: f64,
    pub methods: Vec<Method>,
    /// Output days within `early_window` of `early_day` form the early t-test.
    pub early_day: f64,
    pub early_window: f64,
    pub fit: FitConfig,
    pub scan: ScanPolicy,
    /// Its seed is replaced by a per-dataset seed.
    pub bootstrap: BootstrapPlan,
    pub logistic: LogisticFixed,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            methods: Method::ALL.to_vec(),
            early_day: 14.0,
            early_window: 3.0,
            fit: FitConfig::default(),
            scan: ScanPolicy::default(),
            bootstrap: BootstrapPlan::default(),
            logistic: LogisticFixed::default(),
        }
    }
}

impl EvaluationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.early_window >= 0.0) {
            return Err(Error::Config("early_window must be >= 0".into()));
        }
        if !(self.logistic.capacity > 0.0 && self.logistic.x1_0 > 0.0) {
            return Err(Error::Config(
                "fixed logistic values must be positive".into(),
            ));
        }
        self.bootstrap.validate()
    }
}

/// Two-tailed paired t-test of input minus output fractions for mice whose
/// output day lies within `window` of `output_day`.
pub fn paired_t_test(
    data: &Dataset,
    output_day: f64,
    window: f64,
    alpha: f64,
    method: Method,
) -> DetectionOutcome {
    let diffs: Vec<f64> = data
        .pairs()
        .into_iter()
        .filter(|p| (p.output_day - output_day).abs() <= window)
        .map(|p| p.input - p.output)
        .collect();
    let t = match paired_t(&diffs) {
        Ok(t) => t,
        Err(e) => {
            return DetectionOutcome::skipped(method, alpha, Decision::NotApplicable, e.to_string())
        }
    };
    let effect = t.p_value < alpha;
    let direction = match (effect, t.mean_difference > 0.0) {
        (false, _) => Direction::None,
        (true, true) => Direction::Inhibiting,
        (true, false) => Direction::Enhancing,
    };
    DetectionOutcome {
        method,
        decision: if effect {
            Decision::Effect
        } else {
            Decision::NoEffect
        },
        direction,
        evidence: Evidence::PValue(t.p_value),
        alpha,
        note: (t.sd_difference == 0.0).then(|| "zero-variance differences".to_string()),
    }
}

fn exponential_outcomes(
    data: &Arc<Dataset>,
    cfg: &EvaluationConfig,
    seed: u64,
    wanted: &[Method],
) -> Vec<DetectionOutcome> {
    let alpha = cfg.alpha;
    let run = || -> Result<(ConfidenceRegion, ConfidenceRegion)> {
        let template = ParamVector::new(ModelKind::Exponential, vec![0.0, 1.0, 0.2])?;
        let obj = Objective::new(data.clone(), template, cfg.fit.l2_weight)?;
        let f = fit(&obj, &cfg.fit, seed)?;
        let curve = profile("theta1", &f, &obj, &cfg.scan)?;
        Ok((
            confidence_region(&curve, Threshold::Chi1Sq, alpha)?,
            confidence_region(&curve, Threshold::Cantelli, alpha)?,
        ))
    };
    match run() {
        Ok((chi, cant)) => wanted
            .iter()
            .map(|&m| {
                let r = if m == Method::ExpChi1sq {
                    chi.clone()
                } else {
                    cant.clone()
                };
                DetectionOutcome::from_region(m, r, alpha)
            })
            .collect(),
        Err(e) => wanted
            .iter()
            .map(|&m| DetectionOutcome::skipped(m, alpha, Decision::Failed, e.to_string()))
            .collect(),
    }
}

fn logistic_outcome(data: &Arc<Dataset>, cfg: &EvaluationConfig, seed: u64) -> DetectionOutcome {
    let alpha = cfg.alpha;
    let m = Method::LogisticBoot;
    let run = || -> Result<ConfidenceRegion> {
        let fixed = cfg.logistic;
        let template = ParamVector::new(
            ModelKind::logistic(),
            vec![0.0, 0.0, fixed.capacity, fixed.x1_0, fixed.x1_0, 0.2],
        )?
        .fix("K")?
        .fix("x1_0")?;
        let obj = Objective::new(data.clone(), template, cfg.fit.l2_weight)?;
        let plan = BootstrapPlan {
            seed,
            fit: cfg.fit.clone(),
            ..cfg.bootstrap.clone()
        };
        Ok(bootstrap_ci_difference(&obj, &plan, 1.0 - alpha)?.region)
    };
    match run() {
        Ok(region) => DetectionOutcome::from_region(m, region, alpha),
        Err(e @ Error::DesignViolation(_)) => {
            DetectionOutcome::skipped(m, alpha, Decision::NotApplicable, e.to_string())
        }
        Err(e) => DetectionOutcome::skipped(m, alpha, Decision::Failed, e.to_string()),
    }
}

/// Run the configured methods on one dataset. Failures are reported per
/// method and never abort the others.
pub fn evaluate_dataset(
    data: &Dataset,
    cfg: &EvaluationConfig,
    seed: u64,
) -> Vec<DetectionOutcome> {
    let alpha = cfg.alpha;
    let data = Arc::new(data.clone());
    let outputs = &data.design().output_days;
    let last_day = outputs.last().copied();
    let exp_wanted: Vec<Method> = cfg
        .methods
        .iter()
        .copied()
        .filter(|m| matches!(m, Method::ExpChi1sq | Method::ExpCantelli))
        .collect();
    let mut exp = if exp_wanted.is_empty() || last_day.is_none() {
        Vec::new()
    } else {
        exponential_outcomes(&data, cfg, rng::derive_seed(seed, &[0xE4]), &exp_wanted)
    };
    let mut out = Vec::with_capacity(cfg.methods.len());
    for &m in &cfg.methods {
        let Some(last) = last_day else {
            out.push(DetectionOutcome::skipped(
                m,
                alpha,
                Decision::NotApplicable,
                "no output measurements",
            ));
            continue;
        };
        let o = match m {
            Method::T14 => paired_t_test(&data, cfg.early_day, cfg.early_window, alpha, m),
            Method::TEnd => paired_t_test(&data, last, 0.0, alpha, m),
            Method::ExpChi1sq | Method::ExpCantelli => {
                let k = exp
                    .iter()
                    .position(|o| o.method == m)
                    .expect("exponential outcome");
                exp.remove(k)
            }
            Method::LogisticBoot => {
                if data.len() < crate::bootstrap::MIN_RECORDS {
                    DetectionOutcome::skipped(
                        m,
                        alpha,
                        Decision::NotApplicable,
                        "fewer than 8 measurements",
                    )
                } else {
                    logistic_outcome(&data, cfg, rng::derive_seed(seed, &[0xB0]))
                }
            }
        };
        out.push(o);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub scenario: String,
    pub sample_size: usize,
    pub method: Method,
    pub detected: usize,
    pub enhancing: usize,
    pub not_applicable: usize,
    pub failed: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetScore {
    pub dataset_id: String,
    pub scenario: String,
    pub sample_size: usize,
    pub outcomes: Vec<DetectionOutcome>,
}

impl DatasetScore {
    pub fn outcome(&self, method: Method) -> Option<&DetectionOutcome> {
        self.outcomes.iter().find(|o| o.method == method)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StudyScoreboard {
    pub methods: Vec<Method>,
    pub rows: Vec<ScoreRow>,
    pub datasets: Vec<DatasetScore>,
    /// Archive entries whose data could not be read.
    pub missing: Vec<String>,
}

impl StudyScoreboard {
    pub fn from_scores(
        methods: &[Method],
        mut datasets: Vec<DatasetScore>,
        missing: Vec<String>,
    ) -> Self {
        datasets.sort_by(|a, b| a.dataset_id.cmp(&b.dataset_id));
        let mut agg: BTreeMap<(String, usize, Method), ScoreRow> = BTreeMap::new();
        for d in &datasets {
            for o in &d.outcomes {
                let row = agg
                    .entry((d.scenario.clone(), d.sample_size, o.method))
                    .or_insert_with(|| ScoreRow {
                        scenario: d.scenario.clone(),
                        sample_size: d.sample_size,
                        method: o.method,
                        detected: 0,
                        enhancing: 0,
                        not_applicable: 0,
                        failed: 0,
                        total: 0,
                    });
                row.total += 1;
                match o.decision {
                    Decision::Effect => {
                        row.detected += 1;
                        row.enhancing += usize::from(o.direction == Direction::Enhancing);
                    }
                    Decision::NotApplicable => row.not_applicable += 1,
                    Decision::Failed => row.failed += 1,
                    Decision::NoEffect => {}
                }
            }
        }
        Self {
            methods: methods.to_vec(),
            rows: agg.into_values().collect(),
            datasets,
            missing,
        }
    }

    pub fn row(&self, scenario: &str, sample_size: usize, method: Method) -> Option<&ScoreRow> {
        self.rows
            .iter()
            .find(|r| r.scenario == scenario && r.sample_size == sample_size && r.method == method)
    }

    /// `scenario,n,method,detected,enhancing,not_applicable,failed,total`.
    pub fn write_aggregate_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "scenario",
            "n",
            "method",
            "detected",
            "enhancing",
            "not_applicable",
            "failed",
            "total",
        ])?;
        for r in &self.rows {
            wr.write_record([
                r.scenario.clone(),
                r.sample_size.to_string(),
                r.method.to_string(),
                r.detected.to_string(),
                r.enhancing.to_string(),
                r.not_applicable.to_string(),
                r.failed.to_string(),
                r.total.to_string(),
            ])?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// One row per dataset, one decision code per method.
    pub fn write_matrix_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["dataset_id".to_string()];
        header.extend(self.methods.iter().map(|m| m.to_string()));
        wr.write_record(&header)?;
        for d in &self.datasets {
            let mut rec = vec![d.dataset_id.clone()];
            rec.extend(
                self.methods
                    .iter()
                    .map(|&m| d.outcome(m).map_or("NA", |o| o.code()).to_string()),
            );
            wr.write_record(&rec)?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn dataset_seed(seed: u64, id: &str) -> u64 {
    let words: Vec<u64> = id.bytes().map(u64::from).collect();
    rng::derive_seed(seed, &words)
}

/// Score in-memory study datasets.
pub fn score_datasets(
    datasets: &[StudyDataset],
    cfg: &EvaluationConfig,
    seed: u64,
) -> StudyScoreboard {
    let scores: Vec<DatasetScore> = datasets
        .par_iter()
        .map(|d| DatasetScore {
            dataset_id: d.id.clone(),
            scenario: d.scenario.to_string(),
            sample_size: d.sample_size,
            outcomes: evaluate_dataset(&d.dataset, cfg, dataset_seed(seed, &d.id)),
        })
        .collect();
    StudyScoreboard::from_scores(&cfg.methods, scores, Vec::new())
}

fn load_archived(dir: &Path, row: &ManifestRow) -> Result<Dataset> {
    let ingested = crate::io::ingest(&dir.join(&row.file))?;
    ingested
        .datasets
        .into_values()
        .next()
        .ok_or_else(|| Error::EmptyInput(row.file.clone()))
}

/// Score every dataset of an archive written by the simulation study.
/// Unreadable entries are listed in `missing` and skipped.
pub fn score_study(dir: &Path, cfg: &EvaluationConfig, seed: u64) -> Result<StudyScoreboard> {
    cfg.validate()?;
    let manifest = read_manifest(dir)?;
    let results: Vec<std::result::Result<DatasetScore, String>> = manifest
        .par_iter()
        .map(|row| match load_archived(dir, row) {
            Ok(data) => Ok(DatasetScore {
                dataset_id: row.dataset_id.clone(),
                scenario: row.scenario.to_string(),
                sample_size: row.sample_size,
                outcomes: evaluate_dataset(&data, cfg, dataset_seed(seed, &row.dataset_id)),
            }),
            Err(e) => Err(format!("{}: {e}", row.dataset_id)),
        })
        .collect();
    let mut scores = Vec::new();
    let mut missing = Vec::new();
    for r in results {
        match r {
            Ok(s) => scores.push(s),
            Err(m) => missing.push(m),
        }
    }
    Ok(StudyScoreboard::from_scores(&cfg.methods, scores, missing))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgrnaSubset {
    pub sgrna: String,
    pub dataset: Dataset,
    /// Only one mouse carries this sgRNA; such subsets are usually excluded.
    pub single_mouse: bool,
}

/// Partition a pooled experiment by sgRNA label.
pub fn split_by_sgrna(data: &Dataset) -> Result<Vec<SgrnaSubset>> {
    let mut groups: BTreeMap<String, Vec<Record>> = BTreeMap::new();
    for r in data.records() {
        let label = r
            .sgrna_id
            .as_deref()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| {
                Error::Labeling(format!(
                    "mouse {} at day {} has no sgRNA label",
                    r.mouse_id, r.time
                ))
            })?;
        groups.entry(label.to_string()).or_default().push(r.clone());
    }
    groups
        .into_iter()
        .map(|(sgrna, records)| {
            let mut mice: Vec<&str> = records.iter().map(|r| r.mouse_id.as_str()).collect();
            mice.sort_unstable();
            mice.dedup();
            let single_mouse = mice.len() < 2;
            Ok(SgrnaSubset {
                sgrna,
                dataset: Dataset::new(records)?,
                single_mouse,
            })
        })
        .collect()
}

/// One published knockout experiment: design details, t-test p-values and
/// the printed intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct PdxExperiment {
    pub sample: String,
    pub gene: u32,
    pub n_sgrna: u32,
    pub sample_size: usize,
    pub max_cells: f64,
    pub input_cells: f64,
    pub p_day14: Option<f64>,
    pub p_end_day: f64,
    /// `(theta1, theta2, theta3)` estimates.
    pub exp_estimate: [f64; 3],
    /// Intervals for theta1..theta3 at the Cantelli threshold.
    pub exp_cantelli: [Vec<Interval>; 3],
    pub logistic: Option<PdxLogistic>,
}

impl PdxExperiment {
    pub fn id(&self) -> String {
        format!("{} {}", self.sample, self.gene)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdxLogistic {
    pub lambda1: f64,
    pub lambda2: f64,
    pub x2_0: f64,
    pub sigma: f64,
    /// Percentile bootstrap interval of `lambda2 - lambda1`.
    pub boot_difference: Vec<Interval>,
}

const PDX_EXPERIMENTS: &str = include_str!("../fixtures/pdx_experiments.csv");
const PDX_EXPONENTIAL: &str = include_str!("../fixtures/pdx_exponential.csv");
const PDX_LOGISTIC: &str = include_str!("../fixtures/pdx_logistic.csv");

#[derive(Deserialize)]
struct ExperimentRow {
    sample: String,
    gene: u32,
    n_sgrna: u32,
    sample_size: usize,
    max_cells_million: f64,
    input_thousands: f64,
    p_day14: Option<f64>,
    p_end_day: f64,
}

#[derive(Deserialize)]
struct ExponentialRow {
    sample: String,
    gene: u32,
    theta1: f64,
    theta2: f64,
    theta3: f64,
    ci_theta1: String,
    ci_theta2: String,
    ci_theta3: String,
}

#[derive(Deserialize)]
struct LogisticRow {
    sample: String,
    gene: u32,
    lambda1: f64,
    lambda2: f64,
    x2_0_thousands: f64,
    sigma: f64,
    ci_boot_difference: String,
}

fn read_rows<T: serde::de::DeserializeOwned>(text: &str, name: &str) -> Result<Vec<T>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    rd.deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Parse {
                location: format!("{name}:{}", i + 2),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Parse the three fixture tables and join them on `(sample, gene)`.
pub fn parse_pdx_fixtures(
    experiments: &str,
    exponential: &str,
    logistic: &str,
) -> Result<Vec<PdxExperiment>> {
    let exp_rows: Vec<ExponentialRow> = read_rows(exponential, "pdx_exponential.csv")?;
    let log_rows: Vec<LogisticRow> = read_rows(logistic, "pdx_logistic.csv")?;
    let mut exp_map: BTreeMap<(String, u32), ExponentialRow> = exp_rows
        .into_iter()
        .map(|r| ((r.sample.clone(), r.gene), r))
        .collect();
    let mut log_map: BTreeMap<(String, u32), LogisticRow> = log_rows
        .into_iter()
        .map(|r| ((r.sample.clone(), r.gene), r))
        .collect();
    let mut out = Vec::new();
    for r in read_rows::<ExperimentRow>(experiments, "pdx_experiments.csv")? {
        let key = (r.sample.clone(), r.gene);
        let e = exp_map.remove(&key).ok_or_else(|| {
            Error::Validation(format!(
                "no exponential results for {} {}",
                r.sample, r.gene
            ))
        })?;
        let logistic = match log_map.remove(&key) {
            Some(l) => Some(PdxLogistic {
                lambda1: l.lambda1,
                lambda2: l.lambda2,
                x2_0: l.x2_0_thousands * 1e3,
                sigma: l.sigma,
                boot_difference: parse_pieces(&l.ci_boot_difference)?,
            }),
            None => None,
        };
        out.push(PdxExperiment {
            sample: r.sample,
            gene: r.gene,
            n_sgrna: r.n_sgrna,
            sample_size: r.sample_size,
            max_cells: r.max_cells_million * 1e6,
            input_cells: r.input_thousands * 1e3,
            p_day14: r.p_day14,
            p_end_day: r.p_end_day,
            exp_estimate: [e.theta1, e.theta2, e.theta3],
            exp_cantelli: [
                parse_pieces(&e.ci_theta1)?,
                parse_pieces(&e.ci_theta2)?,
                parse_pieces(&e.ci_theta3)?,
            ],
            logistic,
        });
    }
    if let Some((s, g)) = exp_map.into_keys().chain(log_map.into_keys()).next() {
        return Err(Error::Validation(format!(
            "results for unknown experiment {s} {g}"
        )));
    }
    Ok(out)
}

/// The bundled knockout tables.
pub fn pdx_fixtures() -> Result<Vec<PdxExperiment>> {
    parse_pdx_fixtures(PDX_EXPERIMENTS, PDX_EXPONENTIAL, PDX_LOGISTIC)
}

/// Approximate chi-square(1) interval from a published Cantelli interval.
///
/// With the error scale profiled out, the likelihood-ratio statistic of a
/// location-type parameter behaves like `n ln(1 + c d^2)` in the distance `d`
/// from the estimate. Fitting `c` separately on each side to the published
/// endpoint and solving at the smaller threshold gives the rescaled
/// endpoint. Only the piece holding the estimate is kept; open ends stay open.
pub fn chi1sq_from_cantelli(
    cantelli: &[Interval],
    estimate: f64,
    n: usize,
) -> Result<Vec<Interval>> {
    let piece = cantelli
        .iter()
        .find(|p| p.contains(estimate))
        .ok_or_else(|| {
            Error::Validation(format!(
                "estimate {estimate} lies outside the published interval"
            ))
        })?;
    let n = n as f64;
    let ratio = ((CHI1SQ_95 / n).exp_m1() / (CANTELLI_95 / n).exp_m1()).sqrt();
    let lo = if piece.lo.is_finite() {
        estimate - (estimate - piece.lo) * ratio
    } else {
        piece.lo
    };
    let hi = if piece.hi.is_finite() {
        estimate + (piece.hi - estimate) * ratio
    } else {
        piece.hi
    };
    Ok(vec![Interval::new(lo, hi)])
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdxEvaluation {
    pub experiment: String,
    pub sample_size: usize,
    pub outcomes: Vec<DetectionOutcome>,
}

fn pvalue_outcome(method: Method, p: Option<f64>, alpha: f64) -> DetectionOutcome {
    match p {
        None => DetectionOutcome::skipped(
            method,
            alpha,
            Decision::NotApplicable,
            "fewer than 2 paired mice",
        ),
        Some(p) => DetectionOutcome {
            method,
            decision: if p < alpha {
                Decision::Effect
            } else {
                Decision::NoEffect
            },
            direction: Direction::None,
            evidence: Evidence::PValue(p),
            alpha,
            note: None,
        },
    }
}

/// Apply the decision rules to the published p-values and intervals. The
/// intervals are printed at 95%, so `alpha` only affects the t-tests.
pub fn evaluate_pdx(experiments: &[PdxExperiment], alpha: f64) -> Result<Vec<PdxEvaluation>> {
    let region = |pieces: Vec<Interval>, t: Threshold, delta: Option<f64>| {
        ConfidenceRegion::new(pieces, t, delta, 0.95, false)
    };
    experiments
        .iter()
        .map(|e| {
            let chi = chi1sq_from_cantelli(&e.exp_cantelli[0], e.exp_estimate[0], e.sample_size)?;
            let mut outcomes = vec![
                pvalue_outcome(Method::T14, e.p_day14, alpha),
                pvalue_outcome(Method::TEnd, Some(e.p_end_day), alpha),
                DetectionOutcome::from_region(
                    Method::ExpChi1sq,
                    region(chi, Threshold::Chi1Sq, Some(CHI1SQ_95))?,
                    0.05,
                ),
                DetectionOutcome::from_region(
                    Method::ExpCantelli,
                    region(
                        e.exp_cantelli[0].clone(),
                        Threshold::Cantelli,
                        Some(CANTELLI_95),
                    )?,
                    0.05,
                ),
            ];
            outcomes.push(
                match (&e.logistic, e.sample_size >= crate::bootstrap::MIN_RECORDS) {
                    (Some(l), true) => DetectionOutcome::from_region(
                        Method::LogisticBoot,
                        region(l.boot_difference.clone(), Threshold::Percentile, None)?,
                        0.05,
                    ),
                    _ => DetectionOutcome::skipped(
                        Method::LogisticBoot,
                        0.05,
                        Decision::NotApplicable,
                        "fewer than 8 measurements",
                    ),
                },
            );
            Ok(PdxEvaluation {
                experiment: e.id(),
                sample_size: e.sample_size,
                outcomes,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub considered: usize,
    pub significant: usize,
    pub enhancing: usize,
}

/// Per-method counts of considered, significant and enhancing experiments.
pub fn summarize(evaluations: &[PdxEvaluation]) -> Vec<SummaryRow> {
    Method::ALL
        .iter()
        .map(|&m| {
            let mut row = SummaryRow {
                method: m,
                considered: 0,
                significant: 0,
                enhancing: 0,
            };
            for o in evaluations
                .iter()
                .flat_map(|e| e.outcomes.iter().filter(|o| o.method == m))
            {
                match o.decision {
                    Decision::Effect | Decision::NoEffect => row.considered += 1,
                    _ => continue,
                }
                row.significant += usize::from(o.is_effect());
                row.enhancing += usize::from(o.is_enhancing());
            }
            row
        })
        .collect()
}

/// Per-experiment report: one row per experiment, evidence and code per
/// method, then the summary rows.
pub fn write_pdx_report<W: Write>(evaluations: &[PdxEvaluation], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "experiment",
        "sample_size",
        "method",
        "decision",
        "evidence",
    ])?;
    for e in evaluations {
        for o in &e.outcomes {
            wr.write_record([
                e.experiment.clone(),
                e.sample_size.to_string(),
                o.method.to_string(),
                o.code().to_string(),
                o.evidence.to_string(),
            ])?;
        }
    }
    wr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Summary table: `method,considered,significant,enhancing`.
pub fn write_summary<W: Write>(rows: &[SummaryRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["method", "considered", "significant", "enhancing"])?;
    for r in rows {
        wr.write_record([
            r.method.to_string(),
            r.considered.to_string(),
            r.significant.to_string(),
            r.enhancing.to_string(),
        ])?;
    }
    wr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair_data(pairs: &[(f64, f64)]) -> Dataset {
        let mut recs = Vec::new();
        for (i, &(a, b)) in pairs.iter().enumerate() {
            recs.push(Record::new(0.0, a, format!("m{i}")));
            recs.push(Record::new(40.0, b, format!("m{i}")));
        }
        Dataset::new(recs).unwrap()
    }

    #[test]
    fn constant_differences_are_flagged() {
        let d = pair_data(&[(0.5, 0.25), (0.75, 0.5)]);
        let o = paired_t_test(&d, 40.0, 0.0, 0.05, Method::TEnd);
        assert_eq!(o.decision, Decision::Effect);
        assert!(o.note.as_deref().unwrap().contains("zero-variance"));
    }

    #[test]
    fn zero_mean_differences_give_p_one() {
        let d = pair_data(&[(0.5, 0.4), (0.4, 0.5)]);
        let o = paired_t_test(&d, 40.0, 0.0, 0.05, Method::TEnd);
        assert_eq!(o.evidence, Evidence::PValue(1.0));
        assert_eq!(o.decision, Decision::NoEffect);
    }

    #[test]
    fn single_pair_is_not_applicable() {
        let d = pair_data(&[(0.5, 0.4)]);
        let o = paired_t_test(&d, 40.0, 0.0, 0.05, Method::TEnd);
        assert_eq!(o.decision, Decision::NotApplicable);
    }

    #[test]
    fn input_only_dataset_is_not_applicable_everywhere() {
        let d = Dataset::new(
            (0..4)
                .map(|i| Record::new(0.0, 0.5, format!("m{i}")))
                .collect(),
        )
        .unwrap();
        let out = evaluate_dataset(&d, &EvaluationConfig::default(), 1);
        assert_eq!(out.len(), 5);
        assert!(out.iter().all(|o| o.decision == Decision::NotApplicable));
    }

    #[test]
    fn split_partitions_by_label() {
        let mut recs = Vec::new();
        for s in 0..3 {
            for m in 0..2 {
                let id = format!("s{s}m{m}");
                recs.push(Record::new(0.0, 0.5, &id).with_sgrna(format!("g{s}")));
                recs.push(Record::new(14.0, 0.4, &id).with_sgrna(format!("g{s}")));
            }
        }
        let parts = split_by_sgrna(&Dataset::new(recs).unwrap()).unwrap();
        assert_eq!(parts.len(), 3);
        assert!(parts
            .iter()
            .all(|p| p.dataset.len() == 4 && !p.single_mouse));
    }

    #[test]
    fn split_needs_labels() {
        let d = pair_data(&[(0.5, 0.4), (0.4, 0.5)]);
        assert!(matches!(split_by_sgrna(&d), Err(Error::Labeling(_))));
    }

    #[test]
    fn single_sgrna_is_returned_unchanged() {
        let recs = vec![
            Record::new(0.0, 0.5, "a").with_sgrna("g"),
            Record::new(14.0, 0.4, "a").with_sgrna("g"),
            Record::new(0.0, 0.45, "b").with_sgrna("g"),
        ];
        let d = Dataset::new(recs).unwrap();
        let parts = split_by_sgrna(&d).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].dataset, d);
    }

    #[test]
    fn rescaled_interval_shrinks_towards_the_estimate() {
        let c = vec![Interval::new(-0.004, 0.005)];
        let chi = chi1sq_from_cantelli(&c, 0.001, 4).unwrap();
        assert!(chi[0].lo > -0.004 && chi[0].hi < 0.005);
        let open = chi1sq_from_cantelli(&[Interval::new(0.02, f64::INFINITY)], 0.07, 20).unwrap();
        assert!(open[0].hi.is_infinite());
        // Large n approaches the quadratic ratio sqrt(3.84 / 7.16).
        let big = chi1sq_from_cantelli(&[Interval::new(-1.0, 1.0)], 0.0, 1_000_000).unwrap();
        assert!((big[0].hi - (3.84f64 / 7.16).sqrt()).abs() < 1e-5);
    }

    #[test]
    fn empty_scoreboard() {
        let s = StudyScoreboard::from_scores(&Method::ALL, Vec::new(), Vec::new());
        assert!(s.rows.is_empty() && s.datasets.is_empty());
    }
}
