//! Stochastic ground truth: a two-population linear birth-death process
//! simulated exactly or by tau-leaping, read out on an experimental design
//! and perturbed by multiplicative log-normal noise.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Record, INPUT_DAY};
use crate::error::{Error, Result};
use crate::inference::{model_log_eta, ParamVector};
use crate::models::StateTrajectory;
use crate::rng::{self, StreamRng};

/// Events allowed per exact path before giving up.
pub const DEFAULT_EVENT_CAP: u64 = 50_000_000;

/// Per-cell reaction rates of the four-reaction network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReactionRates {
    /// Population 1 proliferation.
    pub r1: f64,
    /// Population 1 death.
    pub r2: f64,
    /// Population 2 proliferation.
    pub r3: f64,
    /// Population 2 death.
    pub r4: f64,
}

impl ReactionRates {
    pub fn new(r1: f64, r2: f64, r3: f64, r4: f64) -> Result<Self> {
        let r = Self { r1, r2, r3, r4 };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("r1", self.r1),
            ("r2", self.r2),
            ("r3", self.r3),
            ("r4", self.r4),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "rate {name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Net growth rates `(r1 - r2, r3 - r4)`.
    pub fn net(&self) -> (f64, f64) {
        (self.r1 - self.r2, self.r3 - self.r4)
    }

    /// Mean-field solution `x_k(0) exp(net_k t)`.
    pub fn mean_field(&self, x1_0: f64, x2_0: f64, t: f64) -> (f64, f64) {
        let (b1, b2) = self.net();
        (x1_0 * (b1 * t).exp(), x2_0 * (b2 * t).exp())
    }

    fn propensities(&self, x: [u64; 2]) -> [f64; 4] {
        let (a, b) = (x[0] as f64, x[1] as f64);
        [self.r1 * a, self.r2 * a, self.r3 * b, self.r4 * b]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Simulator {
    Exact,
    TauLeap { epsilon: f64, critical_size: u64 },
}

impl Default for Simulator {
    fn default() -> Self {
        Simulator::TauLeap {
            epsilon: 0.03,
            critical_size: 30,
        }
    }
}

/// Reaction `k` changes population `k / 2` by +1 (even) or -1 (odd).
fn apply(x: &mut [u64; 2], k: usize, count: u64) -> bool {
    let s = k / 2;
    if k % 2 == 0 {
        x[s] += count;
        true
    } else if x[s] >= count {
        x[s] -= count;
        true
    } else {
        false
    }
}

fn exact_step(
    rates: &ReactionRates,
    x: &mut [u64; 2],
    t: &mut f64,
    horizon: f64,
    rng: &mut StreamRng,
) -> bool {
    let a = rates.propensities(*x);
    let a0: f64 = a.iter().sum();
    if a0 <= 0.0 {
        *t = horizon;
        return false;
    }
    let u: f64 = rng.random();
    let dt = -(1.0 - u).ln() / a0;
    if *t + dt > horizon {
        *t = horizon;
        return false;
    }
    *t += dt;
    let mut target = rng.random::<f64>() * a0;
    let mut k = 0;
    while k < 3 && target >= a[k] {
        target -= a[k];
        k += 1;
    }
    // Rounding can select a zero-propensity reaction at the end of the list.
    while a[k] == 0.0 {
        k -= 1;
    }
    apply(x, k, 1);
    true
}

/// Leap size bounding the expected relative change of each population by
/// `epsilon` (mean and standard deviation criteria).
fn leap_size(rates: &ReactionRates, x: [u64; 2], epsilon: f64) -> f64 {
    let pairs = [(rates.r1, rates.r2, x[0]), (rates.r3, rates.r4, x[1])];
    let mut tau = f64::INFINITY;
    for (b, d, n) in pairs {
        if n == 0 {
            continue;
        }
        let n = n as f64;
        let bound = (epsilon * n).max(1.0);
        let mu = ((b - d) * n).abs();
        let var = (b + d) * n;
        if mu > 0.0 {
            tau = tau.min(bound / mu);
        }
        if var > 0.0 {
            tau = tau.min(bound * bound / var);
        }
    }
    tau
}

/// Propensities at the expected state half a leap ahead. Freezing them at
/// the start of the leap biases the mean by a factor `(1 + mu tau) / e^(mu tau)`
/// per leap; the midpoint estimate leaves a third-order error.
fn midpoint_propensities(rates: &ReactionRates, x: [u64; 2], tau: f64) -> [f64; 4] {
    let (b1, b2) = rates.net();
    let a = (x[0] as f64 * (1.0 + 0.5 * tau * b1)).max(0.0);
    let b = (x[1] as f64 * (1.0 + 0.5 * tau * b2)).max(0.0);
    [rates.r1 * a, rates.r2 * a, rates.r3 * b, rates.r4 * b]
}

fn poisson(mean: f64, rng: &mut StreamRng) -> u64 {
    if mean <= 0.0 {
        0
    } else {
        Poisson::new(mean)
            .map(|p| p.sample(rng) as u64)
            .unwrap_or(0)
    }
}

/// Advance the process to each time in `readouts` (sorted, >= 0), calling
/// `on_event` after every exact jump or leap.
fn run<F: FnMut(f64, [u64; 2])>(
    rates: &ReactionRates,
    x0: [u64; 2],
    readouts: &[f64],
    sim: Simulator,
    event_cap: u64,
    rng: &mut StreamRng,
    mut on_event: F,
) -> Result<Vec<[u64; 2]>> {
    rates.validate()?;
    let mut x = x0;
    let mut t = 0.0;
    let mut events = 0u64;
    let mut out = Vec::with_capacity(readouts.len());
    for &horizon in readouts {
        if horizon < t {
            return Err(Error::InvalidParameter(
                "readout times must be sorted and >= 0".into(),
            ));
        }
        while t < horizon {
            if events >= event_cap {
                return Err(Error::Resource(format!(
                    "exact simulation exceeded {event_cap} events before day {horizon}; use tau-leaping"
                )));
            }
            match sim {
                Simulator::Exact => {
                    if exact_step(rates, &mut x, &mut t, horizon, rng) {
                        events += 1;
                        on_event(t, x);
                    }
                }
                Simulator::TauLeap {
                    epsilon,
                    critical_size,
                } => {
                    let small = x.iter().any(|&n| n > 0 && n < critical_size);
                    let a0: f64 = rates.propensities(x).iter().sum();
                    let tau = leap_size(rates, x, epsilon);
                    // Leaping is not worth it when only a handful of events fit.
                    if small || a0 <= 0.0 || tau * a0 < 10.0 {
                        for _ in 0..100 {
                            if !exact_step(rates, &mut x, &mut t, horizon, rng) {
                                break;
                            }
                            events += 1;
                        }
                        on_event(t, x);
                        continue;
                    }
                    let mut tau = tau.min(horizon - t);
                    loop {
                        let a = midpoint_propensities(rates, x, tau);
                        let counts: [u64; 4] = std::array::from_fn(|k| poisson(a[k] * tau, rng));
                        let mut y = x;
                        let ok = (0..4).all(|k| k % 2 == 1 || apply(&mut y, k, counts[k]))
                            && (0..4).all(|k| k % 2 == 0 || apply(&mut y, k, counts[k]));
                        if ok {
                            x = y;
                            t = if tau >= horizon - t { horizon } else { t + tau };
                            events += 1;
                            on_event(t, x);
                            break;
                        }
                        tau *= 0.5;
                    }
                }
            }
        }
        out.push(x);
    }
    Ok(out)
}

fn check_initial(x1_0: u64, x2_0: u64, t_end: f64) -> Result<()> {
    if x1_0 == 0 || x2_0 == 0 {
        return Err(Error::InvalidParameter("initial counts must be > 0".into()));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "end time must be finite and >= 0, got {t_end}"
        )));
    }
    Ok(())
}

fn record_path(
    rates: &ReactionRates,
    x1_0: u64,
    x2_0: u64,
    t_end: f64,
    seed: u64,
    sim: Simulator,
    event_cap: u64,
) -> Result<StateTrajectory> {
    check_initial(x1_0, x2_0, t_end)?;
    let mut rng = rng::stream(seed, &[0x551A]);
    let mut traj = StateTrajectory {
        times: vec![0.0],
        x1: vec![x1_0 as f64],
        x2: vec![x2_0 as f64],
    };
    let end = run(
        rates,
        [x1_0, x2_0],
        &[t_end],
        sim,
        event_cap,
        &mut rng,
        |t, x| {
            traj.times.push(t);
            traj.x1.push(x[0] as f64);
            traj.x2.push(x[1] as f64);
        },
    )?[0];
    if traj.times.last() != Some(&t_end) {
        traj.times.push(t_end);
        traj.x1.push(end[0] as f64);
        traj.x2.push(end[1] as f64);
    }
    Ok(traj)
}

/// Exact stochastic simulation; one entry per jump plus the start and end.
pub fn gillespie_exact(
    rates: &ReactionRates,
    x1_0: u64,
    x2_0: u64,
    t_end: f64,
    seed: u64,
) -> Result<StateTrajectory> {
    record_path(
        rates,
        x1_0,
        x2_0,
        t_end,
        seed,
        Simulator::Exact,
        DEFAULT_EVENT_CAP,
    )
}

/// Tau-leaping path; one entry per leap (or exact batch) plus the start.
pub fn tau_leap(
    rates: &ReactionRates,
    x1_0: u64,
    x2_0: u64,
    t_end: f64,
    seed: u64,
    epsilon: f64,
) -> Result<StateTrajectory> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    let sim = Simulator::TauLeap {
        epsilon,
        critical_size: 30,
    };
    record_path(rates, x1_0, x2_0, t_end, seed, sim, u64::MAX)
}

/// Population counts at each readout time, without storing the path.
pub fn simulate_readouts(
    rates: &ReactionRates,
    x0: [u64; 2],
    readouts: &[f64],
    sim: Simulator,
    rng: &mut StreamRng,
) -> Result<Vec<[u64; 2]>> {
    check_initial(x0[0], x0[1], readouts.last().copied().unwrap_or(0.0))?;
    let cap = if sim == Simulator::Exact {
        DEFAULT_EVENT_CAP
    } else {
        u64::MAX
    };
    run(rates, x0, readouts, sim, cap, rng, |_, _| {})
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioName {
    NoEffect,
    Weak,
    Medium,
    Strong,
    Custom,
}

impl ScenarioName {
    pub const TABLE: [ScenarioName; 4] = [
        ScenarioName::NoEffect,
        ScenarioName::Weak,
        ScenarioName::Medium,
        ScenarioName::Strong,
    ];

    /// Reference rates; `None` for custom scenarios.
    pub fn rates(self) -> Option<ReactionRates> {
        let r2 = match self {
            ScenarioName::NoEffect => 0.11,
            ScenarioName::Weak => 0.13,
            ScenarioName::Medium => 0.15,
            ScenarioName::Strong => 0.21,
            ScenarioName::Custom => return None,
        };
        Some(ReactionRates {
            r1: 0.2,
            r2,
            r3: 0.2,
            r4: 0.11,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::NoEffect => "no-effect",
            ScenarioName::Weak => "weak",
            ScenarioName::Medium => "medium",
            ScenarioName::Strong => "strong",
            ScenarioName::Custom => "custom",
        }
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no-effect" => Ok(ScenarioName::NoEffect),
            "weak" => Ok(ScenarioName::Weak),
            "medium" => Ok(ScenarioName::Medium),
            "strong" => Ok(ScenarioName::Strong),
            "custom" => Ok(ScenarioName::Custom),
            _ => Err(Error::Config(format!("unknown scenario {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: ScenarioName,
    pub rates: ReactionRates,
    pub x1_0: u64,
    pub x2_0: u64,
    pub sigma: f64,
    pub output_days: Vec<f64>,
    pub mice_per_output_day: usize,
    pub n_datasets: usize,
    #[serde(default)]
    pub simulator: Simulator,
}

impl ScenarioSpec {
    /// One of the four reference scenarios: 5e4 cells of each population,
    /// sigma 0.2, outputs on days 14 and 40.
    pub fn named(name: ScenarioName, mice_per_output_day: usize) -> Result<Self> {
        let rates = name
            .rates()
            .ok_or_else(|| Error::Config("custom scenarios need explicit rates".into()))?;
        Ok(Self {
            name,
            rates,
            x1_0: 50_000,
            x2_0: 50_000,
            sigma: 0.2,
            output_days: vec![14.0, 40.0],
            mice_per_output_day,
            n_datasets: 100,
            simulator: Simulator::default(),
        })
    }

    /// Total number of records: one input and one output per mouse.
    pub fn sample_size(&self) -> usize {
        2 * self.mice_per_output_day * self.output_days.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.rates.validate()?;
        if let Some(expected) = self.name.rates() {
            if expected != self.rates {
                return Err(Error::Config(format!(
                    "scenario {} must use its reference rates",
                    self.name
                )));
            }
        }
        if self.x1_0 == 0 || self.x2_0 == 0 {
            return Err(Error::Config("initial counts must be > 0".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!(
                "sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        if self.output_days.is_empty()
            || self
                .output_days
                .iter()
                .any(|&d| !(d > INPUT_DAY && d.is_finite()))
        {
            return Err(Error::Config("output days must be finite and > 0".into()));
        }
        if self.mice_per_output_day == 0 {
            return Err(Error::Config(
                "need at least one mouse per output day".into(),
            ));
        }
        if let Simulator::TauLeap { epsilon, .. } = self.simulator {
            if !(epsilon > 0.0 && epsilon < 1.0) {
                return Err(Error::Config(format!(
                    "epsilon must lie in (0, 1), got {epsilon}"
                )));
            }
        }
        Ok(())
    }
}

/// The 4 scenarios x 4 sample sizes grid (8, 16, 32 and 64 records).
pub fn default_grid(n_datasets: usize) -> Vec<ScenarioSpec> {
    let mut out = Vec::new();
    for name in ScenarioName::TABLE {
        for mice in [2, 4, 8, 16] {
            let mut s = ScenarioSpec::named(name, mice).expect("reference scenario");
            s.n_datasets = n_datasets;
            out.push(s);
        }
    }
    out
}

/// Multiplicative noise factor with unit mean: `exp(sigma Z - sigma^2 / 2)`.
pub fn noise_factor(sigma: f64, rng: &mut StreamRng) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    (sigma * z - 0.5 * sigma * sigma).exp()
}

#[derive(Debug, Clone)]
pub struct Synthesis {
    pub dataset: Dataset,
    /// Mice whose trajectory went extinct and was drawn again.
    pub regenerated: usize,
}

const MAX_ATTEMPTS: u64 = 1000;

/// One dataset: every mouse gets its own trajectory, read at day 0 and at
/// its output day, each reading multiplied by independent noise. Readings
/// are capped at 1.
pub fn synthesize_dataset(spec: &ScenarioSpec, seed: u64) -> Result<Synthesis> {
    spec.validate()?;
    let mice: Vec<(usize, usize)> = (0..spec.output_days.len())
        .flat_map(|d| (0..spec.mice_per_output_day).map(move |m| (d, m)))
        .collect();
    let per_mouse: Vec<(Vec<Record>, usize)> = mice
        .par_iter()
        .enumerate()
        .map(|(idx, &(d, m))| synthesize_mouse(spec, seed, idx as u64, d, m))
        .collect::<Result<_>>()?;
    let regenerated = per_mouse.iter().map(|p| p.1).sum();
    let records = per_mouse.into_iter().flat_map(|p| p.0).collect();
    Ok(Synthesis {
        dataset: Dataset::new(records)?,
        regenerated,
    })
}

fn synthesize_mouse(
    spec: &ScenarioSpec,
    seed: u64,
    idx: u64,
    d: usize,
    m: usize,
) -> Result<(Vec<Record>, usize)> {
    let day = spec.output_days[d];
    let mouse_id = format!("d{}-m{}", fmt_day(day), m + 1);
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = rng::stream(seed, &[0x5137, idx, attempt]);
        let states = simulate_readouts(
            &spec.rates,
            [spec.x1_0, spec.x2_0],
            &[INPUT_DAY, day],
            spec.simulator,
            &mut rng,
        )?;
        if states.iter().any(|s| s[0] == 0 || s[1] == 0) {
            continue;
        }
        let records = states
            .iter()
            .zip([INPUT_DAY, day])
            .map(|(s, t)| {
                let eta = s[0] as f64 / (s[0] as f64 + s[1] as f64);
                let value = (eta * noise_factor(spec.sigma, &mut rng)).min(1.0);
                Record::new(t, value, mouse_id.clone())
            })
            .collect();
        return Ok((records, attempt as usize));
    }
    Err(Error::Resource(format!(
        "mouse {mouse_id}: every one of {MAX_ATTEMPTS} trajectories went extinct"
    )))
}

fn fmt_day(day: f64) -> String {
    if day.fract() == 0.0 {
        format!("{}", day as i64)
    } else {
        format!("{day}")
    }
}

/// Noisy readings of a deterministic observable at days `0..=last_day`,
/// `per_day` at each, with the same unit-mean log-normal factor.
pub fn deterministic_dataset(
    observable: impl Fn(f64) -> Result<f64>,
    last_day: u32,
    per_day: usize,
    sigma: f64,
    seed: u64,
) -> Result<Dataset> {
    let mut rng = rng::stream(seed, &[0xD47A]);
    let mut records = Vec::with_capacity((last_day as usize + 1) * per_day);
    for day in 0..=last_day {
        let eta = observable(day as f64)?;
        for k in 0..per_day {
            let v = eta * noise_factor(sigma, &mut rng);
            records.push(Record::new(day as f64, v, format!("obs-{day}-{k}")));
        }
    }
    Dataset::new(records)
}

/// Dense benchmark: the model observable at days 0..=50 with 20 noisy
/// readings per day (n = 1020), noise scale taken from `truth`.
pub fn identifiability_dataset(truth: &ParamVector, seed: u64) -> Result<Dataset> {
    truth.validate()?;
    let days: Vec<f64> = (0..=50).map(f64::from).collect();
    let (log_eta, _) = model_log_eta(truth.model, &truth.to_internal(), &days, false)?;
    deterministic_dataset(
        |t| Ok(log_eta[t as usize].exp()),
        50,
        20,
        truth.sigma(),
        seed,
    )
}

/// A generated dataset with its coordinates in the study grid.
#[derive(Debug, Clone)]
pub struct StudyDataset {
    pub id: String,
    pub spec_index: usize,
    pub scenario: ScenarioName,
    pub sample_size: usize,
    pub replicate: usize,
    pub seed: u64,
    pub regenerated: usize,
    pub dataset: Dataset,
}

pub fn dataset_id(scenario: ScenarioName, sample_size: usize, replicate: usize) -> String {
    format!("{scenario}_n{sample_size}_r{replicate:03}")
}

/// Generate every dataset of the grid in memory.
pub fn generate_study(specs: &[ScenarioSpec], seed: u64) -> Result<Vec<StudyDataset>> {
    for s in specs {
        s.validate()?;
    }
    let jobs: Vec<(usize, usize)> = specs
        .iter()
        .enumerate()
        .flat_map(|(i, s)| (0..s.n_datasets).map(move |r| (i, r)))
        .collect();
    jobs.par_iter()
        .map(|&(i, r)| {
            let spec = &specs[i];
            let ds_seed = rng::derive_seed(seed, &[0x57D7, i as u64, r as u64]);
            let syn = synthesize_dataset(spec, ds_seed)?;
            Ok(StudyDataset {
                id: dataset_id(spec.name, spec.sample_size(), r),
                spec_index: i,
                scenario: spec.name,
                sample_size: spec.sample_size(),
                replicate: r,
                seed: ds_seed,
                regenerated: syn.regenerated,
                dataset: syn.dataset,
            })
        })
        .collect()
}

/// Manifest row of a study archive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub dataset_id: String,
    pub file: String,
    pub scenario: ScenarioName,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
    pub x1_0: u64,
    pub x2_0: u64,
    pub sigma: f64,
    pub sample_size: usize,
    pub replicate: usize,
    pub seed: u64,
    pub regenerated: usize,
}

pub const MANIFEST_FILE: &str = "manifest.csv";

/// Write `datasets/<id>.csv` for each dataset and `manifest.csv` into `dir`.
pub fn write_study(
    dir: &Path,
    specs: &[ScenarioSpec],
    datasets: &[StudyDataset],
) -> Result<Vec<ManifestRow>> {
    let ds_dir = dir.join("datasets");
    fs::create_dir_all(&ds_dir).map_err(|e| Error::io(&ds_dir, e))?;
    let mut rows = Vec::with_capacity(datasets.len());
    for d in datasets {
        let file = format!("datasets/{}.csv", d.id);
        let path = dir.join(&file);
        let mut buf = Vec::new();
        crate::io::write_measurements(&d.id, &d.dataset, &mut buf)?;
        fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
        let s = &specs[d.spec_index];
        rows.push(ManifestRow {
            dataset_id: d.id.clone(),
            file,
            scenario: d.scenario,
            r1: s.rates.r1,
            r2: s.rates.r2,
            r3: s.rates.r3,
            r4: s.rates.r4,
            x1_0: s.x1_0,
            x2_0: s.x2_0,
            sigma: s.sigma,
            sample_size: d.sample_size,
            replicate: d.replicate,
            seed: d.seed,
            regenerated: d.regenerated,
        });
    }
    let path = dir.join(MANIFEST_FILE);
    let mut wr = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        wr.serialize(r)?;
    }
    let bytes = wr
        .into_inner()
        .map_err(|e| Error::io(&path, e.into_error()))?;
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}

/// Generate and persist a study; returns the manifest.
pub fn run_study(specs: &[ScenarioSpec], seed: u64, dir: &Path) -> Result<Vec<ManifestRow>> {
    let datasets = generate_study(specs, seed)?;
    write_study(dir, specs, &datasets)
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestRow>> {
    let path = dir.join(MANIFEST_FILE);
    let f = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut rd = csv::Reader::from_reader(f);
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}
