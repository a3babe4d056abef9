//! Command-line front end: simulate, fit, profile, bootstrap, evaluate and
//! run the full simulation study.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use growthid::bootstrap::{bootstrap_ci_difference, pp_calibration};
use growthid::config::{ModelChoice, RunConfig, RunManifest};
use growthid::evaluation::{
    evaluate_dataset, evaluate_pdx, pdx_fixtures, score_datasets, score_study, summarize,
    write_pdx_report, write_summary, StudyScoreboard,
};
use growthid::inference::{fit, FitResult, Objective};
use growthid::profiles::{profile_all, write_curves_csv, write_regions_csv, Threshold};
use growthid::simulation::{generate_study, write_study};
use growthid::{Dataset, Error, Result};

#[derive(Parser)]
#[command(
    name = "growthid",
    version,
    about = "Growth-model identifiability and effect detection"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// exp, exp_raw or logistic.
    #[arg(long, global = true)]
    model: Option<ModelChoice>,
    /// chi1sq, cantelli or custom(<delta>).
    #[arg(long, global = true)]
    threshold: Option<Threshold>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "GROWTHID_JOBS")]
    jobs: Option<usize>,
    #[arg(long, global = true, env = "GROWTHID_OUT")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the simulated study archive.
    Simulate,
    /// Fit the model to every experiment of a measurement file.
    Fit(DataArgs),
    /// Profile likelihoods, confidence regions and identifiability verdicts.
    Profile(DataArgs),
    /// Bootstrap interval of the logistic growth difference, optionally with
    /// likelihood-ratio calibration.
    Bootstrap {
        #[command(flatten)]
        data: DataArgs,
        /// Also calibrate the likelihood ratio of every free parameter.
        #[arg(long)]
        pp: bool,
    },
    /// Detection decisions for measurements, a study archive or the bundled
    /// knockout tables.
    Evaluate {
        #[arg(long, group = "source")]
        data: Option<PathBuf>,
        #[arg(long, group = "source")]
        archive: Option<PathBuf>,
        #[arg(long, group = "source")]
        pdx: bool,
    },
    /// Simulate, evaluate and score in one pass.
    Study,
}

#[derive(Args)]
struct DataArgs {
    /// Measurement CSV (experiment_id,sgrna_id,mouse_id,time_days,concentration).
    #[arg(long)]
    data: PathBuf,
    /// Restrict to one experiment.
    #[arg(long)]
    experiment: Option<String>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Parse { .. }
        | Error::EmptyInput(_)
        | Error::Validation(_)
        | Error::Labeling(_)
        | Error::Csv(_)
        | Error::Json(_) => 3,
        Error::Io { .. } => 4,
        Error::DesignViolation(_) => 5,
        Error::FitFailure { .. } | Error::IntegrationFailure { .. } | Error::Evaluation(_) => 6,
        Error::Reliability { .. } => 7,
        Error::Resource(_) => 8,
        Error::InvalidParameter(_) => 9,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}

fn resolve(global: &Global) -> Result<RunConfig> {
    let mut cfg = match &global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    if let Some(a) = global.alpha {
        cfg.alpha = a;
    }
    if let Some(m) = global.model {
        cfg.model = m;
    }
    if let Some(t) = global.threshold {
        cfg.threshold = t;
    }
    if let Some(o) = &global.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli.global)?;
    if let Some(n) = cli.global.jobs {
        if n == 0 {
            return Err(Error::Config("--jobs must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot configure {n} workers: {e}")))?;
    }
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let (name, outputs) = match cli.command {
        Command::Simulate => ("simulate", simulate(&cfg, &out)?),
        Command::Fit(d) => ("fit", fit_cmd(&cfg, &d, &out)?),
        Command::Profile(d) => ("profile", profile_cmd(&cfg, &d, &out)?),
        Command::Bootstrap { data, pp } => ("bootstrap", bootstrap_cmd(&cfg, &data, pp, &out)?),
        Command::Evaluate { data, archive, pdx } => {
            let outputs = match (data, archive, pdx) {
                (Some(d), None, false) => evaluate_data(&cfg, &d, &out)?,
                (None, Some(a), false) => {
                    let board = score_study(&a, &cfg.evaluation(), cfg.seed)?;
                    write_scoreboard(&board, &out)?
                }
                (None, None, true) => evaluate_pdx_cmd(&cfg, &out)?,
                _ => {
                    return Err(Error::Config(
                        "evaluate needs one of --data, --archive or --pdx".into(),
                    ))
                }
            };
            ("evaluate", outputs)
        }
        Command::Study => ("study", study(&cfg, &out)?),
    };
    let manifest = RunManifest::new(name, &cfg, outputs)?;
    manifest.write(&out)?;
    Ok(())
}

fn write_file(
    out: &Path,
    name: &str,
    f: impl FnOnce(&mut Vec<u8>) -> Result<()>,
) -> Result<String> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    let path = out.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
    Ok(name.to_string())
}

fn csv_rows(w: &mut Vec<u8>, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(header)?;
    for r in rows {
        wr.write_record(r)?;
    }
    wr.flush().map_err(|e| Error::Validation(e.to_string()))?;
    Ok(())
}

/// File-name-safe form of an experiment id.
fn slug(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn load(d: &DataArgs) -> Result<BTreeMap<String, Dataset>> {
    let ingested = growthid::io::ingest(&d.data)?;
    if ingested.report.floored > 0 {
        eprintln!(
            "{} of {} readings raised to the detection floor",
            ingested.report.floored, ingested.report.rows
        );
    }
    let mut sets = ingested.datasets;
    if let Some(id) = &d.experiment {
        let one = sets.remove(id).ok_or_else(|| {
            Error::Config(format!(
                "experiment {id:?} not found in {}",
                d.data.display()
            ))
        })?;
        sets = BTreeMap::from([(id.clone(), one)]);
    }
    Ok(sets)
}

fn fit_one(cfg: &RunConfig, data: &Dataset) -> Result<(Objective, FitResult)> {
    let template = cfg.model.template(cfg.logistic)?;
    let obj = Objective::new(Arc::new(data.clone()), template, cfg.fit.l2_weight)?;
    let f = fit(&obj, &cfg.fit, cfg.seed)?;
    Ok((obj, f))
}

fn simulate(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let specs = cfg.study.specs()?;
    let datasets = generate_study(&specs, cfg.seed)?;
    let rows = write_study(out, &specs, &datasets)?;
    println!("wrote {} datasets to {}", rows.len(), out.display());
    let mut files = vec![growthid::simulation::MANIFEST_FILE.to_string()];
    files.extend(rows.into_iter().map(|r| r.file));
    Ok(files)
}

fn fit_cmd(cfg: &RunConfig, d: &DataArgs, out: &Path) -> Result<Vec<String>> {
    let mut rows = Vec::new();
    for (id, data) in load(d)? {
        let (_, f) = fit_one(cfg, &data)?;
        let names = f.estimate.model.names();
        println!(
            "{id}: loglik {:.6} ({} of {} starts converged{})",
            f.loglik,
            f.converged_starts,
            f.n_starts,
            if f.degenerate {
                ", degenerate error scale"
            } else {
                ""
            }
        );
        for (i, v) in f.estimate.values.iter().enumerate() {
            let fixed = f.estimate.fixed[i];
            println!(
                "  {:>8} = {v}{}",
                names[i],
                if fixed { " (fixed)" } else { "" }
            );
            rows.push(vec![
                id.clone(),
                cfg.model.to_string(),
                names[i].to_string(),
                v.to_string(),
                fixed.to_string(),
                f.loglik.to_string(),
            ]);
        }
    }
    let file = write_file(out, "fits.csv", |w| {
        csv_rows(
            w,
            &[
                "experiment",
                "model",
                "parameter",
                "estimate",
                "fixed",
                "loglik",
            ],
            &rows,
        )
    })?;
    Ok(vec![file])
}

fn profile_cmd(cfg: &RunConfig, d: &DataArgs, out: &Path) -> Result<Vec<String>> {
    let mut files = Vec::new();
    let mut rows = Vec::new();
    for (id, data) in load(d)? {
        let (obj, f) = fit_one(cfg, &data)?;
        let res = profile_all(&f, &obj, &cfg.scan, cfg.threshold, cfg.alpha)?;
        let curves: Vec<_> = res.iter().map(|r| r.curve.clone()).collect();
        let regions: Vec<_> = res
            .iter()
            .map(|r| (r.curve.parameter.clone(), r.region.clone()))
            .collect();
        let s = slug(&id);
        files.push(write_file(out, &format!("profiles/{s}_curves.csv"), |w| {
            write_curves_csv(&curves, w)
        })?);
        files.push(write_file(
            out,
            &format!("profiles/{s}_regions.csv"),
            |w| write_regions_csv(&regions, w),
        )?);
        println!("{id}:");
        for r in &res {
            let est = f.estimate.get(&r.curve.parameter)?;
            println!(
                "  {:>8} {est:<12.6} {} {}",
                r.curve.parameter, r.region, r.verdict.kind
            );
            rows.push(vec![
                id.clone(),
                r.curve.parameter.clone(),
                est.to_string(),
                r.region.threshold.name(),
                r.region.to_string(),
                r.verdict.kind.to_string(),
                r.verdict.flatness.to_string(),
            ]);
        }
    }
    files.push(write_file(out, "identifiability.csv", |w| {
        csv_rows(
            w,
            &[
                "experiment",
                "parameter",
                "estimate",
                "threshold",
                "region",
                "verdict",
                "profile_range",
            ],
            &rows,
        )
    })?);
    Ok(files)
}

fn bootstrap_cmd(cfg: &RunConfig, d: &DataArgs, pp: bool, out: &Path) -> Result<Vec<String>> {
    let mut files = Vec::new();
    let mut rows = Vec::new();
    let mut classes = Vec::new();
    let eval = cfg.evaluation();
    for (id, data) in load(d)? {
        let s = slug(&id);
        let template = ModelChoice::Logistic.template(cfg.logistic)?;
        let obj = Objective::new(Arc::new(data.clone()), template, cfg.fit.l2_weight)?;
        let ci = bootstrap_ci_difference(&obj, &eval.bootstrap, 1.0 - cfg.alpha)?;
        println!(
            "{id}: lambda2 - lambda1 = {:.6}, {} {}",
            ci.estimate,
            ci.region,
            ci.region.threshold.name()
        );
        rows.push(vec![
            id.clone(),
            ci.estimate.to_string(),
            ci.region.to_string(),
            ci.region.level.to_string(),
            ci.failed.to_string(),
            ci.n_resamples.to_string(),
        ]);
        files.push(write_file(
            out,
            &format!("bootstrap/{s}_replicates.csv"),
            |w| ci.write_csv(w),
        )?);
        if pp {
            let (obj, f) = fit_one(cfg, &data)?;
            for &j in obj.free_indices() {
                let name = obj.model().names()[j];
                let curve = pp_calibration(
                    &f,
                    &obj,
                    name,
                    cfg.calibration.n_boot,
                    cfg.seed,
                    cfg.calibration.band,
                )?;
                println!(
                    "  pp {name}: {} (band {:.4})",
                    curve.classification, curve.band
                );
                classes.push(vec![
                    id.clone(),
                    name.to_string(),
                    curve.classification.to_string(),
                    curve.band.to_string(),
                    curve.failed.to_string(),
                ]);
                files.push(write_file(
                    out,
                    &format!("calibration/{s}_{name}.csv"),
                    |w| curve.write_csv(w),
                )?);
            }
        }
    }
    files.push(write_file(out, "bootstrap.csv", |w| {
        csv_rows(
            w,
            &[
                "experiment",
                "estimate",
                "region",
                "level",
                "failed",
                "n_resamples",
            ],
            &rows,
        )
    })?);
    if pp {
        files.push(write_file(out, "calibration.csv", |w| {
            csv_rows(
                w,
                &["experiment", "parameter", "class", "band", "failed"],
                &classes,
            )
        })?);
    }
    Ok(files)
}

fn evaluate_data(cfg: &RunConfig, path: &Path, out: &Path) -> Result<Vec<String>> {
    let eval = cfg.evaluation();
    let sets = growthid::io::ingest(path)?.datasets;
    let mut rows = Vec::new();
    for (id, data) in &sets {
        for o in evaluate_dataset(data, &eval, cfg.seed) {
            println!("{id:<16} {:<14} {:<3} {}", o.method, o.code(), o.evidence);
            rows.push(vec![
                id.clone(),
                o.method.to_string(),
                o.code().to_string(),
                o.evidence.to_string(),
                o.note.unwrap_or_default(),
            ]);
        }
    }
    let file = write_file(out, "outcomes.csv", |w| {
        csv_rows(
            w,
            &["experiment", "method", "decision", "evidence", "note"],
            &rows,
        )
    })?;
    Ok(vec![file])
}

fn evaluate_pdx_cmd(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let evals = evaluate_pdx(&pdx_fixtures()?, cfg.alpha)?;
    let summary = summarize(&evals);
    println!(
        "{:<14} {:>10} {:>11} {:>9}",
        "method", "considered", "significant", "enhancing"
    );
    for r in &summary {
        println!(
            "{:<14} {:>10} {:>11} {:>9}",
            r.method, r.considered, r.significant, r.enhancing
        );
    }
    Ok(vec![
        write_file(out, "pdx_report.csv", |w| write_pdx_report(&evals, w))?,
        write_file(out, "pdx_summary.csv", |w| write_summary(&summary, w))?,
    ])
}

fn write_scoreboard(board: &StudyScoreboard, out: &Path) -> Result<Vec<String>> {
    for m in &board.missing {
        eprintln!("missing: {m}");
    }
    println!(
        "{:<10} {:>3} {:<14} {:>8} {:>9} {:>5}",
        "scenario", "n", "method", "detected", "enhancing", "total"
    );
    for r in &board.rows {
        println!(
            "{:<10} {:>3} {:<14} {:>8} {:>9} {:>5}",
            r.scenario, r.sample_size, r.method, r.detected, r.enhancing, r.total
        );
    }
    Ok(vec![
        write_file(out, "scoreboard_aggregate.csv", |w| {
            board.write_aggregate_csv(w)
        })?,
        write_file(out, "scoreboard_matrix.csv", |w| board.write_matrix_csv(w))?,
    ])
}

fn study(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let specs = cfg.study.specs()?;
    let datasets = generate_study(&specs, cfg.seed)?;
    let rows = write_study(out, &specs, &datasets)?;
    let board = score_datasets(&datasets, &cfg.evaluation(), cfg.seed);
    let mut files = vec![growthid::simulation::MANIFEST_FILE.to_string()];
    files.extend(rows.into_iter().map(|r| r.file));
    files.extend(write_scoreboard(&board, out)?);
    Ok(files)
}
