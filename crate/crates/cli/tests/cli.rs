use std::path::Path;
use std::process::{Command, Output};

use growthid::models::observable_exponential_closed_form;
use growthid::simulation::deterministic_dataset;

fn growthid(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_growthid"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("GROWTHID_JOBS")
        .env_remove("GROWTHID_OUT")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Noise-free exponential readings at days 0..=30, three per day.
fn exact_file(dir: &Path, theta1: f64, theta2: f64) -> std::path::PathBuf {
    let data = deterministic_dataset(
        |t| Ok(observable_exponential_closed_form(theta1, theta2, t)),
        30,
        3,
        0.0,
        0,
    )
    .unwrap();
    let path = dir.join("exact.csv");
    let f = std::fs::File::create(&path).unwrap();
    growthid::io::write_measurements("exact", &data, f).unwrap();
    path
}

fn fitted(csv: &str, parameter: &str) -> f64 {
    let mut rd = csv::Reader::from_reader(csv.as_bytes());
    for r in rd.records() {
        let r = r.unwrap();
        if &r[2] == parameter {
            return r[3].parse().unwrap();
        }
    }
    panic!("{parameter} not in fits.csv");
}

#[test]
fn fit_recovers_noise_free_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let data = exact_file(dir.path(), 0.08, 1.5);
    let out = dir.path().join("out");
    let o = growthid(&["fit", "--data", data.to_str().unwrap()], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("fits.csv")).unwrap();
    assert!((fitted(&csv, "theta1") - 0.08).abs() < 1e-6, "{csv}");
    assert!((fitted(&csv, "theta2") - 1.5).abs() < 1e-6, "{csv}");
    assert!(out.join("run.json").exists());
}

#[test]
fn pdx_summary_is_printed_and_written() {
    let dir = tempfile::tempdir().unwrap();
    let o = growthid(&["evaluate", "--pdx"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = std::fs::read_to_string(dir.path().join("pdx_summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().skip(1).collect();
    assert_eq!(
        rows,
        [
            "t14,38,33,0",
            "t_end,44,40,0",
            "exp_chi1sq,44,40,1",
            "exp_cantelli,44,31,1",
            "logistic_boot,38,37,0",
        ]
    );
    assert!(stdout(&o).contains("exp_cantelli"));
}

#[test]
fn errors_map_to_category_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");

    let o = growthid(&["--alpha", "1.5", "evaluate", "--pdx"], &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[config]"), "{}", stderr(&o));

    let missing = dir.path().join("none.csv");
    let o = growthid(&["fit", "--data", missing.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).starts_with("error[io]"));

    let bad = dir.path().join("bad.csv");
    std::fs::write(
        &bad,
        "experiment_id,sgrna_id,mouse_id,time_days,concentration\nx,s,m,zero,0.4\n",
    )
    .unwrap();
    let o = growthid(&["fit", "--data", bad.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    let o = growthid(&["evaluate"], &out);
    assert_eq!(o.status.code(), Some(2));

    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "not_a_key = 3\n").unwrap();
    let o = growthid(
        &["--config", cfg.to_str().unwrap(), "evaluate", "--pdx"],
        &out,
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "seed = 5\nmethods = [\"t_end\", \"exp_chi1sq\", \"exp_cantelli\"]\n\
         [study]\nscenarios = [\"strong\"]\nmice_per_output_day = [2]\nn_datasets = 2\n",
    )
    .unwrap();
    let run = |name: &str, jobs: &str| {
        let out = dir.path().join(name);
        let o = growthid(
            &["--config", cfg.to_str().unwrap(), "--jobs", jobs, "study"],
            &out,
        );
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let a = run("a", "1");
    let b = run("b", "2");
    for f in [
        "manifest.csv",
        "scoreboard_aggregate.csv",
        "scoreboard_matrix.csv",
    ] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let ja = std::fs::read_to_string(a.join("run.json")).unwrap();
    assert!(ja.contains("\"command\": \"study\""));
}
