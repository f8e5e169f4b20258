use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hgfc_cli::{gen_instance, run_experiment, verify_dir, write_bundle, Algorithm, ExperimentConfig, SummaryRow};
use serde_json::json;

fn hgfc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hgfc")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn summary(dir: &Path) -> Vec<SummaryRow> {
    csv::Reader::from_path(dir.join("summary.csv")).unwrap().deserialize().map(Result::unwrap).collect()
}

fn write_config(dir: &Path, name: &str, value: serde_json::Value) -> String {
    let p = dir.join(name);
    fs::write(&p, value.to_string()).unwrap();
    p.to_str().unwrap().to_string()
}

fn example_1() -> serde_json::Value {
    let v = [3.0, 1.0, 2.0, 1.0, 1.0];
    let jobs: Vec<_> = (0..5)
        .map(|j| {
            json!({
                "id": j + 1,
                "release": j as f64,
                "lengths": [v[j]],
                "costs": [{ "family": "linear", "rho": (j + 1) as f64, "shift": 0.0 }],
            })
        })
        .collect();
    json!({ "algorithm": "hdf", "trials": 1, "jobs": jobs })
}

#[test]
fn same_seed_gives_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        assert!(hgfc(&["gen", "--seed", "1", "--trials", "3", "--out", path(dir)]).status.success());
        assert!(hgfc(&["run", "--seed", "1", "--trials", "3", "--out", path(&dir.join("run"))]).status.success());
    }
    let mut compared = 0;
    for name in ["instance_0000.json", "instance_0002.json", "run/ledger.jsonl", "run/report.json", "run/summary.csv", "run/beta_hat.csv", "run/beta.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
        compared += 1;
    }
    assert_eq!(compared, 7);
    let other = tmp.path().join("c");
    assert!(hgfc(&["gen", "--seed", "2", "--trials", "1", "--out", path(&other)]).status.success());
    assert_ne!(fs::read(a.join("instance_0000.json")).unwrap(), fs::read(other.join("instance_0000.json")).unwrap());
}

#[test]
fn example_1_passthrough_reproduces_the_step_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "ex1.json", example_1());
    let out = tmp.path().join("out");
    let run = hgfc(&["run", "--config", &config, "--out", path(&out)]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));

    let mut reader = csv::Reader::from_path(out.join("alpha_plot.csv")).unwrap();
    let rows: Vec<(usize, f64, f64, f64)> = reader.deserialize::<(String, usize, f64, f64, f64, f64, f64, f64)>()
        .map(|r| {
            let r = r.unwrap();
            (r.1, r.2, r.3, r.6)
        })
        .collect();
    let heights: Vec<f64> = rows.iter().map(|r| r.3).collect();
    for h in [20.0, 25.0, 30.0] {
        assert!(heights.contains(&h), "height {h} missing from {heights:?}");
    }
    // Job 1 is preempted by job 2, so HDF cuts it into two steps.
    assert_eq!(rows.iter().filter(|r| r.0 == 0).count(), 2);
    assert_eq!(rows.last().unwrap().2, 8.0);

    let row = &summary(&out)[0];
    assert!(row.pass);
    assert_eq!(row.alg_cost, 78.0);
    assert!((row.ratio - 1.0).abs() <= 1e-9);
    assert!(fs::metadata(out.join("beta_curve.csv")).unwrap().len() > 0);
}

#[test]
fn empty_instance_is_valid() {
    let config = ExperimentConfig { n_jobs: 0, trials: 1, ..Default::default() };
    let inst = gen_instance(&config, 0).unwrap();
    assert!(inst.jobs.is_empty());
    let bundle = run_experiment(&config).unwrap();
    let row = &bundle.rows()[0];
    assert_eq!((row.n, row.alg_cost, row.benchmark, row.ratio), (0, 0.0, 0.0, 1.0));
    assert!(row.pass);
}

#[test]
fn one_job_has_unit_ratio_against_unit_speed() {
    for algorithm in [Algorithm::Alg2, Algorithm::Alg3] {
        let config = ExperimentConfig { n_jobs: 1, epsilon: Some(0.0), trials: 5, algorithm, ..Default::default() };
        for row in run_experiment(&config).unwrap().rows() {
            assert_eq!(row.speed, 1.0);
            assert!((row.ratio - 1.0).abs() <= 1e-9, "{algorithm:?}: {}", row.ratio);
            assert!(row.pass);
        }
    }
}

#[test]
fn quadratic_sweep_passes_every_trial() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "sweep.json",
        json!([
            { "family": "quadratic", "algorithm": "alg2", "trials": 200, "seed": 7 },
            { "family": "quadratic", "algorithm": "alg3", "n_machines": 3, "benchmark": "lp", "release_offset": 3, "trials": 50, "seed": 8 },
        ]),
    );
    let out = tmp.path().join("sweep");
    let run = hgfc(&["sweep", "--config", &config, "--out", path(&out)]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stdout));
    let rows = summary(&out);
    assert_eq!(rows.len(), 250);
    assert!(rows.iter().all(|r| r.pass && r.family == hgfc_cli::CostKind::Quadratic));
    assert_eq!(rows.iter().filter(|r| r.instance_id.starts_with("run_00/")).count(), 200);
    for sub in ["run_00", "run_01"] {
        let outcome = verify_dir(&out.join(sub)).unwrap();
        assert!(outcome.ok(), "{outcome:?}");
    }
}

#[test]
fn verify_rederives_rows_and_catches_edits() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let config = ExperimentConfig { trials: 4, ..Default::default() };
    write_bundle(&run_experiment(&config).unwrap(), &out).unwrap();
    let outcome = verify_dir(&out).unwrap();
    assert_eq!(outcome.rows, 4);
    assert!(outcome.ok(), "{outcome:?}");
    assert!(hgfc(&["verify", "--out", path(&out)]).status.success());

    let text = fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut fields: Vec<String> = lines[1].split(',').map(str::to_string).collect();
    fields[9] = "0.5".into();
    lines[1] = fields.join(",");
    fs::write(out.join("summary.csv"), lines.join("\n") + "\n").unwrap();
    let outcome = verify_dir(&out).unwrap();
    assert_eq!(outcome.mismatches.len(), 1);
    assert_eq!(hgfc(&["verify", "--out", path(&out)]).status.code(), Some(1));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    let bad = write_config(tmp.path(), "bad.json", json!({ "density": [2.0, 1.0] }));
    assert_eq!(hgfc(&["run", "--config", &bad, "--out", path(&out)]).status.code(), Some(2));
    let brute = hgfc(&["run", "--benchmark", "brute", "--epsilon", "1", "--out", path(&out)]);
    assert_eq!(brute.status.code(), Some(2));

    let ok = write_config(tmp.path(), "ok.json", json!({ "family": "flow_time", "exponent": 1, "algorithm": "hrdf", "trials": 10 }));
    assert_eq!(hgfc(&["run", "--config", &ok, "--out", path(&out)]).status.code(), Some(0));

    // The HRDF area identity does not hold for quadratic flow time once an
    // arrival postpones an alive job, so some of these trials fail.
    let k2 = write_config(tmp.path(), "k2.json", json!({ "family": "flow_time", "exponent": 2, "algorithm": "hrdf", "trials": 10 }));
    assert_eq!(hgfc(&["run", "--config", &k2, "--out", path(&out)]).status.code(), Some(1));
    let rows = summary(&out);
    assert!(rows.iter().any(|r| !r.pass));
    assert!(verify_dir(&out).unwrap().mismatches.is_empty());
}
