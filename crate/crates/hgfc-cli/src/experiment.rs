//! Running trials, writing result bundles and re-deriving them from ledgers.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use hgfc::costfn::curvature_k;
use hgfc::flow_oracle::{brute_force_opt, offline_value, Speed, BRUTE_FORCE_CAP};
use hgfc::model::{discretize_unrelated, fractional_cost, DiscreteInstance};
use hgfc::single_machine::{
    beta_hat_single, continuous_violations, convert_duals, hdf_schedule, online_single_run, split_duals,
    split_instance, SolveMode,
};
use hgfc::unrelated::{beta_hat_machine, lp_lower_bound, online_unrelated_run};
use hgfc::verify::{
    check_dual_feasibility, competitive_bound, dual_objective_slow, hrdf_run_and_fit, DualSolution, FEASIBILITY_TOL,
    HRDF_TOL, RATIO_TOL,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{gen_instance, Algorithm, BenchmarkChoice, CostKind, ExperimentConfig};
use crate::CliError;

/// Relative agreement of the converted dual objective, and of the summed
/// per-arrival increments, with the algorithm's cost.
pub const COST_TOL: f64 = 1e-9;

/// Samples per slot in the β̂ plot data.
const PLOT_SAMPLES: usize = 4;

/// One row of `summary.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub instance_id: String,
    pub family: CostKind,
    pub n: usize,
    pub m: usize,
    #[serde(rename = "K")]
    pub k: f64,
    pub theta: f64,
    pub speed: f64,
    pub alg_cost: f64,
    pub benchmark: f64,
    pub ratio: f64,
    pub bound: f64,
    pub pass: bool,
}

/// The closing ledger record of a trial. Together with the trial's arrival
/// records it determines the summary row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub instance_id: String,
    pub trial: usize,
    pub algorithm: Algorithm,
    pub benchmark: BenchmarkChoice,
    pub family: CostKind,
    pub n: usize,
    pub m: usize,
    #[serde(rename = "K")]
    pub k: f64,
    pub theta: f64,
    /// `1 + ε`.
    pub speed: f64,
    pub alg_cost: f64,
    pub benchmark_cost: f64,
    /// `None` when the bound is infinite.
    pub bound: Option<f64>,
    /// Converted objective for hdf, slowed dual objective for alg2 and alg3,
    /// `Σα̂` for hrdf.
    pub dual_objective: f64,
    pub dual_violations: usize,
    /// `∫β̂` for hrdf.
    pub beta_integral: Option<f64>,
}

fn ratio_of(alg: f64, benchmark: f64) -> f64 {
    if benchmark > 0.0 {
        alg / benchmark
    } else if alg > 0.0 {
        f64::INFINITY
    } else {
        1.0
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn flag(record: &Value, key: &str) -> bool {
    record.get(key).and_then(Value::as_bool).unwrap_or(false)
}

fn number(record: &Value, key: &str) -> f64 {
    record.get(key).and_then(Value::as_f64).unwrap_or(f64::NAN)
}

/// Every per-arrival audit of one ledger record.
fn arrival_ok(algorithm: Algorithm, record: &Value) -> bool {
    match algorithm {
        Algorithm::Alg2 => flag(record, "lemma3_ok") && flag(record, "lemma5_ok") && flag(record, "k_audit"),
        Algorithm::Alg3 => {
            let (delta, theta, alpha) = (number(record, "delta_alg"), number(record, "theta"), number(record, "alpha_n"));
            delta <= theta * alpha + 1e-9 * (1.0 + delta.abs())
                && flag(record, "K_audit")
                && flag(record, "beta_monotone")
                && flag(record, "dual_feasible")
        }
        Algorithm::Hdf | Algorithm::Hrdf => true,
    }
}

/// Ratio and verdict of a trial from its ledger records alone.
pub fn derive_verdict(summary: &LedgerSummary, arrivals: &[Value]) -> (f64, bool) {
    let ratio = ratio_of(summary.alg_cost, summary.benchmark_cost);
    let bound = summary.bound.unwrap_or(f64::INFINITY);
    let pass = match summary.algorithm {
        Algorithm::Hdf => {
            ratio <= bound * (1.0 + RATIO_TOL)
                && summary.dual_violations == 0
                && close(summary.dual_objective, summary.alg_cost, COST_TOL)
        }
        Algorithm::Alg2 | Algorithm::Alg3 => {
            let increments: f64 = arrivals.iter().map(|a| number(a, "delta_alg")).sum();
            let weak = summary.dual_objective <= summary.benchmark_cost + FEASIBILITY_TOL * (1.0 + summary.benchmark_cost.abs());
            ratio <= bound * (1.0 + RATIO_TOL)
                && weak
                && summary.dual_violations == 0
                && arrivals.iter().all(|a| arrival_ok(summary.algorithm, a))
                && close(increments, summary.alg_cost, COST_TOL)
        }
        Algorithm::Hrdf => {
            let beta = summary.beta_integral.unwrap_or(f64::NAN);
            let alpha = summary.dual_objective;
            let identity = (beta - alpha).abs() <= HRDF_TOL * (1.0 + alpha.abs());
            identity && (alpha - summary.alg_cost).abs() <= HRDF_TOL * (1.0 + alpha.abs())
                && (beta - summary.alg_cost).abs() <= HRDF_TOL * (1.0 + alpha.abs())
        }
    };
    (ratio, pass)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlphaPlotRow {
    pub instance_id: String,
    pub job: usize,
    pub start: f64,
    pub end: f64,
    pub density: f64,
    pub split_height: f64,
    pub height: f64,
    pub lowered: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BetaCurveRow {
    pub instance_id: String,
    pub t: f64,
    pub split_beta: f64,
    pub beta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BetaHatRow {
    pub instance_id: String,
    /// Index of the arrival whose plan is drawn; empty for final plans.
    pub arrival: Option<usize>,
    pub machine: usize,
    pub t: f64,
    pub beta_hat: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BetaRow {
    pub instance_id: String,
    pub machine: usize,
    pub slot: usize,
    pub beta: f64,
}

/// Everything one trial emits.
#[derive(Clone, Debug, Default)]
pub struct TrialOutput {
    pub row: Option<SummaryRow>,
    pub ledger: Vec<Value>,
    pub report: Value,
    pub alpha_plot: Vec<AlphaPlotRow>,
    pub beta_curve: Vec<BetaCurveRow>,
    pub beta_hat: Vec<BetaHatRow>,
    pub beta: Vec<BetaRow>,
}

/// Results of all trials of one config, in trial order.
#[derive(Clone, Debug, Default)]
pub struct Bundle {
    pub trials: Vec<TrialOutput>,
}

impl Bundle {
    pub fn rows(&self) -> Vec<SummaryRow> {
        self.trials.iter().filter_map(|t| t.row.clone()).collect()
    }

    pub fn all_pass(&self) -> bool {
        self.trials.iter().all(|t| t.row.as_ref().is_some_and(|r| r.pass))
    }
}

/// `ε` with `1 + ε` equal to `2Kθ` rounded up to a quarter.
fn default_epsilon(k: f64, theta: f64) -> f64 {
    let factor = (2.0 * k * theta * 4.0 - 1e-9).ceil() / 4.0;
    factor.max(1.0) - 1.0
}

fn tagged(kind: &str, instance_id: &str, trial: usize, record: impl Serialize) -> Result<Value, CliError> {
    let mut v = serde_json::to_value(record)?;
    if let Value::Object(map) = &mut v {
        map.insert("kind".into(), kind.into());
        map.insert("instance_id".into(), instance_id.into());
        map.insert("trial".into(), trial.into());
    }
    Ok(v)
}

fn benchmark_at(d: &DiscreteInstance, choice: BenchmarkChoice, speed: Speed) -> Result<f64, CliError> {
    Ok(match choice {
        BenchmarkChoice::Oracle => offline_value(d, speed)?,
        BenchmarkChoice::Lp => lp_lower_bound(d, speed)?,
        BenchmarkChoice::Brute => brute_force_opt(d, BRUTE_FORCE_CAP)?,
    })
}

fn beta_rows(instance_id: &str, duals: &DualSolution) -> Vec<BetaRow> {
    let mut out = Vec::new();
    for (machine, row) in duals.beta.iter().enumerate() {
        for (slot, &beta) in row.iter().enumerate() {
            out.push(BetaRow { instance_id: instance_id.to_string(), machine, slot, beta });
        }
    }
    out
}

fn grid(from: f64, to: f64, delta: f64) -> impl Iterator<Item = f64> {
    let step = delta / PLOT_SAMPLES as f64;
    let count = ((to - from) / step).round().max(0.0) as usize;
    (0..=count).map(move |i| from + i as f64 * step)
}

struct Partial {
    algorithm_cost: f64,
    k: f64,
    theta: f64,
    epsilon: f64,
    bound: f64,
    dual_objective: f64,
    dual_violations: usize,
    beta_integral: Option<f64>,
    benchmark_cost: f64,
    arrivals: Vec<Value>,
}

/// Runs the configured algorithm and verifier on one generated instance.
pub fn run_trial(config: &ExperimentConfig, trial: usize) -> Result<TrialOutput, CliError> {
    let instance_id = format!("{}-{trial:04}", config.seed);
    run_trial_inner(config, trial, &instance_id)
        .map_err(|e| CliError::Trial { instance: instance_id.clone(), source: Box::new(e) })
}

fn run_trial_inner(config: &ExperimentConfig, trial: usize, id: &str) -> Result<TrialOutput, CliError> {
    let inst = gen_instance(config, trial)?;
    let d = discretize_unrelated(&inst, config.delta)?;
    let mut out = TrialOutput::default();
    let p = match config.algorithm {
        Algorithm::Hdf => {
            let schedule = hdf_schedule(&d)?;
            let split = split_instance(&schedule, &d)?;
            let plots = convert_duals(&split_duals(&split))?;
            let duals = plots.dual_solution(&d);
            let violations = continuous_violations(&plots, &d)?.len() + check_dual_feasibility(&duals, &d).len();
            for s in &plots.steps {
                out.ledger.push(tagged("step", id, trial, s)?);
                out.alpha_plot.push(AlphaPlotRow {
                    instance_id: id.to_string(),
                    job: s.job,
                    start: s.start,
                    end: s.end,
                    density: s.density,
                    split_height: s.split_height,
                    height: s.height,
                    lowered: s.lowered,
                });
            }
            for (t, split_beta, beta) in plots.beta_samples(PLOT_SAMPLES) {
                out.beta_curve.push(BetaCurveRow { instance_id: id.to_string(), t, split_beta, beta });
            }
            out.beta = beta_rows(id, &duals);
            out.report = json!({ "plots": plots, "duals": duals });
            Partial {
                algorithm_cost: fractional_cost(&schedule, &d)?,
                k: curvature_k(d.jobs.iter().map(|j| &j.costs[0])),
                theta: 1.0,
                epsilon: 0.0,
                bound: 1.0,
                dual_objective: plots.objective(),
                dual_violations: violations,
                beta_integral: None,
                benchmark_cost: benchmark_at(&d, config.benchmark, Speed::UNIT)?,
                arrivals: Vec::new(),
            }
        }
        Algorithm::Alg2 => {
            let run = online_single_run(&d, SolveMode::Warm)?;
            let epsilon = config.epsilon.unwrap_or_else(|| default_epsilon(run.k, 1.0));
            let mut slowed = run.duals.clone();
            slowed.epsilon = epsilon;
            let arrivals = run.ledger.iter().map(|a| tagged("arrival", id, trial, a)).collect::<Result<Vec<_>, _>>()?;
            for (a, plan) in run.plans.iter().enumerate() {
                let end = plan.iter().filter_map(|p| p.completion()).max().unwrap_or(0) as f64 * d.delta;
                for t in grid(run.ledger[a].r, end, d.delta) {
                    let beta_hat = beta_hat_single(plan, d.delta, t);
                    out.beta_hat.push(BetaHatRow { instance_id: id.to_string(), arrival: Some(a), machine: 0, t, beta_hat });
                }
            }
            out.beta = beta_rows(id, &run.duals);
            out.report = json!({ "schedule": run.schedule, "duals": run.duals });
            Partial {
                algorithm_cost: run.cost,
                k: run.k,
                theta: 1.0,
                epsilon,
                bound: competitive_bound(run.k, 1.0, epsilon),
                dual_objective: dual_objective_slow(&slowed),
                dual_violations: check_dual_feasibility(&run.duals, &d).len(),
                beta_integral: None,
                benchmark_cost: benchmark_at(&d, config.benchmark, Speed::slowed(epsilon)?)?,
                arrivals,
            }
        }
        Algorithm::Alg3 => {
            let run = online_unrelated_run(&d)?;
            let epsilon = config.epsilon.unwrap_or_else(|| default_epsilon(run.k, run.theta));
            let mut slowed = run.duals.clone();
            slowed.epsilon = epsilon;
            let arrivals = run.ledger.iter().map(|a| tagged("arrival", id, trial, a)).collect::<Result<Vec<_>, _>>()?;
            for state in &run.states {
                for t in grid(0.0, state.makespan() as f64 * d.delta, d.delta) {
                    let beta_hat = beta_hat_machine(state, d.delta, t);
                    out.beta_hat.push(BetaHatRow {
                        instance_id: id.to_string(),
                        arrival: None,
                        machine: state.machine,
                        t,
                        beta_hat,
                    });
                }
            }
            out.beta = beta_rows(id, &run.duals);
            out.report = json!({
                "schedule": run.schedule,
                "duals": run.duals,
                "theta_conservative": run.theta_conservative,
            });
            Partial {
                algorithm_cost: run.cost,
                k: run.k,
                theta: run.theta,
                epsilon,
                bound: competitive_bound(run.k, run.theta, epsilon),
                dual_objective: dual_objective_slow(&slowed),
                dual_violations: check_dual_feasibility(&run.duals, &d).len(),
                beta_integral: None,
                benchmark_cost: benchmark_at(&d, config.benchmark, Speed::slowed(epsilon)?)?,
                arrivals,
            }
        }
        Algorithm::Hrdf => {
            let k = config.exponent as u32;
            let fit = hrdf_run_and_fit(&d, k)?;
            for (job, alpha_hat) in fit.alpha_hat.iter().enumerate() {
                out.ledger.push(tagged("alpha_hat", id, trial, json!({ "job": job, "alpha_hat": alpha_hat }))?);
            }
            let end = fit.schedule.makespan() as f64 * d.delta;
            for t in grid(0.0, end, d.delta) {
                out.beta_hat.push(BetaHatRow { instance_id: id.to_string(), arrival: None, machine: 0, t, beta_hat: fit.beta_at(t) });
            }
            out.report = json!({ "fit": fit });
            Partial {
                algorithm_cost: fit.flow_cost,
                k: k as f64,
                theta: 1.0,
                epsilon: 0.0,
                bound: 1.0,
                dual_objective: fit.alpha_sum,
                dual_violations: 0,
                beta_integral: Some(fit.beta_integral),
                benchmark_cost: fit.beta_integral,
                arrivals: Vec::new(),
            }
        }
    };
    let summary = LedgerSummary {
        instance_id: id.to_string(),
        trial,
        algorithm: config.algorithm,
        benchmark: config.benchmark,
        family: config.family,
        n: d.jobs.len(),
        m: d.machines,
        k: p.k,
        theta: p.theta,
        speed: 1.0 + p.epsilon,
        alg_cost: p.algorithm_cost,
        benchmark_cost: p.benchmark_cost,
        bound: p.bound.is_finite().then_some(p.bound),
        dual_objective: p.dual_objective,
        dual_violations: p.dual_violations,
        beta_integral: p.beta_integral,
    };
    let (ratio, pass) = derive_verdict(&summary, &p.arrivals);
    out.row = Some(SummaryRow {
        instance_id: id.to_string(),
        family: summary.family,
        n: summary.n,
        m: summary.m,
        k: summary.k,
        theta: summary.theta,
        speed: summary.speed,
        alg_cost: summary.alg_cost,
        benchmark: summary.benchmark_cost,
        ratio,
        bound: p.bound,
        pass,
    });
    let report = std::mem::take(&mut out.report);
    out.report = json!({ "summary": summary, "ratio": ratio, "pass": pass, "detail": report });
    out.ledger.extend(p.arrivals);
    out.ledger.push(tagged("summary", id, trial, &summary)?);
    Ok(out)
}

/// All trials of `config`, run in parallel and merged in trial order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Bundle, CliError> {
    config.validate()?;
    let trials = (0..config.trials).into_par_iter().map(|t| run_trial(config, t)).collect::<Result<Vec<_>, _>>()?;
    Ok(Bundle { trials })
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    let mut rows = rows.into_iter().peekable();
    if rows.peek().is_none() {
        return Ok(());
    }
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Writes `ledger.jsonl`, `report.json`, `summary.csv` and the plot CSVs
/// that the algorithm produces.
pub fn write_bundle(bundle: &Bundle, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join("ledger.jsonl");
    let mut w = create(&path)?;
    for line in bundle.trials.iter().flat_map(|t| &t.ledger) {
        serde_json::to_writer(&mut w, line)?;
        w.write_all(b"\n").map_err(|e| CliError::io(&path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;

    let path = dir.join("report.json");
    let mut w = create(&path)?;
    let reports: Vec<&Value> = bundle.trials.iter().map(|t| &t.report).collect();
    serde_json::to_writer_pretty(&mut w, &reports)?;
    w.write_all(b"\n").map_err(|e| CliError::io(&path, e))?;
    w.flush().map_err(|e| CliError::io(&path, e))?;

    write_summary(&dir.join("summary.csv"), &bundle.rows())?;
    write_csv(&dir.join("alpha_plot.csv"), bundle.trials.iter().flat_map(|t| &t.alpha_plot))?;
    write_csv(&dir.join("beta_curve.csv"), bundle.trials.iter().flat_map(|t| &t.beta_curve))?;
    write_csv(&dir.join("beta_hat.csv"), bundle.trials.iter().flat_map(|t| &t.beta_hat))?;
    write_csv(&dir.join("beta.csv"), bundle.trials.iter().flat_map(|t| &t.beta))?;
    Ok(())
}

/// Always written, with a header even when there are no rows.
fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(["instance_id", "family", "n", "m", "K", "theta", "speed", "alg_cost", "benchmark", "ratio", "bound", "pass"])?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Runs every config into `dir/run_XX` and writes a combined `summary.csv`
/// whose instance ids carry the run prefix.
pub fn run_sweep(configs: &[ExperimentConfig], dir: &Path) -> Result<Vec<SummaryRow>, CliError> {
    let mut combined = Vec::new();
    for (i, config) in configs.iter().enumerate() {
        let name = format!("run_{i:02}");
        let bundle = run_experiment(config)?;
        write_bundle(&bundle, &dir.join(&name))?;
        combined.extend(bundle.rows().into_iter().map(|mut r| {
            r.instance_id = format!("{name}/{}", r.instance_id);
            r
        }));
    }
    write_summary(&dir.join("summary.csv"), &combined)?;
    Ok(combined)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerifyOutcome {
    pub rows: usize,
    /// Summary rows whose ratio or verdict disagrees with the ledger.
    pub mismatches: Vec<String>,
    /// Instance ids whose re-derived verdict is a failure.
    pub failures: Vec<String>,
}

impl VerifyOutcome {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty() && self.failures.is_empty()
    }
}

/// Re-derives every summary row of `dir` from `ledger.jsonl` alone.
pub fn verify_dir(dir: &Path) -> Result<VerifyOutcome, CliError> {
    let path = dir.join("ledger.jsonl");
    let file = File::open(&path).map_err(|e| CliError::io(&path, e))?;
    let mut arrivals: BTreeMap<String, Vec<Value>> = BTreeMap::new();
    let mut summaries: BTreeMap<String, LedgerSummary> = BTreeMap::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| CliError::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(&line)?;
        let id = v.get("instance_id").and_then(Value::as_str).unwrap_or_default().to_string();
        match v.get("kind").and_then(Value::as_str) {
            Some("arrival") => arrivals.entry(id).or_default().push(v),
            Some("summary") => {
                summaries.insert(id, serde_json::from_value(v)?);
            }
            _ => {}
        }
    }
    let mut out = VerifyOutcome::default();
    let mut reader = csv::Reader::from_path(dir.join("summary.csv"))?;
    let mut seen = 0;
    for row in reader.deserialize() {
        let row: SummaryRow = row?;
        out.rows += 1;
        let Some(summary) = summaries.get(&row.instance_id) else {
            out.mismatches.push(format!("{}: no ledger summary", row.instance_id));
            continue;
        };
        seen += 1;
        let (ratio, pass) = derive_verdict(summary, arrivals.get(&row.instance_id).map_or(&[], Vec::as_slice));
        if !(ratio == row.ratio || ratio.is_nan() && row.ratio.is_nan()) || pass != row.pass || summary.alg_cost != row.alg_cost || summary.benchmark_cost != row.benchmark {
            out.mismatches.push(format!(
                "{}: ledger gives ratio {ratio} pass {pass}, summary has ratio {} pass {}",
                row.instance_id, row.ratio, row.pass
            ));
        }
        if !pass {
            out.failures.push(row.instance_id.clone());
        }
    }
    if seen != summaries.len() {
        out.mismatches.push(format!("{} ledger summaries but {seen} matching rows", summaries.len()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_epsilon_rounds_up_to_quarters() {
        assert_eq!(default_epsilon(1.0, 1.0), 1.0);
        assert_eq!(default_epsilon(2.0, 1.0), 3.0);
        assert_eq!(default_epsilon(1.9, 1.0), 3.0);
        assert_eq!(default_epsilon(2.0, 1.5), 5.0);
        assert_eq!(default_epsilon(1.01, 1.0), 1.25);
    }

    #[test]
    fn ratio_conventions() {
        assert_eq!(ratio_of(0.0, 0.0), 1.0);
        assert_eq!(ratio_of(1.0, 0.0), f64::INFINITY);
        assert_eq!(ratio_of(3.0, 2.0), 1.5);
    }

    #[test]
    fn failed_audit_fails_the_trial() {
        let summary = LedgerSummary {
            instance_id: "x".into(),
            trial: 0,
            algorithm: Algorithm::Alg2,
            benchmark: BenchmarkChoice::Oracle,
            family: CostKind::Linear,
            n: 1,
            m: 1,
            k: 1.0,
            theta: 1.0,
            speed: 2.0,
            alg_cost: 1.0,
            benchmark_cost: 1.0,
            bound: Some(2.0),
            dual_objective: 0.5,
            dual_violations: 0,
            beta_integral: None,
        };
        let good = json!({ "delta_alg": 1.0, "lemma3_ok": true, "lemma5_ok": true, "k_audit": true });
        let bad = json!({ "delta_alg": 1.0, "lemma3_ok": true, "lemma5_ok": false, "k_audit": true });
        assert_eq!(derive_verdict(&summary, &[good]), (1.0, true));
        assert_eq!(derive_verdict(&summary, &[bad]), (1.0, false));
        assert!(!derive_verdict(&summary, &[]).1);
    }
}
