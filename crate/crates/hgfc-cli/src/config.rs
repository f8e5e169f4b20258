//! Experiment configuration and seeded instance generation.

use hgfc::costfn::CostFunction;
use hgfc::model::{UnrelatedInstance, UnrelatedJob};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    /// `ρ t`
    Linear,
    /// `a t² + b t`
    Quadratic,
    /// `ρ t^k`
    Power,
    /// `ρ ln(1 + t)`
    Log,
    /// `ρ (t - r)^k`
    FlowTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Highest density first with split and converted duals.
    Hdf,
    /// Single-machine re-optimization at every release.
    Alg2,
    /// Dispatch and insert on unrelated machines.
    Alg3,
    /// Highest residual density first with the fitted duals.
    Hrdf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkChoice {
    /// Slowed offline optimum from the flow oracle.
    Oracle,
    /// Slowed LP relaxation.
    Lp,
    /// Exhaustive search at unit speed.
    Brute,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: CostKind,
    /// Range of `ρ`, or of `a` for quadratic costs.
    pub density: [f64; 2],
    /// Range of `b` for quadratic costs.
    pub linear: [f64; 2],
    /// `k` for power and flow-time costs.
    pub exponent: f64,
    pub n_jobs: usize,
    pub n_machines: usize,
    pub delta: f64,
    /// Lengths are uniform in `1..=max_length` slots.
    pub max_length: usize,
    /// Mean gap between releases, in slots.
    pub mean_gap: f64,
    /// Release of the first job, in slots.
    pub release_offset: usize,
    /// Defaults to the speed at which the algorithm's bound is stated.
    pub epsilon: Option<f64>,
    pub seed: u64,
    pub trials: usize,
    pub algorithm: Algorithm,
    pub benchmark: BenchmarkChoice,
    /// Used verbatim instead of generated jobs.
    pub jobs: Option<Vec<UnrelatedJob>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            family: CostKind::Quadratic,
            density: [0.05, 1.0],
            linear: [0.0, 2.0],
            exponent: 2.0,
            n_jobs: 6,
            n_machines: 1,
            delta: 1.0,
            max_length: 3,
            mean_gap: 1.5,
            release_offset: 0,
            epsilon: None,
            seed: 1,
            trials: 10,
            algorithm: Algorithm::Alg2,
            benchmark: BenchmarkChoice::Oracle,
            jobs: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: &str| Err(CliError::BadConfig(msg.to_string()));
        let empty = |r: [f64; 2]| !(r[0] <= r[1]) || r[0] < 0.0;
        if empty(self.density) {
            return bad("density range is empty or negative");
        }
        if self.family == CostKind::Quadratic && empty(self.linear) {
            return bad("linear range is empty or negative");
        }
        if self.jobs.is_none() && self.max_length == 0 {
            return bad("max_length must be at least 1");
        }
        if self.n_machines == 0 {
            return bad("n_machines must be at least 1");
        }
        if !(self.delta > 0.0) {
            return bad("delta must be positive");
        }
        if !(self.mean_gap >= 0.0) {
            return bad("mean_gap must be nonnegative");
        }
        if matches!(self.family, CostKind::Power | CostKind::FlowTime) && !(self.exponent >= 1.0) {
            return bad("exponent must be at least 1");
        }
        if self.algorithm == Algorithm::Hrdf && self.exponent.fract() != 0.0 {
            return bad("hrdf needs an integer exponent");
        }
        if self.jobs.is_none() {
            if self.algorithm == Algorithm::Hrdf && self.family != CostKind::FlowTime {
                return bad("hrdf needs flow_time costs");
            }
            if self.algorithm == Algorithm::Hdf && !matches!(self.family, CostKind::Linear | CostKind::Power | CostKind::Log) {
                return bad("hdf needs one cost shape scaled per job: linear, power or log");
            }
        }
        if self.algorithm != Algorithm::Alg3 && self.n_machines != 1 {
            return bad("only alg3 runs on more than one machine");
        }
        if self.benchmark != BenchmarkChoice::Lp && self.n_machines != 1 {
            return bad("oracle and brute benchmarks need one machine");
        }
        if self.benchmark == BenchmarkChoice::Brute && self.epsilon.unwrap_or(0.0) != 0.0 {
            return bad("the brute-force benchmark runs at unit speed only");
        }
        if let Some(e) = self.epsilon {
            if !(e >= 0.0 && e.is_finite()) {
                return bad("epsilon must be finite and nonnegative");
            }
        }
        Ok(())
    }
}

fn draw(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.gen_range(range[0]..range[1])
    }
}

fn draw_cost(rng: &mut ChaCha8Rng, config: &ExperimentConfig, release: f64) -> Result<CostFunction, CliError> {
    let rho = draw(rng, config.density);
    let cost = match config.family {
        CostKind::Linear => CostFunction::linear(rho),
        CostKind::Quadratic => {
            let b = draw(rng, config.linear);
            CostFunction::poly(vec![b, rho])
        }
        CostKind::Power => CostFunction::power(rho, config.exponent),
        CostKind::Log => CostFunction::log(rho),
        CostKind::FlowTime => CostFunction::power(rho, config.exponent).and_then(|g| g.with_shift(release)),
    };
    Ok(cost?)
}

/// Deterministic instance for `trial`: releases follow a Poisson process on
/// the slot grid, lengths are uniform whole slots and coefficients uniform in
/// their ranges. Explicit jobs in the config are passed through unchanged.
pub fn gen_instance(config: &ExperimentConfig, trial: usize) -> Result<UnrelatedInstance, CliError> {
    config.validate()?;
    if let Some(jobs) = &config.jobs {
        return Ok(UnrelatedInstance::new(config.delta, config.n_machines, jobs.clone())?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(trial as u64);
    let gaps = (config.mean_gap > 0.0).then(|| Poisson::new(config.mean_gap).expect("positive mean"));
    let mut slot = config.release_offset as u64;
    let mut jobs = Vec::with_capacity(config.n_jobs);
    for id in 0..config.n_jobs {
        if id > 0 {
            slot += gaps.as_ref().map_or(0, |p| p.sample(&mut rng) as u64);
        }
        let release = slot as f64 * config.delta;
        let mut lengths = Vec::with_capacity(config.n_machines);
        let mut costs = Vec::with_capacity(config.n_machines);
        for _ in 0..config.n_machines {
            lengths.push(rng.gen_range(1..=config.max_length) as f64 * config.delta);
            costs.push(draw_cost(&mut rng, config, release)?);
        }
        jobs.push(UnrelatedJob { id, release, lengths, costs });
    }
    Ok(UnrelatedInstance::new(config.delta, config.n_machines, jobs)?)
}
