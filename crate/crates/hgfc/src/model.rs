//! Instances, slot discretization, schedules and cost accounting.
//!
//! Time is kept as integer slot indices once an instance is discretized; real
//! time is `slot * delta`. The cost charged to a job for one slot is the exact
//! integral of its cost function over that slot, so the cost of any slot-aligned
//! schedule equals its continuous-time fractional objective.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::costfn::CostFunction;
use crate::error::{Error, Result};

/// A single-machine job. `cost` is the scaled `g_j` (integral cost divided by length).
#[derive(Clone, Debug, PartialEq)]
pub struct Job {
    pub id: usize,
    pub release: f64,
    pub length: f64,
    pub cost: CostFunction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnrelatedJob {
    pub id: usize,
    pub release: f64,
    pub lengths: Vec<f64>,
    pub costs: Vec<CostFunction>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub delta: f64,
    pub jobs: Vec<Job>,
}

/// Also the on-disk instance format; single-machine instances have `machines = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance")]
pub struct UnrelatedInstance {
    pub delta: f64,
    pub machines: usize,
    pub jobs: Vec<UnrelatedJob>,
}

#[derive(Deserialize)]
struct RawInstance {
    delta: f64,
    machines: usize,
    jobs: Vec<UnrelatedJob>,
}

impl TryFrom<RawInstance> for UnrelatedInstance {
    type Error = Error;

    fn try_from(raw: RawInstance) -> Result<Self> {
        UnrelatedInstance::new(raw.delta, raw.machines, raw.jobs)
    }
}

fn check_job(id: usize, release: f64, length: f64, cost: &CostFunction) -> Result<()> {
    let bad = |msg: String| Err(Error::InvalidInstance(format!("job {id}: {msg}")));
    if !(release.is_finite() && release >= 0.0) {
        return bad(format!("release {release} must be finite and >= 0"));
    }
    if !(length.is_finite() && length > 0.0) {
        return bad(format!("length {length} must be finite and > 0"));
    }
    if cost.shift() > release + 1e-9 {
        return bad(format!("cost shift {} lies after the release {release}", cost.shift()));
    }
    Ok(())
}

fn check_ids(ids: impl Iterator<Item = usize>) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::InvalidInstance(format!("duplicate job id {id}")));
        }
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if delta.is_finite() && delta > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInstance(format!("delta {delta} must be > 0")))
    }
}

impl Instance {
    pub fn new(delta: f64, jobs: Vec<Job>) -> Result<Self> {
        check_delta(delta)?;
        for j in &jobs {
            check_job(j.id, j.release, j.length, &j.cost)?;
        }
        check_ids(jobs.iter().map(|j| j.id))?;
        Ok(Instance { delta, jobs })
    }

    pub fn to_unrelated(&self) -> UnrelatedInstance {
        UnrelatedInstance {
            delta: self.delta,
            machines: 1,
            jobs: self
                .jobs
                .iter()
                .map(|j| UnrelatedJob {
                    id: j.id,
                    release: j.release,
                    lengths: vec![j.length],
                    costs: vec![j.cost.clone()],
                })
                .collect(),
        }
    }
}

impl UnrelatedInstance {
    pub fn new(delta: f64, machines: usize, jobs: Vec<UnrelatedJob>) -> Result<Self> {
        check_delta(delta)?;
        if machines == 0 {
            return Err(Error::InvalidInstance("at least one machine is required".into()));
        }
        for j in &jobs {
            if j.lengths.len() != machines || j.costs.len() != machines {
                return Err(Error::InvalidInstance(format!(
                    "job {}: expected {machines} lengths and costs",
                    j.id
                )));
            }
            for (v, g) in j.lengths.iter().zip(&j.costs) {
                check_job(j.id, j.release, *v, g)?;
            }
        }
        check_ids(jobs.iter().map(|j| j.id))?;
        Ok(UnrelatedInstance { delta, machines, jobs })
    }

    pub fn to_single(&self) -> Result<Instance> {
        if self.machines != 1 {
            return Err(Error::InvalidInstance(format!(
                "expected a single-machine instance, found {} machines",
                self.machines
            )));
        }
        Instance::new(
            self.delta,
            self.jobs
                .iter()
                .map(|j| Job {
                    id: j.id,
                    release: j.release,
                    length: j.lengths[0],
                    cost: j.costs[0].clone(),
                })
                .collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteJob {
    pub id: usize,
    pub release: usize,
    pub lengths: Vec<usize>,
    pub costs: Vec<CostFunction>,
}

/// A slot-indexed instance. Jobs are addressed by their position in `jobs`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteInstance {
    pub delta: f64,
    pub machines: usize,
    pub horizon: usize,
    pub jobs: Vec<DiscreteJob>,
}

impl DiscreteInstance {
    pub fn time(&self, slot: usize) -> f64 {
        slot as f64 * self.delta
    }

    /// `∫ g_ij` over slot `[slot*delta, (slot+1)*delta)`.
    pub fn slot_cost(&self, machine: usize, job: usize, slot: usize) -> f64 {
        self.jobs[job].costs[machine].definite_integral(self.time(slot), self.time(slot + 1))
    }

    /// Real length `v_ij`.
    pub fn length(&self, machine: usize, job: usize) -> f64 {
        self.jobs[job].lengths[machine] as f64 * self.delta
    }

    pub fn max_release(&self) -> usize {
        self.jobs.iter().map(|j| j.release).max().unwrap_or(0)
    }
}

/// Converts `x` to a whole number of slots of width `delta`.
pub fn to_slots(x: f64, delta: f64, what: &str) -> Result<usize> {
    let q = x / delta;
    let r = q.round();
    if (q - r).abs() > 1e-9 * q.abs().max(1.0) || r < 0.0 {
        return Err(Error::NonCommensurate { what: what.to_string(), value: x, delta });
    }
    Ok(r as usize)
}

pub fn discretize(instance: &Instance, delta: f64) -> Result<DiscreteInstance> {
    discretize_unrelated(&instance.to_unrelated(), delta)
}

pub fn discretize_unrelated(instance: &UnrelatedInstance, delta: f64) -> Result<DiscreteInstance> {
    check_delta(delta)?;
    let mut jobs = Vec::with_capacity(instance.jobs.len());
    for j in &instance.jobs {
        let release = to_slots(j.release, delta, &format!("release of job {}", j.id))?;
        let lengths = j
            .lengths
            .iter()
            .map(|&v| to_slots(v, delta, &format!("length of job {}", j.id)))
            .collect::<Result<Vec<_>>>()?;
        jobs.push(DiscreteJob { id: j.id, release, lengths, costs: j.costs.clone() });
    }
    let work: usize = jobs.iter().map(|j| *j.lengths.iter().max().unwrap()).sum();
    let max_release = jobs.iter().map(|j| j.release).max().unwrap_or(0);
    Ok(DiscreteInstance {
        delta,
        machines: instance.machines,
        horizon: max_release + work,
        jobs,
    })
}

/// Per-machine slot assignments; entries are job indices.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Schedule {
    pub delta: f64,
    pub machines: Vec<Vec<Option<usize>>>,
}

impl Schedule {
    pub fn new(delta: f64, machines: usize) -> Self {
        Schedule { delta, machines: vec![Vec::new(); machines] }
    }

    pub fn set(&mut self, machine: usize, slot: usize, job: Option<usize>) {
        let row = &mut self.machines[machine];
        if row.len() <= slot {
            row.resize(slot + 1, None);
        }
        row[slot] = job;
    }

    pub fn get(&self, machine: usize, slot: usize) -> Option<usize> {
        self.machines[machine].get(slot).copied().flatten()
    }

    /// `(machine, slot)` pairs holding `job`, in order.
    pub fn job_slots(&self, job: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, row) in self.machines.iter().enumerate() {
            for (t, s) in row.iter().enumerate() {
                if *s == Some(job) {
                    out.push((i, t));
                }
            }
        }
        out
    }

    pub fn machine_of(&self, job: usize) -> Option<usize> {
        self.job_slots(job).first().map(|&(i, _)| i)
    }

    /// Maximal runs `[start, end)` of slots holding `job`.
    pub fn intervals(&self, job: usize) -> Vec<(usize, usize)> {
        runs(self.job_slots(job).into_iter().map(|(_, t)| t))
    }

    /// Right boundary of the job's last slot.
    pub fn completion(&self, job: usize) -> Option<usize> {
        self.job_slots(job).last().map(|&(_, t)| t + 1)
    }

    pub fn makespan(&self) -> usize {
        self.machines
            .iter()
            .filter_map(|row| row.iter().rposition(Option::is_some).map(|t| t + 1))
            .max()
            .unwrap_or(0)
    }
}

/// Groups an increasing slot sequence into half-open runs.
pub fn runs(slots: impl IntoIterator<Item = usize>) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    for t in slots {
        match out.last_mut() {
            Some(last) if last.1 == t => last.1 = t + 1,
            _ => out.push((t, t + 1)),
        }
    }
    out
}

/// Checks releases, nonmigration and slot counts; returns per-job slot counts.
fn audit(schedule: &Schedule, instance: &DiscreteInstance, exact: bool) -> Result<Vec<(usize, usize)>> {
    let bad = |msg: String| Err(Error::InfeasibleSchedule(msg));
    if schedule.machines.len() != instance.machines {
        return bad(format!(
            "schedule has {} machines, instance {}",
            schedule.machines.len(),
            instance.machines
        ));
    }
    if (schedule.delta - instance.delta).abs() > 1e-12 {
        return bad(format!("schedule delta {} != instance delta {}", schedule.delta, instance.delta));
    }
    let n = instance.jobs.len();
    let mut count = vec![0usize; n];
    let mut machine: Vec<Option<usize>> = vec![None; n];
    for (i, row) in schedule.machines.iter().enumerate() {
        for (t, s) in row.iter().enumerate() {
            let Some(j) = *s else { continue };
            if j >= n {
                return bad(format!("slot {t} on machine {i} holds unknown job {j}"));
            }
            if t < instance.jobs[j].release {
                return bad(format!("job {j} runs in slot {t} before its release"));
            }
            match machine[j] {
                Some(m) if m != i => return bad(format!("job {j} migrates between machines")),
                _ => machine[j] = Some(i),
            }
            count[j] += 1;
        }
    }
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let Some(i) = machine[j] else {
            if exact {
                return bad(format!("job {j} is never processed"));
            }
            out.push((0, 0));
            continue;
        };
        let need = instance.jobs[j].lengths[i];
        if count[j] > need || (exact && count[j] != need) {
            return bad(format!("job {j} gets {} slots, needs {need}", count[j]));
        }
        out.push((i, count[j]));
    }
    Ok(out)
}

/// `Σ_j ∫ g_j(t) x_j(t) dt` of a feasible schedule.
pub fn fractional_cost(schedule: &Schedule, instance: &DiscreteInstance) -> Result<f64> {
    audit(schedule, instance, true)?;
    let mut total = 0.0;
    for (i, row) in schedule.machines.iter().enumerate() {
        for (t, s) in row.iter().enumerate() {
            if let Some(j) = *s {
                total += instance.slot_cost(i, j, t);
            }
        }
    }
    Ok(total)
}

/// `Σ_j v_j g_j(C_j)`, the unscaled completion-time cost.
pub fn integral_cost(schedule: &Schedule, instance: &DiscreteInstance) -> Result<f64> {
    let counts = audit(schedule, instance, false)?;
    let mut total = 0.0;
    for (j, &(i, c)) in counts.iter().enumerate() {
        let need = instance.jobs[j].lengths[i];
        if c < need {
            let missing = if c == 0 { *instance.jobs[j].lengths.iter().min().unwrap() } else { need - c };
            return Err(Error::IncompleteSchedule { job: j, missing });
        }
        let completion = instance.time(schedule.completion(j).unwrap());
        total += instance.length(i, j) * instance.jobs[j].costs[i].value(completion);
    }
    Ok(total)
}

/// State of the residual problem at a slot boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct RemainingState {
    pub time: usize,
    /// Job index -> residual length in slots.
    pub residuals: BTreeMap<usize, usize>,
}

/// A job's planned processing intervals (in slots) together with its cost.
#[derive(Clone, Debug, PartialEq)]
pub struct PlannedJob {
    pub job: usize,
    pub cost: CostFunction,
    pub intervals: Vec<(usize, usize)>,
}

impl PlannedJob {
    pub fn work(&self) -> usize {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    pub fn completion(&self) -> Option<usize> {
        self.intervals.last().map(|&(_, b)| b)
    }
}

/// Exact fractional cost of a plan.
pub fn plan_cost(plan: &[PlannedJob], delta: f64) -> f64 {
    plan.iter()
        .flat_map(|p| p.intervals.iter().map(move |&(a, b)| p.cost.definite_integral(a as f64 * delta, b as f64 * delta)))
        .sum()
}

/// `β̂_t`: total variation of each job's cost over its planned intervals from `t` on.
pub fn beta_hat(plan: &[PlannedJob], delta: f64, t: f64) -> f64 {
    let mut total = 0.0;
    for p in plan {
        for &(a, b) in &p.intervals {
            let (s, e) = (a as f64 * delta, b as f64 * delta);
            if t < e {
                total += p.cost.value(e) - p.cost.value(s.max(t));
            }
        }
    }
    total
}

/// `∫_lo^hi β̂_t dt`; `hi` may be infinite.
pub fn beta_hat_integral(plan: &[PlannedJob], delta: f64, lo: f64, hi: f64) -> f64 {
    let mut total = 0.0;
    for p in plan {
        let g = &p.cost;
        for &(a, b) in &p.intervals {
            let (s, e) = (a as f64 * delta, b as f64 * delta);
            let flat = (hi.min(s) - lo).max(0.0);
            total += flat * (g.value(e) - g.value(s));
            let (x, y) = (lo.max(s), hi.min(e));
            if y > x {
                total += (y - x) * g.value(e) - g.definite_integral(x, y);
            }
        }
    }
    total
}
