//! Dual feasibility checks, slower benchmarks and competitive reports.

use serde::Serialize;

use crate::costfn::d_constant;
use crate::error::{Error, Result};
use crate::flow_oracle::{offline_value, Speed};
use crate::model::{DiscreteInstance, Schedule};
use crate::single_machine::SingleRun;
use crate::unrelated::{lp_lower_bound, UnrelatedRun};

/// Slack below `-FEASIBILITY_TOL * (1 + |α/v|)` is a violation.
pub const FEASIBILITY_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DualForm {
    /// `α_j / v_j <= β_t + g_j(t)`.
    Plain,
    /// `α_j / v_ij <= β_it + g_ij(t) + d_ij`.
    Offset,
}

/// Dual solution on the slot grid. `beta[i][t]` is the average density of
/// `β_i` over slot `t`; slots past the end of a row carry zero.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualSolution {
    pub delta: f64,
    pub epsilon: f64,
    /// Per job index.
    pub alpha: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
    pub form: DualForm,
}

impl DualSolution {
    pub fn zero(inst: &DiscreteInstance, form: DualForm) -> Self {
        DualSolution {
            delta: inst.delta,
            epsilon: 0.0,
            alpha: vec![0.0; inst.jobs.len()],
            beta: vec![Vec::new(); inst.machines],
            form,
        }
    }

    pub fn beta_at(&self, machine: usize, slot: usize) -> f64 {
        self.beta[machine].get(slot).copied().unwrap_or(0.0)
    }

    /// `Σ_i ∫ β_i`.
    pub fn beta_integral(&self) -> f64 {
        self.beta.iter().flatten().sum::<f64>() * self.delta
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub machine: usize,
    pub job: usize,
    pub slot: usize,
    pub slack: f64,
}

/// All constraints of the slot-averaged dual with slack below tolerance.
///
/// Constraints past the last stored β are dominated by the first such slot
/// because every `g` is nondecreasing, so the scan stops there.
pub fn check_dual_feasibility(duals: &DualSolution, inst: &DiscreteInstance) -> Vec<Violation> {
    let mut out = Vec::new();
    for (i, row) in duals.beta.iter().enumerate() {
        for (j, job) in inst.jobs.iter().enumerate() {
            let v = inst.length(i, j);
            let lhs = duals.alpha[j] / v;
            let d = match duals.form {
                DualForm::Plain => 0.0,
                DualForm::Offset => d_constant(&job.costs[i], inst.time(job.release), v),
            };
            let tol = FEASIBILITY_TOL * (1.0 + lhs.abs());
            let last = row.len().max(job.release);
            for t in job.release..=last {
                let g = inst.slot_cost(i, j, t) / inst.delta;
                let slack = duals.beta_at(i, t) + g + d - lhs;
                if slack < -tol {
                    out.push(Violation { machine: i, job: j, slot: t, slack });
                }
            }
        }
    }
    for (i, row) in duals.beta.iter().enumerate() {
        for (t, &b) in row.iter().enumerate() {
            if b < -FEASIBILITY_TOL {
                out.push(Violation { machine: i, job: usize::MAX, slot: t, slack: b });
            }
        }
    }
    for (j, &a) in duals.alpha.iter().enumerate() {
        if a < -FEASIBILITY_TOL {
            out.push(Violation { machine: usize::MAX, job: j, slot: usize::MAX, slack: a });
        }
    }
    out
}

/// `Σα - ∫β / (1 + ε)`.
pub fn dual_objective_slow(duals: &DualSolution) -> f64 {
    duals.alpha.iter().sum::<f64>() - duals.beta_integral() / (1.0 + duals.epsilon)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkKind {
    /// Offline optimum of the slowed single machine.
    Oracle,
    /// The LP relaxation on slowed unrelated machines.
    Lp,
}

/// Offline benchmark with every machine slowed to `1/(1+ε)`: the flow oracle
/// for one machine, the LP lower bound otherwise.
pub fn slower_benchmark(inst: &DiscreteInstance, epsilon: f64) -> Result<(BenchmarkKind, f64)> {
    let speed = Speed::slowed(epsilon)?;
    if inst.machines == 1 {
        Ok((BenchmarkKind::Oracle, offline_value(inst, speed)?))
    } else {
        Ok((BenchmarkKind::Lp, lp_lower_bound(inst, speed)?))
    }
}

pub enum RunOutput<'a> {
    Single(&'a SingleRun),
    Unrelated(&'a UnrelatedRun),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompetitiveReport {
    pub alg_cost: f64,
    pub benchmark: BenchmarkKind,
    pub benchmark_cost: f64,
    /// `Σα - ∫β / (1+ε)` of the run's duals.
    pub dual_objective: f64,
    pub weak_duality: bool,
    /// `1 + ε`.
    pub speed_factor: f64,
    pub ratio: f64,
    pub bound: f64,
    pub pass: bool,
    #[serde(rename = "K")]
    pub k: f64,
    pub theta: f64,
    pub arrivals: usize,
    /// Arrivals failing any per-arrival audit.
    pub audit_failures: usize,
    pub postponement_violations: usize,
    pub dual_violations: usize,
}

/// `θ(1+ε) / (1+ε-Kθ)`, infinite when `1+ε <= Kθ`. It is `2` on one machine
/// (`θ = 1`) at `1+ε = 2K` and `2θ` on unrelated machines at `1+ε = 2Kθ`.
pub fn competitive_bound(k: f64, theta: f64, epsilon: f64) -> f64 {
    let s = 1.0 + epsilon;
    if s > k * theta {
        theta * s / (s - k * theta)
    } else {
        f64::INFINITY
    }
}

/// Ratio of the run's cost to the slowed benchmark against [`competitive_bound`].
pub fn competitive_report(run: RunOutput<'_>, inst: &DiscreteInstance, epsilon: f64) -> Result<CompetitiveReport> {
    let (kind, benchmark_cost) = slower_benchmark(inst, epsilon)?;
    let (alg_cost, duals, k, theta, bound, arrivals, audit_failures, postponement_violations) = match run {
        RunOutput::Single(r) => {
            let bad = r.ledger.iter().filter(|a| !(a.lemma3_ok && a.lemma5_ok)).count();
            let post = r.ledger.iter().filter(|a| !a.postponement_ok).count();
            (r.cost, &r.duals, r.k, 1.0, competitive_bound(r.k, 1.0, epsilon), r.ledger.len(), bad, post)
        }
        RunOutput::Unrelated(r) => {
            let bad = r
                .ledger
                .iter()
                .filter(|a| {
                    let theta_ok = a.delta_alg <= a.theta * a.alpha_n + 1e-9 * (1.0 + a.delta_alg.abs());
                    !(theta_ok && a.k_audit && a.beta_monotone && a.dual_feasible)
                })
                .count();
            (r.cost, &r.duals, r.k, r.theta, competitive_bound(r.k, r.theta, epsilon), r.ledger.len(), bad, 0)
        }
    };
    let mut slowed = duals.clone();
    slowed.epsilon = epsilon;
    let dual_objective = dual_objective_slow(&slowed);
    let ratio = if benchmark_cost > 0.0 { alg_cost / benchmark_cost } else if alg_cost > 0.0 { f64::INFINITY } else { 1.0 };
    Ok(CompetitiveReport {
        alg_cost,
        benchmark: kind,
        benchmark_cost,
        dual_objective,
        weak_duality: dual_objective <= benchmark_cost + FEASIBILITY_TOL * (1.0 + benchmark_cost.abs()),
        speed_factor: 1.0 + epsilon,
        ratio,
        bound,
        pass: ratio <= bound * (1.0 + RATIO_TOL),
        k,
        theta,
        arrivals,
        audit_failures,
        postponement_violations,
        dual_violations: check_dual_feasibility(duals, inst).len(),
    })
}

/// Multiplicative slack on the competitive bound.
pub const RATIO_TOL: f64 = 1e-6;

/// One constant piece of the alive set: on `[start, end)` the curve is
/// `Σ k w (C - t)^{k-1}` over the listed `(w, C)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HrdfSegment {
    pub start: f64,
    pub end: f64,
    pub terms: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HrdfReport {
    pub k: u32,
    pub schedule: Schedule,
    pub beta_hat: Vec<HrdfSegment>,
    /// Per job index, in arrival order of assignment.
    pub alpha_hat: Vec<f64>,
    pub beta_integral: f64,
    pub alpha_sum: f64,
    pub flow_cost: f64,
    /// `|∫β̂ - Σα̂| <= tol (1 + Σα̂)`.
    pub identity_ok: bool,
    /// Both sides equal the integral flow cost within the same tolerance.
    pub flow_ok: bool,
}

impl HrdfReport {
    pub fn beta_at(&self, t: f64) -> f64 {
        let k = self.k as f64;
        self.beta_hat
            .iter()
            .find(|s| s.start <= t && t < s.end)
            .map_or(0.0, |s| s.terms.iter().filter(|&&(_, c)| t < c).map(|&(w, c)| k * w * (c - t).powf(k - 1.0)).sum())
    }
}

/// Tolerance of the HRDF area identity.
pub const HRDF_TOL: f64 = 1e-6;

/// Projected completion slots when HRDF runs on from `from` with no arrivals.
fn hrdf_project(weights: &[f64], residual: &[usize], from: usize) -> Vec<Option<usize>> {
    let mut alive: Vec<usize> = (0..residual.len()).filter(|&j| residual[j] > 0).collect();
    // With no arrivals the running job's residual density only grows, so
    // jobs finish one after another in residual-density order.
    alive.sort_by(|&a, &b| {
        let (da, db) = (weights[a] / residual[a] as f64, weights[b] / residual[b] as f64);
        db.total_cmp(&da).then(a.cmp(&b))
    });
    let mut out = vec![None; residual.len()];
    let mut t = from;
    for j in alive {
        t += residual[j];
        out[j] = Some(t);
    }
    out
}

/// Runs highest residual density first on machine 0 for costs `w_j (t - r_j)^k`
/// and fits `β̂_t = Σ ĝ'(C - t)` and `α̂_n = Δ_n(Alg)` to it.
pub fn hrdf_run_and_fit(inst: &DiscreteInstance, k: u32) -> Result<HrdfReport> {
    let n = inst.jobs.len();
    let kf = k as f64;
    let mut weights = Vec::with_capacity(n);
    for job in &inst.jobs {
        let g = &job.costs[0];
        if (g.shift() - inst.time(job.release)).abs() > 1e-9 * (1.0 + g.shift()) {
            return Err(Error::InvalidCost(format!("job {} cost is not shifted to its release", job.id)));
        }
        weights.push(g.value(g.shift() + 1.0));
    }
    let flow = |j: usize, c: usize| weights[j] * (inst.time(c) - inst.time(inst.jobs[j].release)).powi(k as i32);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&j| (inst.jobs[j].release, j));
    let mut residual = vec![0usize; n];
    let mut schedule = Schedule::new(inst.delta, 1);
    let mut alpha_hat = vec![0.0; n];
    let mut segments: Vec<HrdfSegment> = Vec::new();
    let mut clock = 0usize;
    let mut projected: Vec<Option<usize>> = vec![None; n];

    let advance = |residual: &mut [usize], schedule: &mut Schedule, from: usize, to: usize| {
        for t in from..to {
            let pick = (0..n)
                .filter(|&j| residual[j] > 0)
                .max_by(|&a, &b| {
                    (weights[a] / residual[a] as f64).total_cmp(&(weights[b] / residual[b] as f64)).then(b.cmp(&a))
                });
            match pick {
                Some(j) => {
                    schedule.set(0, t, Some(j));
                    residual[j] -= 1;
                }
                None => break,
            }
        }
    };

    for (idx, &j) in order.iter().enumerate() {
        let r = inst.jobs[j].release;
        advance(&mut residual, &mut schedule, clock, r);
        clock = r;
        // Alive jobs still follow the projection made at the previous arrival.
        let before: f64 = (0..n).filter(|&l| residual[l] > 0).map(|l| flow(l, projected[l].unwrap())).sum();
        residual[j] = inst.jobs[j].lengths[0];
        let next = hrdf_project(&weights, &residual, r);
        let after: f64 = (0..n).filter(|&l| residual[l] > 0).map(|l| flow(l, next[l].unwrap())).sum();
        alpha_hat[j] = after - before;
        for l in 0..n {
            if residual[l] > 0 {
                projected[l] = next[l];
            }
        }
        let end = order.get(idx + 1).map_or(f64::INFINITY, |&m| inst.time(inst.jobs[m].release));
        let terms = (0..n).filter(|&l| residual[l] > 0).map(|l| (weights[l], inst.time(next[l].unwrap()))).collect();
        segments.push(HrdfSegment { start: inst.time(r), end, terms });
    }
    advance(&mut residual, &mut schedule, clock, usize::MAX);

    let beta_integral = segments
        .iter()
        .flat_map(|s| {
            s.terms.iter().map(move |&(w, c)| {
                let hi = s.end.min(c);
                if hi > s.start {
                    w * ((c - s.start).powf(kf) - (c - hi).powf(kf))
                } else {
                    0.0
                }
            })
        })
        .sum();
    let alpha_sum: f64 = alpha_hat.iter().sum();
    let flow_cost: f64 = (0..n).map(|j| flow(j, schedule.completion(j).unwrap())).sum();
    let close = |a: f64, b: f64| (a - b).abs() <= HRDF_TOL * (1.0 + b.abs());
    Ok(HrdfReport {
        k,
        schedule,
        beta_hat: segments,
        alpha_hat,
        beta_integral,
        alpha_sum,
        flow_cost,
        identity_ok: close(beta_integral, alpha_sum),
        flow_ok: close(alpha_sum, flow_cost) && close(beta_integral, flow_cost),
    })
}
