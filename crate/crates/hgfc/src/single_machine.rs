//! Single-machine scheduling: highest density first, split-instance duals and
//! their conversion, and the online re-optimizing algorithm.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::costfn::{curvature_k, CostFunction};
use crate::error::{Error, Result};
use crate::flow_oracle::{
    build_rnf, embed_flow, maximal_beta, solve_min_cost, solve_warm, FlowNetwork, FlowSolution, Speed,
};
use crate::model::{beta_hat, beta_hat_integral, DiscreteInstance, PlannedJob, RemainingState, Schedule};
use crate::verify::{DualForm, DualSolution};

const EPS: f64 = 1e-9;

/// Densities and the shared core of costs of the form `ρ_j g(t)`.
pub fn common_core(inst: &DiscreteInstance) -> Result<(Vec<f64>, CostFunction)> {
    let mut core: Option<CostFunction> = None;
    let mut rho = Vec::with_capacity(inst.jobs.len());
    for job in &inst.jobs {
        let (r, c) = job.costs[0].split_density();
        match &core {
            None => core = Some(c),
            Some(prev) if *prev != c => {
                return Err(Error::MixedCores(format!("job {} has core {:?}, expected {:?}", job.id, c, prev)));
            }
            _ => {}
        }
        rho.push(r);
    }
    Ok((rho, core.unwrap_or(CostFunction::linear(1.0)?)))
}

/// At every slot, run the alive job of highest density; ties go to the lowest id.
pub fn hdf_schedule(inst: &DiscreteInstance) -> Result<Schedule> {
    let (rho, _) = common_core(inst)?;
    let mut left: Vec<usize> = inst.jobs.iter().map(|j| j.lengths[0]).collect();
    let mut schedule = Schedule::new(inst.delta, 1);
    let mut t = 0;
    while left.iter().any(|&x| x > 0) {
        let pick = (0..left.len())
            .filter(|&j| left[j] > 0 && inst.jobs[j].release <= t)
            .max_by(|&a, &b| rho[a].total_cmp(&rho[b]).then(inst.jobs[b].id.cmp(&inst.jobs[a].id)));
        if let Some(j) = pick {
            schedule.set(0, t, Some(j));
            left[j] -= 1;
        }
        t += 1;
    }
    Ok(schedule)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Subjob {
    pub job: usize,
    pub start: f64,
    pub length: f64,
    pub density: f64,
}

impl Subjob {
    pub fn end(&self) -> f64 {
        self.start + self.length
    }
}

/// One subjob per maximal processing run, in time order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplitInstance {
    pub core: CostFunction,
    pub subjobs: Vec<Subjob>,
}

pub fn split_instance(schedule: &Schedule, inst: &DiscreteInstance) -> Result<SplitInstance> {
    let (rho, core) = common_core(inst)?;
    let d = inst.delta;
    let mut subjobs: Vec<Subjob> = Vec::new();
    for (t, s) in schedule.machines[0].iter().enumerate() {
        let Some(j) = *s else { continue };
        match subjobs.last_mut() {
            Some(last) if last.job == j && (last.end() - t as f64 * d).abs() < EPS * d => last.length += d,
            _ => subjobs.push(Subjob { job: j, start: t as f64 * d, length: d, density: rho[j] }),
        }
    }
    Ok(SplitInstance { core, subjobs })
}

/// `offset - density * g(t)` on `[start, end)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BetaPiece {
    pub start: f64,
    pub end: f64,
    pub offset: f64,
    pub density: f64,
}

/// Piecewise β curve over a shared core; zero off the pieces.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BetaCurve {
    pub core: CostFunction,
    pub pieces: Vec<BetaPiece>,
}

impl BetaCurve {
    fn piece_value(&self, p: &BetaPiece, t: f64) -> f64 {
        p.offset - p.density * self.core.value(t)
    }

    pub fn value(&self, t: f64) -> f64 {
        self.pieces
            .iter()
            .find(|p| p.start <= t && t < p.end)
            .map_or(0.0, |p| self.piece_value(p, t))
    }

    pub fn integral_over(&self, a: f64, b: f64) -> f64 {
        self.pieces
            .iter()
            .map(|p| {
                let (x, y) = (p.start.max(a), p.end.min(b));
                if y > x {
                    p.offset * (y - x) - p.density * self.core.definite_integral(x, y)
                } else {
                    0.0
                }
            })
            .sum()
    }

    pub fn integral(&self) -> f64 {
        self.integral_over(f64::NEG_INFINITY, f64::INFINITY)
    }

    /// Average density over each of the first `slots` slots.
    pub fn slot_averages(&self, delta: f64, slots: usize) -> Vec<f64> {
        (0..slots)
            .map(|t| self.integral_over(t as f64 * delta, (t + 1) as f64 * delta) / delta)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Step {
    pub job: usize,
    pub start: f64,
    pub end: f64,
    pub density: f64,
    /// `ᾱ_k / v̄_k` in the split instance.
    pub split_height: f64,
    pub height: f64,
    /// Height decrease applied when the step was visited.
    pub lowered: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlphaBetaPlots {
    pub steps: Vec<Step>,
    pub split_beta: BetaCurve,
    pub beta: BetaCurve,
    pub reference_heights: BTreeMap<usize, f64>,
}

impl AlphaBetaPlots {
    /// `α_j = h_j v_j`, or the split heights summed per job before conversion.
    pub fn alpha(&self, jobs: usize) -> Vec<f64> {
        let mut alpha = vec![0.0; jobs];
        for s in &self.steps {
            alpha[s.job] += s.height * (s.end - s.start);
        }
        alpha
    }

    pub fn objective(&self) -> f64 {
        self.steps.iter().map(|s| s.height * (s.end - s.start)).sum::<f64>() - self.beta.integral()
    }

    /// Slot-grid dual solution of the current plots.
    pub fn dual_solution(&self, inst: &DiscreteInstance) -> DualSolution {
        let slots = self.steps.last().map_or(0, |s| (s.end / inst.delta).round() as usize);
        DualSolution {
            delta: inst.delta,
            epsilon: 0.0,
            alpha: self.alpha(inst.jobs.len()),
            beta: vec![self.beta.slot_averages(inst.delta, slots)],
            form: DualForm::Plain,
        }
    }

    /// `(t, β̄_t, β_t)` at `per_step` evenly spaced points in every step.
    pub fn beta_samples(&self, per_step: usize) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        for s in &self.steps {
            for i in 0..per_step {
                let t = s.start + (s.end - s.start) * i as f64 / per_step as f64;
                out.push((t, self.split_beta.value(t), self.beta.value(t)));
            }
        }
        if let Some(last) = self.steps.last() {
            out.push((last.end, 0.0, 0.0));
        }
        out
    }
}

/// Index ranges of maximal runs of back-to-back subjobs.
fn busy_periods(subjobs: &[Subjob]) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    for (k, s) in subjobs.iter().enumerate() {
        match out.last_mut() {
            Some(p) if (subjobs[p.1 - 1].end() - s.start).abs() <= EPS * (1.0 + s.start.abs()) => p.1 = k + 1,
            _ => out.push((k, k + 1)),
        }
    }
    out
}

/// Closed-form optimal duals of the split instance, one busy period at a time.
pub fn split_duals(split: &SplitInstance) -> AlphaBetaPlots {
    let g = &split.core;
    let n = split.subjobs.len();
    let mut pieces = vec![None; n];
    let mut steps = vec![None; n];
    for (lo, hi) in busy_periods(&split.subjobs) {
        let mut tail = 0.0;
        for k in (lo..hi).rev() {
            let s = &split.subjobs[k];
            let offset = s.density * g.value(s.end()) + tail;
            pieces[k] = Some(BetaPiece { start: s.start, end: s.end(), offset, density: s.density });
            steps[k] = Some(Step {
                job: s.job,
                start: s.start,
                end: s.end(),
                density: s.density,
                split_height: offset,
                height: offset,
                lowered: 0.0,
            });
            tail += s.density * (g.value(s.end()) - g.value(s.start));
        }
    }
    let curve = BetaCurve { core: g.clone(), pieces: pieces.into_iter().map(Option::unwrap).collect() };
    AlphaBetaPlots {
        steps: steps.into_iter().map(Option::unwrap).collect(),
        split_beta: curve.clone(),
        beta: curve,
        reference_heights: BTreeMap::new(),
    }
}

/// Right-to-left lowering of the split duals into duals of the original instance.
pub fn convert_duals(plots: &AlphaBetaPlots) -> Result<AlphaBetaPlots> {
    let mut out = plots.clone();
    let g = plots.beta.core.clone();
    let subjobs: Vec<Subjob> = plots
        .steps
        .iter()
        .map(|s| Subjob { job: s.job, start: s.start, length: s.end - s.start, density: s.density })
        .collect();
    for (lo, hi) in busy_periods(&subjobs) {
        let mut lowered = 0.0;
        for k in (lo..hi).rev() {
            let current = out.beta.pieces[k].offset - lowered;
            let rho = out.steps[k].density;
            let job = out.steps[k].job;
            let target = match out.reference_heights.get(&job) {
                Some(&h) => h,
                None => {
                    // Each piece is offset + (ρ_k - ρ_m) g(t): monotone, so endpoints suffice.
                    let mut h = current;
                    for m in k + 1..hi {
                        let p = &out.beta.pieces[m];
                        for t in [p.start, p.end] {
                            h = h.min(p.offset + (rho - p.density) * g.value(t));
                        }
                    }
                    out.reference_heights.insert(job, h);
                    h
                }
            };
            let delta = current - target;
            let scale = EPS * (1.0 + current.abs());
            if delta < -scale {
                return Err(Error::RaisedStep { job, amount: -delta });
            }
            if target < -scale {
                return Err(Error::NegativeHeight { job, height: target });
            }
            lowered += delta;
            out.beta.pieces[k].offset -= lowered;
            out.steps[k].height = target;
            out.steps[k].lowered = delta;
        }
    }
    Ok(out)
}

/// Pointwise violations `(job, t, slack)` of `α_j / v_j <= β_t + ρ_j g(t)` for
/// `t >= r_j`, exact for the piecewise structure of the curve.
pub fn continuous_violations(plots: &AlphaBetaPlots, inst: &DiscreteInstance) -> Result<Vec<(usize, f64, f64)>> {
    let (rho, g) = common_core(inst)?;
    let alpha = plots.alpha(inst.jobs.len());
    let curve = &plots.beta;
    let mut out = Vec::new();
    for (j, job) in inst.jobs.iter().enumerate() {
        let r = inst.time(job.release);
        let lhs = alpha[j] / inst.length(0, j);
        let tol = 1e-9 * (1.0 + lhs.abs());
        let mut probes: Vec<(f64, f64)> = vec![(r, curve.value(r))];
        for p in &curve.pieces {
            if p.end <= r {
                continue;
            }
            let a = p.start.max(r);
            probes.push((a, curve.piece_value(p, a)));
            probes.push((p.end, curve.piece_value(p, p.end)));
            probes.push((p.end, curve.value(p.end)));
        }
        for (t, b) in probes {
            let slack = b + rho[j] * g.value(t) - lhs;
            if slack < -tol {
                out.push((j, t, slack));
            }
        }
        for p in &curve.pieces {
            if p.offset - p.density * g.value(p.start) < -tol || p.offset - p.density * g.value(p.end) < -tol {
                out.push((usize::MAX, p.start, p.offset - p.density * g.value(p.end)));
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    /// Continue the previous optimal flow along augmenting paths.
    Warm,
    Scratch,
}

/// Per-arrival ledger of the online single-machine algorithm.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArrivalRecord {
    pub job: usize,
    pub r: f64,
    /// `RNF'(r_n) - RNF(r_n)`.
    pub delta_alg: f64,
    pub alpha_new: f64,
    /// `∫_{r_n} (β' - β)` over the replaced tail.
    pub beta_tail_increase: f64,
    pub postponement_ok: bool,
    /// `β'_t >= β_t` on the tail.
    pub lemma3_ok: bool,
    /// `Δ_n(Alg) <= α'_n`.
    pub lemma5_ok: bool,
    /// `∫_{r_n} (β̂' - β̂)`.
    pub beta_hat_increase: f64,
    /// `∫(β̂' - β̂) <= K Δ_n(Alg)`.
    pub k_audit: bool,
}

#[derive(Clone, Debug)]
pub struct SingleRun {
    pub schedule: Schedule,
    pub duals: DualSolution,
    pub ledger: Vec<ArrivalRecord>,
    /// Fractional cost of the final schedule.
    pub cost: f64,
    pub k: f64,
    /// The plan in force after each arrival.
    pub plans: Vec<Vec<PlannedJob>>,
}

fn plan_of(net: &FlowNetwork, sol: &FlowSolution, inst: &DiscreteInstance) -> Vec<PlannedJob> {
    net.jobs
        .iter()
        .enumerate()
        .map(|(k, &j)| PlannedJob { job: j, cost: inst.jobs[j].costs[0].clone(), intervals: sol.intervals(net, k) })
        .collect()
}

/// Sorted slots of each job in a plan.
fn slots_by_job(net: &FlowNetwork, sol: &FlowSolution) -> BTreeMap<usize, Vec<usize>> {
    let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, &j) in net.jobs.iter().enumerate() {
        let slots = (0..net.slots).filter(|&s| sol.flow[k][s] > 0).map(|s| net.start + s).collect();
        out.insert(j, slots);
    }
    out
}

/// Every old job's `q`-th slot in the new plan is no earlier than in the old one.
fn postpones(old: &BTreeMap<usize, Vec<usize>>, new: &BTreeMap<usize, Vec<usize>>) -> bool {
    old.iter().all(|(j, a)| new.get(j).is_some_and(|b| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| y >= x)))
}

/// Online algorithm on machine 0: re-solve the residual problem at every release.
pub fn online_single_run(inst: &DiscreteInstance, mode: SolveMode) -> Result<SingleRun> {
    let n = inst.jobs.len();
    let k_const = curvature_k(inst.jobs.iter().map(|j| &j.costs[0]));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&j| (inst.jobs[j].release, j));

    let mut schedule = Schedule::new(inst.delta, 1);
    let mut beta: Vec<f64> = Vec::new();
    let mut alpha = vec![0.0; n];
    let mut ledger = Vec::with_capacity(n);
    let mut plans = Vec::with_capacity(n);
    let mut plan: Option<(FlowNetwork, FlowSolution)> = None;
    let mut clock = 0;

    let commit = |schedule: &mut Schedule, plan: &Option<(FlowNetwork, FlowSolution)>, from: usize, to: usize| {
        if let Some((net, sol)) = plan {
            let assign = sol.assignment(net);
            for t in from.max(net.start)..to.min(net.start + net.slots) {
                if let Some(j) = assign[t - net.start] {
                    schedule.set(0, t, Some(j));
                }
            }
        }
    };

    for &j in &order {
        let r = inst.jobs[j].release;
        commit(&mut schedule, &plan, clock, r);
        clock = clock.max(r);

        let mut residuals = BTreeMap::new();
        if let Some((net, sol)) = &plan {
            for (k, &job) in net.jobs.iter().enumerate() {
                let left: u64 = (0..net.slots).filter(|&s| net.start + s >= r).map(|s| sol.flow[k][s]).sum();
                if left > 0 {
                    residuals.insert(job, left as usize);
                }
            }
        }
        let old_state = RemainingState { time: r, residuals };
        let old = if old_state.residuals.is_empty() {
            None
        } else {
            let (pnet, psol) = plan.as_ref().unwrap();
            let onet = build_rnf(&old_state, inst, Speed::UNIT)?;
            let osol = FlowSolution::from_flow(&onet, embed_flow(&onet, pnet, psol));
            Some((onet, osol))
        };
        let old_value = old.as_ref().map_or(0.0, |(_, s)| s.value);

        let mut new_state = old_state.clone();
        new_state.residuals.insert(j, inst.jobs[j].lengths[0]);
        let nnet = build_rnf(&new_state, inst, Speed::UNIT)?;
        let nsol = match (mode, &old) {
            (SolveMode::Warm, Some((onet, osol))) => solve_warm(&nnet, Some(&embed_flow(&nnet, onet, osol)))?,
            _ => solve_min_cost(&nnet)?,
        };
        let delta_alg = nsol.value - old_value;
        let duals = maximal_beta(&nnet, &nsol)?;
        let alpha_new = duals.alpha[nnet.node_of(j).unwrap()];

        let end = (r + nnet.slots).max(beta.len());
        let mut lemma3_ok = true;
        let mut beta_tail_increase = 0.0;
        for t in r..end {
            let old_b = beta.get(t).copied().unwrap_or(0.0);
            let new_b = duals.beta_at(t);
            lemma3_ok &= new_b >= old_b - EPS * (1.0 + old_b.abs());
            beta_tail_increase += (new_b - old_b) * inst.delta;
        }
        beta.truncate(r);
        beta.resize(r, 0.0);
        beta.extend_from_slice(&duals.beta);
        alpha[j] = alpha_new;

        let rt = inst.time(r);
        let new_plan = plan_of(&nnet, &nsol, inst);
        let old_plan = old.as_ref().map_or(Vec::new(), |(onet, osol)| plan_of(onet, osol, inst));
        let beta_hat_increase = beta_hat_integral(&new_plan, inst.delta, rt, f64::INFINITY)
            - beta_hat_integral(&old_plan, inst.delta, rt, f64::INFINITY);
        let postponement_ok = old
            .as_ref()
            .is_none_or(|(onet, osol)| postpones(&slots_by_job(onet, osol), &slots_by_job(&nnet, &nsol)));

        ledger.push(ArrivalRecord {
            job: inst.jobs[j].id,
            r: rt,
            delta_alg,
            alpha_new,
            beta_tail_increase,
            postponement_ok,
            lemma3_ok,
            lemma5_ok: delta_alg <= alpha_new + EPS * (1.0 + alpha_new.abs()),
            beta_hat_increase,
            k_audit: beta_hat_increase <= k_const * delta_alg + EPS * (1.0 + delta_alg.abs()),
        });
        plans.push(new_plan);
        plan = Some((nnet, nsol));
    }
    commit(&mut schedule, &plan, clock, usize::MAX);

    let cost = crate::model::fractional_cost(&schedule, inst)?;
    let duals = DualSolution { delta: inst.delta, epsilon: 0.0, alpha, beta: vec![beta], form: DualForm::Plain };
    Ok(SingleRun { schedule, duals, ledger, cost, k: k_const, plans })
}

/// `β̂_t` of a plan: total variation of each cost over its planned intervals from `t` on.
pub fn beta_hat_single(plan: &[PlannedJob], delta: f64, t: f64) -> f64 {
    beta_hat(plan, delta, t)
}
