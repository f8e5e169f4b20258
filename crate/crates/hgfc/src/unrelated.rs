//! Dispatch-and-insert scheduling on unrelated machines, per-machine β̂ curves
//! and the LP lower bound.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use serde::Serialize;

use crate::costfn::{curvature_k, d_constant, golden_section, stretch_theta, stretch_theta_conservative, CostFunction};
use crate::error::{Error, Result};
use crate::flow_oracle::Speed;
use crate::model::{beta_hat, beta_hat_integral, plan_cost, DiscreteInstance, PlannedJob, Schedule};
use crate::verify::{check_dual_feasibility, DualForm, DualSolution};

const EPS: f64 = 1e-9;

/// Planned intervals of one machine, past and future, in slots.
#[derive(Clone, Debug, PartialEq)]
pub struct MachineState {
    pub machine: usize,
    pub plan: Vec<PlannedJob>,
}

impl MachineState {
    pub fn new(machine: usize) -> Self {
        MachineState { machine, plan: Vec::new() }
    }

    /// First slot after all planned work.
    pub fn makespan(&self) -> usize {
        self.plan.iter().filter_map(PlannedJob::completion).max().unwrap_or(0)
    }

    /// Interval endpoints in increasing order.
    pub fn breakpoints(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.plan.iter().flat_map(|p| p.intervals.iter().flat_map(|&(a, b)| [a, b])).collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// `β̂_{it}`: total variation of each planned job's cost over its intervals from `t` on.
pub fn beta_hat_machine(state: &MachineState, delta: f64, t: f64) -> f64 {
    beta_hat(&state.plan, delta, t)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DispatchDecision {
    pub machine: usize,
    /// Insertion slot.
    pub t_star: usize,
    /// Infimum of the dual objective over machines and continuous `t >= r_n`.
    pub alpha_n: f64,
    /// The dual objective at `(machine, t_star)`.
    pub alpha_at_t_star: f64,
}

/// `(β̂_{it} + g_{in}(t) + d_{in}) v_{in}`.
fn dispatch_objective(state: &MachineState, inst: &DiscreteInstance, job: usize, t: f64) -> f64 {
    let i = state.machine;
    let g = &inst.jobs[job].costs[i];
    let v = inst.length(i, job);
    let d = d_constant(g, inst.time(inst.jobs[job].release), v);
    (beta_hat_machine(state, inst.delta, t) + g.value(t) + d) * v
}

/// Picks the machine and grid insertion time minimizing the dual objective;
/// ties go to the lowest machine, then the earliest slot.
pub fn dispatch(inst: &DiscreteInstance, job: usize, states: &[MachineState]) -> DispatchDecision {
    let r = inst.jobs[job].release;
    let mut best: Option<DispatchDecision> = None;
    let mut inf = f64::INFINITY;
    for state in states {
        let end = state.makespan().max(r);
        for t in r..=end {
            let value = dispatch_objective(state, inst, job, inst.time(t));
            inf = inf.min(value);
            if best.as_ref().is_none_or(|b| value < b.alpha_at_t_star) {
                best = Some(DispatchDecision { machine: state.machine, t_star: t, alpha_n: 0.0, alpha_at_t_star: value });
            }
            if t < end {
                // The objective is smooth inside a slot; refine between grid points.
                let f = |x: f64| dispatch_objective(state, inst, job, x);
                let (_, m) = golden_section(inst.time(t), inst.time(t + 1), f);
                inf = inf.min(m);
            }
        }
    }
    let mut decision = best.expect("at least one machine");
    decision.alpha_n = inf.min(decision.alpha_at_t_star);
    decision
}

/// Runs `job` over `[t_star, t_star + v)` and shifts every later fragment right by `v`.
pub fn insert_job(
    state: &MachineState,
    delta: f64,
    job: usize,
    cost: CostFunction,
    t_star: f64,
    v: usize,
) -> Result<MachineState> {
    let q = t_star / delta;
    if !(q >= 0.0 && (q - q.round()).abs() <= 1e-9 * q.abs().max(1.0)) {
        return Err(Error::OffGrid { t: t_star });
    }
    let s = q.round() as usize;
    let mut plan: Vec<PlannedJob> = state
        .plan
        .iter()
        .map(|p| {
            let mut intervals = Vec::with_capacity(p.intervals.len() + 1);
            for &(a, b) in &p.intervals {
                if b <= s {
                    intervals.push((a, b));
                } else if a >= s {
                    intervals.push((a + v, b + v));
                } else {
                    intervals.push((a, s));
                    intervals.push((s + v, b + v));
                }
            }
            PlannedJob { job: p.job, cost: p.cost.clone(), intervals }
        })
        .collect();
    plan.push(PlannedJob { job, cost, intervals: vec![(s, s + v)] });
    Ok(MachineState { machine: state.machine, plan })
}

/// Per-arrival ledger of the unrelated-machine algorithm.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnrelatedRecord {
    pub job: usize,
    pub machine: usize,
    pub t_star: f64,
    pub alpha_n: f64,
    /// New interval cost plus the shift penalty of later fragments.
    pub delta_alg: f64,
    /// `Δ_n(Alg) / α_n`.
    pub theta_audit: f64,
    /// θ with `v` bound to the inserted length.
    pub theta: f64,
    /// `∫_{r_n} (β̂' - β̂)` on the chosen machine.
    pub beta_increase: f64,
    /// `∫(β̂' - β̂) <= K Δ_n(Alg)`.
    #[serde(rename = "K_audit")]
    pub k_audit: bool,
    /// `β̂' >= β̂` at every grid point from `r_n` on.
    pub beta_monotone: bool,
    pub dual_feasible: bool,
}

#[derive(Clone, Debug)]
pub struct UnrelatedRun {
    pub schedule: Schedule,
    pub duals: DualSolution,
    pub ledger: Vec<UnrelatedRecord>,
    pub cost: f64,
    pub k: f64,
    /// Largest per-arrival θ.
    pub theta: f64,
    /// θ with every length probed from the smallest one on.
    pub theta_conservative: f64,
    pub states: Vec<MachineState>,
}

/// `∫_{t*}^{t*+v} g_n + Σ_ℓ ∫_{I_ℓ ∩ [t*, ∞)} (g_ℓ(t + v) - g_ℓ(t))`.
fn insertion_cost(state: &MachineState, delta: f64, cost: &CostFunction, t_star: usize, v: usize) -> f64 {
    let (ts, vt) = (t_star as f64 * delta, v as f64 * delta);
    let mut total = cost.definite_integral(ts, ts + vt);
    for p in &state.plan {
        for &(a, b) in &p.intervals {
            let (x, y) = ((a as f64 * delta).max(ts), b as f64 * delta);
            if y > x {
                total += p.cost.definite_integral(x + vt, y + vt) - p.cost.definite_integral(x, y);
            }
        }
    }
    total
}

fn refresh_beta(row: &mut Vec<f64>, state: &MachineState, delta: f64, from: usize) {
    let end = state.makespan().max(from);
    row.resize(end, 0.0);
    for (t, b) in row.iter_mut().enumerate().skip(from) {
        let lo = t as f64 * delta;
        *b = beta_hat_integral(&state.plan, delta, lo, lo + delta) / delta;
    }
}

/// Online dispatch-and-insert over all machines.
pub fn online_unrelated_run(inst: &DiscreteInstance) -> Result<UnrelatedRun> {
    for (j, job) in inst.jobs.iter().enumerate() {
        for (i, g) in job.costs.iter().enumerate() {
            if !g.is_convex() {
                return Err(Error::NonConvexCost { job: j, machine: i });
            }
        }
    }
    let n = inst.jobs.len();
    let all_costs = || inst.jobs.iter().flat_map(|j| j.costs.iter());
    let k_const = curvature_k(all_costs());
    let horizon = inst.time(inst.horizon).max(inst.delta);
    let lengths: Vec<f64> = (0..n).flat_map(|j| (0..inst.machines).map(move |i| (i, j))).map(|(i, j)| inst.length(i, j)).collect();
    let theta_conservative = if lengths.is_empty() { 1.0 } else { stretch_theta_conservative(all_costs(), &lengths, horizon)? };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&j| (inst.jobs[j].release, j));
    let mut states: Vec<MachineState> = (0..inst.machines).map(MachineState::new).collect();
    let mut duals = DualSolution::zero(inst, DualForm::Offset);
    let mut ledger = Vec::with_capacity(n);
    let mut theta_run: f64 = 1.0;

    for &j in &order {
        let r = inst.jobs[j].release;
        let rt = inst.time(r);
        let decision = dispatch(inst, j, &states);
        let i = decision.machine;
        let v = inst.jobs[j].lengths[i];
        let cost = inst.jobs[j].costs[i].clone();
        let old = states[i].clone();
        let new = insert_job(&old, inst.delta, j, cost.clone(), inst.time(decision.t_star), v)?;

        let delta_alg = insertion_cost(&old, inst.delta, &cost, decision.t_star, v);
        let beta_increase = beta_hat_integral(&new.plan, inst.delta, rt, f64::INFINITY)
            - beta_hat_integral(&old.plan, inst.delta, rt, f64::INFINITY);
        let beta_monotone = (r..=new.makespan()).all(|t| {
            let (a, b) = (beta_hat_machine(&new, inst.delta, inst.time(t)), beta_hat_machine(&old, inst.delta, inst.time(t)));
            a >= b - EPS * (1.0 + b.abs())
        });
        let machine_costs: Vec<&CostFunction> = new.plan.iter().map(|p| &p.cost).collect();
        let theta = stretch_theta(machine_costs, &[inst.length(i, j)], horizon)?;
        theta_run = theta_run.max(theta);

        duals.alpha[j] = decision.alpha_n;
        refresh_beta(&mut duals.beta[i], &new, inst.delta, r);
        states[i] = new;
        let dual_feasible = check_dual_feasibility(&duals, inst).is_empty();

        ledger.push(UnrelatedRecord {
            job: inst.jobs[j].id,
            machine: i,
            t_star: inst.time(decision.t_star),
            alpha_n: decision.alpha_n,
            delta_alg,
            theta_audit: if decision.alpha_n > 0.0 { delta_alg / decision.alpha_n } else { 0.0 },
            theta,
            beta_increase,
            k_audit: beta_increase <= k_const * delta_alg + EPS * (1.0 + delta_alg.abs()),
            beta_monotone,
            dual_feasible,
        });
    }

    let mut schedule = Schedule::new(inst.delta, inst.machines);
    for state in &states {
        for p in &state.plan {
            for &(a, b) in &p.intervals {
                for t in a..b {
                    schedule.set(state.machine, t, Some(p.job));
                }
            }
        }
    }
    let cost = states.iter().map(|s| plan_cost(&s.plan, inst.delta)).sum();
    Ok(UnrelatedRun { schedule, duals, ledger, cost, k: k_const, theta: theta_run, theta_conservative, states })
}

/// Optimal value of the slot-discretized relaxation
/// `min Σ ∫ (g_ij + d_ij) x_ij` with `Σ_i ∫ x_ij / v_ij >= 1` and `Σ_j x_ij <= speed`.
///
/// Jobs may split across machines. The horizon fits all work serially on any
/// one machine after the last release, so later slots are never needed.
pub fn lp_lower_bound(inst: &DiscreteInstance, speed: Speed) -> Result<f64> {
    if inst.jobs.is_empty() {
        return Ok(0.0);
    }
    let s = speed.value();
    let cap = s * inst.delta;
    let work: usize = inst.jobs.iter().map(|j| *j.lengths.iter().max().unwrap()).sum();
    let horizon = inst.max_release() + (work as f64 / s).ceil() as usize + 1;

    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let mut slot_rows: Vec<Vec<Vec<(minilp::Variable, f64)>>> = vec![vec![Vec::new(); horizon]; inst.machines];
    for (j, job) in inst.jobs.iter().enumerate() {
        let mut cover = Vec::new();
        for i in 0..inst.machines {
            let v = inst.length(i, j);
            let d = d_constant(&job.costs[i], inst.time(job.release), v);
            for t in job.release..horizon {
                // x is the work done in the slot; its cost is the slot average of g plus d.
                let unit = inst.slot_cost(i, j, t) / inst.delta + d;
                let x = problem.add_var(unit, (0.0, cap));
                cover.push((x, 1.0 / v));
                slot_rows[i][t].push((x, 1.0));
            }
        }
        problem.add_constraint(cover, ComparisonOp::Ge, 1.0);
    }
    for row in slot_rows.into_iter().flatten().filter(|r| r.len() > 1) {
        problem.add_constraint(row, ComparisonOp::Le, cap);
    }
    let solution = problem.solve().map_err(|e| Error::Lp(e.to_string()))?;
    Ok(solution.objective())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow_oracle::offline_value;
    use crate::model::{discretize, discretize_unrelated, fractional_cost, Instance, Job, UnrelatedInstance, UnrelatedJob};
    use proptest::prelude::*;

    fn planned(job: usize, g: CostFunction, intervals: Vec<(usize, usize)>) -> PlannedJob {
        PlannedJob { job, cost: g, intervals }
    }

    fn ujob(id: usize, r: f64, lengths: Vec<f64>, costs: Vec<CostFunction>) -> UnrelatedJob {
        UnrelatedJob { id, release: r, lengths, costs }
    }

    #[test]
    fn beta_hat_examples() {
        let empty = MachineState::new(0);
        assert_eq!(beta_hat_machine(&empty, 1.0, 0.0), 0.0);
        let sq = CostFunction::power(1.0, 2.0).unwrap();
        let m = MachineState { machine: 0, plan: vec![planned(0, sq, vec![(2, 4)])] };
        assert_eq!(beta_hat_machine(&m, 1.0, 3.0), 7.0);
        assert_eq!(beta_hat_machine(&m, 1.0, 4.0), 0.0);
        assert_eq!(beta_hat_machine(&m, 1.0, 9.0), 0.0);
    }

    #[test]
    fn dispatch_two_idle_machines() {
        let jobs = vec![ujob(
            0,
            0.0,
            vec![1.0, 1.0],
            vec![CostFunction::linear(1.0).unwrap(), CostFunction::linear(2.0).unwrap()],
        )];
        let d = discretize_unrelated(&UnrelatedInstance::new(1.0, 2, jobs).unwrap(), 0.5).unwrap();
        let states = vec![MachineState::new(0), MachineState::new(1)];
        let dec = dispatch(&d, 0, &states);
        assert_eq!((dec.machine, dec.t_star), (0, 0));
        assert!((dec.alpha_n - 0.5).abs() < 1e-12);
    }

    #[test]
    fn insert_examples() {
        let lin = CostFunction::linear(1.0).unwrap();
        let idle = MachineState::new(0);
        let one = insert_job(&idle, 1.0, 0, lin.clone(), 3.0, 2).unwrap();
        assert_eq!(one.plan[0].intervals, vec![(3, 5)]);
        let a = MachineState { machine: 0, plan: vec![planned(0, lin.clone(), vec![(0, 4)])] };
        let b = insert_job(&a, 1.0, 1, lin.clone(), 2.0, 2).unwrap();
        assert_eq!(b.plan[0].intervals, vec![(0, 2), (4, 6)]);
        assert_eq!(b.plan[1].intervals, vec![(2, 4)]);
        assert!(matches!(insert_job(&a, 1.0, 1, lin, 2.5, 2), Err(Error::OffGrid { .. })));
    }

    #[test]
    fn insertion_cost_matches_plan_difference() {
        let sq = CostFunction::power(1.0, 2.0).unwrap();
        let a = MachineState {
            machine: 0,
            plan: vec![planned(0, sq.clone(), vec![(0, 2), (5, 7)]), planned(1, sq.scaled(2.0), vec![(2, 5)])],
        };
        for t in 0..8 {
            let b = insert_job(&a, 0.5, 2, sq.scaled(3.0), t as f64 * 0.5, 3).unwrap();
            let closed = insertion_cost(&a, 0.5, &sq.scaled(3.0), t, 3);
            assert!((closed - (plan_cost(&b.plan, 0.5) - plan_cost(&a.plan, 0.5))).abs() < 1e-9);
        }
    }

    #[test]
    fn single_job_goes_to_cheapest_offset() {
        let jobs = vec![ujob(
            0,
            1.0,
            vec![2.0, 1.0],
            vec![CostFunction::linear(1.0).unwrap(), CostFunction::linear(1.0).unwrap()],
        )];
        let d = discretize_unrelated(&UnrelatedInstance::new(1.0, 2, jobs).unwrap(), 1.0).unwrap();
        let run = online_unrelated_run(&d).unwrap();
        assert_eq!(run.ledger[0].machine, 1);
        assert_eq!(run.schedule.intervals(0), vec![(1, 2)]);
    }

    #[test]
    fn non_convex_rejected() {
        let jobs = vec![Job { id: 0, release: 0.0, length: 1.0, cost: CostFunction::log(1.0).unwrap() }];
        let d = discretize(&Instance::new(1.0, jobs).unwrap(), 1.0).unwrap();
        assert!(matches!(online_unrelated_run(&d), Err(Error::NonConvexCost { job: 0, machine: 0 })));
    }

    #[test]
    fn lp_single_machine_adds_offsets() {
        let jobs = vec![
            Job { id: 0, release: 0.0, length: 2.0, cost: CostFunction::linear(1.0).unwrap() },
            Job { id: 1, release: 1.0, length: 1.0, cost: CostFunction::linear(3.0).unwrap() },
        ];
        let d = discretize(&Instance::new(1.0, jobs).unwrap(), 1.0).unwrap();
        let offsets: f64 = (0..2).map(|j| d_constant(&d.jobs[j].costs[0], d.time(d.jobs[j].release), d.length(0, j)) * d.length(0, j)).sum();
        let lp = lp_lower_bound(&d, Speed::UNIT).unwrap();
        let rnf = offline_value(&d, Speed::UNIT).unwrap();
        assert!((lp - (rnf + offsets)).abs() < 1e-7, "{lp} vs {}", rnf + offsets);
        let empty = discretize(&Instance::new(1.0, vec![]).unwrap(), 1.0).unwrap();
        assert_eq!(lp_lower_bound(&empty, Speed::UNIT).unwrap(), 0.0);
    }

    fn convex_cost() -> impl Strategy<Value = CostFunction> {
        prop_oneof![
            (0.2..3.0f64).prop_map(|r| CostFunction::linear(r).unwrap()),
            (0.1..2.0f64, 0.0..2.0f64).prop_map(|(a, b)| CostFunction::poly(vec![b, a]).unwrap()),
            (0.2..2.0f64, 1.0..3.0f64).prop_map(|(r, k)| CostFunction::power(r, k).unwrap()),
        ]
    }

    fn unrelated_instance() -> impl Strategy<Value = DiscreteInstance> {
        (2usize..4).prop_flat_map(|m| {
            proptest::collection::vec(
                (0usize..8, proptest::collection::vec((1usize..4, convex_cost()), m)),
                1..7,
            )
            .prop_map(move |specs| {
                let jobs = specs
                    .into_iter()
                    .enumerate()
                    .map(|(j, (r, per))| {
                        let (lengths, costs) = per.into_iter().map(|(v, g)| (v as f64 * 0.5, g)).unzip();
                        ujob(j, r as f64 * 0.5, lengths, costs)
                    })
                    .collect();
                discretize_unrelated(&UnrelatedInstance::new(0.5, m, jobs).unwrap(), 0.5).unwrap()
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn run_invariants(d in unrelated_instance()) {
            let run = online_unrelated_run(&d).unwrap();
            let cost = fractional_cost(&run.schedule, &d).unwrap();
            prop_assert!((cost - run.cost).abs() <= 1e-9 * (1.0 + cost));
            let total: f64 = run.ledger.iter().map(|r| r.delta_alg).sum();
            prop_assert!((total - cost).abs() <= 1e-9 * (1.0 + cost));
            for rec in &run.ledger {
                prop_assert!(rec.beta_monotone, "{:?}", rec);
                prop_assert!(rec.dual_feasible, "{:?}", rec);
                prop_assert!(rec.k_audit, "{:?}", rec);
            }
            let lp = lp_lower_bound(&d, Speed::UNIT).unwrap();
            prop_assert!(lp <= 2.0 * cost + 1e-7 * (1.0 + cost));
        }

        #[test]
        fn dispatch_is_minimal(d in unrelated_instance(), probe in proptest::collection::vec((0usize..3, 0.0..12.0f64), 20)) {
            let run = online_unrelated_run(&d).unwrap();
            // Replay the first arrival against idle machines.
            let first = (0..d.jobs.len()).min_by_key(|&j| (d.jobs[j].release, j)).unwrap();
            let idle: Vec<MachineState> = (0..d.machines).map(MachineState::new).collect();
            let dec = dispatch(&d, first, &idle);
            prop_assert_eq!(dec.alpha_n, run.ledger[0].alpha_n);
            for (i, t) in probe {
                let i = i % d.machines;
                let t = t.max(d.time(d.jobs[first].release));
                prop_assert!(dec.alpha_n <= dispatch_objective(&idle[i], &d, first, t) + 1e-9);
            }
        }
    }
}
