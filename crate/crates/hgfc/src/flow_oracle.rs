//! Min-cost flow oracle for the slot-discretized single-machine problem.
//!
//! Work is measured in units of `delta / speed.den`. A job with `R` residual
//! slots supplies `R * den` units, and every slot absorbs at most `num` units,
//! so the network runs the machine at speed `num / den`. The per-unit edge cost
//! is the slot integral of `g_j` divided by `den`, which makes the flow value
//! the fractional objective of the schedule it encodes.
//!
//! Duals come from the complementary slackness conditions of the optimal flow,
//! written as a system of difference constraints over the job prices `u_j`, the
//! slot prices `b_t` and a zero anchor. The set of optimal duals is exactly the
//! feasible set of that system, so shortest distances from the anchor give the
//! pointwise largest optimal dual and distances to it give the smallest.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{runs, DiscreteInstance, RemainingState};

/// Largest denominator accepted when reading a speed or `1 + epsilon`.
pub const MAX_DENOMINATOR: u64 = 64;

/// Default work cap of [`brute_force_opt`], in slots.
pub const BRUTE_FORCE_CAP: usize = 10;

const DUALITY_TOL: f64 = 1e-9;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Rational machine speed `num / den`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Speed {
    pub num: u64,
    pub den: u64,
}

fn rational(x: f64) -> Option<(u64, u64)> {
    (1..=MAX_DENOMINATOR).find_map(|den| {
        let num = (x * den as f64).round();
        (num >= 1.0 && (num / den as f64 - x).abs() <= 1e-12 * x.max(1.0)).then_some((num as u64, den))
    })
}

impl Speed {
    pub const UNIT: Speed = Speed { num: 1, den: 1 };

    pub fn new(num: u64, den: u64) -> Result<Speed> {
        if num == 0 || den == 0 {
            return Err(Error::NonIntegralCapacity { speed: num as f64 / den as f64, max_den: MAX_DENOMINATOR });
        }
        let g = gcd(num, den);
        Ok(Speed { num: num / g, den: den / g })
    }

    pub fn from_f64(speed: f64) -> Result<Speed> {
        let (num, den) = rational(speed).ok_or(Error::NonIntegralCapacity { speed, max_den: MAX_DENOMINATOR })?;
        Speed::new(num, den)
    }

    /// The benchmark speed `1 / (1 + epsilon)`.
    pub fn slowed(epsilon: f64) -> Result<Speed> {
        let factor = 1.0 + epsilon;
        let (num, den) = rational(factor).ok_or(Error::NonIntegralCapacity { speed: 1.0 / factor, max_den: MAX_DENOMINATOR })?;
        Speed::new(den, num)
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

/// Bipartite job/slot network. Slot node `s` is absolute slot `start + s`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowNetwork {
    pub speed: Speed,
    pub delta: f64,
    pub start: usize,
    pub slots: usize,
    /// Job indices into the discrete instance.
    pub jobs: Vec<usize>,
    /// Units of work per job.
    pub supply: Vec<u64>,
    pub earliest: Vec<usize>,
    /// Per-unit cost of job node `k` in slot node `s`; infinite before `earliest`.
    pub cost: Vec<Vec<f64>>,
}

impl FlowNetwork {
    fn assemble(inst: &DiscreteInstance, start: usize, entries: &[(usize, usize, usize)], speed: Speed) -> Self {
        let supply: Vec<u64> = entries.iter().map(|&(_, r, _)| r as u64 * speed.den).collect();
        let total: u64 = supply.iter().sum();
        let last = entries.iter().map(|e| e.2).max().unwrap_or(start).max(start);
        // One spare slot past the tightest horizon keeps an unsaturated slot in
        // every network, which pins the slot prices at zero there.
        let slots = last - start + total.div_ceil(speed.num) as usize + 1;
        let den = speed.den as f64;
        let cost = entries
            .iter()
            .map(|&(j, _, e)| {
                (0..slots)
                    .map(|s| {
                        let t = start + s;
                        if t < e {
                            f64::INFINITY
                        } else {
                            inst.slot_cost(0, j, t) / den
                        }
                    })
                    .collect()
            })
            .collect();
        FlowNetwork {
            speed,
            delta: inst.delta,
            start,
            slots,
            jobs: entries.iter().map(|e| e.0).collect(),
            supply,
            earliest: entries.iter().map(|e| e.2).collect(),
            cost,
        }
    }

    pub fn slot_cap(&self) -> u64 {
        self.speed.num
    }

    /// Total capacity of slot nodes minus total supply.
    pub fn spare_capacity(&self) -> i64 {
        self.slots as i64 * self.speed.num as i64 - self.supply.iter().sum::<u64>() as i64
    }

    /// Edge list dump, one `j t cost cap` line per job-slot edge.
    pub fn edge_list(&self) -> String {
        let mut out = String::new();
        for (k, row) in self.cost.iter().enumerate() {
            for (s, c) in row.iter().enumerate() {
                if c.is_finite() {
                    let _ = writeln!(out, "{} {} {} {}", self.jobs[k], self.start + s, c, self.speed.num);
                }
            }
        }
        out
    }

    pub fn node_of(&self, job: usize) -> Option<usize> {
        self.jobs.iter().position(|&j| j == job)
    }
}

/// Residual network of the alive jobs at `state.time`, all released.
pub fn build_rnf(state: &RemainingState, inst: &DiscreteInstance, speed: Speed) -> Result<FlowNetwork> {
    let mut entries = Vec::with_capacity(state.residuals.len());
    for (&j, &r) in &state.residuals {
        if r == 0 {
            return Err(Error::InvalidInstance(format!("job {j} has zero residual")));
        }
        if j >= inst.jobs.len() {
            return Err(Error::InvalidInstance(format!("unknown job index {j}")));
        }
        entries.push((j, r, state.time));
    }
    Ok(FlowNetwork::assemble(inst, state.time, &entries, speed))
}

/// Full offline network with release times, from slot 0.
pub fn build_offline(inst: &DiscreteInstance, speed: Speed) -> FlowNetwork {
    let entries: Vec<_> = inst.jobs.iter().enumerate().map(|(j, d)| (j, d.lengths[0], d.release)).collect();
    FlowNetwork::assemble(inst, 0, &entries, speed)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowSolution {
    /// Units of job node `k` in slot node `s`.
    pub flow: Vec<Vec<u64>>,
    pub value: f64,
}

impl FlowSolution {
    /// Wraps a flow matrix and prices it on `net`.
    pub fn from_flow(net: &FlowNetwork, flow: Vec<Vec<u64>>) -> Self {
        let mut sol = FlowSolution { flow, value: 0.0 };
        sol.recompute_value(net);
        sol
    }

    /// Job index per slot node; meaningful at unit speed.
    pub fn assignment(&self, net: &FlowNetwork) -> Vec<Option<usize>> {
        (0..net.slots)
            .map(|s| (0..net.jobs.len()).find(|&k| self.flow[k][s] > 0).map(|k| net.jobs[k]))
            .collect()
    }

    /// Absolute slot runs carrying flow of job node `k`.
    pub fn intervals(&self, net: &FlowNetwork, k: usize) -> Vec<(usize, usize)> {
        runs((0..net.slots).filter(|&s| self.flow[k][s] > 0).map(|s| net.start + s))
    }

    /// Last slot node with any flow, plus one.
    pub fn makespan(&self) -> usize {
        self.flow.iter().filter_map(|row| row.iter().rposition(|&f| f > 0).map(|s| s + 1)).max().unwrap_or(0)
    }

    fn recompute_value(&mut self, net: &FlowNetwork) {
        self.value = self
            .flow
            .iter()
            .zip(&net.cost)
            .flat_map(|(f, c)| f.iter().zip(c).filter(|(f, _)| **f > 0).map(|(f, c)| *f as f64 * c))
            .sum();
    }
}

#[derive(Clone, Debug)]
struct Edge {
    to: usize,
    cap: u64,
    cost: f64,
    rev: usize,
}

struct Residual {
    adj: Vec<Vec<Edge>>,
    /// Position of the job->slot edge in `adj[job node]`.
    handle: Vec<Vec<usize>>,
}

impl Residual {
    fn add(&mut self, u: usize, v: usize, cap: u64, cost: f64) -> usize {
        let (iu, iv) = (self.adj[u].len(), self.adj[v].len());
        self.adj[u].push(Edge { to: v, cap, cost, rev: iv });
        self.adj[v].push(Edge { to: u, cap: 0, cost: -cost, rev: iu });
        iu
    }

    fn push(&mut self, u: usize, i: usize, f: u64) {
        let Edge { to, rev, .. } = self.adj[u][i];
        self.adj[u][i].cap -= f;
        self.adj[to][rev].cap += f;
    }
}

#[derive(PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Optimal integral flow by successive shortest paths.
pub fn solve_min_cost(net: &FlowNetwork) -> Result<FlowSolution> {
    solve_warm(net, None)
}

/// Successive shortest paths continued from a partial flow that must already be
/// optimal for the supply it routes.
pub fn solve_warm(net: &FlowNetwork, initial: Option<&[Vec<u64>]>) -> Result<FlowSolution> {
    let n = net.jobs.len();
    let nodes = n + net.slots + 2;
    let (src, sink) = (0, nodes - 1);
    let job = |k: usize| 1 + k;
    let slot = |s: usize| 1 + n + s;
    let mut g = Residual { adj: vec![Vec::new(); nodes], handle: vec![Vec::new(); n] };
    let mut src_edge = Vec::with_capacity(n);
    for k in 0..n {
        src_edge.push(g.add(src, job(k), net.supply[k], 0.0));
    }
    for k in 0..n {
        for s in 0..net.slots {
            let c = net.cost[k][s];
            let h = if c.is_finite() { g.add(job(k), slot(s), net.slot_cap(), c) } else { usize::MAX };
            g.handle[k].push(h);
        }
    }
    let mut sink_edge = Vec::with_capacity(net.slots);
    for s in 0..net.slots {
        sink_edge.push(g.add(slot(s), sink, net.slot_cap(), 0.0));
    }

    let mut routed = 0u64;
    if let Some(init) = initial {
        for k in 0..n {
            for s in 0..net.slots {
                let f = init.get(k).and_then(|row| row.get(s)).copied().unwrap_or(0);
                if f == 0 {
                    continue;
                }
                let h = g.handle[k][s];
                if h == usize::MAX || g.adj[job(k)][h].cap < f || g.adj[src][src_edge[k]].cap < f || g.adj[slot(s)][sink_edge[s]].cap < f {
                    return Err(Error::InfeasibleNetwork(format!("warm start flow of job node {k} in slot node {s}")));
                }
                g.push(src, src_edge[k], f);
                g.push(job(k), h, f);
                g.push(slot(s), sink_edge[s], f);
                routed += f;
            }
        }
    }
    let required: u64 = net.supply.iter().sum();

    // Bellman-Ford potentials cope with the negative reverse edges of a warm start.
    let mut pot = vec![f64::INFINITY; nodes];
    pot[src] = 0.0;
    for round in 0..=nodes {
        let mut changed = false;
        for u in 0..nodes {
            if !pot[u].is_finite() {
                continue;
            }
            for e in &g.adj[u] {
                if e.to != src && e.cap > 0 && pot[u] + e.cost < pot[e.to] - 1e-12 * (1.0 + pot[e.to].abs().min(1e300)) {
                    pot[e.to] = pot[u] + e.cost;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
        if round == nodes {
            return Err(Error::NonOptimalInput);
        }
    }

    while routed < required {
        let mut dist = vec![f64::INFINITY; nodes];
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; nodes];
        let mut heap = BinaryHeap::new();
        dist[src] = 0.0;
        heap.push(Item(0.0, src));
        while let Some(Item(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for (i, e) in g.adj[u].iter().enumerate() {
                // Routed supply is never withdrawn, so edges back into the source stay closed.
                if e.to == src || e.cap == 0 || !pot[e.to].is_finite() {
                    continue;
                }
                let reduced = (e.cost + pot[u] - pot[e.to]).max(0.0);
                let nd = d + reduced;
                if nd < dist[e.to] {
                    dist[e.to] = nd;
                    prev[e.to] = Some((u, i));
                    heap.push(Item(nd, e.to));
                }
            }
        }
        if !dist[sink].is_finite() {
            return Err(Error::InfeasibleNetwork(format!(
                "{} of {required} units routed over {} slots",
                routed, net.slots
            )));
        }
        for v in 0..nodes {
            if dist[v].is_finite() {
                pot[v] += dist[v];
            }
        }
        let mut bottleneck = required - routed;
        let mut v = sink;
        while let Some((u, i)) = prev[v] {
            bottleneck = bottleneck.min(g.adj[u][i].cap);
            v = u;
        }
        let mut v = sink;
        while let Some((u, i)) = prev[v] {
            g.push(u, i, bottleneck);
            v = u;
        }
        routed += bottleneck;
    }

    let flow = (0..n)
        .map(|k| {
            (0..net.slots)
                .map(|s| {
                    let h = g.handle[k][s];
                    if h == usize::MAX {
                        0
                    } else {
                        net.slot_cap() - g.adj[job(k)][h].cap
                    }
                })
                .collect()
        })
        .collect();
    Ok(FlowSolution::from_flow(net, flow))
}

/// Carries the part of `prev` at or after `net.start` onto `net`, matching jobs by index.
pub fn embed_flow(net: &FlowNetwork, prev_net: &FlowNetwork, prev: &FlowSolution) -> Vec<Vec<u64>> {
    let mut out = vec![vec![0u64; net.slots]; net.jobs.len()];
    for (pk, &j) in prev_net.jobs.iter().enumerate() {
        let Some(k) = net.node_of(j) else { continue };
        for (ps, &f) in prev.flow[pk].iter().enumerate() {
            let t = prev_net.start + ps;
            if f > 0 && t >= net.start && t - net.start < net.slots {
                out[k][t - net.start] = f;
            }
        }
    }
    out
}

/// Optimal dual of a flow network.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualPotentials {
    pub start: usize,
    pub delta: f64,
    pub speed: Speed,
    pub jobs: Vec<usize>,
    /// `α_j`, so that `α_j / v_j` bounds the average of `β + g_j` over every slot.
    pub alpha: Vec<f64>,
    /// `β_t` as a density per slot node.
    pub beta: Vec<f64>,
    /// Per-unit job prices `u_j`.
    pub price: Vec<f64>,
    /// Per-unit slot prices `b_t`.
    pub slot_price: Vec<f64>,
    pub objective: f64,
}

impl DualPotentials {
    fn from_prices(net: &FlowNetwork, price: Vec<f64>, slot_price: Vec<f64>) -> Self {
        let den = net.speed.den as f64;
        let alpha = price.iter().zip(&net.supply).map(|(u, s)| u * *s as f64).collect();
        let beta = slot_price.iter().map(|b| b * den / net.delta).collect();
        let objective = price.iter().zip(&net.supply).map(|(u, s)| u * *s as f64).sum::<f64>()
            - slot_price.iter().sum::<f64>() * net.slot_cap() as f64;
        DualPotentials {
            start: net.start,
            delta: net.delta,
            speed: net.speed,
            jobs: net.jobs.clone(),
            alpha,
            beta,
            price,
            slot_price,
            objective,
        }
    }

    /// `α_j / v_j` for job node `k`, in cost-density units.
    pub fn alpha_density(&self, k: usize) -> f64 {
        self.price[k] * self.speed.den as f64 / self.delta
    }

    /// β at absolute slot `t`; zero outside the network.
    pub fn beta_at(&self, t: usize) -> f64 {
        t.checked_sub(self.start).and_then(|s| self.beta.get(s)).copied().unwrap_or(0.0)
    }

    pub fn beta_sum(&self) -> f64 {
        self.beta.iter().sum()
    }
}

/// Difference-constraint graph of the optimal duals: node 0 is the anchor,
/// `1..=n` the job prices and `n+1..` the slot prices.
fn slackness_graph(net: &FlowNetwork, sol: &FlowSolution) -> (usize, Vec<(usize, usize, f64)>) {
    let n = net.jobs.len();
    let nodes = 1 + n + net.slots;
    let mut edges = Vec::new();
    for k in 0..n {
        for s in 0..net.slots {
            let c = net.cost[k][s];
            if !c.is_finite() {
                continue;
            }
            // u_k <= b_s + c
            edges.push((1 + n + s, 1 + k, c));
            if sol.flow[k][s] > 0 {
                // b_s <= u_k - c
                edges.push((1 + k, 1 + n + s, -c));
            }
        }
    }
    for s in 0..net.slots {
        // b_s >= 0
        edges.push((1 + n + s, 0, 0.0));
        let load: u64 = sol.flow.iter().map(|row| row[s]).sum();
        if load < net.slot_cap() {
            // b_s <= 0 where the slot is not saturated
            edges.push((0, 1 + n + s, 0.0));
        }
    }
    (nodes, edges)
}

fn shortest_from_anchor(nodes: usize, edges: &[(usize, usize, f64)]) -> Result<Vec<f64>> {
    let mut dist = vec![f64::INFINITY; nodes];
    dist[0] = 0.0;
    for round in 0..=nodes {
        let mut changed = false;
        for &(u, v, w) in edges {
            if dist[u].is_finite() && dist[u] + w < dist[v] - 1e-12 * (1.0 + dist[v].abs().min(1e300)) {
                dist[v] = dist[u] + w;
                changed = true;
            }
        }
        if !changed {
            return Ok(dist);
        }
        if round == nodes {
            break;
        }
    }
    Err(Error::NonOptimalInput)
}

fn prices(net: &FlowNetwork, dist: Vec<f64>, sign: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if dist.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonOptimalInput);
    }
    let n = net.jobs.len();
    let v: Vec<f64> = dist.iter().map(|d| sign * d).collect();
    Ok((v[1..=n].to_vec(), v[n + 1..].iter().map(|b| b.max(0.0)).collect()))
}

fn checked(sol: &FlowSolution, d: DualPotentials) -> Result<DualPotentials> {
    if (d.objective - sol.value).abs() > DUALITY_TOL * (1.0 + sol.value.abs()) {
        return Err(Error::NonOptimalInput);
    }
    Ok(d)
}

/// The optimal dual with pointwise largest slot prices (and job prices).
pub fn maximal_beta(net: &FlowNetwork, sol: &FlowSolution) -> Result<DualPotentials> {
    let (nodes, edges) = slackness_graph(net, sol);
    let (u, b) = prices(net, shortest_from_anchor(nodes, &edges)?, 1.0)?;
    checked(sol, DualPotentials::from_prices(net, u, b))
}

/// The optimal dual with pointwise smallest prices.
pub fn minimal_duals(net: &FlowNetwork, sol: &FlowSolution) -> Result<DualPotentials> {
    let (nodes, edges) = slackness_graph(net, sol);
    let reversed: Vec<_> = edges.iter().map(|&(u, v, w)| (v, u, w)).collect();
    let (u, b) = prices(net, shortest_from_anchor(nodes, &reversed)?, -1.0)?;
    checked(sol, DualPotentials::from_prices(net, u, b))
}

/// The midpoint of the minimal and maximal optimal duals. Optimal duals form a
/// convex set, so this is optimal too, and it removes the one-slot bias either
/// extreme carries.
pub fn extract_duals(net: &FlowNetwork, sol: &FlowSolution) -> Result<DualPotentials> {
    let hi = maximal_beta(net, sol)?;
    let lo = minimal_duals(net, sol)?;
    let mid = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect::<Vec<_>>();
    checked(sol, DualPotentials::from_prices(net, mid(&hi.price, &lo.price), mid(&hi.slot_price, &lo.slot_price)))
}

/// Optimal value of the residual problem at `state` (zero if nothing is alive).
pub fn residual_value(state: &RemainingState, inst: &DiscreteInstance, speed: Speed) -> Result<f64> {
    if state.residuals.is_empty() {
        return Ok(0.0);
    }
    Ok(solve_min_cost(&build_rnf(state, inst, speed)?)?.value)
}

/// Offline optimum with releases at the given speed.
pub fn offline_value(inst: &DiscreteInstance, speed: Speed) -> Result<f64> {
    if inst.jobs.is_empty() {
        return Ok(0.0);
    }
    Ok(solve_min_cost(&build_offline(inst, speed))?.value)
}

/// Exhaustive minimum fractional cost over all slot assignments of machine 0
/// that respect releases, by memoized enumeration.
pub fn brute_force_opt(inst: &DiscreteInstance, cap: usize) -> Result<f64> {
    let work: usize = inst.jobs.iter().map(|j| j.lengths[0]).sum();
    if work > cap {
        return Err(Error::TooLarge { slots: work, cap });
    }
    let horizon = inst.max_release() + work;
    let mut memo = HashMap::new();
    let left: Vec<usize> = inst.jobs.iter().map(|j| j.lengths[0]).collect();
    Ok(enumerate(inst, 0, &mut left.clone(), horizon, &mut memo))
}

fn enumerate(
    inst: &DiscreteInstance,
    t: usize,
    left: &mut Vec<usize>,
    horizon: usize,
    memo: &mut HashMap<(usize, Vec<usize>), f64>,
) -> f64 {
    if left.iter().all(|&x| x == 0) {
        return 0.0;
    }
    if t >= horizon {
        return f64::INFINITY;
    }
    if let Some(&v) = memo.get(&(t, left.clone())) {
        return v;
    }
    let mut best = enumerate(inst, t + 1, left, horizon, memo);
    for j in 0..left.len() {
        if left[j] > 0 && inst.jobs[j].release <= t {
            left[j] -= 1;
            let c = inst.slot_cost(0, j, t) + enumerate(inst, t + 1, left, horizon, memo);
            left[j] += 1;
            best = best.min(c);
        }
    }
    memo.insert((t, left.clone()), best);
    best
}
