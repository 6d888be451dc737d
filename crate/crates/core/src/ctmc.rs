//! Exact simulation of the occupancy process at scale `N`, and explicit
//! generator enumeration for small instances.
//!
//! The simulator draws a single exponential clock on the total event rate and
//! picks the event categorically. Offered arrivals and transfers are always
//! part of the event set; when the target node is full the state is left
//! unchanged (arrival) or the moving customer is dropped (transfer), which
//! reproduces the rejection terms of the generator while keeping exact
//! offered/accepted counts.

use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fluid::FluidState;
use crate::grid::TimeGrid;
use crate::model::Network;

/// Default cap on enumerated states for [`build_generator`].
pub const DEFAULT_STATE_CAP: usize = 100_000;

/// Largest generator [`stationary`] will factor densely.
pub const DENSE_SOLVE_LIMIT: usize = 4_000;

/// Integer capacity `floor(c_i N)` of a node at scale `N`.
pub fn capacity_units(net: &Network, node: usize, scale: u32) -> u32 {
    // The relative nudge keeps products like 0.29 * 100 from flooring to 28.
    (net.capacity(node) * scale as f64 * (1.0 + 1e-12)).floor() as u32
}

/// RNG for one replica: streams are independent for distinct replica indices
/// under the same seed.
pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Integer occupancy at scale `N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimState {
    pub counts: Vec<u32>,
    pub scale: u32,
}

impl SimState {
    pub fn empty(net: &Network, scale: u32) -> Self {
        Self {
            counts: vec![0; net.dim()],
            scale,
        }
    }

    pub fn new(net: &Network, scale: u32, counts: Vec<u32>) -> Result<Self> {
        let s = Self { counts, scale };
        s.check(net)?;
        Ok(s)
    }

    /// Membership in the state space at this scale.
    pub fn check(&self, net: &Network) -> Result<()> {
        if self.scale == 0 {
            return Err(Error::InvalidArgument("scale N must be positive".into()));
        }
        if self.counts.len() != net.dim() {
            return Err(Error::InvalidState(format!(
                "expected {} counts, got {}",
                net.dim(),
                self.counts.len()
            )));
        }
        let k = net.classes();
        for i in 0..net.nodes() {
            let mut total = 0u64;
            for r in 0..k {
                let v = self.counts[i * k + r];
                if v > 0 && !net.reaches(i, r) {
                    return Err(Error::InvalidState(format!(
                        "class {} cannot reach node {}",
                        net.class_id(r),
                        net.node_id(i)
                    )));
                }
                total += v as u64;
            }
            let cap = capacity_units(net, i, self.scale);
            if total > cap as u64 {
                return Err(Error::InvalidState(format!(
                    "node {} holds {total} > floor(cN) = {cap}",
                    net.node_id(i)
                )));
            }
        }
        Ok(())
    }

    /// Rescaled state `X / N`.
    pub fn rescaled(&self, net: &Network) -> FluidState {
        let n = self.scale as f64;
        FluidState::from_raw(net, self.counts.iter().map(|&c| c as f64 / n).collect())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct NodeCounters {
    pub arrivals_offered: u64,
    pub arrivals_accepted: u64,
    pub transfers_offered: u64,
    pub transfers_accepted: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Arrival,
    Departure,
    Transfer,
}

/// One jump of the process; only recorded when requested.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub node: usize,
    pub class: usize,
    pub destination: Option<usize>,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub scale: u32,
    pub horizon: f64,
    /// Defaults to `horizon / 500`.
    pub sample_dt: Option<f64>,
    pub seed: u64,
    pub replica: u64,
    /// Counters and time averages only accumulate after this time.
    pub warmup: f64,
    pub record_events: bool,
}

impl SimConfig {
    pub fn new(scale: u32, horizon: f64, seed: u64) -> Self {
        Self {
            scale,
            horizon,
            sample_dt: None,
            seed,
            replica: 0,
            warmup: 0.0,
            record_events: false,
        }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        match self.sample_dt {
            Some(dt) => TimeGrid::new(self.horizon, dt),
            None => TimeGrid::with_default_spacing(self.horizon),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub scale: u32,
    pub times: Vec<f64>,
    /// Rescaled occupancy at each sample time.
    pub states: Vec<FluidState>,
    pub counters: Vec<NodeCounters>,
    /// Time-averaged rescaled occupancy over `[warmup, horizon]`.
    pub time_average: Vec<f64>,
    /// Fraction of `[warmup, horizon]` each node spent full.
    pub full_fraction: Vec<f64>,
    pub jumps: u64,
    pub final_state: SimState,
    pub events: Option<Vec<Event>>,
}

/// Simulates one sample path. `initial = None` starts from the empty network.
pub fn simulate(net: &Network, cfg: &SimConfig, initial: Option<&SimState>) -> Result<Trajectory> {
    if cfg.scale == 0 {
        return Err(Error::InvalidArgument("scale N must be positive".into()));
    }
    if !(cfg.horizon > 0.0) || !cfg.horizon.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive, got {}",
            cfg.horizon
        )));
    }
    if !(cfg.warmup >= 0.0 && cfg.warmup < cfg.horizon) {
        return Err(Error::InvalidArgument(format!(
            "warmup {} must lie in [0, horizon)",
            cfg.warmup
        )));
    }
    let grid = cfg.grid()?;
    let mut state = match initial {
        Some(s) => {
            if s.scale != cfg.scale {
                return Err(Error::InvalidState(format!(
                    "initial state has scale {} but N = {}",
                    s.scale, cfg.scale
                )));
            }
            s.check(net)?;
            s.clone()
        }
        None => SimState::empty(net, cfg.scale),
    };

    let nodes = net.nodes();
    let k = net.classes();
    let n = cfg.scale as f64;
    let caps: Vec<u32> = (0..nodes)
        .map(|i| capacity_units(net, i, cfg.scale))
        .collect();
    let mut load: Vec<u32> = (0..nodes)
        .map(|i| state.counts[i * k..(i + 1) * k].iter().sum())
        .collect();

    // Arrival channels in (node, class) order with their constant rates.
    let arrivals: Vec<(usize, usize, f64)> = (0..nodes)
        .flat_map(|i| (0..k).map(move |r| (i, r)))
        .map(|(i, r)| (i, r, net.lambda(r) * n * net.entry(r, i)))
        .filter(|&(_, _, rate)| rate > 0.0)
        .collect();
    let arrival_total: f64 = arrivals.iter().map(|a| a.2).sum();
    let depart_coef: Vec<f64> = (0..nodes)
        .flat_map(|i| (0..k).map(move |r| (i, r)))
        .map(|(i, r)| net.mu(r) + net.gamma(r) * net.exit_prob(r, i))
        .collect();
    let transfer_coef: Vec<f64> = (0..nodes)
        .flat_map(|i| (0..k).map(move |r| (i, r)))
        .map(|(i, r)| net.gamma(r) * (1.0 - net.exit_prob(r, i)))
        .collect();

    let mut rng = replica_rng(cfg.seed, cfg.replica);
    let mut counters = vec![NodeCounters::default(); nodes];
    let mut integral = vec![0.0; net.dim()];
    let mut full_time = vec![0.0; nodes];
    let mut events = cfg.record_events.then(Vec::new);
    let mut times = Vec::with_capacity(grid.len());
    let mut states = Vec::with_capacity(grid.len());
    times.push(0.0);
    states.push(state.rescaled(net));
    let mut next_sample = 1;
    let mut now = 0.0;
    let mut jumps = 0u64;

    loop {
        let depart_total: f64 = state
            .counts
            .iter()
            .zip(&depart_coef)
            .map(|(&x, c)| x as f64 * c)
            .sum();
        let transfer_total: f64 = state
            .counts
            .iter()
            .zip(&transfer_coef)
            .map(|(&x, c)| x as f64 * c)
            .sum();
        let total = arrival_total + depart_total + transfer_total;
        let next = if total > 0.0 {
            now + Exp::new(total).expect("positive rate").sample(&mut rng)
        } else {
            f64::INFINITY
        };

        let grid_times = grid.times();
        while next_sample < grid_times.len() && grid_times[next_sample] <= next {
            times.push(grid_times[next_sample]);
            states.push(state.rescaled(net));
            next_sample += 1;
        }
        let lo = now.max(cfg.warmup);
        let hi = next.min(cfg.horizon);
        if hi > lo {
            let span = hi - lo;
            for (acc, &x) in integral.iter_mut().zip(&state.counts) {
                *acc += x as f64 * span;
            }
            for i in 0..nodes {
                if load[i] >= caps[i] {
                    full_time[i] += span;
                }
            }
        }
        if next > cfg.horizon {
            break;
        }
        now = next;
        jumps += 1;
        let counting = now >= cfg.warmup;

        let mut u = rng.random::<f64>() * total;
        let mut kind = None;
        if u < arrival_total {
            let mut pick = arrivals.len() - 1;
            for (a, &(_, _, rate)) in arrivals.iter().enumerate() {
                if u < rate {
                    pick = a;
                    break;
                }
                u -= rate;
            }
            kind = Some((EventKind::Arrival, arrivals[pick].0, arrivals[pick].1, None));
        } else {
            u -= arrival_total;
            if u < depart_total {
                let mut last = None;
                for (at, (&x, c)) in state.counts.iter().zip(&depart_coef).enumerate() {
                    let rate = x as f64 * c;
                    if rate <= 0.0 {
                        continue;
                    }
                    last = Some(at);
                    if u < rate {
                        break;
                    }
                    u -= rate;
                }
                let at = last.expect("positive departure rate has a channel");
                kind = Some((EventKind::Departure, at / k, at % k, None));
            } else {
                u -= depart_total;
                let mut last = None;
                'outer: for i in 0..nodes {
                    for r in 0..k {
                        let x = state.counts[i * k + r] as f64;
                        if x == 0.0 {
                            continue;
                        }
                        let g = net.gamma(r) * x;
                        for j in 0..nodes {
                            let rate = g * net.route(r, i, j);
                            if rate <= 0.0 {
                                continue;
                            }
                            last = Some((i, r, j));
                            if u < rate {
                                break 'outer;
                            }
                            u -= rate;
                        }
                    }
                }
                if let Some((i, r, j)) = last {
                    kind = Some((EventKind::Transfer, i, r, Some(j)));
                }
            }
        }
        let Some((kind, i, r, dest)) = kind else {
            // Rounding left u past every channel of a block with zero total.
            continue;
        };

        let accepted = match kind {
            EventKind::Arrival => {
                let ok = load[i] < caps[i];
                if ok {
                    state.counts[i * k + r] += 1;
                    load[i] += 1;
                }
                if counting {
                    counters[i].arrivals_offered += 1;
                    counters[i].arrivals_accepted += ok as u64;
                }
                ok
            }
            EventKind::Departure => {
                state.counts[i * k + r] -= 1;
                load[i] -= 1;
                true
            }
            EventKind::Transfer => {
                let j = dest.expect("transfer has a destination");
                let ok = load[j] < caps[j];
                state.counts[i * k + r] -= 1;
                load[i] -= 1;
                if ok {
                    state.counts[j * k + r] += 1;
                    load[j] += 1;
                }
                if counting {
                    counters[j].transfers_offered += 1;
                    counters[j].transfers_accepted += ok as u64;
                }
                ok
            }
        };
        if let Some(log) = events.as_mut() {
            log.push(Event {
                time: now,
                kind,
                node: i,
                class: r,
                destination: dest,
                accepted,
            });
        }
        debug_assert!(state.check(net).is_ok());
    }

    let window = cfg.horizon - cfg.warmup;
    Ok(Trajectory {
        scale: cfg.scale,
        times,
        states,
        counters,
        time_average: integral.iter().map(|v| v / (window * n)).collect(),
        full_fraction: full_time.iter().map(|v| v / window).collect(),
        jumps,
        final_state: state,
        events,
    })
}

/// Independent replicas `0..replicas` of [`simulate`], run in parallel and
/// returned in replica order.
pub fn simulate_replicas(
    net: &Network,
    cfg: &SimConfig,
    replicas: usize,
    initial: Option<&SimState>,
) -> Result<Vec<Trajectory>> {
    (0..replicas)
        .into_par_iter()
        .map(|rep| {
            let cfg = SimConfig {
                replica: rep as u64,
                ..cfg.clone()
            };
            simulate(net, &cfg, initial)
        })
        .collect()
}

/// Empirical acceptance fractions at one node; `None` means nothing was
/// offered.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Acceptance {
    pub combined: Option<f64>,
    pub arrivals: Option<f64>,
    pub transfers: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn acceptance_rates(traj: &Trajectory) -> Vec<Acceptance> {
    acceptance_from_counters(&traj.counters)
}

pub fn acceptance_from_counters(counters: &[NodeCounters]) -> Vec<Acceptance> {
    counters
        .iter()
        .map(|c| Acceptance {
            combined: ratio(
                c.arrivals_accepted + c.transfers_accepted,
                c.arrivals_offered + c.transfers_offered,
            ),
            arrivals: ratio(c.arrivals_accepted, c.arrivals_offered),
            transfers: ratio(c.transfers_accepted, c.transfers_offered),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Generator enumeration
// ---------------------------------------------------------------------------

/// Sparse generator over an enumerated state space.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub scale: u32,
    pub states: Vec<Vec<u32>>,
    /// Off-diagonal entries per row, sorted by column.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub diagonal: Vec<f64>,
}

impl Generator {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, counts: &[u32]) -> Option<usize> {
        self.states.iter().position(|s| s == counts)
    }

    /// Off-diagonal rate from state `a` to state `b` (0 when absent).
    pub fn rate(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return self.diagonal[a];
        }
        self.rows[a]
            .binary_search_by_key(&b, |e| e.0)
            .map_or(0.0, |at| self.rows[a][at].1)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut q = DMatrix::zeros(n, n);
        for (a, row) in self.rows.iter().enumerate() {
            q[(a, a)] = self.diagonal[a];
            for &(b, v) in row {
                q[(a, b)] = v;
            }
        }
        q
    }

    fn strongly_connected(&self) -> bool {
        let n = self.len();
        let mut reverse = vec![Vec::new(); n];
        for (a, row) in self.rows.iter().enumerate() {
            for &(b, v) in row {
                if v > 0.0 {
                    reverse[b].push(a);
                }
            }
        }
        let reach = |adj: &dyn Fn(usize) -> Vec<usize>| {
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([0]);
            seen[0] = true;
            while let Some(a) = queue.pop_front() {
                for b in adj(a) {
                    if !seen[b] {
                        seen[b] = true;
                        queue.push_back(b);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        let forward = |a: usize| {
            self.rows[a]
                .iter()
                .filter(|e| e.1 > 0.0)
                .map(|e| e.0)
                .collect()
        };
        let backward = |a: usize| reverse[a].clone();
        reach(&forward) && reach(&backward)
    }
}

fn node_states(classes: &[usize], cap: u32, k: usize) -> Vec<Vec<u32>> {
    // All vectors over `classes` with total <= cap, lexicographic.
    let mut out = Vec::new();
    let mut cur = vec![0u32; k];
    fn rec(at: usize, left: u32, classes: &[usize], cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if at == classes.len() {
            out.push(cur.clone());
            return;
        }
        for v in 0..=left {
            cur[classes[at]] = v;
            rec(at + 1, left - v, classes, cur, out);
        }
        cur[classes[at]] = 0;
    }
    rec(0, cap, classes, &mut cur, &mut out);
    out
}

fn binomial(n: u64, k: u64) -> u128 {
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Enumerates the state space at scale `N` and builds the generator.
pub fn build_generator(net: &Network, scale: u32, cap: usize) -> Result<Generator> {
    if scale == 0 {
        return Err(Error::InvalidArgument("scale N must be positive".into()));
    }
    let nodes = net.nodes();
    let k = net.classes();
    let caps: Vec<u32> = (0..nodes).map(|i| capacity_units(net, i, scale)).collect();
    let per_node_classes: Vec<Vec<usize>> = (0..nodes)
        .map(|i| (0..k).filter(|&r| net.reaches(i, r)).collect())
        .collect();

    let mut count: u128 = 1;
    for i in 0..nodes {
        let m = per_node_classes[i].len() as u64;
        count = count.saturating_mul(binomial(caps[i] as u64 + m, m));
        if count > cap as u128 {
            return Err(Error::StateSpaceTooLarge { cap });
        }
    }

    let locals: Vec<Vec<Vec<u32>>> = (0..nodes)
        .map(|i| node_states(&per_node_classes[i], caps[i], k))
        .collect();
    let mut states = vec![vec![0u32; nodes * k]];
    for (i, local) in locals.iter().enumerate() {
        let mut next = Vec::with_capacity(states.len() * local.len());
        for s in &states {
            for l in local {
                let mut t = s.clone();
                t[i * k..(i + 1) * k].copy_from_slice(l);
                next.push(t);
            }
        }
        states = next;
    }
    let index: HashMap<Vec<u32>, usize> = states
        .iter()
        .enumerate()
        .map(|(a, s)| (s.clone(), a))
        .collect();

    let n = scale as f64;
    let mut rows = Vec::with_capacity(states.len());
    let mut diagonal = Vec::with_capacity(states.len());
    for s in &states {
        let load: Vec<u32> = (0..nodes)
            .map(|i| s[i * k..(i + 1) * k].iter().sum())
            .collect();
        let mut row: Vec<(usize, f64)> = Vec::new();
        let mut push = |target: Vec<u32>, rate: f64| {
            if rate > 0.0 {
                row.push((index[&target], rate));
            }
        };
        for i in 0..nodes {
            for r in 0..k {
                let at = i * k + r;
                if load[i] < caps[i] && net.reaches(i, r) {
                    let mut t = s.clone();
                    t[at] += 1;
                    push(t, net.lambda(r) * n * net.entry(r, i));
                }
                let x = s[at];
                if x == 0 {
                    continue;
                }
                let xf = x as f64;
                let blocked: f64 = (0..nodes)
                    .filter(|&j| load[j] >= caps[j])
                    .map(|j| net.route(r, i, j))
                    .sum();
                let mut t = s.clone();
                t[at] -= 1;
                push(
                    t,
                    xf * (net.mu(r) + net.gamma(r) * blocked + net.gamma(r) * net.exit_prob(r, i)),
                );
                for j in 0..nodes {
                    if load[j] < caps[j] {
                        let mut t = s.clone();
                        t[at] -= 1;
                        t[j * k + r] += 1;
                        push(t, net.gamma(r) * xf * net.route(r, i, j));
                    }
                }
            }
        }
        row.sort_by_key(|e| e.0);
        diagonal.push(-row.iter().map(|e| e.1).sum::<f64>());
        rows.push(row);
    }
    Ok(Generator {
        scale,
        states,
        rows,
        diagonal,
    })
}

/// Stationary law of an irreducible generator by a dense linear solve.
pub fn stationary(generator: &Generator) -> Result<Vec<f64>> {
    let n = generator.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty generator".into()));
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }
    if n > DENSE_SOLVE_LIMIT {
        return Err(Error::StateSpaceTooLarge {
            cap: DENSE_SOLVE_LIMIT,
        });
    }
    if !generator.strongly_connected() {
        return Err(Error::Reducible);
    }
    // pi Q = 0 with the last balance equation replaced by normalization.
    let mut a = generator.to_dense().transpose();
    for col in 0..n {
        a[(n - 1, col)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let lu = a.full_piv_lu();
    let u = lu.u();
    let scale = u.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let smallest = u
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(smallest > 1e-13 * scale) {
        return Err(Error::Reducible);
    }
    let pi = lu.solve(&b).ok_or(Error::Reducible)?;
    let mut pi: Vec<f64> = pi.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);
    Ok(pi)
}

/// `max_j |(pi Q)_j|`.
pub fn balance_residual(generator: &Generator, pi: &[f64]) -> f64 {
    let mut flux = vec![0.0; generator.len()];
    for (a, row) in generator.rows.iter().enumerate() {
        flux[a] += pi[a] * generator.diagonal[a];
        for &(b, v) in row {
            flux[b] += pi[a] * v;
        }
    }
    flux.into_iter().fold(0.0, |m, v| m.max(v.abs()))
}
