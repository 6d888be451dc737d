//! Equilibrium points of the fluid dynamics.
//!
//! Three routes are available and are meant to be checked against each other:
//!
//! * solving for the point directly, either by integrating the fluid ODE to
//!   rest ([`Method::Ode`]) or by damped iteration of the capacity-truncation
//!   map [`phi`] ([`Method::Phi`]);
//! * the linear representation [`solve_xt`], which maps an acceptance vector
//!   `t` to the unique occupancy solving the per-class balance equations;
//! * closed forms for deterministic routes ([`route_closed_form`]) and the
//!   two-node, two-route network ([`two_node_closed_form`]).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;

use crate::ctmc::replica_rng;
use crate::error::{Error, Result};
use crate::fluid::{self, max_abs_diff, FluidState, Rk4, DEFAULT_DT};
use crate::model::Network;

/// `t_i` within this distance of 1 is reported as exactly 1.
pub const SNAP_TO_ONE: f64 = 1e-9;

/// Lower bound on `y` accepted as nonnegative in the linear representation.
pub const NONNEG_SLACK: f64 = 1e-12;

/// Acceptance factor per node, each in `(0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct TVector(Vec<f64>);

impl TVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
            return Err(Error::InvalidArgument(format!(
                "acceptance factors must lie in (0, 1], got {bad}"
            )));
        }
        Ok(Self(values))
    }

    pub fn ones(nodes: usize) -> Self {
        Self(vec![1.0; nodes])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ode,
    Phi,
    ClosedForm,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ode" => Ok(Self::Ode),
            "phi" => Ok(Self::Phi),
            "closed-form" | "closed_form" => Ok(Self::ClosedForm),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumPoint {
    pub x: FluidState,
    pub t: TVector,
    pub tau: Vec<f64>,
    /// Sup-norm of the fluid vector field at `x`.
    pub residual: f64,
    /// `||x - phi(x)||_inf`.
    pub fixed_point_residual: f64,
    pub method: Method,
    pub iterations: usize,
}

impl EquilibriumPoint {
    /// `max_i |(1 - t_i)(c_i - sum_r x[i,r])|`.
    pub fn complementarity(&self, net: &Network) -> f64 {
        complementarity_defect(net, &self.x, self.t.as_slice())
    }

    pub fn sigma(&self, net: &Network) -> Vec<f64> {
        (0..net.nodes()).map(|i| self.x.node_total(i)).collect()
    }
}

fn complementarity_defect(net: &Network, x: &FluidState, t: &[f64]) -> f64 {
    (0..net.nodes())
        .map(|i| ((1.0 - t[i]) * (net.capacity(i) - x.node_total(i))).abs())
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Capacity truncation map
// ---------------------------------------------------------------------------

/// Scale factor `min(1, z / sum)`, 1 when `sum` is zero.
#[inline]
pub fn theta_factor(z: f64, sum: f64) -> f64 {
    if sum > z {
        z / sum
    } else {
        1.0
    }
}

/// Scales `u` down onto `{sum <= z}` when it lies outside.
pub fn theta(z: f64, u: &[f64]) -> Result<Vec<f64>> {
    if !(z > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "z must be positive, got {z}"
        )));
    }
    if let Some(bad) = u.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "components must be nonnegative, got {bad}"
        )));
    }
    let s = theta_factor(z, u.iter().sum());
    Ok(u.iter().map(|v| v * s).collect())
}

/// Unclipped balance target `alpha_r q_r(i) + beta_r sum_j x[j,r] p_r(j,i)`.
fn balance_target(net: &Network, x: &[f64], node: usize, class: usize) -> f64 {
    if !net.reaches(node, class) {
        return 0.0;
    }
    let k = net.classes();
    let routed: f64 = (0..net.nodes())
        .map(|j| x[j * k + class] * net.route(class, j, node))
        .sum();
    net.alpha(class) * net.entry(class, node) + net.beta(class) * routed
}

/// Writes `phi(x)` into `out` and returns the per-node truncation factors.
fn phi_raw(net: &Network, x: &[f64], out: &mut [f64]) -> Vec<f64> {
    let k = net.classes();
    let mut factors = Vec::with_capacity(net.nodes());
    for i in 0..net.nodes() {
        let mut sum = 0.0;
        for r in 0..k {
            let v = balance_target(net, x, i, r);
            out[i * k + r] = v;
            sum += v;
        }
        let s = theta_factor(net.capacity(i), sum);
        for v in &mut out[i * k..(i + 1) * k] {
            *v *= s;
        }
        factors.push(s);
    }
    factors
}

/// The capacity-truncation map whose fixed points are the equilibria.
pub fn phi(net: &Network, x: &FluidState) -> Result<FluidState> {
    fluid::check_state(net, x)?;
    let mut out = vec![0.0; net.dim()];
    phi_raw(net, x.as_slice(), &mut out);
    Ok(FluidState::from_raw(net, out))
}

/// `||x - phi(x)||_inf`.
pub fn fixed_point_residual(net: &Network, x: &FluidState) -> Result<f64> {
    Ok(x.distance(&phi(net, x)?))
}

fn field_norm(net: &Network, x: &FluidState) -> Result<f64> {
    Ok(fluid::vector_field(net, x)?
        .into_iter()
        .fold(0.0, |m, v| m.max(v.abs())))
}

fn snap(t: f64) -> f64 {
    if (1.0 - t).abs() <= SNAP_TO_ONE {
        1.0
    } else {
        t
    }
}

// ---------------------------------------------------------------------------
// Solvers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum Start {
    Empty,
    /// Uniform draw from the state space, see [`random_start`].
    Random(u64),
    Given(FluidState),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub method: Method,
    pub tol: f64,
    /// ODE steps or map iterations.
    pub max_iter: usize,
    pub start: Start,
    /// Weight of `phi(x)` in the damped update; 1 is undamped.
    pub damping: f64,
    pub dt: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            method: Method::Ode,
            tol: 1e-9,
            max_iter: 1_000_000,
            start: Start::Empty,
            damping: 0.5,
            dt: DEFAULT_DT,
        }
    }
}

impl SolveOptions {
    pub fn with_method(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }
}

/// Uniform point of the state space: per node, uniform on the corner simplex
/// over the classes that reach it, scaled by capacity.
pub fn random_start<R: Rng + ?Sized>(net: &Network, rng: &mut R) -> FluidState {
    let mut x = FluidState::zeros(net);
    for i in 0..net.nodes() {
        let classes: Vec<usize> = (0..net.classes()).filter(|&r| net.reaches(i, r)).collect();
        let draws: Vec<f64> = (0..=classes.len()).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        for (&r, d) in classes.iter().zip(&draws) {
            x.set(i, r, net.capacity(i) * d / total);
        }
    }
    x
}

/// Computes the equilibrium point with the requested method and checks the
/// complementarity conditions before returning.
pub fn solve_equilibrium(net: &Network, opts: &SolveOptions) -> Result<EquilibriumPoint> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tol must be positive, got {}",
            opts.tol
        )));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "damping must lie in (0, 1], got {}",
            opts.damping
        )));
    }
    let x0 = match &opts.start {
        Start::Empty => FluidState::zeros(net),
        Start::Random(seed) => random_start(net, &mut replica_rng(*seed, 0)),
        Start::Given(x) => {
            fluid::check_state(net, x)?;
            x.clone()
        }
    };
    match opts.method {
        Method::Ode => solve_ode(net, x0, opts),
        Method::Phi => solve_phi(net, x0, opts),
        Method::ClosedForm => Err(Error::InvalidArgument(
            "closed forms exist only for specific topologies; see two_node_closed_form".into(),
        )),
    }
}

fn solve_ode(net: &Network, mut x: FluidState, opts: &SolveOptions) -> Result<EquilibriumPoint> {
    if !(opts.dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "dt must be positive, got {}",
            opts.dt
        )));
    }
    let mut rk = Rk4::new(net);
    fluid::project(net, x.values_mut());
    let mut last = f64::INFINITY;
    for iter in 0..=opts.max_iter {
        let residual = field_norm(net, &x)?;
        last = residual;
        if residual <= opts.tol {
            let tau = fluid::tau_all(net, &x)?;
            let t: Vec<f64> = tau.iter().map(|&v| snap(v)).collect();
            if complementarity_defect(net, &x, &t) <= opts.tol {
                return Ok(EquilibriumPoint {
                    fixed_point_residual: fixed_point_residual(net, &x)?,
                    t: TVector::new(t)?,
                    tau,
                    residual,
                    method: Method::Ode,
                    iterations: iter,
                    x,
                });
            }
        }
        if iter < opts.max_iter {
            rk.step(&mut x, opts.dt);
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_iter,
        residual: last,
    })
}

fn solve_phi(net: &Network, x0: FluidState, opts: &SolveOptions) -> Result<EquilibriumPoint> {
    let eta = opts.damping;
    let mut x = x0.into_vec();
    let mut image = vec![0.0; x.len()];
    let mut probe = vec![0.0; x.len()];
    let mut last = f64::INFINITY;
    for iter in 1..=opts.max_iter {
        phi_raw(net, &x, &mut image);
        last = max_abs_diff(&x, &image);
        if last <= opts.tol {
            // Accept the image itself: it sits exactly on the saturated faces.
            let factors = phi_raw(net, &image, &mut probe);
            let image_residual = max_abs_diff(&image, &probe);
            let candidate = FluidState::from_raw(net, image.clone());
            let t: Vec<f64> = factors.iter().map(|&v| snap(v)).collect();
            if image_residual <= opts.tol && complementarity_defect(net, &candidate, &t) <= opts.tol
            {
                return Ok(EquilibriumPoint {
                    residual: field_norm(net, &candidate)?,
                    tau: fluid::tau_all(net, &candidate)?,
                    t: TVector::new(t)?,
                    fixed_point_residual: image_residual,
                    method: Method::Phi,
                    iterations: iter,
                    x: candidate,
                });
            }
        }
        for (v, p) in x.iter_mut().zip(&image) {
            *v = (1.0 - eta) * *v + eta * p;
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_iter,
        residual: last,
    })
}

// ---------------------------------------------------------------------------
// Linear representation
// ---------------------------------------------------------------------------

/// The occupancy `x^t` solving the balance equations for a fixed acceptance
/// vector. Per class, solves `(I - P^T) y = q` on the reachable set with
/// `P(j, i) = beta t_j p(j, i)` and returns `x[i] = alpha t_i y_i`. Fails with
/// [`Error::NotInT`] when the system is singular or its solution is negative.
pub fn solve_xt(net: &Network, t: &TVector) -> Result<FluidState> {
    if t.len() != net.nodes() {
        return Err(Error::InvalidArgument(format!(
            "t has {} entries for {} nodes",
            t.len(),
            net.nodes()
        )));
    }
    let t = t.as_slice();
    let mut x = FluidState::zeros(net);
    for r in 0..net.classes() {
        let nodes = net.reachable(r);
        let m = nodes.len();
        let beta = net.beta(r);
        let mut a = DMatrix::<f64>::identity(m, m);
        for (row, &i) in nodes.iter().enumerate() {
            for (col, &j) in nodes.iter().enumerate() {
                a[(row, col)] -= beta * t[j] * net.route(r, j, i);
            }
        }
        let q = DVector::from_iterator(m, nodes.iter().map(|&i| net.entry(r, i)));
        let lu = a.full_piv_lu();
        let diag = lu.u().diagonal();
        let scale = diag.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let smallest = diag.iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
        if !(smallest > 1e-12 * scale) {
            return Err(Error::NotInT(format!(
                "balance system of class {} is singular",
                net.class_id(r)
            )));
        }
        let y = lu.solve(&q).ok_or_else(|| {
            Error::NotInT(format!(
                "balance system of class {} is singular",
                net.class_id(r)
            ))
        })?;
        for (row, &i) in nodes.iter().enumerate() {
            let v = y[row];
            if !v.is_finite() || v < -NONNEG_SLACK {
                return Err(Error::NotInT(format!(
                    "class {} has y = {v} at node {}",
                    net.class_id(r),
                    net.node_id(i)
                )));
            }
            x.set(i, r, net.alpha(r) * t[i] * v.max(0.0));
        }
    }
    Ok(x)
}

/// Per-node totals of `x^t`.
pub fn sigma(net: &Network, t: &TVector) -> Result<Vec<f64>> {
    let x = solve_xt(net, t)?;
    Ok((0..net.nodes()).map(|i| x.node_total(i)).collect())
}

/// `sum_i log(t'_i / t_i) (sigma_i(t') - sigma_i(t))`; nonnegative on pairs
/// of representable acceptance vectors.
pub fn monotonicity_functional(net: &Network, t: &TVector, t_prime: &TVector) -> Result<f64> {
    let s = sigma(net, t)?;
    let s_prime = sigma(net, t_prime)?;
    Ok(t.as_slice()
        .iter()
        .zip(t_prime.as_slice())
        .zip(s.iter().zip(&s_prime))
        .map(|((a, b), (sa, sb))| (b / a).ln() * (sb - sa))
        .sum())
}

// ---------------------------------------------------------------------------
// Closed forms
// ---------------------------------------------------------------------------

/// A deterministic route: `prefix` visited once, then `cycle` repeated
/// forever (empty for routes that leave the network).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeterministicRoute {
    pub prefix: Vec<usize>,
    pub cycle: Vec<usize>,
}

impl DeterministicRoute {
    /// Extracts the route of a class whose entry point and every transition
    /// are deterministic. `None` for Markovian classes.
    pub fn of_class(net: &Network, class: usize) -> Option<Self> {
        let n = net.nodes();
        let start = (0..n).find(|&i| net.entry(class, i) == 1.0)?;
        let mut path = vec![start];
        let mut at = start;
        loop {
            if net.exit_prob(class, at) == 1.0 {
                return Some(Self {
                    prefix: path,
                    cycle: Vec::new(),
                });
            }
            let next = (0..n).find(|&j| net.route(class, at, j) == 1.0)?;
            if let Some(pos) = path.iter().position(|&v| v == next) {
                let cycle = path.split_off(pos);
                return Some(Self {
                    prefix: path,
                    cycle,
                });
            }
            path.push(next);
            at = next;
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.prefix.iter().chain(&self.cycle).copied()
    }
}

/// Occupancy along a deterministic route for acceptance vector `t`:
/// `alpha beta^h prod_{m<=h} t` on the transient part, divided by
/// `1 - beta^l prod_{cycle} t` on the periodic part. Returns `(node, value)`
/// in route order.
pub fn route_closed_form(
    alpha: f64,
    beta: f64,
    route: &DeterministicRoute,
    t: &[f64],
) -> Result<Vec<(usize, f64)>> {
    let loop_gain = if route.cycle.is_empty() {
        0.0
    } else {
        beta.powi(route.cycle.len() as i32) * route.cycle.iter().map(|&i| t[i]).product::<f64>()
    };
    if loop_gain >= 1.0 {
        return Err(Error::NotInT(format!(
            "loop gain {loop_gain} of periodic route is not below 1"
        )));
    }
    let k = route.prefix.len();
    let mut out = Vec::new();
    let mut product = 1.0;
    for (h, node) in route.nodes().enumerate() {
        product *= t[node];
        let v = alpha * beta.powi(h as i32) * product;
        out.push((node, if h < k { v } else { v / (1.0 - loop_gain) }));
    }
    Ok(out)
}

/// `x^t` assembled from [`route_closed_form`] when every class follows a
/// deterministic route; `None` otherwise.
pub fn closed_form_xt(net: &Network, t: &TVector) -> Result<Option<FluidState>> {
    let mut x = FluidState::zeros(net);
    for r in 0..net.classes() {
        let Some(route) = DeterministicRoute::of_class(net, r) else {
            return Ok(None);
        };
        for (i, v) in route_closed_form(net.alpha(r), net.beta(r), &route, t.as_slice())? {
            x.set(i, r, v);
        }
    }
    Ok(Some(x))
}

/// Regimes of the two-node network with opposite routes 1 -> 2 and 2 -> 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TwoNodeCase {
    /// Neither node blocks.
    Uncongested,
    /// Only node 2 blocks.
    SecondSaturated,
    /// Only node 1 blocks.
    FirstSaturated,
    /// Both nodes block.
    BothSaturated,
}

impl TwoNodeCase {
    pub fn number(self) -> u8 {
        match self {
            Self::Uncongested => 1,
            Self::SecondSaturated => 2,
            Self::FirstSaturated => 3,
            Self::BothSaturated => 4,
        }
    }
}

/// Which regime's defining inequalities hold. Each predicate is evaluated on
/// its own so callers can check the partition is disjoint.
pub fn two_node_regimes(a1: f64, a2: f64, c1: f64, c2: f64) -> [bool; 4] {
    let s = a1 + a2;
    let first_holds = a1 + a2 * c2 / s <= c1;
    let second_holds = a2 + a1 * c1 / s <= c2;
    [
        s <= c1 && s <= c2,
        first_holds && s > c2,
        second_holds && s > c1,
        !first_holds && !second_holds,
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoNodeSolution {
    pub case: TwoNodeCase,
    pub network: Network,
    pub point: EquilibriumPoint,
}

/// The two-node network with `mu = 0`, `gamma = 1` and `lambda_r = alpha_r`.
pub fn two_node_network(a1: f64, a2: f64, c1: f64, c2: f64) -> Result<Network> {
    Network::from_json(&format!(
        r#"{{"nodes":[{{"id":"1","capacity":{c1:e}}},{{"id":"2","capacity":{c2:e}}}],
        "classes":[
          {{"id":"1","lambda":{a1:e},"mu":0,"gamma":1,"entry":{{"1":1}},
            "routing":{{"1":{{"2":1}},"2":{{"exit":1}}}}}},
          {{"id":"2","lambda":{a2:e},"mu":0,"gamma":1,"entry":{{"2":1}},
            "routing":{{"2":{{"1":1}},"1":{{"exit":1}}}}}}]}}"#
    ))
}

/// Explicit equilibrium of the two-node network with opposite deterministic
/// routes and no call completions.
pub fn two_node_closed_form(a1: f64, a2: f64, c1: f64, c2: f64) -> Result<TwoNodeSolution> {
    for (name, v) in [("alpha1", a1), ("alpha2", a2), ("c1", c1), ("c2", c2)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    let net = two_node_network(a1, a2, c1, c2)?;
    let s = a1 + a2;
    let regimes = two_node_regimes(a1, a2, c1, c2);
    let case = match regimes.iter().position(|&b| b) {
        Some(0) => TwoNodeCase::Uncongested,
        Some(1) => TwoNodeCase::SecondSaturated,
        Some(2) => TwoNodeCase::FirstSaturated,
        _ => TwoNodeCase::BothSaturated,
    };
    // (x11, x21, x12, x22), t
    let (x11, x21, x12, x22, t1, t2) = match case {
        TwoNodeCase::Uncongested => (a1, a1, a2, a2, 1.0, 1.0),
        TwoNodeCase::SecondSaturated => {
            let t2 = c2 / s;
            (a1, a1 * t2, a2 * t2, a2 * t2, 1.0, t2)
        }
        TwoNodeCase::FirstSaturated => {
            let t1 = c1 / s;
            (a1 * t1, a1 * t1, a2 * t1, a2, t1, 1.0)
        }
        TwoNodeCase::BothSaturated => {
            let root = |a1: f64, a2: f64, c1: f64, c2: f64| {
                let b = a1 * c1 - a2 * c2 - a1 * a2;
                (b + (b * b + 4.0 * c1 * a2 * a1 * a1).sqrt()) / (2.0 * a1 * a1)
            };
            let t1 = root(a1, a2, c1, c2);
            let t2 = root(a2, a1, c2, c1);
            (a1 * t1, a1 * t1 * t2, a2 * t1 * t2, a2 * t2, t1, t2)
        }
    };
    let mut x = FluidState::zeros(&net);
    x.set(0, 0, x11);
    x.set(1, 0, x21);
    x.set(0, 1, x12);
    x.set(1, 1, x22);
    // Rounding can push a saturated node a few ulps over capacity.
    fluid::project(&net, x.values_mut());
    let point = EquilibriumPoint {
        residual: field_norm(&net, &x)?,
        fixed_point_residual: fixed_point_residual(&net, &x)?,
        tau: fluid::tau_all(&net, &x)?,
        t: TVector::new(vec![t1, t2])?,
        method: Method::ClosedForm,
        iterations: 0,
        x,
    };
    Ok(TwoNodeSolution {
        case,
        network: net,
        point,
    })
}

// ---------------------------------------------------------------------------
// Uniqueness probe
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub starts: usize,
    pub solutions: Vec<EquilibriumPoint>,
    /// Start index and error for every start that did not converge.
    pub failures: Vec<(usize, Error)>,
    pub max_pairwise_distance: f64,
    pub verdict: Verdict,
}

/// Solves from `n_starts` random points of the state space and reports how
/// far apart the converged equilibria are.
pub fn uniqueness_probe(
    net: &Network,
    n_starts: usize,
    tol: f64,
    seed: u64,
    solver: &SolveOptions,
) -> ProbeReport {
    let results: Vec<Result<EquilibriumPoint>> = (0..n_starts)
        .into_par_iter()
        .map(|k| {
            let x0 = random_start(net, &mut replica_rng(seed, k as u64));
            solve_equilibrium(
                net,
                &SolveOptions {
                    start: Start::Given(x0),
                    ..solver.clone()
                },
            )
        })
        .collect();
    let mut solutions = Vec::new();
    let mut failures = Vec::new();
    for (k, res) in results.into_iter().enumerate() {
        match res {
            Ok(p) => solutions.push(p),
            Err(e) => failures.push((k, e)),
        }
    }
    let mut max_pairwise_distance: f64 = 0.0;
    for (a, p) in solutions.iter().enumerate() {
        for q in &solutions[a + 1..] {
            max_pairwise_distance = max_pairwise_distance.max(p.x.distance(&q.x));
        }
    }
    let verdict = if max_pairwise_distance > tol {
        Verdict::Fail
    } else if !failures.is_empty() || solutions.is_empty() {
        Verdict::Inconclusive
    } else {
        Verdict::Pass
    };
    ProbeReport {
        starts: n_starts,
        solutions,
        failures,
        max_pairwise_distance,
        verdict,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::catalog;

    const GOLDEN: f64 = 0.618_033_988_749_894_9;

    fn single(alpha: f64, c: f64) -> Network {
        Network::from_json(&format!(
            r#"{{"nodes":[{{"id":"a","capacity":{c}}}],"classes":[
            {{"id":"r","lambda":{alpha},"mu":1,"gamma":0,"entry":{{"a":1}},"routing":{{"a":{{"exit":1}}}}}}]}}"#
        ))
        .unwrap()
    }

    fn golden_x() -> Vec<f64> {
        vec![GOLDEN, 1.0 - GOLDEN, 1.0 - GOLDEN, GOLDEN]
    }

    #[test]
    fn theta_examples() {
        assert_eq!(theta(5.0, &[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(theta(3.0, &[2.0, 4.0]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(theta(3.0, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert!(theta(3.0, &[-1.0, 0.0]).is_err());
        assert!(theta(0.0, &[1.0]).is_err());
    }

    #[test]
    fn phi_examples() {
        let net = catalog::golden_ratio();
        let x = FluidState::new(&net, golden_x()).unwrap();
        assert!(phi(&net, &x).unwrap().distance(&x) < 1e-12);

        let below = single(0.7, 1.0);
        let any = FluidState::new(&below, vec![0.3]).unwrap();
        assert_eq!(phi(&below, &any).unwrap().as_slice(), &[0.7]);
        let above = single(2.0, 1.0);
        let any = FluidState::new(&above, vec![0.3]).unwrap();
        assert_eq!(phi(&above, &any).unwrap().as_slice(), &[1.0]);
    }

    #[test]
    fn golden_ratio_both_methods() {
        let net = catalog::golden_ratio();
        for method in [Method::Ode, Method::Phi] {
            let opts = SolveOptions {
                tol: 1e-11,
                ..SolveOptions::with_method(method)
            };
            let p = solve_equilibrium(&net, &opts).unwrap();
            assert!(
                max_abs_diff(p.x.as_slice(), &golden_x()) < 1e-9,
                "{method:?}: {:?}",
                p.x
            );
            for t in p.t.as_slice() {
                assert!((t - GOLDEN).abs() < 1e-9);
            }
            assert!(p.complementarity(&net) <= 1e-11);
        }
    }

    #[test]
    fn phi_single_step_does_not_converge() {
        let net = catalog::golden_ratio();
        let opts = SolveOptions {
            max_iter: 1,
            tol: 1e-8,
            ..SolveOptions::with_method(Method::Phi)
        };
        assert!(matches!(
            solve_equilibrium(&net, &opts),
            Err(Error::NotConverged { iterations: 1, .. })
        ));
    }

    #[test]
    fn single_node_equilibrium() {
        let net = single(0.7, 1.0);
        let p = solve_equilibrium(&net, &SolveOptions::default()).unwrap();
        assert!((p.x.get(0, 0) - 0.7).abs() < 1e-8);
        assert_eq!(p.t.as_slice(), &[1.0]);
        assert!((sigma(&net, &p.t).unwrap()[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn xt_nonperiodic_route() {
        // i0 -> i1 -> exit with alpha = 1, beta = 1/2.
        let net = Network::from_json(
            r#"{"nodes":[{"id":"0","capacity":9},{"id":"1","capacity":9}],"classes":[
            {"id":"r","lambda":2,"mu":1,"gamma":1,"entry":{"0":1},
             "routing":{"0":{"1":1},"1":{"exit":1}}}]}"#,
        )
        .unwrap();
        let t = TVector::new(vec![1.0, 0.5]).unwrap();
        let x = solve_xt(&net, &t).unwrap();
        assert!((x.get(0, 0) - 1.0).abs() < 1e-15);
        assert!((x.get(1, 0) - 0.25).abs() < 1e-15);
    }

    fn loop_net(mu: f64) -> Network {
        Network::from_json(&format!(
            r#"{{"nodes":[{{"id":"1","capacity":9}},{{"id":"2","capacity":9}}],"classes":[
            {{"id":"r","lambda":{l},"mu":{mu},"gamma":1,"entry":{{"1":1}},
             "routing":{{"1":{{"2":1}},"2":{{"1":1}}}}}}]}}"#,
            l = 1.0 + mu
        ))
        .unwrap()
    }

    #[test]
    fn xt_periodic_route() {
        let net = loop_net(1.0);
        let x = solve_xt(&net, &TVector::ones(2)).unwrap();
        assert!((x.get(0, 0) - 4.0 / 3.0).abs() < 1e-14);
        assert!((x.get(1, 0) - 2.0 / 3.0).abs() < 1e-14);
        let closed = closed_form_xt(&net, &TVector::ones(2)).unwrap().unwrap();
        assert!(closed.distance(&x) < 1e-14);
    }

    #[test]
    fn xt_divergent_loop_is_not_in_t() {
        let net = loop_net(0.0);
        assert!(matches!(
            solve_xt(&net, &TVector::ones(2)),
            Err(Error::NotInT(_))
        ));
        let route = DeterministicRoute::of_class(&net, 0).unwrap();
        assert!(route_closed_form(1.0, 1.0, &route, &[1.0, 1.0]).is_err());
        // Any t < 1 on the loop makes it transient.
        let t = TVector::new(vec![0.5, 1.0]).unwrap();
        assert!(solve_xt(&net, &t).is_ok());
    }

    #[test]
    fn route_extraction() {
        let net = catalog::four_node();
        assert_eq!(
            DeterministicRoute::of_class(&net, 0),
            Some(DeterministicRoute {
                prefix: vec![0, 1, 2],
                cycle: vec![]
            })
        );
        assert_eq!(DeterministicRoute::of_class(&net, 1), None);
        let lp = DeterministicRoute::of_class(&loop_net(1.0), 0).unwrap();
        assert_eq!((lp.prefix.len(), lp.cycle.clone()), (0, vec![0, 1]));
    }

    #[test]
    fn sigma_examples() {
        let net = catalog::golden_ratio();
        let t = TVector::new(vec![GOLDEN, GOLDEN]).unwrap();
        let s = sigma(&net, &t).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-12 && (s[1] - 1.0).abs() < 1e-12);

        let wide = two_node_network(1.0, 1.0, 3.0, 3.0).unwrap();
        assert_eq!(sigma(&wide, &TVector::ones(2)).unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn two_node_cases() {
        let s = two_node_closed_form(1.0, 1.0, 3.0, 3.0).unwrap();
        assert_eq!(s.case, TwoNodeCase::Uncongested);
        assert_eq!(s.point.x.as_slice(), &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(s.point.t.as_slice(), &[1.0, 1.0]);

        let s = two_node_closed_form(1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(s.case, TwoNodeCase::BothSaturated);
        for t in s.point.t.as_slice() {
            assert!((t - (5.0_f64.sqrt() - 1.0) / 2.0).abs() < 1e-15);
        }

        let s = two_node_closed_form(1.0, 1.0, 3.0, 1.0).unwrap();
        assert_eq!(s.case, TwoNodeCase::SecondSaturated);
        // node-major: x11, x12, x21, x22
        assert_eq!(s.point.x.as_slice(), &[1.0, 0.5, 0.5, 0.5]);
        assert_eq!(s.point.t.as_slice(), &[1.0, 0.5]);

        let s = two_node_closed_form(1.0, 1.0, 1.0, 3.0).unwrap();
        assert_eq!(s.case, TwoNodeCase::FirstSaturated);
        assert_eq!(s.point.x.as_slice(), &[0.5, 0.5, 0.5, 1.0]);
        assert!(s.point.fixed_point_residual <= 1e-12);

        assert!(two_node_closed_form(0.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn monotonicity_examples() {
        let net = catalog::golden_ratio();
        let t = TVector::new(vec![0.6, 0.6]).unwrap();
        let tp = TVector::new(vec![0.9, 0.9]).unwrap();
        assert_eq!(monotonicity_functional(&net, &t, &t).unwrap(), 0.0);
        assert!(monotonicity_functional(&net, &t, &tp).unwrap() > 0.0);
        assert!(monotonicity_functional(&net, &tp, &t).unwrap() > 0.0);
    }

    #[test]
    fn probe_single_node() {
        let net = single(2.5, 1.0);
        let report = uniqueness_probe(&net, 5, 1e-9, 4, &SolveOptions::default());
        assert_eq!(report.verdict, Verdict::Pass);
        for p in &report.solutions {
            assert!((p.x.get(0, 0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn t_vector_bounds() {
        assert!(TVector::new(vec![0.0]).is_err());
        assert!(TVector::new(vec![1.0 + 1e-12]).is_err());
        assert!(TVector::new(vec![1e-300, 1.0]).is_ok());
    }
}
