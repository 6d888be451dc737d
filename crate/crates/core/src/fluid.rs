//! Limiting fluid dynamics of the rescaled occupancy process.
//!
//! The vector field is discontinuous on the faces `sum_r x[i,r] = c_i`. A node
//! counts as saturated once its total is within [`EPS_CAP`] of capacity; the
//! integrator is fixed-step RK4 followed by a projection back onto the state
//! space.

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::Network;

/// Saturation tolerance on node totals.
pub const EPS_CAP: f64 = 1e-9;

/// Default RK4 step.
pub const DEFAULT_DT: f64 = 0.01;

/// Fluid occupancy, one nonnegative value per (node, class), node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidState {
    values: Vec<f64>,
    classes: usize,
}

impl FluidState {
    pub fn zeros(net: &Network) -> Self {
        Self {
            values: vec![0.0; net.dim()],
            classes: net.classes(),
        }
    }

    /// Wraps raw node-major values after checking membership in the state
    /// space.
    pub fn new(net: &Network, values: Vec<f64>) -> Result<Self> {
        if values.len() != net.dim() {
            return Err(Error::InvalidState(format!(
                "expected {} coordinates, got {}",
                net.dim(),
                values.len()
            )));
        }
        let x = Self {
            values,
            classes: net.classes(),
        };
        check_state(net, &x)?;
        Ok(x)
    }

    pub(crate) fn from_raw(net: &Network, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), net.dim());
        Self {
            values,
            classes: net.classes(),
        }
    }

    #[inline]
    pub fn get(&self, node: usize, class: usize) -> f64 {
        self.values[node * self.classes + class]
    }

    #[inline]
    pub fn set(&mut self, node: usize, class: usize, value: f64) {
        self.values[node * self.classes + class] = value;
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn node_total(&self, node: usize) -> f64 {
        self.values[node * self.classes..(node + 1) * self.classes]
            .iter()
            .sum()
    }

    /// Sup-norm distance.
    pub fn distance(&self, other: &Self) -> f64 {
        max_abs_diff(&self.values, &other.values)
    }
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Checks `x >= 0`, node totals within capacity and zero coordinates outside
/// the reachable sets, all up to [`EPS_CAP`].
pub fn check_state(net: &Network, x: &FluidState) -> Result<()> {
    for i in 0..net.nodes() {
        for r in 0..net.classes() {
            let v = x.get(i, r);
            if !v.is_finite() || v < -EPS_CAP {
                return Err(Error::InvalidState(format!(
                    "x[{}, {}] = {v}",
                    net.node_id(i),
                    net.class_id(r)
                )));
            }
            if !net.reaches(i, r) && v.abs() > EPS_CAP {
                return Err(Error::InvalidState(format!(
                    "class {} cannot reach node {} but x = {v}",
                    net.class_id(r),
                    net.node_id(i)
                )));
            }
        }
        let total = x.node_total(i);
        if total > net.capacity(i) + EPS_CAP {
            return Err(Error::InvalidState(format!(
                "node {} holds {total} > capacity {}",
                net.node_id(i),
                net.capacity(i)
            )));
        }
    }
    Ok(())
}

/// Offered rate of class `r` at node `i`: external arrivals plus transfers in.
#[inline]
pub fn class_inflow(net: &Network, x: &[f64], node: usize, class: usize) -> f64 {
    let k = net.classes();
    let routed: f64 = (0..net.nodes())
        .map(|j| x[j * k + class] * net.route(class, j, node))
        .sum();
    net.lambda(class) * net.entry(class, node) + net.gamma(class) * routed
}

/// Aggregate offered and departing flow at a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeFlow {
    pub inflow: f64,
    pub outflow: f64,
}

impl NodeFlow {
    pub fn at(net: &Network, x: &FluidState, node: usize) -> Self {
        flow(net, &x.values, node)
    }

    /// Saturation ratio outflow / inflow; `None` when nothing is offered.
    pub fn rho(&self) -> Option<f64> {
        (self.inflow > 0.0).then(|| self.outflow / self.inflow)
    }
}

fn flow(net: &Network, x: &[f64], node: usize) -> NodeFlow {
    let k = net.classes();
    let mut inflow = 0.0;
    let mut outflow = 0.0;
    for r in 0..k {
        inflow += class_inflow(net, x, node, r);
        outflow += (net.gamma(r) + net.mu(r)) * x[node * k + r];
    }
    NodeFlow { inflow, outflow }
}

fn tau_raw(net: &Network, x: &[f64], node: usize) -> f64 {
    let k = net.classes();
    let total: f64 = x[node * k..(node + 1) * k].iter().sum();
    if total < net.capacity(node) - EPS_CAP {
        return 1.0;
    }
    flow(net, x, node).rho().map_or(1.0, |rho| rho.min(1.0))
}

/// Acceptance function at a node: 1 below capacity, `min(rho, 1)` at capacity.
/// Zero offered flow gives 1.
pub fn tau(net: &Network, x: &FluidState, node: usize) -> Result<f64> {
    check_state(net, x)?;
    Ok(tau_raw(net, &x.values, node))
}

/// Acceptance at every node.
pub fn tau_all(net: &Network, x: &FluidState) -> Result<Vec<f64>> {
    check_state(net, x)?;
    Ok((0..net.nodes())
        .map(|i| tau_raw(net, &x.values, i))
        .collect())
}

fn field_raw(net: &Network, x: &[f64], out: &mut [f64]) {
    let k = net.classes();
    for i in 0..net.nodes() {
        let accept = tau_raw(net, x, i);
        for r in 0..k {
            let at = i * k + r;
            out[at] = if net.reaches(i, r) {
                class_inflow(net, x, i, r) * accept - (net.gamma(r) + net.mu(r)) * x[at]
            } else {
                0.0
            };
        }
    }
}

/// Time derivative of the fluid occupancy.
pub fn vector_field(net: &Network, x: &FluidState) -> Result<Vec<f64>> {
    check_state(net, x)?;
    let mut out = vec![0.0; x.values.len()];
    field_raw(net, &x.values, &mut out);
    Ok(out)
}

/// Clips negative coordinates, zeroes unreachable ones and rescales any node
/// whose total exceeds capacity back onto the face.
pub fn project(net: &Network, x: &mut [f64]) {
    let k = net.classes();
    for i in 0..net.nodes() {
        let row = &mut x[i * k..(i + 1) * k];
        for (r, v) in row.iter_mut().enumerate() {
            if *v < 0.0 || !net.reaches(i, r) {
                *v = 0.0;
            }
        }
        let total: f64 = row.iter().sum();
        let c = net.capacity(i);
        if total > c {
            let scale = c / total;
            row.iter_mut().for_each(|v| *v *= scale);
        }
    }
}

/// Reusable RK4 stepper holding scratch buffers.
pub struct Rk4<'a> {
    net: &'a Network,
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl<'a> Rk4<'a> {
    pub fn new(net: &'a Network) -> Self {
        let d = net.dim();
        Self {
            net,
            k1: vec![0.0; d],
            k2: vec![0.0; d],
            k3: vec![0.0; d],
            k4: vec![0.0; d],
            tmp: vec![0.0; d],
        }
    }

    /// One projected RK4 step of size `h`, in place.
    pub fn step(&mut self, x: &mut FluidState, h: f64) {
        let net = self.net;
        let x = &mut x.values;
        field_raw(net, x, &mut self.k1);
        axpy(&mut self.tmp, x, 0.5 * h, &self.k1);
        field_raw(net, &self.tmp, &mut self.k2);
        axpy(&mut self.tmp, x, 0.5 * h, &self.k2);
        field_raw(net, &self.tmp, &mut self.k3);
        axpy(&mut self.tmp, x, h, &self.k3);
        field_raw(net, &self.tmp, &mut self.k4);
        for (d, v) in x.iter_mut().enumerate() {
            *v += h / 6.0 * (self.k1[d] + 2.0 * self.k2[d] + 2.0 * self.k3[d] + self.k4[d]);
        }
        project(net, x);
        debug_assert!(check_state(net, &FluidState::from_raw(net, x.clone())).is_ok());
    }
}

fn axpy(out: &mut [f64], x: &[f64], a: f64, y: &[f64]) {
    for ((o, xv), yv) in out.iter_mut().zip(x).zip(y) {
        *o = xv + a * yv;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluidTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<FluidState>,
}

impl FluidTrajectory {
    pub fn last(&self) -> &FluidState {
        self.states
            .last()
            .expect("trajectory holds the initial state")
    }
}

/// Integrates from `x0` over `[0, horizon]` with step at most `dt`, recording
/// the state on `grid` (defaults to every step when `None`).
pub fn integrate(
    net: &Network,
    x0: &FluidState,
    horizon: f64,
    dt: f64,
    grid: Option<&TimeGrid>,
) -> Result<FluidTrajectory> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "dt must be positive, got {dt}"
        )));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    check_state(net, x0)?;
    let owned;
    let grid = match grid {
        Some(g) => g,
        None => {
            owned = TimeGrid::new(horizon, horizon / (horizon / dt).ceil())?;
            &owned
        }
    };

    let mut rk = Rk4::new(net);
    let mut x = x0.clone();
    project(net, &mut x.values);
    let mut times = Vec::with_capacity(grid.len());
    let mut states = Vec::with_capacity(grid.len());
    times.push(0.0);
    states.push(x.clone());
    let mut now = 0.0;
    for &target in grid.times().iter().skip(1) {
        let span = target - now;
        let steps = (span / dt - 1e-9).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        for _ in 0..steps {
            rk.step(&mut x, h);
        }
        now = target;
        times.push(target);
        states.push(x.clone());
    }
    Ok(FluidTrajectory { times, states })
}

/// Free-capacity birth-death chain at a node around `x`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FreeCapacity {
    /// Per-unit-scale rate at which capacity is freed (departures).
    pub birth_rate: f64,
    /// Per-unit-scale rate at which free capacity is consumed (offers).
    pub death_rate: f64,
    /// Strict ergodicity: departures slower than offers.
    pub ergodic: bool,
    /// Parameter of the geometric stationary law when ergodic.
    pub geometric_parameter: Option<f64>,
}

/// Classifies the free-capacity process at `node`. Equal rates are null
/// recurrent and reported as not ergodic.
pub fn free_capacity_analysis(net: &Network, x: &FluidState, node: usize) -> FreeCapacity {
    let f = NodeFlow::at(net, x, node);
    let ergodic = f.outflow < f.inflow;
    FreeCapacity {
        birth_rate: f.outflow,
        death_rate: f.inflow,
        ergodic,
        geometric_parameter: if ergodic { f.rho() } else { None },
    }
}
