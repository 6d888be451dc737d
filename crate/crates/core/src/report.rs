//! Artifact formats: trajectory CSV and versioned JSON reports.

use std::fmt::Write as _;

use serde_json::{json, Value};

use crate::ctmc::{acceptance_rates, Trajectory};
use crate::equilibrium::{EquilibriumPoint, ProbeReport, TwoNodeSolution};
use crate::fluid::{FluidState, FluidTrajectory};
use crate::model::Network;

pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: &str = "time,node,class,value";

/// Long-format CSV with one row per sample and reachable (node, class).
pub fn trajectory_csv(net: &Network, times: &[f64], states: &[FluidState]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (t, x) in times.iter().zip(states) {
        for i in 0..net.nodes() {
            for r in 0..net.classes() {
                if net.reaches(i, r) {
                    writeln!(
                        out,
                        "{t},{},{},{}",
                        net.node_id(i),
                        net.class_id(r),
                        x.get(i, r)
                    )
                    .expect("writing to a String");
                }
            }
        }
    }
    out
}

pub fn stochastic_csv(net: &Network, traj: &Trajectory) -> String {
    trajectory_csv(net, &traj.times, &traj.states)
}

pub fn fluid_csv(net: &Network, traj: &FluidTrajectory) -> String {
    trajectory_csv(net, &traj.times, &traj.states)
}

fn occupancy_json(net: &Network, x: &[f64]) -> Value {
    let mut out = Vec::new();
    for i in 0..net.nodes() {
        for r in 0..net.classes() {
            if net.reaches(i, r) {
                out.push(json!({
                    "node": net.node_id(i),
                    "class": net.class_id(r),
                    "value": x[net.idx(i, r)],
                }));
            }
        }
    }
    Value::Array(out)
}

/// Counters and time averages of a simulation run.
pub fn simulation_summary(net: &Network, traj: &Trajectory) -> Value {
    let acceptance = acceptance_rates(traj);
    let nodes: Vec<Value> = (0..net.nodes())
        .map(|i| {
            let c = traj.counters[i];
            json!({
                "id": net.node_id(i),
                "arrivals_offered": c.arrivals_offered,
                "arrivals_accepted": c.arrivals_accepted,
                "transfers_offered": c.transfers_offered,
                "transfers_accepted": c.transfers_accepted,
                "acceptance": acceptance[i].combined,
                "arrival_acceptance": acceptance[i].arrivals,
                "transfer_acceptance": acceptance[i].transfers,
                "full_fraction": traj.full_fraction[i],
            })
        })
        .collect();
    json!({
        "scale": traj.scale,
        "jumps": traj.jumps,
        "nodes": nodes,
        "time_average": occupancy_json(net, &traj.time_average),
    })
}

pub fn equilibrium_json(net: &Network, point: &EquilibriumPoint) -> Value {
    let sigma = point.sigma(net);
    let nodes: Vec<Value> = (0..net.nodes())
        .map(|i| {
            let t = point.t.as_slice()[i];
            json!({
                "id": net.node_id(i),
                "t": t,
                "tau": point.tau[i],
                "sigma": sigma[i],
                "capacity": net.capacity(i),
                "saturated": t < 1.0,
                "blocking": 1.0 - t,
            })
        })
        .collect();
    json!({
        "schema_version": SCHEMA_VERSION,
        "method": point.method,
        "iterations": point.iterations,
        "residual": point.residual,
        "fixed_point_residual": point.fixed_point_residual,
        "complementarity": point.complementarity(net),
        "nodes": nodes,
        "x": occupancy_json(net, point.x.as_slice()),
    })
}

pub fn two_node_json(sol: &TwoNodeSolution) -> Value {
    let mut v = equilibrium_json(&sol.network, &sol.point);
    v["case"] = json!(sol.case.number());
    v["regime"] = json!(sol.case);
    v
}

pub fn probe_json(net: &Network, report: &ProbeReport) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "starts": report.starts,
        "converged": report.solutions.len(),
        "failures": report.failures.iter().map(|(k, e)| json!({"start": k, "error": e.to_string()})).collect::<Vec<_>>(),
        "max_pairwise_distance": report.max_pairwise_distance,
        "verdict": report.verdict,
        "equilibrium": report.solutions.first().map(|p| equilibrium_json(net, p)),
    })
}
