//! Oracles and generators shared by the integration tests. Nothing here calls
//! the solvers under test.

#![allow(dead_code)]

use lossnet_core::equilibrium::TVector;
use lossnet_core::Network;
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Monte-Carlo estimate of the occupancy representation: for each class,
/// mean over `paths` runs of the killed routing chain of
/// `alpha * sum_k 1{Z_k = i} beta^k prod_{m<=k} t(Z_m)`.
pub struct McEstimate {
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub paths: usize,
}

impl McEstimate {
    /// Standard error floored at the rounding error of the running sums, so
    /// that zero-variance coordinates (deterministic paths) compare at
    /// floating-point resolution instead of exactly.
    pub fn resolved_error(&self, coord: usize) -> f64 {
        let rounding = self.paths as f64 * f64::EPSILON * self.mean[coord].abs();
        self.std_error[coord].max(rounding)
    }
}

/// Samples from a discrete distribution given as `(outcome, weight)` pairs;
/// `None` is the residual mass.
fn draw<R: Rng>(rng: &mut R, items: &[(usize, f64)]) -> Option<usize> {
    let mut u: f64 = rng.random();
    for &(k, w) in items {
        if u < w {
            return Some(k);
        }
        u -= w;
    }
    None
}

pub fn mc_representation(net: &Network, t: &TVector, paths: usize, seed: u64) -> McEstimate {
    let n = net.nodes();
    let k = net.classes();
    let t = t.as_slice();
    let mut sum = vec![0.0; n * k];
    let mut sum_sq = vec![0.0; n * k];
    let mut rng = rng(seed);
    let mut path = vec![0.0; n];
    for r in 0..k {
        let entry: Vec<(usize, f64)> = (0..n).map(|i| (i, net.entry(r, i))).collect();
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| (0..n).map(|j| (j, net.route(r, i, j))).collect())
            .collect();
        let beta = net.beta(r);
        for _ in 0..paths {
            path.iter_mut().for_each(|v| *v = 0.0);
            let mut z = draw(&mut rng, &entry);
            let mut weight = 1.0;
            while let Some(i) = z {
                weight *= t[i];
                path[i] += weight;
                weight *= beta;
                if weight < 1e-18 {
                    break;
                }
                z = draw(&mut rng, &rows[i]);
            }
            for i in 0..n {
                let v = net.alpha(r) * path[i];
                sum[i * k + r] += v;
                sum_sq[i * k + r] += v * v;
            }
        }
    }
    let m = paths as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / m).collect();
    let std_error = sum_sq
        .iter()
        .zip(&mean)
        .map(|(s2, mu)| ((s2 / m - mu * mu).max(0.0) * m / (m - 1.0) / m).sqrt())
        .collect();
    McEstimate {
        mean,
        std_error,
        paths,
    }
}

fn node_id(i: usize) -> String {
    format!("n{i}")
}

/// Random distribution over a random nonempty subset of `0..n`, optionally
/// leaving part of the mass to `exit`.
fn random_row<R: Rng>(
    rng: &mut R,
    n: usize,
    exclude: Option<usize>,
    exit_mass: f64,
) -> Map<String, Value> {
    let candidates: Vec<usize> = (0..n).filter(|&j| Some(j) != exclude).collect();
    let mut row = Map::new();
    if !candidates.is_empty() && exit_mass < 1.0 {
        let size = rng.random_range(1..=candidates.len());
        let picks = sample(rng, candidates.len(), size);
        let weights: Vec<f64> = (0..size).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = weights.iter().sum();
        for (p, w) in picks.iter().zip(&weights) {
            row.insert(node_id(candidates[p]), json!((1.0 - exit_mass) * w / total));
        }
    } else {
        row.insert("exit".into(), json!(1.0));
        return row;
    }
    if exit_mass > 0.0 {
        row.insert("exit".into(), json!(exit_mass));
    }
    row
}

/// Small random network with Markovian routing. Some classes have no call
/// completions and some routing rows have no exit mass.
pub fn random_network<R: Rng>(rng: &mut R, max_nodes: usize, max_classes: usize) -> Network {
    loop {
        let n = rng.random_range(1..=max_nodes);
        let k = rng.random_range(1..=max_classes);
        let nodes: Vec<Value> = (0..n)
            .map(|i| json!({"id": node_id(i), "capacity": rng.random_range(0.5..4.0)}))
            .collect();
        let classes: Vec<Value> = (0..k)
            .map(|r| {
                let mu = if rng.random_bool(0.3) {
                    0.0
                } else {
                    rng.random_range(0.1..1.5)
                };
                let entry = random_row(rng, n, None, 0.0);
                let mut routing = Map::new();
                for i in 0..n {
                    let exit = if rng.random_bool(0.2) {
                        0.0
                    } else {
                        rng.random_range(0.05..0.9)
                    };
                    routing.insert(node_id(i), Value::Object(random_row(rng, n, Some(i), exit)));
                }
                json!({
                    "id": format!("r{r}"),
                    "lambda": rng.random_range(0.2..3.0),
                    "mu": mu,
                    "gamma": rng.random_range(0.5..2.0),
                    "entry": entry,
                    "routing": routing,
                })
            })
            .collect();
        let doc = json!({"nodes": nodes, "classes": classes}).to_string();
        // Nodes no class can reach are rejected by validation; redraw.
        if let Ok(net) = Network::from_json(&doc) {
            return net;
        }
    }
}

/// One class on a deterministic route: `prefix` distinct nodes then a cycle
/// over `cycle` further nodes (`cycle = 0` means the route exits).
pub fn deterministic_network<R: Rng>(rng: &mut R, prefix: usize, cycle: usize, mu: f64) -> Network {
    let n = prefix + cycle;
    assert!(n >= 1 && cycle != 1);
    let nodes: Vec<Value> = (0..n)
        .map(|i| json!({"id": node_id(i), "capacity": rng.random_range(0.5..4.0)}))
        .collect();
    let mut routing = Map::new();
    for i in 0..n {
        let next = if i + 1 < n {
            node_id(i + 1)
        } else if cycle > 0 {
            node_id(prefix)
        } else {
            "exit".to_string()
        };
        routing.insert(node_id(i), json!({ next: 1.0 }));
    }
    let doc = json!({
        "nodes": nodes,
        "classes": [{
            "id": "r0",
            "lambda": rng.random_range(0.2..3.0),
            "mu": mu,
            "gamma": rng.random_range(0.5..2.0),
            "entry": { node_id(0): 1.0 },
            "routing": routing,
        }],
    });
    Network::from_json(&doc.to_string()).expect("deterministic route is valid")
}

/// Random acceptance vector; a quarter of the components are exactly 1.
pub fn random_t<R: Rng>(rng: &mut R, nodes: usize) -> TVector {
    TVector::new(
        (0..nodes)
            .map(|_| {
                if rng.random_bool(0.25) {
                    1.0
                } else {
                    rng.random_range(0.2..1.0)
                }
            })
            .collect(),
    )
    .expect("components in (0, 1]")
}
