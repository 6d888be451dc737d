//! Empirical check that the rescaled stochastic process approaches the fluid
//! trajectory as the scale grows.

use serde::Serialize;

use crate::ctmc::{acceptance_from_counters, simulate_replicas, NodeCounters, SimConfig};
use crate::equilibrium::{solve_equilibrium, SolveOptions};
use crate::error::{Error, Result};
use crate::fluid::{integrate, FluidState, DEFAULT_DT};
use crate::grid::TimeGrid;
use crate::model::Network;

#[derive(Debug, Clone, PartialEq)]
pub struct CompareConfig {
    pub scales: Vec<u32>,
    pub horizon: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Defaults to `horizon / 500`.
    pub sample_dt: Option<f64>,
    pub dt: f64,
    /// Acceptance counters start at this fraction of the horizon.
    pub warmup_fraction: f64,
}

impl CompareConfig {
    pub fn new(scales: Vec<u32>, horizon: f64, replicas: usize, seed: u64) -> Self {
        Self {
            scales,
            horizon,
            replicas,
            seed,
            sample_dt: None,
            dt: DEFAULT_DT,
            warmup_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleRow {
    pub scale: u32,
    /// Per replica `sup_t ||X(t)/N - x(t)||_inf` over the sampling grid.
    pub sup_distance: Vec<f64>,
    pub mean_sup_distance: f64,
    pub std_error: f64,
    /// Acceptance per node pooled over replicas after warmup.
    pub acceptance: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub rows: Vec<ScaleRow>,
    /// Mean sup-distance strictly decreases along the scale list.
    pub decreasing: bool,
    /// Fluid acceptance at the equilibrium point.
    pub equilibrium_tau: Vec<f64>,
    /// `max_i |acceptance_i - tau_i|` at the largest scale.
    pub acceptance_gap: Option<f64>,
}

pub(crate) fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn compare(net: &Network, cfg: &CompareConfig) -> Result<CompareReport> {
    if cfg.scales.is_empty() {
        return Err(Error::InvalidArgument("scale list is empty".into()));
    }
    if cfg.replicas == 0 {
        return Err(Error::InvalidArgument("need at least one replica".into()));
    }
    if !(0.0..1.0).contains(&cfg.warmup_fraction) {
        return Err(Error::InvalidArgument(format!(
            "warmup fraction {} outside [0, 1)",
            cfg.warmup_fraction
        )));
    }
    let grid = match cfg.sample_dt {
        Some(dt) => TimeGrid::new(cfg.horizon, dt)?,
        None => TimeGrid::with_default_spacing(cfg.horizon)?,
    };
    let fluid = integrate(
        net,
        &FluidState::zeros(net),
        cfg.horizon,
        cfg.dt,
        Some(&grid),
    )?;
    let eq = solve_equilibrium(net, &SolveOptions::default())?;

    let mut rows = Vec::with_capacity(cfg.scales.len());
    for (s, &scale) in cfg.scales.iter().enumerate() {
        let sim = SimConfig {
            sample_dt: cfg.sample_dt,
            warmup: cfg.warmup_fraction * cfg.horizon,
            // Distinct scales draw from disjoint seeds.
            seed: cfg.seed.wrapping_add((s as u64) << 32),
            ..SimConfig::new(scale, cfg.horizon, cfg.seed)
        };
        let runs = simulate_replicas(net, &sim, cfg.replicas, None)?;
        let sup_distance: Vec<f64> = runs
            .iter()
            .map(|run| {
                run.states
                    .iter()
                    .zip(&fluid.states)
                    .map(|(a, b)| a.distance(b))
                    .fold(0.0, f64::max)
            })
            .collect();
        let mut pooled = vec![NodeCounters::default(); net.nodes()];
        for run in &runs {
            for (p, c) in pooled.iter_mut().zip(&run.counters) {
                p.arrivals_offered += c.arrivals_offered;
                p.arrivals_accepted += c.arrivals_accepted;
                p.transfers_offered += c.transfers_offered;
                p.transfers_accepted += c.transfers_accepted;
            }
        }
        let (mean_sup_distance, std_error) = mean_and_se(&sup_distance);
        rows.push(ScaleRow {
            scale,
            sup_distance,
            mean_sup_distance,
            std_error,
            acceptance: acceptance_from_counters(&pooled)
                .into_iter()
                .map(|a| a.combined)
                .collect(),
        });
    }

    let decreasing = rows
        .windows(2)
        .all(|w| w[1].mean_sup_distance < w[0].mean_sup_distance);
    let last = rows.last().expect("nonempty");
    let acceptance_gap = last
        .acceptance
        .iter()
        .zip(&eq.tau)
        .map(|(a, t)| a.map(|a| (a - t).abs()))
        .try_fold(0.0_f64, |m, g| g.map(|g| m.max(g)));
    Ok(CompareReport {
        rows,
        decreasing,
        equilibrium_tau: eq.tau,
        acceptance_gap,
    })
}
