//! `lossnet`: command-line front end for `lossnet-core`.
//!
//! Every subcommand prints a JSON report on stdout. With `--out DIR` the same
//! report and any CSV artifacts are also written to `DIR`. Failures print a
//! JSON error object on stderr and exit with:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | a check ran and failed |
//! | 2 | invalid network description or arguments |
//! | 3 | a solver did not converge |
//! | 4 | I/O error |

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lossnet_core::appendix::{property_suite, SuiteConfig};
use lossnet_core::compare::{compare, CompareConfig};
use lossnet_core::ctmc::{simulate_replicas, SimConfig};
use lossnet_core::equilibrium::{
    closed_form_xt, solve_equilibrium, solve_xt, two_node_closed_form, uniqueness_probe, Method,
    SolveOptions, Start,
};
use lossnet_core::fluid::{free_capacity_analysis, integrate, tau_all, FluidState};
use lossnet_core::grid::TimeGrid;
use lossnet_core::report::{self, SCHEMA_VERSION};
use lossnet_core::{catalog, Error, Network, NetworkSpec};
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "lossnet",
    version,
    about = "Loss networks with routing: simulation, fluid limit, equilibrium"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Command {
    /// Check a network description and print its derived parameters.
    Validate(SpecArgs),
    /// Simulate the scaled occupancy process from the empty network.
    Simulate(SimulateArgs),
    /// Integrate the fluid limit from the empty network.
    Fluid(FluidArgs),
    /// Compute the equilibrium point and cross-check it.
    Equilibrium(EquilibriumArgs),
    /// Compare rescaled simulations against the fluid trajectory.
    Compare(CompareArgs),
    /// Run the randomized sequence-inequality suite.
    AppendixCheck(AppendixArgs),
    /// Closed-form equilibrium of the symmetric two-node network.
    TwoNode(TwoNodeArgs),
}

#[derive(Debug, Args, Serialize)]
struct SpecArgs {
    /// Path to a JSON network description, or builtin:NAME
    /// (golden-ratio, erlang, four-node).
    #[arg(long)]
    spec: String,
}

#[derive(Debug, Args, Serialize)]
struct OutArgs {
    /// Directory for report and CSV artifacts; created if missing.
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    spec: SpecArgs,
    /// Scale parameter N.
    #[arg(short = 'N', long, default_value_t = 100)]
    scale: u32,
    #[arg(long, default_value_t = 10.0)]
    horizon: f64,
    /// Sampling interval of the trajectory CSV [default: horizon/500].
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, default_value_t = 1)]
    replicas: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Counters and time averages start at this time.
    #[arg(long, default_value_t = 0.0)]
    warmup: f64,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
struct FluidArgs {
    #[command(flatten)]
    #[serde(flatten)]
    spec: SpecArgs,
    #[arg(long, default_value_t = 10.0)]
    horizon: f64,
    /// Integration step.
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    /// Sampling interval of the trajectory CSV [default: horizon/500].
    #[arg(long)]
    sample_dt: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum MethodArg {
    Ode,
    Phi,
}

#[derive(Debug, Args, Serialize)]
struct EquilibriumArgs {
    #[command(flatten)]
    #[serde(flatten)]
    spec: SpecArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::Ode)]
    method: MethodArg,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// ODE steps or map iterations.
    #[arg(long, default_value_t = 1_000_000)]
    max_iter: usize,
    /// Weight of the map image in the damped update.
    #[arg(long, default_value_t = 0.5, conflicts_with = "undamped")]
    damping: f64,
    /// Plain fixed-point iteration (damping 1).
    #[arg(long)]
    undamped: bool,
    /// ODE integration step.
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    /// Number of random starts; more than one runs the uniqueness probe.
    #[arg(long, default_value_t = 1)]
    starts: usize,
    /// Seed for random starts.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
struct CompareArgs {
    #[command(flatten)]
    #[serde(flatten)]
    spec: SpecArgs,
    /// Comma-separated scale list.
    #[arg(
        short = 'N',
        long = "scale",
        value_delimiter = ',',
        default_value = "10,100,1000"
    )]
    scales: Vec<u32>,
    #[arg(long, default_value_t = 5.0)]
    horizon: f64,
    #[arg(long, default_value_t = 20)]
    replicas: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fluid integration step.
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    /// Sampling interval of the comparison grid [default: horizon/500].
    #[arg(long)]
    sample_dt: Option<f64>,
    /// Acceptance counting starts at this fraction of the horizon.
    #[arg(long, default_value_t = 0.5)]
    warmup_fraction: f64,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
struct AppendixArgs {
    #[arg(long, default_value_t = 10_000)]
    pairs: usize,
    #[arg(long, default_value_t = 1_000)]
    splits: usize,
    #[arg(long, default_value_t = 20)]
    max_len: usize,
    /// Lower bound of the sampled sequence components.
    #[arg(long, default_value_t = 0.01)]
    min_component: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
struct TwoNodeArgs {
    #[arg(long)]
    alpha1: f64,
    #[arg(long)]
    alpha2: f64,
    #[arg(long)]
    c1: f64,
    #[arg(long)]
    c2: f64,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArgs,
}

enum Failure {
    Core(Error),
    Io(String),
    Check(Value),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Check(_) => 1,
            Self::Core(Error::NotConverged { .. }) => 3,
            Self::Core(_) => 2,
            Self::Io(_) => 4,
        }
    }

    fn to_json(&self) -> Value {
        let (kind, message, extra) = match self {
            Self::Core(e) => {
                let kind = match e {
                    Error::Parse(_) => "parse",
                    Error::Invalid(_) => "invalid",
                    Error::InvalidState(_) => "invalid_state",
                    Error::InvalidArgument(_) => "invalid_argument",
                    Error::StateSpaceTooLarge { .. } => "state_space_too_large",
                    Error::Reducible => "reducible",
                    Error::NotConverged { .. } => "not_converged",
                    Error::NotInT(_) => "not_in_t",
                };
                let extra = match e {
                    Error::Invalid(v) => json!({ "violations": v }),
                    Error::NotConverged {
                        iterations,
                        residual,
                    } => {
                        json!({ "iterations": iterations, "residual": residual })
                    }
                    _ => Value::Null,
                };
                (kind, e.to_string(), extra)
            }
            Self::Io(m) => ("io", m.clone(), Value::Null),
            Self::Check(_) => (
                "check_failed",
                "one or more checks failed".to_string(),
                Value::Null,
            ),
        };
        let mut err = json!({ "kind": kind, "message": message, "exit_code": self.exit_code() });
        if let Value::Object(map) = extra {
            err.as_object_mut().expect("object").extend(map);
        }
        json!({ "error": err })
    }
}

type Outcome = Result<Value, Failure>;

fn load_spec_text(spec: &str) -> Result<String, Failure> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return catalog::json(name).map(str::to_owned).ok_or_else(|| {
            Failure::Core(Error::InvalidArgument(format!(
                "unknown builtin {name:?}; available: {}",
                catalog::NAMES.join(", ")
            )))
        });
    }
    fs::read_to_string(spec).map_err(|e| Failure::Io(format!("{spec}: {e}")))
}

fn load_network(spec: &str) -> Result<Network, Failure> {
    Ok(Network::from_json(&load_spec_text(spec)?)?)
}

fn provenance(cli: &Cli, net: Option<&Network>) -> Value {
    let config = serde_json::to_value(&cli.command).expect("arguments serialize");
    let seed = config.get("seed").cloned().unwrap_or(Value::Null);
    json!({
        "tool": "lossnet",
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "seed": seed,
        "network": net.map(|n| n.spec().to_json_value()),
    })
}

struct Artifacts<'a> {
    dir: Option<&'a Path>,
}

impl<'a> Artifacts<'a> {
    fn new(out: &'a OutArgs) -> Result<Self, Failure> {
        if let Some(dir) = &out.out {
            fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
        }
        Ok(Self {
            dir: out.out.as_deref(),
        })
    }

    fn write(&self, name: &str, contents: &str) -> Result<(), Failure> {
        if let Some(dir) = self.dir {
            let path = dir.join(name);
            fs::write(&path, contents)
                .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }

    /// CSV body preceded by a `#` line carrying the provenance JSON.
    fn write_csv(&self, name: &str, prov: &Value, body: &str) -> Result<(), Failure> {
        if self.dir.is_none() {
            return Ok(());
        }
        self.write(name, &format!("# {prov}\n{body}"))
    }

    fn finish(&self, name: &str, report: Value) -> Outcome {
        self.write(name, &pretty(&report))?;
        Ok(report)
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json");
    s.push('\n');
    s
}

fn run_validate(cli: &Cli, a: &SpecArgs) -> Outcome {
    let spec = NetworkSpec::from_json(&load_spec_text(&a.spec)?)?;
    let violations = spec.validate();
    if !violations.is_empty() {
        return Err(Error::Invalid(violations).into());
    }
    let net = Network::new(spec)?;
    let derived = net.derived();
    let classes: Vec<Value> = (0..net.classes())
        .map(|r| {
            json!({
                "id": net.class_id(r),
                "alpha": derived.alpha[r],
                "beta": derived.beta[r],
                "reachable": net.reachable(r).iter().map(|&i| net.node_id(i)).collect::<Vec<_>>(),
            })
        })
        .collect();
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "provenance": provenance(cli, Some(&net)),
        "valid": true,
        "nodes": net.nodes(),
        "classes": classes,
    }))
}

fn run_simulate(cli: &Cli, a: &SimulateArgs) -> Outcome {
    let net = load_network(&a.spec.spec)?;
    let art = Artifacts::new(&a.out)?;
    let cfg = SimConfig {
        sample_dt: a.dt,
        warmup: a.warmup,
        ..SimConfig::new(a.scale, a.horizon, a.seed)
    };
    let runs = simulate_replicas(&net, &cfg, a.replicas, None)?;
    let prov = provenance(cli, Some(&net));
    let mut summaries = Vec::with_capacity(runs.len());
    for (k, run) in runs.iter().enumerate() {
        let name = if runs.len() == 1 {
            "trajectory.csv".to_string()
        } else {
            format!("trajectory_{k}.csv")
        };
        art.write_csv(&name, &prov, &report::stochastic_csv(&net, run))?;
        let mut s = report::simulation_summary(&net, run);
        s["replica"] = json!(k);
        summaries.push(s);
    }
    art.finish(
        "simulate.json",
        json!({
            "schema_version": SCHEMA_VERSION,
            "provenance": prov,
            "replicas": summaries,
        }),
    )
}

fn run_fluid(cli: &Cli, a: &FluidArgs) -> Outcome {
    let net = load_network(&a.spec.spec)?;
    let art = Artifacts::new(&a.out)?;
    let grid = match a.sample_dt {
        Some(dt) => TimeGrid::new(a.horizon, dt)?,
        None => TimeGrid::with_default_spacing(a.horizon)?,
    };
    let traj = integrate(&net, &FluidState::zeros(&net), a.horizon, a.dt, Some(&grid))?;
    let prov = provenance(cli, Some(&net));
    art.write_csv("fluid.csv", &prov, &report::fluid_csv(&net, &traj))?;
    let last = traj.last();
    let tau = tau_all(&net, last)?;
    let nodes: Vec<Value> = (0..net.nodes())
        .map(|i| {
            json!({
                "id": net.node_id(i),
                "occupancy": last.node_total(i),
                "capacity": net.capacity(i),
                "tau": tau[i],
                "free_capacity": free_capacity_analysis(&net, last, i),
            })
        })
        .collect();
    art.finish(
        "fluid.json",
        json!({
            "schema_version": SCHEMA_VERSION,
            "provenance": prov,
            "horizon": a.horizon,
            "samples": traj.times.len(),
            "final": nodes,
        }),
    )
}

fn run_equilibrium(cli: &Cli, a: &EquilibriumArgs) -> Outcome {
    let net = load_network(&a.spec.spec)?;
    let art = Artifacts::new(&a.out)?;
    let opts = SolveOptions {
        method: match a.method {
            MethodArg::Ode => Method::Ode,
            MethodArg::Phi => Method::Phi,
        },
        tol: a.tol,
        max_iter: a.max_iter,
        start: Start::Empty,
        damping: if a.undamped { 1.0 } else { a.damping },
        dt: a.dt,
    };
    let prov = provenance(cli, Some(&net));
    if a.starts > 1 {
        let probe = uniqueness_probe(&net, a.starts, a.tol, a.seed, &opts);
        let mut v = report::probe_json(&net, &probe);
        v["provenance"] = prov;
        return art.finish("equilibrium.json", v);
    }
    let point = solve_equilibrium(&net, &opts)?;
    let xt = match solve_xt(&net, &point.t) {
        Ok(y) => json!({ "distance": y.distance(&point.x) }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let closed = match closed_form_xt(&net, &point.t) {
        Ok(Some(y)) => json!({ "distance": y.distance(&point.x) }),
        Ok(None) => Value::Null,
        Err(e) => json!({ "error": e.to_string() }),
    };
    let mut v = report::equilibrium_json(&net, &point);
    v["provenance"] = prov;
    v["cross_checks"] = json!({ "linear_representation": xt, "closed_form": closed });
    art.finish("equilibrium.json", v)
}

fn run_compare(cli: &Cli, a: &CompareArgs) -> Outcome {
    let net = load_network(&a.spec.spec)?;
    let art = Artifacts::new(&a.out)?;
    let cfg = CompareConfig {
        sample_dt: a.sample_dt,
        dt: a.dt,
        warmup_fraction: a.warmup_fraction,
        ..CompareConfig::new(a.scales.clone(), a.horizon, a.replicas, a.seed)
    };
    let rep = compare(&net, &cfg)?;
    let prov = provenance(cli, Some(&net));
    let mut table = String::from("scale,mean_sup_distance,std_error\n");
    for row in &rep.rows {
        table.push_str(&format!(
            "{},{},{}\n",
            row.scale, row.mean_sup_distance, row.std_error
        ));
    }
    art.write_csv("compare.csv", &prov, &table)?;
    art.finish(
        "compare.json",
        json!({
            "schema_version": SCHEMA_VERSION,
            "provenance": prov,
            "report": rep,
        }),
    )
}

fn run_appendix(cli: &Cli, a: &AppendixArgs) -> Outcome {
    let art = Artifacts::new(&a.out)?;
    let cfg = SuiteConfig {
        pairs: a.pairs,
        splits: a.splits,
        max_len: a.max_len,
        min_component: a.min_component,
        seed: a.seed,
    };
    let suite = property_suite(&cfg);
    let v = json!({
        "schema_version": SCHEMA_VERSION,
        "provenance": provenance(cli, None),
        "summary": if suite.passed { "PASS" } else { "FAIL" },
        "checks": suite.checks,
    });
    let v = art.finish("appendix.json", v)?;
    if suite.passed {
        Ok(v)
    } else {
        Err(Failure::Check(v))
    }
}

fn run_two_node(cli: &Cli, a: &TwoNodeArgs) -> Outcome {
    let art = Artifacts::new(&a.out)?;
    let sol = two_node_closed_form(a.alpha1, a.alpha2, a.c1, a.c2)?;
    let mut v = report::two_node_json(&sol);
    v["provenance"] = provenance(cli, Some(&sol.network));
    art.finish("two_node.json", v)
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Validate(a) => run_validate(cli, a),
        Command::Simulate(a) => run_simulate(cli, a),
        Command::Fluid(a) => run_fluid(cli, a),
        Command::Equilibrium(a) => run_equilibrium(cli, a),
        Command::Compare(a) => run_compare(cli, a),
        Command::AppendixCheck(a) => run_appendix(cli, a),
        Command::TwoNode(a) => run_two_node(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            print!("{}", pretty(&report));
            ExitCode::SUCCESS
        }
        Err(failure) => {
            if let Failure::Check(report) = &failure {
                print!("{}", pretty(report));
            }
            eprint!("{}", pretty(&failure.to_json()));
            ExitCode::from(failure.exit_code())
        }
    }
}
