//! Network description: nodes with capacities, customer classes with their
//! rates and Markovian routing, and the static quantities derived from them.
//!
//! A [`NetworkSpec`] is the raw, possibly invalid description as read from a
//! JSON document. [`Network`] is the validated, immutable form that every
//! other module consumes.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute slack allowed when checking that probability vectors sum to one.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Reserved routing key for leaving the network.
pub const EXIT: &str = "exit";

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: String,
    pub capacity: f64,
}

/// One row of a class routing matrix: probabilities to every node (dense,
/// file order) followed by the exit probability.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingRow {
    pub to: Vec<f64>,
    pub exit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSpec {
    pub id: String,
    pub lambda: f64,
    pub mu: f64,
    pub gamma: f64,
    /// Entry distribution over nodes.
    pub entry: Vec<f64>,
    /// Routing rows indexed by source node. `None` when the document gives no
    /// row for that node, which is only legal if the class never reaches it.
    pub routing: Vec<Option<RoutingRow>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub nodes: Vec<NodeSpec>,
    pub classes: Vec<ClassSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    NoNodes,
    NoClasses,
    NonPositiveCapacity,
    NonPositiveLambda,
    NegativeRate,
    ZeroTotalRate,
    NegativeProbability,
    EntryNotDistribution,
    MissingRoutingRow,
    RowNotStochastic,
    NonzeroDiagonal,
    UncoveredNode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}", self.message, self.location)
    }
}

impl Violation {
    fn new(kind: ViolationKind, location: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            kind,
            location: location.into(),
            message: message.into(),
        }
    }
}

// ---------------------------------------------------------------------------
// JSON document
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    id: String,
    capacity: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassDoc {
    id: String,
    lambda: f64,
    mu: f64,
    gamma: f64,
    entry: BTreeMap<String, f64>,
    #[serde(default)]
    routing: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecDoc {
    nodes: Vec<NodeDoc>,
    classes: Vec<ClassDoc>,
}

impl NetworkSpec {
    /// Parses a JSON network document. Structural problems (bad JSON,
    /// duplicate or unknown identifiers) are errors; numeric invariants are
    /// left to [`NetworkSpec::validate`].
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SpecDoc = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_doc(doc)
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        let doc: SpecDoc =
            serde_json::from_slice(bytes).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_doc(doc)
    }

    fn from_doc(doc: SpecDoc) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, node) in doc.nodes.iter().enumerate() {
            if node.id == EXIT {
                return Err(Error::Parse(format!("node id {EXIT:?} is reserved")));
            }
            if index.insert(node.id.clone(), i).is_some() {
                return Err(Error::Parse(format!("duplicate node id {:?}", node.id)));
            }
        }
        let lookup = |id: &str, ctx: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| Error::Parse(format!("unknown node {id:?} in {ctx}")))
        };

        let n = doc.nodes.len();
        let mut seen_classes = BTreeMap::new();
        let mut classes = Vec::with_capacity(doc.classes.len());
        for class in doc.classes {
            if seen_classes.insert(class.id.clone(), ()).is_some() {
                return Err(Error::Parse(format!("duplicate class id {:?}", class.id)));
            }
            let mut entry = vec![0.0; n];
            for (node, p) in &class.entry {
                entry[lookup(node, &format!("entry of class {:?}", class.id))?] = *p;
            }
            let mut routing = vec![None; n];
            for (from, row) in &class.routing {
                let ctx = format!("routing of class {:?}", class.id);
                let i = lookup(from, &ctx)?;
                let mut parsed = RoutingRow {
                    to: vec![0.0; n],
                    exit: 0.0,
                };
                for (to, p) in row {
                    if to == EXIT {
                        parsed.exit = *p;
                    } else {
                        parsed.to[lookup(to, &ctx)?] = *p;
                    }
                }
                routing[i] = Some(parsed);
            }
            classes.push(ClassSpec {
                id: class.id,
                lambda: class.lambda,
                mu: class.mu,
                gamma: class.gamma,
                entry,
                routing,
            });
        }

        Ok(Self {
            nodes: doc
                .nodes
                .into_iter()
                .map(|n| NodeSpec {
                    id: n.id,
                    capacity: n.capacity,
                })
                .collect(),
            classes,
        })
    }

    /// Serializes back to the external document format. Zero probabilities
    /// are omitted.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("spec document serializes")
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self.to_doc()).expect("spec document serializes")
    }

    fn to_doc(&self) -> SpecDoc {
        let node_id = |i: usize| self.nodes[i].id.clone();
        SpecDoc {
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeDoc {
                    id: n.id.clone(),
                    capacity: n.capacity,
                })
                .collect(),
            classes: self
                .classes
                .iter()
                .map(|c| ClassDoc {
                    id: c.id.clone(),
                    lambda: c.lambda,
                    mu: c.mu,
                    gamma: c.gamma,
                    entry: c
                        .entry
                        .iter()
                        .enumerate()
                        .filter(|(_, p)| **p != 0.0)
                        .map(|(i, p)| (node_id(i), *p))
                        .collect(),
                    routing: c
                        .routing
                        .iter()
                        .enumerate()
                        .filter_map(|(i, row)| row.as_ref().map(|row| (i, row)))
                        .map(|(i, row)| {
                            let mut out: BTreeMap<String, f64> = row
                                .to
                                .iter()
                                .enumerate()
                                .filter(|(_, p)| **p != 0.0)
                                .map(|(j, p)| (node_id(j), *p))
                                .collect();
                            if row.exit != 0.0 {
                                out.insert(EXIT.to_string(), row.exit);
                            }
                            (node_id(i), out)
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    /// Set of nodes a class can visit: breadth-first closure of the entry
    /// support under positive routing probabilities. Returned in index order.
    pub fn reachable_set(&self, class: usize) -> Vec<usize> {
        let c = &self.classes[class];
        let n = self.nodes.len();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::new();
        for (i, &p) in c.entry.iter().enumerate() {
            if p > 0.0 && !seen[i] {
                seen[i] = true;
                queue.push_back(i);
            }
        }
        while let Some(i) = queue.pop_front() {
            if let Some(row) = &c.routing[i] {
                for (j, &p) in row.to.iter().enumerate() {
                    if p > 0.0 && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        (0..n).filter(|&i| seen[i]).collect()
    }

    /// Every violated invariant; an empty list means the network is valid.
    pub fn validate(&self) -> Vec<Violation> {
        use ViolationKind::*;
        let mut out = Vec::new();
        if self.nodes.is_empty() {
            out.push(Violation::new(NoNodes, "nodes", "network has no nodes"));
        }
        if self.classes.is_empty() {
            out.push(Violation::new(
                NoClasses,
                "classes",
                "network has no classes",
            ));
        }
        for node in &self.nodes {
            if !(node.capacity > 0.0) || !node.capacity.is_finite() {
                out.push(Violation::new(
                    NonPositiveCapacity,
                    format!("node {}", node.id),
                    format!(
                        "capacity must be positive and finite, got {}",
                        node.capacity
                    ),
                ));
            }
        }

        let mut covered = vec![false; self.nodes.len()];
        for (r, class) in self.classes.iter().enumerate() {
            let loc = format!("class {}", class.id);
            if !(class.lambda > 0.0) || !class.lambda.is_finite() {
                out.push(Violation::new(
                    NonPositiveLambda,
                    &loc,
                    format!("lambda must be positive, got {}", class.lambda),
                ));
            }
            for (name, value) in [("mu", class.mu), ("gamma", class.gamma)] {
                if !(value >= 0.0) || !value.is_finite() {
                    out.push(Violation::new(
                        NegativeRate,
                        &loc,
                        format!("{name} must be nonnegative, got {value}"),
                    ));
                }
            }
            if class.mu + class.gamma <= 0.0 {
                out.push(Violation::new(
                    ZeroTotalRate,
                    &loc,
                    "gamma + mu must be positive",
                ));
            }

            if class.entry.iter().any(|p| !(*p >= 0.0)) {
                out.push(Violation::new(
                    NegativeProbability,
                    format!("{loc} entry"),
                    "entry probabilities must be nonnegative",
                ));
            }
            let entry_mass: f64 = class.entry.iter().sum();
            if (entry_mass - 1.0).abs() > STOCHASTIC_TOL {
                out.push(Violation::new(
                    EntryNotDistribution,
                    format!("{loc} entry"),
                    format!("entry distribution sums to {entry_mass}"),
                ));
            }

            for (i, row) in class.routing.iter().enumerate() {
                let Some(row) = row else { continue };
                let at = format!("({}, {})", class.id, self.nodes[i].id);
                if row
                    .to
                    .iter()
                    .chain(std::iter::once(&row.exit))
                    .any(|p| !(*p >= 0.0))
                {
                    out.push(Violation::new(
                        NegativeProbability,
                        &at,
                        "routing probabilities must be nonnegative",
                    ));
                }
                let mass: f64 = row.to.iter().sum::<f64>() + row.exit;
                if (mass - 1.0).abs() > STOCHASTIC_TOL {
                    out.push(Violation::new(
                        RowNotStochastic,
                        &at,
                        format!("row not stochastic (sums to {mass})"),
                    ));
                }
                if row.to[i] != 0.0 {
                    out.push(Violation::new(
                        NonzeroDiagonal,
                        &at,
                        format!("nonzero diagonal {}", row.to[i]),
                    ));
                }
            }

            for i in self.reachable_set(r) {
                covered[i] = true;
                if class.routing[i].is_none() {
                    out.push(Violation::new(
                        MissingRoutingRow,
                        format!("({}, {})", class.id, self.nodes[i].id),
                        "reachable node has no routing row",
                    ));
                }
            }
        }
        if !self.classes.is_empty() {
            for (i, node) in self.nodes.iter().enumerate() {
                if !covered[i] {
                    out.push(Violation::new(
                        UncoveredNode,
                        format!("node {}", node.id),
                        "node is not reachable by any class",
                    ));
                }
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Validated network
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedParams {
    /// `lambda / (gamma + mu)` per class.
    pub alpha: Vec<f64>,
    /// `gamma / (gamma + mu)` per class.
    pub beta: Vec<f64>,
    /// Reachable node set `I_r` per class, index order.
    pub reachable: Vec<Vec<usize>>,
}

impl DerivedParams {
    pub fn of(spec: &NetworkSpec) -> Self {
        let alpha = spec
            .classes
            .iter()
            .map(|c| c.lambda / (c.gamma + c.mu))
            .collect();
        let beta = spec
            .classes
            .iter()
            .map(|c| c.gamma / (c.gamma + c.mu))
            .collect();
        let reachable = (0..spec.classes.len())
            .map(|r| spec.reachable_set(r))
            .collect();
        Self {
            alpha,
            beta,
            reachable,
        }
    }
}

/// A validated network with dense routing tables. Immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    derived: DerivedParams,
    /// `mask[i * classes + r]` is true when node i is in `I_r`.
    mask: Vec<bool>,
    /// `route[r][i * nodes + j] = p_r(i, j)`, zero rows outside `I_r`.
    route: Vec<Vec<f64>>,
    exit: Vec<Vec<f64>>,
}

impl Network {
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        let violations = spec.validate();
        if !violations.is_empty() {
            return Err(Error::Invalid(violations));
        }
        let derived = DerivedParams::of(&spec);
        let n = spec.nodes.len();
        let k = spec.classes.len();
        let mut mask = vec![false; n * k];
        for (r, set) in derived.reachable.iter().enumerate() {
            for &i in set {
                mask[i * k + r] = true;
            }
        }
        let mut route = Vec::with_capacity(k);
        let mut exit = Vec::with_capacity(k);
        for class in &spec.classes {
            let mut dense = vec![0.0; n * n];
            let mut out = vec![0.0; n];
            for (i, row) in class.routing.iter().enumerate() {
                if let Some(row) = row {
                    dense[i * n..(i + 1) * n].copy_from_slice(&row.to);
                    out[i] = row.exit;
                }
            }
            route.push(dense);
            exit.push(out);
        }
        Ok(Self {
            spec,
            derived,
            mask,
            route,
            exit,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::new(NetworkSpec::from_json(text)?)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn derived(&self) -> &DerivedParams {
        &self.derived
    }

    #[inline]
    pub fn nodes(&self) -> usize {
        self.spec.nodes.len()
    }

    #[inline]
    pub fn classes(&self) -> usize {
        self.spec.classes.len()
    }

    /// Flat index of coordinate (node, class); node-major.
    #[inline]
    pub fn idx(&self, node: usize, class: usize) -> usize {
        node * self.classes() + class
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.nodes() * self.classes()
    }

    #[inline]
    pub fn capacity(&self, node: usize) -> f64 {
        self.spec.nodes[node].capacity
    }

    #[inline]
    pub fn lambda(&self, class: usize) -> f64 {
        self.spec.classes[class].lambda
    }

    #[inline]
    pub fn mu(&self, class: usize) -> f64 {
        self.spec.classes[class].mu
    }

    #[inline]
    pub fn gamma(&self, class: usize) -> f64 {
        self.spec.classes[class].gamma
    }

    #[inline]
    pub fn entry(&self, class: usize, node: usize) -> f64 {
        self.spec.classes[class].entry[node]
    }

    #[inline]
    pub fn route(&self, class: usize, from: usize, to: usize) -> f64 {
        self.route[class][from * self.nodes() + to]
    }

    #[inline]
    pub fn exit_prob(&self, class: usize, from: usize) -> f64 {
        self.exit[class][from]
    }

    #[inline]
    pub fn alpha(&self, class: usize) -> f64 {
        self.derived.alpha[class]
    }

    #[inline]
    pub fn beta(&self, class: usize) -> f64 {
        self.derived.beta[class]
    }

    /// Whether node is in the reachable set of class.
    #[inline]
    pub fn reaches(&self, node: usize, class: usize) -> bool {
        self.mask[self.idx(node, class)]
    }

    pub fn reachable(&self, class: usize) -> &[usize] {
        &self.derived.reachable[class]
    }

    pub fn node_id(&self, node: usize) -> &str {
        &self.spec.nodes[node].id
    }

    pub fn class_id(&self, class: usize) -> &str {
        &self.spec.classes[class].id
    }
}

/// Bundled example networks.
pub mod catalog {
    use super::Network;

    pub const GOLDEN_RATIO_JSON: &str = include_str!("../specs/golden_ratio.json");
    pub const ERLANG_JSON: &str = include_str!("../specs/erlang.json");
    pub const FOUR_NODE_JSON: &str = include_str!("../specs/four_node.json");

    pub const NAMES: [&str; 3] = ["golden-ratio", "erlang", "four-node"];

    /// Two nodes of capacity 1 with two opposite deterministic routes; the
    /// equilibrium acceptance at both nodes is the golden ratio conjugate.
    pub fn golden_ratio() -> Network {
        Network::from_json(GOLDEN_RATIO_JSON).expect("bundled spec is valid")
    }

    /// Single node of capacity 2 fed by one class: an Erlang loss system.
    pub fn erlang() -> Network {
        Network::from_json(ERLANG_JSON).expect("bundled spec is valid")
    }

    /// Four nodes of capacity 5: one class on the fixed route 1 -> 2 -> 3, one
    /// entering at node 4 and moving to node 1 or node 3 with equal odds.
    pub fn four_node() -> Network {
        Network::from_json(FOUR_NODE_JSON).expect("bundled spec is valid")
    }

    pub fn json(name: &str) -> Option<&'static str> {
        match name {
            "golden-ratio" => Some(GOLDEN_RATIO_JSON),
            "erlang" => Some(ERLANG_JSON),
            "four-node" => Some(FOUR_NODE_JSON),
            _ => None,
        }
    }

    pub fn by_name(name: &str) -> Option<Network> {
        json(name).map(|text| Network::from_json(text).expect("bundled spec is valid"))
    }
}
