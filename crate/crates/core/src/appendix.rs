//! Entropy-like inequality on pairs of sequences in `(0, 1]`:
//!
//! ```text
//! f_n(u, u') = sum_{i<=n} log(u'_i / u_i) (prod_{j<=i} u'_j - prod_{j<=i} u_j) >= 0
//! ```
//!
//! with equality only for `u = u'`. This is what makes the monotonicity
//! functional of the equilibrium module nonnegative.

use rand::Rng;
use serde::Serialize;

use crate::ctmc::replica_rng;
use crate::error::{Error, Result};

/// Finite sequence with every component in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitSequence(Vec<f64>);

impl UnitSequence {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
            return Err(Error::InvalidArgument(format!(
                "sequence components must lie in (0, 1], got {bad}"
            )));
        }
        Ok(Self(values))
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

fn check_pair(u: &UnitSequence, v: &UnitSequence) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::InvalidArgument(format!(
            "sequence lengths differ: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    Ok(())
}

/// Partial sum over whatever length the slices share. Callers guarantee the
/// domain.
pub(crate) fn partial_sum(u: &[f64], v: &[f64]) -> f64 {
    let mut pu = 1.0;
    let mut pv = 1.0;
    let mut acc = 0.0;
    for (a, b) in u.iter().zip(v) {
        pu *= a;
        pv *= b;
        acc += (b / a).ln() * (pv - pu);
    }
    acc
}

/// `f_n(u, u')` with `n + 1 = u.len()`.
pub fn f_n(u: &UnitSequence, u_prime: &UnitSequence) -> Result<f64> {
    check_pair(u, u_prime)?;
    Ok(partial_sum(&u.0, &u_prime.0))
}

/// The three pieces of the split of `f_n` at index `k`:
/// `f_n = head + tail - cross`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    /// `f_{k-1}` of the first `k` components.
    pub head: f64,
    /// `f_{n-k}` of `(prod_{j<=k} u_j, u_{k+1}, ..., u_n)` and likewise for `u'`.
    pub tail: f64,
    /// `log(P'_{k-1} / P_{k-1}) (P'_k - P_k)` with `P` the prefix products.
    pub cross: f64,
}

impl Split {
    pub fn total(&self) -> f64 {
        self.head + self.tail - self.cross
    }
}

/// Splits `f_n(u, u')` at `1 <= k <= n`.
pub fn split(u: &UnitSequence, u_prime: &UnitSequence, k: usize) -> Result<Split> {
    check_pair(u, u_prime)?;
    let n = u.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!(
            "split index {k} outside 1..={}",
            n.saturating_sub(1)
        )));
    }
    let (a, b) = (&u.0, &u_prime.0);
    let prefix = |s: &[f64], upto: usize| s[..=upto].iter().product::<f64>();
    let (pk, pk_prime) = (prefix(a, k), prefix(b, k));
    let (pk1, pk1_prime) = (prefix(a, k - 1), prefix(b, k - 1));
    let mut tail_u = vec![pk];
    tail_u.extend_from_slice(&a[k + 1..]);
    let mut tail_v = vec![pk_prime];
    tail_v.extend_from_slice(&b[k + 1..]);
    Ok(Split {
        head: partial_sum(&a[..k], &b[..k]),
        tail: partial_sum(&tail_u, &tail_v),
        cross: (pk1_prime / pk1).ln() * (pk_prime - pk),
    })
}

/// Truncated infinite series with a tail certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesValue {
    pub value: f64,
    pub terms: usize,
    /// Larger of the two prefix products at the last term.
    pub last_prefix: f64,
    /// Bound on the neglected tail assuming later components stay at or below
    /// the largest component seen; infinite when that component is 1.
    pub tail_bound: f64,
}

/// Sums the series for component generators `u(i)`, `u'(i)` until both
/// prefix products drop to `tail_tol`.
pub fn f_infinity<U, V>(u: U, u_prime: V, tail_tol: f64, max_terms: usize) -> Result<SeriesValue>
where
    U: Fn(usize) -> f64,
    V: Fn(usize) -> f64,
{
    if !(tail_tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tail tolerance must be positive, got {tail_tol}"
        )));
    }
    let mut pu = 1.0;
    let mut pv = 1.0;
    let mut acc = 0.0;
    let mut max_log: f64 = 0.0;
    let mut max_component: f64 = 0.0;
    for i in 0..max_terms {
        let (a, b) = (u(i), u_prime(i));
        if !(a > 0.0 && a <= 1.0 && b > 0.0 && b <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "component {i} outside (0, 1]: ({a}, {b})"
            )));
        }
        pu *= a;
        pv *= b;
        let log = (b / a).ln();
        acc += log * (pv - pu);
        max_log = max_log.max(log.abs());
        max_component = max_component.max(a).max(b);
        let last_prefix = pu.max(pv);
        if last_prefix <= tail_tol {
            let tail_bound = if max_component < 1.0 {
                max_log * last_prefix * max_component / (1.0 - max_component)
            } else {
                f64::INFINITY
            };
            return Ok(SeriesValue {
                value: acc,
                terms: i + 1,
                last_prefix,
                tail_bound,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: max_terms,
        residual: pu.max(pv),
    })
}

// ---------------------------------------------------------------------------
// Property suite
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub pairs: usize,
    pub splits: usize,
    pub max_len: usize,
    /// Components are drawn uniformly from `(min_component, 1]`.
    pub min_component: f64,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            pairs: 10_000,
            splits: 1_000,
            max_len: 20,
            min_component: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    /// Most adverse value observed (smallest sum, largest defect, ...).
    pub worst: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

/// Pair of random sequences of a random length in `1..=max_len`.
pub fn random_pair<R: Rng + ?Sized>(
    rng: &mut R,
    max_len: usize,
    min_component: f64,
) -> (UnitSequence, UnitSequence) {
    let len = rng.random_range(1..=max_len);
    let mut draw = || {
        (0..len)
            .map(|_| 1.0 - (1.0 - min_component) * rng.random::<f64>())
            .collect::<Vec<_>>()
    };
    let u = draw();
    let v = draw();
    (UnitSequence(u), UnitSequence(v))
}

pub const NONNEGATIVITY_SLACK: f64 = 1e-12;
pub const SPLIT_TOL: f64 = 1e-12;
pub const SERIES_TOL: f64 = 1e-9;

/// Runs the nonnegativity, strict positivity, split identity and closed-form
/// series checks.
pub fn property_suite(cfg: &SuiteConfig) -> SuiteReport {
    let mut rng = replica_rng(cfg.seed, 0);

    let mut min_value = f64::INFINITY;
    let mut min_separated = f64::INFINITY;
    let mut separated = 0;
    for _ in 0..cfg.pairs {
        let (u, v) = random_pair(&mut rng, cfg.max_len, cfg.min_component);
        let value = partial_sum(&u.0, &v.0);
        min_value = min_value.min(value);
        let gap =
            u.0.iter()
                .zip(&v.0)
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        if gap >= 1e-3 {
            separated += 1;
            min_separated = min_separated.min(value);
        }
    }

    let mut rng = replica_rng(cfg.seed, 1);
    let mut worst_split: f64 = 0.0;
    let mut split_cases = 0;
    while split_cases < cfg.splits {
        let (u, v) = random_pair(&mut rng, cfg.max_len.max(2), cfg.min_component);
        if u.len() < 2 {
            continue;
        }
        let k = rng.random_range(1..u.len());
        let s = split(&u, &v, k).expect("valid split");
        worst_split = worst_split.max((s.total() - partial_sum(&u.0, &v.0)).abs());
        split_cases += 1;
    }

    let mut worst_series: f64 = 0.0;
    for (value, exact) in closed_form_series() {
        worst_series = worst_series.max((value - exact).abs());
    }

    let checks = vec![
        CheckResult {
            name: "nonnegativity",
            passed: min_value >= -NONNEGATIVITY_SLACK,
            cases: cfg.pairs,
            worst: min_value,
            threshold: -NONNEGATIVITY_SLACK,
        },
        CheckResult {
            name: "strict_positivity",
            passed: min_separated > 0.0,
            cases: separated,
            worst: min_separated,
            threshold: 0.0,
        },
        CheckResult {
            name: "split_identity",
            passed: worst_split <= SPLIT_TOL,
            cases: cfg.splits,
            worst: worst_split,
            threshold: SPLIT_TOL,
        },
        CheckResult {
            name: "series_closed_forms",
            passed: worst_series <= SERIES_TOL,
            cases: 3,
            worst: worst_series,
            threshold: SERIES_TOL,
        },
    ];
    SuiteReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

/// `(computed, exact)` for constant sequences, where the series is geometric.
fn closed_form_series() -> Vec<(f64, f64)> {
    let run = |a: f64, b: f64| {
        f_infinity(|_| a, |_| b, 1e-18, 10_000)
            .expect("geometric series converge")
            .value
    };
    // sum_i log(b/a)(b^{i+1} - a^{i+1}) = log(b/a)(b/(1-b) - a/(1-a))
    let exact = |a: f64, b: f64| (b / a).ln() * (b / (1.0 - b) - a / (1.0 - a));
    vec![
        (run(0.9, 0.9), 0.0),
        (run(0.5, 0.9), exact(0.5, 0.9)),
        (run(0.9, 0.5), exact(0.9, 0.5)),
    ]
}
