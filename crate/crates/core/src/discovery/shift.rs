//! Localizing which conditionals differ between environments.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::Dataset;
use crate::discrete::{changed_factors, DiscreteJoint};
use crate::error::{Error, Result};
use crate::graph::{Dag, NodeSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftConfig {
    /// A conditional counts as changed only if its estimates differ by more
    /// than this in total variation in some context.
    pub eps: f64,
    /// Family-wise level, split evenly over every tested context.
    pub alpha: f64,
    /// Contexts with fewer rows than this in either environment are skipped.
    pub min_context: usize,
}

impl Default for ShiftConfig {
    fn default() -> Self {
        ShiftConfig {
            eps: 0.02,
            alpha: 0.01,
            min_context: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeShift {
    pub node: String,
    pub changed: bool,
    /// No parent context had enough rows in both environments.
    pub inconclusive: bool,
    pub contexts_tested: usize,
    pub contexts_skipped: usize,
    /// Largest total-variation distance over tested contexts.
    pub max_tv: f64,
    /// Smallest homogeneity p-value over tested contexts (unadjusted).
    pub min_p: f64,
}

/// Comparison of environment `environment` with the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentShift {
    pub environment: usize,
    pub changed: Vec<String>,
    pub inconclusive: Vec<String>,
    pub nodes: Vec<NodeShift>,
}

type Key = Vec<u64>;

fn key(v: f64) -> u64 {
    (v + 0.0).to_bits()
}

/// `context -> value -> count` for one node.
fn tabulate(data: &Dataset, target: usize, parents: &[usize]) -> BTreeMap<Key, BTreeMap<u64, usize>> {
    let mut t: BTreeMap<Key, BTreeMap<u64, usize>> = BTreeMap::new();
    for row in &data.rows {
        let ctx: Key = parents.iter().map(|&p| key(row[p])).collect();
        *t.entry(ctx).or_default().entry(key(row[target])).or_default() += 1;
    }
    t
}

struct ContextTest {
    tv: f64,
    p: f64,
}

fn homogeneity(a: &BTreeMap<u64, usize>, b: &BTreeMap<u64, usize>) -> ContextTest {
    let na: usize = a.values().sum();
    let nb: usize = b.values().sum();
    let mut values: Vec<u64> = a.keys().chain(b.keys()).copied().collect();
    values.sort_unstable();
    values.dedup();
    let total = (na + nb) as f64;
    let (mut chi2, mut tv) = (0.0, 0.0);
    for v in &values {
        let ca = *a.get(v).unwrap_or(&0) as f64;
        let cb = *b.get(v).unwrap_or(&0) as f64;
        let col = ca + cb;
        let ea = col * na as f64 / total;
        let eb = col * nb as f64 / total;
        chi2 += (ca - ea).powi(2) / ea + (cb - eb).powi(2) / eb;
        tv += (ca / na as f64 - cb / nb as f64).abs();
    }
    let df = values.len().saturating_sub(1);
    let p = if df == 0 {
        1.0
    } else {
        ChiSquared::new(df as f64).map_or(1.0, |d| d.sf(chi2))
    };
    ContextTest { tv: 0.5 * tv, p }
}

/// For every environment after the first, the nodes of `g` whose plug-in
/// conditional `p(x_j | pa_j)` differs from the first environment's.
///
/// Each shared parent context is tested for homogeneity with a Pearson
/// chi-square test at Bonferroni level `alpha / #contexts`; a node is
/// changed if some context is significant and its total-variation distance
/// exceeds `eps`. Values are compared exactly, so continuous data must be
/// discretized first.
pub fn localize_mechanism_change(envs: &[Dataset], g: &Dag, cfg: &ShiftConfig) -> Result<Vec<EnvironmentShift>> {
    if envs.len() < 2 {
        return Err(Error::InvalidArgument("need a reference and at least one further environment".into()));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) || !(cfg.eps >= 0.0) {
        return Err(Error::InvalidParameter("alpha must lie in (0, 1) and eps be nonnegative".into()));
    }
    let cols: Vec<Vec<usize>> = envs
        .iter()
        .map(|d| g.names().iter().map(|n| d.column_index(n)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let reference = &envs[0];
    let mut out = Vec::new();
    for (e, env) in envs.iter().enumerate().skip(1) {
        let mut per_node = Vec::new();
        let mut tests_total = 0usize;
        for j in 0..g.len() {
            let pa: Vec<usize> = g.parents(j).iter().collect();
            let ta = tabulate(reference, cols[0][j], &pa.iter().map(|&p| cols[0][p]).collect::<Vec<_>>());
            let tb = tabulate(env, cols[e][j], &pa.iter().map(|&p| cols[e][p]).collect::<Vec<_>>());
            let mut tested = Vec::new();
            let mut skipped = 0;
            let mut contexts: Vec<&Key> = ta.keys().chain(tb.keys()).collect();
            contexts.sort();
            contexts.dedup();
            for ctx in contexts {
                match (ta.get(ctx), tb.get(ctx)) {
                    (Some(a), Some(b))
                        if a.values().sum::<usize>() >= cfg.min_context
                            && b.values().sum::<usize>() >= cfg.min_context =>
                    {
                        tested.push(homogeneity(a, b));
                    }
                    _ => skipped += 1,
                }
            }
            tests_total += tested.len();
            per_node.push((tested, skipped));
        }
        let level = cfg.alpha / tests_total.max(1) as f64;
        let nodes: Vec<NodeShift> = per_node
            .into_iter()
            .enumerate()
            .map(|(j, (tested, skipped))| NodeShift {
                node: g.name(j).to_string(),
                changed: tested.iter().any(|t| t.p < level && t.tv > cfg.eps),
                inconclusive: tested.is_empty(),
                contexts_tested: tested.len(),
                contexts_skipped: skipped,
                max_tv: tested.iter().map(|t| t.tv).fold(0.0, f64::max),
                min_p: tested.iter().map(|t| t.p).fold(1.0, f64::min),
            })
            .collect();
        out.push(EnvironmentShift {
            environment: e,
            changed: nodes.iter().filter(|n| n.changed).map(|n| n.node.clone()).collect(),
            inconclusive: nodes.iter().filter(|n| n.inconclusive).map(|n| n.node.clone()).collect(),
            nodes,
        });
    }
    Ok(out)
}

/// Exact counterpart on distributions: the changed factors of each
/// environment relative to `baseline`.
pub fn localize_exact(baseline: &DiscreteJoint, envs: &[DiscreteJoint], g: &Dag, eps: f64) -> Result<Vec<NodeSet>> {
    envs.iter().map(|q| changed_factors(baseline, q, g, eps)).collect()
}
