//! Exact joint distributions over finite variables.
//!
//! Tables are flat and row-major: the last variable varies fastest. Every
//! operation that takes a [`Dag`] reads the joint in the graph's node order
//! and returns results in that order.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Dag, NodeSet, DEFAULT_EXHAUSTIVE_CAP};

/// Largest table (joint or conditional) the crate will materialize.
pub const MAX_TABLE_ENTRIES: usize = 1 << 20;

/// Tolerance on the total mass of a validated table.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// Default tolerance for "unchanged" on exact arithmetic paths.
pub const DEFAULT_EPS: f64 = 1e-9;

/// A finite variable. Value `k` is labelled `values[k]` when labels are
/// present, and `k` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub cardinality: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl Variable {
    pub fn new(name: impl Into<String>, cardinality: usize) -> Variable {
        Variable {
            name: name.into(),
            cardinality,
            values: None,
        }
    }

    pub fn labelled(name: impl Into<String>, values: Vec<f64>) -> Variable {
        Variable {
            name: name.into(),
            cardinality: values.len(),
            values: Some(values),
        }
    }

    pub fn value(&self, k: usize) -> f64 {
        self.values.as_ref().map_or(k as f64, |v| v[k])
    }
}

fn table_size(cards: impl IntoIterator<Item = usize>) -> Result<usize> {
    let mut size: usize = 1;
    for c in cards {
        size = size.saturating_mul(c);
    }
    if size > MAX_TABLE_ENTRIES {
        return Err(Error::TableTooLarge {
            entries: size,
            cap: MAX_TABLE_ENTRIES,
        });
    }
    Ok(size)
}

fn strides(cards: &[usize]) -> Vec<usize> {
    let mut s = vec![1; cards.len()];
    for i in (0..cards.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * cards[i + 1];
    }
    s
}

#[derive(Deserialize)]
struct JointRaw {
    variables: Vec<Variable>,
    probs: Vec<f64>,
}

/// Probability table over finitely many finite variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JointRaw")]
pub struct DiscreteJoint {
    variables: Vec<Variable>,
    probs: Vec<f64>,
}

impl TryFrom<JointRaw> for DiscreteJoint {
    type Error = Error;

    fn try_from(raw: JointRaw) -> Result<Self> {
        DiscreteJoint::new(raw.variables, raw.probs)
    }
}

impl DiscreteJoint {
    /// Validates shape, nonnegativity and total mass.
    pub fn new(variables: Vec<Variable>, probs: Vec<f64>) -> Result<DiscreteJoint> {
        Self::check_variables(&variables)?;
        let size = table_size(variables.iter().map(|v| v.cardinality))?;
        if probs.len() != size {
            return Err(Error::InvalidDistribution(format!(
                "table has {} entries, cardinalities imply {size}",
                probs.len()
            )));
        }
        if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidDistribution(format!("entry {bad} is not a probability")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("entries sum to {total}")));
        }
        Ok(DiscreteJoint { variables, probs })
    }

    /// Normalizes nonnegative weights into a joint.
    pub fn from_weights(variables: Vec<Variable>, mut weights: Vec<f64>) -> Result<DiscreteJoint> {
        Self::check_variables(&variables)?;
        let size = table_size(variables.iter().map(|v| v.cardinality))?;
        if weights.len() != size {
            return Err(Error::InvalidDistribution(format!(
                "table has {} entries, cardinalities imply {size}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidDistribution("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidDistribution("weights have zero total mass".into()));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(DiscreteJoint {
            variables,
            probs: weights,
        })
    }

    pub fn uniform(variables: Vec<Variable>) -> Result<DiscreteJoint> {
        let size = table_size(variables.iter().map(|v| v.cardinality))?;
        Self::from_weights(variables, vec![1.0; size])
    }

    /// Point mass at `values`.
    pub fn point_mass(variables: Vec<Variable>, values: &[usize]) -> Result<DiscreteJoint> {
        let size = table_size(variables.iter().map(|v| v.cardinality))?;
        let mut probs = vec![0.0; size];
        let probe = DiscreteJoint {
            variables,
            probs: Vec::new(),
        };
        let idx = probe.encode(values)?;
        probs[idx] = 1.0;
        Ok(DiscreteJoint {
            variables: probe.variables,
            probs,
        })
    }

    fn check_variables(variables: &[Variable]) -> Result<()> {
        for (k, v) in variables.iter().enumerate() {
            if v.cardinality == 0 {
                return Err(Error::InvalidDistribution(format!("`{}` has cardinality 0", v.name)));
            }
            if let Some(vals) = &v.values {
                if vals.len() != v.cardinality {
                    return Err(Error::InvalidDistribution(format!(
                        "`{}` has {} labels for cardinality {}",
                        v.name,
                        vals.len(),
                        v.cardinality
                    )));
                }
            }
            if variables[..k].iter().any(|w| w.name == v.name) {
                return Err(Error::InvalidDistribution(format!("duplicate variable `{}`", v.name)));
            }
        }
        Ok(())
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn names(&self) -> Vec<String> {
        self.variables.iter().map(|v| v.name.clone()).collect()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.variables.iter().map(|v| v.cardinality).collect()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.variables
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn encode(&self, values: &[usize]) -> Result<usize> {
        if values.len() != self.variables.len() {
            return Err(Error::InvalidArgument("assignment length mismatch".into()));
        }
        let mut idx = 0;
        for (v, &x) in self.variables.iter().zip(values) {
            if x >= v.cardinality {
                return Err(Error::ValueOutOfRange {
                    variable: v.name.clone(),
                    value: x,
                    cardinality: v.cardinality,
                });
            }
            idx = idx * v.cardinality + x;
        }
        Ok(idx)
    }

    pub fn decode(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.variables.len()];
        for (k, v) in self.variables.iter().enumerate().rev() {
            out[k] = idx % v.cardinality;
            idx /= v.cardinality;
        }
        out
    }

    pub fn prob(&self, values: &[usize]) -> Result<f64> {
        Ok(self.probs[self.encode(values)?])
    }

    /// Joint of the listed variables, in the listed order.
    pub fn marginal(&self, keep: &[usize]) -> Result<DiscreteJoint> {
        for (k, &i) in keep.iter().enumerate() {
            if i >= self.variables.len() || keep[..k].contains(&i) {
                return Err(Error::InvalidArgument("marginal indices must be distinct and in range".into()));
            }
        }
        let variables: Vec<Variable> = keep.iter().map(|&i| self.variables[i].clone()).collect();
        let probs = self.project(keep);
        Ok(DiscreteJoint { variables, probs })
    }

    pub fn marginal_by_name<S: AsRef<str>>(&self, keep: &[S]) -> Result<DiscreteJoint> {
        let idx: Vec<usize> = keep.iter().map(|n| self.index_of(n.as_ref())).collect::<Result<_>>()?;
        self.marginal(&idx)
    }

    /// Summed table over `keep` (in that order), without validation.
    fn project(&self, keep: &[usize]) -> Vec<f64> {
        let cards = self.cardinalities();
        let src = strides(&cards);
        let kc: Vec<usize> = keep.iter().map(|&i| cards[i]).collect();
        let dst = strides(&kc);
        let size: usize = kc.iter().product();
        let mut out = vec![0.0; size];
        for (idx, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let mut t = 0;
            for (k, &i) in keep.iter().enumerate() {
                t += ((idx / src[i]) % cards[i]) * dst[k];
            }
            out[t] += p;
        }
        out
    }

    /// The same distribution with variables reordered to `names`.
    pub fn reordered<S: AsRef<str>>(&self, names: &[S]) -> Result<DiscreteJoint> {
        if names.len() != self.variables.len() {
            return Err(Error::VariableMismatch(format!(
                "joint has {} variables, {} requested",
                self.variables.len(),
                names.len()
            )));
        }
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.index_of(n.as_ref())
                    .map_err(|_| Error::VariableMismatch(format!("`{}` is not a variable of the joint", n.as_ref())))
            })
            .collect::<Result<_>>()?;
        self.marginal(&idx)
    }

    /// Reorders to the graph's node order, failing unless the variable sets
    /// coincide.
    pub fn aligned_to(&self, g: &Dag) -> Result<DiscreteJoint> {
        if self.names() == g.names() {
            return Ok(self.clone());
        }
        self.reordered(g.names())
    }

    /// Conditional of `target` given `given`, with the mass of each context.
    pub fn conditional(&self, target: usize, given: &[usize]) -> Result<(ConditionalTable, Vec<f64>)> {
        let mut keep = given.to_vec();
        keep.push(target);
        let table = self.marginal(&keep)?;
        let tc = self.variables[target].cardinality;
        let n_ctx = table.probs.len() / tc;
        let mut probs = table.probs;
        let mut defined = vec![false; n_ctx];
        let mut mass = vec![0.0; n_ctx];
        for c in 0..n_ctx {
            let slice = &mut probs[c * tc..(c + 1) * tc];
            let m: f64 = slice.iter().sum();
            mass[c] = m;
            if m > 0.0 {
                defined[c] = true;
                slice.iter_mut().for_each(|x| *x /= m);
            } else {
                slice.iter_mut().for_each(|x| *x = 0.0);
            }
        }
        let ct = ConditionalTable {
            target: self.variables[target].name.clone(),
            target_cardinality: tc,
            parents: given.iter().map(|&i| self.variables[i].name.clone()).collect(),
            parent_cardinalities: given.iter().map(|&i| self.variables[i].cardinality).collect(),
            probs,
            defined,
        };
        Ok((ct, mass))
    }

    /// Draws `n` assignments as value indices.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<usize>> {
        let dist = WeightedIndex::new(&self.probs).expect("validated joint has positive mass");
        (0..n).map(|_| self.decode(dist.sample(rng))).collect()
    }

    /// Draws `n` assignments as value labels.
    pub fn sample_values<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        self.sample(n, rng)
            .into_iter()
            .map(|row| row.iter().enumerate().map(|(k, &x)| self.variables[k].value(x)).collect())
            .collect()
    }

    /// Relative frequencies of index rows.
    pub fn empirical(variables: Vec<Variable>, rows: &[Vec<usize>]) -> Result<DiscreteJoint> {
        if rows.is_empty() {
            return Err(Error::InsufficientData("no rows".into()));
        }
        let size = table_size(variables.iter().map(|v| v.cardinality))?;
        let probe = DiscreteJoint {
            variables,
            probs: Vec::new(),
        };
        let mut counts = vec![0.0; size];
        for r in rows {
            counts[probe.encode(r)?] += 1.0;
        }
        DiscreteJoint::from_weights(probe.variables, counts)
    }

    /// Expected value of the label of variable `i`.
    pub fn expectation(&self, i: usize) -> f64 {
        let m = self.project(&[i]);
        m.iter().enumerate().map(|(k, p)| p * self.variables[i].value(k)).sum()
    }
}

/// Total-variation distance.
pub fn tv_distance(p: &DiscreteJoint, q: &DiscreteJoint) -> Result<f64> {
    if p.cardinalities() != q.cardinalities() {
        return Err(Error::VariableMismatch("tables have different shapes".into()));
    }
    Ok(tv_slices(&p.probs, &q.probs))
}

fn tv_slices(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Merges per-distribution outcome lists into joints over a shared label set.
///
/// Each distribution is a list of `(values, weight)` pairs, one value per
/// variable. Labels closer than `1e-9` (relative) are treated as equal.
pub fn joints_from_outcomes<S: AsRef<str>>(names: &[S], dists: &[Vec<(Vec<f64>, f64)>]) -> Result<Vec<DiscreteJoint>> {
    let nv = names.len();
    let mut labels: Vec<Vec<f64>> = vec![Vec::new(); nv];
    for d in dists {
        for (vals, _) in d {
            if vals.len() != nv {
                return Err(Error::InvalidArgument("outcome length mismatch".into()));
            }
            for (k, &v) in vals.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::InvalidArgument("outcome values must be finite".into()));
                }
                labels[k].push(v);
            }
        }
    }
    for l in labels.iter_mut() {
        l.sort_by(f64::total_cmp);
        let mut merged: Vec<f64> = Vec::with_capacity(l.len());
        for &v in l.iter() {
            match merged.last() {
                Some(&last) if close(last, v) => {}
                _ => merged.push(v),
            }
        }
        *l = merged;
    }
    let variables: Vec<Variable> = names
        .iter()
        .zip(&labels)
        .map(|(n, l)| Variable::labelled(n.as_ref(), l.clone()))
        .collect();
    let size = table_size(variables.iter().map(|v| v.cardinality))?;
    let cards: Vec<usize> = variables.iter().map(|v| v.cardinality).collect();
    let st = strides(&cards);
    dists
        .iter()
        .map(|d| {
            let mut w = vec![0.0; size];
            for (vals, p) in d {
                let mut idx = 0;
                for (k, &v) in vals.iter().enumerate() {
                    idx += label_index(&labels[k], v) * st[k];
                }
                w[idx] += p;
            }
            DiscreteJoint::from_weights(variables.clone(), w)
        })
        .collect()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

fn label_index(labels: &[f64], v: f64) -> usize {
    let pos = labels.partition_point(|&l| l < v && !close(l, v));
    if pos < labels.len() && close(labels[pos], v) {
        pos
    } else {
        pos.saturating_sub(1)
    }
}

#[derive(Deserialize)]
struct ConditionalRaw {
    target: String,
    target_cardinality: usize,
    parents: Vec<String>,
    parent_cardinalities: Vec<usize>,
    probs: Vec<f64>,
    defined: Option<Vec<bool>>,
}

/// `p(target | parents)`; one slice of `target_cardinality` entries per
/// parent context, contexts row-major over the parents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConditionalRaw")]
pub struct ConditionalTable {
    pub target: String,
    pub target_cardinality: usize,
    pub parents: Vec<String>,
    pub parent_cardinalities: Vec<usize>,
    pub probs: Vec<f64>,
    /// False for contexts with zero probability; their slice is all zeros.
    pub defined: Vec<bool>,
}

impl TryFrom<ConditionalRaw> for ConditionalTable {
    type Error = Error;

    fn try_from(raw: ConditionalRaw) -> Result<Self> {
        let n_ctx: usize = raw.parent_cardinalities.iter().product();
        let defined = raw.defined.unwrap_or_else(|| vec![true; n_ctx]);
        ConditionalTable::new(
            raw.target,
            raw.target_cardinality,
            raw.parents,
            raw.parent_cardinalities,
            raw.probs,
            defined,
        )
    }
}

impl ConditionalTable {
    pub fn new(
        target: String,
        target_cardinality: usize,
        parents: Vec<String>,
        parent_cardinalities: Vec<usize>,
        probs: Vec<f64>,
        defined: Vec<bool>,
    ) -> Result<ConditionalTable> {
        if parents.len() != parent_cardinalities.len() {
            return Err(Error::InvalidDistribution("parent cardinalities mismatch".into()));
        }
        let n_ctx = table_size(parent_cardinalities.iter().copied())?;
        table_size([n_ctx, target_cardinality])?;
        if probs.len() != n_ctx * target_cardinality || defined.len() != n_ctx {
            return Err(Error::InvalidDistribution(format!(
                "conditional of `{target}` has the wrong shape"
            )));
        }
        for c in 0..n_ctx {
            let s = &probs[c * target_cardinality..(c + 1) * target_cardinality];
            if s.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidDistribution(format!("negative entry in `{target}`")));
            }
            let total: f64 = s.iter().sum();
            let ok = if defined[c] {
                (total - 1.0).abs() <= SUM_TOLERANCE
            } else {
                total == 0.0
            };
            if !ok {
                return Err(Error::InvalidDistribution(format!(
                    "context {c} of `{target}` sums to {total}"
                )));
            }
        }
        Ok(ConditionalTable {
            target,
            target_cardinality,
            parents,
            parent_cardinalities,
            probs,
            defined,
        })
    }

    /// Normalizes each context of nonnegative weights; all-zero contexts are
    /// left undefined.
    pub fn from_weights(
        target: String,
        target_cardinality: usize,
        parents: Vec<String>,
        parent_cardinalities: Vec<usize>,
        mut weights: Vec<f64>,
    ) -> Result<ConditionalTable> {
        let n_ctx = parent_cardinalities.iter().product::<usize>();
        if weights.len() != n_ctx * target_cardinality {
            return Err(Error::InvalidDistribution(format!(
                "conditional of `{target}` has the wrong shape"
            )));
        }
        let mut defined = vec![false; n_ctx];
        for c in 0..n_ctx {
            let s = &mut weights[c * target_cardinality..(c + 1) * target_cardinality];
            let total: f64 = s.iter().sum();
            if total > 0.0 {
                s.iter_mut().for_each(|x| *x /= total);
                defined[c] = true;
            }
        }
        Self::new(target, target_cardinality, parents, parent_cardinalities, weights, defined)
    }

    pub fn n_contexts(&self) -> usize {
        self.defined.len()
    }

    pub fn slice(&self, context: usize) -> &[f64] {
        &self.probs[context * self.target_cardinality..(context + 1) * self.target_cardinality]
    }

    /// Same conditional with parents listed in `order`.
    pub fn reindexed<S: AsRef<str>>(&self, order: &[S]) -> Result<ConditionalTable> {
        if order.len() != self.parents.len() {
            return Err(Error::VariableMismatch(format!(
                "conditional of `{}` has parents {:?}",
                self.target, self.parents
            )));
        }
        let perm: Vec<usize> = order
            .iter()
            .map(|n| {
                self.parents.iter().position(|p| p == n.as_ref()).ok_or_else(|| {
                    Error::VariableMismatch(format!(
                        "conditional of `{}` does not condition on `{}`",
                        self.target,
                        n.as_ref()
                    ))
                })
            })
            .collect::<Result<_>>()?;
        let new_cards: Vec<usize> = perm.iter().map(|&k| self.parent_cardinalities[k]).collect();
        let old_strides = strides(&self.parent_cardinalities);
        let n_ctx = self.n_contexts();
        let tc = self.target_cardinality;
        let mut probs = vec![0.0; self.probs.len()];
        let mut defined = vec![false; n_ctx];
        let mut ctx = vec![0usize; perm.len()];
        for new_c in 0..n_ctx {
            let mut rem = new_c;
            for k in (0..perm.len()).rev() {
                ctx[k] = rem % new_cards[k];
                rem /= new_cards[k];
            }
            let old_c: usize = perm.iter().zip(&ctx).map(|(&o, &v)| v * old_strides[o]).sum();
            probs[new_c * tc..(new_c + 1) * tc].copy_from_slice(self.slice(old_c));
            defined[new_c] = self.defined[old_c];
        }
        Ok(ConditionalTable {
            target: self.target.clone(),
            target_cardinality: tc,
            parents: order.iter().map(|s| s.as_ref().to_string()).collect(),
            parent_cardinalities: new_cards,
            probs,
            defined,
        })
    }
}

/// One conditional per node, conditioning on the node's parents in node
/// order. Contexts with zero probability are left undefined.
pub fn factorize(p: &DiscreteJoint, g: &Dag) -> Result<Vec<ConditionalTable>> {
    let p = p.aligned_to(g)?;
    (0..g.len())
        .map(|j| p.conditional(j, &g.parents(j).to_vec()).map(|(t, _)| t))
        .collect()
}

/// Product of conditionals over `g`, with `variables` in node order.
///
/// Fails if an undefined context is needed with positive probability.
pub fn from_factors(variables: &[Variable], g: &Dag, factors: &[ConditionalTable]) -> Result<DiscreteJoint> {
    if variables.len() != g.len() || factors.len() != g.len() {
        return Err(Error::VariableMismatch("factor count does not match the graph".into()));
    }
    for (j, v) in variables.iter().enumerate() {
        if v.name != g.name(j) {
            return Err(Error::VariableMismatch(format!("expected `{}`, found `{}`", g.name(j), v.name)));
        }
    }
    let cards: Vec<usize> = variables.iter().map(|v| v.cardinality).collect();
    let size = table_size(cards.iter().copied())?;
    let st = strides(&cards);
    let mut plans = Vec::with_capacity(g.len());
    for j in 0..g.len() {
        let f = &factors[j];
        let pa = g.parents(j).to_vec();
        let f = if f.parents.len() == pa.len() && f.parents.iter().zip(&pa).all(|(a, &b)| a == g.name(b)) {
            f.clone()
        } else {
            f.reindexed(&g.set_names(g.parents(j)))?
        };
        if f.target != g.name(j) || f.target_cardinality != cards[j] {
            return Err(Error::VariableMismatch(format!("factor for `{}` does not match", g.name(j))));
        }
        if f.parent_cardinalities.iter().zip(&pa).any(|(&c, &p)| c != cards[p]) {
            return Err(Error::VariableMismatch(format!(
                "parent cardinalities of `{}` do not match",
                g.name(j)
            )));
        }
        let pst = strides(&f.parent_cardinalities);
        plans.push((f, pa, pst));
    }
    let order = g.topological_order();
    let mut probs = vec![0.0; size];
    let mut vals = vec![0usize; g.len()];
    for (idx, out) in probs.iter_mut().enumerate() {
        for k in 0..g.len() {
            vals[k] = (idx / st[k]) % cards[k];
        }
        let mut acc = 1.0;
        for &j in order {
            let (f, pa, pst) = &plans[j];
            let ctx: usize = pa.iter().zip(pst).map(|(&p, &s)| vals[p] * s).sum();
            if !f.defined[ctx] {
                if acc > 0.0 {
                    return Err(Error::UndefinedContext(g.name(j).to_string()));
                }
                break;
            }
            acc *= f.probs[ctx * f.target_cardinality + vals[j]];
            if acc == 0.0 {
                break;
            }
        }
        *out = acc;
    }
    DiscreteJoint::from_weights(variables.to_vec(), probs)
}

/// TV distance between `p` and the product of its own factors over `g`.
///
/// Contexts of zero probability under `p` get uniform conditionals; if the
/// product reaches one, it puts mass where `p` has none and the residual is
/// positive.
pub fn factorization_residual(p: &DiscreteJoint, g: &Dag) -> Result<f64> {
    let p = p.aligned_to(g)?;
    let mut factors = factorize(&p, g)?;
    for t in factors.iter_mut() {
        let k = t.target_cardinality;
        for c in 0..t.defined.len() {
            if !t.defined[c] {
                t.probs[c * k..(c + 1) * k].fill(1.0 / k as f64);
                t.defined[c] = true;
            }
        }
    }
    let q = from_factors(p.variables(), g, &factors)?;
    tv_distance(&p, &q)
}

/// Max over contexts `c` of `TV(p(a,b|c), p(a|c) p(b|c))`.
pub fn ci_residual(p: &DiscreteJoint, a: &[usize], b: &[usize], c: &[usize]) -> Result<f64> {
    let mut keep = c.to_vec();
    keep.extend_from_slice(a);
    keep.extend_from_slice(b);
    let m = p.marginal(&keep)?;
    let cards = p.cardinalities();
    let na: usize = a.iter().map(|&i| cards[i]).product();
    let nb: usize = b.iter().map(|&i| cards[i]).product();
    let block = na * nb;
    let mut worst: f64 = 0.0;
    let mut pa = vec![0.0; na];
    let mut pb = vec![0.0; nb];
    for ctx in m.probs.chunks(block) {
        let mass: f64 = ctx.iter().sum();
        if mass <= 0.0 {
            continue;
        }
        pa.iter_mut().for_each(|x| *x = 0.0);
        pb.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..na {
            for j in 0..nb {
                let v = ctx[i * nb + j] / mass;
                pa[i] += v;
                pb[j] += v;
            }
        }
        let mut tv = 0.0;
        for i in 0..na {
            for j in 0..nb {
                tv += (ctx[i * nb + j] / mass - pa[i] * pb[j]).abs();
            }
        }
        worst = worst.max(0.5 * tv);
    }
    Ok(worst)
}

/// A separation statement `a ⟂ b | c` of the graph, with the measured
/// conditional-independence residual.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationCheck {
    pub a: Vec<String>,
    pub b: Vec<String>,
    pub c: Vec<String>,
    pub residual: f64,
}

/// Separation statements implied by `g`: every disjoint triple for graphs up
/// to `cap` nodes (with `a` before `b` in node order), and the local Markov
/// statements beyond that.
pub fn implied_separations(g: &Dag, cap: usize) -> Vec<(NodeSet, NodeSet, NodeSet)> {
    let n = g.len();
    let mut out = Vec::new();
    if n <= cap {
        let total = 4usize.pow(n as u32);
        for code in 0..total {
            let (mut a, mut b, mut c) = (NodeSet::empty(), NodeSet::empty(), NodeSet::empty());
            let mut k = code;
            for i in 0..n {
                match k % 4 {
                    1 => a.insert(i),
                    2 => b.insert(i),
                    3 => c.insert(i),
                    _ => {}
                }
                k /= 4;
            }
            if a.is_empty() || b.is_empty() || a.bits().trailing_zeros() > b.bits().trailing_zeros() {
                continue;
            }
            if g.d_separated(a, b, c).unwrap_or(false) {
                out.push((a, b, c));
            }
        }
    } else {
        for j in 0..n {
            let pa = g.parents(j);
            let rest = g
                .all_nodes()
                .difference(g.descendants(j))
                .difference(pa)
                .difference(NodeSet::singleton(j));
            if !rest.is_empty() {
                out.push((NodeSet::singleton(j), rest, pa));
            }
        }
    }
    out
}

/// The worst violated separation statement, if any exceeds `eps`.
pub fn markov_violation(p: &DiscreteJoint, g: &Dag, eps: f64) -> Result<Option<SeparationCheck>> {
    let p = p.aligned_to(g)?;
    let mut worst: Option<SeparationCheck> = None;
    for (a, b, c) in implied_separations(g, DEFAULT_EXHAUSTIVE_CAP) {
        let r = ci_residual(&p, &a.to_vec(), &b.to_vec(), &c.to_vec())?;
        if r > eps && worst.as_ref().is_none_or(|w| r > w.residual) {
            worst = Some(SeparationCheck {
                a: g.set_names(a),
                b: g.set_names(b),
                c: g.set_names(c),
                residual: r,
            });
        }
    }
    Ok(worst)
}

/// Whether every separation implied by `g` holds in `p` up to `eps`.
pub fn is_markov(p: &DiscreteJoint, g: &Dag, eps: f64) -> Result<bool> {
    Ok(markov_violation(p, g, eps)?.is_none())
}

fn check_node(g: &Dag, j: usize) -> Result<()> {
    if j >= g.len() {
        return Err(Error::InvalidArgument(format!("node index {j} out of range")));
    }
    Ok(())
}

/// Truncated factorization: the factor of `j` becomes a point mass at `v`.
pub fn hard_intervention(p: &DiscreteJoint, g: &Dag, j: usize, v: usize) -> Result<DiscreteJoint> {
    check_node(g, j)?;
    let p = p.aligned_to(g)?;
    let card = p.variables()[j].cardinality;
    if v >= card {
        return Err(Error::ValueOutOfRange {
            variable: g.name(j).to_string(),
            value: v,
            cardinality: card,
        });
    }
    let mut factors = factorize(&p, g)?;
    let f = &mut factors[j];
    for c in 0..f.n_contexts() {
        for k in 0..card {
            f.probs[c * card + k] = if k == v { 1.0 } else { 0.0 };
        }
        f.defined[c] = true;
    }
    from_factors(p.variables(), g, &factors)
}

/// Replaces the factor of `j` with `t`, which must condition on exactly the
/// parents of `j`.
pub fn soft_intervention(p: &DiscreteJoint, g: &Dag, j: usize, t: &ConditionalTable) -> Result<DiscreteJoint> {
    check_node(g, j)?;
    let p = p.aligned_to(g)?;
    if t.target != g.name(j) {
        return Err(Error::VariableMismatch(format!(
            "conditional targets `{}`, node is `{}`",
            t.target,
            g.name(j)
        )));
    }
    let pa_names = g.set_names(g.parents(j));
    let mut sorted_t = t.parents.clone();
    let mut sorted_pa = pa_names.clone();
    sorted_t.sort();
    sorted_pa.sort();
    if sorted_t != sorted_pa {
        return Err(Error::VariableMismatch(format!(
            "conditional of `{}` conditions on {:?}, parents are {:?}",
            t.target, t.parents, pa_names
        )));
    }
    let t = t.reindexed(&pa_names)?;
    let mut factors = factorize(&p, g)?;
    factors[j] = t;
    from_factors(p.variables(), g, &factors)
}

/// Per-node comparison of two joints' conditionals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorChange {
    pub node: String,
    /// Max over contexts positive under both of the TV distance of the slices.
    pub distance: f64,
    /// Some context is positive under exactly one of the joints.
    pub support_mismatch: bool,
}

impl FactorChange {
    pub fn changed(&self, eps: f64) -> bool {
        self.support_mismatch || self.distance > eps
    }
}

/// Compares the conditionals of `p` and `q` over `g`, node by node.
pub fn factor_changes(p: &DiscreteJoint, q: &DiscreteJoint, g: &Dag) -> Result<Vec<FactorChange>> {
    let p = p.aligned_to(g)?;
    let q = q.aligned_to(g)?;
    if p.cardinalities() != q.cardinalities() {
        return Err(Error::VariableMismatch("joints have different cardinalities".into()));
    }
    (0..g.len())
        .map(|j| {
            let pa = g.parents(j).to_vec();
            let (fp, mp) = p.conditional(j, &pa)?;
            let (fq, mq) = q.conditional(j, &pa)?;
            let mut distance: f64 = 0.0;
            let mut support_mismatch = false;
            for c in 0..fp.n_contexts() {
                match (mp[c] > 0.0, mq[c] > 0.0) {
                    (false, false) => {}
                    (true, true) => distance = distance.max(tv_slices(fp.slice(c), fq.slice(c))),
                    _ => support_mismatch = true,
                }
            }
            Ok(FactorChange {
                node: g.name(j).to_string(),
                distance,
                support_mismatch,
            })
        })
        .collect()
}

/// Nodes whose conditional differs between `p` and `q` by more than `eps`.
pub fn changed_factors(p: &DiscreteJoint, q: &DiscreteJoint, g: &Dag, eps: f64) -> Result<NodeSet> {
    Ok(factor_changes(p, q, g)?
        .iter()
        .enumerate()
        .filter(|(_, c)| c.changed(eps))
        .map(|(j, _)| j)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn residual_sees_mass_outside_the_support() {
        // A and B never both 1, so C's conditional is undefined there; the
        // product over the empty graph on A, B reaches that context.
        let vars = vec![Variable::new("A", 2), Variable::new("B", 2), Variable::new("C", 2)];
        let p = DiscreteJoint::new(vars, vec![0.2, 0.1, 0.1, 0.2, 0.3, 0.1, 0.0, 0.0]).unwrap();
        let g = Dag::new(&["A", "B", "C"], &[("A", "C"), ("B", "C")]).unwrap();
        let r = factorization_residual(&p, &g).unwrap();
        // p(A=1) p(B=1) = 0.4 * 0.3 is the mass the product moves off the support.
        assert!(r >= 0.12 - 1e-12, "{r}");
    }
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bin(name: &str) -> Variable {
        Variable::new(name, 2)
    }

    fn xy() -> DiscreteJoint {
        DiscreteJoint::new(vec![bin("X"), bin("Y")], vec![0.3, 0.2, 0.1, 0.4]).unwrap()
    }

    #[test]
    fn validation() {
        assert!(DiscreteJoint::new(vec![bin("X")], vec![0.5, 0.6]).is_err());
        assert!(DiscreteJoint::new(vec![bin("X")], vec![1.5, -0.5]).is_err());
        assert!(DiscreteJoint::new(vec![bin("X")], vec![1.0]).is_err());
        assert!(matches!(
            DiscreteJoint::uniform((0..21).map(|i| bin(&format!("V{i}"))).collect()),
            Err(Error::TableTooLarge { .. })
        ));
    }

    #[test]
    fn independent_coins_factorize_to_marginals() {
        let p = DiscreteJoint::uniform(vec![bin("X"), bin("Y")]).unwrap();
        let g = Dag::empty(&["X", "Y"]).unwrap();
        let f = factorize(&p, &g).unwrap();
        assert_eq!(f[0].probs, vec![0.5, 0.5]);
        assert_eq!(f[1].probs, vec![0.5, 0.5]);
    }

    #[test]
    fn factor_roundtrip() {
        let g = Dag::new(&["X", "Y"], &[("X", "Y")]).unwrap();
        let p = xy();
        let q = from_factors(p.variables(), &g, &factorize(&p, &g).unwrap()).unwrap();
        assert!(tv_distance(&p, &q).unwrap() < 1e-12);
    }

    #[test]
    fn markov_checks() {
        let full = Dag::new(&["X", "Y"], &[("X", "Y")]).unwrap();
        let empty = Dag::empty(&["X", "Y"]).unwrap();
        assert!(is_markov(&xy(), &full, 1e-12).unwrap());
        let v = markov_violation(&xy(), &empty, 1e-12).unwrap().unwrap();
        assert_eq!((v.a.as_slice(), v.b.as_slice()), (&["X".to_string()][..], &["Y".to_string()][..]));
    }

    #[test]
    fn hard_intervention_on_source_equals_conditioning() {
        let g = Dag::new(&["X", "Y"], &[("X", "Y")]).unwrap();
        let p = xy();
        let q = hard_intervention(&p, &g, 0, 1).unwrap();
        // p(y | x=1) = (0.2, 0.8)
        assert!((q.prob(&[1, 0]).unwrap() - 0.2).abs() < 1e-12);
        assert!((q.prob(&[1, 1]).unwrap() - 0.8).abs() < 1e-12);
        let r = hard_intervention(&p, &g, 1, 0).unwrap();
        let (mx, mr) = (p.marginal(&[0]).unwrap(), r.marginal(&[0]).unwrap());
        assert!(tv_distance(&mx, &mr).unwrap() < 1e-12);
        assert!(matches!(hard_intervention(&p, &g, 1, 2), Err(Error::ValueOutOfRange { .. })));
    }

    #[test]
    fn hard_intervention_into_unreachable_context_fails() {
        let g = Dag::new(&["X", "Y"], &[("X", "Y")]).unwrap();
        let p = DiscreteJoint::new(vec![bin("X"), bin("Y")], vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        assert!(matches!(hard_intervention(&p, &g, 0, 1), Err(Error::UndefinedContext(_))));
    }

    #[test]
    fn soft_intervention_checks_parents() {
        let g = Dag::new(&["X", "Y"], &[("X", "Y")]).unwrap();
        let p = xy();
        let f = factorize(&p, &g).unwrap();
        assert_eq!(soft_intervention(&p, &g, 1, &f[1]).unwrap(), from_factors(p.variables(), &g, &f).unwrap());
        assert!(matches!(soft_intervention(&p, &g, 1, &f[0]), Err(Error::VariableMismatch(_))));
        let t = ConditionalTable::new("Y".into(), 2, vec![], vec![], vec![0.9, 0.1], vec![true]).unwrap();
        assert!(soft_intervention(&p, &g, 1, &t).is_err());
    }

    #[test]
    fn changed_factors_zero_context_rules() {
        let g = Dag::new(&["X", "Y"], &[("X", "Y")]).unwrap();
        let p = DiscreteJoint::new(vec![bin("X"), bin("Y")], vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        let q = DiscreteJoint::new(vec![bin("X"), bin("Y")], vec![0.2, 0.8, 0.0, 0.0]).unwrap();
        assert_eq!(changed_factors(&p, &q, &g, 1e-9).unwrap().to_vec(), vec![1]);
        let r = DiscreteJoint::new(vec![bin("X"), bin("Y")], vec![0.25, 0.25, 0.25, 0.25]).unwrap();
        let ch = factor_changes(&p, &r, &g).unwrap();
        assert!(ch[1].support_mismatch);
        assert_eq!(changed_factors(&p, &r, &g, 1e-9).unwrap().to_vec(), vec![0, 1]);
    }

    #[test]
    fn tv_extremes() {
        let a = DiscreteJoint::point_mass(vec![bin("X")], &[0]).unwrap();
        let b = DiscreteJoint::point_mass(vec![bin("X")], &[1]).unwrap();
        assert_eq!(tv_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(tv_distance(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn conditional_reindexing() {
        let p = DiscreteJoint::from_weights(
            vec![bin("A"), Variable::new("B", 3), bin("C")],
            (1..=12).map(f64::from).collect(),
        )
        .unwrap();
        let (t, _) = p.conditional(2, &[0, 1]).unwrap();
        let (u, _) = p.conditional(2, &[1, 0]).unwrap();
        assert_eq!(t.reindexed(&["B", "A"]).unwrap(), u);
    }

    #[test]
    fn outcomes_share_labels() {
        let a = vec![(vec![1.0, 2.0], 0.5), (vec![1.0 + 1e-13, 3.0], 0.5)];
        let b = vec![(vec![4.0, 2.0], 1.0)];
        let js = joints_from_outcomes(&["P", "E"], &[a, b]).unwrap();
        assert_eq!(js[0].variables()[0].values.as_deref(), Some(&[1.0, 4.0][..]));
        assert_eq!(js[0].variables(), js[1].variables());
        assert!((js[0].prob(&[0, 1]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empirical_converges() {
        let p = xy();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows = p.sample(20_000, &mut rng);
        let e = DiscreteJoint::empirical(p.variables().to_vec(), &rows).unwrap();
        assert!(tv_distance(&p, &e).unwrap() < 0.02);
    }

    #[test]
    fn json_roundtrip_and_validation() {
        let p = xy();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<DiscreteJoint>(&s).unwrap(), p);
        assert!(serde_json::from_str::<DiscreteJoint>(
            r#"{"variables":[{"name":"X","cardinality":2}],"probs":[0.4,0.4]}"#
        )
        .is_err());
    }
}
