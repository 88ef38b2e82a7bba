use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;

use super::noise::NoiseSpec;
use crate::data::Dataset;
use crate::discrete::{joints_from_outcomes, DiscreteJoint, MAX_TABLE_ENTRIES};
use crate::error::{Error, Result};
use crate::graph::{Dag, NodeSet};
use crate::rng::{mix, stream_rng};

/// Default cap on enumerated units (noise configurations).
pub const DEFAULT_UNIT_CAP: usize = 1 << 16;

/// `f(parent values, noise tuple)`; parent values come in node order.
pub type Mechanism = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Finitely supported noise. Each outcome is a tuple, which lets one node's
/// noise carry a response for every configuration of some controller.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteNoise {
    pub values: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
}

impl FiniteNoise {
    pub fn new(values: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<FiniteNoise> {
        if values.is_empty() || values.len() != probs.len() {
            return Err(Error::InvalidParameter("noise needs one probability per outcome".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidParameter("noise probabilities must be nonnegative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("noise probabilities sum to {total}")));
        }
        Ok(FiniteNoise { values, probs })
    }

    /// Point mass at the empty tuple, for deterministic mechanisms.
    pub fn none() -> FiniteNoise {
        FiniteNoise {
            values: vec![Vec::new()],
            probs: vec![1.0],
        }
    }

    pub fn scalar(outcomes: &[(f64, f64)]) -> Result<FiniteNoise> {
        FiniteNoise::new(
            outcomes.iter().map(|&(v, _)| vec![v]).collect(),
            outcomes.iter().map(|&(_, p)| p).collect(),
        )
    }

    pub fn from_spec(spec: &NoiseSpec) -> Result<FiniteNoise> {
        spec.validate()?;
        let sup = spec
            .support()
            .ok_or_else(|| Error::InvalidParameter(format!("{spec:?} has no finite support")))?;
        FiniteNoise::scalar(&sup)
    }

    /// Independent product: outcomes are concatenated tuples, the first
    /// factor varying slowest.
    pub fn product(parts: &[FiniteNoise]) -> Result<FiniteNoise> {
        let mut acc = FiniteNoise::none();
        for p in parts {
            let size = acc.len().saturating_mul(p.len());
            if size > MAX_TABLE_ENTRIES {
                return Err(Error::StateSpaceTooLarge {
                    states: size,
                    cap: MAX_TABLE_ENTRIES,
                });
            }
            let mut values = Vec::with_capacity(size);
            let mut probs = Vec::with_capacity(size);
            for (va, pa) in acc.values.iter().zip(&acc.probs) {
                for (vb, pb) in p.values.iter().zip(&p.probs) {
                    let mut v = va.clone();
                    v.extend_from_slice(vb);
                    values.push(v);
                    probs.push(pa * pb);
                }
            }
            acc = FiniteNoise { values, probs };
        }
        Ok(acc)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Declaration of one node of a [`GeneralScm`].
#[derive(Clone)]
pub struct NodeSpec {
    pub name: String,
    pub parents: Vec<String>,
    pub noise: FiniteNoise,
    pub mechanism: Mechanism,
}

impl NodeSpec {
    pub fn new<S: AsRef<str>>(
        name: &str,
        parents: &[S],
        noise: FiniteNoise,
        mechanism: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> NodeSpec {
        NodeSpec {
            name: name.to_string(),
            parents: parents.iter().map(|p| p.as_ref().to_string()).collect(),
            noise,
            mechanism: Arc::new(mechanism),
        }
    }
}

#[derive(Clone)]
struct Node {
    parents: Vec<usize>,
    noise: FiniteNoise,
    mechanism: Mechanism,
}

/// `X_j = f_j(PA_j, N_j)` with independent, finitely supported noises.
///
/// A unit is one noise configuration, stored as an outcome index per node.
#[derive(Clone)]
pub struct GeneralScm {
    nodes: Vec<Node>,
    dag: Dag,
    noise_seeds: Vec<Option<u64>>,
}

impl fmt::Debug for GeneralScm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneralScm").field("dag", &self.dag).finish_non_exhaustive()
    }
}

impl GeneralScm {
    pub fn new(specs: Vec<NodeSpec>) -> Result<GeneralScm> {
        let names: Vec<String> = specs.iter().map(|s| s.name.clone()).collect();
        let mut edges = Vec::new();
        for s in &specs {
            for p in &s.parents {
                edges.push((p.clone(), s.name.clone()));
            }
        }
        let dag = Dag::new(&names, &edges)?;
        let nodes = specs
            .into_iter()
            .enumerate()
            .map(|(j, s)| Node {
                parents: dag.parents(j).to_vec(),
                noise: s.noise,
                mechanism: wrap_parent_order(&dag, j, &s.parents, s.mechanism),
            })
            .collect();
        Ok(GeneralScm {
            noise_seeds: vec![None; names.len()],
            nodes,
            dag,
        })
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn names(&self) -> &[String] {
        self.dag.names()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn noise(&self, j: usize) -> &FiniteNoise {
        &self.nodes[j].noise
    }

    fn eval_node(&self, j: usize, state: &[f64], noise_idx: usize) -> f64 {
        let node = &self.nodes[j];
        let pa: Vec<f64> = node.parents.iter().map(|&p| state[p]).collect();
        (node.mechanism)(&pa, &node.noise.values[noise_idx]) + 0.0
    }

    /// State of a unit.
    pub fn evaluate(&self, unit: &[usize]) -> Vec<f64> {
        let mut x = vec![0.0; self.nodes.len()];
        for &j in self.dag.topological_order() {
            x[j] = self.eval_node(j, &x, unit[j]);
        }
        x
    }

    /// Recomputes every node outside `fixed` from its mechanism, keeping the
    /// values of `fixed` as given.
    pub fn propagate(&self, state: &[f64], unit: &[usize], fixed: NodeSet) -> Vec<f64> {
        let mut x = state.to_vec();
        for &j in self.dag.topological_order() {
            if !fixed.contains(j) {
                x[j] = self.eval_node(j, &x, unit[j]);
            }
        }
        x
    }

    /// The deterministic section `pa_j -> f_j(pa_j, n)` for a fixed noise
    /// outcome.
    pub fn unit_map(&self, j: usize, noise_idx: usize) -> Result<impl Fn(&[f64]) -> f64 + '_> {
        let node = self
            .nodes
            .get(j)
            .ok_or_else(|| Error::InvalidArgument(format!("node index {j} out of range")))?;
        let n = node
            .noise
            .values
            .get(noise_idx)
            .ok_or_else(|| Error::InvalidArgument(format!("noise outcome {noise_idx} out of range")))?;
        Ok(move |pa: &[f64]| (node.mechanism)(pa, n))
    }

    fn node_key(&self, seed: u64, j: usize) -> u64 {
        self.noise_seeds[j].unwrap_or_else(|| mix(seed, j as u64))
    }

    /// Unit of row `row`, drawn per node from independent streams.
    pub fn sample_unit(&self, seed: u64, row: u64) -> Vec<usize> {
        (0..self.nodes.len())
            .map(|j| {
                let probs = &self.nodes[j].noise.probs;
                if probs.len() == 1 {
                    0
                } else {
                    let w = WeightedIndex::new(probs).expect("validated noise");
                    w.sample(&mut stream_rng(self.node_key(seed, j), row))
                }
            })
            .collect()
    }

    pub fn simulate_with_noise(&self, n: usize, seed: u64) -> (Dataset, Vec<Vec<usize>>) {
        let pairs: Vec<(Vec<f64>, Vec<usize>)> = (0..n as u64)
            .into_par_iter()
            .map(|r| {
                let u = self.sample_unit(seed, r);
                (self.evaluate(&u), u)
            })
            .collect();
        let (rows, units) = pairs.into_iter().unzip();
        (
            Dataset {
                columns: self.names().to_vec(),
                rows,
                seed: Some(seed),
            },
            units,
        )
    }

    pub fn simulate(&self, n: usize, seed: u64) -> Dataset {
        self.simulate_with_noise(n, seed).0
    }

    /// Number of distinct units, saturating.
    pub fn unit_count(&self) -> usize {
        self.nodes.iter().fold(1usize, |acc, n| acc.saturating_mul(n.noise.len()))
    }

    /// Every unit with its probability, in lexicographic order.
    pub fn enumerate_units(&self, cap: usize) -> Result<Vec<(Vec<usize>, f64)>> {
        let count = self.unit_count();
        if count > cap {
            return Err(Error::StateSpaceTooLarge { states: count, cap });
        }
        let mut out = vec![(Vec::with_capacity(self.nodes.len()), 1.0)];
        for node in &self.nodes {
            let mut next = Vec::with_capacity(out.len() * node.noise.len());
            for (u, p) in &out {
                for (k, q) in node.noise.probs.iter().enumerate() {
                    if *q > 0.0 {
                        let mut v = u.clone();
                        v.push(k);
                        next.push((v, p * q));
                    }
                }
            }
            out = next;
        }
        Ok(out)
    }

    /// Exact joint of the node values by forward enumeration, merging equal
    /// partial states. Values become labels of the joint's variables.
    pub fn exact_joint(&self) -> Result<DiscreteJoint> {
        let n = self.nodes.len();
        let mut states: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
        states.insert(vec![0; n], 1.0);
        for &j in self.dag.topological_order() {
            let mut next: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
            for (key, p) in &states {
                let x: Vec<f64> = key.iter().map(|b| f64::from_bits(*b)).collect();
                for (k, q) in self.nodes[j].noise.probs.iter().enumerate() {
                    if *q == 0.0 {
                        continue;
                    }
                    let v = self.eval_node(j, &x, k);
                    if !v.is_finite() {
                        return Err(Error::InvalidParameter(format!(
                            "mechanism of `{}` returned {v}",
                            self.dag.name(j)
                        )));
                    }
                    let mut nk = key.clone();
                    nk[j] = v.to_bits();
                    *next.entry(nk).or_insert(0.0) += p * q;
                }
            }
            if next.len() > MAX_TABLE_ENTRIES {
                return Err(Error::StateSpaceTooLarge {
                    states: next.len(),
                    cap: MAX_TABLE_ENTRIES,
                });
            }
            states = next;
        }
        let outcomes: Vec<(Vec<f64>, f64)> = states
            .into_iter()
            .map(|(k, p)| (k.iter().map(|b| f64::from_bits(*b)).collect(), p))
            .collect();
        Ok(joints_from_outcomes(self.names(), &[outcomes])?.remove(0))
    }

    /// Same model with the noise of `j` drawn from an independent stream.
    pub fn structure_preserving_intervention(&self, j: usize, fresh_seed: u64) -> Result<GeneralScm> {
        if j >= self.nodes.len() {
            return Err(Error::InvalidArgument(format!("node index {j} out of range")));
        }
        let mut out = self.clone();
        out.noise_seeds[j] = Some(mix(fresh_seed, u64::MAX - j as u64));
        Ok(out)
    }
}

/// Adapts a mechanism written for the declared parent order to node order.
fn wrap_parent_order(dag: &Dag, j: usize, declared: &[String], f: Mechanism) -> Mechanism {
    let node_order = dag.set_names(dag.parents(j));
    if node_order == declared {
        return f;
    }
    let perm: Vec<usize> = declared
        .iter()
        .map(|d| node_order.iter().position(|n| n == d).expect("parent is a node"))
        .collect();
    Arc::new(move |pa: &[f64], noise: &[f64]| {
        let declared_vals: Vec<f64> = perm.iter().map(|&k| pa[k]).collect();
        f(&declared_vals, noise)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::is_markov;

    fn additive() -> GeneralScm {
        GeneralScm::new(vec![
            NodeSpec::new::<&str>(
                "X",
                &[],
                FiniteNoise::scalar(&[(0.0, 0.5), (1.0, 0.5)]).unwrap(),
                |_, n| n[0],
            ),
            NodeSpec::new(
                "Y",
                &["X"],
                FiniteNoise::scalar(&[(3.0, 0.25), (-1.0, 0.75)]).unwrap(),
                |pa, n| pa[0] + n[0],
            ),
        ])
        .unwrap()
    }

    #[test]
    fn unit_map_of_additive_mechanism() {
        let scm = additive();
        let m = scm.unit_map(1, 0).unwrap();
        assert_eq!(m(&[5.0]), 8.0);
        assert!(scm.unit_map(1, 7).is_err());
    }

    #[test]
    fn constant_mechanism_ignores_noise() {
        let scm = GeneralScm::new(vec![NodeSpec::new::<&str>(
            "C",
            &[],
            FiniteNoise::scalar(&[(1.0, 0.5), (2.0, 0.5)]).unwrap(),
            |_, _| 4.0,
        )])
        .unwrap();
        assert_eq!(scm.unit_map(0, 0).unwrap()(&[]), scm.unit_map(0, 1).unwrap()(&[]));
    }

    #[test]
    fn exact_joint_is_markov_and_matches_units() {
        let scm = additive();
        let p = scm.exact_joint().unwrap();
        assert!(is_markov(&p, scm.dag(), 1e-12).unwrap());
        let units = scm.enumerate_units(16).unwrap();
        assert_eq!(units.len(), 4);
        let total: f64 = units.iter().map(|(_, q)| q).sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert!((p.expectation(1) - (0.5 + 0.0)).abs() < 1e-12);
    }

    #[test]
    fn unit_maps_reproduce_rows() {
        let scm = additive();
        let (d, units) = scm.simulate_with_noise(50, 4);
        for (row, u) in d.rows.iter().zip(&units) {
            assert_eq!(scm.unit_map(1, u[1]).unwrap()(&[row[0]]), row[1]);
        }
    }

    #[test]
    fn declared_parent_order_is_respected() {
        let scm = GeneralScm::new(vec![
            NodeSpec::new::<&str>("A", &[], FiniteNoise::scalar(&[(2.0, 1.0)]).unwrap(), |_, n| n[0]),
            NodeSpec::new::<&str>("B", &[], FiniteNoise::scalar(&[(5.0, 1.0)]).unwrap(), |_, n| n[0]),
            NodeSpec::new("C", &["B", "A"], FiniteNoise::none(), |pa, _| pa[0] - pa[1]),
        ])
        .unwrap();
        assert_eq!(scm.evaluate(&[0, 0, 0])[2], 3.0);
    }

    #[test]
    fn propagation_keeps_fixed_nodes() {
        let scm = additive();
        let u = vec![1, 0];
        let x = scm.evaluate(&u);
        let moved = scm.propagate(&[x[0] + 10.0, x[1]], &u, NodeSet::singleton(0));
        assert_eq!(moved, vec![11.0, 14.0]);
    }
}
