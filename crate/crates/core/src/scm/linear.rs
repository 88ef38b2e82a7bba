use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::general::{FiniteNoise, GeneralScm, NodeSpec};
use super::noise::NoiseSpec;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::linalg::Matrix;
use crate::rng::{mix, stream_rng};

/// Entries below this are treated as structural zeros of a solved matrix.
pub const STRUCTURE_TOL: f64 = 1e-12;

#[derive(Deserialize)]
struct LinearRaw {
    nodes: Vec<String>,
    matrix: Vec<Vec<f64>>,
    offsets: Vec<f64>,
    noise: Vec<NoiseSpec>,
    #[serde(default)]
    noise_seeds: Option<Vec<Option<u64>>>,
}

#[derive(Serialize)]
struct LinearOut<'a> {
    nodes: &'a [String],
    matrix: Vec<Vec<f64>>,
    offsets: &'a [f64],
    noise: &'a [NoiseSpec],
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_seeds: Option<&'a [Option<u64>]>,
}

/// `X = A X + offsets + N` with independent noises.
///
/// Entry `(j, i)` of `A` is the coefficient of `X_i` in the equation for
/// `X_j`. The support of `A` must be acyclic.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "LinearRaw")]
pub struct LinearScm {
    nodes: Vec<String>,
    a: Matrix,
    offsets: Vec<f64>,
    noise: Vec<NoiseSpec>,
    noise_seeds: Vec<Option<u64>>,
    dag: Dag,
}

impl Serialize for LinearScm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        LinearOut {
            nodes: &self.nodes,
            matrix: self.a.rows(),
            offsets: &self.offsets,
            noise: &self.noise,
            noise_seeds: self.noise_seeds.iter().any(Option::is_some).then_some(&self.noise_seeds[..]),
        }
        .serialize(s)
    }
}

impl TryFrom<LinearRaw> for LinearScm {
    type Error = Error;

    fn try_from(raw: LinearRaw) -> Result<Self> {
        let mut scm = LinearScm::new(raw.nodes, Matrix::from_rows(&raw.matrix)?, raw.offsets, raw.noise)?;
        if let Some(seeds) = raw.noise_seeds {
            if seeds.len() != scm.nodes.len() {
                return Err(Error::InvalidArgument("noise_seeds length mismatch".into()));
            }
            scm.noise_seeds = seeds;
        }
        Ok(scm)
    }
}

impl LinearScm {
    pub fn new(nodes: Vec<String>, a: Matrix, offsets: Vec<f64>, noise: Vec<NoiseSpec>) -> Result<LinearScm> {
        let n = nodes.len();
        if a.n != n || offsets.len() != n || noise.len() != n {
            return Err(Error::InvalidArgument(format!(
                "linear model over {n} nodes needs an {n}x{n} matrix, {n} offsets and {n} noise terms"
            )));
        }
        for spec in &noise {
            spec.validate()?;
        }
        if a.data.iter().any(|v| !v.is_finite()) || offsets.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("coefficients must be finite".into()));
        }
        if (0..n).any(|i| a.get(i, i) != 0.0) {
            return Err(Error::InvalidGraph("structure matrix has a nonzero diagonal".into()));
        }
        let dag = Dag::from_parent_sets(nodes.clone(), &a.support(0.0))?;
        Ok(LinearScm {
            noise_seeds: vec![None; n],
            nodes,
            a,
            offsets,
            noise,
            dag,
        })
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn noise(&self) -> &[NoiseSpec] {
        &self.noise
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn with_noise(mut self, noise: Vec<NoiseSpec>) -> Result<LinearScm> {
        if noise.len() != self.nodes.len() {
            return Err(Error::InvalidArgument("noise length mismatch".into()));
        }
        for s in &noise {
            s.validate()?;
        }
        self.noise = noise;
        Ok(self)
    }

    /// `(I - A)^{-1}`: column `i` is the response of every node to a unit
    /// shift of `N_i`.
    pub fn mixing_matrix(&self) -> Result<Matrix> {
        Matrix::identity(self.nodes.len()).sub(&self.a).inverse()
    }

    /// Values for one noise vector, solved in topological order.
    pub fn evaluate(&self, noise: &[f64]) -> Vec<f64> {
        let n = self.nodes.len();
        let mut x = vec![0.0; n];
        for &j in self.dag.topological_order() {
            let mut v = self.offsets[j] + noise[j];
            for i in self.dag.parents(j).iter() {
                v += self.a.get(j, i) * x[i];
            }
            x[j] = v;
        }
        x
    }

    fn node_key(&self, seed: u64, j: usize) -> u64 {
        self.noise_seeds[j].unwrap_or_else(|| mix(seed, j as u64))
    }

    /// Noise vector of row `row`; node `j` draws from its own stream, so the
    /// result does not depend on which other rows are generated.
    pub fn noise_row(&self, seed: u64, row: u64) -> Vec<f64> {
        (0..self.nodes.len())
            .map(|j| self.noise[j].sample(&mut stream_rng(self.node_key(seed, j), row)))
            .collect()
    }

    /// `n` i.i.d. rows, together with the noise that produced each.
    pub fn simulate_with_noise(&self, n: usize, seed: u64) -> (Dataset, Vec<Vec<f64>>) {
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..n as u64)
            .into_par_iter()
            .map(|r| {
                let e = self.noise_row(seed, r);
                (self.evaluate(&e), e)
            })
            .collect();
        let (rows, noise) = pairs.into_iter().unzip();
        (
            Dataset {
                columns: self.nodes.clone(),
                rows,
                seed: Some(seed),
            },
            noise,
        )
    }

    pub fn simulate(&self, n: usize, seed: u64) -> Dataset {
        self.simulate_with_noise(n, seed).0
    }

    /// Total effect of a unit shift of `i` on `j`: entry `(j, i)` of
    /// `(I - A)^{-1}`.
    pub fn total_effect(&self, i: usize, j: usize) -> Result<f64> {
        if i >= self.nodes.len() || j >= self.nodes.len() {
            return Err(Error::InvalidArgument("node index out of range".into()));
        }
        Ok(self.mixing_matrix()?.get(j, i))
    }

    /// Same model with the noise of `j` drawn from an independent stream.
    pub fn structure_preserving_intervention(&self, j: usize, fresh_seed: u64) -> Result<LinearScm> {
        if j >= self.nodes.len() {
            return Err(Error::InvalidArgument("node index out of range".into()));
        }
        let mut out = self.clone();
        out.noise_seeds[j] = Some(mix(fresh_seed, u64::MAX - j as u64));
        Ok(out)
    }

    /// The same equations as a [`GeneralScm`]; every noise must be finitely
    /// supported.
    pub fn to_general(&self) -> Result<GeneralScm> {
        let specs = (0..self.nodes.len())
            .map(|j| {
                let parents = self.dag.parents(j).to_vec();
                let coef: Vec<f64> = parents.iter().map(|&i| self.a.get(j, i)).collect();
                let offset = self.offsets[j];
                Ok(NodeSpec::new(
                    &self.nodes[j],
                    &self.dag.set_names(self.dag.parents(j)),
                    FiniteNoise::from_spec(&self.noise[j])?,
                    move |pa: &[f64], n: &[f64]| offset + n[0] + pa.iter().zip(&coef).map(|(x, c)| x * c).sum::<f64>(),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        GeneralScm::new(specs)
    }

    /// Nodes reordered: node `k` of the result is node `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<LinearScm> {
        let mut out = LinearScm::new(
            perm.iter().map(|&k| self.nodes[k].clone()).collect(),
            self.a.permuted(perm),
            perm.iter().map(|&k| self.offsets[k]).collect(),
            perm.iter().map(|&k| self.noise[k].clone()).collect(),
        )?;
        out.noise_seeds = perm.iter().map(|&k| self.noise_seeds[k]).collect();
        Ok(out)
    }
}

/// `A = I - S^{-1}` together with the DAG it implies, when acyclic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureSolution {
    pub a: Matrix,
    pub dag: Option<Dag>,
}

/// Structure matrix of a mixing matrix `S`. Entries within
/// [`STRUCTURE_TOL`] of an integer are snapped to it, which keeps integer
/// inputs exact.
pub fn solve_structure(s: &Matrix, names: &[String]) -> Result<StructureSolution> {
    if names.len() != s.n {
        return Err(Error::InvalidArgument("one name per row of S is required".into()));
    }
    let inv = s.inverse()?;
    let mut a = Matrix::identity(s.n).sub(&inv);
    for v in a.data.iter_mut() {
        let r = v.round();
        if (*v - r).abs() <= STRUCTURE_TOL {
            *v = r;
        }
    }
    let dag = a.implied_dag(names, STRUCTURE_TOL);
    Ok(StructureSolution { a, dag })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn urn2() -> LinearScm {
        let a = Matrix::from_rows(&[vec![0.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        let coin = NoiseSpec::BinomialDifference {
            rounds: 3,
            p_plus: 0.5,
            p_minus: 0.5,
        };
        LinearScm::new(names(&["Kb", "Kr"]), a, vec![10.0, 20.0], vec![coin.clone(), coin]).unwrap()
    }

    #[test]
    fn degenerate_noise_gives_fixpoint() {
        let scm = urn2()
            .with_noise(vec![NoiseSpec::Degenerate { value: 0.0 }; 2])
            .unwrap();
        let d = scm.simulate(5, 1);
        assert!(d.rows.iter().all(|r| r == &vec![10.0, 10.0]));
    }

    #[test]
    fn simulation_is_deterministic() {
        let scm = urn2();
        assert_eq!(scm.simulate(100, 7), scm.simulate(100, 7));
        assert_ne!(scm.simulate(100, 7), scm.simulate(100, 8));
    }

    #[test]
    fn bivariate_urn_structure() {
        let s = Matrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 1.0]]).unwrap();
        let sol = solve_structure(&s, &names(&["Kb", "Kr"])).unwrap();
        assert_eq!(sol.a.rows(), vec![vec![0.0, 0.0], vec![-1.0, 0.0]]);
        assert_eq!(sol.dag.unwrap().edge_names(), vec![("Kb".into(), "Kr".into())]);
    }

    #[test]
    fn singular_mixing_is_rejected() {
        let s = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(solve_structure(&s, &names(&["a", "b"])), Err(Error::Singular(_))));
    }

    #[test]
    fn cyclic_matrix_is_rejected() {
        let a = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let z = NoiseSpec::Degenerate { value: 0.0 };
        assert!(LinearScm::new(names(&["a", "b"]), a, vec![0.0; 2], vec![z.clone(), z]).is_err());
    }

    #[test]
    fn structure_preserving_intervention_keeps_upstream_rows() {
        let scm = urn2();
        let alt = scm.structure_preserving_intervention(1, 99).unwrap();
        let (d0, _) = scm.simulate_with_noise(200, 3);
        let (d1, _) = alt.simulate_with_noise(200, 3);
        assert_eq!(d0.column(0), d1.column(0));
        assert_ne!(d0.column(1), d1.column(1));
    }

    #[test]
    fn json_roundtrip() {
        let scm = urn2();
        let s = serde_json::to_string(&scm).unwrap();
        let back: LinearScm = serde_json::from_str(&s).unwrap();
        assert_eq!(back, scm);
    }
}
