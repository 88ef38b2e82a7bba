//! Ball-count systems whose elementary actions are switched on by coins.
//!
//! Every action class `c` has a `+` and a `-` variant that add or subtract a
//! fixed effect vector. A variant is refused when it would drive a count
//! below zero. Classes are listed in the causal order of the nodes they
//! target, so the mixing matrix (column `c` = effect of class `c`) is lower
//! unitriangular and class `c` supplies the noise of node `c`.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::actions::{MapSpec, UnitAction};
use crate::data::Dataset;
use crate::discrete::{joints_from_outcomes, DiscreteJoint, MAX_TABLE_ENTRIES};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{mix, stream_rng};
use crate::scm::{solve_structure, LinearScm, NoiseSpec, StructureSolution};

const COIN_SALT: u64 = 0x636f_696e;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoinSystem {
    names: Vec<String>,
    labels: Vec<String>,
    /// `effects[c][i]`: change of node `i` under the `+` variant of class `c`.
    effects: Vec<Vec<i64>>,
    k0: Vec<i64>,
    rounds: u32,
    /// `(p_plus, p_minus)` per class.
    biases: Vec<(f64, f64)>,
}

/// Outcome of one simulated run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoinRun {
    pub state: Vec<i64>,
    /// Net applied `+` minus `-` actions per class.
    pub applied: Vec<i64>,
    /// Net coin outcomes per class, whether or not the action was possible.
    pub flipped: Vec<i64>,
    pub refused: usize,
}

impl CoinSystem {
    pub fn new(
        names: Vec<String>,
        labels: Vec<String>,
        effects: Vec<Vec<i64>>,
        k0: Vec<i64>,
        rounds: u32,
        biases: Vec<(f64, f64)>,
    ) -> Result<CoinSystem> {
        let n = names.len();
        if labels.len() != n || effects.len() != n || k0.len() != n || biases.len() != n {
            return Err(Error::InvalidArgument(format!(
                "a count system over {n} nodes needs {n} action classes"
            )));
        }
        for (c, e) in effects.iter().enumerate() {
            if e.len() != n || e[c] != 1 || e[..c].iter().any(|&v| v != 0) {
                return Err(Error::InvalidArgument(format!(
                    "class `{}` must raise its own node and leave upstream nodes alone",
                    labels[c]
                )));
            }
        }
        if k0.iter().any(|&k| k < 0) {
            return Err(Error::InvalidParameter("initial counts must be nonnegative".into()));
        }
        for &(p, q) in &biases {
            if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
                return Err(Error::InvalidParameter(format!("coin bias ({p}, {q}) outside [0, 1]")));
            }
        }
        Ok(CoinSystem {
            names,
            labels,
            effects,
            k0,
            rounds,
            biases,
        })
    }

    /// Blue and red balls. `A1` converts red into blue, `A2` adds or removes
    /// a red ball.
    pub fn urn_bivariate(kb0: i64, kr0: i64, rounds: u32, biases: [(f64, f64); 2]) -> Result<CoinSystem> {
        if i64::from(rounds) >= kb0.min(kr0) {
            return Err(Error::InvalidParameter(format!(
                "rounds ({rounds}) must stay below both initial counts ({kb0}, {kr0})"
            )));
        }
        CoinSystem::new(
            vec!["Kb".into(), "Kr".into()],
            vec!["A1".into(), "A2".into()],
            vec![vec![1, -1], vec![0, 1]],
            vec![kb0, kr0],
            rounds,
            biases.to_vec(),
        )
    }

    /// `n` ball types. `A_j` (j >= 2) converts a ball of type `j-1` into one
    /// of type `j`; `A_1` adds or removes a ball of type 1. With
    /// `reversed`, the add/remove class acts on type `n` instead.
    ///
    /// `k0` and `biases` are indexed by ball type, `k0[j-1]` for `K_j`.
    pub fn urn_chain(n: usize, k0: &[i64], rounds: u32, biases: &[(f64, f64)], reversed: bool) -> Result<CoinSystem> {
        check_chain_args(n, k0, rounds, biases)?;
        // causal order of ball types
        let types: Vec<usize> = if reversed { (1..=n).collect() } else { (1..=n).rev().collect() };
        let names = types.iter().map(|t| format!("K{t}")).collect();
        let effects = (0..n)
            .map(|c| {
                let mut e = vec![0; n];
                e[c] = 1;
                if c + 1 < n {
                    e[c + 1] = -1;
                }
                e
            })
            .collect();
        CoinSystem::new(
            names,
            types.iter().map(|t| format!("A{t}")).collect(),
            effects,
            types.iter().map(|&t| k0[t - 1]).collect(),
            rounds,
            types.iter().map(|&t| biases[t - 1]).collect(),
        )
    }

    /// Packages `P_j` holding one ball of each label `1..=j`; `A_j` puts a
    /// package into the urn or wraps one back up.
    pub fn bundles(n: usize, k0: &[i64], rounds: u32, biases: &[(f64, f64)]) -> Result<CoinSystem> {
        check_chain_args(n, k0, rounds, biases)?;
        let types: Vec<usize> = (1..=n).rev().collect();
        let effects = (0..n).map(|c| (0..n).map(|i| i64::from(i >= c)).collect()).collect();
        CoinSystem::new(
            types.iter().map(|t| format!("K{t}")).collect(),
            types.iter().map(|t| format!("A{t}")).collect(),
            effects,
            types.iter().map(|&t| k0[t - 1]).collect(),
            rounds,
            types.iter().map(|&t| biases[t - 1]).collect(),
        )
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn effects(&self) -> &[Vec<i64>] {
        &self.effects
    }

    pub fn k0(&self) -> &[i64] {
        &self.k0
    }

    pub fn rounds(&self) -> u32 {
        self.rounds
    }

    pub fn biases(&self) -> &[(f64, f64)] {
        &self.biases
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn with_biases(&self, biases: Vec<(f64, f64)>) -> Result<CoinSystem> {
        CoinSystem::new(
            self.names.clone(),
            self.labels.clone(),
            self.effects.clone(),
            self.k0.clone(),
            self.rounds,
            biases,
        )
    }

    /// `S` with `K - k0 = S N`: column `c` is the effect of class `c`.
    pub fn mixing_matrix(&self) -> Matrix {
        Matrix::from_fn(self.len(), |i, c| self.effects[c][i] as f64)
    }

    pub fn structure(&self) -> Result<StructureSolution> {
        solve_structure(&self.mixing_matrix(), &self.names)
    }

    /// Net count of one class after all rounds, ignoring refusals.
    pub fn noise_spec(&self, bias: (f64, f64)) -> NoiseSpec {
        NoiseSpec::BinomialDifference {
            rounds: self.rounds,
            p_plus: bias.0,
            p_minus: bias.1,
        }
    }

    /// Unbounded idealization `K = A K + (I - A) k0 + N`.
    pub fn linear_scm(&self) -> Result<LinearScm> {
        let sol = self.structure()?;
        let k0: Vec<f64> = self.k0.iter().map(|&k| k as f64).collect();
        let offsets = Matrix::identity(self.len()).sub(&sol.a).mul_vec(&k0);
        let noise = (0..self.len()).map(|c| self.noise_spec(self.biases[c])).collect();
        LinearScm::new(self.names.clone(), sol.a, offsets, noise)
    }

    /// Whether no run can ever be refused: every count stays nonnegative
    /// even if every class moves it by `rounds` in the bad direction.
    pub fn boundary_free(&self) -> bool {
        (0..self.len()).all(|i| {
            let worst: i64 = self.effects.iter().map(|e| e[i].abs()).sum::<i64>() * i64::from(self.rounds);
            self.k0[i] >= worst
        })
    }

    fn try_apply(&self, state: &mut [i64], c: usize, sign: i64) -> bool {
        let e = &self.effects[c];
        if state.iter().zip(e).any(|(s, d)| s + sign * d < 0) {
            return false;
        }
        for (s, d) in state.iter_mut().zip(e) {
            *s += sign * d;
        }
        true
    }

    /// The `+` and `-` variants of every class as state maps.
    pub fn unit_actions(&self) -> Vec<UnitAction> {
        let mut out = Vec::with_capacity(2 * self.len());
        for (c, e) in self.effects.iter().enumerate() {
            for (sign, suffix) in [(1, "+"), (-1, "-")] {
                let moved: Vec<(usize, i64)> = e
                    .iter()
                    .enumerate()
                    .filter(|(_, d)| **d != 0)
                    .map(|(i, d)| (i, sign * d))
                    .collect();
                let map = match moved[..] {
                    [(a, da), (b, db)] if da + db == 0 => {
                        let (from, to) = if da < 0 { (a, b) } else { (b, a) };
                        MapSpec::SwapCount {
                            from: self.names[from].clone(),
                            to: self.names[to].clone(),
                            amount: 1.0,
                        }
                    }
                    _ => MapSpec::AddConstant {
                        deltas: moved.iter().map(|&(i, d)| (self.names[i].clone(), d as f64)).collect(),
                        min: Some(0.0),
                    },
                };
                out.push(UnitAction::new(format!("{}{suffix}", self.labels[c]), map));
            }
        }
        out
    }

    /// One run: in each round, the `+` then `-` coin of every class in class
    /// order; heads applies the action when possible.
    pub fn run(&self, seed: u64, row: u64) -> CoinRun {
        let mut rng = stream_rng(mix(seed, COIN_SALT), row);
        let n = self.len();
        let mut state = self.k0.clone();
        let mut applied = vec![0; n];
        let mut flipped = vec![0; n];
        let mut refused = 0;
        for _ in 0..self.rounds {
            for c in 0..n {
                for (sign, p) in [(1, self.biases[c].0), (-1, self.biases[c].1)] {
                    if rng.random_bool(p) {
                        flipped[c] += sign;
                        if self.try_apply(&mut state, c, sign) {
                            applied[c] += sign;
                        } else {
                            refused += 1;
                        }
                    }
                }
            }
        }
        CoinRun {
            state,
            applied,
            flipped,
            refused,
        }
    }

    /// `n` independent runs of the bounded process.
    pub fn simulate_runs(&self, n: usize, seed: u64) -> (Dataset, Vec<CoinRun>) {
        let runs: Vec<CoinRun> = (0..n as u64).into_par_iter().map(|r| self.run(seed, r)).collect();
        let rows = runs
            .iter()
            .map(|r| r.state.iter().map(|&v| v as f64).collect())
            .collect();
        (
            Dataset {
                columns: self.names.clone(),
                rows,
                seed: Some(seed),
            },
            runs,
        )
    }

    pub fn simulate(&self, n: usize, seed: u64) -> Dataset {
        self.simulate_runs(n, seed).0
    }

    /// Exact distribution of the final state of the bounded process, by
    /// dynamic programming over rounds and coins.
    pub fn exact_outcomes(&self) -> Result<Vec<(Vec<f64>, f64)>> {
        let mut dist: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
        dist.insert(self.k0.clone(), 1.0);
        for _ in 0..self.rounds {
            for c in 0..self.len() {
                for (sign, p) in [(1, self.biases[c].0), (-1, self.biases[c].1)] {
                    if p == 0.0 {
                        continue;
                    }
                    let mut next: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
                    for (s, w) in dist {
                        let mut t = s.clone();
                        if !self.try_apply(&mut t, c, sign) {
                            t = s.clone();
                        }
                        *next.entry(t).or_insert(0.0) += w * p;
                        if p < 1.0 {
                            *next.entry(s).or_insert(0.0) += w * (1.0 - p);
                        }
                    }
                    if next.len() > MAX_TABLE_ENTRIES {
                        return Err(Error::StateSpaceTooLarge {
                            states: next.len(),
                            cap: MAX_TABLE_ENTRIES,
                        });
                    }
                    dist = next;
                }
            }
        }
        Ok(dist
            .into_iter()
            .map(|(s, w)| (s.iter().map(|&v| v as f64).collect(), w))
            .collect())
    }

    pub fn exact_joint(&self) -> Result<DiscreteJoint> {
        Ok(joints_from_outcomes(&self.names, &[self.exact_outcomes()?])?.remove(0))
    }

    /// Exact joints of the baseline and of each class's bias shifted by
    /// `shift` (towards the middle of `[0, 1]` when possible), on shared
    /// value labels.
    pub fn bias_shift_joints(&self, shift: f64) -> Result<Vec<DiscreteJoint>> {
        let mut outcomes = vec![self.exact_outcomes()?];
        for c in 0..self.len() {
            let mut b = self.biases.clone();
            let p = b[c].0;
            b[c].0 = if p + shift <= 1.0 { p + shift } else { p - shift };
            outcomes.push(self.with_biases(b)?.exact_outcomes()?);
        }
        joints_from_outcomes(&self.names, &outcomes)
    }

    /// Fewest elementary actions turning `state` into `state + delta`, by
    /// breadth-first search over counts bounded by `max_len` steps. Returns
    /// the action labels in order.
    pub fn shortest_composition(&self, state: &[i64], delta: &[i64], max_len: usize) -> Option<Vec<String>> {
        let target: Vec<i64> = state.iter().zip(delta).map(|(s, d)| s + d).collect();
        let mut seen: BTreeMap<Vec<i64>, (Vec<i64>, usize, i64)> = BTreeMap::new();
        let mut queue = VecDeque::from([(state.to_vec(), 0usize)]);
        seen.insert(state.to_vec(), (Vec::new(), usize::MAX, 0));
        while let Some((s, depth)) = queue.pop_front() {
            if s == target {
                let mut path = Vec::new();
                let mut cur = s;
                while let Some((prev, c, sign)) = seen.get(&cur).cloned() {
                    if c == usize::MAX {
                        break;
                    }
                    path.push(format!("{}{}", self.labels[c], if sign > 0 { "+" } else { "-" }));
                    cur = prev;
                }
                path.reverse();
                return Some(path);
            }
            if depth == max_len {
                continue;
            }
            for c in 0..self.len() {
                for sign in [1, -1] {
                    let mut t = s.clone();
                    if self.try_apply(&mut t, c, sign) && !seen.contains_key(&t) {
                        seen.insert(t.clone(), (s.clone(), c, sign));
                        queue.push_back((t, depth + 1));
                    }
                }
            }
        }
        None
    }
}

fn check_chain_args(n: usize, k0: &[i64], rounds: u32, biases: &[(f64, f64)]) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidParameter("at least two ball types are needed".into()));
    }
    if k0.len() != n || biases.len() != n {
        return Err(Error::InvalidParameter(format!(
            "expected {n} initial counts and {n} coin biases, got {} and {}",
            k0.len(),
            biases.len()
        )));
    }
    if let Some(k) = k0.iter().find(|&&k| k <= i64::from(rounds)) {
        return Err(Error::InvalidParameter(format!(
            "initial count {k} must exceed the number of rounds ({rounds})"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Dag;

    const FAIR: (f64, f64) = (0.5, 0.5);

    #[test]
    fn urn_actions_on_states() {
        let u = CoinSystem::urn_bivariate(10, 10, 3, [FAIR; 2]).unwrap();
        let g = Dag::empty(u.names()).unwrap();
        let acts = u.unit_actions();
        let labels: Vec<&str> = acts.iter().map(|a| a.label.as_str()).collect();
        assert_eq!(labels, ["A1+", "A1-", "A2+", "A2-"]);
        assert_eq!(acts[0].map.apply(&g, &[10.0, 10.0]).unwrap(), Some(vec![11.0, 9.0]));
        assert_eq!(acts[3].map.apply(&g, &[4.0, 0.0]).unwrap(), None);
        assert!(CoinSystem::urn_bivariate(3, 10, 3, [FAIR; 2]).is_err());
    }

    #[test]
    fn urn_chain_swap_and_matrices() {
        let u = CoinSystem::urn_chain(3, &[10, 10, 10], 1, &[FAIR; 3], false).unwrap();
        assert_eq!(u.names(), ["K3", "K2", "K1"]);
        let mut s = u.k0().to_vec();
        // A2+ is class 1
        assert!(u.try_apply(&mut s, 1, 1));
        assert_eq!(s, vec![10, 11, 9]);
        let a = u.structure().unwrap().a;
        assert_eq!(a.rows(), vec![vec![0.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0], vec![-1.0, -1.0, 0.0]]);
    }

    #[test]
    fn bundles_package_effect() {
        let b = CoinSystem::bundles(4, &[5; 4], 1, &[FAIR; 4]).unwrap();
        assert_eq!(b.names(), ["K4", "K3", "K2", "K1"]);
        let mut s = vec![0; 4];
        // A3+ is class 1
        assert!(b.try_apply(&mut s, 1, 1));
        assert_eq!(s, vec![0, 1, 1, 1]);
        assert!(!b.try_apply(&mut vec![0; 4], 0, -1));
    }

    #[test]
    fn fair_zero_bias_keeps_initial_state() {
        let u = CoinSystem::urn_bivariate(10, 10, 5, [(0.0, 0.0); 2]).unwrap();
        let (d, _) = u.simulate_runs(20, 3);
        assert!(d.rows.iter().all(|r| r == &vec![10.0, 10.0]));
    }

    #[test]
    fn counts_follow_applied_actions() {
        let b = CoinSystem::bundles(3, &[4, 4, 4], 3, &[(0.5, 0.7); 3]).unwrap();
        let s = b.mixing_matrix();
        let (_, runs) = b.simulate_runs(300, 9);
        assert!(runs.iter().any(|r| r.refused > 0));
        for r in &runs {
            let applied: Vec<f64> = r.applied.iter().map(|&v| v as f64).collect();
            let k: Vec<i64> = s.mul_vec(&applied).iter().zip(b.k0()).map(|(d, k)| k + *d as i64).collect();
            assert_eq!(k, r.state);
        }
    }

    #[test]
    fn exact_joint_matches_linear_model_without_boundary() {
        let u = CoinSystem::urn_bivariate(8, 8, 3, [(0.5, 0.3), (0.6, 0.4)]).unwrap();
        assert!(u.boundary_free());
        let exact = u.exact_joint().unwrap();
        let lin = u.linear_scm().unwrap().to_general().unwrap().exact_joint().unwrap();
        assert!(crate::discrete::tv_distance(&exact, &lin).unwrap() < 1e-12);
    }

    #[test]
    fn composition_lengths() {
        let u = CoinSystem::urn_chain(4, &[6; 4], 1, &[FAIR; 4], false).unwrap();
        for j in 1..=4usize {
            let mut delta = vec![0; 4];
            delta[4 - j] = 1; // K_j sits at index n - j
            let path = u.shortest_composition(u.k0(), &delta, 6).unwrap();
            assert_eq!(path.len(), j, "{path:?}");
        }
    }
}
