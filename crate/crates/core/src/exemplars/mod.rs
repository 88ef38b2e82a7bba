//! Worked systems with their elementary actions and declared causal graphs.
//!
//! Each exemplar is built by a named factory from a JSON parameter object;
//! missing keys take the factory's defaults and unknown keys are rejected.

mod ball_track;
mod coins;
mod mechanistic;

use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use ball_track::{ball_track, BallTrackConfig};
pub use coins::{CoinRun, CoinSystem};
pub use mechanistic::{
    farmers, macro_pair, rabbits, FarmersConfig, MacroChoice, MacroConfig, RabbitsConfig, Scenario,
};

use crate::actions::{
    bivariate_direction, valid_graphs, ActionSuite, ClassificationReport, Direction, StatisticalAction, StatisticalSuite,
    Mode, UnitAction, UnitConfig, UnitSuite,
};
use crate::data::Dataset;
use crate::discrete::DEFAULT_EPS;
use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::registry::Registry;
use crate::rng::seeded;
use crate::scm::{GeneralScm, LinearScm};

/// What the declared graph is expected to satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Claim {
    /// Valid, and no other graph is.
    Unique,
    /// Valid; other graphs may be too.
    Valid,
    /// No direction is expected; the declared graph is only a label.
    Undetermined,
}

/// The generating process behind an exemplar.
#[derive(Debug, Clone)]
pub enum System {
    /// Coin-driven counts with their linear idealization.
    Coins { coins: CoinSystem, bias_shift: f64 },
    /// Finite-noise structural model; only `variables` are observed.
    Mechanistic(Arc<GeneralScm>),
    /// Exact baseline distribution with distribution-valued actions.
    Table(StatisticalSuite),
}

#[derive(Debug, Clone)]
pub struct Exemplar {
    pub name: String,
    pub variables: Vec<String>,
    pub ground_truth: Dag,
    pub claim: Claim,
    pub system: System,
    pub unit_actions: Vec<UnitAction>,
    pub unit_config: UnitConfig,
    /// Parameters the exemplar was built from.
    pub params: Value,
}

/// Serializable description of an exemplar.
#[derive(Debug, Clone, Serialize)]
pub struct ExemplarDoc {
    pub name: String,
    pub variables: Vec<String>,
    pub ground_truth: Dag,
    pub claim: Claim,
    pub params: Value,
    pub unit_actions: Vec<UnitAction>,
    pub statistical_actions: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linear_model: Option<LinearScm>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixing_matrix: Option<Vec<Vec<f64>>>,
}

impl Exemplar {
    pub fn coins(&self) -> Option<&CoinSystem> {
        match &self.system {
            System::Coins { coins, .. } => Some(coins),
            _ => None,
        }
    }

    /// Unit-level suite, when the exemplar has state-map actions. Coin
    /// systems use their linear idealization as the unit population.
    pub fn unit_suite(&self) -> Result<Option<UnitSuite>> {
        let scm = match &self.system {
            System::Coins { coins, .. } => Arc::new(coins.linear_scm()?.to_general()?),
            System::Mechanistic(scm) => scm.clone(),
            System::Table(_) => return Ok(None),
        };
        if self.unit_actions.is_empty() {
            return Ok(None);
        }
        Ok(Some(UnitSuite {
            scm,
            variables: self.variables.clone(),
            actions: self.unit_actions.clone(),
            config: self.unit_config,
        }))
    }

    /// Statistical suite: exact baseline plus one action per distribution
    /// change (coin-bias shifts for coin systems).
    pub fn statistical_suite(&self) -> Result<Option<StatisticalSuite>> {
        match &self.system {
            System::Coins { coins, bias_shift } => {
                let mut joints = coins.bias_shift_joints(*bias_shift)?;
                let baseline = joints.remove(0);
                let actions = coins
                    .labels()
                    .iter()
                    .zip(joints)
                    .map(|(l, j)| StatisticalAction::joint(format!("{l} bias"), j))
                    .collect();
                Ok(Some(StatisticalSuite {
                    baseline,
                    actions,
                    eps: DEFAULT_EPS,
                }))
            }
            System::Table(suite) => Ok(Some(suite.clone())),
            System::Mechanistic(_) => Ok(None),
        }
    }

    /// Every available encoding, unit-level first.
    pub fn suites(&self) -> Result<Vec<Box<dyn ActionSuite>>> {
        let mut out: Vec<Box<dyn ActionSuite>> = Vec::new();
        if let Some(u) = self.unit_suite()? {
            out.push(Box::new(u));
        }
        if let Some(s) = self.statistical_suite()? {
            out.push(Box::new(s));
        }
        Ok(out)
    }

    /// Reports of the declared graph under every encoding.
    pub fn classify_ground_truth(&self) -> Result<Vec<ClassificationReport>> {
        self.suites()?.iter().map(|s| s.classify(&self.ground_truth)).collect()
    }

    /// Direction for a two-variable exemplar, from its first encoding.
    pub fn direction(&self) -> Result<Direction> {
        let suites = self.suites()?;
        let first = suites
            .first()
            .ok_or_else(|| Error::InvalidArgument(format!("`{}` has no actions", self.name)))?;
        bivariate_direction(first.as_ref())
    }

    /// `n` samples of the observed variables.
    pub fn dataset(&self, n: usize, seed: u64) -> Result<Dataset> {
        match &self.system {
            System::Coins { coins, .. } => Ok(coins.simulate(n, seed)),
            System::Mechanistic(scm) => scm.simulate(n, seed).select(&self.variables),
            System::Table(suite) => {
                let rows = suite.baseline.sample_values(n, &mut seeded(seed));
                Dataset::new(suite.baseline.names(), rows, Some(seed))
            }
        }
    }

    pub fn doc(&self) -> Result<ExemplarDoc> {
        let (linear_model, mixing_matrix) = match &self.system {
            System::Coins { coins, .. } => (Some(coins.linear_scm()?), Some(coins.mixing_matrix().rows())),
            _ => (None, None),
        };
        let statistical_actions = match &self.system {
            System::Coins { coins, .. } => coins.labels().iter().map(|l| format!("{l} bias")).collect(),
            System::Table(s) => s.actions.iter().map(|a| a.label.clone()).collect(),
            System::Mechanistic(_) => Vec::new(),
        };
        Ok(ExemplarDoc {
            name: self.name.clone(),
            variables: self.variables.clone(),
            ground_truth: self.ground_truth.clone(),
            claim: self.claim,
            params: self.params.clone(),
            unit_actions: self.unit_actions.clone(),
            statistical_actions,
            linear_model,
            mixing_matrix,
        })
    }
}

/// Outcome of checking an exemplar's declared graph under one encoding.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EncodingCheck {
    pub mode: Mode,
    pub declared_valid: bool,
    pub valid_graphs: Vec<Dag>,
    pub holds: bool,
}

/// Whether the declared graph meets its claim under every encoding.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClaimCheck {
    pub exemplar: String,
    pub claim: Claim,
    pub ground_truth: Dag,
    pub encodings: Vec<EncodingCheck>,
    pub holds: bool,
}

impl Exemplar {
    /// Enumerates valid graphs (up to `cap` variables) in each encoding.
    /// `Unique` needs exactly the declared graph, `Valid` needs it among the
    /// valid ones, `Undetermined` holds trivially.
    pub fn check_claim(&self, cap: usize) -> Result<ClaimCheck> {
        let mut encodings = Vec::new();
        for suite in self.suites()? {
            let valid: Vec<Dag> = valid_graphs(suite.as_ref(), cap)?.into_iter().map(|(g, _)| g).collect();
            let declared_valid = valid.iter().any(|g| g.same_structure(&self.ground_truth));
            let holds = match self.claim {
                Claim::Unique => declared_valid && valid.len() == 1,
                Claim::Valid => declared_valid,
                Claim::Undetermined => true,
            };
            encodings.push(EncodingCheck {
                mode: suite.mode(),
                declared_valid,
                valid_graphs: valid,
                holds,
            });
        }
        Ok(ClaimCheck {
            exemplar: self.name.clone(),
            claim: self.claim,
            ground_truth: self.ground_truth.clone(),
            holds: encodings.iter().all(|e| e.holds),
            encodings,
        })
    }
}

/// Builds one exemplar family from JSON parameters.
pub trait ExemplarFactory: Send + Sync {
    fn summary(&self) -> &'static str;

    fn default_params(&self) -> Value;

    fn build(&self, params: &Value) -> Result<Exemplar>;
}

struct Typed<C> {
    summary: &'static str,
    defaults: fn() -> C,
    build: fn(&C) -> Result<Exemplar>,
}

impl<C> ExemplarFactory for Typed<C>
where
    C: Serialize + DeserializeOwned + Send + Sync,
{
    fn summary(&self) -> &'static str {
        self.summary
    }

    fn default_params(&self) -> Value {
        serde_json::to_value((self.defaults)()).expect("configs serialize")
    }

    fn build(&self, params: &Value) -> Result<Exemplar> {
        let mut merged = self.default_params();
        match params {
            Value::Null => {}
            Value::Object(over) => {
                let base = merged.as_object_mut().expect("configs are objects");
                for (k, v) in over {
                    if !base.contains_key(k) {
                        return Err(Error::InvalidParameter(format!(
                            "unknown parameter `{k}`; expected one of {:?}",
                            base.keys().collect::<Vec<_>>()
                        )));
                    }
                    base.insert(k.clone(), v.clone());
                }
            }
            _ => return Err(Error::InvalidParameter("parameters must be a JSON object".into())),
        }
        let cfg: C = serde_json::from_value(merged.clone())
            .map_err(|e| Error::InvalidParameter(format!("bad parameters: {e}")))?;
        let mut ex = (self.build)(&cfg)?;
        ex.params = merged;
        Ok(ex)
    }
}

fn typed<C>(summary: &'static str, defaults: fn() -> C, build: fn(&C) -> Result<Exemplar>) -> Box<dyn ExemplarFactory>
where
    C: Serialize + DeserializeOwned + Send + Sync + 'static,
{
    Box::new(Typed {
        summary,
        defaults,
        build,
    })
}

/// Two-colour urn parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UrnBivariateConfig {
    pub kb0: i64,
    pub kr0: i64,
    pub rounds: u32,
    /// `(p_plus, p_minus)` for the `A1` coins, then the `A2` coins.
    pub coin_biases: [(f64, f64); 2],
    /// Shift of a class's `+` coin in its statistical action.
    pub bias_shift: f64,
    /// Seed for sampling units when they are too many to enumerate.
    pub seed: u64,
}

impl Default for UrnBivariateConfig {
    fn default() -> Self {
        UrnBivariateConfig {
            kb0: 10,
            kr0: 10,
            rounds: 3,
            coin_biases: [(0.5, 0.5); 2],
            bias_shift: 0.25,
            seed: 0,
        }
    }
}

/// Parameters shared by the `n`-type urn and the bundle urn. Vectors are
/// indexed by ball type `1..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub n: usize,
    /// Defaults to `n * rounds + 2` for every type, which keeps every run
    /// away from empty counts.
    pub k0: Option<Vec<i64>>,
    pub rounds: u32,
    /// Defaults to fair coins.
    pub coin_biases: Option<Vec<(f64, f64)>>,
    /// Add/remove balls of type `n` instead of type 1 (urn only).
    pub reversed: bool,
    pub bias_shift: f64,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            n: 4,
            k0: None,
            rounds: 2,
            coin_biases: None,
            reversed: false,
            bias_shift: 0.25,
            seed: 0,
        }
    }
}

impl ChainConfig {
    fn resolved(&self) -> (Vec<i64>, Vec<(f64, f64)>) {
        let k0 = self
            .k0
            .clone()
            .unwrap_or_else(|| vec![self.n as i64 * i64::from(self.rounds) + 2; self.n]);
        let biases = self.coin_biases.clone().unwrap_or_else(|| vec![(0.5, 0.5); self.n]);
        (k0, biases)
    }
}

fn coin_exemplar(name: &str, coins: CoinSystem, ground_truth: Dag, claim: Claim, bias_shift: f64, seed: u64) -> Exemplar {
    Exemplar {
        name: name.to_string(),
        variables: coins.names().to_vec(),
        unit_actions: coins.unit_actions(),
        unit_config: UnitConfig {
            seed,
            ..UnitConfig::default()
        },
        ground_truth,
        claim,
        system: System::Coins { coins, bias_shift },
        params: Value::Null,
    }
}

pub fn urn_bivariate(cfg: &UrnBivariateConfig) -> Result<Exemplar> {
    let coins = CoinSystem::urn_bivariate(cfg.kb0, cfg.kr0, cfg.rounds, cfg.coin_biases)?;
    let truth = Dag::new(&["Kb", "Kr"], &[("Kb", "Kr")])?;
    Ok(coin_exemplar("urn2", coins, truth, Claim::Unique, cfg.bias_shift, cfg.seed))
}

/// Every node points to every node after it in causal order.
fn complete_dag(names: &[String]) -> Result<Dag> {
    let n = names.len();
    let edges: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    Dag::from_indices(names.to_vec(), &edges)
}

pub fn urn_chain(cfg: &ChainConfig) -> Result<Exemplar> {
    let (k0, biases) = cfg.resolved();
    let coins = CoinSystem::urn_chain(cfg.n, &k0, cfg.rounds, &biases, cfg.reversed)?;
    let truth = complete_dag(coins.names())?;
    Ok(coin_exemplar("urnN", coins, truth, Claim::Unique, cfg.bias_shift, cfg.seed))
}

pub fn bundles_chain(cfg: &ChainConfig) -> Result<Exemplar> {
    if cfg.reversed {
        return Err(Error::InvalidParameter("`reversed` applies to the urn chain only".into()));
    }
    let (k0, biases) = cfg.resolved();
    let coins = CoinSystem::bundles(cfg.n, &k0, cfg.rounds, &biases)?;
    let names = coins.names().to_vec();
    let edges: Vec<(usize, usize)> = (1..names.len()).map(|i| (i - 1, i)).collect();
    let truth = Dag::from_indices(names, &edges)?;
    Ok(coin_exemplar("bundles", coins, truth, Claim::Valid, cfg.bias_shift, cfg.seed))
}

/// All built-in exemplars, in a stable order.
pub fn registry() -> Registry<dyn ExemplarFactory> {
    Registry::new("exemplar")
        .with(
            "urn2",
            typed("blue/red urn with conversion and red add/remove actions", UrnBivariateConfig::default, urn_bivariate),
        )
        .with(
            "urnN",
            typed("urn with n ball types and neighbour conversions", ChainConfig::default, urn_chain),
        )
        .with(
            "bundles",
            typed("urn filled with nested ball packages", ChainConfig::default, bundles_chain),
        )
        .with(
            "rabbits1",
            typed("rabbit food consumption, ample food", || RabbitsConfig::for_scenario(Scenario::Plenty), rabbits),
        )
        .with(
            "rabbits2",
            typed("rabbit food consumption, food shortage", || RabbitsConfig::for_scenario(Scenario::Shortage), rabbits),
        )
        .with(
            "macro1",
            typed("averaged pairs, acting on the first pair", || MacroConfig::new(MacroChoice::ActOn1s), macro_pair),
        )
        .with(
            "macro2",
            typed("averaged pairs, acting on the second pair", || MacroConfig::new(MacroChoice::ActOn2s), macro_pair),
        )
        .with(
            "balltrack",
            typed("ball rolling down a track past light barriers", BallTrackConfig::default, ball_track),
        )
        .with(
            "farmers",
            typed("potato/egg countertrade at a negotiated exchange factor", FarmersConfig::default, farmers),
        )
}

/// Builds a registered exemplar by name.
pub fn build(name: &str, params: &Value) -> Result<Exemplar> {
    registry().get(name)?.build(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn registry_names_are_stable() {
        assert_eq!(
            registry().names(),
            ["urn2", "urnN", "bundles", "rabbits1", "rabbits2", "macro1", "macro2", "balltrack", "farmers"]
        );
        assert!(matches!(build("urn7", &Value::Null), Err(Error::UnknownName { .. })));
    }

    #[test]
    fn parameters_merge_with_defaults() {
        let ex = build("urn2", &json!({"kb0": 20})).unwrap();
        assert_eq!(ex.params["kb0"], 20);
        assert_eq!(ex.params["kr0"], 10);
        assert!(build("urn2", &json!({"kb": 20})).is_err());
        assert!(build("urn2", &json!({"rounds": 10})).is_err());
    }

    #[test]
    fn urn2_classifies_both_ways() {
        let ex = build("urn2", &Value::Null).unwrap();
        for suite in ex.suites().unwrap() {
            let valid = valid_graphs(suite.as_ref(), 2).unwrap();
            assert_eq!(valid.len(), 1, "{:?}", suite.mode());
            assert!(valid[0].0.same_structure(&ex.ground_truth));
        }
        let stat = ex.statistical_suite().unwrap().unwrap();
        let r = stat.classify(&ex.ground_truth).unwrap();
        assert_eq!(r.verdict("A1 bias").unwrap().assigned(), Some("Kb"));
        assert_eq!(r.verdict("A2 bias").unwrap().assigned(), Some("Kr"));
    }

    #[test]
    fn default_claims_hold() {
        for name in ["urn2", "rabbits1", "rabbits2", "macro1", "macro2", "balltrack", "farmers"] {
            let c = build(name, &Value::Null).unwrap().check_claim(4).unwrap();
            assert!(c.holds, "{name}: {c:?}");
        }
    }

    #[test]
    fn reversed_urn_flips_every_edge() {
        let fwd = build("urnN", &json!({"n": 3, "rounds": 1})).unwrap();
        let rev = build("urnN", &json!({"n": 3, "rounds": 1, "reversed": true})).unwrap();
        for (a, b) in fwd.ground_truth.edge_names() {
            let (ia, ib) = (rev.ground_truth.index(&a).unwrap(), rev.ground_truth.index(&b).unwrap());
            assert!(rev.ground_truth.has_edge(ib, ia));
        }
        let suite = rev.unit_suite().unwrap().unwrap();
        assert!(suite.classify(&rev.ground_truth).unwrap().valid);
    }
}
