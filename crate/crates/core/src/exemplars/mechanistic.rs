//! Deterministic-mechanism exemplars with a small finite population of units.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Claim, Exemplar, System};
use crate::actions::{MapSpec, UnitAction, UnitConfig};
use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::scm::{FiniteNoise, GeneralScm, NodeSpec};

fn uniform(values: &[f64]) -> Result<FiniteNoise> {
    let p = 1.0 / values.len() as f64;
    FiniteNoise::scalar(&values.iter().map(|&v| (v, p)).collect::<Vec<_>>())
}

fn root(name: &str, noise: FiniteNoise) -> NodeSpec {
    NodeSpec::new::<&str>(name, &[], noise, |_, n| n[0])
}

fn add(variable: &str, delta: f64, min: Option<f64>) -> MapSpec {
    MapSpec::AddConstant {
        deltas: vec![(variable.to_string(), delta)],
        min,
    }
}

fn scale(variable: &str, factor: f64) -> MapSpec {
    MapSpec::Scale {
        variable: variable.to_string(),
        factor,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Every rabbit eats its fill.
    Plenty,
    /// All food is eaten.
    Shortage,
}

/// Rabbits sharing a food supply. Units vary in head count
/// (`n0` or `n0 + 1`), individual appetite (`0.8, 1, 1.2` times `d0`) and
/// food (`0.9, 1, 1.1` times `food`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RabbitsConfig {
    pub scenario: Scenario,
    pub n0: u32,
    pub d0: f64,
    pub food: f64,
    /// Food added or removed by the food actions, as a fraction of `food`.
    pub food_step: f64,
    /// Appetite multiplier of the appetizer action.
    pub appetizer: f64,
}

impl RabbitsConfig {
    pub fn for_scenario(scenario: Scenario) -> RabbitsConfig {
        RabbitsConfig {
            scenario,
            n0: 4,
            d0: 1.0,
            food: match scenario {
                Scenario::Plenty => 100.0,
                Scenario::Shortage => 1.5,
            },
            food_step: 0.1,
            appetizer: 1.5,
        }
    }
}

/// Observed: total food eaten `X = min(F, n d)` and food per rabbit
/// `Y = X / n`.
pub fn rabbits(cfg: &RabbitsConfig) -> Result<Exemplar> {
    if cfg.n0 < 2 || !(cfg.d0 > 0.0) || !(cfg.food > 0.0) || !(cfg.food_step > 0.0) || !(cfg.appetizer > 1.0) {
        return Err(Error::InvalidParameter(
            "rabbits need n0 >= 2, positive d0, food and food_step, and appetizer > 1".into(),
        ));
    }
    let n0 = f64::from(cfg.n0);
    let ns = [n0, n0 + 1.0];
    let ds = [0.8 * cfg.d0, cfg.d0, 1.2 * cfg.d0];
    let fs = [0.9 * cfg.food, cfg.food, 1.1 * cfg.food];
    let step = cfg.food_step * cfg.food;
    // Every action applied to every unit must stay inside the regime.
    let regime_ok = match cfg.scenario {
        Scenario::Plenty => fs[0] - step >= (ns[1] + 1.0) * ds[2] * cfg.appetizer,
        Scenario::Shortage => fs[2] + step <= (ns[0] - 1.0) * ds[0],
    };
    if !regime_ok {
        return Err(Error::InvalidParameter(format!(
            "food {} leaves the {:?} regime for some unit or action",
            cfg.food, cfg.scenario
        )));
    }
    let scm = GeneralScm::new(vec![
        root("n", uniform(&ns)?),
        root("F", uniform(&fs)?),
        root("d", uniform(&ds)?),
        NodeSpec::new("X", &["n", "F", "d"], FiniteNoise::none(), |pa, _| pa[1].min(pa[0] * pa[2])),
        NodeSpec::new("Y", &["X", "n"], FiniteNoise::none(), |pa, _| pa[0] / pa[1]),
    ])?;
    let actions = vec![
        UnitAction::propagating("more rabbits", add("n", 1.0, None)),
        UnitAction::propagating("fewer rabbits", add("n", -1.0, Some(1.0))),
        UnitAction::propagating("more food", add("F", step, None)),
        UnitAction::propagating("less food", add("F", -step, Some(0.0))),
        UnitAction::propagating("appetizer", scale("d", cfg.appetizer)),
    ];
    let (name, truth) = match cfg.scenario {
        Scenario::Plenty => ("rabbits1", Dag::new(&["X", "Y"], &[("Y", "X")])?),
        Scenario::Shortage => ("rabbits2", Dag::new(&["X", "Y"], &[("X", "Y")])?),
    };
    Ok(Exemplar {
        name: name.into(),
        variables: vec!["X".into(), "Y".into()],
        ground_truth: truth,
        claim: Claim::Unique,
        system: System::Mechanistic(Arc::new(scm)),
        unit_actions: actions,
        unit_config: UnitConfig::default(),
        params: Value::Null,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacroChoice {
    ActOn1s,
    ActOn2s,
}

/// Two micro pairs with `Y1 = X1` and `X2 = Y2`, observed only through the
/// averages `Xbar` and `Ybar`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacroConfig {
    pub choice: MacroChoice,
    /// Size of each micro shift; the average moves by half of it.
    pub delta: f64,
    /// Roots `X1`, `Y2` are uniform on `0..levels`.
    pub levels: u32,
}

impl MacroConfig {
    pub fn new(choice: MacroChoice) -> MacroConfig {
        MacroConfig {
            choice,
            delta: 1.0,
            levels: 3,
        }
    }
}

pub fn macro_pair(cfg: &MacroConfig) -> Result<Exemplar> {
    if cfg.levels == 0 || cfg.delta == 0.0 || !cfg.delta.is_finite() {
        return Err(Error::InvalidParameter("macro needs levels >= 1 and a nonzero finite delta".into()));
    }
    let support: Vec<f64> = (0..cfg.levels).map(f64::from).collect();
    let scm = GeneralScm::new(vec![
        root("X1", uniform(&support)?),
        root("Y2", uniform(&support)?),
        NodeSpec::new("Y1", &["X1"], FiniteNoise::none(), |pa, _| pa[0]),
        NodeSpec::new("X2", &["Y2"], FiniteNoise::none(), |pa, _| pa[0]),
        NodeSpec::new("Xbar", &["X1", "X2"], FiniteNoise::none(), |pa, _| 0.5 * (pa[0] + pa[1])),
        NodeSpec::new("Ybar", &["Y1", "Y2"], FiniteNoise::none(), |pa, _| 0.5 * (pa[0] + pa[1])),
    ])?;
    let (x, y, name, truth) = match cfg.choice {
        MacroChoice::ActOn1s => ("X1", "Y1", "macro1", ("Xbar", "Ybar")),
        MacroChoice::ActOn2s => ("X2", "Y2", "macro2", ("Ybar", "Xbar")),
    };
    let d = cfg.delta;
    let actions = vec![
        UnitAction::propagating(format!("{x}+"), add(x, d, None)),
        UnitAction::propagating(format!("{x}-"), add(x, -d, None)),
        UnitAction::propagating(format!("{y}+"), add(y, d, None)),
        UnitAction::propagating(format!("{y}-"), add(y, -d, None)),
    ];
    Ok(Exemplar {
        name: name.into(),
        variables: vec!["Xbar".into(), "Ybar".into()],
        ground_truth: Dag::new(&["Xbar", "Ybar"], &[truth])?,
        claim: Claim::Unique,
        system: System::Mechanistic(Arc::new(scm)),
        unit_actions: actions,
        unit_config: UnitConfig::default(),
        params: Value::Null,
    })
}

/// Two farmers trading potatoes for eggs. With stock `base` and exchange
/// factor `F`, the potatoes offered are `K_P = base F^-e` and the eggs
/// returned `K_E = K_P F`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FarmersConfig {
    /// Elasticity `e` of the offer with respect to the factor.
    pub exponent: f64,
    /// Central exchange factor; units use `0.75, 1, 1.25` times it.
    pub factor: f64,
    /// Stock added by the harvest action; `0` drops the action.
    pub harvest: f64,
}

impl Default for FarmersConfig {
    fn default() -> Self {
        FarmersConfig {
            exponent: 0.0,
            factor: 2.0,
            harvest: 5.0,
        }
    }
}

pub fn farmers(cfg: &FarmersConfig) -> Result<Exemplar> {
    if !(cfg.factor > 0.0) || !cfg.exponent.is_finite() || !(cfg.harvest >= 0.0) {
        return Err(Error::InvalidParameter(
            "farmers need a positive factor, finite exponent and nonnegative harvest".into(),
        ));
    }
    let e = cfg.exponent;
    let scm = GeneralScm::new(vec![
        root("base", uniform(&[10.0, 20.0, 30.0])?),
        root("F", uniform(&[0.75 * cfg.factor, cfg.factor, 1.25 * cfg.factor])?),
        NodeSpec::new("K_P", &["base", "F"], FiniteNoise::none(), move |pa, _| pa[0] * pa[1].powf(-e)),
        NodeSpec::new("K_E", &["K_P", "F"], FiniteNoise::none(), |pa, _| pa[0] * pa[1]),
    ])?;
    let mut actions = vec![
        UnitAction::propagating("raise factor", scale("F", 1.25)),
        UnitAction::propagating("lower factor", scale("F", 0.8)),
    ];
    if cfg.harvest > 0.0 {
        actions.push(UnitAction::propagating("harvest", add("base", cfg.harvest, None)));
    }
    let exact = |t: f64| (e - t).abs() < 1e-12;
    let claim = if (exact(0.0) || exact(1.0)) && cfg.harvest > 0.0 {
        Claim::Unique
    } else {
        Claim::Undetermined
    };
    let edge = if e < 0.5 { ("K_P", "K_E") } else { ("K_E", "K_P") };
    Ok(Exemplar {
        name: "farmers".into(),
        variables: vec!["K_P".into(), "K_E".into()],
        ground_truth: Dag::new(&["K_P", "K_E"], &[edge])?,
        claim,
        system: System::Mechanistic(Arc::new(scm)),
        unit_actions: actions,
        unit_config: UnitConfig::default(),
        params: Value::Null,
    })
}

#[cfg(test)]
mod tests {
    use super::super::build;
    use crate::actions::Direction;
    use serde_json::json;

    fn direction(name: &str, params: serde_json::Value) -> Direction {
        build(name, &params).unwrap().direction().unwrap()
    }

    #[test]
    fn rabbit_regimes_reverse_the_arrow() {
        assert_eq!(direction("rabbits1", json!({})), Direction::YcausesX);
        assert_eq!(direction("rabbits2", json!({})), Direction::XcausesY);
        assert!(build("rabbits1", &json!({"food": 5.0})).is_err());
        assert!(build("rabbits2", &json!({"food": 50.0})).is_err());
    }

    #[test]
    fn macro_direction_follows_the_acted_pair() {
        assert_eq!(direction("macro1", json!({})), Direction::XcausesY);
        assert_eq!(direction("macro2", json!({})), Direction::YcausesX);
    }

    #[test]
    fn farmers_direction_depends_on_elasticity() {
        assert_eq!(direction("farmers", json!({"exponent": 0.0})), Direction::XcausesY);
        assert_eq!(direction("farmers", json!({"exponent": 1.0})), Direction::YcausesX);
        assert_eq!(direction("farmers", json!({"exponent": 0.5})), Direction::Undetermined);
        assert_eq!(direction("farmers", json!({"harvest": 0.0})), Direction::Undetermined);
    }

    #[test]
    fn declared_graphs_are_valid_where_claimed() {
        for name in ["rabbits1", "rabbits2", "macro1", "macro2", "farmers"] {
            let ex = build(name, &json!({})).unwrap();
            for r in ex.classify_ground_truth().unwrap() {
                assert!(r.valid, "{name}: {:?}", r.violations());
            }
        }
    }
}
