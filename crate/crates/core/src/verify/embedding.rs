//! Coin systems whose action biases are driven by further binary variables.
//!
//! Each controller is `Y = parity(binarized parents) XOR B` with
//! `B ~ Bernoulli(flip)`. A system node controlled by `m` controllers draws
//! its coin noise from one of `2^m` bias settings, selected by the
//! controllers' values (first listed controller most significant).

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Check, Status};
use crate::discrete::markov_violation;
use crate::error::{Error, Result};
use crate::exemplars::{self, CoinSystem, Exemplar};
use crate::graph::Dag;
use crate::rng::seeded;
use crate::scm::{FiniteNoise, GeneralScm, NodeSpec};

/// Largest joint table the Markov check will build.
pub const MAX_EMBEDDING_STATES: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    pub name: String,
    /// Other controllers or system variables.
    #[serde(default)]
    pub parents: Vec<String>,
    /// A system parent reads as 1 when it exceeds this; defaults to the
    /// parent's initial count.
    #[serde(default)]
    pub threshold: Option<f64>,
    /// Probability of flipping the parity of the parents.
    #[serde(default = "half")]
    pub flip: f64,
    /// System variables whose action coins this controller drives.
    #[serde(default)]
    pub controls: Vec<String>,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSpec {
    pub controllers: Vec<ControllerSpec>,
    /// Per controlled system variable, `(p_plus, p_minus)` for each of the
    /// `2^m` controller configurations. Defaults to `p_plus` rising evenly
    /// from 0.2 to 0.8 with `p_minus = 0.5`.
    #[serde(default)]
    pub biases: BTreeMap<String, Vec<(f64, f64)>>,
}

impl EmbeddingSpec {
    /// One independent fair controller per listed system variable, named
    /// `Y1, Y2, ...`.
    pub fn independent(controlled: &[&str]) -> EmbeddingSpec {
        EmbeddingSpec {
            controllers: controlled
                .iter()
                .enumerate()
                .map(|(i, v)| ControllerSpec {
                    name: format!("Y{}", i + 1),
                    parents: Vec::new(),
                    threshold: None,
                    flip: 0.5,
                    controls: vec![v.to_string()],
                })
                .collect(),
            biases: BTreeMap::new(),
        }
    }
}

/// Joint model over system and controller variables, with the graph the
/// edge rule assigns to it.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub scm: GeneralScm,
    pub graph: Dag,
    pub system: Vec<String>,
    pub controllers: Vec<String>,
}

fn default_biases(m: usize) -> Vec<(f64, f64)> {
    let k = (1usize << m) - 1;
    (0..=k).map(|c| (0.2 + 0.6 * c as f64 / k as f64, 0.5)).collect()
}

fn coin_system(ex: &Exemplar) -> Result<&CoinSystem> {
    let coins = ex
        .coins()
        .ok_or_else(|| Error::InvalidArgument(format!("`{}` is not a coin system; embedding needs one", ex.name)))?;
    if !coins.boundary_free() {
        return Err(Error::InvalidParameter(
            "embedding uses the linear form of the coin system, which needs counts that can never hit zero".into(),
        ));
    }
    Ok(coins)
}

/// Builds the joint model. The graph has the system's edges, `Y -> X` for
/// every controlled variable, and an edge from every declared parent of a
/// controller; a cycle is an error.
pub fn build_embedding(ex: &Exemplar, spec: &EmbeddingSpec) -> Result<Embedding> {
    let coins = coin_system(ex)?;
    let lin = coins.linear_scm()?;
    let system: Vec<String> = coins.names().to_vec();
    let ctrl_names: Vec<String> = spec.controllers.iter().map(|c| c.name.clone()).collect();
    for (i, c) in spec.controllers.iter().enumerate() {
        if system.contains(&c.name) || ctrl_names[..i].contains(&c.name) {
            return Err(Error::InvalidParameter(format!("controller name `{}` is already used", c.name)));
        }
        if !(0.0..=1.0).contains(&c.flip) {
            return Err(Error::InvalidParameter(format!("flip of `{}` must lie in [0, 1]", c.name)));
        }
        for v in c.parents.iter() {
            if !system.contains(v) && !ctrl_names.contains(v) {
                return Err(Error::UnknownVariable(v.clone()));
            }
        }
        for v in &c.controls {
            if !system.contains(v) {
                return Err(Error::UnknownVariable(v.clone()));
            }
        }
    }
    for name in spec.biases.keys() {
        if !spec.controllers.iter().any(|c| c.controls.contains(name)) {
            return Err(Error::InvalidParameter(format!("biases given for uncontrolled variable `{name}`")));
        }
    }
    let a = lin.matrix();
    let mut specs = Vec::new();
    for (i, name) in system.iter().enumerate() {
        let ctrls: Vec<String> = spec
            .controllers
            .iter()
            .filter(|c| c.controls.contains(name))
            .map(|c| c.name.clone())
            .collect();
        let m = ctrls.len();
        let biases = match (m, spec.biases.get(name)) {
            (0, _) => vec![coins.biases()[i]],
            (_, Some(b)) if b.len() == 1 << m => b.clone(),
            (_, Some(b)) => {
                return Err(Error::InvalidParameter(format!(
                    "`{name}` needs {} bias pairs, got {}",
                    1 << m,
                    b.len()
                )))
            }
            (_, None) => default_biases(m),
        };
        if biases.iter().any(|(p, q)| !(0.0..=1.0).contains(p) || !(0.0..=1.0).contains(q)) {
            return Err(Error::InvalidParameter(format!("biases of `{name}` must lie in [0, 1]")));
        }
        let parts: Vec<FiniteNoise> = biases
            .iter()
            .map(|&b| FiniteNoise::from_spec(&coins.noise_spec(b)))
            .collect::<Result<_>>()?;
        let noise = FiniteNoise::product(&parts)?;
        let sys_parents: Vec<usize> = lin.dag().parents(i).to_vec();
        let coefs: Vec<f64> = sys_parents.iter().map(|&p| a.get(i, p)).collect();
        let offset = lin.offsets()[i];
        let mut parents: Vec<String> = sys_parents.iter().map(|&p| system[p].clone()).collect();
        parents.extend(ctrls);
        let np = coefs.len();
        specs.push(NodeSpec::new(name, &parents, noise, move |pa, n| {
            let config = pa[np..].iter().fold(0usize, |acc, y| (acc << 1) | usize::from(*y > 0.5));
            offset + coefs.iter().zip(pa).map(|(c, x)| c * x).sum::<f64>() + n[config]
        }));
    }
    for c in &spec.controllers {
        let cuts: Vec<f64> = c
            .parents
            .iter()
            .map(|p| match system.iter().position(|s| s == p) {
                Some(i) => c.threshold.unwrap_or(coins.k0()[i] as f64),
                None => 0.5,
            })
            .collect();
        let noise = FiniteNoise::scalar(&[(0.0, 1.0 - c.flip), (1.0, c.flip)])?;
        specs.push(NodeSpec::new(&c.name, &c.parents, noise, move |pa, n| {
            let parity = pa.iter().zip(&cuts).filter(|(v, t)| **v > **t).count() % 2;
            f64::from((parity as u32) ^ (n[0] as u32))
        }));
    }
    let scm = GeneralScm::new(specs)?;
    Ok(Embedding {
        graph: scm.dag().clone(),
        scm,
        system,
        controllers: ctrl_names,
    })
}

/// Exact joint of the embedding checked against `embedding.graph`. A failure
/// names the worst violated separation.
pub fn verify_embedding_markov(embedding: &Embedding, eps: f64) -> Result<Check> {
    let joint = embedding.scm.exact_joint()?;
    if joint.len() > MAX_EMBEDDING_STATES {
        return Err(Error::StateSpaceTooLarge {
            states: joint.len(),
            cap: MAX_EMBEDDING_STATES,
        });
    }
    let violation = markov_violation(&joint, &embedding.graph, eps)?;
    let mut measured = json!({
        "states": joint.len(),
        "graph": embedding.graph.edge_names(),
        "eps": eps,
    });
    Ok(match violation {
        None => Check {
            status: Status::Pass,
            measured,
            message: None,
        },
        Some(v) => {
            let message = format!(
                "{} independent of {} given {{{}}} fails (residual {:.3e})",
                v.a.join(","),
                v.b.join(","),
                v.c.join(","),
                v.residual
            );
            measured["violation"] = json!(v);
            Check {
                status: Status::Fail,
                measured,
                message: Some(message),
            }
        }
    })
}

/// Random controller layout over a small two-colour urn. Layouts whose
/// graph would be cyclic are redrawn.
pub fn random_embedding(seed: u64) -> Result<(EmbeddingSpec, Embedding)> {
    let mut rng = seeded(seed);
    let rounds = rng.random_range(1..=2u32);
    let ex = exemplars::build("urn2", &json!({ "rounds": rounds, "kb0": 6, "kr0": 6 }))?;
    let system = ["Kb", "Kr"];
    loop {
        let m = rng.random_range(1..=2usize);
        let controllers: Vec<ControllerSpec> = (0..m)
            .map(|i| {
                let mut parents: Vec<String> = (0..i).filter(|_| rng.random_bool(0.5)).map(|k| format!("Y{}", k + 1)).collect();
                parents.extend(system.iter().filter(|_| rng.random_bool(0.25)).map(|s| s.to_string()));
                let mut controls: Vec<String> = system.iter().filter(|_| rng.random_bool(0.5)).map(|s| s.to_string()).collect();
                if controls.is_empty() {
                    controls.push(system[rng.random_range(0..2)].to_string());
                }
                ControllerSpec {
                    name: format!("Y{}", i + 1),
                    parents,
                    threshold: None,
                    flip: rng.random_range(0.05..0.95),
                    controls,
                }
            })
            .collect();
        let mut biases = BTreeMap::new();
        for s in system {
            let k = controllers.iter().filter(|c| c.controls.iter().any(|v| v == s)).count();
            if k > 0 {
                let b: Vec<(f64, f64)> = (0..1 << k)
                    .map(|_| (rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)))
                    .collect();
                biases.insert(s.to_string(), b);
            }
        }
        let spec = EmbeddingSpec { controllers, biases };
        match build_embedding(&ex, &spec) {
            Ok(e) => return Ok((spec, e)),
            Err(Error::Cycle(_)) => continue,
            Err(e) => return Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn urn(rounds: u32) -> Exemplar {
        exemplars::build("urn2", &json!({ "rounds": rounds })).unwrap()
    }

    fn edges(g: &Dag) -> Vec<(String, String)> {
        let mut e = g.edge_names();
        e.sort();
        e
    }

    fn pairs(list: &[(&str, &str)]) -> Vec<(String, String)> {
        let mut e: Vec<(String, String)> = list.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        e.sort();
        e
    }

    #[test]
    fn independent_controllers_follow_the_edge_rule() {
        let e = build_embedding(&urn(2), &EmbeddingSpec::independent(&["Kb", "Kr"])).unwrap();
        assert_eq!(edges(&e.graph), pairs(&[("Kb", "Kr"), ("Y1", "Kb"), ("Y2", "Kr")]));
        assert_eq!(verify_embedding_markov(&e, 1e-12).unwrap().status, Status::Pass);
    }

    #[test]
    fn no_controllers_keeps_the_system_graph() {
        let ex = urn(2);
        let e = build_embedding(&ex, &EmbeddingSpec::default()).unwrap();
        assert!(e.graph.same_structure(&ex.ground_truth));
    }

    #[test]
    fn controller_chain_adds_three_edges() {
        let spec: EmbeddingSpec = serde_json::from_value(json!({
            "controllers": [
                {"name": "Y1", "controls": ["Kr"]},
                {"name": "Y2", "parents": ["Y1"], "flip": 0.2, "controls": ["Kr"]}
            ]
        }))
        .unwrap();
        let e = build_embedding(&urn(1), &spec).unwrap();
        assert_eq!(edges(&e.graph), pairs(&[("Kb", "Kr"), ("Y1", "Kr"), ("Y1", "Y2"), ("Y2", "Kr")]));
        assert_eq!(verify_embedding_markov(&e, 1e-12).unwrap().status, Status::Pass);
    }

    #[test]
    fn dropped_edge_is_named() {
        let mut e = build_embedding(&urn(2), &EmbeddingSpec::independent(&["Kb", "Kr"])).unwrap();
        e.graph = Dag::new(&["Kb", "Kr", "Y1", "Y2"], &[("Kb", "Kr"), ("Y2", "Kr")]).unwrap();
        let c = verify_embedding_markov(&e, 1e-12).unwrap();
        assert_eq!(c.status, Status::Fail);
        let msg = c.message.unwrap();
        assert!(msg.contains("Y1"), "{msg}");
    }

    #[test]
    fn cycles_are_rejected() {
        let spec: EmbeddingSpec = serde_json::from_value(json!({
            "controllers": [{"name": "Y1", "parents": ["Kr"], "controls": ["Kb"]}]
        }))
        .unwrap();
        assert!(matches!(build_embedding(&urn(1), &spec), Err(Error::Cycle(_))));
    }

    #[test]
    fn constant_controllers_reduce_to_the_system() {
        let mut spec = EmbeddingSpec::independent(&["Kb", "Kr"]);
        for c in spec.controllers.iter_mut() {
            c.flip = 0.0;
        }
        let e = build_embedding(&urn(2), &spec).unwrap();
        assert_eq!(verify_embedding_markov(&e, 1e-12).unwrap().status, Status::Pass);
    }

    #[test]
    fn random_layouts_are_markov() {
        for s in 0..10 {
            let (_, e) = random_embedding(s).unwrap();
            let c = verify_embedding_markov(&e, 1e-12).unwrap();
            assert_eq!(c.status, Status::Pass, "{:?}", c.message);
        }
    }
}
