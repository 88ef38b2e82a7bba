//! Actions on a full system, seen through a causally sufficient subset.
//!
//! Changing one conditional of `P` over `G` changes at most one conditional
//! of `P_S` over the marginal DAG `G_S`: its own if `j ∈ S`, otherwise the
//! conditional of the unique member of `S` that `j` reaches without passing
//! through `S`. Parent adjustment in `G_S` also reproduces the interventional
//! distributions of `G`.

use rand::Rng;
use serde_json::json;

use super::{Check, Status};
use crate::discrete::{
    changed_factors, factor_changes, from_factors, hard_intervention, markov_violation, soft_intervention,
    ConditionalTable, DiscreteJoint, Variable,
};
use crate::error::{Error, Result};
use crate::graph::{random_dag, Dag, NodeSet};
use crate::rng::seeded;

/// Largest system the random instances use.
pub const MAX_NODES: usize = 6;
/// Weight of the uniform component mixed into every random conditional.
pub const POSITIVITY_MIX: f64 = 1e-3;
/// Tolerance for factor changes and interventional agreement.
pub const DEFAULT_EPS: f64 = 1e-9;

/// A random conditional for `target` given `parents`, mixed with the uniform
/// table so every entry is positive.
pub fn random_conditional<R: Rng + ?Sized>(target: &str, parents: Vec<String>, cards: Vec<usize>, k: usize, rng: &mut R) -> Result<ConditionalTable> {
    let n_ctx: usize = cards.iter().product();
    let mut probs = Vec::with_capacity(n_ctx * k);
    for _ in 0..n_ctx {
        let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let s: f64 = w.iter().sum();
        probs.extend(w.iter().map(|x| (1.0 - POSITIVITY_MIX) * x / s + POSITIVITY_MIX / k as f64));
    }
    ConditionalTable::from_weights(target.to_string(), k, parents, cards, probs)
}

/// Positive joint Markov to `g`, binary variables, built from random
/// conditionals.
pub fn random_markov_joint<R: Rng + ?Sized>(g: &Dag, rng: &mut R) -> Result<DiscreteJoint> {
    let vars: Vec<Variable> = g.names().iter().map(|n| Variable::new(n.clone(), 2)).collect();
    let factors = (0..g.len())
        .map(|j| {
            let pa = g.set_names(g.parents(j));
            let cards = vec![2; pa.len()];
            random_conditional(g.name(j), pa, cards, 2, rng)
        })
        .collect::<Result<Vec<_>>>()?;
    from_factors(&vars, g, &factors)
}

/// Interventional agreement between `G` and `G_S` for one ordered pair.
struct Adjustment {
    max_error: f64,
    admissible_in_g: bool,
}

/// `p(y | do(x))` by parent adjustment in `G_S` against the truncated
/// factorization in `G`. `xs`, `ys` index `gs`; `p_s` is ordered as `gs`.
fn adjustment_error(g: &Dag, p: &DiscreteJoint, gs: &Dag, p_s: &DiscreteJoint, xs: usize, ys: usize) -> Result<Adjustment> {
    let z = gs.parents(xs);
    let zs = z.to_vec();
    let xg = g.index(gs.name(xs))?;
    let yg = g.index(gs.name(ys))?;
    let zg = g.node_set(&gs.set_names(z))?;
    let mut zx = zs.clone();
    zx.push(xs);
    let mut zxy = zx.clone();
    zxy.push(ys);
    let pzxy = p_s.marginal(&zxy)?;
    let pzx = p_s.marginal(&zx)?;
    let pz = p_s.marginal(&zs)?;
    let mut max_error: f64 = 0.0;
    for xv in 0..2 {
        let ty = hard_intervention(p, g, xg, xv)?.marginal(&[yg])?;
        for yv in 0..2 {
            let mut adjusted = 0.0;
            for zc in 0..pz.len() {
                let mut vals = pz.decode(zc);
                let w = pz.prob(&vals)?;
                vals.push(xv);
                let cond = pzx.prob(&vals)?;
                vals.push(yv);
                adjusted += w * pzxy.prob(&vals)? / cond;
            }
            max_error = max_error.max((adjusted - ty.prob(&[yv])?).abs());
        }
    }
    Ok(Adjustment {
        max_error,
        admissible_in_g: g.backdoor_admissible(xg, yg, zg)?,
    })
}

/// Checks the boundary property for the action replacing the conditional of
/// node `j` of `g` by `new_factor`, observed on `s`.
///
/// Rejected when `s` is not causally sufficient in `g`. Fails when more than
/// one conditional of the marginal changes, when the changed one is not the
/// predicted node, when `P_S` is not Markov to `G_S`, or when parent
/// adjustment in `G_S` disagrees with `G` by more than `eps`.
pub fn verify_boundary_consistency(
    g: &Dag,
    p: &DiscreteJoint,
    j: usize,
    new_factor: &ConditionalTable,
    s: NodeSet,
    eps: f64,
) -> Result<Check> {
    let s_names = g.set_names(s);
    let gs = match g.marginal_dag(s) {
        Ok(gs) => gs,
        Err(Error::SufficiencyViolation { cause, reached, .. }) => {
            return Ok(Check {
                status: Status::Rejected,
                measured: json!({ "subset": s_names }),
                message: Some(format!("`{cause}` reaches {reached:?} without passing through the subset")),
            })
        }
        Err(e) => return Err(e),
    };
    let p = p.aligned_to(g)?;
    let q = soft_intervention(&p, g, j, new_factor)?;
    let order = s.to_vec();
    let p_s = p.marginal(&order)?;
    let q_s = q.marginal(&order)?;
    let changed = changed_factors(&p_s, &q_s, &gs, eps)?;
    let changed_names = gs.set_names(changed);
    let reached = g.reach_avoiding(j, s);
    let predicted: Vec<String> = if s.contains(j) {
        vec![g.name(j).to_string()]
    } else {
        g.set_names(reached)
    };
    let distances: Vec<(String, f64)> = factor_changes(&p_s, &q_s, &gs)?
        .into_iter()
        .map(|c| (c.node, c.distance))
        .collect();
    let markov_p = markov_violation(&p_s, &gs, eps)?;
    let markov_q = markov_violation(&q_s, &gs, eps)?;
    let mut adjust_error: f64 = 0.0;
    let mut inadmissible = Vec::new();
    for xs in 0..gs.len() {
        for ys in 0..gs.len() {
            if xs == ys || gs.parents(xs).contains(ys) {
                continue;
            }
            let a = adjustment_error(g, &p, &gs, &p_s, xs, ys)?;
            adjust_error = adjust_error.max(a.max_error);
            if !a.admissible_in_g {
                inadmissible.push((gs.name(xs).to_string(), gs.name(ys).to_string()));
            }
        }
    }
    let measured = json!({
        "subset": s_names,
        "acted_on": g.name(j),
        "marginal_graph": gs.edge_names(),
        "changed": changed_names,
        "predicted": predicted,
        "factor_distances": distances,
        "adjustment_error": adjust_error,
        "inadmissible_pairs": inadmissible,
    });
    let mut problems = Vec::new();
    if changed.len() > 1 {
        problems.push(format!("{} conditionals changed: {:?}", changed.len(), changed_names));
    }
    if !changed_names.iter().all(|c| predicted.contains(c)) {
        problems.push(format!("changed {changed_names:?}, expected a subset of {predicted:?}"));
    }
    if !s.contains(j) && reached.len() > 1 {
        problems.push(format!("`{}` reaches {:?} outside the subset", g.name(j), predicted));
    }
    for (label, v) in [("before", markov_p), ("after", markov_q)] {
        if let Some(v) = v {
            problems.push(format!(
                "marginal {label} the action violates {:?} independent of {:?} given {:?} ({:.3e})",
                v.a, v.b, v.c, v.residual
            ));
        }
    }
    if adjust_error > eps {
        problems.push(format!("parent adjustment in the marginal graph is off by {adjust_error:.3e}"));
    }
    if !inadmissible.is_empty() {
        problems.push(format!("marginal parents are not a valid adjustment set in the full graph for {inadmissible:?}"));
    }
    Ok(if problems.is_empty() {
        Check {
            status: Status::Pass,
            measured,
            message: None,
        }
    } else {
        Check {
            status: Status::Fail,
            measured,
            message: Some(problems.join("; ")),
        }
    })
}

/// A random instance: DAG, positive Markov joint, acted-on node, new
/// conditional and sufficient subset of at least two nodes.
#[derive(Debug, Clone)]
pub struct BoundaryInstance {
    pub graph: Dag,
    pub joint: DiscreteJoint,
    pub node: usize,
    pub factor: ConditionalTable,
    pub subset: NodeSet,
}

impl BoundaryInstance {
    pub fn describe(&self) -> serde_json::Value {
        json!({
            "graph": self.graph.edge_names(),
            "nodes": self.graph.names(),
            "acted_on": self.graph.name(self.node),
            "subset": self.graph.set_names(self.subset),
        })
    }

    pub fn check(&self, eps: f64) -> Result<Check> {
        verify_boundary_consistency(&self.graph, &self.joint, self.node, &self.factor, self.subset, eps)
    }
}

pub fn random_instance(seed: u64) -> Result<BoundaryInstance> {
    let mut rng = seeded(seed);
    let n = rng.random_range(3..=MAX_NODES);
    let graph = random_dag(n, rng.random_range(0.2..0.7), &mut rng);
    let joint = random_markov_joint(&graph, &mut rng)?;
    let node = rng.random_range(0..n);
    let pa = graph.set_names(graph.parents(node));
    let cards = vec![2; pa.len()];
    let factor = random_conditional(graph.name(node), pa, cards, 2, &mut rng)?;
    let subset = loop {
        let bits = rng.random_range(0..1u64 << n);
        let s = NodeSet::from_bits(bits);
        if s.len() >= 2 && graph.is_graphically_causally_sufficient(s) {
            break s;
        }
    };
    Ok(BoundaryInstance {
        graph,
        joint,
        node,
        factor,
        subset,
    })
}

/// `X1 -> X2 -> X3`, action on `X2`, observed on `{X1, X3}`: the marginal
/// graph is `X1 -> X3` and only the conditional of `X3` changes.
pub fn chain_instance(seed: u64) -> Result<BoundaryInstance> {
    let mut rng = seeded(seed);
    let graph = Dag::new(&["X1", "X2", "X3"], &[("X1", "X2"), ("X2", "X3")])?;
    let joint = random_markov_joint(&graph, &mut rng)?;
    let factor = random_conditional("X2", vec!["X1".into()], vec![2], 2, &mut rng)?;
    let subset = graph.node_set(&["X1", "X3"])?;
    Ok(BoundaryInstance {
        graph,
        joint,
        node: 1,
        factor,
        subset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_moves_the_change_downstream() {
        let inst = chain_instance(3).unwrap();
        let c = inst.check(DEFAULT_EPS).unwrap();
        assert_eq!(c.status, Status::Pass, "{:?}", c.message);
        assert_eq!(c.measured["changed"], json!(["X3"]));
        assert_eq!(c.measured["marginal_graph"], json!([["X1", "X3"]]));
    }

    #[test]
    fn acting_inside_the_subset_changes_only_that_node() {
        let mut inst = chain_instance(4).unwrap();
        inst.node = 2;
        inst.factor = random_conditional("X3", vec!["X2".into()], vec![2], 2, &mut seeded(9)).unwrap();
        let c = inst.check(DEFAULT_EPS).unwrap();
        assert_eq!(c.status, Status::Pass, "{:?}", c.message);
        assert_eq!(c.measured["changed"], json!(["X3"]));
    }

    #[test]
    fn confounded_subset_is_rejected() {
        let g = Dag::new(&["X1", "X2", "X3"], &[("X1", "X2"), ("X1", "X3")]).unwrap();
        let p = random_markov_joint(&g, &mut seeded(1)).unwrap();
        let t = random_conditional("X1", vec![], vec![], 2, &mut seeded(2)).unwrap();
        let s = g.node_set(&["X2", "X3"]).unwrap();
        let c = verify_boundary_consistency(&g, &p, 0, &t, s, DEFAULT_EPS).unwrap();
        assert_eq!(c.status, Status::Rejected);
    }

    #[test]
    fn random_joints_are_markov_and_positive() {
        for s in 0..20 {
            let inst = random_instance(s).unwrap();
            assert!(markov_violation(&inst.joint, &inst.graph, 1e-12).unwrap().is_none());
            assert!(inst.joint.probs().iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn random_instances_hold() {
        for s in 0..100 {
            let inst = random_instance(s).unwrap();
            let c = inst.check(DEFAULT_EPS).unwrap();
            assert_eq!(c.status, Status::Pass, "{}: {:?}", inst.describe(), c.message);
        }
    }
}
