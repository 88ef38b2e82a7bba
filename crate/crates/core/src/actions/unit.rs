use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ActionSuite, ActionVerdict, ClassificationReport, Mode, Verdict};
use crate::discrete::DEFAULT_EPS;
use crate::error::{Error, Result};
use crate::graph::{Dag, NodeSet};
use crate::linalg::affine_fit;
use crate::scm::{GeneralScm, DEFAULT_UNIT_CAP};

/// Built-in parametric state maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MapSpec {
    /// Adds a constant to each listed variable. Refused if any result would
    /// fall below `min`.
    AddConstant {
        deltas: Vec<(String, f64)>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min: Option<f64>,
    },
    /// Moves `amount` units from one count to another; refused if the source
    /// holds fewer.
    SwapCount {
        from: String,
        to: String,
        #[serde(default = "one")]
        amount: f64,
    },
    /// Sets a count to a fixed value.
    ReplaceCount { variable: String, value: f64 },
    /// Multiplies a variable by a factor.
    Scale { variable: String, factor: f64 },
}

fn one() -> f64 {
    1.0
}

impl MapSpec {
    pub fn targets(&self) -> Vec<&str> {
        match self {
            MapSpec::AddConstant { deltas, .. } => deltas.iter().map(|(v, _)| v.as_str()).collect(),
            MapSpec::SwapCount { from, to, .. } => vec![from.as_str(), to.as_str()],
            MapSpec::ReplaceCount { variable, .. } | MapSpec::Scale { variable, .. } => vec![variable.as_str()],
        }
    }

    /// New state, or `None` when the map is undefined on `state`.
    pub fn apply(&self, dag: &Dag, state: &[f64]) -> Result<Option<Vec<f64>>> {
        let mut x = state.to_vec();
        match self {
            MapSpec::AddConstant { deltas, min } => {
                for (v, d) in deltas {
                    let i = dag.index(v)?;
                    x[i] += d;
                    if min.is_some_and(|m| x[i] < m) {
                        return Ok(None);
                    }
                }
            }
            MapSpec::SwapCount { from, to, amount } => {
                let (f, t) = (dag.index(from)?, dag.index(to)?);
                if x[f] < *amount {
                    return Ok(None);
                }
                x[f] -= amount;
                x[t] += amount;
            }
            MapSpec::ReplaceCount { variable, value } => x[dag.index(variable)?] = *value,
            MapSpec::Scale { variable, factor } => x[dag.index(variable)?] *= factor,
        }
        Ok(Some(x))
    }
}

/// An action given as a map on system states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitAction {
    pub label: String,
    pub map: MapSpec,
    /// Recompute the other variables from their mechanisms afterwards, with
    /// the unit's own noise.
    #[serde(default)]
    pub propagate: bool,
}

impl UnitAction {
    pub fn new(label: impl Into<String>, map: MapSpec) -> UnitAction {
        UnitAction {
            label: label.into(),
            map,
            propagate: false,
        }
    }

    pub fn propagating(label: impl Into<String>, map: MapSpec) -> UnitAction {
        UnitAction {
            label: label.into(),
            map,
            propagate: true,
        }
    }

    /// State of the unit after the action, or `None` if refused.
    pub fn apply(&self, scm: &GeneralScm, unit: &[usize], state: &[f64]) -> Result<Option<Vec<f64>>> {
        let Some(mut y) = self.map.apply(scm.dag(), state)? else {
            return Ok(None);
        };
        if self.propagate {
            let fixed: NodeSet = self
                .map
                .targets()
                .iter()
                .map(|t| scm.dag().index(t))
                .collect::<Result<_>>()?;
            y = scm.propagate(&y, unit, fixed);
        }
        Ok(Some(y))
    }
}

/// Sampling and tolerance settings for unit-level classification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitConfig {
    /// Units sampled when the unit space is too large to enumerate.
    pub trials: usize,
    pub seed: u64,
    /// Relative tolerance for "unchanged" and for law residuals.
    pub eps: f64,
    /// Enumerate every unit when there are at most this many.
    pub enumerate_cap: usize,
}

impl Default for UnitConfig {
    fn default() -> Self {
        UnitConfig {
            trials: 1000,
            seed: 0,
            eps: DEFAULT_EPS,
            enumerate_cap: DEFAULT_UNIT_CAP,
        }
    }
}

fn tol(eps: f64, a: f64, b: f64) -> f64 {
    eps * (1.0 + a.abs().max(b.abs()))
}

struct Prepared {
    /// Per unit, projected onto the graph's nodes.
    base: Vec<Vec<f64>>,
    /// Per action, per unit; `None` when refused.
    after: Vec<Vec<Option<Vec<f64>>>>,
}

fn prepare(g: &Dag, scm: &GeneralScm, actions: &[UnitAction], cfg: &UnitConfig) -> Result<Prepared> {
    let gidx: Vec<usize> = g
        .names()
        .iter()
        .map(|n| {
            scm.dag()
                .index(n)
                .map_err(|_| Error::VariableMismatch(format!("`{n}` is not a variable of the system")))
        })
        .collect::<Result<_>>()?;
    let mut units: Vec<Vec<usize>> = if scm.unit_count() <= cfg.enumerate_cap {
        scm.enumerate_units(cfg.enumerate_cap)?.into_iter().map(|(u, _)| u).collect()
    } else {
        (0..cfg.trials as u64).map(|r| scm.sample_unit(cfg.seed, r)).collect()
    };
    units.sort();
    units.dedup();
    let project = |x: &[f64]| gidx.iter().map(|&i| x[i]).collect::<Vec<f64>>();
    let states: Vec<Vec<f64>> = units.iter().map(|u| scm.evaluate(u)).collect();
    let base = states.iter().map(|x| project(x)).collect();
    let after = actions
        .iter()
        .map(|a| {
            units
                .iter()
                .zip(&states)
                .map(|(u, x)| Ok(a.apply(scm, u, x)?.map(|y| project(&y))))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(Prepared { base, after })
}

/// Whether the points satisfy one affine law `x_i = α + β·pa_i`.
fn law_holds(g: &Dag, i: usize, points: &[&[f64]], eps: f64) -> bool {
    let first = points[0][i];
    let pa = g.parents(i).to_vec();
    if pa.is_empty() {
        return points.iter().all(|p| (p[i] - first).abs() <= tol(eps, p[i], first));
    }
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(points.len());
    let mut ys: Vec<f64> = Vec::with_capacity(points.len());
    let mut scale: f64 = 0.0;
    for p in points {
        let row: Vec<f64> = pa.iter().map(|&k| p[k]).collect();
        if xs.iter().zip(&ys).any(|(r, y)| r == &row && *y == p[i]) {
            continue;
        }
        scale = row.iter().fold(scale.max(p[i].abs()), |s, v| s.max(v.abs()));
        xs.push(row);
        ys.push(p[i]);
    }
    if ys.len() <= 1 {
        return true;
    }
    let (_, _, residual) = affine_fit(&xs, &ys);
    residual <= eps * (1.0 + scale)
}

/// Classifies each action by the unit-level laws it breaks under `g`.
///
/// Per unit, the nodes changed by an action whose graph parents are all
/// unchanged are its forced targets; there must be exactly one, the same on
/// every unit. Every other node must keep a single affine law in its parents
/// across the unit's baseline state and the outcomes of all actions not
/// targeting it. Actions are admitted in order; one that would break a law
/// already supported by earlier actions is the violation.
pub fn classify_unit(g: &Dag, scm: &GeneralScm, actions: &[UnitAction], cfg: &UnitConfig) -> Result<ClassificationReport> {
    classify_inner(g, scm, actions, cfg, false)
}

fn classify_inner(
    g: &Dag,
    scm: &GeneralScm,
    actions: &[UnitAction],
    cfg: &UnitConfig,
    stop_early: bool,
) -> Result<ClassificationReport> {
    let prep = prepare(g, scm, actions, cfg)?;
    let n = g.len();
    let eps = cfg.eps;
    let finish = |verdicts: Vec<ActionVerdict>| ClassificationReport::finish(Mode::Unit, g.clone(), verdicts, 0.0, eps);

    // forced targets
    let mut verdicts: Vec<ActionVerdict> = Vec::with_capacity(actions.len());
    let mut targets: Vec<Option<usize>> = vec![None; actions.len()];
    for (a, act) in actions.iter().enumerate() {
        let verdict = forced_target(g, &prep, a, eps);
        if let Ok(t) = &verdict {
            targets[a] = *t;
        }
        let verdict = match verdict {
            Ok(None) => Verdict::Identity,
            Ok(Some(t)) => Verdict::Assigned {
                node: g.name(t).to_string(),
            },
            Err(v) => v,
        };
        let stop = stop_early && verdict.is_violation();
        verdicts.push(ActionVerdict {
            label: act.label.clone(),
            verdict,
            factors: None,
        });
        if stop {
            return Ok(finish(verdicts));
        }
    }

    // laws of the untargeted nodes
    let mut accepted: Vec<(usize, usize)> = Vec::new();
    for a in 0..actions.len() {
        let Some(t) = targets[a] else { continue };
        let mut broken: Option<(usize, Vec<String>)> = None;
        'units: for u in 0..prep.base.len() {
            let y = prep.after[a][u].as_deref().expect("applicable");
            for i in (0..n).filter(|&i| i != t) {
                let mut pts: Vec<&[f64]> = vec![&prep.base[u]];
                pts.extend(
                    accepted
                        .iter()
                        .filter(|(_, c)| *c != i)
                        .map(|(b, _)| prep.after[*b][u].as_deref().expect("applicable")),
                );
                pts.push(y);
                if !law_holds(g, i, &pts, eps) {
                    let changed = (0..n)
                        .filter(|&k| (y[k] - prep.base[u][k]).abs() > tol(eps, y[k], prep.base[u][k]))
                        .map(|k| g.name(k).to_string())
                        .collect();
                    broken = Some((i, changed));
                    break 'units;
                }
            }
        }
        match broken {
            None => accepted.push((a, t)),
            Some((i, changed)) => {
                verdicts[a].verdict = Verdict::Violation {
                    changed,
                    reason: format!("also breaks the law of `{}`", g.name(i)),
                };
                if stop_early {
                    return Ok(finish(verdicts));
                }
            }
        }
    }
    Ok(finish(verdicts))
}

/// The single node an action can target under `g`, `None` for an identity,
/// or the violation that rules it out.
fn forced_target(g: &Dag, prep: &Prepared, a: usize, eps: f64) -> std::result::Result<Option<usize>, Verdict> {
    let refused = prep.after[a].iter().filter(|y| y.is_none()).count();
    if refused > 0 {
        return Err(Verdict::Violation {
            changed: Vec::new(),
            reason: format!("inapplicable on {refused} of {} units", prep.base.len()),
        });
    }
    let mut target: Option<usize> = None;
    for (x, y) in prep.base.iter().zip(&prep.after[a]) {
        let y = y.as_deref().expect("applicable");
        let changed: NodeSet = (0..g.len())
            .filter(|&k| (y[k] - x[k]).abs() > tol(eps, y[k], x[k]))
            .collect();
        if changed.is_empty() {
            continue;
        }
        let forced: Vec<usize> = changed
            .iter()
            .filter(|&k| g.parents(k).is_disjoint(changed))
            .collect();
        if forced.len() != 1 {
            return Err(Verdict::Violation {
                changed: g.set_names(changed),
                reason: "changes more than one mechanism".into(),
            });
        }
        match target {
            Some(t) if t != forced[0] => {
                return Err(Verdict::Violation {
                    changed: g.set_names(changed),
                    reason: format!(
                        "targets `{}` on some units and `{}` on others",
                        g.name(t),
                        g.name(forced[0])
                    ),
                })
            }
            _ => target = Some(forced[0]),
        }
    }
    Ok(target)
}

/// A system, the observed variables and its state-map actions.
#[derive(Debug, Clone)]
pub struct UnitSuite {
    pub scm: Arc<GeneralScm>,
    pub variables: Vec<String>,
    pub actions: Vec<UnitAction>,
    pub config: UnitConfig,
}

impl ActionSuite for UnitSuite {
    fn mode(&self) -> Mode {
        Mode::Unit
    }

    fn variables(&self) -> Vec<String> {
        self.variables.clone()
    }

    fn classify(&self, g: &Dag) -> Result<ClassificationReport> {
        classify_unit(g, &self.scm, &self.actions, &self.config)
    }

    fn is_valid(&self, g: &Dag) -> Result<bool> {
        Ok(classify_inner(g, &self.scm, &self.actions, &self.config, true)?.valid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::{bivariate_direction, Direction};
    use crate::scm::{FiniteNoise, NodeSpec};

    /// `Y = X + N`, `X` uniform on a few values.
    fn additive() -> GeneralScm {
        GeneralScm::new(vec![
            NodeSpec::new::<&str>(
                "X",
                &[],
                FiniteNoise::scalar(&[(1.0, 0.5), (4.0, 0.5)]).unwrap(),
                |_, n| n[0],
            ),
            NodeSpec::new(
                "Y",
                &["X"],
                FiniteNoise::scalar(&[(3.0, 0.5), (7.0, 0.5)]).unwrap(),
                |pa, n| pa[0] + n[0],
            ),
        ])
        .unwrap()
    }

    fn add(v: &str, d: f64) -> MapSpec {
        MapSpec::AddConstant {
            deltas: vec![(v.into(), d)],
            min: None,
        }
    }

    #[test]
    fn additive_pair_direction() {
        let suite = UnitSuite {
            scm: Arc::new(additive()),
            variables: vec!["X".into(), "Y".into()],
            actions: vec![
                UnitAction::propagating("shift x", add("X", 1.0)),
                UnitAction::propagating("shift x twice", add("X", 2.0)),
                UnitAction::new("shift y", add("Y", 1.0)),
            ],
            config: UnitConfig::default(),
        };
        assert_eq!(bivariate_direction(&suite).unwrap(), Direction::XcausesY);
        let g = Dag::new(&["X", "Y"], &[("X", "Y")]).unwrap();
        let r = suite.classify(&g).unwrap();
        assert_eq!(r.verdict("shift x").unwrap().assigned(), Some("X"));
        assert_eq!(r.verdict("shift y").unwrap().assigned(), Some("Y"));
    }

    #[test]
    fn refused_action_is_a_violation() {
        let g = Dag::new(&["X", "Y"], &[("X", "Y")]).unwrap();
        let a = UnitAction::new(
            "drain",
            MapSpec::AddConstant {
                deltas: vec![("X".into(), -2.0)],
                min: Some(0.0),
            },
        );
        let r = classify_unit(&g, &additive(), &[a], &UnitConfig::default()).unwrap();
        match r.verdict("drain").unwrap() {
            Verdict::Violation { reason, .. } => assert!(reason.starts_with("inapplicable")),
            v => panic!("unexpected {v:?}"),
        }
    }

    #[test]
    fn map_specs() {
        let g = Dag::new(&["a", "b"], &[("a", "b")]).unwrap();
        let swap = MapSpec::SwapCount {
            from: "a".into(),
            to: "b".into(),
            amount: 1.0,
        };
        assert_eq!(swap.apply(&g, &[1.0, 0.0]).unwrap(), Some(vec![0.0, 1.0]));
        assert_eq!(swap.apply(&g, &[0.0, 0.0]).unwrap(), None);
        let rep = MapSpec::ReplaceCount {
            variable: "b".into(),
            value: 5.0,
        };
        assert_eq!(rep.apply(&g, &[1.0, 0.0]).unwrap(), Some(vec![1.0, 5.0]));
        let s = serde_json::to_string(&swap).unwrap();
        assert_eq!(s, r#"{"family":"swap_count","from":"a","to":"b","amount":1.0}"#);
    }
}
