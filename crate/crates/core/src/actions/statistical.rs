use serde::{Deserialize, Serialize};

use super::{ActionSuite, ActionVerdict, ClassificationReport, Mode, Verdict};
use crate::discrete::{factor_changes, factorization_residual, DiscreteJoint, DEFAULT_EPS};
use crate::error::{Error, Result};
use crate::graph::Dag;

/// Derives an effect from the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Identity,
    /// `p'(x) ∝ p(x) · weights[x_variable]`: changes the marginal of one
    /// variable and keeps everything conditional on it.
    Reweight { variable: String, weights: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticalEffect {
    Joint(DiscreteJoint),
    Generator(Generator),
}

/// An action given by the distribution it produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticalAction {
    pub label: String,
    #[serde(flatten)]
    pub effect: StatisticalEffect,
}

impl StatisticalAction {
    pub fn joint(label: impl Into<String>, joint: DiscreteJoint) -> StatisticalAction {
        StatisticalAction {
            label: label.into(),
            effect: StatisticalEffect::Joint(joint),
        }
    }

    pub fn generator(label: impl Into<String>, g: Generator) -> StatisticalAction {
        StatisticalAction {
            label: label.into(),
            effect: StatisticalEffect::Generator(g),
        }
    }

    /// The distribution after the action, in the baseline's variable order.
    pub fn apply(&self, baseline: &DiscreteJoint) -> Result<DiscreteJoint> {
        match &self.effect {
            StatisticalEffect::Joint(j) => {
                let j = j.reordered(&baseline.names())?;
                if j.variables() != baseline.variables() {
                    return Err(Error::VariableMismatch(format!(
                        "effect of `{}` has a different value set than the baseline",
                        self.label
                    )));
                }
                Ok(j)
            }
            StatisticalEffect::Generator(Generator::Identity) => Ok(baseline.clone()),
            StatisticalEffect::Generator(Generator::Reweight { variable, weights }) => {
                let v = baseline.index_of(variable)?;
                if weights.len() != baseline.variables()[v].cardinality {
                    return Err(Error::InvalidArgument(format!(
                        "`{}` needs {} weights",
                        self.label,
                        baseline.variables()[v].cardinality
                    )));
                }
                let w: Vec<f64> = (0..baseline.len())
                    .map(|idx| baseline.probs()[idx] * weights[baseline.decode(idx)[v]])
                    .collect();
                DiscreteJoint::from_weights(baseline.variables().to_vec(), w)
            }
        }
    }
}

/// Classifies each action by the set of conditionals it changes over `g`.
///
/// Effects that do not factorize over `g` are violations; the baseline's own
/// fit to `g` is reported separately.
pub fn classify_statistical(
    g: &Dag,
    baseline: &DiscreteJoint,
    actions: &[StatisticalAction],
    eps: f64,
) -> Result<ClassificationReport> {
    classify_inner(g, baseline, actions, eps, false)
}

fn classify_inner(
    g: &Dag,
    baseline: &DiscreteJoint,
    actions: &[StatisticalAction],
    eps: f64,
    stop_early: bool,
) -> Result<ClassificationReport> {
    let baseline = baseline.aligned_to(g)?;
    let residual = factorization_residual(&baseline, g)?;
    let mut verdicts = Vec::with_capacity(actions.len());
    if stop_early && residual > eps {
        return Ok(ClassificationReport::finish(Mode::Statistical, g.clone(), verdicts, residual, eps));
    }
    for a in actions {
        let effect = a.apply(&baseline)?.aligned_to(g)?;
        let changes = factor_changes(&baseline, &effect, g)?;
        let changed: Vec<String> = changes
            .iter()
            .filter(|c| c.changed(eps))
            .map(|c| c.node.clone())
            .collect();
        let effect_residual = factorization_residual(&effect, g)?;
        let verdict = if effect_residual > eps {
            Verdict::Violation {
                changed,
                reason: format!("effect does not factorize over the graph (residual {effect_residual:.3e})"),
            }
        } else {
            match changed.len() {
                0 => Verdict::Identity,
                1 => Verdict::Assigned {
                    node: changed[0].clone(),
                },
                _ => Verdict::Violation {
                    changed,
                    reason: "changes more than one conditional".into(),
                },
            }
        };
        let stop = stop_early && verdict.is_violation();
        verdicts.push(ActionVerdict {
            label: a.label.clone(),
            verdict,
            factors: Some(changes),
        });
        if stop {
            break;
        }
    }
    Ok(ClassificationReport::finish(Mode::Statistical, g.clone(), verdicts, residual, eps))
}

/// A baseline distribution and the actions applied to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticalSuite {
    pub baseline: DiscreteJoint,
    pub actions: Vec<StatisticalAction>,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_eps() -> f64 {
    DEFAULT_EPS
}

impl ActionSuite for StatisticalSuite {
    fn mode(&self) -> Mode {
        Mode::Statistical
    }

    fn variables(&self) -> Vec<String> {
        self.baseline.names()
    }

    fn classify(&self, g: &Dag) -> Result<ClassificationReport> {
        classify_statistical(g, &self.baseline, &self.actions, self.eps)
    }

    fn is_valid(&self, g: &Dag) -> Result<bool> {
        Ok(classify_inner(g, &self.baseline, &self.actions, self.eps, true)?.valid)
    }
}
