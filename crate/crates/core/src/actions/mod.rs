//! Classification of elementary actions against candidate DAGs.
//!
//! An action is never labelled with a target node. Given a graph, each
//! action either changes exactly one causal mechanism (and is assigned to that
//! node), changes none (identity), or breaks the graph (violation). A graph is
//! valid for a set of actions when no action is a violation.

mod statistical;
mod unit;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use statistical::{classify_statistical, Generator, StatisticalAction, StatisticalEffect, StatisticalSuite};
pub use unit::{classify_unit, MapSpec, UnitAction, UnitConfig, UnitSuite};

use crate::discrete::FactorChange;
use crate::error::{Error, Result};
use crate::graph::{all_dags, Dag};

/// Default cap on the number of variables for exhaustive graph search.
pub const DEFAULT_GRAPH_CAP: usize = 5;

/// How actions are described.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Actions replace the joint distribution; mechanisms are conditionals.
    Statistical,
    /// Actions map system states; mechanisms are per-unit structural laws.
    Unit,
}

impl Mode {
    /// The criterion a valid graph must satisfy in this mode.
    pub fn criterion(self) -> &'static str {
        match self {
            Mode::Statistical => "each action changes at most one conditional p(x_j | pa_j)",
            Mode::Unit => "each action breaks at most one unit-level law x_j = m_j(pa_j)",
        }
    }
}

/// Outcome for one action under one graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    /// The action changes exactly the mechanism of `node`.
    Assigned { node: String },
    /// The action changes no mechanism; it fits any class.
    Identity,
    /// The action is not elementary for this graph.
    Violation { changed: Vec<String>, reason: String },
}

impl Verdict {
    pub fn is_violation(&self) -> bool {
        matches!(self, Verdict::Violation { .. })
    }

    pub fn assigned(&self) -> Option<&str> {
        match self {
            Verdict::Assigned { node } => Some(node),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionVerdict {
    pub label: String,
    pub verdict: Verdict,
    /// Per-node conditional distances (statistical mode only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factors: Option<Vec<FactorChange>>,
}

/// Verdicts of every action under one graph.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub mode: Mode,
    pub criterion: &'static str,
    pub graph: Dag,
    pub actions: Vec<ActionVerdict>,
    /// Whether the baseline (statistical) or the unobserved-state laws (unit)
    /// are compatible with the graph at all.
    pub baseline_markov: bool,
    pub baseline_residual: f64,
    pub valid: bool,
}

impl ClassificationReport {
    pub(crate) fn finish(mode: Mode, graph: Dag, actions: Vec<ActionVerdict>, baseline_residual: f64, eps: f64) -> Self {
        let baseline_markov = baseline_residual <= eps;
        let valid = baseline_markov && actions.iter().all(|a| !a.verdict.is_violation());
        ClassificationReport {
            mode,
            criterion: mode.criterion(),
            graph,
            actions,
            baseline_markov,
            baseline_residual,
            valid,
        }
    }

    pub fn verdict(&self, label: &str) -> Option<&Verdict> {
        self.actions.iter().find(|a| a.label == label).map(|a| &a.verdict)
    }

    pub fn violations(&self) -> Vec<&ActionVerdict> {
        self.actions.iter().filter(|a| a.verdict.is_violation()).collect()
    }
}

/// A system together with its elementary actions, classifiable against any
/// DAG over its observed variables.
pub trait ActionSuite: Send + Sync {
    fn mode(&self) -> Mode;

    /// Observed variables, in a fixed order.
    fn variables(&self) -> Vec<String>;

    fn classify(&self, g: &Dag) -> Result<ClassificationReport>;

    /// Validity alone; implementations may stop at the first violation.
    fn is_valid(&self, g: &Dag) -> Result<bool> {
        Ok(self.classify(g)?.valid)
    }
}

/// Every DAG over the suite's variables that its actions validate, with the
/// full report for each. Graphs come in the enumeration order of
/// [`all_dags`].
pub fn valid_graphs(suite: &dyn ActionSuite, cap: usize) -> Result<Vec<(Dag, ClassificationReport)>> {
    let vars = suite.variables();
    let candidates = all_dags(&vars, cap)?;
    let flags: Vec<Result<bool>> = candidates.par_iter().map(|g| suite.is_valid(g)).collect();
    let mut out = Vec::new();
    for (g, ok) in candidates.into_iter().zip(flags) {
        if ok? {
            let report = suite.classify(&g)?;
            out.push((g, report));
        }
    }
    Ok(out)
}

/// Direction verdict for a pair `(X, Y)`, the suite's two variables in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    XcausesY,
    YcausesX,
    /// Only the graph without an edge is valid.
    Confounded,
    /// Several graphs are valid, or none is.
    Undetermined,
}

pub fn bivariate_direction(suite: &dyn ActionSuite) -> Result<Direction> {
    let vars = suite.variables();
    if vars.len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "direction needs exactly two variables, got {}",
            vars.len()
        )));
    }
    let valid = valid_graphs(suite, 2)?;
    if valid.len() != 1 {
        return Ok(Direction::Undetermined);
    }
    let g = &valid[0].0;
    Ok(if g.edge_count() == 0 {
        Direction::Confounded
    } else if g.has_edge(0, 1) {
        Direction::XcausesY
    } else {
        Direction::YcausesX
    })
}

/// Direction for a named ordered pair, so callers need not track the suite's
/// variable order.
pub fn direction_between(suite: &dyn ActionSuite, x: &str, y: &str) -> Result<Direction> {
    let vars = suite.variables();
    let d = bivariate_direction(suite)?;
    if vars.first().map(String::as_str) == Some(x) && vars.get(1).map(String::as_str) == Some(y) {
        Ok(d)
    } else if vars.first().map(String::as_str) == Some(y) && vars.get(1).map(String::as_str) == Some(x) {
        Ok(match d {
            Direction::XcausesY => Direction::YcausesX,
            Direction::YcausesX => Direction::XcausesY,
            other => other,
        })
    } else {
        Err(Error::UnknownVariable(format!("{x}/{y}")))
    }
}
