//! Structure recovery from samples: linear non-Gaussian ordering and
//! mechanism-change localization across environments.

mod independence;
mod lingam;
mod shift;

use serde::{Deserialize, Serialize};

pub use independence::{
    dcor, independence_statistic, jarque_bera, permutation_test, IndependenceTest, Statistic, DEFAULT_PERMUTATIONS,
    MIN_SAMPLES,
};
pub use lingam::{
    lingam_bivariate, lingam_multivariate, BivariateVerdict, LingamConfig, DEFAULT_PRUNE, MIN_ROWS_PER_COLUMN,
    NORMALITY_ALPHA,
};
pub use shift::{localize_exact, localize_mechanism_change, EnvironmentShift, NodeShift, ShiftConfig};

use crate::actions::Direction;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::registry::Registry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeScore {
    pub from: String,
    pub to: String,
    /// In data units.
    pub coefficient: f64,
    /// Coefficient times `sd(from) / sd(to)`.
    pub standardized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub statistic: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub permutations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prune_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub seed: u64,
    /// Rows per input dataset.
    pub samples: Vec<usize>,
}

/// Output of every discovery method.
///
/// `matrix[i][j]` is the coefficient of variable `j` in the equation of
/// variable `i`; its support equals the edge set of `dag`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryResult {
    pub method: String,
    pub variables: Vec<String>,
    pub dag: Dag,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intercepts: Option<Vec<f64>>,
    pub edges: Vec<EdgeScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<Vec<String>>,
    /// Summed residual dependence of each variable when it was picked.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exogeneity: Option<Vec<(String, f64)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bivariate: Option<BivariateVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shifts: Option<Vec<EnvironmentShift>>,
    pub metadata: Metadata,
    pub diagnostics: Vec<String>,
}

/// Everything a discovery method may consume.
#[derive(Debug, Clone)]
pub struct DiscoveryInput {
    /// One dataset, or a reference followed by further environments.
    pub datasets: Vec<Dataset>,
    /// Ordered pair for the bivariate method; defaults to the first two
    /// columns.
    pub pair: Option<(String, String)>,
    /// Graph for mechanism-change localization; estimated from the
    /// reference environment when absent.
    pub graph: Option<Dag>,
    pub lingam: LingamConfig,
    pub shift: ShiftConfig,
}

impl DiscoveryInput {
    pub fn new(datasets: Vec<Dataset>, seed: u64) -> DiscoveryInput {
        DiscoveryInput {
            datasets,
            pair: None,
            graph: None,
            lingam: LingamConfig {
                seed,
                ..LingamConfig::default()
            },
            shift: ShiftConfig::default(),
        }
    }

    fn single(&self, method: &str) -> Result<&Dataset> {
        match self.datasets.as_slice() {
            [d] => Ok(d),
            _ => Err(Error::InvalidArgument(format!(
                "the {method} method takes exactly one dataset, got {}",
                self.datasets.len()
            ))),
        }
    }
}

pub trait DiscoveryMethod: Send + Sync {
    fn summary(&self) -> &'static str;

    fn run(&self, input: &DiscoveryInput) -> Result<DiscoveryResult>;
}

struct Bivariate;
struct Multivariate;
struct Shift;

impl DiscoveryMethod for Bivariate {
    fn summary(&self) -> &'static str {
        "orient one pair by comparing residual independence in both regression directions"
    }

    fn run(&self, input: &DiscoveryInput) -> Result<DiscoveryResult> {
        let data = input.single("bivariate")?;
        let (x, y) = match &input.pair {
            Some(p) => p.clone(),
            None if data.n_columns() >= 2 => (data.columns[0].clone(), data.columns[1].clone()),
            None => return Err(Error::InvalidArgument("bivariate discovery needs two columns".into())),
        };
        let v = lingam_bivariate(data, &x, &y, &input.lingam)?;
        let names = vec![x.clone(), y.clone()];
        let mut matrix = vec![vec![0.0; 2]; 2];
        let mut intercepts = vec![0.0; 2];
        let mut edges = Vec::new();
        let mut edge_idx = Vec::new();
        if let (Some(b), Some(c)) = (v.coefficient, v.intercept) {
            let (from, to) = match v.direction {
                Direction::XcausesY => (0, 1),
                _ => (1, 0),
            };
            let sd = |name: &str| data.column_by_name(name).map(|c| crate::linalg::variance(&c).sqrt());
            matrix[to][from] = b;
            intercepts[to] = c;
            edge_idx.push((from, to));
            edges.push(EdgeScore {
                from: names[from].clone(),
                to: names[to].clone(),
                coefficient: b,
                standardized: b * sd(&names[from])? / sd(&names[to])?,
            });
        }
        let diagnostics = v.diagnostic.iter().cloned().collect();
        Ok(DiscoveryResult {
            method: "bivariate".into(),
            dag: Dag::from_indices(names.clone(), &edge_idx)?,
            variables: names,
            matrix: Some(matrix),
            intercepts: Some(intercepts),
            edges,
            order: None,
            exogeneity: None,
            bivariate: Some(v),
            shifts: None,
            metadata: Metadata {
                statistic: "distance_correlation".into(),
                permutations: Some(input.lingam.permutations),
                prune_threshold: None,
                eps: None,
                alpha: Some(NORMALITY_ALPHA),
                seed: input.lingam.seed,
                samples: vec![data.len()],
            },
            diagnostics,
        })
    }
}

impl DiscoveryMethod for Multivariate {
    fn summary(&self) -> &'static str {
        "order all columns by exogeneity, then fit and prune linear coefficients"
    }

    fn run(&self, input: &DiscoveryInput) -> Result<DiscoveryResult> {
        lingam_multivariate(input.single("multivariate")?, &input.lingam)
    }
}

impl DiscoveryMethod for Shift {
    fn summary(&self) -> &'static str {
        "find the conditionals that differ between a reference and further environments"
    }

    fn run(&self, input: &DiscoveryInput) -> Result<DiscoveryResult> {
        let first = input
            .datasets
            .first()
            .ok_or_else(|| Error::InvalidArgument("no datasets".into()))?;
        let mut diagnostics = Vec::new();
        let g = match &input.graph {
            Some(g) => g.clone(),
            None => {
                diagnostics.push("no graph given; using the multivariate estimate on the reference environment".into());
                lingam_multivariate(first, &input.lingam)?.dag
            }
        };
        let shifts = localize_mechanism_change(&input.datasets, &g, &input.shift)?;
        Ok(DiscoveryResult {
            method: "shift".into(),
            variables: g.names().to_vec(),
            dag: g,
            matrix: None,
            intercepts: None,
            edges: Vec::new(),
            order: None,
            exogeneity: None,
            bivariate: None,
            shifts: Some(shifts),
            metadata: Metadata {
                statistic: "pearson_chi_square_homogeneity".into(),
                permutations: None,
                prune_threshold: None,
                eps: Some(input.shift.eps),
                alpha: Some(input.shift.alpha),
                seed: input.lingam.seed,
                samples: input.datasets.iter().map(Dataset::len).collect(),
            },
            diagnostics,
        })
    }
}

fn boxed(m: impl DiscoveryMethod + 'static) -> Box<dyn DiscoveryMethod> {
    Box::new(m)
}

pub fn methods() -> Registry<dyn DiscoveryMethod> {
    Registry::new("discovery method")
        .with("bivariate", boxed(Bivariate))
        .with("multivariate", boxed(Multivariate))
        .with("shift", boxed(Shift))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exemplars::build;
    use serde_json::json;

    #[test]
    fn urn_pair_through_the_registry() {
        let ex = build("urn2", &json!({})).unwrap();
        let data = ex.dataset(10_000, 5).unwrap();
        let r = methods().get("bivariate").unwrap().run(&DiscoveryInput::new(vec![data], 5)).unwrap();
        assert_eq!(r.bivariate.as_ref().unwrap().direction, Direction::XcausesY, "{:?}", r.bivariate);
        assert!(r.dag.same_structure(&ex.ground_truth));
        assert!((r.edges[0].coefficient + 1.0).abs() < 0.05);
    }

    #[test]
    fn shift_method_finds_the_red_coin() {
        let base = build("urn2", &json!({})).unwrap();
        let shifted = build("urn2", &json!({"coin_biases": [[0.5, 0.5], [0.75, 0.5]]})).unwrap();
        let mut input = DiscoveryInput::new(vec![base.dataset(10_000, 1).unwrap(), shifted.dataset(10_000, 2).unwrap()], 0);
        input.graph = Some(base.ground_truth.clone());
        let r = methods().get("shift").unwrap().run(&input).unwrap();
        assert_eq!(r.shifts.unwrap()[0].changed, ["Kr"]);
    }
}
