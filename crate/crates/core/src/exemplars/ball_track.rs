//! A ball released from one of five heights, timed by a light barrier.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Claim, Exemplar, System};
use crate::actions::{StatisticalAction, StatisticalSuite, UnitConfig};
use crate::discrete::{joints_from_outcomes, DEFAULT_EPS};
use crate::error::{Error, Result};
use crate::graph::Dag;

/// `X` in `1..=5` with `P(X = x)` proportional to `exp(theta x)`;
/// `Y = round(10 sqrt(x)) - offset + U` with `U` uniform on
/// `-jitter..=jitter`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallTrackConfig {
    pub theta: f64,
    pub offset: f64,
    pub jitter: u32,
    /// Change of `theta` under the release action.
    pub theta_shift: f64,
    /// Change of `offset` under the barrier action.
    pub offset_shift: f64,
}

impl Default for BallTrackConfig {
    fn default() -> Self {
        BallTrackConfig {
            theta: 0.0,
            offset: 0.0,
            jitter: 2,
            theta_shift: 0.5,
            offset_shift: 3.0,
        }
    }
}

fn outcomes(theta: f64, offset: f64, jitter: u32) -> Vec<(Vec<f64>, f64)> {
    let w: Vec<f64> = (1..=5).map(|x| (theta * f64::from(x)).exp()).collect();
    let total: f64 = w.iter().sum();
    let j = i64::from(jitter);
    let pu = 1.0 / (2 * j + 1) as f64;
    let mut out = Vec::new();
    for (x, wx) in (1..=5).zip(&w) {
        let speed = (10.0 * f64::from(x).sqrt()).round();
        for u in -j..=j {
            out.push((vec![f64::from(x), speed - offset + u as f64], wx / total * pu));
        }
    }
    out
}

pub fn ball_track(cfg: &BallTrackConfig) -> Result<Exemplar> {
    let finite = [cfg.theta, cfg.offset, cfg.theta_shift, cfg.offset_shift];
    if finite.iter().any(|v| !v.is_finite()) || cfg.theta_shift == 0.0 || cfg.offset_shift == 0.0 {
        return Err(Error::InvalidParameter("ball track needs finite parameters and nonzero shifts".into()));
    }
    let dists = [
        outcomes(cfg.theta, cfg.offset, cfg.jitter),
        outcomes(cfg.theta + cfg.theta_shift, cfg.offset, cfg.jitter),
        outcomes(cfg.theta, cfg.offset + cfg.offset_shift, cfg.jitter),
    ];
    let mut joints = joints_from_outcomes(&["X", "Y"], &dists)?.into_iter();
    let baseline = joints.next().expect("three joints");
    let suite = StatisticalSuite {
        baseline,
        actions: vec![
            StatisticalAction::joint("release higher", joints.next().expect("three joints")),
            StatisticalAction::joint("move barrier", joints.next().expect("three joints")),
        ],
        eps: DEFAULT_EPS,
    };
    Ok(Exemplar {
        name: "balltrack".into(),
        variables: vec!["X".into(), "Y".into()],
        ground_truth: Dag::new(&["X", "Y"], &[("X", "Y")])?,
        claim: Claim::Unique,
        system: System::Table(suite),
        unit_actions: Vec::new(),
        unit_config: UnitConfig::default(),
        params: Value::Null,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::Direction;

    #[test]
    fn height_drives_the_timing() {
        let ex = ball_track(&BallTrackConfig::default()).unwrap();
        assert_eq!(ex.direction().unwrap(), Direction::XcausesY);
        let r = &ex.classify_ground_truth().unwrap()[0];
        assert_eq!(r.verdict("release higher").unwrap().assigned(), Some("X"));
        assert_eq!(r.verdict("move barrier").unwrap().assigned(), Some("Y"));
    }

    #[test]
    fn dataset_stays_on_the_support() {
        let ex = ball_track(&BallTrackConfig::default()).unwrap();
        let d = ex.dataset(500, 3).unwrap();
        for x in d.column(0) {
            assert!((1.0..=5.0).contains(&x));
        }
    }
}
