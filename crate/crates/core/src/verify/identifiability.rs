//! Changing `p(x)` in a full-rank positive pair changes both `p(y)` and
//! `p(x | y)`.

use nalgebra::DMatrix;
use rand::Rng;
use serde_json::json;

use super::{Check, Status};
use crate::discrete::{DiscreteJoint, Variable};
use crate::error::{Error, Result};
use crate::rng::seeded;

/// A difference at or below this counts as "unchanged".
pub const CHANGE_FLOOR: f64 = 1e-12;
/// Smallest admissible singular value of the joint matrix.
pub const RANK_TOL: f64 = 1e-10;
/// Marginal changes at or below this are not treated as changes.
pub const DEFAULT_MARGINAL_TOL: f64 = 1e-3;

fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Joint as a `|X| x |Y|` matrix, first variable indexing rows.
fn table(p: &DiscreteJoint) -> Result<Vec<Vec<f64>>> {
    let cards = p.cardinalities();
    if cards.len() != 2 {
        return Err(Error::InvalidArgument(format!("expected a joint over two variables, got {}", cards.len())));
    }
    (0..cards[0])
        .map(|x| (0..cards[1]).map(|y| p.prob(&[x, y])).collect())
        .collect()
}

fn column_conditionals(m: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let ky = m[0].len();
    let py: Vec<f64> = (0..ky).map(|y| m.iter().map(|r| r[y]).sum()).collect();
    let cond = (0..ky)
        .map(|y| m.iter().map(|r| if py[y] > 0.0 { r[y] / py[y] } else { 0.0 }).collect())
        .collect();
    (py, cond)
}

/// Replaces `p(x)` by `new_marginal`, keeping `p(y | x)`, and reports how far
/// `p(y)` and `p(x | y)` moved.
///
/// Instances with unequal ranges, a zero entry, or a near-singular joint
/// matrix are returned as rejected.
pub fn verify_identifiability(p: &DiscreteJoint, new_marginal: &[f64], tol: f64) -> Result<Check> {
    let m = table(p)?;
    let (kx, ky) = (m.len(), m[0].len());
    if new_marginal.len() != kx {
        return Err(Error::InvalidArgument(format!(
            "new marginal has {} entries, X has {kx} values",
            new_marginal.len()
        )));
    }
    let total: f64 = new_marginal.iter().sum();
    if new_marginal.iter().any(|v| !(*v >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution("new marginal must be a probability vector".into()));
    }
    let min_entry = m.iter().flatten().fold(f64::INFINITY, |a, &b| a.min(b));
    let sv = if kx == ky {
        DMatrix::from_fn(kx, ky, |i, j| m[i][j])
            .singular_values()
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b))
    } else {
        0.0
    };
    let mut measured = json!({ "min_entry": min_entry, "min_singular_value": sv, "cardinality": [kx, ky] });
    let reject = if kx != ky {
        Some(format!("ranges differ ({kx} vs {ky})"))
    } else if !(min_entry > 0.0) {
        Some("joint has a zero entry".to_string())
    } else if !(sv > RANK_TOL) {
        Some(format!("joint matrix is rank deficient (smallest singular value {sv:.3e})"))
    } else {
        None
    };
    if let Some(reason) = reject {
        return Ok(Check {
            status: Status::Rejected,
            measured,
            message: Some(reason),
        });
    }
    let px: Vec<f64> = m.iter().map(|r| r.iter().sum()).collect();
    let tilde: Vec<Vec<f64>> = m
        .iter()
        .zip(&px)
        .zip(new_marginal)
        .map(|((row, &pxv), &q)| row.iter().map(|v| q * v / pxv).collect())
        .collect();
    let (py, cond) = column_conditionals(&m);
    let (tpy, tcond) = column_conditionals(&tilde);
    let dx = tv(&px, new_marginal);
    let dy = tv(&py, &tpy);
    let dxy = (0..ky)
        .filter(|&y| tpy[y] > 0.0)
        .map(|y| tv(&cond[y], &tcond[y]))
        .fold(0.0, f64::max);
    measured["marginal_x_tv"] = json!(dx);
    measured["marginal_y_tv"] = json!(dy);
    measured["x_given_y_tv"] = json!(dxy);
    let (status, message) = if dx <= tol {
        (Status::Pass, Some("marginal change below tolerance; nothing to check".to_string()))
    } else if dy > CHANGE_FLOOR && dxy > CHANGE_FLOOR {
        (Status::Pass, None)
    } else {
        (
            Status::Fail,
            Some(format!("p(x) moved by {dx:.3e} but p(y) moved {dy:.3e} and p(x|y) {dxy:.3e}")),
        )
    };
    Ok(Check {
        status,
        measured,
        message,
    })
}

/// Random instance: `|X| = |Y|` in `2..=4`, entries bounded away from zero,
/// and a new marginal at least `DEFAULT_MARGINAL_TOL` away in TV.
pub fn random_instance(seed: u64) -> Result<(DiscreteJoint, Vec<f64>)> {
    let mut rng = seeded(seed);
    let k = rng.random_range(2..=4usize);
    let weights: Vec<f64> = (0..k * k).map(|_| rng.random_range(0.05..1.0)).collect();
    let p = DiscreteJoint::from_weights(vec![Variable::new("X", k), Variable::new("Y", k)], weights)?;
    let px: Vec<f64> = (0..k).map(|x| (0..k).map(|y| p.prob(&[x, y]).unwrap_or(0.0)).sum()).collect();
    loop {
        let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
        let s: f64 = w.iter().sum();
        let q: Vec<f64> = w.iter().map(|v| v / s).collect();
        if tv(&px, &q) > DEFAULT_MARGINAL_TOL {
            return Ok((p, q));
        }
    }
}
