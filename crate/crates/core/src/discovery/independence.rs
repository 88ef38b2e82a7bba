//! Distance correlation in `O(n log n)`, its permutation null, and a
//! moment-based normality check.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{mean, variance};
use crate::rng::{mix, stream_rng};

pub const MIN_SAMPLES: usize = 20;
pub const DEFAULT_PERMUTATIONS: usize = 199;
const PERM_SALT: u64 = 0x7065_726d;

/// Statistic with an optional note on degenerate input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

/// Observed statistic against its permutation distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependenceTest {
    pub statistic: f64,
    /// 95th percentile of the permuted statistics.
    pub threshold: f64,
    /// Largest permuted statistic.
    pub null_max: f64,
    /// `(1 + #{permuted >= observed}) / (1 + permutations)`.
    pub p_value: f64,
    pub permutations: usize,
}

impl IndependenceTest {
    pub fn dependent(&self) -> bool {
        self.statistic > self.threshold
    }
}

/// Prefix sums over ranks of count, `sum y`, `sum x`, `sum xy`.
struct Fenwick {
    tree: Vec<[f64; 4]>,
}

impl Fenwick {
    fn new(n: usize) -> Fenwick {
        Fenwick {
            tree: vec![[0.0; 4]; n + 1],
        }
    }

    fn add(&mut self, rank: usize, v: [f64; 4]) {
        let mut i = rank + 1;
        while i < self.tree.len() {
            for k in 0..4 {
                self.tree[i][k] += v[k];
            }
            i += i & i.wrapping_neg();
        }
    }

    /// Sums over ranks `0..=rank`.
    fn prefix(&self, rank: usize) -> [f64; 4] {
        let mut out = [0.0; 4];
        let mut i = rank + 1;
        while i > 0 {
            for k in 0..4 {
                out[k] += self.tree[i][k];
            }
            i -= i & i.wrapping_neg();
        }
        out
    }
}

/// `a_i = sum_j |x_i - x_j|` for every `i`.
fn row_sums(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let total: f64 = x.iter().sum();
    let mut out = vec![0.0; n];
    let mut below = 0.0;
    for (k, &i) in order.iter().enumerate() {
        let above = total - below - x[i];
        out[i] = k as f64 * x[i] - below + above - (n - k - 1) as f64 * x[i];
        below += x[i];
    }
    out
}

fn dense_ranks(y: &[f64]) -> (Vec<usize>, usize) {
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let ranks = y
        .iter()
        .map(|v| sorted.partition_point(|s| s.total_cmp(v).is_lt()))
        .collect();
    (ranks, sorted.len())
}

/// Reusable pieces for one `x` column.
struct Prepared {
    order: Vec<usize>,
    row_sums: Vec<f64>,
    dvar: f64,
}

fn prepare(x: &[f64]) -> Prepared {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let rs = row_sums(x);
    let nf = n as f64;
    let sx: f64 = x.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let cross = 2.0 * (nf * sxx - sx * sx);
    let dvar = dcov_from_parts(nf, cross, &rs, &rs);
    Prepared {
        order,
        row_sums: rs,
        dvar,
    }
}

fn dcov_from_parts(n: f64, cross: f64, a: &[f64], b: &[f64]) -> f64 {
    let ab: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    cross / (n * n) - 2.0 * ab / (n * n * n) + sa * sb / (n * n * n * n)
}

/// `sum_{i,j} |x_i - x_j| |y_i - y_j|`, visiting pairs in `x` order and
/// subtracting twice the discordant part.
fn cross_sum(x: &[f64], order: &[usize], y: &[f64], y_rank: &[usize], n_ranks: usize) -> f64 {
    let n = x.len() as f64;
    let (mut sx, mut sy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sx += a;
        sy += b;
        sxy += a * b;
    }
    let mut fw = Fenwick::new(n_ranks);
    let mut inserted = [0.0; 4];
    let mut discordant = 0.0;
    for &j in order {
        let (xj, yj) = (x[j], y[j]);
        let upto = fw.prefix(y_rank[j]);
        let c = inserted[0] - upto[0];
        let s_y = inserted[1] - upto[1];
        let s_x = inserted[2] - upto[2];
        let s_xy = inserted[3] - upto[3];
        discordant += c * xj * yj - xj * s_y - yj * s_x + s_xy;
        let v = [1.0, yj, xj, xj * yj];
        fw.add(y_rank[j], v);
        for k in 0..4 {
            inserted[k] += v[k];
        }
    }
    2.0 * ((n * sxy - sx * sy) - 2.0 * discordant)
}

fn dcor_prepared(x: &[f64], px: &Prepared, y: &[f64], py: &Prepared, y_rank: &[usize], n_ranks: usize) -> f64 {
    if px.dvar <= 0.0 || py.dvar <= 0.0 {
        return 0.0;
    }
    let cross = cross_sum(x, &px.order, y, y_rank, n_ranks);
    let dcov = dcov_from_parts(x.len() as f64, cross, &px.row_sums, &py.row_sums).max(0.0);
    (dcov / (px.dvar * py.dvar).sqrt()).sqrt().min(1.0)
}

/// Sample distance correlation (V-statistic form), in `[0, 1]`.
/// A constant input gives 0.
pub fn dcor(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "dcor needs equal lengths");
    if x.len() < 2 {
        return 0.0;
    }
    let (px, py) = (prepare(x), prepare(y));
    let (rank, m) = dense_ranks(y);
    dcor_prepared(x, &px, y, &py, &rank, m)
}

fn check_pair(u: &[f64], v: &[f64]) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::InvalidArgument(format!("column lengths differ: {} vs {}", u.len(), v.len())));
    }
    if u.len() < MIN_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "independence statistic needs at least {MIN_SAMPLES} samples, got {}",
            u.len()
        )));
    }
    if u.iter().chain(v).any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("columns must be finite".into()));
    }
    Ok(())
}

/// Distance correlation of the standardized columns. Zero means
/// empirically independent.
pub fn independence_statistic(u: &[f64], v: &[f64]) -> Result<Statistic> {
    check_pair(u, v)?;
    let constant: Vec<&str> = [("u", u), ("v", v)]
        .iter()
        .filter(|(_, c)| variance(c) == 0.0)
        .map(|(n, _)| *n)
        .collect();
    if !constant.is_empty() {
        return Ok(Statistic {
            value: 0.0,
            diagnostic: Some(format!("constant column {}; statistic set to 0", constant.join(" and "))),
        });
    }
    Ok(Statistic {
        value: dcor(&crate::linalg::standardize(u), &crate::linalg::standardize(v)),
        diagnostic: None,
    })
}

/// Permutation test of independence between `u` and `v`. Permutation `k`
/// draws from its own stream, so the result does not depend on scheduling.
pub fn permutation_test(u: &[f64], v: &[f64], permutations: usize, seed: u64) -> Result<IndependenceTest> {
    check_pair(u, v)?;
    let x = crate::linalg::standardize(u);
    let y = crate::linalg::standardize(v);
    let px = prepare(&x);
    let py = prepare(&y);
    let (rank, m) = dense_ranks(&y);
    let observed = dcor_prepared(&x, &px, &y, &py, &rank, m);
    let key = mix(seed, PERM_SALT);
    let mut null: Vec<f64> = (0..permutations as u64)
        .into_par_iter()
        .map(|k| {
            let mut idx: Vec<usize> = (0..y.len()).collect();
            idx.shuffle(&mut stream_rng(key, k));
            let yp: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            let rp: Vec<usize> = idx.iter().map(|&i| rank[i]).collect();
            let rsp: Vec<f64> = idx.iter().map(|&i| py.row_sums[i]).collect();
            let pyp = Prepared {
                order: Vec::new(),
                row_sums: rsp,
                dvar: py.dvar,
            };
            dcor_prepared(&x, &px, &yp, &pyp, &rp, m)
        })
        .collect();
    null.sort_by(f64::total_cmp);
    let exceed = null.iter().filter(|&&s| s >= observed).count();
    let threshold = quantile_sorted(&null, 0.95);
    Ok(IndependenceTest {
        statistic: observed,
        threshold,
        null_max: null.last().copied().unwrap_or(0.0),
        p_value: (1 + exceed) as f64 / (1 + permutations) as f64,
        permutations,
    })
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Jarque-Bera statistic and its asymptotic `chi^2_2` p-value. Constant
/// input returns `None`.
pub fn jarque_bera(x: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    let m = mean(x);
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    if !(m2 > 0.0) {
        return None;
    }
    let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2) - 3.0;
    let jb = n / 6.0 * (skew * skew + kurt * kurt / 4.0);
    Some((jb, (-jb / 2.0).exp()))
}
