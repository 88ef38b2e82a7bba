use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distribution of a single exogenous noise term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NoiseSpec {
    Degenerate {
        value: f64,
    },
    /// Integers `low..=high`, equally likely.
    DiscreteUniform {
        low: i64,
        high: i64,
    },
    /// `Bin(rounds, p_plus) - Bin(rounds, p_minus)`: net count of two coins
    /// flipped once per round.
    BinomialDifference {
        rounds: u32,
        p_plus: f64,
        p_minus: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    /// Linear models with Gaussian noise are not identifiable from data.
    Gaussian {
        mean: f64,
        sd: f64,
    },
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            NoiseSpec::Degenerate { value } => value.is_finite(),
            NoiseSpec::DiscreteUniform { low, high } => low <= high,
            NoiseSpec::BinomialDifference { p_plus, p_minus, .. } => {
                (0.0..=1.0).contains(&p_plus) && (0.0..=1.0).contains(&p_minus)
            }
            NoiseSpec::Uniform { low, high } => low.is_finite() && high.is_finite() && low < high,
            NoiseSpec::Gaussian { mean, sd } => mean.is_finite() && sd.is_finite() && sd > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("bad noise specification {self:?}")))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseSpec::Degenerate { value } => value,
            NoiseSpec::DiscreteUniform { low, high } => rng.random_range(low..=high) as f64,
            NoiseSpec::BinomialDifference { rounds, p_plus, p_minus } => {
                let n = u64::from(rounds);
                let plus = Binomial::new(n, p_plus).expect("validated").sample(rng);
                let minus = Binomial::new(n, p_minus).expect("validated").sample(rng);
                plus as f64 - minus as f64
            }
            NoiseSpec::Uniform { low, high } => rng.random_range(low..high),
            NoiseSpec::Gaussian { mean, sd } => Normal::new(mean, sd).expect("validated").sample(rng),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            NoiseSpec::Degenerate { value } => value,
            NoiseSpec::DiscreteUniform { low, high } => (low + high) as f64 / 2.0,
            NoiseSpec::BinomialDifference { rounds, p_plus, p_minus } => f64::from(rounds) * (p_plus - p_minus),
            NoiseSpec::Uniform { low, high } => (low + high) / 2.0,
            NoiseSpec::Gaussian { mean, .. } => mean,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            NoiseSpec::Degenerate { .. } => 0.0,
            NoiseSpec::DiscreteUniform { low, high } => {
                let k = (high - low + 1) as f64;
                (k * k - 1.0) / 12.0
            }
            NoiseSpec::BinomialDifference { rounds, p_plus, p_minus } => {
                f64::from(rounds) * (p_plus * (1.0 - p_plus) + p_minus * (1.0 - p_minus))
            }
            NoiseSpec::Uniform { low, high } => (high - low).powi(2) / 12.0,
            NoiseSpec::Gaussian { sd, .. } => sd * sd,
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, NoiseSpec::Gaussian { .. })
    }

    /// Exact `(value, probability)` pairs in increasing value order, for
    /// finitely supported families. Zero-probability values are dropped.
    pub fn support(&self) -> Option<Vec<(f64, f64)>> {
        match *self {
            NoiseSpec::Degenerate { value } => Some(vec![(value, 1.0)]),
            NoiseSpec::DiscreteUniform { low, high } => {
                let k = (high - low + 1) as f64;
                Some((low..=high).map(|v| (v as f64, 1.0 / k)).collect())
            }
            NoiseSpec::BinomialDifference { rounds, p_plus, p_minus } => {
                let a = binomial_pmf(rounds, p_plus);
                let b = binomial_pmf(rounds, p_minus);
                let r = rounds as i64;
                let mut out = Vec::new();
                for d in -r..=r {
                    let mut p = 0.0;
                    for (k, &pa) in a.iter().enumerate() {
                        let m = k as i64 - d;
                        if (0..=r).contains(&m) {
                            p += pa * b[m as usize];
                        }
                    }
                    if p > 0.0 {
                        out.push((d as f64, p));
                    }
                }
                Some(out)
            }
            NoiseSpec::Uniform { .. } | NoiseSpec::Gaussian { .. } => None,
        }
    }
}

/// `P(Bin(n, p) = k)` for `k = 0..=n`.
pub fn binomial_pmf(n: u32, p: f64) -> Vec<f64> {
    let mut pmf = vec![0.0; n as usize + 1];
    pmf[0] = 1.0;
    // convolve n Bernoulli(p) factors; exact zeros stay zeros
    for step in 1..=n as usize {
        for k in (0..=step).rev() {
            let stay = if k < step { pmf[k] * (1.0 - p) } else { 0.0 };
            let up = if k > 0 { pmf[k - 1] * p } else { 0.0 };
            pmf[k] = stay + up;
        }
    }
    pmf
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn support_moments_match_closed_forms() {
        let specs = [
            NoiseSpec::DiscreteUniform { low: -2, high: 3 },
            NoiseSpec::BinomialDifference {
                rounds: 4,
                p_plus: 0.3,
                p_minus: 0.6,
            },
            NoiseSpec::Degenerate { value: 2.0 },
        ];
        for s in specs {
            let sup = s.support().unwrap();
            let total: f64 = sup.iter().map(|(_, p)| p).sum();
            let m: f64 = sup.iter().map(|(v, p)| v * p).sum();
            let var: f64 = sup.iter().map(|(v, p)| (v - m).powi(2) * p).sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!((m - s.mean()).abs() < 1e-12, "{s:?}");
            assert!((var - s.variance()).abs() < 1e-12, "{s:?}");
        }
    }

    #[test]
    fn zero_bias_coins_never_move() {
        let s = NoiseSpec::BinomialDifference {
            rounds: 10,
            p_plus: 0.0,
            p_minus: 0.0,
        };
        assert_eq!(s.support().unwrap(), vec![(0.0, 1.0)]);
        let mut rng = seeded(1);
        assert!((0..50).all(|_| s.sample(&mut rng) == 0.0));
    }

    #[test]
    fn sample_mean_is_close() {
        let s = NoiseSpec::Uniform { low: -1.0, high: 3.0 };
        let mut rng = seeded(9);
        let n = 20_000;
        let m: f64 = (0..n).map(|_| s.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((m - 1.0).abs() < 5.0 * (s.variance() / n as f64).sqrt());
    }
}
