//! Exact checks of the consistency properties on small instances, plus a
//! seeded randomized suite over registered verifiers.

pub mod boundary;
pub mod embedding;
pub mod identifiability;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

pub use boundary::{chain_instance, verify_boundary_consistency, BoundaryInstance};
pub use embedding::{build_embedding, verify_embedding_markov, ControllerSpec, Embedding, EmbeddingSpec};
pub use identifiability::verify_identifiability;

use crate::error::{Error, Result};
use crate::registry::Registry;
use crate::rng::mix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// The instance does not meet the property's preconditions.
    Rejected,
}

/// Outcome of one exact check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub status: Status,
    pub measured: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

/// One randomized trial: the check and a description of its instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub check: Check,
    pub instance: Value,
}

pub trait Verifier: Send + Sync {
    fn summary(&self) -> &'static str;

    fn default_trials(&self) -> usize;

    /// Draws an instance from `seed` and checks it.
    fn trial(&self, seed: u64) -> Result<Trial>;
}

struct Identifiability;
struct EmbeddingMarkov;
struct Boundary;

impl Verifier for Identifiability {
    fn summary(&self) -> &'static str {
        "changing p(x) of a full-rank positive pair moves both p(y) and p(x|y)"
    }

    fn default_trials(&self) -> usize {
        1000
    }

    fn trial(&self, seed: u64) -> Result<Trial> {
        let (p, q) = identifiability::random_instance(seed)?;
        let check = verify_identifiability(&p, &q, identifiability::DEFAULT_MARGINAL_TOL)?;
        Ok(Trial {
            check,
            instance: json!({ "joint": p.probs(), "cardinalities": p.cardinalities(), "new_marginal": q }),
        })
    }
}

impl Verifier for EmbeddingMarkov {
    fn summary(&self) -> &'static str {
        "coin systems driven by binary controllers are Markov to the extended graph"
    }

    fn default_trials(&self) -> usize {
        50
    }

    fn trial(&self, seed: u64) -> Result<Trial> {
        let (spec, e) = embedding::random_embedding(seed)?;
        let check = verify_embedding_markov(&e, 1e-12)?;
        Ok(Trial {
            check,
            instance: serde_json::to_value(&spec)?,
        })
    }
}

impl Verifier for Boundary {
    fn summary(&self) -> &'static str {
        "an action on the full system changes at most one conditional of a sufficient subsystem"
    }

    fn default_trials(&self) -> usize {
        500
    }

    fn trial(&self, seed: u64) -> Result<Trial> {
        let inst = boundary::random_instance(seed)?;
        Ok(Trial {
            check: inst.check(boundary::DEFAULT_EPS)?,
            instance: inst.describe(),
        })
    }
}

fn boxed(v: impl Verifier + 'static) -> Box<dyn Verifier> {
    Box::new(v)
}

pub fn verifiers() -> Registry<dyn Verifier> {
    Registry::new("verifier")
        .with("identifiability", boxed(Identifiability))
        .with("embedding", boxed(EmbeddingMarkov))
        .with("boundary", boxed(Boundary))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialEntry {
    pub verifier: String,
    pub trial: usize,
    pub seed: u64,
    pub status: Status,
    pub measured: Value,
    /// Present for trials that did not pass.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifierSummary {
    pub verifier: String,
    pub trials: usize,
    pub passed: usize,
    pub failed: usize,
    pub rejected: usize,
}

/// `failures` is empty exactly when `pass` holds. Rejected trials count
/// neither way.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub seed: u64,
    pub pass: bool,
    pub summaries: Vec<VerifierSummary>,
    pub entries: Vec<TrialEntry>,
    pub failures: Vec<TrialEntry>,
}

impl VerificationReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "verification seed {}: {}", self.seed, if self.pass { "PASS" } else { "FAIL" });
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "  {:<16} trials {:>5}  passed {:>5}  failed {:>5}  rejected {:>5}",
                s.verifier, s.trials, s.passed, s.failed, s.rejected
            );
        }
        for f in &self.failures {
            let _ = writeln!(
                out,
                "  FAIL {} trial {} (seed {}): {}",
                f.verifier,
                f.trial,
                f.seed,
                f.message.as_deref().unwrap_or("no message")
            );
            if let Some(inst) = &f.instance {
                let _ = writeln!(out, "       instance {inst}");
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    /// Verifier names; empty means all registered verifiers.
    pub which: Vec<String>,
    /// Overrides each verifier's default trial count.
    pub trials: Option<usize>,
    /// Worker threads; results do not depend on it.
    pub jobs: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            which: Vec::new(),
            trials: None,
            jobs: 1,
        }
    }
}

fn name_salt(name: &str) -> u64 {
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Seed of trial `trial` of verifier `name` under suite seed `seed`.
pub fn trial_seed(name: &str, trial: usize, seed: u64) -> u64 {
    mix(mix(seed, name_salt(name)), trial as u64)
}

fn entry(name: &str, trial: usize, seed: u64, t: Trial) -> TrialEntry {
    let pass = t.check.status == Status::Pass;
    TrialEntry {
        verifier: name.to_string(),
        trial,
        seed,
        status: t.check.status,
        measured: t.check.measured,
        instance: (!pass).then_some(t.instance),
        message: t.check.message,
    }
}

/// Re-runs a single trial of a suite.
pub fn replay(name: &str, trial: usize, seed: u64) -> Result<TrialEntry> {
    let reg = verifiers();
    let v = reg.get(name)?;
    let s = trial_seed(name, trial, seed);
    Ok(entry(name, trial, s, v.trial(s)?))
}

/// Runs the selected verifiers. The report is identical for every `jobs`.
pub fn randomized_suite(cfg: &SuiteConfig, seed: u64) -> Result<VerificationReport> {
    let reg = verifiers();
    let names: Vec<String> = if cfg.which.is_empty() {
        reg.names().iter().map(|s| s.to_string()).collect()
    } else {
        cfg.which.clone()
    };
    for n in &names {
        reg.get(n)?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let mut summaries = Vec::new();
    let mut entries = Vec::new();
    for name in &names {
        let v = reg.get(name)?;
        let n = cfg.trials.unwrap_or_else(|| v.default_trials());
        let results: Vec<Result<TrialEntry>> = pool.install(|| {
            (0..n)
                .into_par_iter()
                .map(|k| {
                    let s = trial_seed(name, k, seed);
                    v.trial(s).map(|t| entry(name, k, s, t))
                })
                .collect()
        });
        let batch = results.into_iter().collect::<Result<Vec<_>>>()?;
        let count = |st: Status| batch.iter().filter(|e| e.status == st).count();
        summaries.push(VerifierSummary {
            verifier: name.clone(),
            trials: n,
            passed: count(Status::Pass),
            failed: count(Status::Fail),
            rejected: count(Status::Rejected),
        });
        entries.extend(batch);
    }
    let failures: Vec<TrialEntry> = entries.iter().filter(|e| e.status == Status::Fail).cloned().collect();
    Ok(VerificationReport {
        seed,
        pass: failures.is_empty(),
        summaries,
        entries,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_lists_three_verifiers() {
        assert_eq!(verifiers().names(), ["identifiability", "embedding", "boundary"]);
    }

    #[test]
    fn zero_trials_is_an_empty_pass() {
        let r = randomized_suite(&SuiteConfig { trials: Some(0), ..SuiteConfig::default() }, 1).unwrap();
        assert!(r.pass && r.entries.is_empty());
        assert_eq!(r.summaries.len(), 3);
    }

    #[test]
    fn report_is_independent_of_jobs() {
        let cfg = |jobs| SuiteConfig {
            which: vec!["boundary".into(), "identifiability".into()],
            trials: Some(20),
            jobs,
        };
        let a = randomized_suite(&cfg(1), 7).unwrap();
        let b = randomized_suite(&cfg(4), 7).unwrap();
        assert_eq!(a, b);
        assert!(a.pass, "{}", a.to_text());
    }

    #[test]
    fn replay_matches_the_suite() {
        let r = randomized_suite(&SuiteConfig { which: vec!["boundary".into()], trials: Some(5), jobs: 1 }, 3).unwrap();
        assert_eq!(replay("boundary", 4, 3).unwrap(), r.entries[4]);
    }

    #[test]
    fn unknown_verifier_is_an_error() {
        let cfg = SuiteConfig { which: vec!["nope".into()], ..SuiteConfig::default() };
        assert!(matches!(randomized_suite(&cfg, 0), Err(Error::UnknownName { .. })));
    }
}
