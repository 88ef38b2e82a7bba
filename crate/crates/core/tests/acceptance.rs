//! The ten acceptance criteria, each with its own tolerance and time limit.
//!
//! Every criterion prints one `PASS`/`FAIL` line (written past the test
//! harness's capture, so it shows in plain `cargo test` output). Derived
//! quantities are recomputed here by brute force rather than trusted from
//! the library.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::{Duration, Instant};

use phenocausal::actions::{valid_graphs, Direction};
use phenocausal::data::Dataset;
use phenocausal::discovery::{lingam_bivariate, lingam_multivariate, localize_mechanism_change, LingamConfig, ShiftConfig};
use phenocausal::discrete::is_markov;
use phenocausal::exemplars::{build, Exemplar};
use phenocausal::linalg::{correlation, Matrix};
use phenocausal::rng::mix;
use phenocausal::scm::solve_structure;
use phenocausal::verify::{
    boundary, build_embedding, chain_instance, identifiability, randomized_suite, EmbeddingSpec, Status, SuiteConfig,
};
use phenocausal::Dag;
use serde_json::{json, Value};

const ACCEPTANCE_SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn ex(name: &str, params: Value) -> Exemplar {
    build(name, &params).unwrap()
}

// --- 1 ---------------------------------------------------------------------

/// `p~(y)` and `p~(x|y)` after replacing `p(x)` by `q`, by direct summation.
fn bayes_oracle(m: &[Vec<f64>], q: &[f64]) -> (f64, f64) {
    let k = m.len();
    let px: Vec<f64> = m.iter().map(|r| r.iter().sum()).collect();
    let py: Vec<f64> = (0..k).map(|y| (0..k).map(|x| m[x][y]).sum()).collect();
    let t: Vec<Vec<f64>> = (0..k).map(|x| (0..k).map(|y| q[x] * m[x][y] / px[x]).collect()).collect();
    let ty: Vec<f64> = (0..k).map(|y| (0..k).map(|x| t[x][y]).sum()).collect();
    let dy = 0.5 * (0..k).map(|y| (py[y] - ty[y]).abs()).sum::<f64>();
    let dxy = (0..k)
        .map(|y| 0.5 * (0..k).map(|x| (m[x][y] / py[y] - t[x][y] / ty[y]).abs()).sum::<f64>())
        .fold(0.0, f64::max);
    (dy, dxy)
}

fn criterion_1() -> Outcome {
    let report = randomized_suite(
        &SuiteConfig {
            which: vec!["identifiability".into()],
            trials: Some(1000),
            jobs: 1,
        },
        ACCEPTANCE_SEED,
    )
    .unwrap();
    let s = &report.summaries[0];
    let mut oracle_violations = 0;
    let mut min_change = f64::INFINITY;
    for e in &report.entries {
        let (p, q) = identifiability::random_instance(e.seed).unwrap();
        let k = p.cardinalities()[0];
        let m: Vec<Vec<f64>> = (0..k).map(|x| (0..k).map(|y| p.prob(&[x, y]).unwrap()).collect()).collect();
        let (dy, dxy) = bayes_oracle(&m, &q);
        min_change = min_change.min(dy.min(dxy));
        if dy <= 1e-12 || dxy <= 1e-12 {
            oracle_violations += 1;
        }
        let close = |key: &str, v: f64| (e.measured[key].as_f64().unwrap() - v).abs() <= 1e-12;
        if !close("marginal_y_tv", dy) || !close("x_given_y_tv", dxy) {
            oracle_violations += 1;
        }
    }
    outcome(
        report.pass && s.passed == 1000 && oracle_violations == 0,
        format!(
            "{}/{} passed, {} rejected, oracle disagreements {oracle_violations}, smallest change {min_change:.2e}",
            s.passed, s.trials, s.rejected
        ),
    )
}

// --- 2 ---------------------------------------------------------------------

/// Conditionals of the marginal over `s` changed by the action, computed by
/// enumerating the full joint.
fn brute_changed(inst: &boundary::BoundaryInstance, eps: f64) -> Vec<String> {
    let g = &inst.graph;
    let p = inst.joint.aligned_to(g).unwrap();
    let states: Vec<Vec<usize>> = (0..p.len()).map(|i| p.decode(i)).collect();
    let probs = p.probs();
    let j = inst.node;
    let pa: Vec<usize> = g.parents(j).to_vec();
    // p(x_j | pa_j) by summation
    let mut fam: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let mut ctx: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    for (v, &w) in states.iter().zip(probs) {
        let c: Vec<usize> = pa.iter().map(|&i| v[i]).collect();
        *ctx.entry(c.clone()).or_default() += w;
        let mut f = c;
        f.push(v[j]);
        *fam.entry(f).or_default() += w;
    }
    let q: Vec<f64> = states
        .iter()
        .zip(probs)
        .map(|(v, &w)| {
            let c: Vec<usize> = pa.iter().map(|&i| v[i]).collect();
            let code = c.iter().fold(0, |acc, &b| acc * 2 + b);
            let mut f = c.clone();
            f.push(v[j]);
            let old = fam[&f] / ctx[&c];
            w * inst.factor.probs[code * 2 + v[j]] / old
        })
        .collect();
    let s: Vec<usize> = inst.subset.to_vec();
    let gs = g.marginal_dag(inst.subset).unwrap();
    let mut changed = Vec::new();
    for (k, &node) in s.iter().enumerate() {
        let pa_s: Vec<usize> = gs.parents(k).iter().map(|i| s[i]).collect();
        let table = |weights: &[f64]| {
            let mut t: BTreeMap<(Vec<usize>, usize), f64> = BTreeMap::new();
            let mut c: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
            for (v, &w) in states.iter().zip(weights) {
                let key: Vec<usize> = pa_s.iter().map(|&i| v[i]).collect();
                *c.entry(key.clone()).or_default() += w;
                *t.entry((key, v[node])).or_default() += w;
            }
            (t, c)
        };
        let (tp, cp) = table(probs);
        let (tq, cq) = table(&q);
        let diff = tp
            .iter()
            .map(|((key, x), w)| (w / cp[key] - tq[&(key.clone(), *x)] / cq[key]).abs())
            .fold(0.0, f64::max);
        if diff > eps {
            changed.push(g.name(node).to_string());
        }
    }
    changed
}

fn criterion_2() -> Outcome {
    let report = randomized_suite(
        &SuiteConfig {
            which: vec!["boundary".into()],
            trials: Some(500),
            jobs: 1,
        },
        ACCEPTANCE_SEED,
    )
    .unwrap();
    let mut oracle_over = 0;
    let mut oracle_disagree = 0;
    let mut max_count = 0;
    for e in &report.entries {
        let inst = boundary::random_instance(e.seed).unwrap();
        let brute = brute_changed(&inst, boundary::DEFAULT_EPS);
        max_count = max_count.max(brute.len());
        if brute.len() > 1 {
            oracle_over += 1;
        }
        if json!(brute) != e.measured["changed"] {
            oracle_disagree += 1;
        }
    }
    let chain = chain_instance(ACCEPTANCE_SEED).unwrap();
    let check = chain.check(boundary::DEFAULT_EPS).unwrap();
    let chain_ok = check.status == Status::Pass
        && check.measured["changed"] == json!(["X3"])
        && brute_changed(&chain, boundary::DEFAULT_EPS) == ["X3"]
        && check.measured["marginal_graph"] == json!([["X1", "X3"]]);
    let s = &report.summaries[0];
    outcome(
        report.pass && s.passed == 500 && oracle_over == 0 && oracle_disagree == 0 && chain_ok,
        format!(
            "{}/{} passed, max changed count {max_count}, oracle disagreements {oracle_disagree}, chain instance {}",
            s.passed,
            s.trials,
            if chain_ok { "changes {X3}" } else { "WRONG" }
        ),
    )
}

// --- 3 ---------------------------------------------------------------------

fn criterion_3() -> Outcome {
    let urn = ex("urn2", json!({}));
    let e = build_embedding(&urn, &EmbeddingSpec::independent(&["Kb", "Kr"])).unwrap();
    let joint = e.scm.exact_joint().unwrap();
    let expected = Dag::new(&["Kb", "Kr", "Y1", "Y2"], &[("Kb", "Kr"), ("Y1", "Kb"), ("Y2", "Kr")]).unwrap();
    let markov = is_markov(&joint, &e.graph, 1e-12).unwrap();
    let pass = joint.len() <= 1 << 14 && e.graph.same_structure(&expected) && markov;
    outcome(
        pass,
        format!("{} states, extended graph {:?}, Markov at 1e-12: {markov}", joint.len(), e.graph.edge_names()),
    )
}

// --- 4 ---------------------------------------------------------------------

fn criterion_4() -> Outcome {
    let n = 5;
    // Mixing matrices from the urn rules, nodes in causal order (type n first).
    // Urn: class c adds to its own type and removes from the next one.
    let s_urn = Matrix::from_fn(n, |i, c| match i as i64 - c as i64 {
        0 => 1.0,
        1 => -1.0,
        _ => 0.0,
    });
    // Bundles: package c contributes one ball to every type at or below it.
    let s_bundles = Matrix::from_fn(n, |i, c| if i >= c { 1.0 } else { 0.0 });
    let a_urn = Matrix::from_fn(n, |i, j| if j < i { -1.0 } else { 0.0 });
    let a_bundles = Matrix::from_fn(n, |i, j| if j + 1 == i { 1.0 } else { 0.0 });
    let mut details = Vec::new();
    let mut pass = true;
    for (name, s_oracle, a_oracle) in [("urnN", s_urn, a_urn), ("bundles", s_bundles, a_bundles)] {
        let e = ex(name, json!({ "n": n }));
        let coins = e.coins().unwrap();
        let s = coins.mixing_matrix();
        let sol = solve_structure(&s, coins.names()).unwrap();
        let back = Matrix::identity(n).sub(&sol.a).inverse().unwrap().max_abs_diff(&s);
        let ok = s == s_oracle && sol.a == a_oracle && back <= 1e-12 && sol.dag.as_ref().is_some_and(|d| d.same_structure(&e.ground_truth));
        pass &= ok;
        details.push(format!("{name} A exact: {}, |(I-A)^-1 - S| = {back:.1e}", sol.a == a_oracle));
    }
    outcome(pass, details.join("; "))
}

// --- 5 ---------------------------------------------------------------------

fn criterion_5() -> Outcome {
    let n = 5;
    let e = ex("urnN", json!({ "n": n }));
    let coins = e.coins().unwrap();
    let scm = coins.linear_scm().unwrap();
    let idx = |t: usize| coins.names().iter().position(|k| k == &format!("K{t}")).unwrap();
    let mut effects = Vec::new();
    for j in 3..=n {
        effects.push(scm.total_effect(idx(j), idx(j - 2)).unwrap());
    }
    let samples = 100_000;
    let data = e.dataset(samples, ACCEPTANCE_SEED).unwrap();
    let band = 5.0 / (samples as f64).sqrt();
    let mut worst: f64 = 0.0;
    for i in 1..=n {
        for j in i + 2..=n {
            let r = correlation(&data.column_by_name(&format!("K{i}")).unwrap(), &data.column_by_name(&format!("K{j}")).unwrap());
            worst = worst.max(r.abs());
        }
    }
    // Neighbours share a coin class and must be clearly correlated.
    let adjacent = correlation(&data.column_by_name("K2").unwrap(), &data.column_by_name("K3").unwrap());
    let pass = effects.iter().all(|&t| t == 0.0) && worst <= band && adjacent.abs() > 10.0 * band;
    outcome(
        pass,
        format!("total effects K_j on K_(j-2) {effects:?}, max |corr| at distance >= 2 {worst:.4} (band {band:.4})"),
    )
}

// --- 6 ---------------------------------------------------------------------

fn criterion_6() -> Outcome {
    let cases: Vec<(&str, Value)> = vec![
        ("urn2", json!({})),
        ("urnN", json!({ "n": 4 })),
        ("bundles", json!({ "n": 4 })),
        ("rabbits1", json!({})),
        ("rabbits2", json!({})),
        ("macro1", json!({})),
        ("macro2", json!({})),
        ("balltrack", json!({})),
        ("farmers", json!({ "exponent": 0.0 })),
    ];
    let mut bad = Vec::new();
    let mut singletons = Vec::new();
    for (name, params) in cases {
        let e = ex(name, params);
        for suite in e.suites().unwrap() {
            let r = suite.classify(&e.ground_truth).unwrap();
            if !r.valid {
                bad.push(format!("{name}/{:?}", suite.mode()));
            }
            if name == "urn2" || name == "urnN" {
                let valid = valid_graphs(suite.as_ref(), 4).unwrap();
                let single = valid.len() == 1 && valid[0].0.same_structure(&e.ground_truth);
                if !single {
                    bad.push(format!("{name}/{:?} has {} valid graphs", suite.mode(), valid.len()));
                }
                singletons.push(format!("{name}/{}", format!("{:?}", suite.mode()).to_lowercase()));
            }
        }
    }
    outcome(
        bad.is_empty(),
        if bad.is_empty() {
            format!("all 9 declared graphs valid; unique for {}", singletons.join(", "))
        } else {
            format!("problems: {}", bad.join(", "))
        },
    )
}

// --- 7 ---------------------------------------------------------------------

fn criterion_7() -> Outcome {
    let d = |name: &str| ex(name, json!({})).direction().unwrap();
    let (r1, r2, m1, m2) = (d("rabbits1"), d("rabbits2"), d("macro1"), d("macro2"));
    let opposite = matches!(
        (m1, m2),
        (Direction::XcausesY, Direction::YcausesX) | (Direction::YcausesX, Direction::XcausesY)
    );
    outcome(
        r1 == Direction::YcausesX && r2 == Direction::XcausesY && opposite,
        format!("rabbits1 {r1:?}, rabbits2 {r2:?}, macro1 {m1:?}, macro2 {m2:?}"),
    )
}

// --- 8 ---------------------------------------------------------------------

fn criterion_8() -> Outcome {
    let urn = ex("urn2", json!({}));
    let mut hits = 0;
    for s in 0..100u64 {
        let seed = mix(ACCEPTANCE_SEED, s);
        let data = urn.dataset(10_000, seed).unwrap();
        let v = lingam_bivariate(&data, "Kb", "Kr", &LingamConfig { seed, ..LingamConfig::default() }).unwrap();
        if v.direction == Direction::XcausesY && v.coefficient.is_some_and(|b| (-1.05..=-0.95).contains(&b)) {
            hits += 1;
        }
    }
    let mut chain_hits = Vec::new();
    for name in ["urnN", "bundles"] {
        let e = ex(name, json!({ "n": 4 }));
        let mut h = 0;
        for s in 0..20u64 {
            let seed = mix(ACCEPTANCE_SEED ^ 0xb0, s);
            let data = e.dataset(100_000, seed).unwrap();
            let r = lingam_multivariate(&data, &LingamConfig { seed, ..LingamConfig::default() }).unwrap();
            if r.dag.same_structure(&e.ground_truth) {
                h += 1;
            }
        }
        chain_hits.push((name, h));
    }
    outcome(
        hits >= 95 && chain_hits.iter().all(|(_, h)| *h >= 18),
        format!(
            "urn2 Kb->Kr with slope in [-1.05, -0.95]: {hits}/100; exact support {}",
            chain_hits.iter().map(|(n, h)| format!("{n} {h}/20")).collect::<Vec<_>>().join(", ")
        ),
    )
}

// --- 9 ---------------------------------------------------------------------

fn shift_run(seed: u64) -> Vec<String> {
    let base = ex("urn2", json!({}));
    let moved = ex("urn2", json!({ "coin_biases": [[0.5, 0.5], [0.75, 0.5]] }));
    let envs = [base.dataset(10_000, mix(seed, 1)).unwrap(), moved.dataset(10_000, mix(seed, 2)).unwrap()];
    localize_mechanism_change(&envs, &base.ground_truth, &ShiftConfig::default()).unwrap()[0]
        .changed
        .clone()
}

fn criterion_9() -> Outcome {
    let hits = (0..100u64).filter(|&s| shift_run(mix(ACCEPTANCE_SEED, s)) == ["Kr"]).count();
    outcome(hits >= 95, format!("changed set {{Kr}} in {hits}/100 seeds"))
}

// --- 10 --------------------------------------------------------------------

fn stochastic_bundle(jobs: usize) -> String {
    let seed = ACCEPTANCE_SEED;
    let verification = randomized_suite(&SuiteConfig { which: Vec::new(), trials: Some(40), jobs }, seed).unwrap();
    let urn = ex("urn2", json!({}));
    let data: Dataset = urn.dataset(5_000, seed).unwrap();
    let cfg = LingamConfig { seed, ..LingamConfig::default() };
    let bivariate = lingam_bivariate(&data, "Kb", "Kr", &cfg).unwrap();
    let chain = ex("urnN", json!({ "n": 3 }));
    let multivariate = lingam_multivariate(&chain.dataset(2_000, seed).unwrap(), &cfg).unwrap();
    serde_json::to_string(&json!({
        "csv": data.to_csv_string().unwrap(),
        "verification": verification,
        "bivariate": bivariate,
        "multivariate": multivariate,
        "shift": shift_run(seed),
    }))
    .unwrap()
}

fn criterion_10() -> Outcome {
    let a = stochastic_bundle(1);
    let b = stochastic_bundle(1);
    let c = stochastic_bundle(4);
    outcome(
        a == b && a == c,
        format!("{} bytes; identical on rerun: {}, identical with 4 workers: {}", a.len(), a == b, a == c),
    )
}

// ---------------------------------------------------------------------------

type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 10] = [
        (1, "identifiability suite", Duration::from_secs(5), criterion_1),
        (2, "boundary consistency suite", Duration::from_secs(60), criterion_2),
        (3, "embedding Markov property", Duration::from_secs(10), criterion_3),
        (4, "urn structure algebra", Duration::from_secs(60), criterion_4),
        (5, "effect cancellation", Duration::from_secs(60), criterion_5),
        (6, "declared graphs", Duration::from_secs(120), criterion_6),
        (7, "regime reversal", Duration::from_secs(60), criterion_7),
        (8, "linear non-Gaussian recovery", Duration::from_secs(180), criterion_8),
        (9, "mechanism-shift localization", Duration::from_secs(120), criterion_9),
        (10, "determinism", Duration::from_secs(120), criterion_10),
    ];
    let mut failed = Vec::new();
    let mut out = std::io::stdout().lock();
    for (id, name, limit, run) in criteria {
        let start = Instant::now();
        let o = run();
        let took = start.elapsed();
        let pass = o.pass && took <= limit;
        let _ = writeln!(
            out,
            "acceptance {id:>2} {:<4} {name}: {} ({:.2} s, limit {} s)",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64(),
            limit.as_secs()
        );
        let _ = out.flush();
        if !pass {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
