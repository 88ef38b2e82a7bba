//! Subcommand bodies. Every JSON document carries `spec_version` and, for
//! stochastic commands, the seed.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use phenocausal::actions::DEFAULT_GRAPH_CAP;
use phenocausal::data::Dataset;
use phenocausal::discovery::{methods, DiscoveryInput};
use phenocausal::exemplars::{self, Exemplar};
use phenocausal::verify::{randomized_suite, verifiers, SuiteConfig};
use phenocausal::Dag;
use serde_json::{json, Map, Value};

use crate::params::{split, Reserved};
use crate::{CliError, Format, Outcome, SCHEMA_VERSION};

const DEFAULT_SAMPLES: usize = 10_000;

fn versioned(mut v: Value, command: &str) -> Value {
    let obj = v.as_object_mut().expect("documents are objects");
    let mut out = Map::new();
    out.insert("spec_version".into(), json!(SCHEMA_VERSION));
    out.insert("command".into(), json!(command));
    out.append(obj);
    Value::Object(out)
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values serialize");
    s.push('\n');
    s
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn parse_num<T: std::str::FromStr>(key: &str, v: Option<&str>) -> Result<Option<T>, CliError> {
    v.map(|s| s.parse().map_err(|_| CliError::Usage(format!("`--{key}` expects a number, got `{s}`"))))
        .transpose()
}

fn build(name: &str, params: Map<String, Value>) -> Result<Exemplar, CliError> {
    Ok(exemplars::build(name, &Value::Object(params))?)
}

fn list_exemplars() -> Result<Outcome, CliError> {
    let reg = exemplars::registry();
    let mut text = String::new();
    for (name, f) in reg.iter() {
        let _ = writeln!(text, "{name:<10} {}\n           defaults {}", f.summary(), f.default_params());
    }
    emit(&text, None)?;
    Ok(Outcome::Pass)
}

/// `FILE.csv` -> `FILE.graph.json`.
fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("graph.json")
}

pub fn exemplar(name: &str, rest: &[String]) -> Result<Outcome, CliError> {
    if name == "list" {
        return list_exemplars();
    }
    let s = split(rest, &Reserved(&[("seed", true), ("samples", true), ("out", true)]))?;
    let seed: u64 = parse_num("seed", s.value("seed"))?
        .ok_or_else(|| CliError::Usage("`exemplar` needs `--seed S`".into()))?;
    let samples: usize = parse_num("samples", s.value("samples"))?.unwrap_or(DEFAULT_SAMPLES);
    let mut params = s.params.clone();
    let factory = exemplars::registry();
    let defaults = factory.get(name).map_err(phenocausal::Error::from)?.default_params();
    if defaults.get("seed").is_some() {
        params.insert("seed".into(), json!(seed));
    }
    let ex = build(name, params)?;
    let data = ex.dataset(samples, seed)?;
    let csv = data.to_csv_string()?;
    match s.value("out") {
        Some(out) => {
            let out = PathBuf::from(out);
            if out.extension().is_some_and(|e| e == "json") {
                return Err(CliError::Usage("`--out` names the CSV file; the JSON sidecar is derived from it".into()));
            }
            fs::write(&out, &csv)?;
            let doc = serde_json::to_value(ex.doc()?).map_err(phenocausal::Error::from)?;
            let mut meta = json!({
                "seed": seed,
                "samples": samples,
                "data": out.file_name().map(|f| f.to_string_lossy().into_owned()),
            });
            meta.as_object_mut()
                .expect("object")
                .extend(doc.as_object().expect("docs are objects").clone());
            fs::write(sidecar_path(&out), pretty(&versioned(meta, "exemplar")))?;
        }
        None => emit(&csv, None)?,
    }
    Ok(Outcome::Pass)
}

/// Reads a graph file: JSON `{nodes, edges}`, an exemplar sidecar (its
/// `ground_truth`), or `a -> b` lines.
fn read_graph(path: &Path) -> Result<Dag, CliError> {
    let text = fs::read_to_string(path)?;
    if let Ok(Value::Object(obj)) = serde_json::from_str::<Value>(&text) {
        if let Some(g) = obj.get("ground_truth") {
            return Ok(serde_json::from_value(g.clone()).map_err(phenocausal::Error::from)?);
        }
    }
    Ok(Dag::parse(&text)?)
}

pub fn classify(name: &str, rest: &[String]) -> Result<Outcome, CliError> {
    let s = split(rest, &Reserved(&[("graph", true), ("all", false), ("cap", true), ("out", true)]))?;
    let cap: usize = parse_num("cap", s.value("cap"))?.unwrap_or(DEFAULT_GRAPH_CAP);
    let ex = build(name, s.params.clone())?;
    let graph = match s.value("graph") {
        Some(p) => read_graph(Path::new(p))?,
        None => ex.ground_truth.clone(),
    };
    let suites = ex.suites()?;
    let reports = suites.iter().map(|su| su.classify(&graph)).collect::<Result<Vec<_>, _>>()?;
    let mut doc = json!({
        "exemplar": ex.name,
        "params": ex.params,
        "claim": ex.claim,
        "ground_truth": ex.ground_truth,
        "graph": graph,
        "reports": reports,
    });
    if ex.variables.len() == 2 {
        doc["direction"] = json!(ex.direction()?);
    }
    if s.flag("all") {
        let mut enumerated = Vec::new();
        for su in &suites {
            let valid = phenocausal::actions::valid_graphs(su.as_ref(), cap)?;
            enumerated.push(json!({
                "mode": su.mode(),
                "graphs": valid.into_iter().map(|(g, _)| g).collect::<Vec<_>>(),
            }));
        }
        doc["valid_graphs"] = json!(enumerated);
    }
    emit(&pretty(&versioned(doc, "classify")), s.value("out").map(Path::new))?;
    Ok(Outcome::Pass)
}

pub struct DiscoverArgs {
    pub method: String,
    pub inputs: Vec<PathBuf>,
    pub graph: Option<PathBuf>,
    pub pair: (Option<String>, Option<String>),
    pub seed: u64,
    pub permutations: Option<usize>,
    pub prune: Option<f64>,
    pub eps: Option<f64>,
    pub alpha: Option<f64>,
    pub out: Option<PathBuf>,
}

pub fn discover(a: &DiscoverArgs) -> Result<Outcome, CliError> {
    let registry = methods();
    let method = registry.get(&a.method)?;
    let datasets = a
        .inputs
        .iter()
        .map(|p| Ok(Dataset::read_csv(fs::File::open(p)?)?))
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut input = DiscoveryInput::new(datasets, a.seed);
    input.pair = match &a.pair {
        (Some(x), Some(y)) => Some((x.clone(), y.clone())),
        (None, None) => None,
        _ => return Err(CliError::Usage("give both `--x` and `--y`, or neither".into())),
    };
    input.graph = a.graph.as_deref().map(read_graph).transpose()?;
    if let Some(p) = a.permutations {
        input.lingam.permutations = p;
    }
    if let Some(p) = a.prune {
        input.lingam.prune = p;
    }
    if let Some(e) = a.eps {
        input.shift.eps = e;
    }
    if let Some(al) = a.alpha {
        input.shift.alpha = al;
    }
    let result = method.run(&input)?;
    let mut doc = serde_json::to_value(&result).map_err(phenocausal::Error::from)?;
    doc["seed"] = json!(a.seed);
    doc["inputs"] = json!(a.inputs.iter().map(|p| p.to_string_lossy().into_owned()).collect::<Vec<_>>());
    emit(&pretty(&versioned(doc, "discover")), a.out.as_deref())?;
    Ok(Outcome::Pass)
}

fn resolve_which(which: &[String]) -> Result<Vec<String>, CliError> {
    if which.iter().any(|w| w == "all") {
        return Ok(Vec::new());
    }
    let reg = verifiers();
    for w in which {
        reg.get(w)?;
    }
    Ok(which.to_vec())
}

pub fn verify(
    which: &[String],
    trials: Option<usize>,
    seed: u64,
    jobs: usize,
    format: Format,
    out: Option<&Path>,
) -> Result<Outcome, CliError> {
    let cfg = SuiteConfig {
        which: resolve_which(which)?,
        trials,
        jobs,
    };
    let report = randomized_suite(&cfg, seed)?;
    let json_doc = pretty(&versioned(
        serde_json::to_value(&report).map_err(phenocausal::Error::from)?,
        "verify",
    ));
    if let Some(p) = out {
        fs::write(p, &json_doc)?;
    }
    match format {
        Format::Text => emit(&report.to_text(), None)?,
        Format::Json => emit(&json_doc, None)?,
    }
    Ok(if report.pass { Outcome::Pass } else { Outcome::Fail })
}

pub fn report(seed: u64, trials: usize, cap: usize, jobs: usize, format: Format, out: Option<&Path>) -> Result<Outcome, CliError> {
    let mut checks = Vec::new();
    let mut text = String::new();
    let _ = writeln!(text, "exemplar claims");
    for (name, _) in exemplars::registry().iter() {
        let ex = exemplars::build(name, &Value::Null)?;
        let check = ex.check_claim(cap)?;
        let direction = if ex.variables.len() == 2 { Some(ex.direction()?) } else { None };
        let counts: Vec<String> = check
            .encodings
            .iter()
            .map(|e| format!("{:?}: {} valid", e.mode, e.valid_graphs.len()).to_lowercase())
            .collect();
        let _ = writeln!(
            text,
            "  {:<10} {:<5} claim {:<12} {}{}",
            name,
            if check.holds { "ok" } else { "FAIL" },
            format!("{:?}", check.claim).to_lowercase(),
            counts.join(", "),
            direction.map(|d| format!(", direction {d:?}")).unwrap_or_default()
        );
        let mut v = serde_json::to_value(&check).map_err(phenocausal::Error::from)?;
        v["direction"] = json!(direction);
        checks.push(v);
    }
    let claims_hold = checks.iter().all(|c| c["holds"] == json!(true));
    let verification = randomized_suite(
        &SuiteConfig {
            which: Vec::new(),
            trials: Some(trials),
            jobs,
        },
        seed,
    )?;
    text.push_str(&verification.to_text());
    let pass = claims_hold && verification.pass;
    let doc = versioned(
        json!({
            "seed": seed,
            "pass": pass,
            "exemplars": checks,
            "verification": verification,
        }),
        "report",
    );
    let json_doc = pretty(&doc);
    if let Some(p) = out {
        fs::write(p, &json_doc)?;
    }
    match format {
        Format::Text => emit(&text, None)?,
        Format::Json => emit(&json_doc, None)?,
    }
    Ok(if pass { Outcome::Pass } else { Outcome::Fail })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_sits_next_to_the_csv() {
        assert_eq!(sidecar_path(Path::new("out/data.csv")), Path::new("out/data.graph.json"));
        assert_eq!(sidecar_path(Path::new("data")), Path::new("data.graph.json"));
    }

    #[test]
    fn documents_carry_the_version() {
        let v = versioned(json!({"a": 1}), "x");
        assert_eq!(v["spec_version"], SCHEMA_VERSION);
        assert_eq!(v["command"], "x");
        assert_eq!(v["a"], 1);
    }
}
