//! Free-form `--key value` exemplar parameters.

use serde_json::{Map, Value};

use crate::CliError;

/// Options the subcommand itself understands, pulled out of the free-form
/// tail. `true` marks options that take a value.
pub struct Reserved<'a>(pub &'a [(&'a str, bool)]);

#[derive(Debug, Default)]
pub struct Split {
    pub params: Map<String, Value>,
    /// Reserved options in the order given; flags carry `None`.
    pub reserved: Vec<(String, Option<String>)>,
}

impl Split {
    pub fn value(&self, key: &str) -> Option<&str> {
        self.reserved.iter().rev().find(|(k, _)| k == key).and_then(|(_, v)| v.as_deref())
    }

    pub fn flag(&self, key: &str) -> bool {
        self.reserved.iter().any(|(k, _)| k == key)
    }
}

/// A value is read as JSON when it parses, and as a string otherwise, so
/// `--rounds 3`, `--coin_biases [[0.5,0.5],[0.7,0.5]]` and
/// `--scenario plenty` all work. Hyphens in keys become underscores.
pub fn split(tail: &[String], reserved: &Reserved) -> Result<Split, CliError> {
    let mut out = Split::default();
    let mut it = tail.iter().peekable();
    while let Some(arg) = it.next() {
        let body = arg
            .strip_prefix("--")
            .ok_or_else(|| CliError::Usage(format!("unexpected argument `{arg}`; parameters are given as `--key value`")))?;
        let (key, inline) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (body.to_string(), None),
        };
        if key.is_empty() {
            return Err(CliError::Usage("empty option name".into()));
        }
        if let Some(&(_, takes_value)) = reserved.0.iter().find(|(k, _)| *k == key) {
            let value = match (takes_value, inline) {
                (false, None) => None,
                (false, Some(_)) => return Err(CliError::Usage(format!("`--{key}` takes no value"))),
                (true, Some(v)) => Some(v),
                (true, None) => Some(it.next().cloned().ok_or_else(|| CliError::Usage(format!("`--{key}` needs a value")))?),
            };
            out.reserved.push((key, value));
            continue;
        }
        let raw = match inline {
            Some(v) => v,
            None => it.next().cloned().ok_or_else(|| CliError::Usage(format!("parameter `--{key}` needs a value")))?,
        };
        let value = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
        let key = key.replace('-', "_");
        if out.params.insert(key.clone(), value).is_some() {
            return Err(CliError::Usage(format!("parameter `{key}` given twice")));
        }
    }
    Ok(out)
}
