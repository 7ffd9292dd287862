//! JSON configuration with command-line overrides.

use std::path::Path;

use serde_json::{Map, Value};
use shadowlab::experiments::ExperimentConfig;
use shadowlab::Error;

/// A dotted key and the value a flag puts there, e.g. `grid.h = 0.1`.
pub type Override = (&'static str, Value);

pub fn load(path: Option<&Path>) -> Result<Value, Error> {
    let Some(path) = path else {
        return Ok(Value::Object(Map::new()));
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("config {} is not valid JSON: {e}", path.display())))?;
    if !v.is_object() {
        return Err(Error::Config(format!(
            "config {} must be a JSON object",
            path.display()
        )));
    }
    Ok(v)
}

fn set(root: &mut Value, key: &str, value: Value) {
    let mut node = root;
    let mut parts = key.split('.').peekable();
    while let Some(part) = parts.next() {
        let obj = match node {
            Value::Object(m) => m,
            other => {
                *other = Value::Object(Map::new());
                other.as_object_mut().expect("just set")
            }
        };
        if parts.peek().is_none() {
            obj.insert(part.to_string(), value);
            return;
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
}

/// Applies overrides and seed precedence (flag, then `SHADOWLAB_SEED`, then
/// the file), and checks the result.
pub fn resolve(
    mut base: Value,
    overrides: Vec<Override>,
    seed: Option<u64>,
) -> Result<ExperimentConfig, Error> {
    for (key, value) in overrides {
        if !value.is_null() {
            set(&mut base, key, value);
        }
    }
    if let Some(s) = seed {
        set(&mut base, "seed", Value::from(s));
    }
    let family = base.get("kernel").and_then(|k| k.get("family"));
    if family.is_none() {
        return Err(Error::Config(
            "missing kernel family: set `kernel.family` in the config or pass --kernel".into(),
        ));
    }
    let cfg: ExperimentConfig =
        serde_json::from_value(base).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

/// `--seed`, else `SHADOWLAB_SEED`.
pub fn seed_from(flag: Option<u64>) -> Result<Option<u64>, Error> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("SHADOWLAB_SEED") {
        Ok(s) => s.trim().parse().map(Some).map_err(|_| {
            Error::Config(format!(
                "SHADOWLAB_SEED must be an unsigned integer, got `{s}`"
            ))
        }),
        Err(_) => Ok(None),
    }
}

pub fn opt<T: Into<Value>>(v: Option<T>) -> Value {
    v.map_or(Value::Null, Into::into)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn flags_override_nested_keys() {
        let base = json!({"kernel": {"family": "bump"}, "grid": {"h": 0.5, "margin_level": 0.3}});
        let cfg = resolve(
            base,
            vec![("grid.h", json!(0.1)), ("grid.nx", Value::Null)],
            Some(9),
        )
        .unwrap();
        assert_eq!(cfg.grid.h, 0.1);
        assert_eq!(cfg.grid.margin_level, 0.3);
        assert_eq!(cfg.grid.nx, 256);
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn missing_family_is_named() {
        let e = resolve(json!({"kernel": {"params": [1.0]}}), vec![], None).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
        assert!(e.to_string().contains("kernel.family"));
    }
}
