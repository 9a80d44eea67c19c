//! Layered configuration: built-in defaults, then a flat TOML file, then
//! command-line flags.
//!
//! Keys are the field names of the library's config structs
//! (`learning_rate_w`, `num_betas`, `trials`, ...). A key is applied to every
//! section of the command's config that has a field of that name, so `seed`
//! reaches both the experiment and its training config. A dotted key such as
//! `ais.num_chains` reaches only the named section. Keys that no section
//! knows are rejected.

use std::collections::BTreeSet;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    file: Map<String, Value>,
    flags: Map<String, Value>,
}

impl Overrides {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut out = Self::default();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Data(format!("cannot read config {}: {e}", path.display()))
            })?;
            out.file = parse_flat(&text)?;
        }
        Ok(out)
    }

    pub fn set<T: Serialize>(&mut self, key: &str, value: T) {
        let v = serde_json::to_value(value).expect("plain values serialise");
        match self.flags.get_mut(key) {
            Some(slot) => merge(slot, &v),
            None => {
                self.flags.insert(key.to_string(), v);
            }
        }
    }

    pub fn set_opt<T: Serialize>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.set(key, v);
        }
    }

    /// Parses `key=value` with the value read as a TOML value (bare words
    /// are taken as strings).
    pub fn set_assignment(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("expected key=value, got {assignment:?}")))?;
        let key = key.trim();
        let parsed = parse_flat(&format!("{key} = {}", raw.trim()))
            .or_else(|_| parse_flat(&format!("{key} = {:?}", raw.trim())))?;
        for (k, v) in parsed {
            self.set(&k, v);
        }
        Ok(())
    }

    /// Builds a config from its defaults. `sections` names nested objects
    /// (like `train`) that also receive matching keys.
    pub fn build<T: Serialize + DeserializeOwned>(
        &self,
        default: &T,
        sections: &[&str],
    ) -> Result<T, CliError> {
        self.build_many(default, sections, &[])
    }

    /// As [`Overrides::build`], but keys consumed by `other` configs of the
    /// same command count as known.
    pub fn build_many<T: Serialize + DeserializeOwned>(
        &self,
        default: &T,
        sections: &[&str],
        also_known: &[&BTreeSet<String>],
    ) -> Result<T, CliError> {
        let mut value = serde_json::to_value(default).expect("configs serialise");
        let mut used = BTreeSet::new();
        for layer in [&self.file, &self.flags] {
            for (k, v) in layer {
                if apply_key(&mut value, sections, k, v) {
                    used.insert(k.clone());
                }
            }
        }
        for k in self.file.keys().chain(self.flags.keys()) {
            if !used.contains(k) && !also_known.iter().any(|s| s.contains(k)) {
                return Err(CliError::Usage(format!("unknown configuration key {k:?}")));
            }
        }
        serde_json::from_value(value)
            .map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))
    }

    /// Keys this config would accept.
    pub fn keys_of<T: Serialize>(default: &T, sections: &[&str]) -> BTreeSet<String> {
        let value = serde_json::to_value(default).expect("configs serialise");
        let mut keys = BTreeSet::new();
        if let Value::Object(map) = &value {
            keys.extend(
                map.keys()
                    .filter(|k| !sections.contains(&k.as_str()))
                    .cloned(),
            );
            for s in sections {
                if let Some(Value::Object(inner)) = map.get(*s) {
                    keys.extend(inner.keys().cloned());
                }
            }
        }
        keys
    }
}

fn parse_flat(text: &str) -> Result<Map<String, Value>, CliError> {
    let table: toml::Table =
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config syntax: {e}")))?;
    match serde_json::to_value(table) {
        Ok(Value::Object(map)) => Ok(map),
        _ => Err(CliError::Usage("config must be a table of keys".into())),
    }
}

fn apply_key(target: &mut Value, sections: &[&str], key: &str, v: &Value) -> bool {
    let Value::Object(map) = target else {
        return false;
    };
    let mut hit = false;
    if sections.contains(&key) {
        if let (Some(slot), Value::Object(_)) = (map.get_mut(key), v) {
            merge(slot, v);
            return true;
        }
        return false;
    }
    if let Some(slot) = map.get_mut(key) {
        merge(slot, v);
        hit = true;
    }
    for s in sections {
        if let Some(Value::Object(inner)) = map.get_mut(*s) {
            if let Some(slot) = inner.get_mut(key) {
                merge(slot, v);
                hit = true;
            }
        }
    }
    hit
}

/// Objects merge key by key; anything else replaces. An integer landing on
/// a float field stays a valid number either way.
fn merge(slot: &mut Value, v: &Value) {
    match (slot, v) {
        (Value::Object(a), Value::Object(b)) => {
            for (k, bv) in b {
                match a.get_mut(k) {
                    Some(av) => merge(av, bv),
                    None => {
                        a.insert(k.clone(), bv.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}
