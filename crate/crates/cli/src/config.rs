//! Parameter resolution: command-line flags override keys of the `--config`
//! JSON object. Everything is range-checked before any simulation starts.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Flat JSON object read from `--config`.
#[derive(Debug, Default)]
pub struct ConfigFile {
    values: Map<String, Value>,
    used: std::cell::RefCell<Vec<String>>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        match serde_json::from_str::<Value>(text) {
            Ok(Value::Object(values)) => Ok(ConfigFile { values, used: Default::default() }),
            Ok(_) => Err(CliError::Usage("config must be a JSON object".into())),
            Err(e) => Err(CliError::Usage(format!("config is not valid JSON: {e}"))),
        }
    }

    /// The flag value if given, else the config value, else `None`.
    pub fn pick<T: DeserializeOwned>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError> {
        self.used.borrow_mut().push(key.to_string());
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key {key:?}: {e}"))),
        }
    }

    pub fn require<T: DeserializeOwned>(&self, key: &str, flag: Option<T>) -> Result<T, CliError> {
        self.pick(key, flag)?
            .ok_or_else(|| CliError::Usage(format!("missing required parameter --{} (flag or config key {key:?})", key.replace('_', "-"))))
    }

    pub fn or<T: DeserializeOwned>(&self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError> {
        Ok(self.pick(key, flag)?.unwrap_or(default))
    }

    /// Rejects config keys no parameter asked for, which are usually typos.
    pub fn finish(&self) -> Result<(), CliError> {
        let used = self.used.borrow();
        let unknown: Vec<&String> = self.values.keys().filter(|k| !used.contains(k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Usage(format!("unknown config keys {unknown:?}")))
        }
    }
}

pub fn check_unit_interval(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--{name} must lie in (0, 1], got {v}")))
    }
}

pub fn check_positive(name: &str, v: usize) -> Result<(), CliError> {
    if v >= 1 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--{name} must be at least 1")))
    }
}

/// `d` must be `2^n` with `n >= 1`; returns `n`.
pub fn check_qubit_dim(d: usize) -> Result<usize, CliError> {
    if d >= 2 && d.is_power_of_two() {
        Ok(d.trailing_zeros() as usize)
    } else {
        Err(CliError::Usage(format!("--d must be a power of two >= 2, got {d}")))
    }
}

/// Rejects registers above the dimension cap before anything is allocated.
pub fn check_register(d: usize, wires: usize) -> Result<(), CliError> {
    let total = u32::try_from(wires).ok().and_then(|w| d.checked_pow(w));
    match total {
        Some(t) if t <= knitsim_core::linalg::max_dim() => Ok(()),
        _ => Err(CliError::Usage(format!(
            "a register of {wires} wires of dimension {d} exceeds the dimension cap {} (set KNITSIM_MAX_DIM to raise it)",
            knitsim_core::linalg::max_dim()
        ))),
    }
}

/// Canonical text of a resolved configuration: compact JSON, keys sorted.
pub fn canonical_json<T: serde::Serialize>(cfg: &T) -> String {
    let v = serde_json::to_value(cfg).expect("configs serialise");
    serde_json::to_string(&sort_keys(v)).expect("values serialise")
}

fn sort_keys(v: Value) -> Value {
    match v {
        Value::Object(m) => {
            let mut pairs: Vec<(String, Value)> = m.into_iter().collect();
            pairs.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(pairs.into_iter().map(|(k, v)| (k, sort_keys(v))).collect())
        }
        Value::Array(a) => Value::Array(a.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}
