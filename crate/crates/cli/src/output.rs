use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use typeb_core::rmt::stats::sig9;

/// Rounds every float in `v` to 9 significant digits.
fn round(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            let r: f64 = sig9(x).parse().expect("sig9 output parses");
            serde_json::Number::from_f64(r).map_or(Value::Null, Value::Number)
        }
        Value::Array(xs) => Value::Array(xs.into_iter().map(round).collect()),
        Value::Object(m) => Value::Object(m.into_iter().map(|(k, v)| (k, round(v))).collect()),
        other => other,
    }
}

pub struct OutDir(PathBuf);

impl OutDir {
    pub fn create(path: &Path) -> Result<Self> {
        fs::create_dir_all(path).with_context(|| format!("creating output directory {}", path.display()))?;
        Ok(OutDir(path.to_path_buf()))
    }

    fn write(&self, name: &str, text: &str) -> Result<PathBuf> {
        let p = self.0.join(name);
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }

    pub fn text(&self, name: &str, text: &str) -> Result<PathBuf> {
        self.write(name, text)
    }

    /// Pretty JSON at 9 significant digits.
    pub fn json(&self, name: &str, v: &impl Serialize) -> Result<PathBuf> {
        let v = round(serde_json::to_value(v)?);
        self.write(name, &(serde_json::to_string_pretty(&v)? + "\n"))
    }

    /// Pretty JSON at full precision.
    pub fn json_exact(&self, name: &str, v: &impl Serialize) -> Result<PathBuf> {
        self.write(name, &(serde_json::to_string_pretty(v)? + "\n"))
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// `dir/name` when `path` is a directory, else `path` itself.
pub fn resolve(path: &Path, name: &str) -> PathBuf {
    if path.is_dir() {
        path.join(name)
    } else {
        path.to_path_buf()
    }
}
