//! Artifact directory layout, CSV writers and the run manifest.

use std::path::{Path, PathBuf};

use chaintwin::container::Persist;
use chaintwin::control::ControlSequence;
use chaintwin::rom::Trajectory;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

pub type AnyResult<T> = Result<T, Box<dyn std::error::Error>>;

/// Version of every CSV/JSON layout written by this tool.
pub const SCHEMA_VERSION: u32 = 1;

pub const MANIFEST: &str = "manifest.json";

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

/// Fails with a descriptive message if `path` does not exist.
pub fn require(path: &Path) -> AnyResult<()> {
    if !path.exists() {
        return Err(format!("missing artifact {}", path.display()).into());
    }
    Ok(())
}

pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> AnyResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> AnyResult<(Vec<String>, Vec<Vec<String>>)> {
    require(path)?;
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_owned).collect();
    let rows = r.records().map(|rec| rec.map(|r| r.iter().map(str::to_owned).collect())).collect::<Result<_, _>>()?;
    Ok((header, rows))
}

pub fn fmt(x: f64) -> String {
    format!("{x:.17e}")
}

pub const TRAJECTORY_HEADER: [&str; 5] = ["k", "sx", "sy", "sz", "purity"];

pub fn trajectory_rows(t: &Trajectory) -> Vec<Vec<String>> {
    t.bloch()
        .iter()
        .zip(t.purity())
        .enumerate()
        .map(|(k, (b, p))| vec![k.to_string(), fmt(b[0]), fmt(b[1]), fmt(b[2]), fmt(p)])
        .collect()
}

pub fn write_trajectory(path: &Path, t: &Trajectory) -> AnyResult<()> {
    write_csv(path, &TRAJECTORY_HEADER, trajectory_rows(t))
}

/// SHA-256 of the serialized control sequence, hex encoded.
pub fn controls_hash(c: &ControlSequence) -> String {
    hex::encode(Sha256::digest(c.to_bytes()))
}

pub fn write_json(path: &Path, value: &Value) -> AnyResult<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, serde_json::to_string_pretty(value)? + "\n")?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_json(path: &Path) -> AnyResult<Value> {
    require(path)?;
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// The run manifest: config echo, seeds and one entry per pipeline stage.
pub struct Manifest {
    path: PathBuf,
    value: Value,
}

impl Manifest {
    /// Opens the manifest of `out`, starting a fresh one if absent. The
    /// config echo is always refreshed.
    pub fn open(out: &Path, config: Value, seeds: &[u64]) -> AnyResult<Self> {
        let path = out.join(MANIFEST);
        let mut value = if path.exists() { read_json(&path)? } else { json!({ "stages": {} }) };
        let obj = value.as_object_mut().ok_or("manifest is not a JSON object")?;
        obj.insert("schema_version".into(), json!(SCHEMA_VERSION));
        obj.insert("tool_version".into(), json!(env!("CARGO_PKG_VERSION")));
        obj.insert("config".into(), config);
        obj.insert("seeds".into(), json!(seeds));
        obj.entry("stages").or_insert_with(|| json!({}));
        Ok(Self { path, value })
    }

    pub fn set_stage(&mut self, stage: &str, entry: Value) -> AnyResult<()> {
        let stages = self.value["stages"].as_object_mut().ok_or("manifest stages is not an object")?;
        stages.insert(stage.into(), entry);
        write_json(&self.path, &self.value)
    }
}

/// Ordered JSON object builder.
#[derive(Default)]
pub struct Entry(Map<String, Value>);

impl Entry {
    pub fn set(&mut self, key: &str, v: impl Into<Value>) -> &mut Self {
        self.0.insert(key.into(), v.into());
        self
    }

    pub fn into_value(self) -> Value {
        Value::Object(self.0)
    }
}
