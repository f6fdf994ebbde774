use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub command: &'static str,
    pub inputs_digest: String,
    pub metrics: Map<String, Value>,
    pub tolerances: BTreeMap<String, f64>,
    pub verdict: Verdict,
}

impl Report {
    pub fn new(command: &'static str, digest: InputDigest) -> Self {
        Report {
            command,
            inputs_digest: digest.finish(),
            metrics: Map::new(),
            tolerances: BTreeMap::new(),
            verdict: Verdict::Pass,
        }
    }

    pub fn metric(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        let v = serde_json::to_value(value).expect("metric values are plain data");
        self.metrics.insert(key.to_string(), v);
        self
    }

    pub fn tolerance(&mut self, key: &str, value: f64) -> &mut Self {
        self.tolerances.insert(key.to_string(), value);
        self
    }

    pub fn require(&mut self, ok: bool) -> &mut Self {
        if !ok {
            self.verdict = Verdict::Fail;
        }
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// SHA-256 over the input files and the arguments that shape the result.
#[derive(Default)]
pub struct InputDigest(Sha256);

impl InputDigest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(mut self, label: &str, bytes: &[u8]) -> Self {
        self.0.update(label.as_bytes());
        self.0.update((bytes.len() as u64).to_le_bytes());
        self.0.update(bytes);
        self
    }

    pub fn arg(self, label: &str, value: impl std::fmt::Display) -> Self {
        let v = value.to_string();
        self.bytes(label, v.as_bytes())
    }

    pub fn finish(self) -> String {
        hex(&self.0.finalize())
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}
