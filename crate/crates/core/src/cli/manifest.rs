use chrono::DateTime;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Provenance header written at the top of every output file as
/// `# key = value` comment lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunManifest {
    pub command: String,
    /// `(role, path)` of every input, in argument order.
    pub inputs: Vec<(String, String)>,
    /// SHA-256 of the canonical configuration text.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub version: String,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(command: &str, inputs: Vec<(String, String)>, config: &str, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            inputs,
            config_hash: hex::encode(Sha256::digest(config.as_bytes())),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: build_timestamp(),
        }
    }

    pub fn header(&self) -> String {
        let mut s = format!("# po2forge {}\n# command = {}\n", self.version, self.command);
        for (role, path) in &self.inputs {
            s += &format!("# input.{role} = {path}\n");
        }
        s += &format!("# config_sha256 = {}\n", self.config_hash);
        if let Some(seed) = self.seed {
            s += &format!("# seed = {seed}\n");
        }
        s += &format!("# timestamp = {}\n", self.timestamp);
        s
    }

    /// Reads the manifest back from the leading comment lines of `text`.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::format("run manifest", m.to_string());
        let mut lines = text.lines().map_while(|l| l.strip_prefix("# "));
        let version = lines
            .next()
            .and_then(|l| l.strip_prefix("po2forge "))
            .ok_or_else(|| bad("missing version line"))?
            .to_string();
        let mut m = Self {
            command: String::new(),
            inputs: Vec::new(),
            config_hash: String::new(),
            seed: None,
            version,
            timestamp: String::new(),
        };
        for l in lines {
            let (k, v) = l.split_once(" = ").ok_or_else(|| bad("expected `key = value`"))?;
            match k {
                "command" => m.command = v.to_string(),
                "config_sha256" => m.config_hash = v.to_string(),
                "seed" => m.seed = Some(v.parse().map_err(|_| bad("bad seed"))?),
                // the header always ends here; later comments belong to the body
                "timestamp" => {
                    m.timestamp = v.to_string();
                    break;
                }
                _ => match k.strip_prefix("input.") {
                    Some(role) => m.inputs.push((role.to_string(), v.to_string())),
                    None => return Err(bad(&format!("unknown key `{k}`"))),
                },
            }
        }
        if m.command.is_empty() || m.config_hash.is_empty() || m.timestamp.is_empty() {
            return Err(bad("missing command or config hash"));
        }
        Ok(m)
    }
}

/// `SOURCE_DATE_EPOCH` as RFC 3339, or the epoch itself when unset, so
/// reruns produce identical files.
fn build_timestamp() -> String {
    let secs = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse::<i64>().ok())
        .unwrap_or(0);
    DateTime::from_timestamp(secs, 0)
        .unwrap_or_default()
        .format("%Y-%m-%dT%H:%M:%SZ")
        .to_string()
}
