//! Run manifest: config hash, derived seeds, versions, artifact hashes, and
//! per-step failures, serialized as sorted-key JSON with no timestamps so
//! identical runs are byte-identical.

use std::collections::BTreeMap;

use serde_json::{Value, json};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[derive(Debug, Default)]
pub struct Manifest {
    pub experiment: String,
    pub config_sha256: String,
    pub master_seed: u64,
    pub sub_seeds: BTreeMap<String, u64>,
    pub artifacts: BTreeMap<String, String>,
    pub failures: Vec<String>,
    pub extras: BTreeMap<String, Value>,
}

impl Manifest {
    pub fn status(&self) -> &'static str {
        if self.failures.is_empty() { "ok" } else { "partial" }
    }

    pub fn render(&self) -> String {
        let mut root = BTreeMap::<&str, Value>::new();
        root.insert("artifacts", json!(self.artifacts));
        root.insert("config_sha256", json!(self.config_sha256));
        root.insert("experiment", json!(self.experiment));
        root.insert("failures", json!(self.failures));
        for (k, v) in &self.extras {
            root.insert(k.as_str(), v.clone());
        }
        root.insert(
            "seeds",
            json!({ "master": self.master_seed, "labels": self.sub_seeds }),
        );
        root.insert("status", json!(self.status()));
        root.insert(
            "versions",
            json!({ "riss": riss::VERSION, "riss-cli": env!("CARGO_PKG_VERSION") }),
        );
        let mut text = serde_json::to_string_pretty(&root).expect("manifest serializes");
        text.push('\n');
        text
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_is_sorted_and_marks_partial() {
        let mut m = Manifest {
            experiment: "evm-comparison".into(),
            config_sha256: sha256_hex(b"cfg"),
            master_seed: 7,
            ..Default::default()
        };
        m.artifacts.insert("b.csv".into(), sha256_hex(b"b"));
        m.artifacts.insert("a.csv".into(), sha256_hex(b"a"));
        assert_eq!(m.status(), "ok");
        let text = m.render();
        let a = text.find("\"a.csv\"").unwrap();
        let b = text.find("\"b.csv\"").unwrap();
        assert!(a < b, "artifact keys sorted");
        assert!(!text.contains("time"), "no timestamps");

        m.failures.push("heatmap: probe coincided".into());
        assert_eq!(m.status(), "partial");
        assert!(m.render().contains("partial"));
    }

    #[test]
    fn hashing_is_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
