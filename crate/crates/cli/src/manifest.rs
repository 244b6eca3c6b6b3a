//! Run manifest: provenance written before any results (crash forensics),
//! finalized with wall-clock and outcome data once the run completes.
//! Keys are emitted sorted; the wall-clock field is the one value that
//! legitimately differs between reruns.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::output::OutputDir;

pub struct Manifest {
    fields: BTreeMap<String, Value>,
    started: Instant,
}

pub fn config_hash(config_text: &str) -> String {
    let digest = Sha256::digest(config_text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl Manifest {
    pub fn new(study: &str, config_text: &str, seed_base: u64, seeds: usize) -> Self {
        let mut fields = BTreeMap::new();
        fields.insert("study".into(), json!(study));
        fields.insert("config_hash".into(), json!(config_hash(config_text)));
        fields.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
        fields.insert("seed_base".into(), json!(seed_base));
        fields.insert("seed_count".into(), json!(seeds));
        fields.insert("status".into(), json!("running"));
        Manifest {
            fields,
            started: Instant::now(),
        }
    }

    pub fn set(&mut self, key: &str, value: Value) {
        self.fields.insert(key.into(), value);
    }

    pub fn write(&self, out: &OutputDir, name: &str) -> CliResult<()> {
        let mut w = out.writer(name)?;
        let value = Value::Object(self.fields.clone().into_iter().collect());
        let text = serde_json::to_string_pretty(&value)
            .map_err(|e| CliError::Io(format!("manifest serialization: {e}")))?;
        writeln!(w, "{text}").map_err(|e| CliError::Io(format!("manifest write: {e}")))?;
        w.flush().map_err(|e| CliError::Io(format!("manifest flush: {e}")))?;
        Ok(())
    }

    /// Finalize with wall-clock and completed status, then rewrite.
    pub fn finish(&mut self, out: &OutputDir, name: &str) -> CliResult<()> {
        self.fields.insert(
            "wall_clock_seconds".into(),
            json!(self.started.elapsed().as_secs_f64()),
        );
        self.fields.insert("status".into(), json!("complete"));
        self.write(out, name)
    }
}
