use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::error::CliResult;
use crate::params::RunParams;

/// Reproducibility record written before any other output. Holds no
/// timestamps or host details so reruns are byte-identical.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    /// Input role (`scene`, `assignment`, ...) to the path as given.
    pub config_paths: BTreeMap<String, String>,
    /// Raw `--set` arguments in command-line order.
    pub overrides: Vec<String>,
    pub seed: u64,
    pub output_dir: String,
    /// Parameters after flags and overrides were applied.
    pub params: RunParams,
}

impl RunManifest {
    pub fn write(&self, out_dir: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        crate::commands::write_text(&out_dir.join("manifest.json"), &text)
    }
}
