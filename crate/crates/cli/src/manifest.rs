use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use advface::attacks::GridSpec;
use serde::{Deserialize, Serialize};

use crate::error::{read_text, write_text, CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";

/// What a run was started from. Together with the input files it fully
/// determines every output; `timestamp` is informational only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub tool_version: String,
    pub config_path: Option<PathBuf>,
    /// Hash of the resolved config, defaults filled in.
    pub config_sha256: String,
    /// Hash of the resolved images and masks.
    pub inputs_sha256: String,
    pub output_dir: PathBuf,
    /// Seconds since the Unix epoch when the run was first started.
    pub timestamp: u64,
    /// Grid runs only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

impl RunManifest {
    pub fn new(
        command: &str,
        seed: u64,
        config_path: Option<&Path>,
        config_sha256: String,
        inputs_sha256: String,
        output_dir: &Path,
    ) -> Self {
        Self {
            command: command.into(),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config_path: config_path.map(Path::to_path_buf),
            config_sha256,
            inputs_sha256,
            output_dir: output_dir.to_path_buf(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            grid: None,
        }
    }

    /// Same run: equal command, seed, config, inputs and grid.
    pub fn same_run(&self, other: &RunManifest) -> bool {
        self.command == other.command
            && self.seed == other.seed
            && self.config_sha256 == other.config_sha256
            && self.inputs_sha256 == other.inputs_sha256
            && self.grid == other.grid
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let body = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        write_text(&dir.join(MANIFEST), body)
    }

    /// `None` when the directory has no manifest.
    pub fn read(dir: &Path) -> CliResult<Option<RunManifest>> {
        let path = dir.join(MANIFEST);
        if !path.exists() {
            return Ok(None);
        }
        let text = read_text(&path)?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| CliError::Contract(format!("corrupt manifest {}: {e}", path.display())))
    }
}
