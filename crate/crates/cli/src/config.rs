use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use facegen::cgan::GanConfig;
use facegen::inversion::InversionConfig;
use facegen::metrics::MetricConfig;
use facegen::raters::RaterTrainConfig;
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Shared `--config` file. Every section is optional; missing keys take
/// library defaults and command-line flags win over both.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub raters: RaterTrainConfig,
    pub gan: GanConfig,
    pub inversion: InversionConfig,
    pub metrics: MetricConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| Failure::Data(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::Usage(format!("invalid config {}: {e}", path.display())))
    }
}

/// Frozen record of what a command actually ran with.
#[derive(Serialize)]
pub struct RunRecord<'a, S: Serialize> {
    pub command: &'a str,
    pub seed: u64,
    pub inputs: BTreeMap<&'a str, String>,
    pub settings: S,
}

impl<S: Serialize> RunRecord<'_, S> {
    pub fn write(&self, path: &Path) -> Result<(), Failure> {
        let text = toml::to_string_pretty(self).map_err(|e| Failure::Data(format!("cannot encode run config: {e}")))?;
        fs::write(path, text).map_err(|e| Failure::Data(format!("cannot write {}: {e}", path.display())))
    }
}

/// Refuses to reuse a non-empty directory unless forced, then creates it.
pub fn prepare_dir(dir: &Path, force: bool) -> Result<(), Failure> {
    if let Ok(mut entries) = fs::read_dir(dir) {
        if entries.next().is_some() && !force {
            return Err(Failure::Usage(format!(
                "{} exists and is not empty; pass --force to reuse it",
                dir.display()
            )));
        }
    } else if dir.exists() {
        return Err(Failure::Usage(format!("{} exists and is not a directory", dir.display())));
    }
    fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("cannot create {}: {e}", dir.display())))
}

/// Refuses to replace an existing file unless forced; creates the parent.
pub fn prepare_file(path: &Path, force: bool) -> Result<(), Failure> {
    if path.exists() && !force {
        return Err(Failure::Usage(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::Data(format!("cannot create {}: {e}", parent.display())))?;
    }
    Ok(())
}

/// `out.png` → `out.png.<ext>`.
pub fn sidecar(path: &Path, ext: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".{ext}"));
    path.with_file_name(name)
}
