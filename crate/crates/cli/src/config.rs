//! Optional config file merged under command-line flags.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::CliError;

/// Values a config file can pre-set; every flag overrides its entry.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub corpus: Option<PathBuf>,
    pub topics: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub template: Option<PathBuf>,
    pub prices: Option<PathBuf>,
    pub backends: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub verbosity: Option<u8>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

/// Resolved global settings: output directory and verbosity, plus the
/// config-file fallbacks for path flags.
#[derive(Debug, Clone)]
pub struct Global {
    pub file: ConfigFile,
    pub out_dir: PathBuf,
    pub verbosity: u8,
}

impl Global {
    pub fn resolve(
        config_path: Option<&Path>,
        out_dir_flag: Option<PathBuf>,
        verbosity_flag: u8,
    ) -> Result<Self, CliError> {
        let file = match config_path {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let out_dir = out_dir_flag
            .or_else(|| file.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        let verbosity = if verbosity_flag > 0 {
            verbosity_flag
        } else {
            file.verbosity.unwrap_or(0)
        };
        Ok(Global {
            file,
            out_dir,
            verbosity,
        })
    }

    /// Flag value, else config-file value, else a usage error naming the
    /// missing flag; the file must exist.
    pub fn require_input(
        &self,
        flag: Option<PathBuf>,
        fallback: &Option<PathBuf>,
        name: &str,
    ) -> Result<PathBuf, CliError> {
        let path = flag
            .or_else(|| fallback.clone())
            .ok_or_else(|| CliError::Usage(format!("missing required --{name}")))?;
        if !path.exists() {
            return Err(CliError::Data(format!(
                "--{name} file {} does not exist",
                path.display()
            )));
        }
        Ok(path)
    }

    /// Place an output file under the output directory unless the given
    /// path is absolute. The directory is created on demand.
    pub fn out_path(&self, flag: Option<PathBuf>, default_name: &str) -> Result<PathBuf, CliError> {
        let path = flag.unwrap_or_else(|| PathBuf::from(default_name));
        let resolved = if path.is_absolute() {
            path
        } else {
            self.out_dir.join(path)
        };
        if let Some(parent) = resolved.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| {
                    CliError::Data(format!("cannot create {}: {e}", parent.display()))
                })?;
            }
        }
        Ok(resolved)
    }

    pub fn note(&self, message: &str) {
        if self.verbosity > 0 {
            eprintln!("{message}");
        }
    }
}
