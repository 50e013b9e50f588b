//! Optional `key = value` configuration file shared by all subcommands.
//!
//! Every key is optional; command-line flags win over the file, and the file
//! wins over built-in defaults. Relative paths are resolved against the
//! directory holding the file.

use std::path::{Path, PathBuf};

use articulate_core::codec::CodecProfile;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub resolution: Option<usize>,
    pub profile: Option<CodecProfile>,
    pub checkpoint: Option<PathBuf>,
    pub sigma: Option<f64>,
    pub alpha: Option<f64>,
    pub iterations: Option<usize>,
    /// `mm`, `cm` or `m`.
    pub scale_unit: Option<String>,
    pub mesh_unit_m: Option<f64>,
    pub default_density: Option<f64>,
    pub default_friction: Option<f64>,
    pub min_mass: Option<f64>,
    pub samples: Option<usize>,
}

impl FileConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg: FileConfig = toml::from_str(text).map_err(|e| CliError::Input(format!("config: {e}")))?;
        if let Some(p) = &cfg.checkpoint {
            cfg.checkpoint = Some(base.join(p));
        }
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_resolves_paths() {
        let c = FileConfig::parse(
            "seed = 7\nprofile = \"16x8x8\"\ncheckpoint = \"models/vq.avqc\"\nalpha = 0.3\nscale_unit = \"mm\"\n",
            Path::new("/cfg"),
        )
        .unwrap();
        assert_eq!(c.seed, Some(7));
        assert_eq!(c.profile, Some(CodecProfile::Wide16x8x8));
        assert_eq!(c.checkpoint, Some(PathBuf::from("/cfg/models/vq.avqc")));
        assert_eq!(c.alpha, Some(0.3));
        assert_eq!(FileConfig::parse("", Path::new(".")).unwrap(), FileConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(FileConfig::parse("sigmaa = 1.0", Path::new(".")), Err(CliError::Input(_))));
    }
}
