use std::path::{Path, PathBuf};

use gstned::pipeline::PipelineConfig;
use gstned::rank::Scheme;
use gstned::{Error, Result};
use serde::{Deserialize, Serialize};

/// Grid and split for the `sweep` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub thresholds: Vec<f64>,
    pub ks: Vec<usize>,
    pub schemes: Vec<Scheme>,
    pub held_out_fraction: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            thresholds: vec![0.70, 0.75, 0.80, 0.85, 0.90],
            ks: vec![1, 5, 10, 20, 50],
            schemes: Scheme::SELECTABLE.to_vec(),
            held_out_fraction: 0.1,
        }
    }
}

/// Everything a run needs. Loaded from TOML, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edges: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub documents: Option<PathBuf>,
    pub index_dir: PathBuf,
    pub output_dir: PathBuf,
    pub pipeline: PipelineConfig,
    pub sweep: SweepConfig,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            nodes: None,
            edges: None,
            documents: None,
            index_dir: PathBuf::from("index"),
            output_dir: PathBuf::from("out"),
            pipeline: PipelineConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| {
            let line = e
                .span()
                .map_or(0, |s| text[..s.start].matches('\n').count() + 1);
            Error::parse(path.display().to_string(), line, e.message())
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    /// Writes the resolved config as `config.toml` inside `dir`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("config.toml");
        std::fs::write(&path, self.to_toml()?).map_err(|e| Error::io(&path, e))
    }

    pub fn require<'a>(field: &'a Option<PathBuf>, flag: &str) -> Result<&'a PathBuf> {
        field.as_ref().ok_or_else(|| {
            Error::Config(format!(
                "no {flag} given; pass --{flag} or set `{flag}` in the config file"
            ))
        })
    }
}
