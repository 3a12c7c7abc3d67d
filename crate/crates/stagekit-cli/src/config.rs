//! Declarative run configuration. One TOML file holds a section per
//! subcommand; every relative path inside it resolves against the config
//! file's own directory, so runs behave the same from any working
//! directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use stagekit::inference::{DecodingParams, EndpointConfig};

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub unify: Option<UnifyConfig>,
    pub mutate: Option<MutateConfig>,
    pub classify: Option<ClassifyConfig>,
    pub evaluate: Option<EvaluateConfig>,
    pub insights: Option<InsightsConfig>,
    pub report: Option<ReportConfig>,
}

/// A loaded config plus the directory its relative paths resolve against
/// and the raw bytes that went into the manifest's config hash.
pub struct LoadedConfig {
    pub file: ConfigFile,
    pub base_dir: PathBuf,
    pub raw: String,
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, CliError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let file: ConfigFile = toml::from_str(&raw)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    let base_dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();
    Ok(LoadedConfig {
        file,
        base_dir,
        raw,
    })
}

pub fn resolve(base: &Path, relative: &str) -> PathBuf {
    let p = Path::new(relative);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn default_alpha() -> f64 {
    0.05
}

fn default_parallelism() -> usize {
    4
}

fn default_true() -> bool {
    true
}

fn default_pattern_length() -> usize {
    3
}

fn default_min_support() -> u64 {
    2
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnifyConfig {
    pub taxonomy_a: String,
    pub taxonomy_b: String,
    /// Omitted mapping means no expert pairs: all stages stay singletons.
    pub cross_mapping: Option<String>,
    pub version: String,
    pub output_dir: String,
    #[serde(default)]
    pub remove_unmatched: Vec<String>,
    #[serde(default)]
    pub headword_overrides: BTreeMap<String, String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutateConfig {
    pub taxonomy: String,
    pub synonyms: String,
    pub output_dir: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    Rule,
    Slm,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyConfig {
    pub backend: BackendChoice,
    /// Either a directory scanned for *.ipynb, or an explicit list.
    pub notebook_dir: Option<String>,
    #[serde(default)]
    pub notebooks: Vec<String>,
    pub taxonomy: String,
    pub output_dir: String,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Skip instructions already present in the output artifact.
    #[serde(default = "default_true")]
    pub resume: bool,
    // Rule backend inputs.
    pub stages_csv: Option<String>,
    pub stage_codes: Option<String>,
    // Model backend inputs.
    pub template: Option<String>,
    pub decoding: Option<DecodingParams>,
    pub endpoint: Option<EndpointConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    pub predictions: String,
    /// Additional prediction artifacts to test against the primary one.
    #[serde(default)]
    pub compare_with: Vec<String>,
    pub taxonomy: String,
    pub truth: String,
    pub truth_taxonomy: String,
    pub notebook_dir: String,
    pub output_dir: String,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InsightsConfig {
    pub predictions: String,
    pub taxonomy: String,
    pub output_dir: String,
    #[serde(default = "default_true")]
    pub collapse_self: bool,
    #[serde(default)]
    pub boundaries: bool,
    #[serde(default = "default_pattern_length")]
    pub pattern_length: usize,
    #[serde(default = "default_min_support")]
    pub min_support: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub references: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    pub evaluation: Option<String>,
    pub insights: Option<String>,
    pub output_dir: String,
}

/// Pulls one subcommand's section out of the file, failing with a usage
/// error naming the missing section.
pub fn require_section<T>(section: Option<T>, name: &str) -> Result<T, CliError> {
    section.ok_or_else(|| CliError::Usage(format!("config file has no [{name}] section")))
}
