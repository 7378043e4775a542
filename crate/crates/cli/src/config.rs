use std::path::Path;

use serde::Deserialize;

use crate::error::CliError;
use crate::{
    BuildMetricArgs, DensityGridArgs, DiagnosePullbackArgs, EmbedArgs, GenDataArgs, PathArgs, SampleArgs, TrainArgs,
};

/// Contents of a `--config` file. Top-level `seed` and `threads`, plus one
/// optional table per subcommand using the flag names with underscores:
///
/// ```toml
/// seed = 7
///
/// [sample]
/// n = 1000
/// step_size = 0.02
///
/// [build-metric]
/// k = 50
/// ```
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    #[serde(rename = "gen-data")]
    pub gen_data: GenDataArgs,
    pub train: TrainArgs,
    pub embed: EmbedArgs,
    #[serde(rename = "build-metric")]
    pub build_metric: BuildMetricArgs,
    pub sample: SampleArgs,
    pub interpolate: PathArgs,
    pub geodesic: PathArgs,
    #[serde(rename = "density-grid")]
    pub density_grid: DensityGridArgs,
    #[serde(rename = "diagnose-pullback")]
    pub diagnose_pullback: DiagnosePullbackArgs,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::usage(format!("config file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::at(path, e))?;
        Self::parse(&text).map_err(|e| CliError::at(path, e))
    }
}
