//! Settings resolution: flags, then the optional TOML file, then built-in
//! defaults.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use frogcert::certificate::parse_ratio;
use num_rational::Rational64;
use serde::Deserialize;

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub grid_size: Option<usize>,
    pub step_menu: Option<Vec<String>>,
    pub max_passes: Option<usize>,
    pub a: Option<Vec<f64>>,
    pub variant: Option<String>,
    pub episodes: Option<u64>,
    pub depth_cap: Option<u16>,
    pub step_cap: Option<u64>,
    pub seed: Option<u64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Like [`pick`] for list flags, where an empty list means "not given".
pub fn pick_list<T>(flag: Vec<T>, file: Option<Vec<T>>, default: Vec<T>) -> Vec<T> {
    let flag = (!flag.is_empty()).then_some(flag);
    pick(flag, file, default)
}

pub fn parse_menu(items: &[String]) -> Result<Vec<Rational64>> {
    items
        .iter()
        .map(|s| parse_ratio(s).map_err(|e| anyhow::anyhow!("invalid step_menu: {e}")))
        .collect()
}
