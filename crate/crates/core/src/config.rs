//! Run configuration read from a flat `key = value` TOML file.
//!
//! Every field is optional; command-line flags override file values and
//! built-in defaults fill whatever neither provides.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::maskgen::PlacementMode;
use crate::metrics::Averaging;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,

    // silhouettes and masks
    pub per_interval: Option<usize>,
    pub candidates: Option<usize>,
    pub intervals: Option<String>,
    pub mode: Option<PlacementMode>,
    pub max_attempts: Option<usize>,
    pub frame: Option<usize>,

    // schedule
    pub epochs_per_interval: Option<usize>,
    pub num_intervals: Option<usize>,

    // pseudo-label filter
    pub min_lines: Option<f64>,
    pub min_total_length: Option<f64>,
    pub max_ratio: Option<f64>,

    // metrics
    pub sap_thresholds: Option<Vec<f64>>,
    pub junction_thresholds: Option<Vec<f64>>,
    pub heatmap_levels: Option<usize>,
    pub heatmap_tolerance: Option<f64>,
    pub eval_frame: Option<usize>,
    pub averaging: Option<Averaging>,

    // losses
    pub eps: Option<f64>,
    pub gamma: Option<f64>,

    // paths, resolved against the config file's directory
    pub silhouettes: Option<PathBuf>,
    pub pool: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub pred: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.silhouettes,
            &mut cfg.pool,
            &mut cfg.annotations,
            &mut cfg.pred,
            &mut cfg.gt,
            &mut cfg.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Parses `a-b` or a single index into an inclusive interval range.
pub fn parse_interval_range(s: &str) -> Result<std::ops::RangeInclusive<usize>> {
    let bad = || Error::Config(format!("bad interval range `{s}`, expected e.g. `0-9`"));
    let (lo, hi) = match s.split_once('-') {
        Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
        None => {
            let v = s.trim().parse().map_err(|_| bad())?;
            (v, v)
        }
    };
    if lo > hi || hi >= crate::maskgen::NUM_INTERVALS {
        return Err(bad());
    }
    Ok(lo..=hi)
}

/// Parses a comma-separated list of numbers.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Config(format!("bad number `{v}` in list `{s}`")))
        })
        .collect()
}
