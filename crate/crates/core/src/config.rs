//! Run configuration: a flat TOML file whose keys mirror the command-line
//! flags. Flags given on the command line override file values.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n: Option<usize>,
    /// Grid spacing, `1/64` or `0.015625`.
    pub h: Option<String>,
    pub corpus: Option<String>,
    pub f: Option<String>,
    pub shape: Option<String>,
    pub name: Option<String>,
    pub r: Option<f64>,
    pub h_band: Option<f64>,
    pub field: Option<String>,
    pub chart: Option<PathBuf>,
    pub j: Option<String>,
    pub seed: Option<u64>,
    pub tol_scale: Option<f64>,
    pub out: Option<PathBuf>,
    pub exact: Option<bool>,
}

macro_rules! overlay {
    ($base:expr, $over:expr, $($k:ident),*) => {
        $( if $over.$k.is_some() { $base.$k = $over.$k.clone(); } )*
    };
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Values set in `flags` win over values in `self`.
    pub fn merged(mut self, flags: &RunConfig) -> Self {
        overlay!(self, flags, n, h, corpus, f, shape, name, r, h_band, field, chart, j, seed, tol_scale, out, exact);
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn tol_scale(&self) -> Result<f64> {
        match self.tol_scale {
            Some(t) if !(t > 0.0 && t.is_finite()) => Err(Error::InvalidArgument(format!("tol-scale {t} must be positive"))),
            t => Ok(t.unwrap_or(1.0)),
        }
    }

    pub fn resolution(&self, default: f64) -> Result<f64> {
        self.h.as_deref().map_or(Ok(default), parse_resolution)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("sobolev-lab-out"))
    }
}

/// Parses `1/64` or a decimal.
pub fn parse_resolution(s: &str) -> Result<f64> {
    let bad = || Error::Parse(format!("invalid resolution '{s}'"));
    let h = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            a / b
        }
        None => s.trim().parse().map_err(|_| bad())?,
    };
    if h.is_finite() && h > 0.0 {
        Ok(h)
    } else {
        Err(bad())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolution_forms() {
        assert_eq!(parse_resolution("1/64").unwrap(), 1.0 / 64.0);
        assert_eq!(parse_resolution("0.125").unwrap(), 0.125);
        assert!(parse_resolution("1/0").is_err());
        assert!(parse_resolution("abc").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("n = 2\nbogus = 1\n").is_err());
    }

    #[test]
    fn flags_override_file() {
        let file = RunConfig::from_toml("n = 3\nh = \"1/16\"\nseed = 4\n").unwrap();
        let flags = RunConfig {
            n: Some(2),
            ..Default::default()
        };
        let c = file.merged(&flags);
        assert_eq!((c.n, c.h.as_deref(), c.seed()), (Some(2), Some("1/16"), 4));
    }

    #[test]
    fn tol_scale_must_be_positive() {
        let c = RunConfig {
            tol_scale: Some(0.0),
            ..Default::default()
        };
        assert!(c.tol_scale().is_err());
    }
}
