//! Parameter loading: TOML file, then command-line flags, over the base
//! point.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;

/// Environment variable holding a default config file path.
pub const CONFIG_ENV: &str = "MFG_INVEST_CONFIG";
pub const DEFAULT_SEED: u64 = 42;

/// Flat TOML file. Every key is optional; unknown keys are rejected.
///
/// ```toml
/// lambda = 0.3
/// a1 = 0.2
/// seed = 7
/// ```
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub delta: Option<f64>,
    pub gamma: Option<f64>,
    pub r: Option<f64>,
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
    pub p: Option<f64>,
    pub c: Option<f64>,
    pub a0: Option<f64>,
    pub a1: Option<f64>,
    pub seed: Option<u64>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::InvalidConfig(m) => Error::InvalidConfig(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

/// Model parameter flags shared by every subcommand.
#[derive(Debug, Clone, Default, PartialEq, Args)]
#[command(next_help_heading = "Model parameters")]
pub struct ParamArgs {
    /// TOML file with parameter values (default: $MFG_INVEST_CONFIG)
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    #[arg(long, global = true)]
    pub r: Option<f64>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Unit price of capacity
    #[arg(long, global = true)]
    pub p: Option<f64>,
    #[arg(long, global = true)]
    pub c: Option<f64>,
    #[arg(long, global = true)]
    pub a0: Option<f64>,
    #[arg(long, global = true)]
    pub a1: Option<f64>,
}

/// Effective parameters and seed, echoed into every output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub params: ModelParams,
    pub seed: u64,
    pub config_file: Option<PathBuf>,
}

fn overlay(params: &mut ModelParams, src: [Option<f64>; 9]) {
    let slots = [
        &mut params.delta,
        &mut params.gamma,
        &mut params.r,
        &mut params.alpha,
        &mut params.lambda,
        &mut params.p,
        &mut params.c,
        &mut params.a0,
        &mut params.a1,
    ];
    for (slot, v) in slots.into_iter().zip(src) {
        if let Some(v) = v {
            *slot = v;
        }
    }
}

/// Defaults, then the file (flag path, else `env_path`), then flags.
/// `seed_flag` overrides the file seed.
pub fn load_config(
    args: &ParamArgs,
    seed_flag: Option<u64>,
    env_path: Option<PathBuf>,
) -> Result<RunConfig> {
    let path = args.config.clone().or(env_path);
    let file = match &path {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let mut params = ModelParams::default();
    overlay(
        &mut params,
        [
            file.delta,
            file.gamma,
            file.r,
            file.alpha,
            file.lambda,
            file.p,
            file.c,
            file.a0,
            file.a1,
        ],
    );
    overlay(
        &mut params,
        [
            args.delta,
            args.gamma,
            args.r,
            args.alpha,
            args.lambda,
            args.p,
            args.c,
            args.a0,
            args.a1,
        ],
    );
    params.check_ranges()?;
    Ok(RunConfig {
        params,
        seed: seed_flag.or(file.seed).unwrap_or(DEFAULT_SEED),
        config_file: path,
    })
}

/// `$MFG_INVEST_CONFIG`, if set and non-empty.
pub fn env_config_path() -> Option<PathBuf> {
    std::env::var_os(CONFIG_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_without_file_or_flags() {
        let cfg = load_config(&ParamArgs::default(), None, None).unwrap();
        assert_eq!(cfg.params, ModelParams::default());
        assert_eq!(cfg.seed, DEFAULT_SEED);
    }

    #[test]
    fn out_of_range_flag_names_invariant() {
        let args = ParamArgs {
            alpha: Some(1.2),
            ..ParamArgs::default()
        };
        let err = load_config(&args, None, None).unwrap_err().to_string();
        assert!(err.contains("alpha ∈ (0,1)"), "{err}");
    }

    #[test]
    fn unknown_key_is_named() {
        let err = FileConfig::parse("lambda = 0.3\nbeta = 2\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("beta"), "{err}");
    }

    #[test]
    fn flag_beats_file_beats_default() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "lambda = 0.3\nr = 4.0\nseed = 9\n").unwrap();
        let args = ParamArgs {
            lambda: Some(0.6),
            ..ParamArgs::default()
        };
        let cfg = load_config(&args, None, Some(path.clone())).unwrap();
        assert_eq!(cfg.params.lambda, 0.6);
        assert_eq!(cfg.params.r, 4.0);
        assert_eq!(cfg.params.delta, 1.0);
        assert_eq!(cfg.seed, 9);
        assert_eq!(load_config(&args, Some(1), Some(path)).unwrap().seed, 1);
    }
}
