//! Flat `key = value` experiment files.
//!
//! One setting per line, `#` starts a comment, lists are comma separated.
//! Unknown keys are errors. Keys and defaults:
//!
//! ```text
//! c = 100000              # population intercept
//! beta = 0.7745
//! n_queries = 1000000
//! schemes = nonuniform,noisy,sketchy
//! sample_sizes = 500,1000,2000,4000,6000,8000,10000
//! methods = NLS,CSN_MAX   # or CHI2,CSN_CONSTRAINED_CHI2 with binned = true
//! replicates = 100
//! seed = 42
//! binned = false
//! bin_ratio = 1.2324      # ladder from l_0 = V_N up past 2c
//! bin_first_edge =        # with bin_count, an explicit ladder instead
//! bin_count =
//! geometric_p = 0.001
//! noise_mean = 1
//! noise_sd = 0.0333...    # sqrt(0.01 / 9)
//! sketch_fraction = 0.001
//! gamma_hint =            # sketch fraction given to binned fits
//! jobs =                  # worker threads
//! ```

use std::str::FromStr;

use super::ExperimentConfig;
use crate::error::{Error, Result};
use crate::model::{PopulationSpec, ZipfParams};
use crate::sampling::{BinningScheme, SEARCHVOLUME_RATIO};

/// A parsed experiment file; `seed` is `None` when the file does not set one.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigFile {
    pub config: ExperimentConfig,
    pub seed: Option<u64>,
}

fn parse_value<T: FromStr>(line: u64, key: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse {key} = {raw:?}"),
    })
}

fn parse_list<T: FromStr>(line: u64, key: &str, raw: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(line, key, s))
        .collect()
}

fn parse_bool(line: u64, key: &str, raw: &str) -> Result<bool> {
    match raw.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Parse {
            line,
            message: format!("cannot parse {key} = {raw:?} as a boolean"),
        }),
    }
}

/// Parses an experiment file. Defaults come from [`ExperimentConfig::reference`],
/// except that binned runs default to both chi-square methods.
pub fn parse_config(text: &str) -> Result<ConfigFile> {
    let mut config = ExperimentConfig::reference();
    let (mut c, mut beta, mut n_queries) = (
        config.population.params.c,
        config.population.params.beta,
        config.population.n_queries,
    );
    let mut seed = None;
    let mut methods_set = false;
    let mut bin_ratio = SEARCHVOLUME_RATIO;
    let (mut first_edge, mut bin_count): (Option<f64>, Option<usize>) = (None, None);

    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx as u64 + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, raw) = content.split_once('=').ok_or_else(|| Error::Parse {
            line,
            message: format!("expected key = value, got {content:?}"),
        })?;
        let (key, raw) = (key.trim(), raw.trim());
        match key {
            "c" => c = parse_value(line, key, raw)?,
            "beta" => beta = parse_value(line, key, raw)?,
            "n_queries" => n_queries = parse_value(line, key, raw)?,
            "schemes" => config.schemes = parse_list(line, key, raw)?,
            "sample_sizes" => config.sample_sizes = parse_list(line, key, raw)?,
            "methods" => {
                config.methods = parse_list(line, key, raw)?;
                methods_set = true;
            }
            "replicates" => config.replicates = parse_value(line, key, raw)?,
            "seed" => seed = Some(parse_value(line, key, raw)?),
            "binned" => config.binned = parse_bool(line, key, raw)?,
            "bin_ratio" => bin_ratio = parse_value(line, key, raw)?,
            "bin_first_edge" => first_edge = Some(parse_value(line, key, raw)?),
            "bin_count" => bin_count = Some(parse_value(line, key, raw)?),
            "geometric_p" => config.bias.geometric_p = parse_value(line, key, raw)?,
            "noise_mean" => config.bias.noise_mean = parse_value(line, key, raw)?,
            "noise_sd" => config.bias.noise_sd = parse_value(line, key, raw)?,
            "sketch_fraction" => config.bias.sketch_fraction = parse_value(line, key, raw)?,
            "gamma_hint" => config.gamma_hint = Some(parse_value(line, key, raw)?),
            "jobs" => config.jobs = Some(parse_value(line, key, raw)?),
            _ => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown key {key:?}"),
                })
            }
        }
    }

    config.population = PopulationSpec::new(ZipfParams::new(c, beta)?, n_queries)?;
    if config.binned && !methods_set {
        config.methods = vec![
            crate::fit::FitMethod::Chi2,
            crate::fit::FitMethod::CsnConstrainedChi2,
        ];
    }
    config.binning = match (first_edge, bin_count) {
        (Some(l1), Some(m)) => Some(BinningScheme::new(l1 / bin_ratio, l1, bin_ratio, m)?),
        (None, None) => Some(BinningScheme::covering(
            config.population.min_volume,
            bin_ratio,
            2.0 * c,
        )?),
        _ => {
            return Err(Error::InvalidParameter(
                "bin_first_edge and bin_count must be given together".into(),
            ))
        }
    };
    if let Some(s) = seed {
        config.base_seed = s;
    }
    config.validate()?;
    Ok(ConfigFile { config, seed })
}
