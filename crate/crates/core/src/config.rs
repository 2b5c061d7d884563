//! Run configuration in a flat `key = value` text format.
//!
//! ```text
//! # comment
//! version = 1
//! dataset = ../data/wine.csv
//! label = class
//! rank = 10
//! ```
//!
//! `version` must come first. Unknown keys are errors. Relative paths in a
//! file resolve against the file's directory. [`RunConfig::to_text`] writes
//! every key, so a run can be reproduced from its saved config alone.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::blackbox::ForestConfig;
use crate::error::{Error, Result};
use crate::explainer::PerturbationConfig;
use crate::factorization::NmfConfig;
use crate::features::DEFAULT_BINS;
use crate::rules::SearchSpace;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Forest {
        trees: usize,
        max_depth: Option<usize>,
        min_leaf: usize,
        features_per_split: Option<usize>,
    },
    Oracle {
        command: Vec<String>,
        categories: usize,
        timeout: Duration,
    },
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::Forest {
            trees: 200,
            max_depth: None,
            min_leaf: 1,
            features_per_split: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub label_column: Option<String>,
    pub delimiter: u8,
    pub train_fraction: f64,
    pub model: ModelSpec,
    pub bins: usize,
    pub num_samples: usize,
    pub kernel_width: Option<f64>,
    pub ridge_strength: f64,
    pub flip_probability: f64,
    pub rank: usize,
    pub nmf_max_iters: usize,
    pub nmf_tolerance: f64,
    pub r_max: usize,
    /// `None` uses the deciles of the positive entries of `W`.
    pub theta_grid: Option<Vec<f64>>,
    pub k_theta_max: Option<usize>,
    pub kmeans_restarts: usize,
    pub majority_share: f64,
    pub seed: u64,
    pub output: PathBuf,
    pub dump_matrices: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: PathBuf::new(),
            label_column: None,
            delimiter: b',',
            train_fraction: 0.7,
            model: ModelSpec::default(),
            bins: DEFAULT_BINS,
            num_samples: 1000,
            kernel_width: None,
            ridge_strength: 1.0,
            flip_probability: 0.5,
            rank: 10,
            nmf_max_iters: 500,
            nmf_tolerance: 1e-5,
            r_max: 5,
            theta_grid: None,
            k_theta_max: None,
            kmeans_restarts: 10,
            majority_share: 0.5,
            seed: 0,
            output: PathBuf::from("out"),
            dump_matrices: false,
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| invalid(format!("{key}: cannot parse {value:?}")))
}

fn parse_auto<T: std::str::FromStr>(key: &str, value: &str, auto: &str) -> Result<Option<T>> {
    if value == auto {
        Ok(None)
    } else {
        parse_num(key, value).map(Some)
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(invalid(format!(
            "{key}: expected true or false, got {value:?}"
        ))),
    }
}

fn resolve(base: &Path, value: &str) -> PathBuf {
    let p = PathBuf::from(value);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

fn show_opt<T: ToString>(v: &Option<T>, auto: &str) -> String {
    v.as_ref().map_or_else(|| auto.to_owned(), T::to_string)
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut config = RunConfig::default();
        let mut versioned = false;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| invalid(format!("line {}: expected key = value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !versioned {
                if key != "version" {
                    return Err(invalid("the first setting must be `version`"));
                }
                let v: u32 = parse_num(key, value)?;
                if v != CONFIG_VERSION {
                    return Err(invalid(format!("unsupported config version {v}")));
                }
                versioned = true;
                continue;
            }
            config
                .set(key, value, base)
                .map_err(|e| invalid(format!("line {}: {e}", n + 1)))?;
        }
        if !versioned {
            return Err(invalid("missing `version`"));
        }
        config.validate()?;
        Ok(config)
    }

    /// Applies one setting; relative paths resolve against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        match key {
            "dataset" => self.dataset = resolve(base, value),
            "label" => {
                self.label_column = (!value.is_empty() && value != "none").then(|| value.to_owned())
            }
            "delimiter" => {
                self.delimiter = match value {
                    "tab" => b'\t',
                    "comma" => b',',
                    "semicolon" => b';',
                    v if v.len() == 1 => v.as_bytes()[0],
                    _ => return Err(invalid(format!("delimiter: bad value {value:?}"))),
                }
            }
            "train_fraction" => self.train_fraction = parse_num(key, value)?,
            "model" => {
                self.model = match value {
                    "forest" => ModelSpec::default(),
                    "oracle" => ModelSpec::Oracle {
                        command: Vec::new(),
                        categories: 0,
                        timeout: crate::blackbox::DEFAULT_ORACLE_TIMEOUT,
                    },
                    _ => {
                        return Err(invalid(format!(
                            "model: expected forest or oracle, got {value:?}"
                        )))
                    }
                }
            }
            "trees" | "max_depth" | "min_leaf" | "features_per_split" => {
                let ModelSpec::Forest {
                    trees,
                    max_depth,
                    min_leaf,
                    features_per_split,
                } = &mut self.model
                else {
                    return Err(invalid(format!("{key} requires model = forest")));
                };
                match key {
                    "trees" => *trees = parse_num(key, value)?,
                    "max_depth" => *max_depth = parse_auto(key, value, "none")?,
                    "min_leaf" => *min_leaf = parse_num(key, value)?,
                    _ => *features_per_split = parse_auto(key, value, "auto")?,
                }
            }
            "oracle_command" | "oracle_categories" | "oracle_timeout_secs" => {
                let ModelSpec::Oracle {
                    command,
                    categories,
                    timeout,
                } = &mut self.model
                else {
                    return Err(invalid(format!("{key} requires model = oracle")));
                };
                match key {
                    "oracle_command" => {
                        *command = value.split_whitespace().map(str::to_owned).collect()
                    }
                    "oracle_categories" => *categories = parse_num(key, value)?,
                    _ => *timeout = Duration::from_secs(parse_num(key, value)?),
                }
            }
            "bins" => self.bins = parse_num(key, value)?,
            "samples" => self.num_samples = parse_num(key, value)?,
            "kernel_width" => self.kernel_width = parse_auto(key, value, "auto")?,
            "ridge" => self.ridge_strength = parse_num(key, value)?,
            "flip_probability" => self.flip_probability = parse_num(key, value)?,
            "rank" => self.rank = parse_num(key, value)?,
            "nmf_max_iters" => self.nmf_max_iters = parse_num(key, value)?,
            "nmf_tolerance" => self.nmf_tolerance = parse_num(key, value)?,
            "r_max" => self.r_max = parse_num(key, value)?,
            "theta_grid" => {
                self.theta_grid = if value == "deciles" {
                    None
                } else {
                    Some(
                        value
                            .split(',')
                            .map(|v| parse_num(key, v.trim()))
                            .collect::<Result<_>>()?,
                    )
                }
            }
            "k_theta_max" => self.k_theta_max = parse_auto(key, value, "auto")?,
            "kmeans_restarts" => self.kmeans_restarts = parse_num(key, value)?,
            "majority_share" => self.majority_share = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "output" => self.output = resolve(base, value),
            "dump_matrices" => self.dump_matrices = parse_bool(key, value)?,
            "version" => return Err(invalid("`version` may appear only once")),
            _ => return Err(invalid(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Checks value ranges that do not depend on the data.
    pub fn validate(&self) -> Result<()> {
        if self.dataset.as_os_str().is_empty() {
            return Err(invalid("dataset is not set"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(invalid("train_fraction must lie in (0, 1)"));
        }
        if self.bins < 2 {
            return Err(invalid("bins must be at least 2"));
        }
        if self.num_samples < 10 {
            return Err(invalid("samples must be at least 10"));
        }
        if self.kernel_width.is_some_and(|w| !(w > 0.0)) {
            return Err(invalid("kernel_width must be positive"));
        }
        if !(self.ridge_strength >= 0.0) {
            return Err(invalid("ridge must be nonnegative"));
        }
        if !(self.flip_probability > 0.0 && self.flip_probability <= 1.0) {
            return Err(invalid("flip_probability must lie in (0, 1]"));
        }
        if self.rank == 0 {
            return Err(invalid("rank must be at least 1"));
        }
        if self.nmf_max_iters == 0 || !(self.nmf_tolerance > 0.0) {
            return Err(invalid("nmf_max_iters and nmf_tolerance must be positive"));
        }
        if self.r_max == 0 {
            return Err(invalid("r_max must be at least 1"));
        }
        if let Some(grid) = &self.theta_grid {
            if grid.is_empty() || grid.iter().any(|t| !(*t >= 0.0)) {
                return Err(invalid("theta_grid values must be nonnegative"));
            }
        }
        if self.k_theta_max == Some(0) {
            return Err(invalid("k_theta_max must be at least 1"));
        }
        if self.kmeans_restarts == 0 {
            return Err(invalid("kmeans_restarts must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.majority_share) {
            return Err(invalid("majority_share must lie in [0, 1)"));
        }
        match &self.model {
            ModelSpec::Forest {
                trees, min_leaf, ..
            } => {
                if *trees == 0 || *min_leaf == 0 {
                    return Err(invalid("trees and min_leaf must be at least 1"));
                }
            }
            ModelSpec::Oracle {
                command,
                categories,
                ..
            } => {
                if command.is_empty() {
                    return Err(invalid("oracle_command is not set"));
                }
                if *categories < 2 {
                    return Err(invalid("oracle_categories must be at least 2"));
                }
            }
        }
        Ok(())
    }

    pub fn forest_config(&self) -> Option<ForestConfig> {
        match &self.model {
            ModelSpec::Forest {
                trees,
                max_depth,
                min_leaf,
                features_per_split,
            } => Some(ForestConfig {
                num_trees: *trees,
                max_depth: *max_depth,
                min_leaf: *min_leaf,
                features_per_split: *features_per_split,
                seed: self.seed,
            }),
            ModelSpec::Oracle { .. } => None,
        }
    }

    pub fn perturbation_config(&self) -> PerturbationConfig {
        PerturbationConfig {
            num_samples: self.num_samples,
            kernel_width: self.kernel_width,
            ridge_strength: self.ridge_strength,
            flip_probability: self.flip_probability,
            seed: self.seed,
        }
    }

    pub fn nmf_config(&self, rank: usize) -> NmfConfig {
        NmfConfig {
            rank,
            max_iters: self.nmf_max_iters,
            tolerance: self.nmf_tolerance,
            seed: self.seed,
        }
    }

    /// Search space for one factorization; `default_grid` is used when no
    /// explicit grid is configured.
    pub fn search_space(&self, default_grid: Vec<f64>) -> SearchSpace {
        SearchSpace {
            r_max: self.r_max,
            theta_grid: self.theta_grid.clone().unwrap_or(default_grid),
            k_theta_max: self.k_theta_max,
            kmeans_restarts: self.kmeans_restarts,
            majority_share: self.majority_share,
            seed: self.seed,
        }
    }

    /// Every setting, with absolute paths.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("version", CONFIG_VERSION.to_string());
        put("dataset", self.dataset.display().to_string());
        put("label", show_opt(&self.label_column, "none"));
        put(
            "delimiter",
            match self.delimiter {
                b'\t' => "tab".into(),
                d => (d as char).to_string(),
            },
        );
        put("train_fraction", self.train_fraction.to_string());
        match &self.model {
            ModelSpec::Forest {
                trees,
                max_depth,
                min_leaf,
                features_per_split,
            } => {
                put("model", "forest".into());
                put("trees", trees.to_string());
                put("max_depth", show_opt(max_depth, "none"));
                put("min_leaf", min_leaf.to_string());
                put("features_per_split", show_opt(features_per_split, "auto"));
            }
            ModelSpec::Oracle {
                command,
                categories,
                timeout,
            } => {
                put("model", "oracle".into());
                put("oracle_command", command.join(" "));
                put("oracle_categories", categories.to_string());
                put("oracle_timeout_secs", timeout.as_secs().to_string());
            }
        }
        put("bins", self.bins.to_string());
        put("samples", self.num_samples.to_string());
        put("kernel_width", show_opt(&self.kernel_width, "auto"));
        put("ridge", self.ridge_strength.to_string());
        put("flip_probability", self.flip_probability.to_string());
        put("rank", self.rank.to_string());
        put("nmf_max_iters", self.nmf_max_iters.to_string());
        put("nmf_tolerance", self.nmf_tolerance.to_string());
        put("r_max", self.r_max.to_string());
        put(
            "theta_grid",
            self.theta_grid.as_ref().map_or_else(
                || "deciles".into(),
                |g| g.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
            ),
        );
        put("k_theta_max", show_opt(&self.k_theta_max, "auto"));
        put("kmeans_restarts", self.kmeans_restarts.to_string());
        put("majority_share", self.majority_share.to_string());
        put("seed", self.seed.to_string());
        put("output", self.output.display().to_string());
        put("dump_matrices", self.dump_matrices.to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_uses_defaults() {
        let c = RunConfig::parse("version = 1\ndataset = d.csv\n", Path::new("/r")).unwrap();
        assert_eq!(c.dataset, PathBuf::from("/r/d.csv"));
        assert_eq!(c.rank, 10);
        assert_eq!(c.r_max, 5);
        assert_eq!(c.forest_config().unwrap().num_trees, 200);
    }

    #[test]
    fn version_required_first() {
        assert!(RunConfig::parse("dataset = d.csv\nversion = 1\n", Path::new(".")).is_err());
        assert!(RunConfig::parse("version = 2\ndataset = d.csv\n", Path::new(".")).is_err());
    }

    #[test]
    fn unknown_key_names_line() {
        let err = RunConfig::parse("version = 1\ndataset = d\nfoo = 1\n", Path::new("."))
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 3") && err.contains("foo"), "{err}");
    }

    #[test]
    fn forest_keys_rejected_for_oracle() {
        let text = "version = 1\ndataset = d\nmodel = oracle\ntrees = 3\n";
        assert!(RunConfig::parse(text, Path::new(".")).is_err());
    }

    #[test]
    fn text_round_trip() {
        let text = "version = 1\ndataset = /d.csv\nlabel = class\nmodel = oracle\n\
                    oracle_command = ./serve --fast\noracle_categories = 3\n\
                    theta_grid = 0.1,0.25\nkernel_width = 2.5\nseed = 7\noutput = /o\n";
        let c = RunConfig::parse(text, Path::new("/")).unwrap();
        let again = RunConfig::parse(&c.to_text(), Path::new("/elsewhere")).unwrap();
        assert_eq!(c, again);
    }
}
