//! Key=value configuration files.
//!
//! Four sections, keys named after the hyperparameter tables:
//!
//! ```text
//! [network]   width, depth, activation
//! [training]  n_interior, n_boundary, Epochs, lr_soln, lr_testfn, T_0, T_mult
//! [weights]   weight_soln_obs, weight_testfn_obs, weight_gap_term
//! [problem]   name
//! ```
//!
//! Missing keys fall back to the 1D or 2D defaults chosen by the problem's
//! dimension; unknown and duplicate keys are rejected.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::nn::Architecture;
use crate::problems::ProblemSpec;
use crate::trainer::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed `{text}` (expected key = value or [section])")]
    Malformed { line: usize, text: String },
    #[error("line {line}: unknown key `{key}` in section [{section}]")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: duplicate key `{key}` in section [{section}]")]
    DuplicateKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: key `{key}` outside any section")]
    NoSection { line: usize, key: String },
    #[error("key `{key}`: cannot parse `{value}` as {wanted}")]
    BadValue {
        key: String,
        value: String,
        wanted: &'static str,
    },
    #[error("unsupported activation `{0}` (only tanh)")]
    BadActivation(String),
}

const SECTIONS: [(&str, &[&str]); 4] = [
    ("network", &["width", "depth", "activation"]),
    (
        "training",
        &[
            "n_interior",
            "n_boundary",
            "Epochs",
            "lr_soln",
            "lr_testfn",
            "T_0",
            "T_mult",
        ],
    ),
    (
        "weights",
        &["weight_soln_obs", "weight_testfn_obs", "weight_gap_term"],
    ),
    ("problem", &["name"]),
];

/// Parsed file as (section, key) -> value, order-independent.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    entries: HashMap<(String, String), String>,
}

impl ConfigFile {
    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.entries
            .get(&(section.to_string(), key.to_string()))
            .map(String::as_str)
    }

    fn parse_typed<T: std::str::FromStr>(
        &self,
        section: &str,
        key: &str,
        wanted: &'static str,
    ) -> Result<Option<T>, ConfigError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| ConfigError::BadValue {
                key: key.to_string(),
                value: v.to_string(),
                wanted,
            }),
        }
    }
}

pub fn parse_config_str(text: &str) -> Result<ConfigFile, ConfigError> {
    let mut entries = HashMap::new();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.split(['#', ';']).next().unwrap_or("").trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim();
            if !SECTIONS.iter().any(|(s, _)| *s == name) {
                return Err(ConfigError::UnknownKey {
                    line,
                    section: name.to_string(),
                    key: "[section]".to_string(),
                });
            }
            section = Some(name.to_string());
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(ConfigError::Malformed {
                line,
                text: trimmed.to_string(),
            });
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        let Some(sec) = section.clone() else {
            return Err(ConfigError::NoSection { line, key });
        };
        let known = SECTIONS
            .iter()
            .find(|(s, _)| *s == sec)
            .map(|(_, keys)| keys.contains(&key.as_str()))
            .unwrap_or(false);
        if !known {
            return Err(ConfigError::UnknownKey {
                line,
                section: sec,
                key,
            });
        }
        if entries.insert((sec.clone(), key.clone()), value).is_some() {
            return Err(ConfigError::DuplicateKey {
                line,
                section: sec,
                key,
            });
        }
    }
    Ok(ConfigFile { entries })
}

pub fn parse_config(path: &Path) -> Result<ConfigFile, ConfigError> {
    parse_config_str(&fs::read_to_string(path)?)
}

/// Dimension defaults overridden by whatever the file sets.
pub fn build_train_config(
    file: &ConfigFile,
    problem: &ProblemSpec,
    seed: u64,
) -> Result<TrainConfig, ConfigError> {
    let mut config = TrainConfig::defaults(problem, seed);

    if let Some(act) = file.get("network", "activation") {
        if act != "tanh" {
            return Err(ConfigError::BadActivation(act.to_string()));
        }
    }
    let width = file
        .parse_typed::<usize>("network", "width", "positive integer")?
        .unwrap_or(config.solution_arch.width);
    let depth = file
        .parse_typed::<usize>("network", "depth", "positive integer")?
        .unwrap_or(config.solution_arch.depth);
    let arch = Architecture::drr(problem.dim(), depth, width);
    config.solution_arch = arch;
    config.test_arch = arch;
    config.lift_arch = arch;

    macro_rules! take {
        ($field:expr, $sec:literal, $key:literal, $ty:ty, $wanted:literal) => {
            if let Some(v) = file.parse_typed::<$ty>($sec, $key, $wanted)? {
                $field = v;
            }
        };
    }
    take!(config.n_interior, "training", "n_interior", usize, "positive integer");
    take!(config.n_boundary, "training", "n_boundary", usize, "positive integer");
    take!(config.epochs, "training", "Epochs", usize, "positive integer");
    take!(config.lr_soln, "training", "lr_soln", f64, "number");
    take!(config.lr_testfn, "training", "lr_testfn", f64, "number");
    take!(config.t_0, "training", "T_0", usize, "positive integer");
    take!(config.t_mult, "training", "T_mult", usize, "positive integer");
    take!(config.weights.w_o1, "weights", "weight_soln_obs", f64, "number");
    take!(config.weights.w_o2, "weights", "weight_testfn_obs", f64, "number");
    take!(config.weights.gap, "weights", "weight_gap_term", f64, "number");
    Ok(config)
}
