//! Flat configuration keys shared by the JSON file and the command line.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};

/// Measurement readout: a shot count or the infinite-shot limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shots {
    Exact,
    Count(usize),
}

impl FromStr for Shots {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("exact") {
            return Ok(Self::Exact);
        }
        s.parse()
            .map(Self::Count)
            .map_err(|_| format!("shots must be a positive integer or \"exact\", got {s:?}"))
    }
}

impl fmt::Display for Shots {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Exact => f.write_str("exact"),
            Self::Count(n) => write!(f, "{n}"),
        }
    }
}

impl Serialize for Shots {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Exact => s.serialize_str("exact"),
            Self::Count(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Shots {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(usize),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(n) => Ok(Self::Count(n)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// A scalar or a list in JSON.
fn one_or_many<'de, D, T>(d: D) -> Result<Option<Vec<T>>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(Some(match Raw::deserialize(d)? {
        Raw::One(v) => vec![v],
        Raw::Many(v) => v,
    }))
}

/// Every key is optional; unset keys fall back to the subcommand defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub env: Option<String>,
    pub size: Option<usize>,
    pub layout: Option<PathBuf>,
    #[serde(default, deserialize_with = "one_or_many")]
    pub beta: Option<Vec<f64>>,
    #[serde(default, deserialize_with = "one_or_many")]
    pub gamma: Option<Vec<f64>>,
    #[serde(default, deserialize_with = "one_or_many")]
    pub depth: Option<Vec<usize>>,
    pub lr: Option<f64>,
    #[serde(default, deserialize_with = "one_or_many")]
    pub loss_threshold: Option<Vec<f64>>,
    pub shots: Option<Shots>,
    pub warm_start: Option<bool>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub plot: Option<bool>,
    pub full: Option<bool>,
    pub exact: Option<bool>,
    pub max_iterations: Option<usize>,
    pub max_steps: Option<usize>,
    #[serde(default, deserialize_with = "one_or_many")]
    pub qubits: Option<Vec<usize>>,
    pub tolerance: Option<f64>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($field:ident),*) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field; } )*
    };
}

impl CliConfig {
    /// Keys set in `top` replace those in `self`.
    pub fn overlay(mut self, top: CliConfig) -> Self {
        overlay!(self, top; env, size, layout, beta, gamma, depth, lr, loss_threshold, shots,
            warm_start, trials, seed, out, plot, full, exact, max_iterations, max_steps,
            qubits, tolerance);
        self
    }
}

pub fn parse_config(text: &str) -> Result<CliConfig, String> {
    serde_json::from_str(text).map_err(|e| e.to_string())
}

pub fn load_config(path: &Path) -> Result<CliConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    parse_config(&text).map_err(|e| format!("config {}: {e}", path.display()))
}
