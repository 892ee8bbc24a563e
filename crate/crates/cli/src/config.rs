//! Flat `key = value` run configuration.
//!
//! A config file is plain text: one assignment per line, `#` starts a
//! comment, blank lines are skipped, later assignments win. Every key has a
//! documented default (see [`KNOWN_KEYS`]), and resolution follows
//! command-line flag > config file > default, so a config file never
//! overrides an explicit flag.
//!
//! Unknown keys are rejected rather than ignored: a typo like `laerning_rate`
//! should fail loudly, not silently train with the default.

use std::collections::HashMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::CliError;

/// Every accepted config key with its default and a one-line description.
/// An empty default means "derived at run time" (documented per key).
pub const KNOWN_KEYS: &[(&str, &str, &str)] = &[
    // synthetic data generation
    ("sequences", "24", "number of sequences gen-data writes"),
    ("frames", "500", "frames per generated sequence"),
    ("joints", "4", "joints per skeleton (3 channels each)"),
    ("fps", "25", "sampling rate of generated data, frames per second"),
    ("harmonics", "2", "sinusoids summed per channel"),
    ("amp_min", "0.2", "lower bound of harmonic amplitudes, radians"),
    ("amp_max", "0.8", "upper bound of harmonic amplitudes, radians"),
    ("freq_min", "0.15", "lower bound of harmonic frequencies, Hz"),
    ("freq_max", "0.45", "upper bound of harmonic frequencies, Hz"),
    ("phase_min", "0", "lower bound of harmonic phases, radians"),
    ("phase_max", "6.283185307179586", "upper bound of harmonic phases, radians"),
    ("noise_std", "0.005", "standard deviation of additive Gaussian noise"),
    ("drift_max", "0.05", "max |slope| of linear drift on odd sequences, rad/s"),
    // model shape
    ("hidden", "64", "recurrent state width"),
    ("pos_dim", "", "position-embedding width (default: the pose dimension)"),
    ("obs", "50", "encoder length n: observed frames per clip"),
    ("pred", "25", "decoder length m: predicted frames per clip"),
    ("variant", "pvred", "architecture: pvred or red"),
    ("loss", "quat_l1", "training loss: quat_l1 or euler_mse"),
    ("velocity", "true", "feed velocity channels to the cell"),
    ("position", "true", "feed position embeddings to the cell"),
    ("qt", "true", "apply the quaternion transformation before the loss"),
    ("bias", "true", "learn bias vectors in the gates and output head"),
    ("dropout", "0.2", "dropout rate on the decoder hidden state"),
    // training
    ("iters", "2000", "training iterations (parameter updates)"),
    ("batch", "16", "clips per training iteration"),
    ("lr", "0.0001", "Adam learning rate, constant"),
    ("clip_norm", "5", "global gradient-norm ceiling"),
    ("seed", "7", "seed for whichever command consumes it"),
    // evaluation
    ("horizons", "80,160,320,400,560,1000", "error-report horizons, ms"),
    ("clips", "8", "evaluation clips sampled across the test set"),
    ("window", "4", "moving-average baseline window, frames"),
    ("mask", "", "comma-separated 0/1 per channel; empty scores all channels"),
    // paths (defaults are per command; see each command's --help)
    ("data", "", "dataset directory"),
    ("model", "", "model file path"),
    ("input", "", "input sequence file"),
    ("out", "", "output file or directory"),
];

fn default_of(key: &str) -> &'static str {
    KNOWN_KEYS
        .iter()
        .find(|(k, _, _)| *k == key)
        .map(|(_, d, _)| *d)
        .unwrap_or_else(|| panic!("unregistered config key `{key}`"))
}

/// Key-value pairs loaded from a config file (empty when no file was given).
#[derive(Debug, Default)]
pub struct FileConfig {
    map: HashMap<String, String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| {
            CliError::Runtime(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut map = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "{}:{}: expected `key = value`, got `{line}`",
                    path.display(),
                    idx + 1
                )));
            };
            let key = key.trim().to_string();
            if !KNOWN_KEYS.iter().any(|(k, _, _)| *k == key) {
                return Err(CliError::Usage(format!(
                    "{}:{}: unknown config key `{key}`",
                    path.display(),
                    idx + 1
                )));
            }
            map.insert(key, value.trim().to_string());
        }
        Ok(FileConfig { map })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    /// Flag > config > registered default, parsed as `T`.
    pub fn get<T>(&self, flag: Option<T>, key: &str) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        let text = self.raw(key).unwrap_or_else(|| default_of(key));
        text.parse().map_err(|e| {
            CliError::Usage(format!("config key `{key}`: cannot parse `{text}`: {e}"))
        })
    }

    /// Booleans are spelled `true`/`false` exactly.
    pub fn get_bool(&self, flag: Option<bool>, key: &str) -> Result<bool, CliError> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.raw(key).unwrap_or_else(|| default_of(key)) {
            "true" => Ok(true),
            "false" => Ok(false),
            other => Err(CliError::Usage(format!(
                "config key `{key}`: expected true or false, got `{other}`"
            ))),
        }
    }

    /// Paths use a per-command fallback instead of the registry default.
    pub fn get_path(&self, flag: Option<PathBuf>, key: &str, fallback: &str) -> PathBuf {
        flag.unwrap_or_else(|| {
            self.raw(key)
                .filter(|s| !s.is_empty())
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(fallback))
        })
    }

    /// The string value behind `key` (flag wins), defaulting per registry.
    pub fn get_str(&self, flag: Option<String>, key: &str) -> String {
        flag.unwrap_or_else(|| self.raw(key).unwrap_or_else(|| default_of(key)).to_string())
    }
}

/// `80,160,320` → `[80, 160, 320]`.
pub fn parse_horizons(text: &str) -> Result<Vec<u64>, CliError> {
    let list: Result<Vec<u64>, _> = text.split(',').map(|t| t.trim().parse()).collect();
    match list {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(CliError::Usage(format!(
            "horizons must be a comma-separated list of positive integers, got `{text}`"
        ))),
    }
}

/// `1,1,0` → `[true, true, false]`; empty means no mask.
pub fn parse_mask(text: &str) -> Result<Option<Vec<bool>>, CliError> {
    if text.is_empty() {
        return Ok(None);
    }
    text.split(',')
        .map(|t| match t.trim() {
            "1" => Ok(true),
            "0" => Ok(false),
            other => Err(CliError::Usage(format!(
                "mask entries must be 0 or 1, got `{other}`"
            ))),
        })
        .collect::<Result<Vec<bool>, _>>()
        .map(Some)
}
