//! Flat `key = value` configuration.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! Later assignments override earlier ones, and command-line overrides are
//! applied last. Every recognized key has a default, and the effective
//! configuration (all keys) is echoed into each manifest.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{config_err, CliResult};

/// `(key, default, description)`.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "0", "master seed of every random stream"),
    ("out_dir", "out", "directory receiving all artifacts"),
    ("threads", "0", "worker threads for sweeps (0: all cores)"),
    ("dataset", "synthetic", "CSV path, or `synthetic` for a generated finite task"),
    ("label_columns", "", "comma-separated label column names (empty: label_0 .. label_{l-1})"),
    ("standardize", "true", "z-score every feature column"),
    ("normalize_rows", "false", "scale every feature vector to unit norm (after standardizing)"),
    ("bias", "false", "append a constant feature equal to 1"),
    ("synthetic.support_size", "16", "number of support points of the synthetic task"),
    ("synthetic.n_labels", "3", "label length of the synthetic task"),
    ("synthetic.concentration", "0.5", "Dirichlet concentration of the synthetic conditionals"),
    ("synthetic.feature_dim", "4", "feature dimension of the synthetic task"),
    ("synthetic.features", "gaussian", "gaussian | one-hot"),
    ("synthetic.m", "100", "training-set size drawn from the synthetic task"),
    ("loss", "hamming", "hamming | zero-one"),
    ("kernel", "linear", "linear (the only kernel with an explicit feature map)"),
    ("algorithm", "relax-pb", "ile | relax-pb | mc-pb"),
    ("alpha", "0.5", "prior exponent alpha in (0, 1)"),
    ("t", "0.5", "prior variance fraction t in (0, 1)"),
    ("kappa", "auto", "feature norm bound, or `auto` for the largest training norm"),
    ("parametrization", "wide", "posterior variance: wide | unit | custom:<variance>"),
    ("lambda", "prior", "ridge parameter of ile, or `prior` for the prior's lambda"),
    ("lambda_grid", "", "comma-separated ridge parameters; the one minimizing J-hat is kept"),
    ("schedule", "constant", "constant | decay"),
    ("learning_rate", "1e-3", "constant step size"),
    ("learning_rates", "", "comma-separated step sizes; the one minimizing J-hat is kept"),
    ("nu", "0.75", "decay exponent of gamma_t = (w + t)^-nu"),
    ("decay_w", "0", "offset w of the decay schedule"),
    ("max_iters", "1000", "iteration budget"),
    ("mc_samples", "20", "samples M per stochastic gradient"),
    ("a_hat", "estimate", "control-variate coefficient: `estimate` or a fixed number"),
    ("control_variate", "true", "use the control variate in mc-pb"),
    ("eval_samples", "1000", "Monte Carlo samples when evaluating J-hat"),
    ("posterior", "", "posterior file read by certify"),
    ("delta", "0.1", "confidence parameter of the certificates"),
    ("slack", "2", "slack a > 1 of the classification certificate"),
    ("cert_samples", "1000", "posterior samples used by certify"),
    ("alpha_grid", "0.3,0.4,0.5,0.6,0.7", "sweep values of alpha"),
    ("t_grid", "0.1,0.3,0.5,0.7,0.9", "sweep values of t"),
    ("algorithms", "ile,relax-pb,mc-pb", "algorithms run by sweep"),
    ("experiments", "all", "validate: `all` or comma-separated experiment names"),
    ("validate.relaxation_samples", "10000", "Monte Carlo samples per sigma in relaxation_gap"),
    ("validate.correlation_m", "10,30,100,300,1000", "dataset sizes of the correlation study"),
    ("validate.correlation_samples", "500", "predictors per correlation experiment"),
    ("validate.correlation_experiments", "100", "experiments per dataset size"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

fn is_known(key: &str) -> bool {
    KEYS.iter().any(|(k, _, _)| *k == key)
}

fn split_assignment(line: &str) -> Option<(String, String)> {
    let (k, v) = line.split_once('=')?;
    Some((k.trim().to_string(), v.trim().to_string()))
}

fn parse_bool(key: &str, v: &str) -> CliResult<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(config_err(format!("{key}: expected true or false, got `{v}`"))),
    }
}

impl Config {
    /// Parses a config text; every unknown key is reported at once.
    pub fn parse(text: &str, origin: &str) -> CliResult<Self> {
        let mut cfg = Config::default();
        let mut assignments = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = split_assignment(line)
                .ok_or_else(|| config_err(format!("{origin}:{}: expected `key = value`, got `{line}`", i + 1)))?;
            assignments.push((k, v));
        }
        cfg.apply(assignments)?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> CliResult<()> {
        let pairs = overrides
            .iter()
            .map(|o| split_assignment(o).ok_or_else(|| config_err(format!("override `{o}` is not key=value"))))
            .collect::<CliResult<Vec<_>>>()?;
        self.apply(pairs)
    }

    fn apply(&mut self, pairs: Vec<(String, String)>) -> CliResult<()> {
        let unknown: Vec<&str> = pairs.iter().map(|(k, _)| k.as_str()).filter(|k| !is_known(k)).collect();
        if !unknown.is_empty() {
            return Err(config_err(format!("unknown config keys: {}", unknown.join(", "))));
        }
        for (k, v) in pairs {
            self.values.insert(k, v);
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> CliResult<()> {
        self.apply(vec![(key.to_string(), value.into())])
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("config key `{key}` is not registered"))
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.get(key);
        v.parse().map_err(|e| config_err(format!("{key}: cannot parse `{v}`: {e}")))
    }

    pub fn f64(&self, key: &str) -> CliResult<f64> {
        self.parsed(key)
    }

    pub fn usize(&self, key: &str) -> CliResult<usize> {
        self.parsed(key)
    }

    pub fn bool(&self, key: &str) -> CliResult<bool> {
        parse_bool(key, self.get(key))
    }

    /// Comma-separated list; empty string gives an empty list.
    pub fn list<T: FromStr>(&self, key: &str) -> CliResult<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| config_err(format!("{key}: cannot parse `{s}`: {e}"))))
            .collect()
    }

    /// All effective values, sorted by key.
    pub fn effective(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    /// The effective configuration as a config file.
    pub fn render(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
