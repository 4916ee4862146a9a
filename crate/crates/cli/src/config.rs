//! Flat `key = value` configuration file.

use std::path::PathBuf;
use std::str::FromStr;

use unlearn_core::fixed::FixedPoint;
use unlearn_core::hashing::HashFunction;
use unlearn_core::proofsys::Backend;
use unlearn_core::protocol::ProtocolConfig;
use unlearn_core::training::{ModelKind, TrainConfig};
use unlearn_core::ScaleConfig;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("bad value for `{key}`: {msg}")]
    Value { key: String, msg: String },
    #[error("`arity` is required when no dataset is configured")]
    MissingArity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub model: ModelKind,
    pub arity: Option<usize>,
    pub epochs: usize,
    pub learning_rate: String,
    pub gamma: u64,
    pub range_bits: u32,
    pub capacity: usize,
    pub unlearnt_capacity: Option<usize>,
    pub add_capacity: Option<usize>,
    pub backend: Backend,
    pub state_dir: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    /// Share of rows used for training.
    pub split: f64,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            model: ModelKind::LinearRegression,
            arity: None,
            epochs: 1,
            learning_rate: "0.1".into(),
            gamma: 100_000,
            range_bits: 48,
            capacity: 4,
            unlearnt_capacity: None,
            add_capacity: None,
            backend: Backend::WitnessCheck,
            state_dir: None,
            dataset: None,
            split: 0.8,
        }
    }
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.into(),
        msg: e.to_string(),
    })
}

impl CliConfig {
    /// Parses the file format. `#` starts a comment; blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = CliConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: n + 1 })?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "model" => c.model = value(k, v)?,
                "arity" => c.arity = Some(value(k, v)?),
                "epochs" => c.epochs = value(k, v)?,
                "learning_rate" => c.learning_rate = v.to_string(),
                "gamma" => c.gamma = value(k, v)?,
                "range_bits" => c.range_bits = value(k, v)?,
                "capacity" => c.capacity = value(k, v)?,
                "unlearnt_capacity" => c.unlearnt_capacity = Some(value(k, v)?),
                "add_capacity" => c.add_capacity = Some(value(k, v)?),
                "backend" => c.backend = value(k, v)?,
                "state_dir" => c.state_dir = Some(v.into()),
                "dataset" => c.dataset = Some(v.into()),
                "split" => c.split = value(k, v)?,
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line: n + 1,
                        key: k.into(),
                    })
                }
            }
        }
        if !(c.split > 0.0 && c.split < 1.0) {
            return Err(ConfigError::Value {
                key: "split".into(),
                msg: format!("{} is not in (0, 1)", c.split),
            });
        }
        Ok(c)
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "model = {}\nepochs = {}\nlearning_rate = {}\ngamma = {}\nrange_bits = {}\ncapacity = {}\nbackend = {}\nsplit = {}\n",
            self.model, self.epochs, self.learning_rate, self.gamma, self.range_bits, self.capacity, self.backend, self.split
        );
        if let Some(a) = self.arity {
            s += &format!("arity = {a}\n");
        }
        if let Some(u) = self.unlearnt_capacity {
            s += &format!("unlearnt_capacity = {u}\n");
        }
        if let Some(u) = self.add_capacity {
            s += &format!("add_capacity = {u}\n");
        }
        if let Some(d) = &self.dataset {
            s += &format!("dataset = {}\n", d.display());
        }
        s
    }

    pub fn protocol_config(&self) -> Result<ProtocolConfig, ConfigError> {
        let arity = self.arity.ok_or(ConfigError::MissingArity)?;
        let bad = |key: &str, e: &dyn std::fmt::Display| ConfigError::Value {
            key: key.into(),
            msg: e.to_string(),
        };
        let scale = ScaleConfig::new(self.gamma, self.range_bits).map_err(|e| bad("gamma", &e))?;
        let mut train = TrainConfig::new(self.model, arity, scale.clone()).map_err(|e| bad("model", &e))?;
        train.epochs = self.epochs;
        train.learning_rate =
            FixedPoint::from_decimal_str(&self.learning_rate, &scale).map_err(|e| bad("learning_rate", &e))?;
        let unlearnt = self.unlearnt_capacity.unwrap_or(self.capacity);
        let cfg = ProtocolConfig {
            train,
            hash: HashFunction::PoseidonBn254,
            backend: self.backend,
            data_capacity: self.capacity,
            unlearnt_capacity: unlearnt,
            add_capacity: self.add_capacity.unwrap_or(unlearnt),
        };
        cfg.validate().map_err(|e| bad("capacity", &e))?;
        Ok(cfg)
    }
}
