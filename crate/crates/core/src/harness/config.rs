//! Flat JSON experiment configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::channel::ChannelParams;
use crate::geometry::GeometryConfig;
use crate::learning::{DatasetSource, ModelKind, PartitionMode, TrainConfig};
use crate::orchestrator::{make_schedule, SinrSchedule};
use crate::trust::TrustConfig;

/// Keys without a default.
pub const REQUIRED_KEYS: &[&str] = &["trust_window"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Synthetic,
    Mnist,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKind {
    Iid,
    Dirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    Logistic,
    Mlp,
}

/// Where co-channel interferers come from when drawing a round's SINR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterferenceModel {
    /// Interferers are the users of the generated topology; only fading is redrawn.
    Static,
    /// A fresh interferer field is drawn for every upload.
    Resampled,
}

/// Divisor of the aggregation sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalize {
    /// All participants of the round.
    Participants,
    /// Only uploads that were decoded.
    Received,
}

/// Every knob of one experiment. Serializes to the flat key-value document
/// accepted by [`parse_config`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub threads: usize,

    pub lambda_per_km2: f64,
    pub area_side_m: f64,
    pub n_clients: usize,
    pub n_rb: usize,
    pub rb_activity: f64,

    pub tx_power_dbm: f64,
    pub noise_dbm: f64,
    pub path_loss_exp: f64,
    pub interference_model: InterferenceModel,
    pub field_radius_m: f64,
    pub debias_floor: f64,
    pub normalize: Normalize,

    pub trust_alpha: f64,
    pub trust_beta: f64,
    pub rho: f64,
    pub kappa: f64,
    pub trust_window: usize,

    pub learning_rate: f64,
    pub momentum: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub model: ModelChoice,
    pub hidden_units: usize,

    pub sinr_start_db: f64,
    pub sinr_end_db: f64,
    pub sinr_step_db: f64,
    pub rounds: usize,

    pub dataset: DatasetKind,
    pub mnist_dir: PathBuf,
    pub synthetic_samples: usize,
    pub synthetic_features: usize,
    pub synthetic_classes: usize,
    pub synthetic_separation: f64,
    pub validation_size: usize,
    pub partition: PartitionKind,
    pub dirichlet_alpha: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs"),
            threads: 0,
            lambda_per_km2: 50.0,
            area_side_m: 10_000.0,
            n_clients: 30,
            n_rb: 30,
            rb_activity: 1.0,
            tx_power_dbm: 10.0,
            noise_dbm: -110.0,
            path_loss_exp: 4.0,
            interference_model: InterferenceModel::Static,
            field_radius_m: 4_000.0,
            debias_floor: crate::channel::DEFAULT_DEBIAS_FLOOR,
            normalize: Normalize::Participants,
            trust_alpha: 3.0,
            trust_beta: 1.0,
            rho: 0.9,
            kappa: 0.3,
            trust_window: 5,
            learning_rate: 0.01,
            momentum: 0.5,
            local_epochs: 1,
            batch_size: 32,
            model: ModelChoice::Logistic,
            hidden_units: 64,
            sinr_start_db: 10.0,
            sinr_end_db: 0.0,
            sinr_step_db: 0.25,
            rounds: 150,
            dataset: DatasetKind::Synthetic,
            mnist_dir: PathBuf::from("data/mnist"),
            synthetic_samples: 6_000,
            synthetic_features: 20,
            synthetic_classes: 10,
            synthetic_separation: 1.0,
            validation_size: 1_000,
            partition: PartitionKind::Dirichlet,
            dirichlet_alpha: 0.5,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Syntax(String),
    #[error("config must be a flat JSON object")]
    NotAnObject,
    #[error("unknown key `{key}`{}", Suggestions(.suggestions))]
    UnknownKey {
        key: String,
        suggestions: Vec<String>,
    },
    #[error("missing required key `{0}`")]
    MissingKey(String),
    #[error("key `{key}`: {message}")]
    Type { key: String, message: String },
    #[error("{}: {message}", KeyList(.keys))]
    Invalid {
        keys: Vec<&'static str>,
        message: String,
    },
}

struct Suggestions<'a>(&'a [String]);

impl fmt::Display for Suggestions<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return Ok(());
        }
        let quoted: Vec<String> = self.0.iter().map(|s| format!("`{s}`")).collect();
        write!(f, "; did you mean {}?", quoted.join(" or "))
    }
}

struct KeyList<'a>(&'a [&'static str]);

impl fmt::Display for KeyList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let quoted: Vec<String> = self.0.iter().map(|s| format!("`{s}`")).collect();
        write!(f, "invalid {}", quoted.join(" and "))
    }
}

fn invalid(keys: &[&'static str], message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        keys: keys.to_vec(),
        message: message.into(),
    }
}

/// The documented keys, in declaration order.
pub fn known_keys() -> Vec<String> {
    match serde_json::to_value(ExperimentConfig::default()) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => unreachable!("config serializes to an object"),
    }
}

/// Keys close to `unknown`, either as a whole or through one of their
/// underscore-separated words.
pub fn suggest(unknown: &str, known: &[String]) -> Vec<String> {
    let unknown = unknown.to_ascii_lowercase();
    let close = |a: &str, b: &str| {
        let limit = if a.len().min(b.len()) <= 4 { 1 } else { 2 };
        strsim::damerau_levenshtein(a, b) <= limit
    };
    let mut hits: Vec<(f64, String)> = known
        .iter()
        .filter(|k| close(&unknown, k) || k.split('_').any(|w| w.len() >= 3 && close(&unknown, w)))
        .map(|k| (strsim::jaro_winkler(&unknown, k), k.clone()))
        .collect();
    hits.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    hits.into_iter().map(|(_, k)| k).collect()
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

/// Parses a flat JSON object. Keys absent from the document take their
/// defaults, except for [`REQUIRED_KEYS`].
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    let Value::Object(user) = doc else {
        return Err(ConfigError::NotAnObject);
    };
    let known = known_keys();
    for key in user.keys() {
        if !known.contains(key) {
            return Err(ConfigError::UnknownKey {
                key: key.clone(),
                suggestions: suggest(key, &known),
            });
        }
    }
    for &req in REQUIRED_KEYS {
        if !user.contains_key(req) {
            return Err(ConfigError::MissingKey(req.to_string()));
        }
    }
    let Value::Object(defaults) =
        serde_json::to_value(ExperimentConfig::default()).expect("serializable")
    else {
        unreachable!()
    };
    // Try each key against the defaults on its own so a type error names it.
    for (key, value) in &user {
        if matches!(value, Value::Object(_) | Value::Array(_)) {
            return Err(ConfigError::Type {
                key: key.clone(),
                message: format!("expected a scalar, found {}", type_name(value)),
            });
        }
        let mut probe: Map<String, Value> = defaults.clone();
        probe.insert(key.clone(), value.clone());
        if let Err(e) = serde_json::from_value::<ExperimentConfig>(Value::Object(probe)) {
            return Err(ConfigError::Type {
                key: key.clone(),
                message: e.to_string(),
            });
        }
    }
    let mut merged = defaults;
    merged.extend(user);
    let cfg: ExperimentConfig = serde_json::from_value(Value::Object(merged))
        .map_err(|e| ConfigError::Syntax(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text)
}

impl ExperimentConfig {
    /// Pretty-printed flat JSON document, keys in declaration order.
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    /// The config as an ordered key-value map.
    pub fn to_flat_map(&self) -> BTreeMap<String, Value> {
        match serde_json::to_value(self).expect("serializable") {
            Value::Object(m) => m.into_iter().collect(),
            _ => unreachable!(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(&[key], format!("must be positive, got {v}")))
            }
        };
        let finite = |key: &'static str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(invalid(&[key], format!("must be finite, got {v}")))
            }
        };
        let at_least_one = |key: &'static str, v: usize| {
            if v >= 1 {
                Ok(())
            } else {
                Err(invalid(&[key], "must be at least 1"))
            }
        };
        positive("lambda_per_km2", self.lambda_per_km2)?;
        positive("area_side_m", self.area_side_m)?;
        at_least_one("n_clients", self.n_clients)?;
        at_least_one("n_rb", self.n_rb)?;
        if self.n_clients > self.n_rb {
            return Err(invalid(
                &["n_clients", "n_rb"],
                format!(
                    "{} clients do not fit on {} resource blocks",
                    self.n_clients, self.n_rb
                ),
            ));
        }
        if !(0.0..=1.0).contains(&self.rb_activity) {
            return Err(invalid(&["rb_activity"], "must lie in [0, 1]"));
        }
        finite("tx_power_dbm", self.tx_power_dbm)?;
        finite("noise_dbm", self.noise_dbm)?;
        if !(self.path_loss_exp > 2.0 && self.path_loss_exp.is_finite()) {
            return Err(invalid(
                &["path_loss_exp"],
                format!("must exceed 2, got {}", self.path_loss_exp),
            ));
        }
        positive("field_radius_m", self.field_radius_m)?;
        if !(self.debias_floor > 0.0 && self.debias_floor <= 1.0) {
            return Err(invalid(&["debias_floor"], "must lie in (0, 1]"));
        }
        positive("trust_alpha", self.trust_alpha)?;
        positive("trust_beta", self.trust_beta)?;
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(invalid(&["rho"], "must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.kappa) {
            return Err(invalid(&["kappa"], "must lie in [0, 1)"));
        }
        if self.kappa >= self.rho {
            return Err(invalid(
                &["kappa", "rho"],
                format!(
                    "kappa ({}) must be smaller than rho ({})",
                    self.kappa, self.rho
                ),
            ));
        }
        at_least_one("trust_window", self.trust_window)?;
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid(&["learning_rate"], "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(invalid(&["momentum"], "must lie in [0, 1)"));
        }
        at_least_one("local_epochs", self.local_epochs)?;
        at_least_one("batch_size", self.batch_size)?;
        if self.model == ModelChoice::Mlp {
            at_least_one("hidden_units", self.hidden_units)?;
        }
        finite("sinr_start_db", self.sinr_start_db)?;
        finite("sinr_end_db", self.sinr_end_db)?;
        if self.sinr_start_db < self.sinr_end_db {
            return Err(invalid(
                &["sinr_start_db", "sinr_end_db"],
                "the schedule must not increase",
            ));
        }
        positive("sinr_step_db", self.sinr_step_db)?;
        at_least_one("rounds", self.rounds)?;
        at_least_one("validation_size", self.validation_size)?;
        if self.dataset == DatasetKind::Synthetic {
            at_least_one("synthetic_features", self.synthetic_features)?;
            if self.synthetic_classes < 2 {
                return Err(invalid(&["synthetic_classes"], "must be at least 2"));
            }
            if self.synthetic_samples < self.n_clients {
                return Err(invalid(
                    &["synthetic_samples", "n_clients"],
                    "every client needs at least one example",
                ));
            }
            if !(self.synthetic_separation >= 0.0 && self.synthetic_separation.is_finite()) {
                return Err(invalid(&["synthetic_separation"], "must be non-negative"));
            }
        }
        if self.partition == PartitionKind::Dirichlet {
            positive("dirichlet_alpha", self.dirichlet_alpha)?;
        }
        Ok(())
    }

    pub fn geometry(&self) -> GeometryConfig {
        GeometryConfig {
            bs_density: self.lambda_per_km2 * 1e-6,
            area_side: self.area_side_m,
            n_users_per_test_cell: self.n_clients,
            n_rb: self.n_rb,
            rb_activity: self.rb_activity,
            seed: self.seed,
        }
    }

    pub fn channel(&self) -> Result<ChannelParams, crate::channel::ChannelError> {
        ChannelParams::from_dbm(
            self.tx_power_dbm,
            self.noise_dbm,
            self.path_loss_exp,
            self.lambda_per_km2 * 1e-6,
        )
    }

    pub fn trust(&self) -> TrustConfig {
        TrustConfig {
            alpha: self.trust_alpha,
            beta: self.trust_beta,
            rho: self.rho,
            kappa: self.kappa,
            seed: self.seed,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            local_epochs: self.local_epochs,
            batch_size: self.batch_size,
        }
    }

    pub fn schedule(&self) -> Result<SinrSchedule, crate::orchestrator::OrchestratorError> {
        make_schedule(
            self.sinr_start_db,
            self.sinr_end_db,
            self.sinr_step_db,
            self.rounds,
        )
    }

    pub fn dataset_source(&self) -> DatasetSource {
        match self.dataset {
            DatasetKind::Synthetic => DatasetSource::Synthetic {
                samples: self.synthetic_samples,
                features: self.synthetic_features,
                classes: self.synthetic_classes,
                separation: self.synthetic_separation,
            },
            DatasetKind::Mnist => DatasetSource::Mnist {
                dir: self.mnist_dir.clone(),
            },
        }
    }

    pub fn partition_mode(&self) -> PartitionMode {
        match self.partition {
            PartitionKind::Iid => PartitionMode::Iid,
            PartitionKind::Dirichlet => PartitionMode::Dirichlet {
                alpha: self.dirichlet_alpha,
            },
        }
    }

    pub fn model_kind(&self) -> ModelKind {
        match self.model {
            ModelChoice::Logistic => ModelKind::Logistic,
            ModelChoice::Mlp => ModelKind::Mlp {
                hidden: self.hidden_units,
            },
        }
    }
}
