//! The JSON experiment configuration.
//!
//! ```json
//! {
//!   "strategy": "entropy", "use_pcb": true, "aggregation": "none",
//!   "gamma": 0.1, "rounds": 8, "budget": "auto", "tau": 0.01,
//!   "train": {"learning_rate": 0.002, "epochs": 200, "init_std": 0.02,
//!             "batch": "full", "schedule": "cosine"},
//!   "seed": 0, "train_data": "data/train", "test_data": "data/test",
//!   "out": "runs/entropy-pcb"
//! }
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::{Aggregation, BatchMode, LrSchedule, TrainConfig, DEFAULT_TEMPERATURE};
use crate::strategies::StrategyKind;

/// Labels bought per round: a fixed number or `"auto"` (one per class).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "Value", into = "Value")]
pub enum Budget {
    #[default]
    Auto,
    Fixed(usize),
}

impl Budget {
    pub fn resolve(self, num_classes: usize) -> usize {
        match self {
            Budget::Auto => num_classes,
            Budget::Fixed(n) => n,
        }
    }
}

impl TryFrom<Value> for Budget {
    type Error = String;

    fn try_from(v: Value) -> std::result::Result<Self, String> {
        match &v {
            Value::String(s) if s == "auto" => Ok(Budget::Auto),
            Value::Number(n) => n
                .as_u64()
                .map(|n| Budget::Fixed(n as usize))
                .ok_or_else(|| format!("budget must be a non-negative integer, got {n}")),
            _ => Err(format!("budget must be \"auto\" or an integer, got {v}")),
        }
    }
}

impl From<Budget> for Value {
    fn from(b: Budget) -> Value {
        match b {
            Budget::Auto => Value::String("auto".into()),
            Budget::Fixed(n) => Value::from(n as u64),
        }
    }
}

/// `"full"` or a minibatch size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "Value", into = "Value")]
pub enum BatchSetting {
    #[default]
    Full,
    Mini(usize),
}

impl TryFrom<Value> for BatchSetting {
    type Error = String;

    fn try_from(v: Value) -> std::result::Result<Self, String> {
        match &v {
            Value::String(s) if s == "full" => Ok(BatchSetting::Full),
            Value::Number(n) => n
                .as_u64()
                .map(|n| BatchSetting::Mini(n as usize))
                .ok_or_else(|| format!("batch must be a non-negative integer, got {n}")),
            _ => Err(format!("batch must be \"full\" or an integer, got {v}")),
        }
    }
}

impl From<BatchSetting> for Value {
    fn from(b: BatchSetting) -> Value {
        match b {
            BatchSetting::Full => Value::String("full".into()),
            BatchSetting::Mini(n) => Value::from(n as u64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleSetting {
    #[default]
    Cosine,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    #[serde(default)]
    pub batch: BatchSetting,
    #[serde(default)]
    pub schedule: ScheduleSetting,
}

fn default_lr() -> f64 {
    0.002
}
fn default_epochs() -> usize {
    200
}
fn default_init_std() -> f64 {
    0.02
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            learning_rate: default_lr(),
            epochs: default_epochs(),
            init_std: default_init_std(),
            batch: BatchSetting::Full,
            schedule: ScheduleSetting::Cosine,
        }
    }
}

impl TrainSettings {
    pub fn to_train_config(self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            init_std: self.init_std,
            batch_mode: match self.batch {
                BatchSetting::Full => BatchMode::FullBatch,
                BatchSetting::Mini(n) => BatchMode::MiniBatch(n),
            },
            lr_schedule: match self.schedule {
                ScheduleSetting::Cosine => LrSchedule::CosineAnnealing,
                ScheduleSetting::Constant => LrSchedule::Constant,
            },
            seed,
        }
    }
}

/// How the balance sampler picks among candidates of the chosen class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BalancePick {
    /// Uniformly at random.
    #[default]
    Random,
    /// The candidate ranked highest by the base strategy.
    Score,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub strategy: StrategyKind,
    #[serde(default)]
    pub use_pcb: bool,
    #[serde(default)]
    pub aggregation: Aggregation,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default)]
    pub budget: Budget,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub balance_pick: BalancePick,
    #[serde(default)]
    pub renormalize: bool,
    #[serde(default)]
    pub train_data: PathBuf,
    #[serde(default)]
    pub test_data: PathBuf,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_gamma() -> f64 {
    0.1
}
fn default_rounds() -> usize {
    8
}
fn default_tau() -> f64 {
    DEFAULT_TEMPERATURE
}

impl ExperimentConfig {
    pub fn new(strategy: StrategyKind, use_pcb: bool) -> Self {
        Self {
            strategy,
            use_pcb,
            aggregation: Aggregation::None,
            gamma: default_gamma(),
            rounds: default_rounds(),
            budget: Budget::Auto,
            tau: default_tau(),
            train: TrainSettings::default(),
            seed: 0,
            balance_pick: BalancePick::Random,
            renormalize: false,
            train_data: PathBuf::new(),
            test_data: PathBuf::new(),
            out: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config("gamma must be in (0,1]".into()));
        }
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if self.budget == Budget::Fixed(0) {
            return Err(Error::Config("budget must be at least 1".into()));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::Config("tau must be positive".into()));
        }
        self.train.to_train_config(self.seed).validate()
    }

    /// Short label such as `entropy+pcb(as)`.
    pub fn label(&self) -> String {
        let mut s = self.strategy.to_string();
        if self.use_pcb {
            s.push_str("+pcb");
        }
        if self.aggregation != Aggregation::None {
            s.push_str(&format!("({})", self.aggregation));
        }
        s
    }
}
