//! Active prompt learning over frozen vision-language embeddings with
//! pseudo-class-balanced querying.
//!
//! The crate works entirely in embedding space: image embeddings and per-class
//! description embeddings are loaded from `pcbemb/1` directories (or generated
//! synthetically), classified by a temperature-scaled cosine softmax and
//! adapted with per-class residual vectors trained by SGD. Query strategies
//! (random, entropy, coreset, BADGE) can be wrapped by the pseudo-class
//! balance sampler, and each round reports accuracy and class-count imbalance.

pub mod config;
pub mod dataset;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod pcb;
pub mod persist;
pub mod rng;
pub mod strategies;

pub use config::{BalancePick, Budget, ExperimentConfig, TrainSettings};
pub use dataset::{
    generate_synthetic, load_dataset, load_dataset_with, save_dataset, ClassSizes, ClassTextBank,
    DatasetManifest, EmbeddingDataset, LoadOptions, SynthSpec, SyntheticData,
};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use metrics::{
    accuracy, aggregate_seeds, class_counts, imbalance_variance, CurveTable, SeedAggregate,
};
pub use model::{
    cross_entropy, evaluate, train, zero_shot_proba, Aggregation, PromptModel, TrainConfig,
    TrainOutcome,
};
pub use pcb::{
    balance_sampler, oracle_label, pseudo_label, run_experiment, Experiment, ExperimentResult,
    ExperimentRun, Oracle, PoolState, RoundReport,
};
pub use persist::{load_model, save_model};
pub use rng::Rng;
pub use strategies::{
    entropy, gradient_embedding, kmeanspp_select, select_badge, select_coreset, select_entropy,
    select_random, GradientEmbedding, StrategyKind,
};
