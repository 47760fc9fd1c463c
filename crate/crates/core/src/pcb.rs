//! Pseudo-class-balanced active learning.
//!
//! Each round after the first asks the base strategy for an informative subset
//! of `⌈γ·|unlabeled|⌉` items, pseudo-labels it with the current model and
//! fills the query set class by class, always topping up the class with the
//! fewest (estimated) labels. The oracle then labels the query set and the
//! model is retrained from scratch on everything labeled so far.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::Rng as _;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::config::{BalancePick, ExperimentConfig};
use crate::dataset::{ClassTextBank, EmbeddingDataset};
use crate::error::{Error, Result};
use crate::linalg::{argmax, Matrix};
use crate::metrics::{class_counts, imbalance_variance};
use crate::model::{evaluate, train, Aggregation, PromptModel};
use crate::rng::{derive_seed, Rng};
use crate::strategies::{select, select_random, SelectionContext};

/// Ground-truth label source. Only the experiment loop holds one.
#[derive(Debug, Clone)]
pub struct Oracle {
    labels: Vec<usize>,
}

impl Oracle {
    pub fn new(labels: Vec<usize>) -> Self {
        Self { labels }
    }

    pub fn from_dataset(ds: &EmbeddingDataset) -> Self {
        Self::new(ds.labels().to_vec())
    }

    pub fn label(&self, index: usize) -> Result<usize> {
        self.labels
            .get(index)
            .copied()
            .ok_or(Error::IndexOutOfRange {
                index,
                len: self.labels.len(),
            })
    }
}

/// `(index, true label)` for every requested index.
pub fn oracle_label(oracle: &Oracle, indices: &[usize]) -> Result<Vec<(usize, usize)>> {
    indices.iter().map(|&i| Ok((i, oracle.label(i)?))).collect()
}

/// `(index, argmax class)` for every requested item, lowest class on ties.
pub fn pseudo_label(
    model: &PromptModel,
    bank: &ClassTextBank,
    items: &Matrix,
    indices: &[usize],
) -> Result<Vec<(usize, usize)>> {
    let probas = model.classifier(bank)?.predict_rows(items, indices)?;
    Ok(indices
        .iter()
        .zip(&probas)
        .map(|(&i, p)| (i, argmax(p)))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalanceOutcome {
    pub picks: Vec<usize>,
    /// Estimated counts after adding the pseudo-labels of `picks`.
    pub counts: Vec<usize>,
    /// Picks made for a class above the current minimum because no minimal
    /// class had candidates left.
    pub fallbacks: usize,
}

/// Builds a query set of `n` items by repeatedly taking a candidate from the
/// class with the smallest estimated count (lowest class on ties), skipping
/// classes that have run out of candidates. Candidates are drawn without
/// replacement.
pub fn balance_sampler(
    estimated_counts: &[usize],
    pseudo_pool: &[(usize, usize)],
    n: usize,
    pick: BalancePick,
    rng: &mut Rng,
) -> Result<BalanceOutcome> {
    if n > pseudo_pool.len() {
        return Err(Error::BudgetExceedsPool {
            budget: n,
            pool: pseudo_pool.len(),
        });
    }
    let k = estimated_counts.len();
    let mut candidates: Vec<Vec<usize>> = vec![Vec::new(); k];
    for &(i, y) in pseudo_pool {
        candidates
            .get_mut(y)
            .ok_or(Error::IndexOutOfRange { index: y, len: k })?
            .push(i);
    }
    let mut counts = estimated_counts.to_vec();
    let mut picks = Vec::with_capacity(n);
    let mut fallbacks = 0;
    for _ in 0..n {
        let global_min = counts.iter().copied().min().unwrap_or(0);
        let class = (0..k)
            .filter(|&c| !candidates[c].is_empty())
            .min_by_key(|&c| (counts[c], c))
            .ok_or(Error::BudgetExceedsPool {
                budget: n,
                pool: pseudo_pool.len(),
            })?;
        if counts[class] > global_min {
            fallbacks += 1;
        }
        let bucket = &mut candidates[class];
        let item = match pick {
            BalancePick::Random => {
                let at = rng.random_range(0..bucket.len());
                bucket.remove(at)
            }
            BalancePick::Score => bucket.remove(0),
        };
        picks.push(item);
        counts[class] += 1;
    }
    Ok(BalanceOutcome {
        picks,
        counts,
        fallbacks,
    })
}

/// Labeled / unlabeled partition of the training pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolState {
    /// `(index, true label)` in labeling order.
    pub labeled: Vec<(usize, usize)>,
    pub unlabeled: BTreeSet<usize>,
    /// Class counts of the labeled set (from oracle labels between rounds).
    pub estimated_counts: Vec<usize>,
    /// Completed rounds.
    pub round: usize,
}

impl PoolState {
    pub fn new(pool_size: usize, num_classes: usize) -> Self {
        Self {
            labeled: Vec::new(),
            unlabeled: (0..pool_size).collect(),
            estimated_counts: vec![0; num_classes],
            round: 0,
        }
    }

    pub fn labeled_indices(&self) -> Vec<usize> {
        self.labeled.iter().map(|&(i, _)| i).collect()
    }

    pub fn labeled_classes(&self) -> Vec<usize> {
        self.labeled.iter().map(|&(_, y)| y).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub epochs: usize,
    pub initial: f64,
    #[serde(rename = "final")]
    pub last: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub selected_indices: Vec<usize>,
    /// Pseudo labels of the selected items when the balance sampler ran.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pseudo_labels: Option<Vec<usize>>,
    /// Size of the informative subset handed to the balance sampler.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub informative_subset: Option<usize>,
    pub class_counts: Vec<usize>,
    pub imbalance: f64,
    pub accuracy: f64,
    pub fallbacks: usize,
    pub loss: LossSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub num_classes: usize,
    pub dim: usize,
    pub tau: f64,
    pub aggregation: Aggregation,
    pub residual_norm: f64,
}

impl ModelSummary {
    pub fn of(model: &PromptModel) -> Self {
        Self {
            num_classes: model.num_classes(),
            dim: model.dim(),
            tau: model.temperature(),
            aggregation: model.aggregation(),
            residual_norm: model.residuals().frobenius_norm(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub seed: u64,
    pub budget: usize,
    pub zero_shot_accuracy: f64,
    pub rounds: Vec<RoundReport>,
    pub final_model: ModelSummary,
}

impl ExperimentResult {
    pub fn final_round(&self) -> &RoundReport {
        self.rounds.last().expect("at least one round")
    }
}

/// A finished run: the serializable result plus the trained model and timings.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub result: ExperimentResult,
    pub model: PromptModel,
    pub wall_times_ms: Vec<f64>,
}

/// Stream ids for [`derive_seed`].
const SELECTION_STREAM: u64 = 0;
const TRAIN_STREAM_BASE: u64 = 1_000;

/// An experiment bound to its data.
pub struct Experiment<'a> {
    cfg: &'a ExperimentConfig,
    train: &'a EmbeddingDataset,
    test: &'a EmbeddingDataset,
    bank: &'a ClassTextBank,
    oracle: Oracle,
    budget: usize,
}

impl<'a> Experiment<'a> {
    pub fn new(
        cfg: &'a ExperimentConfig,
        train: &'a EmbeddingDataset,
        test: &'a EmbeddingDataset,
        bank: &'a ClassTextBank,
    ) -> Result<Self> {
        cfg.validate()?;
        for ds in [train, test] {
            if ds.dim() != bank.dim() {
                return Err(Error::DimMismatch {
                    expected: bank.dim(),
                    actual: ds.dim(),
                });
            }
            if ds.num_classes() != bank.num_classes() {
                return Err(Error::InvalidDataset(format!(
                    "dataset has {} classes, description bank has {}",
                    ds.num_classes(),
                    bank.num_classes()
                )));
            }
        }
        if cfg.aggregation == Aggregation::None {
            if let Some((k, &d)) = bank
                .descriptions_per_class()
                .iter()
                .enumerate()
                .find(|(_, &d)| d != 1)
            {
                return Err(Error::AggregationMismatch { class: k, count: d });
            }
        }
        let budget = cfg.budget.resolve(bank.num_classes());
        if train.len() < cfg.rounds * budget {
            return Err(Error::InvalidDataset(format!(
                "{} rounds of {budget} labels need {} training items, dataset has {}",
                cfg.rounds,
                cfg.rounds * budget,
                train.len()
            )));
        }
        Ok(Self {
            cfg,
            train,
            test,
            bank,
            oracle: Oracle::from_dataset(train),
            budget,
        })
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn initial_state(&self) -> PoolState {
        PoolState::new(self.train.len(), self.bank.num_classes())
    }

    pub fn zero_shot_model(&self) -> Result<PromptModel> {
        PromptModel::zeros(self.bank, self.cfg.tau, self.cfg.aggregation)
    }

    /// One select → label → retrain cycle. Updates `state` in place and
    /// returns the retrained model.
    pub fn run_round(
        &self,
        state: &mut PoolState,
        model: &PromptModel,
        rng: &mut Rng,
    ) -> Result<(PromptModel, RoundReport)> {
        let n = self.budget;
        if state.unlabeled.len() < n {
            return Err(Error::BudgetExceedsPool {
                budget: n,
                pool: state.unlabeled.len(),
            });
        }
        let round = state.round + 1;
        let pool: Vec<usize> = state.unlabeled.iter().copied().collect();
        let labeled = state.labeled_indices();
        let ctx = SelectionContext {
            model,
            bank: self.bank,
            items: self.train.items(),
            labeled: &labeled,
        };

        let mut pseudo_labels = None;
        let mut informative_subset = None;
        let mut fallbacks = 0;
        let query = if round == 1 {
            select_random(&pool, n, rng)?
        } else if self.cfg.use_pcb {
            let subset_size = (self.cfg.gamma * pool.len() as f64).ceil() as usize;
            let subset = select(
                self.cfg.strategy,
                &ctx,
                &pool,
                subset_size.min(pool.len()),
                rng,
            )?;
            let pseudo = pseudo_label(model, self.bank, self.train.items(), &subset)?;
            let outcome = balance_sampler(
                &state.estimated_counts,
                &pseudo,
                n,
                self.cfg.balance_pick,
                rng,
            )?;
            let lookup: std::collections::HashMap<usize, usize> = pseudo.into_iter().collect();
            pseudo_labels = Some(outcome.picks.iter().map(|i| lookup[i]).collect());
            informative_subset = Some(subset.len());
            fallbacks = outcome.fallbacks;
            outcome.picks
        } else {
            select(self.cfg.strategy, &ctx, &pool, n, rng)?
        };

        let answered = oracle_label(&self.oracle, &query)?;
        for &(i, _) in &answered {
            state.unlabeled.remove(&i);
        }
        state.labeled.extend(answered);
        state.estimated_counts = class_counts(&state.labeled_classes(), self.bank.num_classes())?;
        state.round = round;

        let train_cfg = self
            .cfg
            .train
            .to_train_config(derive_seed(self.cfg.seed, TRAIN_STREAM_BASE + round as u64));
        let batch: Vec<(&[f64], usize)> = state
            .labeled
            .iter()
            .map(|&(i, y)| (self.train.item(i), y))
            .collect();
        let outcome = train(
            self.bank,
            &batch,
            &train_cfg,
            self.cfg.aggregation,
            self.cfg.tau,
        )?;
        let accuracy = evaluate(&outcome.model, self.bank, self.test)?;

        let report = RoundReport {
            round,
            selected_indices: query,
            pseudo_labels,
            informative_subset,
            class_counts: state.estimated_counts.clone(),
            imbalance: imbalance_variance(&state.estimated_counts),
            accuracy,
            fallbacks,
            loss: LossSummary {
                epochs: train_cfg.epochs,
                initial: outcome.losses.first().copied().unwrap_or(f64::NAN),
                last: outcome.losses.last().copied().unwrap_or(f64::NAN),
            },
        };
        Ok((outcome.model, report))
    }

    pub fn run(&self) -> Result<ExperimentRun> {
        let mut rng = Rng::seed_from_u64(derive_seed(self.cfg.seed, SELECTION_STREAM));
        let mut state = self.initial_state();
        let mut model = self.zero_shot_model()?;
        let zero_shot_accuracy = evaluate(&model, self.bank, self.test)?;
        let mut rounds = Vec::with_capacity(self.cfg.rounds);
        let mut wall_times_ms = Vec::with_capacity(self.cfg.rounds);
        for _ in 0..self.cfg.rounds {
            let started = Instant::now();
            let (next, report) = self.run_round(&mut state, &model, &mut rng)?;
            wall_times_ms.push(started.elapsed().as_secs_f64() * 1e3);
            model = next;
            rounds.push(report);
        }
        Ok(ExperimentRun {
            result: ExperimentResult {
                seed: self.cfg.seed,
                budget: self.budget,
                zero_shot_accuracy,
                rounds,
                final_model: ModelSummary::of(&model),
            },
            model,
            wall_times_ms,
        })
    }
}

/// Runs all rounds of `cfg` on in-memory data.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    train: &EmbeddingDataset,
    test: &EmbeddingDataset,
    bank: &ClassTextBank,
) -> Result<ExperimentRun> {
    Experiment::new(cfg, train, test, bank)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> Rng {
        Rng::seed_from_u64(seed)
    }

    #[test]
    fn balance_hand_trace() {
        let pool: Vec<(usize, usize)> = (0..9).map(|i| (i, i % 3)).collect();
        let out = balance_sampler(&[2, 0, 1], &pool, 3, BalancePick::Random, &mut rng(0)).unwrap();
        assert_eq!(out.counts, vec![2, 2, 2]);
        let classes: Vec<usize> = out.picks.iter().map(|i| i % 3).collect();
        assert_eq!(classes, vec![1, 1, 2]);
        assert_eq!(out.fallbacks, 0);
    }

    #[test]
    fn balance_single_class_pool_falls_back() {
        let pool: Vec<(usize, usize)> = (0..5).map(|i| (i, 0)).collect();
        let out = balance_sampler(&[0, 0, 0], &pool, 4, BalancePick::Random, &mut rng(1)).unwrap();
        assert_eq!(out.counts, vec![4, 0, 0]);
        // the first pick is at the minimum; the other three are fallbacks
        assert_eq!(out.fallbacks, 3);
        let mut picks = out.picks.clone();
        picks.sort_unstable();
        picks.dedup();
        assert_eq!(picks.len(), 4);
    }

    #[test]
    fn balance_score_mode_takes_rank_order() {
        let pool = vec![(7, 1), (3, 0), (9, 1), (1, 0)];
        let out = balance_sampler(&[0, 0], &pool, 4, BalancePick::Score, &mut rng(0)).unwrap();
        assert_eq!(out.picks, vec![3, 7, 1, 9]);
    }

    #[test]
    fn balance_errors() {
        let pool = vec![(0, 0)];
        assert!(matches!(
            balance_sampler(&[0, 0], &pool, 2, BalancePick::Random, &mut rng(0)),
            Err(Error::BudgetExceedsPool { .. })
        ));
        assert!(matches!(
            balance_sampler(&[0, 0], &[(0, 5)], 1, BalancePick::Random, &mut rng(0)),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn oracle_is_pure() {
        let oracle = Oracle::new(vec![2, 0, 1]);
        assert_eq!(
            oracle_label(&oracle, &[2, 2]).unwrap(),
            vec![(2, 1), (2, 1)]
        );
        assert!(oracle.label(3).is_err());
    }
}
