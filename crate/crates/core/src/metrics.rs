//! Accuracy, class-count imbalance and per-round curve assembly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pcb::ExperimentResult;

/// Histogram of `labels` over `num_classes` classes.
pub fn class_counts(labels: &[usize], num_classes: usize) -> Result<Vec<usize>> {
    let mut counts = vec![0; num_classes];
    for &y in labels {
        *counts.get_mut(y).ok_or(Error::IndexOutOfRange {
            index: y,
            len: num_classes,
        })? += 1;
    }
    Ok(counts)
}

/// Population variance of the class counts (divisor `K`).
///
/// Computed as `(K·Σc² − (Σc)²) / K²` in integers, so the result is exact up
/// to the final division and independent of count order.
pub fn imbalance_variance(counts: &[usize]) -> f64 {
    if counts.is_empty() {
        return 0.0;
    }
    let k = counts.len() as u128;
    let sum: u128 = counts.iter().map(|&c| c as u128).sum();
    let sum_sq: u128 = counts.iter().map(|&c| (c as u128) * (c as u128)).sum();
    let numer = k * sum_sq - sum * sum;
    numer as f64 / (k * k) as f64
}

pub fn accuracy(predictions: &[usize], truths: &[usize]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: truths.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::EmptyInput);
    }
    let hits = predictions
        .iter()
        .zip(truths)
        .filter(|(p, t)| p == t)
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and population standard deviation. Values are summed in sorted
    /// order so the result does not depend on input order.
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mean = sorted.iter().sum::<f64>() / n;
        let mut sq: Vec<f64> = sorted.iter().map(|v| (v - mean) * (v - mean)).collect();
        sq.sort_by(f64::total_cmp);
        let var = sq.iter().sum::<f64>() / n;
        Ok(Self {
            mean,
            std: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRound {
    pub round: usize,
    pub accuracy: MeanStd,
    pub imbalance: MeanStd,
    pub fallbacks: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAggregate {
    pub seeds: Vec<u64>,
    pub rounds: Vec<AggregateRound>,
}

/// Per-round mean and population std across repeated runs.
pub fn aggregate_seeds(results: &[ExperimentResult]) -> Result<SeedAggregate> {
    let first = results.first().ok_or(Error::EmptyInput)?;
    let num_rounds = first.rounds.len();
    if let Some(bad) = results.iter().find(|r| r.rounds.len() != num_rounds) {
        return Err(Error::ShapeMismatch(format!(
            "runs have {} and {} rounds",
            num_rounds,
            bad.rounds.len()
        )));
    }
    let mut seeds: Vec<u64> = results.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    let rounds = (0..num_rounds)
        .map(|i| {
            let column = |f: &dyn Fn(&crate::pcb::RoundReport) -> f64| -> Vec<f64> {
                results.iter().map(|r| f(&r.rounds[i])).collect()
            };
            Ok(AggregateRound {
                round: first.rounds[i].round,
                accuracy: MeanStd::of(&column(&|r| r.accuracy))?,
                imbalance: MeanStd::of(&column(&|r| r.imbalance))?,
                fallbacks: MeanStd::of(&column(&|r| r.fallbacks as f64))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SeedAggregate { seeds, rounds })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub round: usize,
    pub accuracy: f64,
    pub imbalance: f64,
    pub counts: Vec<usize>,
    pub fallbacks: usize,
    pub wall_time_ms: f64,
}

/// Learning and imbalance curves of one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveTable {
    pub rows: Vec<CurveRow>,
}

pub const CURVE_CSV_HEADER: &str = "round,accuracy,imbalance,fallbacks,counts";

impl CurveTable {
    pub fn from_result(result: &ExperimentResult, wall_times_ms: &[f64]) -> Self {
        let rows = result
            .rounds
            .iter()
            .enumerate()
            .map(|(i, r)| CurveRow {
                round: r.round,
                accuracy: r.accuracy,
                imbalance: r.imbalance,
                counts: r.class_counts.clone(),
                fallbacks: r.fallbacks,
                wall_time_ms: wall_times_ms.get(i).copied().unwrap_or(0.0),
            })
            .collect();
        Self { rows }
    }

    /// CSV with a fixed column order; counts are `;`-joined. Wall time is
    /// left out so the file is reproducible.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CURVE_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let counts: Vec<String> = r.counts.iter().map(usize::to_string).collect();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.round,
                r.accuracy,
                r.imbalance,
                r.fallbacks,
                counts.join(";")
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn counts_examples() {
        assert_eq!(class_counts(&[0, 0, 1], 3).unwrap(), vec![2, 1, 0]);
        assert_eq!(class_counts(&[], 3).unwrap(), vec![0, 0, 0]);
        assert!(class_counts(&[3], 3).is_err());
    }

    #[test]
    fn variance_examples() {
        assert_eq!(imbalance_variance(&[8, 8, 8]), 0.0);
        assert_eq!(imbalance_variance(&[10, 6]), 4.0);
        assert_eq!(imbalance_variance(&[2, 2, 2, 2]), 0.0);
        assert_eq!(imbalance_variance(&[5, 1, 1, 1]), 3.0);
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 2], &[1, 2]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 0], &[1, 2]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 2, 3, 4], &[1, 2, 3, 0]).unwrap(), 0.75);
        assert!(matches!(
            accuracy(&[1], &[1, 2]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(accuracy(&[], &[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn mean_std_examples() {
        let m = MeanStd::of(&[0.6, 0.8]).unwrap();
        assert!((m.mean - 0.7).abs() < 1e-12);
        assert!((m.std - 0.1).abs() < 1e-12);
        assert_eq!(MeanStd::of(&[0.3]).unwrap().std, 0.0);
    }

    proptest! {
        #[test]
        fn variance_permutation_invariant(counts in prop::collection::vec(0usize..50, 1..12), seed in any::<u64>()) {
            let mut shuffled = counts.clone();
            // deterministic rotation + reversal as the permutation
            let rot = (seed as usize) % shuffled.len();
            shuffled.rotate_left(rot);
            shuffled.reverse();
            prop_assert_eq!(imbalance_variance(&counts), imbalance_variance(&shuffled));
            let all_equal = counts.iter().all(|&c| c == counts[0]);
            prop_assert_eq!(imbalance_variance(&counts) == 0.0, all_equal);
        }

        #[test]
        fn accuracy_is_exact_count(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..200)) {
            let (p, t): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let acc = accuracy(&p, &t).unwrap();
            let scaled = acc * p.len() as f64;
            prop_assert!((scaled - scaled.round()).abs() < 1e-9);
        }

        #[test]
        fn mean_std_order_invariant(mut values in prop::collection::vec(-1e3f64..1e3, 1..20)) {
            let a = MeanStd::of(&values).unwrap();
            values.reverse();
            prop_assert_eq!(a, MeanStd::of(&values).unwrap());
        }
    }
}
