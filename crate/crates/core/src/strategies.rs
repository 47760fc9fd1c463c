//! Query strategies: random, entropy, k-center-greedy coreset and BADGE.
//!
//! Every selector returns `n` distinct indices taken from `pool`. Ties are
//! always broken toward the lowest dataset index, and parallel scoring never
//! changes the result.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ClassTextBank;
use crate::error::{Error, Result};
use crate::linalg::{argmax, dot, squared_distance, Matrix};
use crate::model::PromptModel;
use crate::rng::Rng;

/// Tolerance on the total mass of a probability vector.
pub const DISTRIBUTION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Random,
    Entropy,
    Coreset,
    Badge,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::Random,
        StrategyKind::Entropy,
        StrategyKind::Coreset,
        StrategyKind::Badge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::Entropy => "entropy",
            StrategyKind::Coreset => "coreset",
            StrategyKind::Badge => "badge",
        }
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?}")))
    }
}

fn check_budget(n: usize, pool: usize) -> Result<()> {
    if n > pool {
        return Err(Error::BudgetExceedsPool { budget: n, pool });
    }
    Ok(())
}

fn check_pool(pool: &[usize], len: usize) -> Result<()> {
    match pool.iter().find(|&&i| i >= len) {
        Some(&index) => Err(Error::IndexOutOfRange { index, len }),
        None => Ok(()),
    }
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> Result<f64> {
    let sum: f64 = p.iter().sum();
    let sums_to_one = (sum - 1.0).abs() <= DISTRIBUTION_TOL;
    if !sums_to_one || p.iter().any(|&v| v < 0.0) {
        return Err(Error::NotADistribution { sum });
    }
    Ok(-p
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>())
}

/// The `n` pool items with the highest predictive entropy, by descending
/// entropy then ascending index.
pub fn select_entropy(
    model: &PromptModel,
    bank: &ClassTextBank,
    items: &Matrix,
    pool: &[usize],
    n: usize,
) -> Result<Vec<usize>> {
    check_budget(n, pool.len())?;
    let clf = model.classifier(bank)?;
    let scores = clf
        .predict_rows(items, pool)?
        .iter()
        .map(|p| entropy(p))
        .collect::<Result<Vec<_>>>()?;
    Ok(top_n_by_score(pool, &scores, n))
}

/// Descending by score, ascending index on ties.
pub(crate) fn top_n_by_score(pool: &[usize], scores: &[f64], n: usize) -> Vec<usize> {
    let mut ranked: Vec<(usize, f64)> = pool.iter().copied().zip(scores.iter().copied()).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(n);
    ranked.into_iter().map(|(i, _)| i).collect()
}

/// Greedy k-center: repeatedly take the pool item farthest (Euclidean) from
/// every labeled or already chosen item.
///
/// With no labeled items every distance starts at infinity, so the first pick
/// is the lowest pool index.
pub fn select_coreset(
    items: &Matrix,
    labeled: &[usize],
    pool: &[usize],
    n: usize,
) -> Result<Vec<usize>> {
    check_budget(n, pool.len())?;
    check_pool(pool, items.rows())?;
    check_pool(labeled, items.rows())?;

    // squared distances: same argmax, no sqrt
    let mut min_dist: Vec<f64> = pool
        .par_iter()
        .with_min_len(64)
        .map(|&i| {
            labeled
                .iter()
                .map(|&c| squared_distance(items.row(i), items.row(c)))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut taken = vec![false; pool.len()];
    let mut picks = Vec::with_capacity(n);

    for _ in 0..n {
        let mut best: Option<usize> = None;
        for (pos, &d) in min_dist.iter().enumerate() {
            if taken[pos] {
                continue;
            }
            best = match best {
                None => Some(pos),
                Some(b) if d > min_dist[b] || (d == min_dist[b] && pool[pos] < pool[b]) => {
                    Some(pos)
                }
                keep => keep,
            };
        }
        // n <= pool.len() guarantees a candidate
        let pos = best.expect("candidate available");
        taken[pos] = true;
        let center = items.row(pool[pos]);
        picks.push(pool[pos]);
        min_dist
            .par_iter_mut()
            .with_min_len(64)
            .zip(pool.par_iter())
            .for_each(|(d, &i)| {
                let nd = squared_distance(items.row(i), center);
                if nd < *d {
                    *d = nd;
                }
            });
    }
    Ok(picks)
}

/// Gradient of the cross-entropy at a pseudo label with respect to a linear
/// output head: `(p - onehot(ŷ)) ⊗ x`, flattened class-major (`K·D` values).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEmbedding(pub Vec<f64>);

impl GradientEmbedding {
    pub fn from_proba(proba: &[f64], pseudo_label: usize, image: &[f64]) -> Result<Self> {
        if pseudo_label >= proba.len() {
            return Err(Error::IndexOutOfRange {
                index: pseudo_label,
                len: proba.len(),
            });
        }
        let mut out = Vec::with_capacity(proba.len() * image.len());
        for (k, &pk) in proba.iter().enumerate() {
            let coef = if k == pseudo_label { pk - 1.0 } else { pk };
            out.extend(image.iter().map(|x| coef * x));
        }
        Ok(Self(out))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// The block belonging to class `k`.
    pub fn block(&self, k: usize, dim: usize) -> &[f64] {
        &self.0[k * dim..(k + 1) * dim]
    }
}

pub fn gradient_embedding(
    model: &PromptModel,
    bank: &ClassTextBank,
    image: &[f64],
    pseudo_label: usize,
) -> Result<GradientEmbedding> {
    let p = model.predict_proba(bank, image)?;
    GradientEmbedding::from_proba(&p, pseudo_label, image)
}

/// k-means++ seeding over the rows of `vectors`; returns row positions.
///
/// The first pick is uniform; each later pick has probability proportional to
/// its squared distance to the nearest pick so far. When every remaining row
/// sits on a pick (zero total mass) the draw falls back to uniform over the
/// unselected rows.
pub fn kmeanspp_select(vectors: &Matrix, n: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    kmeanspp_by(
        vectors.rows(),
        n,
        |i, j| squared_distance(vectors.row(i), vectors.row(j)),
        rng,
    )
}

/// k-means++ seeding over `m` points given only their pairwise squared
/// distances. Distance updates run in parallel; sums and draws are serial, so
/// the result does not depend on the thread count.
fn kmeanspp_by<F>(m: usize, n: usize, dist: F, rng: &mut Rng) -> Result<Vec<usize>>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    check_budget(n, m)?;
    let mut picks = Vec::with_capacity(n);
    if n == 0 {
        return Ok(picks);
    }
    let mut selected = vec![false; m];
    let mut min_dist = vec![f64::INFINITY; m];

    let mut next = rng.random_range(0..m);
    loop {
        selected[next] = true;
        picks.push(next);
        if picks.len() == n {
            break;
        }
        let center = next;
        min_dist
            .par_iter_mut()
            .with_min_len(64)
            .zip(selected.par_iter())
            .enumerate()
            .for_each(|(i, (d, &sel))| {
                *d = if sel { 0.0 } else { d.min(dist(i, center)) };
            });
        let total: f64 = min_dist.iter().sum();
        next = if total > 0.0 {
            sample_proportional(&min_dist, total, rng)
        } else {
            let free: Vec<usize> = (0..m).filter(|&i| !selected[i]).collect();
            free[rng.random_range(0..free.len())]
        };
    }
    Ok(picks)
}

/// Draws an index with probability `weights[i] / total`; zero-weight entries
/// are never returned.
fn sample_proportional(weights: &[f64], total: f64, rng: &mut Rng) -> usize {
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last_positive = i;
        if target < acc {
            return i;
        }
    }
    // rounding left target at or past the final cumulative sum
    last_positive
}

/// BADGE: pseudo-label every pool item, embed it by its loss gradient and run
/// k-means++ seeding in that space.
///
/// The embedding `c ⊗ x` (with `c = p - onehot(ŷ)`) is never materialized:
/// `‖c⊗x - c'⊗x'‖² = ‖c‖²‖x‖² + ‖c'‖²‖x'‖² - 2(c·c')(x·x')`, which costs
/// `O(K + D)` per pair instead of `O(K·D)`.
pub fn select_badge(
    model: &PromptModel,
    bank: &ClassTextBank,
    items: &Matrix,
    pool: &[usize],
    n: usize,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    check_budget(n, pool.len())?;
    let clf = model.classifier(bank)?;
    let probas = clf.predict_rows(items, pool)?;
    let coefs: Vec<Vec<f64>> = probas
        .into_par_iter()
        .map(|mut p| {
            let y = argmax(&p);
            p[y] -= 1.0;
            p
        })
        .collect();
    let sq_norms: Vec<f64> = coefs
        .iter()
        .zip(pool)
        .map(|(c, &i)| dot(c, c) * dot(items.row(i), items.row(i)))
        .collect();
    let dist = |a: usize, b: usize| {
        let cross = dot(&coefs[a], &coefs[b]) * dot(items.row(pool[a]), items.row(pool[b]));
        let scale = sq_norms[a] + sq_norms[b];
        let d = scale - 2.0 * cross;
        // cancellation noise between (near-)identical embeddings counts as zero
        if d <= FACTORED_ZERO * scale {
            0.0
        } else {
            d
        }
    };
    Ok(kmeanspp_by(pool.len(), n, dist, rng)?
        .into_iter()
        .map(|pos| pool[pos])
        .collect())
}

/// Relative threshold below which a factored squared distance is treated as
/// rounding noise.
const FACTORED_ZERO: f64 = 1e-12;

/// `n` distinct pool indices, uniformly without replacement.
pub fn select_random(pool: &[usize], n: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    check_budget(n, pool.len())?;
    Ok(rand::seq::index::sample(rng, pool.len(), n)
        .into_iter()
        .map(|pos| pool[pos])
        .collect())
}

/// Everything a strategy may look at. Ground-truth labels are deliberately
/// absent.
#[derive(Debug, Clone, Copy)]
pub struct SelectionContext<'a> {
    pub model: &'a PromptModel,
    pub bank: &'a ClassTextBank,
    pub items: &'a Matrix,
    pub labeled: &'a [usize],
}

/// Runs `kind` over `pool`.
pub fn select(
    kind: StrategyKind,
    ctx: &SelectionContext<'_>,
    pool: &[usize],
    n: usize,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    match kind {
        StrategyKind::Random => select_random(pool, n, rng),
        StrategyKind::Entropy => select_entropy(ctx.model, ctx.bank, ctx.items, pool, n),
        StrategyKind::Coreset => select_coreset(ctx.items, ctx.labeled, pool, n),
        StrategyKind::Badge => select_badge(ctx.model, ctx.bank, ctx.items, pool, n, rng),
    }
}
