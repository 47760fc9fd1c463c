//! Reference implementations used to check the engine. They recompute
//! everything from scratch with the simplest possible algorithm and share no
//! code path with the selectors they check (beyond model predictions).

use pcb_core::linalg::{l2_normalize, Matrix};
use pcb_core::model::{effective_text_embeddings, Aggregation, PromptModel};
use pcb_core::{cross_entropy, ClassTextBank, Rng};
use rand::{Rng as _, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn unit(rng: &mut Rng, dim: usize) -> Vec<f64> {
    loop {
        if let Ok(v) = l2_normalize(&gaussian(rng, dim)) {
            return v;
        }
    }
}

pub fn unit_matrix(rng: &mut Rng, rows: usize, dim: usize) -> Matrix {
    let rows: Vec<Vec<f64>> = (0..rows).map(|_| unit(rng, dim)).collect();
    Matrix::from_rows(dim, &rows).unwrap()
}

pub fn random_bank(rng: &mut Rng, k: usize, dim: usize, deltas: &[usize]) -> ClassTextBank {
    let groups = (0..k).map(|c| unit_matrix(rng, deltas[c], dim)).collect();
    ClassTextBank::new(dim, groups).unwrap()
}

pub fn random_model(
    rng: &mut Rng,
    bank: &ClassTextBank,
    scale: f64,
    tau: f64,
    agg: Aggregation,
) -> PromptModel {
    let k = bank.num_classes();
    let d = bank.dim();
    let w: Vec<f64> = gaussian(rng, k * d)
        .into_iter()
        .map(|v| v * scale)
        .collect();
    PromptModel::new(Matrix::from_vec(k, d, w).unwrap(), tau, agg).unwrap()
}

/// Random small instance: (bank, model, batch of (image, label)).
pub struct GradInstance {
    pub bank: ClassTextBank,
    pub model: PromptModel,
    pub images: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

pub fn grad_instance(seed: u64, agg: Aggregation) -> GradInstance {
    let mut r = rng(seed);
    let k = r.random_range(2..=5);
    let d = r.random_range(2..=8);
    let deltas: Vec<usize> = (0..k)
        .map(|_| {
            if agg == Aggregation::None {
                1
            } else {
                r.random_range(1..=3)
            }
        })
        .collect();
    let bank = random_bank(&mut r, k, d, &deltas);
    let tau = r.random_range(0.2..1.0);
    let model = random_model(&mut r, &bank, 0.3, tau, agg);
    let n = r.random_range(1..=6);
    let images = (0..n).map(|_| unit(&mut r, d)).collect();
    let labels = (0..n).map(|_| r.random_range(0..k)).collect();
    GradInstance {
        bank,
        model,
        images,
        labels,
    }
}

/// Mean cross-entropy through the public prediction path.
pub fn mean_loss(
    model: &PromptModel,
    bank: &ClassTextBank,
    images: &[Vec<f64>],
    labels: &[usize],
) -> f64 {
    images
        .iter()
        .zip(labels)
        .map(|(x, &y)| cross_entropy(&model.predict_proba(bank, x).unwrap(), y).unwrap())
        .sum::<f64>()
        / images.len() as f64
}

/// Central finite differences of the mean loss w.r.t. every residual entry.
pub fn fd_residual_gradient(
    model: &PromptModel,
    bank: &ClassTextBank,
    images: &[Vec<f64>],
    labels: &[usize],
    h: f64,
) -> Vec<f64> {
    let base = model.residuals().clone();
    (0..base.as_slice().len())
        .map(|j| {
            let mut plus = base.clone();
            plus.as_mut_slice()[j] += h;
            let mut minus = base.clone();
            minus.as_mut_slice()[j] -= h;
            let mp = PromptModel::new(plus, model.temperature(), model.aggregation()).unwrap();
            let mm = PromptModel::new(minus, model.temperature(), model.aggregation()).unwrap();
            (mean_loss(&mp, bank, images, labels) - mean_loss(&mm, bank, images, labels))
                / (2.0 * h)
        })
        .collect()
}

/// `max|a - b| / max(max|b|, 1e-8)`.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = b.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    diff / scale.max(1e-8)
}

/// Finite-difference gradient of CE at `label` w.r.t. a linear head `theta`
/// (K×D, logits `theta · x`).
pub fn fd_linear_head_gradient(theta: &Matrix, x: &[f64], label: usize, h: f64) -> Vec<f64> {
    let ce = |t: &Matrix| -> f64 {
        let logits: Vec<f64> = t
            .iter_rows()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        lse - logits[label]
    };
    (0..theta.as_slice().len())
        .map(|j| {
            let mut plus = theta.clone();
            plus.as_mut_slice()[j] += h;
            let mut minus = theta.clone();
            minus.as_mut_slice()[j] -= h;
            (ce(&plus) - ce(&minus)) / (2.0 * h)
        })
        .collect()
}

/// The linear head reproducing a none/AE model's logits: rows `e'_k / τ`.
pub fn linear_head(model: &PromptModel, bank: &ClassTextBank) -> Matrix {
    let eff = effective_text_embeddings(model, bank).unwrap();
    let rows: Vec<Vec<f64>> = eff
        .iter()
        .map(|g| {
            let v = match model.aggregation() {
                Aggregation::Ae => g.mean.clone(),
                _ => g.descriptions.row(0).to_vec(),
            };
            v.into_iter().map(|x| x / model.temperature()).collect()
        })
        .collect();
    Matrix::from_rows(bank.dim(), &rows).unwrap()
}

fn oracle_entropy(p: &[f64]) -> f64 {
    let mut h = 0.0;
    for &v in p {
        if v > 0.0 {
            h -= v * v.ln();
        }
    }
    h
}

/// Full sort of the pool by (entropy desc, index asc), truncated to `n`.
pub fn brute_force_entropy(
    model: &PromptModel,
    bank: &ClassTextBank,
    items: &Matrix,
    pool: &[usize],
    n: usize,
) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = pool
        .iter()
        .map(|&i| {
            (
                oracle_entropy(&model.predict_proba(bank, items.row(i)).unwrap()),
                i,
            )
        })
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    scored.into_iter().take(n).map(|(_, i)| i).collect()
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Greedy k-center recomputing every distance from scratch at each step.
pub fn brute_force_kcenter(
    items: &Matrix,
    labeled: &[usize],
    pool: &[usize],
    n: usize,
) -> Vec<usize> {
    let mut centers: Vec<usize> = labeled.to_vec();
    let mut picks = Vec::new();
    for _ in 0..n {
        let mut best: Option<(f64, usize)> = None;
        for &c in pool {
            if picks.contains(&c) {
                continue;
            }
            let d = centers
                .iter()
                .map(|&z| euclid(items.row(c), items.row(z)))
                .fold(f64::INFINITY, f64::min);
            let better = match best {
                None => true,
                Some((bd, bi)) => d > bd || (d == bd && c < bi),
            };
            if better {
                best = Some((d, c));
            }
        }
        let (_, c) = best.unwrap();
        picks.push(c);
        centers.push(c);
    }
    picks
}

/// Exact marginal distribution of the second k-means++ pick: the first pick
/// is uniform, the second proportional to squared distance from it.
pub fn kmeanspp_second_pick_law(vectors: &Matrix) -> Vec<f64> {
    let m = vectors.rows();
    let mut law = vec![0.0; m];
    for f in 0..m {
        let d2: Vec<f64> = (0..m)
            .map(|j| euclid(vectors.row(j), vectors.row(f)).powi(2))
            .collect();
        let total: f64 = d2.iter().sum();
        for j in 0..m {
            law[j] += d2[j] / total / m as f64;
        }
    }
    law
}

/// Largest per-bin deviation in units of the multinomial standard deviation.
pub fn max_multinomial_z(counts: &[usize], law: &[f64], trials: usize) -> f64 {
    counts
        .iter()
        .zip(law)
        .map(|(&c, &q)| {
            let expected = trials as f64 * q;
            let sd = (trials as f64 * q * (1.0 - q)).sqrt();
            if sd == 0.0 {
                if c as f64 == expected {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                (c as f64 - expected).abs() / sd
            }
        })
        .fold(0.0, f64::max)
}
