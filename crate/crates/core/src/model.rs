//! Cosine-softmax classification over frozen embeddings and the trainable
//! per-class residual adapter.
//!
//! Each class `k` owns a residual vector `w_k` that is added to every one of
//! the class's description embeddings before re-normalization:
//! `e'_{k,i} = normalize(e_txt^{k,i} + w_k)`. With all residuals at zero the
//! model is exactly the zero-shot classifier. Training minimizes the mean
//! cross-entropy of the configured aggregation with plain SGD.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ClassTextBank, EmbeddingDataset};
use crate::error::{Error, Result};
use crate::linalg::{argmax, dot, l2_normalize, norm, softmax, Matrix, UNIT_NORM_TOL, ZERO_NORM};
use crate::rng::Rng;

/// Floor applied inside the logarithm of the cross-entropy.
pub const LOG_FLOOR: f64 = 1e-12;

/// Default softmax temperature (the usual learned CLIP logit scale of 100).
pub const DEFAULT_TEMPERATURE: f64 = 0.01;

/// How several descriptions of one class are combined into a class probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// One description per class, plain cosine softmax.
    #[default]
    None,
    /// Average similarity: softmax over every (class, description) pair, then
    /// the per-class mean, renormalized to a distribution.
    As,
    /// Average embedding: softmax against the mean description embedding.
    Ae,
}

impl Aggregation {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::None => "none",
            Aggregation::As => "as",
            Aggregation::Ae => "ae",
        }
    }
}

impl std::fmt::Display for Aggregation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Aggregation::None),
            "as" => Ok(Aggregation::As),
            "ae" => Ok(Aggregation::Ae),
            other => Err(Error::Config(format!("unknown aggregation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptModel {
    residuals: Matrix,
    temperature: f64,
    aggregation: Aggregation,
}

impl PromptModel {
    pub fn new(residuals: Matrix, temperature: f64, aggregation: Aggregation) -> Result<Self> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        if residuals.rows() < 2 || residuals.cols() == 0 {
            return Err(Error::ShapeMismatch(format!(
                "residuals must be K x D with K >= 2, got {}x{}",
                residuals.rows(),
                residuals.cols()
            )));
        }
        Ok(Self {
            residuals,
            temperature,
            aggregation,
        })
    }

    /// The zero-shot classifier for `bank`.
    pub fn zeros(bank: &ClassTextBank, temperature: f64, aggregation: Aggregation) -> Result<Self> {
        Self::new(
            Matrix::zeros(bank.num_classes(), bank.dim()),
            temperature,
            aggregation,
        )
    }

    pub fn residuals(&self) -> &Matrix {
        &self.residuals
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn aggregation(&self) -> Aggregation {
        self.aggregation
    }

    pub fn num_classes(&self) -> usize {
        self.residuals.rows()
    }

    pub fn dim(&self) -> usize {
        self.residuals.cols()
    }

    /// Precomputes the effective text embeddings for repeated prediction.
    pub fn classifier<'a>(&'a self, bank: &'a ClassTextBank) -> Result<Classifier<'a>> {
        Classifier::new(self, bank)
    }

    pub fn predict_proba(&self, bank: &ClassTextBank, image: &[f64]) -> Result<Vec<f64>> {
        self.classifier(bank)?.predict_proba(image)
    }

    pub fn loss_gradient(&self, bank: &ClassTextBank, batch: &[(&[f64], usize)]) -> Result<Matrix> {
        Ok(self.classifier(bank)?.loss_and_gradient(batch)?.1)
    }
}

/// Effective text embeddings of one class after adding its residual.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveGroup {
    /// Unit rows `normalize(e_txt^{k,i} + w_k)`.
    pub descriptions: Matrix,
    /// `normalize(mean_i e_txt^{k,i} + w_k)`.
    pub mean: Vec<f64>,
}

/// `e'_{k,i}` for every description and, for every class, the re-normalized
/// mean embedding used by [`Aggregation::Ae`].
pub fn effective_text_embeddings(
    model: &PromptModel,
    bank: &ClassTextBank,
) -> Result<Vec<EffectiveGroup>> {
    check_shapes(model, bank)?;
    bank.groups()
        .iter()
        .enumerate()
        .map(|(k, group)| {
            let w = model.residuals.row(k);
            let rows = group
                .iter_rows()
                .map(|t| l2_normalize(&add(t, w)))
                .collect::<Result<Vec<_>>>()?;
            let mean = l2_normalize(&add(&mean_row(group), w))?;
            Ok(EffectiveGroup {
                descriptions: Matrix::from_rows(bank.dim(), &rows)?,
                mean,
            })
        })
        .collect()
}

fn check_shapes(model: &PromptModel, bank: &ClassTextBank) -> Result<()> {
    if model.num_classes() != bank.num_classes() {
        return Err(Error::ShapeMismatch(format!(
            "model has {} classes, bank has {}",
            model.num_classes(),
            bank.num_classes()
        )));
    }
    if model.dim() != bank.dim() {
        return Err(Error::DimMismatch {
            expected: bank.dim(),
            actual: model.dim(),
        });
    }
    Ok(())
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn mean_row(m: &Matrix) -> Vec<f64> {
    let mut acc = vec![0.0; m.cols()];
    for r in m.iter_rows() {
        acc.iter_mut().zip(r).for_each(|(a, x)| *a += x);
    }
    let n = m.rows() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// A model bound to a bank with its effective embeddings precomputed.
///
/// Every scored text vector ("anchor") is `u = v / |v|` with
/// `v = base + w_owner`, where `base` is a description (none / AS) or a class
/// mean (AE). The pre-normalization length `|v|` is kept for the gradient.
#[derive(Debug, Clone)]
pub struct Classifier<'a> {
    model: &'a PromptModel,
    anchors: Matrix,
    owner: Vec<usize>,
    lengths: Vec<f64>,
    /// δ_k, used by AS.
    group_sizes: Vec<usize>,
}

impl<'a> Classifier<'a> {
    fn new(model: &'a PromptModel, bank: &'a ClassTextBank) -> Result<Self> {
        check_shapes(model, bank)?;
        let dim = bank.dim();
        let group_sizes = bank.descriptions_per_class();
        let mut bases: Vec<(usize, Vec<f64>)> = Vec::new();
        match model.aggregation {
            Aggregation::None => {
                for (k, g) in bank.groups().iter().enumerate() {
                    if g.rows() != 1 {
                        return Err(Error::AggregationMismatch {
                            class: k,
                            count: g.rows(),
                        });
                    }
                    bases.push((k, g.row(0).to_vec()));
                }
            }
            Aggregation::As => {
                for (k, g) in bank.groups().iter().enumerate() {
                    bases.extend(g.iter_rows().map(|r| (k, r.to_vec())));
                }
            }
            Aggregation::Ae => {
                for (k, g) in bank.groups().iter().enumerate() {
                    bases.push((k, mean_row(g)));
                }
            }
        }

        let mut anchors = Matrix::zeros(bases.len(), dim);
        let mut owner = Vec::with_capacity(bases.len());
        let mut lengths = Vec::with_capacity(bases.len());
        for (m, (k, base)) in bases.into_iter().enumerate() {
            let v = add(&base, model.residuals.row(k));
            let len = norm(&v);
            if len < ZERO_NORM {
                return Err(Error::ZeroVector { norm: len });
            }
            anchors
                .row_mut(m)
                .iter_mut()
                .zip(&v)
                .for_each(|(a, x)| *a = x / len);
            owner.push(k);
            lengths.push(len);
        }
        Ok(Self {
            model,
            anchors,
            owner,
            lengths,
            group_sizes,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.group_sizes.len()
    }

    pub fn dim(&self) -> usize {
        self.anchors.cols()
    }

    fn check_image(&self, image: &[f64]) -> Result<()> {
        if image.len() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                actual: image.len(),
            });
        }
        let n = norm(image);
        let unit = (n - 1.0).abs() <= UNIT_NORM_TOL;
        if !unit {
            return Err(Error::NotUnitNorm { norm: n });
        }
        Ok(())
    }

    /// Unit image vector and the per-anchor logits `cos(x, u_m) / τ`.
    fn logits(&self, image: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = norm(image);
        let x: Vec<f64> = image.iter().map(|v| v / n).collect();
        let tau = self.model.temperature;
        let z = self
            .anchors
            .iter_rows()
            .map(|u| dot(&x, u).clamp(-1.0, 1.0) / tau)
            .collect();
        (x, z)
    }

    /// Class distribution plus, for AS, the pair-level softmax it came from.
    fn distribution(&self, logits: &[f64]) -> (Vec<f64>, Option<Vec<f64>>) {
        match self.model.aggregation {
            Aggregation::None | Aggregation::Ae => (softmax(logits), None),
            Aggregation::As => {
                let q = softmax(logits);
                let mut s = vec![0.0; self.num_classes()];
                for (m, &qm) in q.iter().enumerate() {
                    s[self.owner[m]] += qm;
                }
                for (sk, &d) in s.iter_mut().zip(&self.group_sizes) {
                    *sk /= d as f64;
                }
                let total: f64 = s.iter().sum();
                s.iter_mut().for_each(|v| *v /= total);
                (s, Some(q))
            }
        }
    }

    pub fn predict_proba(&self, image: &[f64]) -> Result<Vec<f64>> {
        self.check_image(image)?;
        Ok(self.proba_unchecked(image))
    }

    pub(crate) fn proba_unchecked(&self, image: &[f64]) -> Vec<f64> {
        let (_, z) = self.logits(image);
        self.distribution(&z).0
    }

    /// Class probabilities for the given rows of `items`, in order.
    pub fn predict_rows(&self, items: &Matrix, rows: &[usize]) -> Result<Vec<Vec<f64>>> {
        if items.cols() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                actual: items.cols(),
            });
        }
        if let Some(&bad) = rows.iter().find(|&&i| i >= items.rows()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: items.rows(),
            });
        }
        Ok(rows
            .par_iter()
            .map(|&i| self.proba_unchecked(items.row(i)))
            .collect())
    }

    /// Argmax class (lowest index on ties).
    pub fn predict_class(&self, image: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_proba(image)?))
    }

    /// Mean cross-entropy over `batch` and its gradient with respect to the
    /// residuals.
    pub fn loss_and_gradient(&self, batch: &[(&[f64], usize)]) -> Result<(f64, Matrix)> {
        if batch.is_empty() {
            return Err(Error::EmptyInput);
        }
        let k = self.num_classes();
        let tau = self.model.temperature;
        let mut grad = Matrix::zeros(k, self.dim());
        let mut loss = 0.0;
        for &(image, y) in batch {
            if y >= k {
                return Err(Error::IndexOutOfRange { index: y, len: k });
            }
            self.check_image(image)?;
            let (x, z) = self.logits(image);
            let (p, pairs) = self.distribution(&z);
            loss += cross_entropy(&p, y)?;

            // dL/dz per anchor
            let dz: Vec<f64> = match pairs {
                None => (0..z.len())
                    .map(|m| p[m] - if m == y { 1.0 } else { 0.0 })
                    .collect(),
                Some(q) => {
                    // With P_k = s_k / S and s_k = mean of q over class k:
                    // dL/dz_m = q_m (1/(δ_c S) - [c = y]/(δ_y s_y)); the usual
                    // softmax correction term sums to zero here.
                    let s: Vec<f64> = {
                        let mut s = vec![0.0; k];
                        for (m, &qm) in q.iter().enumerate() {
                            s[self.owner[m]] += qm / self.group_sizes[self.owner[m]] as f64;
                        }
                        s
                    };
                    let total: f64 = s.iter().sum();
                    let s_y = s[y].max(f64::MIN_POSITIVE);
                    q.iter()
                        .enumerate()
                        .map(|(m, &qm)| {
                            let c = self.owner[m];
                            let d = self.group_sizes[c] as f64;
                            let mut a = 1.0 / (d * total);
                            if c == y {
                                a -= 1.0 / (self.group_sizes[y] as f64 * s_y);
                            }
                            qm * a
                        })
                        .collect()
                }
            };

            // dz_m/dw = (x - (u.x) u) / (τ |v|)
            for (m, &g) in dz.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let u = self.anchors.row(m);
                let ux = dot(u, &x);
                let scale = g / (tau * self.lengths[m]);
                let row = grad.row_mut(self.owner[m]);
                for ((r, &xi), &ui) in row.iter_mut().zip(&x).zip(u) {
                    *r += scale * (xi - ux * ui);
                }
            }
        }
        let n = batch.len() as f64;
        grad.as_mut_slice().iter_mut().for_each(|v| *v /= n);
        Ok((loss / n, grad))
    }
}

/// Zero-shot class probabilities: [`PromptModel::predict_proba`] with zero residuals.
pub fn zero_shot_proba(
    bank: &ClassTextBank,
    aggregation: Aggregation,
    temperature: f64,
    image: &[f64],
) -> Result<Vec<f64>> {
    PromptModel::zeros(bank, temperature, aggregation)?.predict_proba(bank, image)
}

/// `-ln(max(p[y], 1e-12))`.
pub fn cross_entropy(proba: &[f64], y: usize) -> Result<f64> {
    let p = *proba.get(y).ok_or(Error::IndexOutOfRange {
        index: y,
        len: proba.len(),
    })?;
    Ok(-(p.max(LOG_FLOOR)).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    FullBatch,
    MiniBatch(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    CosineAnnealing,
    Constant,
}

impl LrSchedule {
    /// Learning rate for `epoch` out of `epochs`.
    pub fn rate(self, base: f64, epoch: usize, epochs: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::CosineAnnealing => {
                let t = epoch as f64 / epochs.max(1) as f64;
                0.5 * base * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub init_std: f64,
    pub batch_mode: BatchMode,
    pub lr_schedule: LrSchedule,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.002,
            epochs: 200,
            init_std: 0.02,
            batch_mode: BatchMode::FullBatch,
            lr_schedule: LrSchedule::CosineAnnealing,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.init_std.is_finite() && self.init_std >= 0.0) {
            return Err(Error::Config(format!(
                "init_std must be >= 0, got {}",
                self.init_std
            )));
        }
        if self.batch_mode == BatchMode::MiniBatch(0) {
            return Err(Error::Config("minibatch size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: PromptModel,
    /// Full-batch: the loss before each update followed by the loss of the
    /// last iterate (`epochs + 1` values), measured before the residuals are
    /// rounded to `f32` for storage. Minibatch: mean minibatch loss per epoch.
    pub losses: Vec<f64>,
}

fn round_to_f32(m: &mut Matrix) {
    m.as_mut_slice()
        .iter_mut()
        .for_each(|v| *v = *v as f32 as f64);
}

/// Residuals drawn from `N(0, init_std²)` with `cfg.seed`.
pub fn initial_model(
    bank: &ClassTextBank,
    cfg: &TrainConfig,
    aggregation: Aggregation,
    temperature: f64,
) -> Result<PromptModel> {
    cfg.validate()?;
    let mut residuals = Matrix::zeros(bank.num_classes(), bank.dim());
    if cfg.init_std > 0.0 {
        let mut rng = Rng::seed_from_u64(cfg.seed);
        let normal =
            Normal::new(0.0, cfg.init_std).map_err(|e| Error::Config(format!("init_std: {e}")))?;
        residuals
            .as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = normal.sample(&mut rng));
    }
    // residuals are persisted as f32
    round_to_f32(&mut residuals);
    PromptModel::new(residuals, temperature, aggregation)
}

/// Trains residuals from a fresh initialization with SGD. Deterministic given
/// its inputs; the returned residuals are rounded to `f32` precision.
pub fn train(
    bank: &ClassTextBank,
    labeled: &[(&[f64], usize)],
    cfg: &TrainConfig,
    aggregation: Aggregation,
    temperature: f64,
) -> Result<TrainOutcome> {
    if labeled.is_empty() {
        return Err(Error::EmptyInput);
    }
    let k = bank.num_classes();
    if let Some(&(_, y)) = labeled.iter().find(|(_, y)| *y >= k) {
        return Err(Error::IndexOutOfRange { index: y, len: k });
    }
    let mut model = initial_model(bank, cfg, aggregation, temperature)?;
    let mut losses = Vec::with_capacity(cfg.epochs + 1);
    // stream distinct from the initialization draw
    let mut shuffle_rng = Rng::seed_from_u64(crate::rng::derive_seed(cfg.seed, 1));

    let sgd_step = |model: &mut PromptModel, batch: &[(&[f64], usize)], lr: f64| -> Result<f64> {
        let (loss, grad) = model.classifier(bank)?.loss_and_gradient(batch)?;
        model
            .residuals
            .as_mut_slice()
            .iter_mut()
            .zip(grad.as_slice())
            .for_each(|(w, g)| *w -= lr * g);
        Ok(loss)
    };

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_schedule.rate(cfg.learning_rate, epoch, cfg.epochs);
        match cfg.batch_mode {
            BatchMode::FullBatch => losses.push(sgd_step(&mut model, labeled, lr)?),
            BatchMode::MiniBatch(size) => {
                let mut order: Vec<usize> = (0..labeled.len()).collect();
                order.shuffle(&mut shuffle_rng);
                let mut total = 0.0;
                let mut chunks = 0;
                for chunk in order.chunks(size) {
                    let batch: Vec<(&[f64], usize)> = chunk.iter().map(|&i| labeled[i]).collect();
                    total += sgd_step(&mut model, &batch, lr)?;
                    chunks += 1;
                }
                losses.push(total / chunks as f64);
            }
        }
    }
    if cfg.batch_mode == BatchMode::FullBatch {
        let (loss, _) = model.classifier(bank)?.loss_and_gradient(labeled)?;
        losses.push(loss);
    }
    round_to_f32(&mut model.residuals);
    Ok(TrainOutcome { model, losses })
}

/// Fraction of `test` items whose argmax prediction equals the true label.
pub fn evaluate(model: &PromptModel, bank: &ClassTextBank, test: &EmbeddingDataset) -> Result<f64> {
    if test.dim() != model.dim() {
        return Err(Error::DimMismatch {
            expected: model.dim(),
            actual: test.dim(),
        });
    }
    let clf = model.classifier(bank)?;
    let rows: Vec<usize> = (0..test.len()).collect();
    let preds: Vec<usize> = clf
        .predict_rows(test.items(), &rows)?
        .iter()
        .map(|p| argmax(p))
        .collect();
    crate::metrics::accuracy(&preds, test.labels())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bank2() -> ClassTextBank {
        let rows = Matrix::from_rows(2, &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        ClassTextBank::single(&rows).unwrap()
    }

    #[test]
    fn equal_scores_give_uniform() {
        let bank = bank2();
        let x = l2_normalize(&[1.0, 1.0]).unwrap();
        let p = zero_shot_proba(&bank, Aggregation::None, 0.01, &x).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn softmax_example() {
        // cos = (0.8, 0.2) at τ = 1: text rows chosen so x·t gives these values
        let t0 = vec![0.8, 0.6];
        let t1 = vec![0.2, (1.0f64 - 0.04).sqrt()];
        let rows = Matrix::from_rows(2, &[t0, t1]).unwrap();
        let bank = ClassTextBank::single(&rows).unwrap();
        let p = zero_shot_proba(&bank, Aggregation::None, 1.0, &[1.0, 0.0]).unwrap();
        assert!((p[0] - 0.645_656).abs() < 1e-6);
        assert!((p[1] - 0.354_344).abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_examples() {
        assert_eq!(cross_entropy(&[0.0, 1.0], 1).unwrap(), 0.0);
        assert!((cross_entropy(&[0.25; 4], 2).unwrap() - 4f64.ln()).abs() < 1e-12);
        assert!((cross_entropy(&[0.645_656, 0.354_344], 1).unwrap() - 1.037_487).abs() < 1e-6);
        assert!((cross_entropy(&[1.0, 0.0], 1).unwrap() - 1e-12f64.ln().abs()).abs() < 1e-9);
        assert!(matches!(
            cross_entropy(&[1.0], 1),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn none_requires_single_description() {
        let g = Matrix::from_rows(2, &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let h = Matrix::from_rows(2, &[vec![0.0, 1.0]]).unwrap();
        let bank = ClassTextBank::new(2, vec![g, h]).unwrap();
        assert!(matches!(
            zero_shot_proba(&bank, Aggregation::None, 1.0, &[1.0, 0.0]),
            Err(Error::AggregationMismatch { class: 0, count: 2 })
        ));
        assert!(zero_shot_proba(&bank, Aggregation::As, 1.0, &[1.0, 0.0]).is_ok());
    }

    #[test]
    fn effective_embedding_examples() {
        let bank = bank2();
        let zero = PromptModel::zeros(&bank, 1.0, Aggregation::None).unwrap();
        let eff = effective_text_embeddings(&zero, &bank).unwrap();
        for (k, g) in eff.iter().enumerate() {
            assert_eq!(g.descriptions.row(0), bank.group(k).row(0));
            assert_eq!(g.mean.as_slice(), bank.group(k).row(0));
        }

        let w = Matrix::from_rows(2, &[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let model = PromptModel::new(w, 1.0, Aggregation::None).unwrap();
        let eff = effective_text_embeddings(&model, &bank).unwrap();
        assert_eq!(eff[0].descriptions.row(0), &[1.0, 0.0]);

        let w = Matrix::from_rows(2, &[vec![-1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let model = PromptModel::new(w, 1.0, Aggregation::None).unwrap();
        assert!(matches!(
            effective_text_embeddings(&model, &bank),
            Err(Error::ZeroVector { .. })
        ));
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let s = LrSchedule::CosineAnnealing;
        assert_eq!(s.rate(0.002, 0, 200), 0.002);
        assert!((s.rate(0.002, 100, 200) - 0.001).abs() < 1e-15);
        assert_eq!(LrSchedule::Constant.rate(0.5, 7, 10), 0.5);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let bank = bank2();
        let cfg = TrainConfig {
            epochs: 0,
            seed: 3,
            ..TrainConfig::default()
        };
        let x = [1.0, 0.0];
        let out = train(&bank, &[(&x, 0)], &cfg, Aggregation::None, 0.01).unwrap();
        let init = initial_model(&bank, &cfg, Aggregation::None, 0.01).unwrap();
        assert_eq!(out.model, init);
        assert_eq!(out.losses.len(), 1);
    }

    #[test]
    fn train_rejects_empty_and_bad_labels() {
        let bank = bank2();
        let cfg = TrainConfig::default();
        assert!(train(&bank, &[], &cfg, Aggregation::None, 0.01).is_err());
        let x = [1.0, 0.0];
        assert!(matches!(
            train(&bank, &[(&x, 5)], &cfg, Aggregation::None, 0.01),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn predict_checks_input() {
        let bank = bank2();
        let m = PromptModel::zeros(&bank, 0.01, Aggregation::None).unwrap();
        assert!(matches!(
            m.predict_proba(&bank, &[1.0, 0.0, 0.0]),
            Err(Error::DimMismatch { .. })
        ));
        assert!(matches!(
            m.predict_proba(&bank, &[2.0, 0.0]),
            Err(Error::NotUnitNorm { .. })
        ));
    }
}
