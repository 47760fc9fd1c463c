//! Embedding datasets, per-class description banks, the `pcbemb/1` directory
//! format and the seeded synthetic generator.
//!
//! Embeddings are held in memory as `f64` but persisted as little-endian
//! binary32, so every stored value is kept representable in `f32`. That keeps
//! save/load an exact round trip.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm, Matrix, UNIT_NORM_TOL};
use crate::rng::Rng;

pub use crate::linalg::{cosine, l2_normalize};

pub const FORMAT_TAG: &str = "pcbemb/1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const IMAGES_FILE: &str = "images.f32";
pub const LABELS_FILE: &str = "labels.u32";
pub const TEXT_FILE: &str = "text.f32";

/// Image embeddings with their (oracle-only) ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    items: Matrix,
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl EmbeddingDataset {
    pub fn new(items: Matrix, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        let ds = Self {
            items,
            labels,
            class_names,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        if self.items.cols() == 0 {
            return Err(Error::InvalidDataset("dim must be positive".into()));
        }
        if self.items.rows() == 0 {
            return Err(Error::InvalidDataset("dataset has no items".into()));
        }
        if self.labels.len() != self.items.rows() {
            return Err(Error::InvalidDataset(format!(
                "{} labels for {} items",
                self.labels.len(),
                self.items.rows()
            )));
        }
        validate_class_names(&self.class_names)?;
        let k = self.class_names.len();
        if let Some((i, &y)) = self.labels.iter().enumerate().find(|(_, &y)| y >= k) {
            return Err(Error::InvalidDataset(format!(
                "label {y} of item {i} is not below num_classes {k}"
            )));
        }
        check_unit_rows(&self.items, "images")
    }

    pub fn dim(&self) -> usize {
        self.items.cols()
    }

    pub fn len(&self) -> usize {
        self.items.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.items.rows() == 0
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn items(&self) -> &Matrix {
        &self.items
    }

    pub fn item(&self, i: usize) -> &[f64] {
        self.items.row(i)
    }

    /// Ground-truth labels. Only the oracle and evaluation code should read these.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }
}

/// Per-class description embeddings: group `k` holds the `δ_k` text vectors of
/// class `k`, in description order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassTextBank {
    dim: usize,
    per_class: Vec<Matrix>,
    description_texts: Option<Vec<Vec<String>>>,
}

impl ClassTextBank {
    pub fn new(dim: usize, per_class: Vec<Matrix>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDataset("dim must be positive".into()));
        }
        if per_class.len() < 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least 2 classes, got {}",
                per_class.len()
            )));
        }
        for (k, group) in per_class.iter().enumerate() {
            if group.rows() == 0 {
                return Err(Error::InvalidDataset(format!(
                    "class {k} has no descriptions"
                )));
            }
            if group.cols() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    actual: group.cols(),
                });
            }
            check_unit_rows(group, &format!("text (class {k})"))?;
        }
        Ok(Self {
            dim,
            per_class,
            description_texts: None,
        })
    }

    /// Builds a bank with one description per class.
    pub fn single(rows: &Matrix) -> Result<Self> {
        let per_class = rows
            .iter_rows()
            .map(|r| Matrix::from_vec(1, rows.cols(), r.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows.cols(), per_class)
    }

    pub fn with_description_texts(mut self, texts: Vec<Vec<String>>) -> Result<Self> {
        if texts.len() != self.per_class.len()
            || texts
                .iter()
                .zip(&self.per_class)
                .any(|(t, g)| t.len() != g.rows())
        {
            return Err(Error::InvalidDataset(
                "description texts do not match descriptions_per_class".into(),
            ));
        }
        self.description_texts = Some(texts);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.per_class.len()
    }

    pub fn group(&self, k: usize) -> &Matrix {
        &self.per_class[k]
    }

    pub fn groups(&self) -> &[Matrix] {
        &self.per_class
    }

    /// `δ_k` for every class.
    pub fn descriptions_per_class(&self) -> Vec<usize> {
        self.per_class.iter().map(Matrix::rows).collect()
    }

    pub fn description_texts(&self) -> Option<&[Vec<String>]> {
        self.description_texts.as_deref()
    }
}

fn validate_class_names(names: &[String]) -> Result<()> {
    if names.len() < 2 {
        return Err(Error::InvalidDataset(format!(
            "need at least 2 classes, got {}",
            names.len()
        )));
    }
    let mut seen = HashSet::new();
    for name in names {
        if name.is_empty() {
            return Err(Error::InvalidDataset("empty class name".into()));
        }
        if !seen.insert(name.as_str()) {
            return Err(Error::InvalidDataset(format!(
                "duplicate class name {name:?}"
            )));
        }
    }
    Ok(())
}

fn check_unit_rows(m: &Matrix, what: &str) -> Result<()> {
    for (row, r) in m.iter_rows().enumerate() {
        let n = norm(r);
        // NaN fails this comparison as well
        let unit = (n - 1.0).abs() <= UNIT_NORM_TOL;
        if !unit {
            return Err(Error::NormViolation {
                what: what.to_string(),
                row,
                norm: n,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobFiles {
    pub images: String,
    pub labels: String,
    pub text: String,
}

impl Default for BlobFiles {
    fn default() -> Self {
        Self {
            images: IMAGES_FILE.into(),
            labels: LABELS_FILE.into(),
            text: TEXT_FILE.into(),
        }
    }
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub dim: usize,
    pub num_items: usize,
    pub num_classes: usize,
    pub class_names: Vec<String>,
    pub descriptions_per_class: Vec<usize>,
    pub files: BlobFiles,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description_texts: Option<Vec<Vec<String>>>,
}

impl DatasetManifest {
    fn validate(&self) -> Result<()> {
        if self.format != FORMAT_TAG {
            return Err(Error::ManifestInvalid(format!(
                "format {:?}, expected {FORMAT_TAG:?}",
                self.format
            )));
        }
        if self.dim == 0 {
            return Err(Error::ManifestInvalid("dim must be positive".into()));
        }
        if self.num_items == 0 {
            return Err(Error::ManifestInvalid("num_items must be positive".into()));
        }
        if self.class_names.len() != self.num_classes {
            return Err(Error::ManifestInvalid(format!(
                "{} class names for num_classes {}",
                self.class_names.len(),
                self.num_classes
            )));
        }
        if self.descriptions_per_class.len() != self.num_classes {
            return Err(Error::ManifestInvalid(format!(
                "descriptions_per_class has {} entries for num_classes {}",
                self.descriptions_per_class.len(),
                self.num_classes
            )));
        }
        if self.descriptions_per_class.contains(&0) {
            return Err(Error::ManifestInvalid(
                "every class needs at least one description".into(),
            ));
        }
        for f in [&self.files.images, &self.files.labels, &self.files.text] {
            let p = Path::new(f);
            if f.is_empty() || p.components().count() != 1 || p.is_absolute() {
                return Err(Error::ManifestInvalid(format!(
                    "blob file name {f:?} must be a plain file name"
                )));
            }
        }
        validate_class_names(&self.class_names).map_err(|e| Error::ManifestInvalid(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Re-normalize rows instead of rejecting norm violations.
    pub renormalize: bool,
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<(EmbeddingDataset, ClassTextBank)> {
    load_dataset_with(path, LoadOptions::default())
}

pub fn load_dataset_with(
    path: impl AsRef<Path>,
    opts: LoadOptions,
) -> Result<(EmbeddingDataset, ClassTextBank)> {
    let dir = path.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let raw = fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: DatasetManifest = serde_json::from_slice(&raw)
        .map_err(|e| Error::ManifestInvalid(format!("{}: {e}", manifest_path.display())))?;
    manifest.validate()?;

    let dim = manifest.dim;
    let n = manifest.num_items;
    let text_rows: usize = manifest.descriptions_per_class.iter().sum();

    let mut images = read_f32_blob(dir, &manifest.files.images, n * dim)?;
    let labels = read_u32_blob(dir, &manifest.files.labels, n)?;
    let mut text = read_f32_blob(dir, &manifest.files.text, text_rows * dim)?;

    if opts.renormalize {
        renormalize_rows(&mut images, dim)?;
        renormalize_rows(&mut text, dim)?;
    }

    let items = Matrix::from_vec(n, dim, images)?;
    let dataset = EmbeddingDataset::new(items, labels, manifest.class_names.clone())?;

    let mut per_class = Vec::with_capacity(manifest.num_classes);
    let mut offset = 0;
    for &count in &manifest.descriptions_per_class {
        let chunk = text[offset * dim..(offset + count) * dim].to_vec();
        per_class.push(Matrix::from_vec(count, dim, chunk)?);
        offset += count;
    }
    let mut bank = ClassTextBank::new(dim, per_class)?;
    if let Some(texts) = manifest.description_texts {
        bank = bank.with_description_texts(texts)?;
    }
    Ok((dataset, bank))
}

fn renormalize_rows(values: &mut [f64], dim: usize) -> Result<()> {
    for row in values.chunks_exact_mut(dim) {
        let unit = l2_normalize(row)?;
        for (dst, src) in row.iter_mut().zip(unit) {
            *dst = src as f32 as f64;
        }
    }
    Ok(())
}

fn read_blob(dir: &Path, name: &str, expected: usize) -> Result<Vec<u8>> {
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if bytes.len() != expected {
        return Err(Error::BlobSizeMismatch {
            file: name.to_string(),
            expected,
            actual: bytes.len(),
        });
    }
    Ok(bytes)
}

fn read_f32_blob(dir: &Path, name: &str, count: usize) -> Result<Vec<f64>> {
    let bytes = read_blob(dir, name, count * 4)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn read_u32_blob(dir: &Path, name: &str, count: usize) -> Result<Vec<usize>> {
    let bytes = read_blob(dir, name, count * 4)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect())
}

pub(crate) fn f32_le_bytes<'a>(values: impl IntoIterator<Item = &'a f64>) -> Vec<u8> {
    values
        .into_iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect()
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn save_dataset(
    dataset: &EmbeddingDataset,
    bank: &ClassTextBank,
    path: impl AsRef<Path>,
) -> Result<()> {
    let dir = path.as_ref();
    if bank.dim() != dataset.dim() {
        return Err(Error::DimMismatch {
            expected: dataset.dim(),
            actual: bank.dim(),
        });
    }
    if bank.num_classes() != dataset.num_classes() {
        return Err(Error::ShapeMismatch(format!(
            "bank has {} classes, dataset has {}",
            bank.num_classes(),
            dataset.num_classes()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let manifest = DatasetManifest {
        format: FORMAT_TAG.to_string(),
        dim: dataset.dim(),
        num_items: dataset.len(),
        num_classes: dataset.num_classes(),
        class_names: dataset.class_names().to_vec(),
        descriptions_per_class: bank.descriptions_per_class(),
        files: BlobFiles::default(),
        description_texts: bank.description_texts().map(<[_]>::to_vec),
    };
    let mut json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::ManifestInvalid(e.to_string()))?;
    json.push('\n');
    write_file(&dir.join(MANIFEST_FILE), json.as_bytes())?;

    write_file(
        &dir.join(IMAGES_FILE),
        &f32_le_bytes(dataset.items().as_slice()),
    )?;
    let labels: Vec<u8> = dataset
        .labels()
        .iter()
        .flat_map(|&y| (y as u32).to_le_bytes())
        .collect();
    write_file(&dir.join(LABELS_FILE), &labels)?;
    let text = f32_le_bytes(bank.groups().iter().flat_map(|g| g.as_slice()));
    write_file(&dir.join(TEXT_FILE), &text)
}

/// How many training items each class receives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassSizes {
    Constant(usize),
    Explicit(Vec<usize>),
    /// `⌈base · k^(-alpha)⌉` for class rank `k = 1..K`.
    PowerLaw {
        base: f64,
        alpha: f64,
    },
}

impl ClassSizes {
    pub fn resolve(&self, num_classes: usize) -> Result<Vec<usize>> {
        let counts = match self {
            ClassSizes::Constant(c) => vec![*c; num_classes],
            ClassSizes::Explicit(v) => {
                if v.len() != num_classes {
                    return Err(Error::Config(format!(
                        "{} class sizes for {num_classes} classes",
                        v.len()
                    )));
                }
                v.clone()
            }
            ClassSizes::PowerLaw { base, alpha } => {
                if !(base.is_finite() && *base > 0.0 && alpha.is_finite() && *alpha >= 0.0) {
                    return Err(Error::Config(format!(
                        "power law needs base > 0 and alpha >= 0, got {base}, {alpha}"
                    )));
                }
                (1..=num_classes)
                    .map(|k| {
                        let x = base * (k as f64).powf(-alpha);
                        // absorb rounding noise on exact integers
                        (x - 1e-9).ceil().max(1.0) as usize
                    })
                    .collect()
            }
        };
        if counts.contains(&0) {
            return Err(Error::Config("every class needs at least one item".into()));
        }
        Ok(counts)
    }
}

impl std::str::FromStr for ClassSizes {
    type Err = Error;

    /// Parses either a constant (`"5"`) or `"powerlaw:<base>:<alpha>"`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("invalid per-class spec {s:?}"));
        if let Some(rest) = s.strip_prefix("powerlaw:") {
            let (base, alpha) = rest.split_once(':').ok_or_else(bad)?;
            let base: f64 = base.parse().map_err(|_| bad())?;
            let alpha: f64 = alpha.parse().map_err(|_| bad())?;
            return Ok(ClassSizes::PowerLaw { base, alpha });
        }
        if s.contains(',') {
            let v = s
                .split(',')
                .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()?;
            return Ok(ClassSizes::Explicit(v));
        }
        s.parse().map(ClassSizes::Constant).map_err(|_| bad())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub items_per_class: ClassSizes,
    pub test_per_class: usize,
    pub noise_sigma_image: f64,
    pub noise_sigma_text: f64,
    pub descriptions_per_class: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_classes: 20,
            dim: 64,
            items_per_class: ClassSizes::Constant(50),
            test_per_class: 50,
            noise_sigma_image: 0.6,
            noise_sigma_text: 0.2,
            descriptions_per_class: 1,
            seed: 0,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<Vec<usize>> {
        if self.num_classes < 2 {
            return Err(Error::Config("need at least 2 classes".into()));
        }
        if self.dim == 0 {
            return Err(Error::Config("dim must be positive".into()));
        }
        if self.test_per_class == 0 || self.descriptions_per_class == 0 {
            return Err(Error::Config(
                "test_per_class and descriptions_per_class must be positive".into(),
            ));
        }
        for s in [self.noise_sigma_image, self.noise_sigma_text] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::Config(format!("noise sigma must be >= 0, got {s}")));
            }
        }
        self.items_per_class.resolve(self.num_classes)
    }
}

/// Output of [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub train: EmbeddingDataset,
    pub test: EmbeddingDataset,
    pub bank: ClassTextBank,
}

fn gaussian_vec(rng: &mut Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// Unit vector `normalize(center + sigma * noise)`, rounded to `f32` precision.
fn noisy_unit(rng: &mut Rng, center: &[f64], sigma: f64) -> Result<Vec<f64>> {
    let noise = gaussian_vec(rng, center.len());
    let v: Vec<f64> = center
        .iter()
        .zip(&noise)
        .map(|(c, z)| c + sigma * z)
        .collect();
    Ok(l2_normalize(&v)?
        .into_iter()
        .map(|x| x as f32 as f64)
        .collect())
}

fn draw_split(
    rng: &mut Rng,
    prototypes: &[Vec<f64>],
    counts: &[usize],
    sigma: f64,
    class_names: &[String],
) -> Result<EmbeddingDataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (k, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            rows.push(noisy_unit(rng, &prototypes[k], sigma)?);
            labels.push(k);
        }
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(rng);
    let shuffled: Vec<Vec<f64>> = order.iter().map(|&i| rows[i].clone()).collect();
    let labels = order.iter().map(|&i| labels[i]).collect();
    let items = Matrix::from_rows(prototypes[0].len(), &shuffled)?;
    EmbeddingDataset::new(items, labels, class_names.to_vec())
}

/// Draws Gaussian clusters around random unit prototypes: train and test splits
/// plus a description bank. A pure function of `spec`.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<SyntheticData> {
    let train_counts = spec.validate()?;
    let mut rng = Rng::seed_from_u64(spec.seed);
    let k = spec.num_classes;
    let dim = spec.dim;

    let prototypes = (0..k)
        .map(|_| loop {
            if let Ok(p) = l2_normalize(&gaussian_vec(&mut rng, dim)) {
                break p;
            }
        })
        .collect::<Vec<_>>();

    let mut per_class = Vec::with_capacity(k);
    for proto in &prototypes {
        let rows = (0..spec.descriptions_per_class)
            .map(|_| noisy_unit(&mut rng, proto, spec.noise_sigma_text))
            .collect::<Result<Vec<_>>>()?;
        per_class.push(Matrix::from_rows(dim, &rows)?);
    }
    let bank = ClassTextBank::new(dim, per_class)?;

    let class_names: Vec<String> = (0..k).map(|i| format!("class_{i:03}")).collect();
    let train = draw_split(
        &mut rng,
        &prototypes,
        &train_counts,
        spec.noise_sigma_image,
        &class_names,
    )?;
    let test = draw_split(
        &mut rng,
        &prototypes,
        &vec![spec.test_per_class; k],
        spec.noise_sigma_image,
        &class_names,
    )?;
    Ok(SyntheticData { train, test, bank })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::class_counts;

    fn small_spec() -> SynthSpec {
        SynthSpec {
            num_classes: 3,
            dim: 8,
            items_per_class: ClassSizes::Explicit(vec![50, 10, 2]),
            test_per_class: 4,
            noise_sigma_image: 0.3,
            noise_sigma_text: 0.1,
            descriptions_per_class: 2,
            seed: 7,
        }
    }

    #[test]
    fn synthetic_counts_follow_spec() {
        let data = generate_synthetic(&small_spec()).unwrap();
        assert_eq!(
            class_counts(data.train.labels(), 3).unwrap(),
            vec![50, 10, 2]
        );
        assert_eq!(class_counts(data.test.labels(), 3).unwrap(), vec![4, 4, 4]);
        assert_eq!(data.bank.descriptions_per_class(), vec![2, 2, 2]);
    }

    #[test]
    fn synthetic_is_pure() {
        let a = generate_synthetic(&small_spec()).unwrap();
        let b = generate_synthetic(&small_spec()).unwrap();
        assert_eq!(a, b);
        let mut other = small_spec();
        other.seed = 8;
        assert_ne!(a, generate_synthetic(&other).unwrap());
    }

    #[test]
    fn power_law_sizes() {
        let sizes = "powerlaw:50:1.5".parse::<ClassSizes>().unwrap();
        assert_eq!(sizes.resolve(4).unwrap(), vec![50, 18, 10, 7]);
        let exact = ClassSizes::PowerLaw {
            base: 100.0,
            alpha: 1.0,
        };
        assert_eq!(exact.resolve(4).unwrap(), vec![100, 50, 34, 25]);
        assert_eq!("5".parse::<ClassSizes>().unwrap(), ClassSizes::Constant(5));
        assert!("powerlaw:5".parse::<ClassSizes>().is_err());
        assert!("abc".parse::<ClassSizes>().is_err());
    }

    #[test]
    fn dataset_rejects_bad_labels_and_norms() {
        let items = Matrix::from_rows(2, &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let names = vec!["a".to_string(), "b".to_string()];
        assert!(EmbeddingDataset::new(items.clone(), vec![0, 2], names.clone()).is_err());
        assert!(
            EmbeddingDataset::new(items.clone(), vec![0, 1], vec!["a".into(), "a".into()]).is_err()
        );
        let skewed = Matrix::from_rows(2, &[vec![1.01, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            EmbeddingDataset::new(skewed, vec![0, 1], names.clone()),
            Err(Error::NormViolation { row: 0, .. })
        ));
        assert!(EmbeddingDataset::new(items, vec![0, 1], names).is_ok());
    }

    #[test]
    fn bank_requires_descriptions() {
        let empty = Matrix::zeros(0, 2);
        let one = Matrix::from_rows(2, &[vec![1.0, 0.0]]).unwrap();
        assert!(ClassTextBank::new(2, vec![one.clone(), empty]).is_err());
        assert!(ClassTextBank::new(2, vec![one.clone(), one]).is_ok());
    }
}
