//! Synthetic data, image perturbations and dataset files.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{confusion_metrics, roc_auc, ScoredPredictions};
use crate::learner::{Dataset, LogisticModel};

/// Two Gaussian classes with a shared isotropic covariance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobSpec {
    /// `[negatives, positives]`.
    pub n_per_class: [usize; 2],
    pub dim: usize,
    /// One mean per class.
    pub means: [Vec<f64>; 2],
    /// Standard deviation of every coordinate.
    pub scale: f64,
    /// Fraction of samples whose label is flipped, split evenly between the
    /// classes so the class counts are unchanged.
    #[serde(default)]
    pub label_noise: f64,
    pub seed: u64,
}

impl BlobSpec {
    /// Means at `-separation/2` and `+separation/2` along the first axis, in
    /// units of `scale`.
    pub fn separated(n_per_class: [usize; 2], dim: usize, separation: f64, scale: f64, seed: u64) -> Self {
        let mut m0 = vec![0.0; dim];
        let mut m1 = vec![0.0; dim];
        if dim > 0 {
            m0[0] = -separation * scale / 2.0;
            m1[0] = separation * scale / 2.0;
        }
        Self {
            n_per_class,
            dim,
            means: [m0, m1],
            scale,
            label_noise: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_per_class.iter().any(|&n| n < 1) {
            return Err(Error::Config("every class needs at least one sample".into()));
        }
        if self.dim < 1 || self.means.iter().any(|m| m.len() != self.dim) {
            return Err(Error::Config("class means must have length dim >= 1".into()));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::Config(format!("scale must be > 0, got {}", self.scale)));
        }
        if !(0.0..=1.0).contains(&self.label_noise) {
            return Err(Error::Config(format!("label_noise must lie in [0, 1], got {}", self.label_noise)));
        }
        Ok(())
    }
}

/// Samples `spec`; ids are `s0000`, `s0001`, ... with negatives first.
pub fn generate_blobs(spec: &BlobSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_per_class[0] + spec.n_per_class[1];
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (c, &count) in spec.n_per_class.iter().enumerate() {
        for _ in 0..count {
            let x: Vec<f64> = spec.means[c]
                .iter()
                .map(|m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + spec.scale * z
                })
                .collect();
            features.push(x);
            labels.push(c as u8);
        }
    }
    let per_class = ((spec.label_noise * n as f64) / 2.0).round() as usize;
    if per_class > 0 {
        let per_class = per_class.min(spec.n_per_class[0]).min(spec.n_per_class[1]);
        let offset = [0, spec.n_per_class[0]];
        for c in 0..2 {
            for i in sample(&mut rng, spec.n_per_class[c], per_class) {
                labels[offset[c] + i] = 1 - c as u8;
            }
        }
    }
    let ids = (0..n).map(|i| format!("s{i:04}")).collect();
    Dataset::new(features, labels, ids)
}

/// Grayscale image, row-major, every pixel in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TinyImage {
    pub h: usize,
    pub w: usize,
    pub pixels: Vec<f64>,
    pub label: u8,
}

impl TinyImage {
    pub fn new(h: usize, w: usize, pixels: Vec<f64>, label: u8) -> Result<Self> {
        if pixels.len() != h * w {
            return Err(Error::DimensionMismatch { expected: h * w, got: pixels.len() });
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Validation(format!("pixel {p} outside [0, 1]")));
        }
        if label > 1 {
            return Err(Error::Validation(format!("label {label} is not binary")));
        }
        Ok(Self { h, w, pixels, label })
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.pixels[r * self.w + c]
    }

    fn with_pixels(&self, pixels: Vec<f64>) -> Self {
        Self {
            h: self.h,
            w: self.w,
            pixels: pixels.into_iter().map(|p| p.clamp(0.0, 1.0)).collect(),
            label: self.label,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageSpec {
    pub n_per_class: [usize; 2],
    pub size: usize,
    /// Standard deviation of the additive pixel noise.
    #[serde(default = "default_image_noise")]
    pub noise: f64,
    /// Scale in `[0, 1]` of the per-image shape variation: center jitter,
    /// radius, amplitude and background gradient. 0 renders exact templates.
    #[serde(default = "default_nuisance")]
    pub nuisance: f64,
    /// Mean intensity of the disc or ring above the background.
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    pub seed: u64,
}

fn default_image_noise() -> f64 {
    0.02
}

fn default_nuisance() -> f64 {
    1.0
}

fn default_amplitude() -> f64 {
    TEMPLATE.amplitude
}

impl ImageSpec {
    pub fn new(n_per_class: [usize; 2], size: usize, seed: u64) -> Self {
        Self {
            n_per_class,
            size,
            noise: default_image_noise(),
            nuisance: default_nuisance(),
            amplitude: default_amplitude(),
            seed,
        }
    }
}

/// Per-image rendering parameters.
#[derive(Clone, Copy, Debug)]
struct Shape {
    background: f64,
    gradient: f64,
    angle: f64,
    amplitude: f64,
    dx: f64,
    dy: f64,
    radius: f64,
}

const TEMPLATE: Shape = Shape {
    background: 0.5,
    gradient: 0.0,
    angle: 0.0,
    amplitude: 0.1,
    dx: 0.0,
    dy: 0.0,
    radius: 1.0,
};

fn render(label: u8, size: usize, shape: &Shape) -> Vec<f64> {
    let s = size as f64;
    let cr = (s - 1.0) / 2.0 + shape.dy;
    let cc = (s - 1.0) / 2.0 + shape.dx;
    let (sin, cos) = shape.angle.sin_cos();
    let mut px = Vec::with_capacity(size * size);
    for r in 0..size {
        for c in 0..size {
            let (y, x) = (r as f64, c as f64);
            let along = ((x - (s - 1.0) / 2.0) * cos + (y - (s - 1.0) / 2.0) * sin) / s;
            let dist = ((y - cr).powi(2) + (x - cc).powi(2)).sqrt() / shape.radius;
            let on = if label == 0 {
                dist <= s / 6.0
            } else {
                dist >= s / 4.0 && dist <= s / 2.6
            };
            let v = shape.background + shape.gradient * along + if on { shape.amplitude } else { 0.0 };
            px.push(v.clamp(0.0, 1.0));
        }
    }
    px
}

/// Noise-free template for `label` at `size x size`: flat background plus a
/// centered disc (class 0) or ring (class 1).
pub fn image_template(label: u8, size: usize) -> Vec<f64> {
    render(label, size, &TEMPLATE)
}

/// Seeded disc-vs-ring images, negatives first.
pub fn generate_tiny_images(spec: &ImageSpec) -> Result<Vec<TinyImage>> {
    if spec.size < 8 {
        return Err(Error::Config(format!("image size must be >= 8, got {}", spec.size)));
    }
    if !(spec.noise >= 0.0) || !spec.noise.is_finite() {
        return Err(Error::Config(format!("noise must be >= 0, got {}", spec.noise)));
    }
    if !(0.0..=1.0).contains(&spec.amplitude) {
        return Err(Error::Config(format!("amplitude must lie in [0, 1], got {}", spec.amplitude)));
    }
    if !(0.0..=1.0).contains(&spec.nuisance) {
        return Err(Error::Config(format!("nuisance must lie in [0, 1], got {}", spec.nuisance)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let v = spec.nuisance;
    let jitter = 2.0 * spec.size as f64 / 16.0;
    let mut out = Vec::with_capacity(spec.n_per_class[0] + spec.n_per_class[1]);
    for label in 0..2u8 {
        for _ in 0..spec.n_per_class[label as usize] {
            let mut u = |lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
            let shape = Shape {
                background: TEMPLATE.background + v * u(-0.1, 0.1),
                gradient: v * u(0.0, 0.3),
                angle: u(0.0, std::f64::consts::TAU),
                amplitude: spec.amplitude * (1.0 + v * u(-0.4, 0.4)),
                dx: v * u(-jitter, jitter),
                dy: v * u(-jitter, jitter),
                radius: 1.0 + v * u(-0.2, 0.2),
            };
            let px = render(label, spec.size, &shape)
                .into_iter()
                .map(|t| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (t + spec.noise * z).clamp(0.0, 1.0)
                })
                .collect();
            out.push(TinyImage::new(spec.size, spec.size, px, label)?);
        }
    }
    Ok(out)
}

/// Model input for an image: row-major pixels shifted by `-0.5`, so a flat
/// mid-gray image sits at the origin and gradient descent on the raw `[0, 1]`
/// scale does not have to fight a dominant all-ones direction.
pub fn image_features(img: &TinyImage) -> Vec<f64> {
    img.pixels.iter().map(|p| p - 0.5).collect()
}

/// Model-ready dataset of [`image_features`] with ids `img0000`, ...
pub fn images_to_dataset(images: &[TinyImage]) -> Result<Dataset> {
    Dataset::new(
        images.iter().map(image_features).collect(),
        images.iter().map(|i| i.label).collect(),
        (0..images.len()).map(|i| format!("img{i:04}")).collect(),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    GaussianBlur,
    JpegLike,
    AdditiveNoise,
    Brightness,
    Contrast,
}

impl PerturbationKind {
    pub const ALL: [Self; 5] = [
        Self::GaussianBlur,
        Self::JpegLike,
        Self::AdditiveNoise,
        Self::Brightness,
        Self::Contrast,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::GaussianBlur => "gaussian_blur",
            Self::JpegLike => "jpeg_like",
            Self::AdditiveNoise => "additive_noise",
            Self::Brightness => "brightness",
            Self::Contrast => "contrast",
        }
    }

    /// Parameter at `severity`; severity 0 is the identity strength.
    pub fn strength(self, severity: u8) -> f64 {
        let i = severity as usize;
        match self {
            Self::GaussianBlur => [0.0, 0.5, 1.0, 2.0][i],
            Self::JpegLike => [0.0, 0.05, 0.1, 0.2][i],
            Self::AdditiveNoise => [0.0, 0.05, 0.1, 0.2][i],
            Self::Brightness => [0.0, 0.1, 0.2, 0.3][i],
            Self::Contrast => [1.0, 1.2, 1.5, 2.0][i],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    pub severity: u8,
}

impl PerturbationSpec {
    pub fn new(kind: PerturbationKind, severity: u8) -> Result<Self> {
        let spec = Self { kind, severity };
        spec.validate()?;
        Ok(spec)
    }

    /// Zero-strength variant used to test the harness itself.
    pub fn identity(kind: PerturbationKind) -> Self {
        Self { kind, severity: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.severity) {
            return Err(Error::Config(format!(
                "{} severity must be 1, 2 or 3, got {}",
                self.kind.name(),
                self.severity
            )));
        }
        Ok(())
    }

    /// All five kinds at all three severities.
    pub fn full_grid() -> Vec<Self> {
        PerturbationKind::ALL
            .iter()
            .flat_map(|&kind| (1..=3).map(move |severity| Self { kind, severity }))
            .collect()
    }
}

/// Normalized 1-D Gaussian kernel of radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Reflect-101 index (`-1 -> 1`, `n -> n - 2`).
fn reflect(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let m = i.rem_euclid(period);
    (if m < n as i64 { m } else { period - m }) as usize
}

fn blur(img: &TinyImage, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let (h, w) = (img.h, img.w);
    let mut tmp = vec![0.0; h * w];
    for row in 0..h {
        for col in 0..w {
            tmp[row * w + col] = k
                .iter()
                .enumerate()
                .map(|(j, kv)| kv * img.pixels[row * w + reflect(col as i64 + j as i64 - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for row in 0..h {
        for col in 0..w {
            out[row * w + col] = k
                .iter()
                .enumerate()
                .map(|(j, kv)| kv * tmp[reflect(row as i64 + j as i64 - r, h) * w + col])
                .sum();
        }
    }
    out
}

/// Orthonormal DCT-II matrix of size `n`.
fn dct_matrix(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|k| {
            let a = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
            (0..n)
                .map(|i| a * (std::f64::consts::PI * (i as f64 + 0.5) * k as f64 / n as f64).cos())
                .collect()
        })
        .collect()
}

/// 4x4 block DCT, coefficients rounded to multiples of `step`, inverse DCT.
/// Edge blocks of a size not divisible by 4 use a smaller transform.
fn jpeg_like(img: &TinyImage, step: f64) -> Vec<f64> {
    const B: usize = 4;
    let mut out = img.pixels.clone();
    for r0 in (0..img.h).step_by(B) {
        for c0 in (0..img.w).step_by(B) {
            let bh = B.min(img.h - r0);
            let bw = B.min(img.w - c0);
            let (mh, mw) = (dct_matrix(bh), dct_matrix(bw));
            let block: Vec<Vec<f64>> = (0..bh)
                .map(|i| (0..bw).map(|j| img.get(r0 + i, c0 + j)).collect())
                .collect();
            // coefficients = Mh * block * Mw^T, quantized
            let coef: Vec<Vec<f64>> = (0..bh)
                .map(|u| {
                    (0..bw)
                        .map(|v| {
                            let c: f64 = (0..bh)
                                .map(|i| mh[u][i] * (0..bw).map(|j| block[i][j] * mw[v][j]).sum::<f64>())
                                .sum();
                            step * (c / step).round()
                        })
                        .collect()
                })
                .collect();
            for i in 0..bh {
                for j in 0..bw {
                    let v: f64 = (0..bh)
                        .map(|u| mh[u][i] * (0..bw).map(|vv| coef[u][vv] * mw[vv][j]).sum::<f64>())
                        .sum();
                    out[(r0 + i) * img.w + c0 + j] = v;
                }
            }
        }
    }
    out
}

/// Applies `spec` to `img`. `seed` drives the noise draw and the brightness
/// sign, and the draw is scaled by the severity's strength, so one seed gives
/// the same noise pattern at every severity. The output is clamped to
/// `[0, 1]`.
pub fn perturb(img: &TinyImage, spec: &PerturbationSpec, seed: u64) -> Result<TinyImage> {
    if spec.severity > 3 {
        return Err(Error::Config(format!("unknown severity {}", spec.severity)));
    }
    if spec.severity == 0 {
        return Ok(img.clone());
    }
    let s = spec.kind.strength(spec.severity);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels = match spec.kind {
        PerturbationKind::GaussianBlur => blur(img, s),
        PerturbationKind::JpegLike => jpeg_like(img, s),
        PerturbationKind::AdditiveNoise => img
            .pixels
            .iter()
            .map(|p| {
                let z: f64 = StandardNormal.sample(&mut rng);
                p + s * z
            })
            .collect(),
        PerturbationKind::Brightness => {
            let shift = if rng.random::<bool>() { s } else { -s };
            img.pixels.iter().map(|p| p + shift).collect()
        }
        PerturbationKind::Contrast => img.pixels.iter().map(|p| 0.5 + s * (p - 0.5)).collect(),
    };
    Ok(img.with_pixels(pixels))
}

/// One row of a robustness table; `spec` is `None` for the clean row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub perturbation: String,
    pub severity: u8,
    pub auc: Option<f64>,
    pub accuracy: Option<f64>,
    pub delta_auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessTable {
    pub rows: Vec<RobustnessRow>,
}

impl RobustnessTable {
    pub fn clean(&self) -> &RobustnessRow {
        &self.rows[0]
    }

    pub fn find(&self, kind: PerturbationKind, severity: u8) -> Option<&RobustnessRow> {
        self.rows
            .iter()
            .find(|r| r.perturbation == kind.name() && r.severity == severity)
    }

    /// Writes `perturbation,severity,auc,accuracy,delta_auc`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["perturbation", "severity", "auc", "accuracy", "delta_auc"])?;
        for r in &self.rows {
            w.write_record([
                r.perturbation.clone(),
                r.severity.to_string(),
                opt(r.auc),
                opt(r.accuracy),
                opt(r.delta_auc),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn score_images(model: &LogisticModel, images: &[TinyImage]) -> Result<ScoredPredictions> {
    let probs = images
        .iter()
        .map(|img| crate::learner::logistic_forward(model, &image_features(img)))
        .collect::<Result<Vec<_>>>()?;
    ScoredPredictions::new(probs, images.iter().map(|i| i.label).collect())
}

/// Clean row followed by one row per spec, in the given order. Image `i`
/// under a spec of kind `k` is perturbed with a seed derived from
/// `(seed, k, i)`, shared across severities.
pub fn robustness_eval(
    model: &LogisticModel,
    images: &[TinyImage],
    specs: &[PerturbationSpec],
    seed: u64,
) -> Result<RobustnessTable> {
    if images.is_empty() {
        return Err(Error::Validation("no images to evaluate".into()));
    }
    let clean = score_images(model, images)?;
    let clean_auc = roc_auc(&clean).ok();
    let mut rows = vec![RobustnessRow {
        perturbation: "clean".into(),
        severity: 0,
        auc: clean_auc,
        accuracy: confusion_metrics(&clean, 0.5).accuracy,
        delta_auc: clean_auc.map(|_| 0.0),
    }];
    for spec in specs {
        let perturbed = images
            .iter()
            .enumerate()
            .map(|(i, img)| perturb(img, spec, derive_seed(seed, spec.kind as u64, i as u64)))
            .collect::<Result<Vec<_>>>()?;
        let pred = score_images(model, &perturbed)?;
        let auc = roc_auc(&pred).ok();
        rows.push(RobustnessRow {
            perturbation: spec.kind.name().into(),
            severity: spec.severity,
            auc,
            accuracy: confusion_metrics(&pred, 0.5).accuracy,
            delta_auc: clean_auc.zip(auc).map(|(c, a)| c - a),
        });
    }
    Ok(RobustnessTable { rows })
}

fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = base ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Writes `sample_id,label,f_0,...,f_{d-1}`.
pub fn write_csv_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    write_rows(path, "f", dataset)
}

fn write_rows(path: &Path, prefix: &str, dataset: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["sample_id".to_string(), "label".to_string()];
    header.extend((0..dataset.dim()).map(|j| format!("{prefix}_{j}")));
    w.write_record(&header)?;
    for ((id, label), x) in dataset.sample_ids().iter().zip(dataset.labels()).zip(dataset.features()) {
        let mut rec = vec![id.clone(), label.to_string()];
        rec.extend(x.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_csv_dataset`]. Errors carry the 1-based
/// line number of the offending row.
pub fn load_csv_dataset(path: &Path) -> Result<Dataset> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_path(path)?;
    let header = reader.headers()?.clone();
    if header.len() < 3 || &header[0] != "sample_id" || &header[1] != "label" {
        return Err(parse_err(1, "header must start with sample_id,label and have features".into()));
    }
    let dim = header.len() - 2;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut ids = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        if rec.len() != dim + 2 {
            return Err(parse_err(line, format!("expected {} fields, got {}", dim + 2, rec.len())));
        }
        let id = rec[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(parse_err(line, format!("duplicate sample_id {id}")));
        }
        let label = match &rec[1] {
            "0" => 0,
            "1" => 1,
            other => return Err(parse_err(line, format!("label {other:?} is not 0 or 1"))),
        };
        let x = rec
            .iter()
            .skip(2)
            .map(|f| match f.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_err(line, format!("bad feature value {f:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        ids.push(id);
        labels.push(label);
        features.push(x);
    }
    if ids.is_empty() {
        return Err(parse_err(1, "dataset has no rows".into()));
    }
    Dataset::new(features, labels, ids).map_err(|e| parse_err(1, e.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct ImageShape {
    h: usize,
    w: usize,
}

/// Writes `sample_id,label,px_0,...` plus a `{"h":H,"w":W}` sidecar.
pub fn write_image_set(csv_path: &Path, json_path: &Path, images: &[TinyImage]) -> Result<()> {
    let first = images
        .first()
        .ok_or_else(|| Error::Validation("no images to write".into()))?;
    if images.iter().any(|i| i.h != first.h || i.w != first.w) {
        return Err(Error::Validation("images differ in shape".into()));
    }
    let raw = Dataset::new(
        images.iter().map(|i| i.pixels.clone()).collect(),
        images.iter().map(|i| i.label).collect(),
        (0..images.len()).map(|i| format!("img{i:04}")).collect(),
    )?;
    write_rows(csv_path, "px", &raw)?;
    std::fs::write(json_path, serde_json::to_string(&ImageShape { h: first.h, w: first.w })?)?;
    Ok(())
}

pub fn read_image_set(csv_path: &Path, json_path: &Path) -> Result<Vec<TinyImage>> {
    let shape: ImageShape = serde_json::from_str(&std::fs::read_to_string(json_path)?)?;
    let ds = load_csv_dataset(csv_path)?;
    if ds.dim() != shape.h * shape.w {
        return Err(Error::DimensionMismatch { expected: shape.h * shape.w, got: ds.dim() });
    }
    ds.features()
        .iter()
        .zip(ds.labels())
        .map(|(x, &l)| TinyImage::new(shape.h, shape.w, x.clone(), l))
        .collect()
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;

    fn constant(v: f64, size: usize) -> TinyImage {
        TinyImage::new(size, size, vec![v; size * size], 0).unwrap()
    }

    #[test]
    fn blob_counts_and_noise_keep_classes() {
        let mut spec = BlobSpec::separated([126, 102], 4, 2.0, 1.0, 42);
        spec.label_noise = 0.1;
        let ds = generate_blobs(&spec).unwrap();
        assert_eq!(ds.len(), 228);
        assert_eq!(ds.class_counts(), [126, 102]);
        assert_eq!(ds, generate_blobs(&spec).unwrap());
    }

    #[test]
    fn blob_spec_errors() {
        let mut spec = BlobSpec::separated([0, 5], 2, 2.0, 1.0, 1);
        assert!(generate_blobs(&spec).is_err());
        spec.n_per_class = [5, 5];
        spec.scale = 0.0;
        assert!(generate_blobs(&spec).is_err());
    }

    #[test]
    fn noiseless_images_are_templates() {
        let spec = ImageSpec { n_per_class: [2, 2], size: 12, noise: 0.0, nuisance: 0.0, amplitude: 0.1, seed: 3 };
        let imgs = generate_tiny_images(&spec).unwrap();
        assert_eq!(imgs[0].pixels, image_template(0, 12));
        assert_eq!(imgs[1].pixels, imgs[0].pixels);
        assert_eq!(imgs[3].pixels, image_template(1, 12));
        assert_ne!(imgs[0].pixels, imgs[3].pixels);
        assert!(generate_tiny_images(&ImageSpec { size: 7, ..spec }).is_err());
    }

    #[test]
    fn kernel_sums_to_one() {
        for sigma in [0.5, 1.0, 2.0] {
            let k = gaussian_kernel(sigma);
            assert_abs_diff_eq!(k.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            assert_eq!(k.len(), 2 * (3.0 * sigma).ceil() as usize + 1);
        }
    }

    #[test]
    fn blur_of_constant_is_constant() {
        let img = constant(0.37, 16);
        let out = perturb(&img, &PerturbationSpec::new(PerturbationKind::GaussianBlur, 3).unwrap(), 0).unwrap();
        for p in out.pixels {
            assert_abs_diff_eq!(p, 0.37, epsilon = 1e-15);
        }
    }

    #[test]
    fn identity_strength_changes_nothing() {
        let imgs = generate_tiny_images(&ImageSpec::new([1, 1], 10, 9)).unwrap();
        for kind in PerturbationKind::ALL {
            let out = perturb(&imgs[1], &PerturbationSpec::identity(kind), 5).unwrap();
            assert_eq!(out, imgs[1]);
        }
    }

    #[test]
    fn contrast_fixes_mid_gray() {
        let img = constant(0.5, 8);
        for severity in 1..=3 {
            let out = perturb(&img, &PerturbationSpec::new(PerturbationKind::Contrast, severity).unwrap(), 0).unwrap();
            assert_eq!(out, img);
        }
    }

    #[test]
    fn severity_validation() {
        assert!(PerturbationSpec::new(PerturbationKind::Brightness, 0).is_err());
        assert!(PerturbationSpec::new(PerturbationKind::Brightness, 4).is_err());
        assert_eq!(PerturbationSpec::full_grid().len(), 15);
    }

    #[test]
    fn jpeg_error_within_quantization_bound() {
        // each coefficient moves at most step / 2; a pixel mixes all of them
        // through the inverse transform
        let m = dct_matrix(4);
        let col = (0..4).map(|i| (0..4).map(|u| m[u][i].abs()).sum::<f64>()).fold(0.0, f64::max);
        let imgs = generate_tiny_images(&ImageSpec { noise: 0.2, ..ImageSpec::new([2, 2], 16, 4) }).unwrap();
        let mut last = f64::INFINITY;
        for step in [0.2, 0.1, 0.05, 1e-2, 1e-3, 1e-4, 1e-6] {
            let dev = imgs
                .iter()
                .flat_map(|img| jpeg_like(img, step).into_iter().zip(img.pixels.clone()).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            assert!(dev <= step / 2.0 * col * col + 1e-12, "step {step}: {dev}");
            assert!(dev <= last);
            last = dev;
        }
        assert!(last < 1e-5);
    }

    #[test]
    fn generators_are_deterministic() {
        let spec = ImageSpec::new([3, 3], 12, 8);
        assert_eq!(generate_tiny_images(&spec).unwrap(), generate_tiny_images(&spec).unwrap());
        assert_ne!(generate_tiny_images(&spec).unwrap(), generate_tiny_images(&ImageSpec { seed: 9, ..spec }).unwrap());
    }

    #[test]
    fn reflect_101() {
        let idx: Vec<usize> = (-3..8).map(|i| reflect(i, 5)).collect();
        assert_eq!(idx, vec![3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1]);
    }

    proptest! {
        #[test]
        fn perturbations_stay_in_bounds(seed in 0u64..500, k in 0usize..5, severity in 1u8..=3) {
            let imgs = generate_tiny_images(&ImageSpec { noise: 0.4, ..ImageSpec::new([1, 1], 10, seed) }).unwrap();
            let spec = PerturbationSpec::new(PerturbationKind::ALL[k], severity).unwrap();
            for img in &imgs {
                let out = perturb(img, &spec, seed).unwrap();
                prop_assert!(out.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
            }
        }
    }
}
