//! Weighted binary logistic regression, curriculum-staged training and the
//! stratified cross-validation harness.
//!
//! The training objective is
//!
//! ```text
//! L(theta, b) = (1/N) sum_i w_i * bce(y_i, sigma(<theta, x_i> + b)) + (l2/2) ||theta||^2
//! ```
//!
//! minimized by full-batch gradient descent. Difficulty scores are always
//! computed from a fold's training partition alone.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::difficulty::{stratify, CurriculumPartition, DifficultyMetric, DifficultyRecord, ProbabilityVector};
use crate::digest::json_digest;
use crate::error::{Error, Result};
use crate::evaluation::{roc_auc, EvaluationReport, RunMetrics, ScoredPredictions};
use crate::linalg::dot;
use crate::weighting::{WeightInputs, WeightingConfig};

/// Probability clamp used inside the cross-entropy.
pub const BCE_EPSILON: f64 = 1e-12;

/// Largest `f64` below 1.
const ONE_MINUS_ULP: f64 = 1.0 - f64::EPSILON / 2.0;

/// Feature matrix with binary labels and unique sample ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<Vec<f64>>,
    labels: Vec<u8>,
    sample_ids: Vec<String>,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<u8>, sample_ids: Vec<String>) -> Result<Self> {
        let n = features.len();
        if labels.len() != n || sample_ids.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: if labels.len() != n { labels.len() } else { sample_ids.len() },
            });
        }
        if n < 2 {
            return Err(Error::Validation(format!("dataset needs at least 2 samples, got {n}")));
        }
        let dim = features[0].len();
        for (i, row) in features.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: row.len() });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("sample {} has non-finite features", sample_ids[i])));
            }
        }
        if let Some(l) = labels.iter().find(|l| **l > 1) {
            return Err(Error::Validation(format!("label {l} is not binary")));
        }
        let mut seen = BTreeSet::new();
        for id in &sample_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Validation(format!("duplicate sample_id {id}")));
            }
        }
        Ok(Self { features, labels, sample_ids })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    /// `[negatives, positives]`.
    pub fn class_counts(&self) -> [usize; 2] {
        class_counts(&self.labels, 0..self.len())
    }
}

fn class_counts(labels: &[u8], idx: impl IntoIterator<Item = usize>) -> [usize; 2] {
    let mut c = [0, 0];
    for i in idx {
        c[labels[i] as usize] += 1;
    }
    c
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub theta: Vec<f64>,
    pub bias: f64,
}

impl LogisticModel {
    pub fn zeros(dim: usize) -> Self {
        Self { theta: vec![0.0; dim], bias: 0.0 }
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        dot(&self.theta, x) + self.bias
    }

    /// Positive-class probabilities for `rows`.
    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter().map(|x| logistic_forward(self, x)).collect()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `sigma(<theta, x> + b)`, kept strictly inside `(0, 1)`.
pub fn logistic_forward(model: &LogisticModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.theta.len() {
        return Err(Error::DimensionMismatch {
            expected: model.theta.len(),
            got: x.len(),
        });
    }
    Ok(sigmoid(model.logit(x)).clamp(f64::MIN_POSITIVE, ONE_MINUS_ULP))
}

/// Loss and gradient of the weighted objective.
#[derive(Clone, Debug, PartialEq)]
pub struct BceGradient {
    pub loss: f64,
    pub grad_theta: Vec<f64>,
    pub grad_bias: f64,
    /// Samples whose probability hit the `[eps, 1 - eps]` clamp.
    pub clamped: usize,
}

/// Per-sample cross-entropy with the probability clamp, and its derivative
/// in the logit. Inside the clamped region the loss is constant, so the
/// derivative there is zero.
fn bce_term(z: f64, y: u8) -> (f64, f64, bool) {
    // sigma(-z) = 1 - sigma(z) without cancellation
    let tail = sigmoid(-z.abs());
    if tail < BCE_EPSILON {
        let p_y = if (z > 0.0) == (y == 1) { 1.0 - BCE_EPSILON } else { BCE_EPSILON };
        (-p_y.ln(), 0.0, true)
    } else {
        (softplus(z) - f64::from(y) * z, sigmoid(z) - f64::from(y), false)
    }
}

/// Weighted cross-entropy `(1/N) sum w_i l_i + (l2/2)||theta||^2` and its
/// exact gradient. The bias is not regularized.
pub fn weighted_bce_grad(
    model: &LogisticModel,
    rows: &[Vec<f64>],
    labels: &[u8],
    weights: &[f64],
    l2: f64,
) -> Result<BceGradient> {
    if rows.len() != labels.len() || rows.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            got: if labels.len() != rows.len() { labels.len() } else { weights.len() },
        });
    }
    if rows.is_empty() {
        return Err(Error::Validation("empty batch".into()));
    }
    if !(l2 >= 0.0) {
        return Err(Error::Parameter(format!("l2 must be >= 0, got {l2}")));
    }
    let d = model.theta.len();
    let n = rows.len() as f64;
    let mut loss = 0.0;
    let mut grad_theta = vec![0.0; d];
    let mut grad_bias = 0.0;
    let mut clamped = 0;
    for ((x, &y), &w) in rows.iter().zip(labels).zip(weights) {
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        let (l, dz, was_clamped) = bce_term(model.logit(x), y);
        clamped += usize::from(was_clamped);
        loss += w * l;
        let coef = w * dz;
        for (g, xi) in grad_theta.iter_mut().zip(x) {
            *g += coef * xi;
        }
        grad_bias += coef;
    }
    loss /= n;
    grad_bias /= n;
    for (g, t) in grad_theta.iter_mut().zip(&model.theta) {
        *g = *g / n + l2 * t;
    }
    loss += l2 / 2.0 * dot(&model.theta, &model.theta);
    Ok(BceGradient { loss, grad_theta, grad_bias, clamped })
}

/// One gradient step in place.
fn step(model: &mut LogisticModel, grad: &BceGradient, lr: f64) {
    for (t, g) in model.theta.iter_mut().zip(&grad.grad_theta) {
        *t -= lr * g;
    }
    model.bias -= lr * grad.grad_bias;
}

/// Plain full-batch descent for a fixed number of epochs with fixed weights.
pub fn descend(
    mut model: LogisticModel,
    rows: &[Vec<f64>],
    labels: &[u8],
    weights: &[f64],
    l2: f64,
    learning_rate: f64,
    epochs: usize,
) -> Result<LogisticModel> {
    for _ in 0..epochs {
        let g = weighted_bce_grad(&model, rows, labels, weights, l2)?;
        step(&mut model, &g, learning_rate);
    }
    Ok(model)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurriculumMode {
    /// Every sample from the first epoch; only the weights differ.
    #[default]
    AllAtOnce,
    /// Easy first, then each harder stage added after `epochs_per_stage`.
    CumulativeStages,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurriculumScheduleConfig {
    #[serde(default)]
    pub mode: CurriculumMode,
    #[serde(default = "default_epochs_per_stage")]
    pub epochs_per_stage: usize,
}

fn default_epochs_per_stage() -> usize {
    10
}

impl Default for CurriculumScheduleConfig {
    fn default() -> Self {
        Self {
            mode: CurriculumMode::AllAtOnce,
            epochs_per_stage: default_epochs_per_stage(),
        }
    }
}

impl CurriculumScheduleConfig {
    /// Number of stages unlocked at zero-based `epoch`.
    pub fn unlocked(&self, epoch: usize, n_stages: usize) -> usize {
        match self.mode {
            CurriculumMode::AllAtOnce => n_stages,
            CurriculumMode::CumulativeStages => (epoch / self.epochs_per_stage + 1).min(n_stages),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EarlyStopMetric {
    #[default]
    ValAuc,
    ValLoss,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub weighting: WeightingConfig,
    #[serde(default)]
    pub curriculum: CurriculumScheduleConfig,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub early_stop_patience: usize,
    #[serde(default)]
    pub early_stop_metric: EarlyStopMetric,
    #[serde(default)]
    pub l2: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_lr() -> f64 {
    0.5
}

fn default_max_epochs() -> usize {
    200
}

fn default_patience() -> usize {
    20
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            weighting: WeightingConfig::fossil(1.0),
            curriculum: CurriculumScheduleConfig::default(),
            learning_rate: default_lr(),
            max_epochs: default_max_epochs(),
            early_stop_patience: default_patience(),
            early_stop_metric: EarlyStopMetric::ValAuc,
            l2: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weighting.validate()?;
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Parameter(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if self.max_epochs < 1 || self.early_stop_patience < 1 || self.curriculum.epochs_per_stage < 1 {
            return Err(Error::Parameter(
                "max_epochs, early_stop_patience and epochs_per_stage must be >= 1".into(),
            ));
        }
        if !(self.l2 >= 0.0) || !self.l2.is_finite() {
            return Err(Error::Parameter(format!("l2 must be >= 0, got {}", self.l2)));
        }
        Ok(())
    }
}

/// Difficulty of the training partition: scores aligned with `train_idx`
/// and the partition built from them.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldDifficulty {
    pub scores: Vec<f64>,
    pub partition: CurriculumPartition,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Weighted objective over the active samples after the epoch's step.
    pub train_loss: f64,
    /// Unweighted mean cross-entropy on the validation partition.
    pub val_loss: f64,
    pub val_auc: Option<f64>,
    pub active_n: usize,
    pub temperature: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    /// Parameters at the best early-stop epoch.
    pub model: LogisticModel,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    /// Models after every epoch, index `epoch - 1`.
    pub trajectory: Vec<LogisticModel>,
    pub clamped: usize,
    pub warnings: Vec<String>,
}

/// Writes `epoch,train_loss,val_loss,val_auc,active_n,temperature`.
pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "val_loss", "val_auc", "active_n", "temperature"])?;
    for r in history {
        w.write_record([
            r.epoch.to_string(),
            r.train_loss.to_string(),
            r.val_loss.to_string(),
            r.val_auc.map(|v| v.to_string()).unwrap_or_default(),
            r.active_n.to_string(),
            r.temperature.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn gather<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i].clone()).collect()
}

fn mean_bce(model: &LogisticModel, rows: &[Vec<f64>], labels: &[u8]) -> f64 {
    let n = rows.len() as f64;
    rows.iter()
        .zip(labels)
        .map(|(x, &y)| bce_term(model.logit(x), y).0)
        .sum::<f64>()
        / n
}

/// Trains on `train_idx`, early-stopping on `val_idx`.
///
/// In cumulative mode patience only starts counting, and checkpoints only
/// become eligible, once every stage is unlocked.
pub fn train(
    dataset: &Dataset,
    train_idx: &[usize],
    val_idx: &[usize],
    difficulty: &FoldDifficulty,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_disjoint(train_idx, val_idx, dataset.len())?;
    if difficulty.scores.len() != train_idx.len() {
        return Err(Error::DimensionMismatch {
            expected: train_idx.len(),
            got: difficulty.scores.len(),
        });
    }
    let counts = class_counts(dataset.labels(), train_idx.iter().copied());
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::Validation("training partition has a single class".into()));
    }

    let ids = dataset.sample_ids();
    let stages: Vec<usize> = train_idx
        .iter()
        .zip(&difficulty.scores)
        .map(|(&i, &s)| {
            difficulty
                .partition
                .stage(&ids[i])
                .unwrap_or_else(|| difficulty.partition.stage_for(s))
        })
        .collect();
    let n_stages = difficulty.partition.n_stages;

    let x_train = gather(dataset.features(), train_idx);
    let y_train = gather(dataset.labels(), train_idx);
    let x_val = gather(dataset.features(), val_idx);
    let y_val = gather(dataset.labels(), val_idx);

    let mut warnings = Vec::new();
    let mut metric = config.early_stop_metric;
    let val_counts = class_counts(dataset.labels(), val_idx.iter().copied());
    if metric == EarlyStopMetric::ValAuc && (val_counts[0] == 0 || val_counts[1] == 0) {
        warnings.push("validation partition has a single class; early stopping on val_loss".to_string());
        metric = EarlyStopMetric::ValLoss;
    }

    let mut model = LogisticModel::zeros(dataset.dim());
    let mut history = Vec::with_capacity(config.max_epochs);
    let mut trajectory = Vec::with_capacity(config.max_epochs);
    let mut clamped = 0;
    let mut best: Option<(f64, usize)> = None;
    let mut since_best = 0;

    for e in 0..config.max_epochs {
        let unlocked = config.curriculum.unlocked(e, n_stages);
        let active: Vec<usize> = (0..train_idx.len()).filter(|&j| stages[j] < unlocked).collect();
        let rows = gather(&x_train, &active);
        let labels = gather(&y_train, &active);
        let scores = gather(&difficulty.scores, &active);

        let (p_true, losses): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .zip(&labels)
            .map(|(x, &y)| {
                let z = model.logit(x);
                let p = sigmoid(z);
                (if y == 1 { p } else { 1.0 - p }, bce_term(z, y).0)
            })
            .unzip();
        let weights = config.weighting.weights(
            active.len(),
            e,
            WeightInputs {
                difficulties: Some(&scores),
                p_true: Some(&p_true),
                losses: Some(&losses),
            },
        )?;

        let g = weighted_bce_grad(&model, &rows, &labels, weights.as_slice(), config.l2)?;
        clamped += g.clamped;
        step(&mut model, &g, config.learning_rate);
        let after = weighted_bce_grad(&model, &rows, &labels, weights.as_slice(), config.l2)?;

        let val_probs = model.predict(&x_val)?;
        let val_auc = ScoredPredictions::new(val_probs, y_val.clone())
            .ok()
            .and_then(|p| roc_auc(&p).ok());
        let val_loss = mean_bce(&model, &x_val, &y_val);
        history.push(EpochRecord {
            epoch: e + 1,
            train_loss: after.loss,
            val_loss,
            val_auc,
            active_n: active.len(),
            temperature: config.weighting.temperature_at(e),
        });
        trajectory.push(model.clone());
        if !after.loss.is_finite() {
            return Err(Error::Validation(format!("training loss diverged at epoch {}", e + 1)));
        }

        if unlocked < n_stages {
            continue;
        }
        // Stored so that larger is better.
        let score = match metric {
            EarlyStopMetric::ValAuc => val_auc.unwrap_or(f64::NEG_INFINITY),
            EarlyStopMetric::ValLoss => -val_loss,
        };
        match best {
            Some((b, _)) if score <= b => {
                since_best += 1;
                if since_best >= config.early_stop_patience {
                    break;
                }
            }
            _ => {
                best = Some((score, e + 1));
                since_best = 0;
            }
        }
    }

    let best_epoch = best.map(|(_, e)| e).unwrap_or(history.len());
    Ok(TrainOutcome {
        model: trajectory[best_epoch - 1].clone(),
        best_epoch,
        history,
        trajectory,
        clamped,
        warnings,
    })
}

fn check_disjoint(train_idx: &[usize], val_idx: &[usize], n: usize) -> Result<()> {
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::Validation("train and validation indices must be non-empty".into()));
    }
    if let Some(i) = train_idx.iter().chain(val_idx).find(|&&i| i >= n) {
        return Err(Error::Validation(format!("index {i} out of range for {n} samples")));
    }
    let train: BTreeSet<usize> = train_idx.iter().copied().collect();
    if let Some(i) = val_idx.iter().find(|i| train.contains(i)) {
        return Err(Error::Validation(format!("index {i} is in both train and validation")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    /// `[negatives, positives]` in the training partition.
    pub train_counts: [usize; 2],
    pub val_counts: [usize; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<Fold>,
}

/// Stratified `k`-fold split.
///
/// Each class is shuffled with the seed, then dealt round-robin over the
/// folds, smaller class first, with the fold pointer carrying over from one
/// class to the next. Every fold gets `floor` or `ceil` of its class share
/// and fold sizes differ by at most one.
pub fn make_folds(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Parameter(format!("k must be >= 2, got {k}")));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &l) in dataset.labels().iter().enumerate() {
        by_class[l as usize].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if members.len() < k {
            return Err(Error::Validation(format!(
                "class {c} has {} samples, fewer than k = {k}",
                members.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for members in &mut by_class {
        members.shuffle(&mut rng);
    }
    let mut order = [0usize, 1];
    order.sort_by_key(|&c| (by_class[c].len(), c));

    let mut val: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut pointer = 0;
    for c in order {
        for &i in &by_class[c] {
            val[pointer].push(i);
            pointer = (pointer + 1) % k;
        }
    }
    let folds = val
        .into_iter()
        .map(|mut v| {
            v.sort_unstable();
            let in_val: BTreeSet<usize> = v.iter().copied().collect();
            let train: Vec<usize> = (0..dataset.len()).filter(|i| !in_val.contains(i)).collect();
            Fold {
                train_counts: class_counts(dataset.labels(), train.iter().copied()),
                val_counts: class_counts(dataset.labels(), v.iter().copied()),
                train,
                val: v,
            }
        })
        .collect();
    Ok(FoldPlan { k, seed, folds })
}

/// Probe model used to score difficulty inside a fold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    #[serde(default = "default_probe_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_probe_l2")]
    pub l2: f64,
}

fn default_probe_epochs() -> usize {
    50
}

fn default_probe_l2() -> f64 {
    1e-3
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: default_probe_epochs(),
            learning_rate: default_lr(),
            l2: default_probe_l2(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_stages")]
    pub n_stages: usize,
    #[serde(default)]
    pub metric: DifficultyMetric,
    #[serde(default)]
    pub probe: ProbeConfig,
    #[serde(default)]
    pub train: TrainConfig,
    /// Worker threads; 0 uses all cores.
    #[serde(default)]
    pub workers: usize,
}

fn default_k() -> usize {
    5
}

fn default_stages() -> usize {
    4
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            k: default_k(),
            n_stages: default_stages(),
            metric: DifficultyMetric::default(),
            probe: ProbeConfig::default(),
            train: TrainConfig::default(),
            workers: 0,
        }
    }
}

/// Fold-local difficulty: a uniform probe trained on `train_idx` scores its
/// own training samples, which are then stratified into `n_stages`.
pub fn fold_difficulty(
    dataset: &Dataset,
    train_idx: &[usize],
    config: &CvConfig,
) -> Result<(FoldDifficulty, Vec<DifficultyRecord>)> {
    let rows = gather(dataset.features(), train_idx);
    let labels = gather(dataset.labels(), train_idx);
    let probe = descend(
        LogisticModel::zeros(dataset.dim()),
        &rows,
        &labels,
        &vec![1.0; rows.len()],
        config.probe.l2,
        config.probe.learning_rate,
        config.probe.epochs,
    )?;
    let records = train_idx
        .iter()
        .zip(&rows)
        .map(|(&i, x)| {
            let p = logistic_forward(&probe, x)?;
            let pv = ProbabilityVector::new(vec![1.0 - p, p])?;
            Ok(DifficultyRecord::new(
                dataset.sample_ids()[i].clone(),
                config.metric.score(&pv),
                dataset.labels()[i] as usize,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let partition = stratify(&records, config.n_stages.min(records.len()))?;
    let scores = records.iter().map(|r| r.score).collect();
    Ok((FoldDifficulty { scores, partition }, records))
}

/// Everything one (seed, fold) unit produced.
#[derive(Clone, Debug, PartialEq)]
pub struct CvRun {
    pub seed: u64,
    pub fold: usize,
    /// Ids fed to difficulty scoring; must not meet `val_ids`.
    pub scoring_ids: Vec<String>,
    pub val_ids: Vec<String>,
    pub thresholds: Vec<f64>,
    pub val_counts: [usize; 2],
    pub outcome: Result<TrainOutcome, String>,
    pub metrics: RunMetrics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvOutcome {
    pub report: EvaluationReport,
    /// Sorted by (seed, fold).
    pub runs: Vec<CvRun>,
    pub plans: Vec<FoldPlan>,
}

impl CvOutcome {
    pub fn failed(&self) -> impl Iterator<Item = &CvRun> {
        self.runs.iter().filter(|r| r.outcome.is_err())
    }
}

fn cv_unit(dataset: &Dataset, config: &CvConfig, seed: u64, fold_no: usize, fold: &Fold) -> CvRun {
    let ids = dataset.sample_ids();
    let val_ids: Vec<String> = fold.val.iter().map(|&i| ids[i].clone()).collect();
    let mut train_config = config.train.clone();
    train_config.seed = seed;

    let result = fold_difficulty(dataset, &fold.train, config).and_then(|(diff, records)| {
        let outcome = train(dataset, &fold.train, &fold.val, &diff, &train_config)?;
        let probs = outcome.model.predict(&gather(dataset.features(), &fold.val))?;
        let preds = ScoredPredictions::new(probs, gather(dataset.labels(), &fold.val))?;
        Ok((diff, records, outcome, preds))
    });
    match result {
        Ok((diff, records, outcome, preds)) => CvRun {
            seed,
            fold: fold_no,
            scoring_ids: records.into_iter().map(|r| r.sample_id).collect(),
            val_ids,
            thresholds: diff.partition.thresholds,
            val_counts: fold.val_counts,
            metrics: RunMetrics::evaluate(seed, fold_no, &preds),
            outcome: Ok(outcome),
        },
        Err(e) => CvRun {
            seed,
            fold: fold_no,
            scoring_ids: Vec::new(),
            val_ids,
            thresholds: Vec::new(),
            val_counts: fold.val_counts,
            metrics: RunMetrics::failed(seed, fold_no, e.to_string()),
            outcome: Err(e.to_string()),
        },
    }
}

/// Stratified cross-validation over every seed. Failed units are kept in
/// the report with a failure marker.
pub fn run_cv(dataset: &Dataset, config: &CvConfig, seeds: &[u64]) -> Result<CvOutcome> {
    config.train.validate()?;
    if seeds.is_empty() {
        return Err(Error::Validation("no seeds given".into()));
    }
    let plans = seeds
        .iter()
        .map(|&s| make_folds(dataset, config.k, s))
        .collect::<Result<Vec<_>>>()?;
    let units: Vec<(u64, usize, &Fold)> = plans
        .iter()
        .flat_map(|p| p.folds.iter().enumerate().map(move |(f, fold)| (p.seed, f, fold)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let mut runs: Vec<CvRun> = pool.install(|| {
        units
            .par_iter()
            .map(|&(seed, f, fold)| cv_unit(dataset, config, seed, f, fold))
            .collect()
    });
    runs.sort_by_key(|r| (r.seed, r.fold));
    // the worker count does not change results, so it stays out of the hash
    let hashed = CvConfig { workers: 0, ..config.clone() };
    let report = EvaluationReport::aggregate(
        json_digest(&hashed)?,
        runs.iter().map(|r| r.metrics.clone()).collect(),
    );
    Ok(CvOutcome { report, runs, plans })
}

/// Model parameters tied to the config that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub theta: Vec<f64>,
    pub bias: f64,
    pub config_hash: String,
}

impl Checkpoint {
    pub fn new(model: &LogisticModel, config_hash: impl Into<String>) -> Self {
        Self {
            theta: model.theta.clone(),
            bias: model.bias,
            config_hash: config_hash.into(),
        }
    }

    pub fn model(&self) -> LogisticModel {
        LogisticModel {
            theta: self.theta.clone(),
            bias: self.bias,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    fn toy(n_neg: usize, n_pos: usize) -> Dataset {
        let n = n_neg + n_pos;
        Dataset::new(
            (0..n).map(|i| vec![i as f64 / n as f64]).collect(),
            (0..n).map(|i| u8::from(i >= n_neg)).collect(),
            (0..n).map(|i| format!("s{i}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn forward_examples() {
        let m = LogisticModel::zeros(2);
        assert_eq!(logistic_forward(&m, &[3.0, -1.0]).unwrap(), 0.5);
        let m = LogisticModel { theta: vec![1.0, -1.0], bias: 0.0 };
        assert_abs_diff_eq!(logistic_forward(&m, &[2.0, 1.0]).unwrap(), 0.7310585786300049, epsilon = 1e-15);
        let sat = LogisticModel { theta: vec![0.0], bias: 50.0 };
        let p = logistic_forward(&sat, &[0.0]).unwrap();
        assert!(p < 1.0 && p.is_finite());
        assert!(logistic_forward(&m, &[1.0]).is_err());
    }

    #[test]
    fn bce_examples() {
        let m = LogisticModel::zeros(1);
        let g = weighted_bce_grad(&m, &[vec![1.0], vec![2.0]], &[1, 0], &[0.0, 0.0], 0.0).unwrap();
        assert_eq!((g.loss, g.grad_theta[0], g.grad_bias), (0.0, 0.0, 0.0));
        let g = weighted_bce_grad(&m, &[vec![1.0]], &[1], &[1.0], 0.0).unwrap();
        assert_abs_diff_eq!(g.loss, std::f64::consts::LN_2, epsilon = 1e-15);
    }

    #[test]
    fn clamp_is_counted() {
        let m = LogisticModel { theta: vec![40.0], bias: 0.0 };
        let g = weighted_bce_grad(&m, &[vec![1.0], vec![-1.0]], &[0, 1], &[1.0, 1.0], 0.0).unwrap();
        assert_eq!(g.clamped, 2);
        assert_abs_diff_eq!(g.loss, -(BCE_EPSILON.ln()), epsilon = 1e-9);
        assert_eq!(g.grad_theta[0], 0.0);
    }

    #[test]
    fn balanced_folds_get_one_of_each() {
        let ds = toy(5, 5);
        let plan = make_folds(&ds, 5, 42).unwrap();
        assert!(plan.folds.iter().all(|f| f.val_counts == [1, 1]));
    }

    #[test]
    fn paper_fold_composition() {
        let ds = toy(126, 102);
        let plan = make_folds(&ds, 5, 42).unwrap();
        let sizes: Vec<usize> = plan.folds.iter().map(|f| f.val.len()).collect();
        assert_eq!(sizes, vec![46, 46, 46, 45, 45]);
        let val: Vec<[usize; 2]> = plan.folds.iter().map(|f| f.val_counts).collect();
        assert_eq!(val, vec![[25, 21], [25, 21], [26, 20], [25, 20], [25, 20]]);
        assert_eq!(plan.folds[0].train_counts, [101, 81]);
    }

    #[test]
    fn folds_reject_small_class() {
        assert!(make_folds(&toy(2, 8), 5, 1).is_err());
        assert!(make_folds(&toy(5, 5), 1, 1).is_err());
    }

    #[test]
    fn cumulative_unlocking() {
        let c = CurriculumScheduleConfig { mode: CurriculumMode::CumulativeStages, epochs_per_stage: 3 };
        let u: Vec<usize> = (0..12).map(|e| c.unlocked(e, 4)).collect();
        assert_eq!(u, vec![1, 1, 1, 2, 2, 2, 3, 3, 3, 4, 4, 4]);
    }

    #[test]
    fn dataset_rejects_duplicates() {
        let err = Dataset::new(vec![vec![0.0], vec![1.0]], vec![0, 1], vec!["a".into(), "a".into()]);
        assert!(err.is_err());
    }

    #[test]
    fn tiny_cv_completes() {
        let ds = toy(2, 2);
        let config = CvConfig { k: 2, n_stages: 2, ..CvConfig::default() };
        let out = run_cv(&ds, &config, &[42]).unwrap();
        assert_eq!(out.runs.len(), 2);
    }
}
