//! Config-driven experiment commands.
//!
//! One strict TOML file describes a whole experiment. Every command writes
//! into its own directory under the output root and refuses to touch a
//! non-empty directory unless forced. Reports carry the config hash; each
//! command directory also gets a `manifest.json` with SHA-256 digests of the
//! files it read and wrote. The manifest is the only artifact with a
//! timestamp, so everything else is byte-identical across reruns.
//!
//! Output layout:
//!
//! ```text
//! <out>/data/{blobs,images,images_eval}.csv (+ image .json sidecars)
//! <out>/difficulty/{probe_probs,records,partition}.csv, partition.json, stats.json
//! <out>/train/<scheme>/report.json, fold_plans.json, histories/, checkpoints/
//! <out>/regret/report.json, traces/
//! <out>/stats/<a>_vs_<b>/comparison.json
//! <out>/perturb/robustness.{csv,json}
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    generate_blobs, generate_tiny_images, images_to_dataset, load_csv_dataset, read_image_set, robustness_eval,
    write_csv_dataset, write_image_set, BlobSpec, ImageSpec, PerturbationSpec, RobustnessTable,
};
use crate::difficulty::{
    class_bias_check, read_probability_csv, score_rows, stratify, validate_stages, write_partition,
    write_records_csv, DifficultyMetric, PartitionWarning, StageValidationReport,
};
use crate::digest::{file_digest, json_digest};
use crate::error::{Error, Result};
use crate::evaluation::{compare_reports, EvaluationReport, StatsEntry, TestResult};
use crate::learner::{
    descend, logistic_forward, run_cv, write_history_csv, Checkpoint, CurriculumScheduleConfig,
    CvConfig, Dataset, EarlyStopMetric, FoldPlan, LogisticModel, ProbeConfig, TrainConfig,
};
use crate::oco::{horizon_sweep, FeasibleBall, GeneratedStream, HorizonRun, LossFamily, SlopeFit, StreamOrder};
use crate::weighting::{Scheme, WeightingConfig};

/// Environment variable holding the default output root.
pub const OUT_ENV: &str = "FOSSIL_OUT";
const DEFAULT_OUT: &str = "fossil_out";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub difficulty: DifficultySection,
    #[serde(default = "default_weighting")]
    pub weighting: WeightingConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub cv: CvSection,
    #[serde(default)]
    pub regret: RegretSection,
    #[serde(default)]
    pub perturb: PerturbSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_seeds() -> Vec<u64> {
    vec![42, 77, 123]
}

fn default_weighting() -> WeightingConfig {
    WeightingConfig::fossil(1.0)
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: default_seeds(),
            data: DataSection::default(),
            difficulty: DifficultySection::default(),
            weighting: default_weighting(),
            train: TrainSection::default(),
            cv: CvSection::default(),
            regret: RegretSection::default(),
            perturb: PerturbSection::default(),
            output: OutputSection::default(),
        }
    }
}

/// Datasets written by `generate`. Inside an explicit `[data]` table a
/// missing entry means "not generated".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default)]
    pub blobs: Option<BlobSpec>,
    #[serde(default)]
    pub images: Option<ImageSpec>,
    /// Held-out images for `perturb`; falls back to `images` when absent.
    #[serde(default)]
    pub images_eval: Option<ImageSpec>,
}

/// Imbalanced, overlapping two-class benchmark: 126/102 samples in five
/// dimensions, means 1.5 standard deviations apart, 10% label noise.
pub fn benchmark_blobs(seed: u64) -> BlobSpec {
    BlobSpec {
        label_noise: 0.1,
        ..BlobSpec::separated([126, 102], 5, 1.5, 1.0, seed)
    }
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            blobs: Some(benchmark_blobs(42)),
            images: Some(ImageSpec::new([50, 50], 16, 42)),
            images_eval: Some(ImageSpec::new([100, 100], 16, 1042)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DifficultySection {
    #[serde(default)]
    pub metric: DifficultyMetric,
    #[serde(default = "default_stages")]
    pub n_stages: usize,
    /// `sample_id,label,p_0,...` file to score. Without it, `difficulty`
    /// scores the training dataset with a probe model.
    #[serde(default)]
    pub probabilities: Option<PathBuf>,
}

fn default_stages() -> usize {
    4
}

impl Default for DifficultySection {
    fn default() -> Self {
        Self {
            metric: DifficultyMetric::default(),
            n_stages: default_stages(),
            probabilities: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    #[default]
    Blobs,
    Images,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Blobs => "blobs",
            Self::Images => "images",
        }
    }
}

/// Training settings; the weighting comes from the top-level section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default)]
    pub dataset: DatasetKind,
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

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            dataset: DatasetKind::default(),
            curriculum: CurriculumScheduleConfig::default(),
            learning_rate: default_lr(),
            max_epochs: default_max_epochs(),
            early_stop_patience: default_patience(),
            early_stop_metric: EarlyStopMetric::default(),
            l2: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvSection {
    #[serde(default = "default_k")]
    pub k: usize,
    /// Worker threads; 0 uses all cores. Not part of the config hash.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub probe: ProbeConfig,
}

fn default_k() -> usize {
    5
}

impl Default for CvSection {
    fn default() -> Self {
        Self {
            k: default_k(),
            workers: 0,
            probe: ProbeConfig::default(),
        }
    }
}

/// Seeded convex streams run at several horizons. Stream `i` uses seed
/// `seed + i`; families cycle in blocks of `streams_per_family`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegretSection {
    #[serde(default = "default_regret_dim")]
    pub dim: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_families")]
    pub families: Vec<LossFamily>,
    #[serde(default = "default_streams_per_family")]
    pub streams_per_family: usize,
    /// Round weights `exp(-d / temperature)` from seeded difficulties; unit
    /// weights when `weighted` is false.
    #[serde(default = "default_true")]
    pub weighted: bool,
    #[serde(default = "default_regret_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub order: StreamOrder,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<usize>,
}

fn default_regret_dim() -> usize {
    2
}

fn default_radius() -> f64 {
    2.0
}

fn default_families() -> Vec<LossFamily> {
    vec![LossFamily::Quadratic, LossFamily::Logistic]
}

fn default_streams_per_family() -> usize {
    5
}

fn default_true() -> bool {
    true
}

fn default_regret_temperature() -> f64 {
    1.0
}

fn default_horizons() -> Vec<usize> {
    vec![100, 1_000, 10_000]
}

impl Default for RegretSection {
    fn default() -> Self {
        Self {
            dim: default_regret_dim(),
            radius: default_radius(),
            families: default_families(),
            streams_per_family: default_streams_per_family(),
            weighted: true,
            temperature: default_regret_temperature(),
            order: StreamOrder::default(),
            seed: 0,
            horizons: default_horizons(),
        }
    }
}

impl RegretSection {
    pub fn recipes(&self) -> Vec<GeneratedStream> {
        self.families
            .iter()
            .flat_map(|&family| std::iter::repeat_n(family, self.streams_per_family))
            .enumerate()
            .map(|(i, family)| GeneratedStream {
                family,
                dim: self.dim,
                rounds: 1,
                seed: self.seed.wrapping_add(i as u64),
                temperature: self.weighted.then_some(self.temperature),
                order: self.order,
            })
            .collect()
    }

    pub fn ball(&self) -> Result<FeasibleBall> {
        FeasibleBall::new(vec![0.0; self.dim], self.radius)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbSection {
    #[serde(default = "PerturbationSpec::full_grid")]
    pub specs: Vec<PerturbationSpec>,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to the first seed's fold-0 checkpoint of the current scheme.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
}

impl Default for PerturbSection {
    fn default() -> Self {
        Self {
            specs: PerturbationSpec::full_grid(),
            seed: 0,
            checkpoint: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Toml(e) => Error::Config(format!("{}: {e}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("seed list has duplicates".into()));
        }
        if let Some(b) = &self.data.blobs {
            b.validate()?;
        }
        if self.difficulty.n_stages < 2 {
            return Err(Error::Config("difficulty.n_stages must be >= 2".into()));
        }
        self.train_config().validate()?;
        if self.cv.k < 2 {
            return Err(Error::Config(format!("cv.k must be >= 2, got {}", self.cv.k)));
        }
        let r = &self.regret;
        if r.dim < 1 || r.families.is_empty() || r.streams_per_family < 1 {
            return Err(Error::Config("regret needs dim >= 1 and at least one stream".into()));
        }
        if r.horizons.is_empty() || r.horizons.contains(&0) {
            return Err(Error::Config("regret.horizons must be non-empty and positive".into()));
        }
        if r.weighted && !(r.temperature > 0.0 && r.temperature.is_finite()) {
            return Err(Error::Config(format!("regret.temperature must be > 0, got {}", r.temperature)));
        }
        r.ball()?;
        for spec in &self.perturb.specs {
            spec.validate()?;
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            weighting: self.weighting,
            curriculum: t.curriculum,
            learning_rate: t.learning_rate,
            max_epochs: t.max_epochs,
            early_stop_patience: t.early_stop_patience,
            early_stop_metric: t.early_stop_metric,
            l2: t.l2,
            seed: 0,
        }
    }

    pub fn cv_config(&self) -> CvConfig {
        CvConfig {
            k: self.cv.k,
            n_stages: self.difficulty.n_stages,
            metric: self.difficulty.metric,
            probe: self.cv.probe.clone(),
            train: self.train_config(),
            workers: self.cv.workers,
        }
    }

    /// Hash of everything that can change a result: the worker count and
    /// the output location are left out.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.cv.workers = 0;
        c.output.dir = None;
        json_digest(&c)
    }

    /// Hash of the sections that determine a trained model. Checkpoints
    /// carry it, so editing e.g. the perturbation grid keeps them valid.
    pub fn model_hash(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Key<'a> {
            seeds: &'a [u64],
            blobs: &'a Option<BlobSpec>,
            images: &'a Option<ImageSpec>,
            difficulty_metric: DifficultyMetric,
            n_stages: usize,
            weighting: &'a WeightingConfig,
            train: &'a TrainSection,
            k: usize,
            probe: &'a ProbeConfig,
        }
        json_digest(&Key {
            seeds: &self.seeds,
            blobs: &self.data.blobs,
            images: &self.data.images,
            difficulty_metric: self.difficulty.metric,
            n_stages: self.difficulty.n_stages,
            weighting: &self.weighting,
            train: &self.train,
            k: self.cv.k,
            probe: &self.cv.probe,
        })
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seeds: Option<Vec<u64>>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub weighting: Option<Scheme>,
    pub force: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written next to every command's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub tool_version: String,
    pub timestamp: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

/// What a command did.
#[derive(Clone, Debug, PartialEq)]
pub struct CommandOutput {
    pub command: String,
    pub dir: PathBuf,
    /// Written files, manifest excluded.
    pub outputs: Vec<PathBuf>,
    /// Failed units, e.g. `seed 42 fold 3: ...`.
    pub failures: Vec<String>,
    /// Warnings and short result lines for the user.
    pub notes: Vec<String>,
}

impl CommandOutput {
    pub fn succeeded(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.dir.join("manifest.json")
    }
}

#[derive(Serialize)]
struct DifficultyStats<'a> {
    config_hash: &'a str,
    n_samples: usize,
    stage_sizes: Vec<usize>,
    thresholds: &'a [f64],
    warnings: &'a [PartitionWarning],
    stage_validation: Option<StageValidationReport>,
    stage_validation_note: Option<String>,
    class_bias: Option<TestResult>,
    class_bias_note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub config_hash: String,
    pub ball: FeasibleBall,
    pub recipes: Vec<GeneratedStream>,
    pub runs: Vec<HorizonRun>,
    pub mean_regret: Vec<(usize, f64)>,
    pub slope: Option<SlopeFit>,
    pub slope_note: Option<String>,
    pub all_within_bound: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub label_a: String,
    pub label_b: String,
    pub config_hash_a: String,
    pub config_hash_b: String,
    pub entries: Vec<StatsEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub config_hash: String,
    pub model_hash: String,
    pub checkpoint: String,
    pub n_images: usize,
    pub seed: u64,
    pub table: RobustnessTable,
}

fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::Fossil => "fossil",
        Scheme::Focal => "focal",
        Scheme::Meta => "meta",
        Scheme::Uniform => "uniform",
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn require(path: &Path, hint: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Validation(format!("{} not found; {hint}", path.display())))
    }
}

/// A validated config bound to an output root.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub force: bool,
}

impl Experiment {
    /// Applies `overrides` to `config`. The output root is the first of
    /// `--out`, `output.dir`, `$FOSSIL_OUT` and `./fossil_out`.
    pub fn new(mut config: ExperimentConfig, overrides: Overrides) -> Result<Self> {
        if let Some(seeds) = overrides.seeds {
            config.seeds = seeds;
        }
        if let Some(w) = overrides.workers {
            config.cv.workers = w;
        }
        if let Some(s) = overrides.weighting {
            config.weighting.scheme = s;
        }
        config.validate()?;
        let out = overrides
            .out
            .or_else(|| config.output.dir.clone())
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        Ok(Self {
            config,
            out,
            force: overrides.force,
        })
    }

    /// Loads `path` when given, defaults otherwise.
    pub fn from_args(config: Option<&Path>, overrides: Overrides) -> Result<Self> {
        let cfg = match config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        Self::new(cfg, overrides)
    }

    pub fn data_dir(&self) -> PathBuf {
        self.out.join("data")
    }

    pub fn dataset_path(&self, kind: DatasetKind) -> PathBuf {
        self.data_dir().join(format!("{}.csv", kind.name()))
    }

    pub fn train_dir(&self) -> PathBuf {
        self.out.join("train").join(scheme_name(self.config.weighting.scheme))
    }

    pub fn checkpoint_path(&self, seed: u64, fold: usize) -> PathBuf {
        self.train_dir().join("checkpoints").join(format!("seed{seed}_fold{fold}.json"))
    }

    /// Creates `dir`, refusing when it already holds files and `force` is off.
    fn prepare(&self, dir: &Path) -> Result<()> {
        if !self.force && dir.is_dir() && std::fs::read_dir(dir)?.next().is_some() {
            return Err(Error::Refused(format!(
                "{} already contains outputs; pass --force to overwrite",
                dir.display()
            )));
        }
        std::fs::create_dir_all(dir)?;
        Ok(())
    }

    fn digests(&self, paths: &[PathBuf]) -> Result<Vec<FileDigest>> {
        paths
            .iter()
            .map(|p| {
                let shown = p.strip_prefix(&self.out).unwrap_or(p);
                Ok(FileDigest {
                    path: shown.to_string_lossy().replace('\\', "/"),
                    sha256: file_digest(p)?,
                })
            })
            .collect()
    }

    fn finish(&self, output: CommandOutput, inputs: &[PathBuf]) -> Result<CommandOutput> {
        let manifest = RunManifest {
            command: output.command.clone(),
            config_hash: self.config.hash()?,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            inputs: self.digests(inputs)?,
            outputs: self.digests(&output.outputs)?,
        };
        write_json(&output.manifest_path(), &manifest)?;
        Ok(output)
    }

    /// The training dataset and the files it was read from. Images go
    /// through [`images_to_dataset`] so training and evaluation see the same
    /// features.
    fn load_training_data(&self) -> Result<(Dataset, Vec<PathBuf>)> {
        let kind = self.config.train.dataset;
        let path = self.dataset_path(kind);
        require(&path, "run `generate` first")?;
        match kind {
            DatasetKind::Blobs => Ok((load_csv_dataset(&path)?, vec![path])),
            DatasetKind::Images => {
                let json = path.with_extension("json");
                let ds = images_to_dataset(&read_image_set(&path, &json)?)?;
                Ok((ds, vec![path, json]))
            }
        }
    }

    /// Writes every dataset configured in `[data]`.
    pub fn generate(&self) -> Result<CommandOutput> {
        let data = &self.config.data;
        if data.blobs.is_none() && data.images.is_none() && data.images_eval.is_none() {
            return Err(Error::Config("[data] configures no dataset".into()));
        }
        let dir = self.data_dir();
        self.prepare(&dir)?;
        let mut outputs = Vec::new();
        let mut notes = Vec::new();
        if let Some(spec) = &data.blobs {
            let ds = generate_blobs(spec)?;
            let path = dir.join("blobs.csv");
            write_csv_dataset(&path, &ds)?;
            let [neg, pos] = ds.class_counts();
            notes.push(format!("blobs: {} rows ({neg} negative, {pos} positive)", ds.len()));
            outputs.push(path);
        }
        for (name, spec) in [("images", &data.images), ("images_eval", &data.images_eval)] {
            if let Some(spec) = spec {
                let images = generate_tiny_images(spec)?;
                let csv = dir.join(format!("{name}.csv"));
                let json = dir.join(format!("{name}.json"));
                write_image_set(&csv, &json, &images)?;
                notes.push(format!("{name}: {} images of {}x{}", images.len(), spec.size, spec.size));
                outputs.extend([csv, json]);
            }
        }
        self.finish(
            CommandOutput {
                command: "generate".into(),
                dir,
                outputs,
                failures: Vec::new(),
                notes,
            },
            &[],
        )
    }

    /// Scores a probability file (or probe predictions on the training
    /// dataset), stratifies it and tests the stages.
    pub fn difficulty(&self, probabilities: Option<&Path>) -> Result<CommandOutput> {
        let dir = self.out.join("difficulty");
        let source = probabilities
            .map(Path::to_path_buf)
            .or_else(|| self.config.difficulty.probabilities.clone());
        let (inputs, probs_path) = match source {
            Some(p) => {
                require(&p, "check difficulty.probabilities")?;
                self.prepare(&dir)?;
                (vec![p.clone()], p)
            }
            None => {
                let (ds, data_paths) = self.load_training_data()?;
                self.prepare(&dir)?;
                let path = dir.join("probe_probs.csv");
                self.write_probe_probabilities(&ds, &path)?;
                (data_paths, path)
            }
        };
        let rows = read_probability_csv(&probs_path)?;
        let mut records = score_rows(&rows, self.config.difficulty.metric);
        let partition = stratify(&records, self.config.difficulty.n_stages.min(records.len()))?;
        partition.annotate(&mut records);

        let records_path = dir.join("records.csv");
        let part_csv = dir.join("partition.csv");
        let part_json = dir.join("partition.json");
        let stats_path = dir.join("stats.json");
        write_records_csv(&records_path, &records)?;
        write_partition(&part_csv, &part_json, &partition, &records)?;

        let (stage_validation, stage_validation_note) = split(validate_stages(&partition, &records));
        let (class_bias, class_bias_note) = split(class_bias_check(&records));
        let hash = self.config.hash()?;
        write_json(
            &stats_path,
            &DifficultyStats {
                config_hash: &hash,
                n_samples: records.len(),
                stage_sizes: partition.stage_sizes(),
                thresholds: &partition.thresholds,
                warnings: &partition.warnings,
                stage_validation,
                stage_validation_note,
                class_bias,
                class_bias_note,
            },
        )?;

        let mut notes = vec![format!("stage sizes {:?}", partition.stage_sizes())];
        notes.extend(partition.warnings.iter().map(|w| format!("warning: {w:?}")));
        let mut outputs = Vec::new();
        if probs_path.starts_with(&dir) {
            outputs.push(probs_path);
        }
        outputs.extend([records_path, part_csv, part_json, stats_path]);
        self.finish(
            CommandOutput {
                command: "difficulty".into(),
                dir,
                outputs,
                failures: Vec::new(),
                notes,
            },
            &inputs,
        )
    }

    fn write_probe_probabilities(&self, ds: &Dataset, path: &Path) -> Result<()> {
        let probe = &self.config.cv.probe;
        let model = descend(
            LogisticModel::zeros(ds.dim()),
            ds.features(),
            ds.labels(),
            &vec![1.0; ds.len()],
            probe.l2,
            probe.learning_rate,
            probe.epochs,
        )?;
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["sample_id", "label", "p_0", "p_1"])?;
        for ((x, &y), id) in ds.features().iter().zip(ds.labels()).zip(ds.sample_ids()) {
            let p = logistic_forward(&model, x)?;
            w.write_record([id.clone(), y.to_string(), (1.0 - p).to_string(), p.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Cross-validates over every seed and writes the aggregate report,
    /// per-run histories and checkpoints.
    pub fn train(&self) -> Result<CommandOutput> {
        let (ds, data_paths) = self.load_training_data()?;
        let dir = self.train_dir();
        self.prepare(&dir)?;
        let cv = run_cv(&ds, &self.config.cv_config(), &self.config.seeds)?;
        let hash = self.config.hash()?;
        let model_hash = self.config.model_hash()?;

        let histories = dir.join("histories");
        let checkpoints = dir.join("checkpoints");
        std::fs::create_dir_all(&histories)?;
        std::fs::create_dir_all(&checkpoints)?;
        let mut outputs = Vec::new();
        let mut failures = Vec::new();
        let mut notes = Vec::new();
        for run in &cv.runs {
            match &run.outcome {
                Ok(outcome) => {
                    let h = histories.join(format!("seed{}_fold{}.csv", run.seed, run.fold));
                    write_history_csv(&h, &outcome.history)?;
                    let c = self.checkpoint_path(run.seed, run.fold);
                    Checkpoint::new(&outcome.model, model_hash.clone()).save(&c)?;
                    notes.extend(
                        outcome
                            .warnings
                            .iter()
                            .map(|w| format!("seed {} fold {}: {w}", run.seed, run.fold)),
                    );
                    outputs.extend([h, c]);
                }
                Err(e) => failures.push(format!("seed {} fold {}: {e}", run.seed, run.fold)),
            }
        }
        let report = EvaluationReport {
            config_hash: hash,
            ..cv.report
        };
        let report_path = dir.join("report.json");
        write_json(&report_path, &report)?;
        let plans_path = dir.join("fold_plans.json");
        write_json(&plans_path, &cv.plans)?;
        outputs.extend([report_path, plans_path]);
        if let Some(auc) = report.mean("auc") {
            notes.push(format!(
                "{} runs, mean validation AUC {auc:.4}",
                report.runs.len()
            ));
        }
        self.finish(
            CommandOutput {
                command: "train".into(),
                dir,
                outputs,
                failures,
                notes,
            },
            &data_paths,
        )
    }

    /// Runs the configured streams at every horizon and records regret,
    /// bounds and the log-log slope.
    pub fn regret(&self) -> Result<CommandOutput> {
        let dir = self.out.join("regret");
        self.prepare(&dir)?;
        let r = &self.config.regret;
        let ball = r.ball()?;
        let recipes = r.recipes();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.cv.workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        let sweep = pool.install(|| horizon_sweep(&recipes, &ball, &r.horizons))?;

        let traces = dir.join("traces");
        std::fs::create_dir_all(&traces)?;
        let mut outputs = Vec::new();
        for (run, trace) in sweep.runs.iter().zip(&sweep.traces) {
            let p = traces.join(format!("stream{:02}_T{}.csv", run.stream, run.horizon));
            trace.write_csv(&p)?;
            outputs.push(p);
        }
        let all_within_bound = sweep.all_within_bound();
        let report = RegretReport {
            config_hash: self.config.hash()?,
            ball,
            recipes,
            runs: sweep.runs,
            mean_regret: sweep.mean_regret,
            slope: sweep.slope,
            slope_note: sweep.slope_note,
            all_within_bound,
        };
        let report_path = dir.join("report.json");
        write_json(&report_path, &report)?;
        outputs.push(report_path);

        let mut notes = vec![format!("all runs within bound: {all_within_bound}")];
        match (&report.slope, &report.slope_note) {
            (Some(s), _) => notes.push(format!("log-log slope {:.3}", s.slope)),
            (None, Some(n)) => notes.push(format!("no slope: {n}")),
            (None, None) => {}
        }
        let failures = report
            .runs
            .iter()
            .filter(|run| !run.within_bound)
            .map(|run| format!("stream {} T={}: regret {} exceeds bound {}", run.stream, run.horizon, run.final_regret, run.bound))
            .collect();
        self.finish(
            CommandOutput {
                command: "regret".into(),
                dir,
                outputs,
                failures,
                notes,
            },
            &[],
        )
    }

    /// Paired tests of report `a` against report `b`.
    pub fn stats(&self, a: &Path, b: &Path) -> Result<CommandOutput> {
        require(a, "expected a report.json written by `train`")?;
        require(b, "expected a report.json written by `train`")?;
        let ra: EvaluationReport = read_json(a)?;
        let rb: EvaluationReport = read_json(b)?;
        let (la, lb) = (report_label(a), report_label(b));
        let entries = compare_reports(&ra, &rb, &la, &lb)?;
        let dir = self.out.join("stats").join(format!("{la}_vs_{lb}"));
        self.prepare(&dir)?;
        let path = dir.join("comparison.json");
        let computed = entries.iter().filter(|e| e.p_value.is_some()).count();
        write_json(
            &path,
            &ComparisonReport {
                label_a: la,
                label_b: lb,
                config_hash_a: ra.config_hash,
                config_hash_b: rb.config_hash,
                entries,
            },
        )?;
        self.finish(
            CommandOutput {
                command: "stats".into(),
                dir,
                outputs: vec![path],
                failures: Vec::new(),
                notes: vec![format!("{computed} of 16 tests have p-values")],
            },
            &[a.to_path_buf(), b.to_path_buf()],
        )
    }

    /// Evaluates a checkpoint on the evaluation images under every
    /// configured perturbation.
    pub fn perturb(&self, checkpoint: Option<&Path>) -> Result<CommandOutput> {
        let ckpt_path = checkpoint
            .map(Path::to_path_buf)
            .or_else(|| self.config.perturb.checkpoint.clone())
            .unwrap_or_else(|| self.checkpoint_path(self.config.seeds[0], 0));
        require(&ckpt_path, "run `train` on the image dataset first")?;
        let ckpt = Checkpoint::load(&ckpt_path)?;
        let model_hash = self.config.model_hash()?;
        if ckpt.config_hash != model_hash {
            return Err(Error::Refused(format!(
                "checkpoint {} was trained under config {}, the current config is {}; retrain first",
                ckpt_path.display(),
                ckpt.config_hash,
                model_hash
            )));
        }
        let name = if self.config.data.images_eval.is_some() { "images_eval" } else { "images" };
        let csv = self.data_dir().join(format!("{name}.csv"));
        let json = self.data_dir().join(format!("{name}.json"));
        require(&csv, "run `generate` with an image dataset first")?;
        let images = read_image_set(&csv, &json)?;
        let model = ckpt.model();
        if model.theta.len() != images[0].pixels.len() {
            return Err(Error::DimensionMismatch {
                expected: model.theta.len(),
                got: images[0].pixels.len(),
            });
        }
        let dir = self.out.join("perturb");
        self.prepare(&dir)?;
        let p = &self.config.perturb;
        let table = robustness_eval(&model, &images, &p.specs, p.seed)?;
        let csv_out = dir.join("robustness.csv");
        let json_out = dir.join("robustness.json");
        table.write_csv(&csv_out)?;
        let clean_auc = table.clean().auc;
        write_json(
            &json_out,
            &RobustnessReport {
                config_hash: self.config.hash()?,
                model_hash,
                checkpoint: ckpt_path
                    .file_name()
                    .map(|f| f.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                n_images: images.len(),
                seed: p.seed,
                table,
            },
        )?;
        let notes = vec![format!(
            "{} rows, clean AUC {}",
            p.specs.len() + 1,
            clean_auc.map_or("undefined".into(), |a| format!("{a:.4}"))
        )];
        self.finish(
            CommandOutput {
                command: "perturb".into(),
                dir,
                outputs: vec![csv_out, json_out],
                failures: Vec::new(),
                notes,
            },
            &[ckpt_path, csv, json],
        )
    }
}

fn split<T>(r: Result<T>) -> (Option<T>, Option<String>) {
    match r {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

/// `train/<scheme>/report.json` is labelled `<scheme>`; other files by stem.
fn report_label(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    if stem == "report" {
        if let Some(parent) = path.parent().and_then(Path::file_name) {
            return parent.to_string_lossy().into_owned();
        }
    }
    stem
}

/// Reads a fold plan file written by `train`.
pub fn read_fold_plans(path: &Path) -> Result<Vec<FoldPlan>> {
    read_json(path)
}
