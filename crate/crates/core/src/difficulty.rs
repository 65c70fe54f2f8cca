//! Per-sample difficulty scores and quantile curriculum stages.
//!
//! A difficulty score summarizes how uncertain a probe model is about one
//! sample: `1 - max_c p_c` for the softmax score, or the Shannon entropy of
//! the prediction. Scores are grouped into ordered stages (Easy, Medium,
//! Hard, Very Hard for four stages) at the empirical quantiles of the scores
//! being partitioned.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{kruskal_wallis, mann_whitney_u, TestResult};

/// Tolerance on `sum(p) == 1`.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Predicted class probabilities for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::Validation(format!(
                "probability vector needs at least 2 classes, got {}",
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Validation(format!("probability {p} outside [0, 1]")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Validation(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(Self(probs))
    }

    /// Binary prediction `[1 - p, p]` from a positive-class probability.
    pub fn binary(p_positive: f64) -> Result<Self> {
        Self::new(vec![1.0 - p_positive, p_positive])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn n_classes(&self) -> usize {
        self.0.len()
    }
}

/// `1 - max_c p_c`, in `[0, 1 - 1/C]`.
pub fn softmax_difficulty(p: &ProbabilityVector) -> f64 {
    let max = p.0.iter().fold(0.0f64, |m, &v| m.max(v));
    let upper = 1.0 - 1.0 / p.n_classes() as f64;
    (1.0 - max).clamp(0.0, upper)
}

/// Shannon entropy in nats with `0 ln 0 = 0`, in `[0, ln C]`.
pub fn entropy_difficulty(p: &ProbabilityVector) -> f64 {
    let mut terms: Vec<f64> = p
        .0
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| -v * v.ln())
        .collect();
    // fixed summation order keeps the score permutation invariant
    terms.sort_by(f64::total_cmp);
    let h: f64 = terms.iter().sum();
    h.clamp(0.0, (p.n_classes() as f64).ln())
}

/// Which score to derive from a probability vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifficultyMetric {
    #[default]
    Softmax,
    Entropy,
    /// Entropy divided by `ln C`, mapped onto `[0, 1]`.
    NormalizedEntropy,
}

impl DifficultyMetric {
    pub fn score(self, p: &ProbabilityVector) -> f64 {
        match self {
            Self::Softmax => softmax_difficulty(p),
            Self::Entropy => entropy_difficulty(p),
            Self::NormalizedEntropy => {
                entropy_difficulty(p) / (p.n_classes() as f64).ln()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifficultyRecord {
    pub sample_id: String,
    pub score: f64,
    pub label: usize,
    pub stage: Option<usize>,
}

impl DifficultyRecord {
    pub fn new(sample_id: impl Into<String>, score: f64, label: usize) -> Self {
        Self {
            sample_id: sample_id.into(),
            score,
            label,
            stage: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionWarning {
    /// Every score was identical; a single stage was produced.
    DegenerateAllScoresEqual,
    /// Tied quantiles collapsed some stages; fewer than requested remain.
    MergedTiedQuantiles,
}

/// Assignment of samples to ordered stages.
#[derive(Clone, Debug, PartialEq)]
pub struct CurriculumPartition {
    pub stage_of: BTreeMap<String, usize>,
    /// Strictly ascending cut points; `n_stages - 1` of them.
    pub thresholds: Vec<f64>,
    pub n_stages: usize,
    pub warnings: Vec<PartitionWarning>,
}

impl CurriculumPartition {
    /// Stage of `score`: the number of thresholds strictly below it, so a
    /// score equal to a threshold goes to the lower stage.
    pub fn stage_for(&self, score: f64) -> usize {
        self.thresholds.partition_point(|&t| t < score)
    }

    pub fn stage(&self, sample_id: &str) -> Option<usize> {
        self.stage_of.get(sample_id).copied()
    }

    pub fn stage_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_stages];
        for &s in self.stage_of.values() {
            sizes[s] += 1;
        }
        sizes
    }

    pub fn is_degenerate(&self) -> bool {
        self.warnings
            .contains(&PartitionWarning::DegenerateAllScoresEqual)
    }

    /// Copies each record's stage into `records`.
    pub fn annotate(&self, records: &mut [DifficultyRecord]) {
        for r in records {
            r.stage = self.stage(&r.sample_id);
        }
    }
}

/// Linear-interpolation quantile of ascending `sorted` at `q` in `[0, 1]`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Splits `records` into `n_stages` stages at the `s / n_stages` empirical
/// quantiles of their scores.
///
/// Thresholds come from `records` alone. Tied quantiles are merged and
/// empty stages dropped, which is flagged in `warnings`; identical scores
/// everywhere give a single stage.
pub fn stratify(records: &[DifficultyRecord], n_stages: usize) -> Result<CurriculumPartition> {
    if records.is_empty() {
        return Err(Error::Validation("cannot stratify an empty record set".into()));
    }
    if n_stages < 2 {
        return Err(Error::Parameter(format!("n_stages must be >= 2, got {n_stages}")));
    }
    if n_stages > records.len() {
        return Err(Error::Parameter(format!(
            "{n_stages} stages requested for {} records",
            records.len()
        )));
    }
    if let Some(r) = records.iter().find(|r| !r.score.is_finite()) {
        return Err(Error::Validation(format!(
            "sample {} has non-finite score",
            r.sample_id
        )));
    }
    let mut ids = BTreeSet::new();
    for r in records {
        if !ids.insert(r.sample_id.as_str()) {
            return Err(Error::Validation(format!("duplicate sample_id {}", r.sample_id)));
        }
    }

    let mut sorted: Vec<f64> = records.iter().map(|r| r.score).collect();
    sorted.sort_by(f64::total_cmp);

    if sorted[0] == sorted[sorted.len() - 1] {
        return Ok(CurriculumPartition {
            stage_of: records.iter().map(|r| (r.sample_id.clone(), 0)).collect(),
            thresholds: Vec::new(),
            n_stages: 1,
            warnings: vec![PartitionWarning::DegenerateAllScoresEqual],
        });
    }

    let mut cuts: Vec<f64> = (1..n_stages)
        .map(|s| quantile_sorted(&sorted, s as f64 / n_stages as f64))
        .collect();
    cuts.dedup();

    let raw_stage = |score: f64| cuts.partition_point(|&t| t < score);
    let mut occupied = vec![false; cuts.len() + 1];
    for r in records {
        occupied[raw_stage(r.score)] = true;
    }
    let kept: Vec<usize> = (0..occupied.len()).filter(|&s| occupied[s]).collect();
    let mut remap = vec![usize::MAX; occupied.len()];
    for (new, &old) in kept.iter().enumerate() {
        remap[old] = new;
    }
    // lower boundary of each surviving stage after the first
    let thresholds: Vec<f64> = kept[1..].iter().map(|&old| cuts[old - 1]).collect();

    let mut warnings = Vec::new();
    if kept.len() < n_stages {
        warnings.push(PartitionWarning::MergedTiedQuantiles);
    }
    Ok(CurriculumPartition {
        stage_of: records
            .iter()
            .map(|r| (r.sample_id.clone(), remap[raw_stage(r.score)]))
            .collect(),
        thresholds,
        n_stages: kept.len(),
        warnings,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StagePairTest {
    pub lower: usize,
    pub upper: usize,
    pub result: TestResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageValidationReport {
    /// Mann–Whitney U of the lower stage against the upper one, for every
    /// stage pair.
    pub pairwise: Vec<StagePairTest>,
    pub kruskal_wallis: TestResult,
}

fn scores_by_stage(
    partition: &CurriculumPartition,
    records: &[DifficultyRecord],
) -> Result<Vec<Vec<f64>>> {
    let mut groups = vec![Vec::new(); partition.n_stages];
    for r in records {
        let stage = partition.stage(&r.sample_id).ok_or_else(|| {
            Error::Validation(format!("sample {} is not in the partition", r.sample_id))
        })?;
        groups[stage].push(r.score);
    }
    Ok(groups)
}

/// Pairwise Mann–Whitney tests and an overall Kruskal–Wallis test of stage
/// separation.
pub fn validate_stages(
    partition: &CurriculumPartition,
    records: &[DifficultyRecord],
) -> Result<StageValidationReport> {
    if partition.n_stages < 2 {
        return Err(Error::Degenerate(
            "stage validation needs at least two stages".into(),
        ));
    }
    let groups = scores_by_stage(partition, records)?;
    if let Some(empty) = groups.iter().position(Vec::is_empty) {
        return Err(Error::EmptyStage(empty));
    }
    let mut pairwise = Vec::new();
    for lower in 0..groups.len() {
        for upper in lower + 1..groups.len() {
            pairwise.push(StagePairTest {
                lower,
                upper,
                result: mann_whitney_u(&groups[lower], &groups[upper])?,
            });
        }
    }
    let refs: Vec<&[f64]> = groups.iter().map(Vec::as_slice).collect();
    Ok(StageValidationReport {
        pairwise,
        kruskal_wallis: kruskal_wallis(&refs)?,
    })
}

/// Mann–Whitney U between the difficulty scores of the two classes (lower
/// class index first).
pub fn class_bias_check(records: &[DifficultyRecord]) -> Result<TestResult> {
    let classes: BTreeSet<usize> = records.iter().map(|r| r.label).collect();
    if classes.len() != 2 {
        return Err(Error::Validation(format!(
            "class bias check needs exactly two classes, found {}",
            classes.len()
        )));
    }
    let first = *classes.iter().next().expect("two classes");
    let (a, b): (Vec<&DifficultyRecord>, Vec<&DifficultyRecord>) =
        records.iter().partition(|r| r.label == first);
    let a: Vec<f64> = a.iter().map(|r| r.score).collect();
    let b: Vec<f64> = b.iter().map(|r| r.score).collect();
    mann_whitney_u(&a, &b)
}

/// One row of a probability input file.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityRow {
    pub sample_id: String,
    pub label: usize,
    pub probs: ProbabilityVector,
}

/// Reads `sample_id,label,p_0,...,p_{C-1}`.
pub fn read_probability_csv(path: &Path) -> Result<Vec<ProbabilityRow>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new().from_path(path)?;
    let header = reader.headers()?.clone();
    if header.len() < 4 || &header[0] != "sample_id" || &header[1] != "label" {
        return Err(parse_err(
            1,
            "expected header sample_id,label,p_0,p_1,...".into(),
        ));
    }
    for (c, name) in header.iter().skip(2).enumerate() {
        if name != format!("p_{c}") {
            return Err(parse_err(1, format!("column {} should be p_{c}, got {name}", c + 2)));
        }
    }

    let mut seen = BTreeSet::new();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        if record.len() != header.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, got {}", header.len(), record.len()),
            ));
        }
        let sample_id = record[0].to_string();
        if !seen.insert(sample_id.clone()) {
            return Err(parse_err(line, format!("duplicate sample_id {sample_id}")));
        }
        let label: usize = record[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(line, format!("bad label {:?}", &record[1])))?;
        let probs = record
            .iter()
            .skip(2)
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(line, format!("bad probability {v:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if label >= probs.len() {
            return Err(parse_err(line, format!("label {label} has no probability column")));
        }
        let probs = ProbabilityVector::new(probs).map_err(|e| parse_err(line, e.to_string()))?;
        rows.push(ProbabilityRow {
            sample_id,
            label,
            probs,
        });
    }
    if rows.is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }
    Ok(rows)
}

/// Scores every row with `metric`.
pub fn score_rows(rows: &[ProbabilityRow], metric: DifficultyMetric) -> Vec<DifficultyRecord> {
    rows.iter()
        .map(|r| DifficultyRecord::new(r.sample_id.clone(), metric.score(&r.probs), r.label))
        .collect()
}

/// Writes `sample_id,label,score,stage` (stage empty when unassigned).
pub fn write_records_csv(path: &Path, records: &[DifficultyRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sample_id", "label", "score", "stage"])?;
    for r in records {
        let stage = r.stage.map(|s| s.to_string()).unwrap_or_default();
        w.write_record([
            r.sample_id.clone(),
            r.label.to_string(),
            r.score.to_string(),
            stage,
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct PartitionSidecar {
    thresholds: Vec<f64>,
    n_stages: usize,
    warnings: Vec<PartitionWarning>,
}

/// Writes the partition as `sample_id,score,stage` CSV plus a JSON sidecar
/// with thresholds, stage count and warnings.
pub fn write_partition(
    csv_path: &Path,
    json_path: &Path,
    partition: &CurriculumPartition,
    records: &[DifficultyRecord],
) -> Result<()> {
    let mut w = csv::Writer::from_path(csv_path)?;
    w.write_record(["sample_id", "score", "stage"])?;
    for r in records {
        let stage = partition.stage(&r.sample_id).ok_or_else(|| {
            Error::Validation(format!("sample {} is not in the partition", r.sample_id))
        })?;
        w.write_record([r.sample_id.clone(), r.score.to_string(), stage.to_string()])?;
    }
    w.flush()?;

    let sidecar = PartitionSidecar {
        thresholds: partition.thresholds.clone(),
        n_stages: partition.n_stages,
        warnings: partition.warnings.clone(),
    };
    let mut f = File::create(json_path)?;
    serde_json::to_writer_pretty(&mut f, &sidecar)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Reads a partition written by [`write_partition`].
pub fn read_partition(csv_path: &Path, json_path: &Path) -> Result<CurriculumPartition> {
    let sidecar: PartitionSidecar = serde_json::from_reader(File::open(json_path)?)?;
    let mut reader = csv::Reader::from_path(csv_path)?;
    let mut stage_of = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let stage: usize = rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse {
            path: csv_path.to_path_buf(),
            line: i + 2,
            message: "bad stage".into(),
        })?;
        stage_of.insert(rec[0].to_string(), stage);
    }
    Ok(CurriculumPartition {
        stage_of,
        thresholds: sidecar.thresholds,
        n_stages: sidecar.n_stages,
        warnings: sidecar.warnings,
    })
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    fn pv(p: &[f64]) -> ProbabilityVector {
        ProbabilityVector::new(p.to_vec()).unwrap()
    }

    fn records(scores: &[f64]) -> Vec<DifficultyRecord> {
        scores
            .iter()
            .enumerate()
            .map(|(i, &s)| DifficultyRecord::new(format!("s{i:03}"), s, i % 2))
            .collect()
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax_difficulty(&pv(&[1.0, 0.0])), 0.0);
        assert_eq!(softmax_difficulty(&pv(&[0.5, 0.5])), 0.5);
        assert_abs_diff_eq!(softmax_difficulty(&pv(&[0.7, 0.3])), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy_difficulty(&pv(&[1.0, 0.0])), 0.0);
        assert_abs_diff_eq!(
            entropy_difficulty(&pv(&[0.5, 0.5])),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
        // 30-digit reference: 0.610864302054893463...
        assert_abs_diff_eq!(
            entropy_difficulty(&pv(&[0.7, 0.3])),
            0.610_864_302_054_893_5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn malformed_vectors_rejected() {
        assert!(ProbabilityVector::new(vec![1.0]).is_err());
        assert!(ProbabilityVector::new(vec![0.6, 0.6]).is_err());
        assert!(ProbabilityVector::new(vec![1.2, -0.2]).is_err());
    }

    #[test]
    fn quartiles_of_eight() {
        let recs = records(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]);
        let part = stratify(&recs, 4).unwrap();
        let stages: Vec<usize> = recs.iter().map(|r| part.stage(&r.sample_id).unwrap()).collect();
        assert_eq!(stages, vec![0, 0, 1, 1, 2, 2, 3, 3]);
        assert_eq!(part.thresholds.len(), 3);
        assert!(part.warnings.is_empty());
    }

    #[test]
    fn score_on_threshold_goes_low() {
        // median of 1..=5 is exactly 3
        let recs = records(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let part = stratify(&recs, 2).unwrap();
        assert_eq!(part.thresholds, vec![3.0]);
        assert_eq!(part.stage("s002"), Some(0));
        assert_eq!(part.stage("s003"), Some(1));
    }

    #[test]
    fn stratify_errors_and_degenerate() {
        assert!(stratify(&records(&[0.1, 0.2]), 3).is_err());
        assert!(stratify(&[], 2).is_err());
        assert!(stratify(&records(&[0.1, 0.2]), 1).is_err());
        let part = stratify(&records(&[0.3; 6]), 4).unwrap();
        assert_eq!(part.n_stages, 1);
        assert!(part.is_degenerate());
    }

    #[test]
    fn tied_quantiles_merge_without_empty_stages() {
        let part = stratify(&records(&[0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 3.0]), 4).unwrap();
        assert!(part.warnings.contains(&PartitionWarning::MergedTiedQuantiles));
        assert!(part.stage_sizes().iter().all(|&s| s > 0));
        assert!(part.thresholds.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn validate_separated_stages() {
        let recs = records(&(0..20).map(|i| i as f64).collect::<Vec<_>>());
        let part = stratify(&recs, 4).unwrap();
        let report = validate_stages(&part, &recs).unwrap();
        assert_eq!(report.pairwise.len(), 6);
        assert!(report.pairwise.iter().all(|p| p.result.statistic == 0.0));
    }

    #[test]
    fn validate_reports_empty_stage() {
        let recs = records(&[0.1, 0.2, 0.3, 0.4]);
        let mut part = stratify(&recs, 2).unwrap();
        part.n_stages = 3;
        part.thresholds.push(10.0);
        assert!(matches!(validate_stages(&part, &recs), Err(Error::EmptyStage(2))));
    }

    #[test]
    fn identical_stage_scores_are_not_separated() {
        let recs: Vec<DifficultyRecord> = (0..10)
            .map(|i| DifficultyRecord::new(format!("x{i}"), (i % 5) as f64, 0))
            .collect();
        let mut part = stratify(&recs, 2).unwrap();
        // force two stages with identical multisets
        for (i, r) in recs.iter().enumerate() {
            part.stage_of.insert(r.sample_id.clone(), usize::from(i >= 5));
        }
        let report = validate_stages(&part, &recs).unwrap();
        assert!(report.pairwise[0].result.p_value > 0.99);
    }

    #[test]
    fn class_bias_needs_two_classes() {
        let recs: Vec<DifficultyRecord> =
            (0..4).map(|i| DifficultyRecord::new(format!("x{i}"), i as f64, 0)).collect();
        assert!(class_bias_check(&recs).is_err());

        let mut both = recs.clone();
        both.extend((0..4).map(|i| DifficultyRecord::new(format!("y{i}"), i as f64, 1)));
        assert!(class_bias_check(&both).unwrap().p_value > 0.99);
    }
}
