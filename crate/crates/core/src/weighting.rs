//! Sample-weighting schemes.
//!
//! The exponential weight `w = exp(-d / T)` maps a difficulty `d >= 0` onto
//! `(0, 1]`; lower temperatures suppress hard samples more strongly. Focal,
//! loss-driven ("meta") and uniform weights are provided for comparison.
//! Weights enter the objective as `(1/N) sum_i w_i l_i` without any
//! renormalization by `sum_i w_i`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `exp(-d / T)`.
pub fn fossil_weight(difficulty: f64, temperature: f64) -> Result<f64> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::Parameter(format!("temperature must be > 0, got {temperature}")));
    }
    if !(difficulty >= 0.0) || !difficulty.is_finite() {
        return Err(Error::Validation(format!("difficulty must be >= 0, got {difficulty}")));
    }
    Ok((-difficulty / temperature).exp())
}

/// `(1 - p_true)^gamma`.
pub fn focal_weight(p_true: f64, gamma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_true) {
        return Err(Error::Validation(format!("p_true {p_true} outside [0, 1]")));
    }
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::Parameter(format!("gamma must be >= 0, got {gamma}")));
    }
    Ok((1.0 - p_true).powf(gamma))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaTransform {
    Identity,
    /// Rescaled to mean 1.
    #[default]
    Normalized,
}

/// Per-sample weights aligned with sample order.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::Validation(format!("invalid weight {w}")));
        }
        Ok(Self(weights))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Loss-driven weights `w_i = f(l_i)`.
pub fn meta_weight(losses: &[f64], transform: MetaTransform) -> Result<WeightVector> {
    if losses.is_empty() {
        return Err(Error::Validation("meta weighting needs at least one loss".into()));
    }
    if let Some(l) = losses.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
        return Err(Error::Validation(format!("loss {l} is not a finite non-negative value")));
    }
    match transform {
        MetaTransform::Identity => WeightVector::new(losses.to_vec()),
        MetaTransform::Normalized => {
            let mean = losses.iter().sum::<f64>() / losses.len() as f64;
            if mean == 0.0 {
                // all-zero losses carry no preference
                return Ok(WeightVector::uniform(losses.len()));
            }
            WeightVector::new(losses.iter().map(|l| l / mean).collect())
        }
    }
}

/// `(1/N) sum_i w_i l_i`.
pub fn weighted_loss(losses: &[f64], weights: &WeightVector) -> Result<f64> {
    if losses.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: losses.len(),
            got: weights.len(),
        });
    }
    if losses.is_empty() {
        return Err(Error::Validation("weighted loss of an empty batch".into()));
    }
    let total: f64 = losses.iter().zip(&weights.0).map(|(l, w)| w * l).sum();
    Ok(total / losses.len() as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    #[default]
    Constant,
    /// `max(t_min, t0 - decay * t)`
    LinearDecay,
    /// `max(t_min, t0 * decay^t)` with `decay` in `(0, 1]`
    ExponentialDecay,
}

/// Non-increasing temperature schedule floored at `t_min`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperatureSchedule {
    #[serde(default)]
    pub kind: ScheduleKind,
    #[serde(default = "default_temperature")]
    pub t0: f64,
    #[serde(default = "default_t_min")]
    pub t_min: f64,
    #[serde(default)]
    pub decay: f64,
}

fn default_temperature() -> f64 {
    1.0
}

fn default_t_min() -> f64 {
    1e-3
}

impl Default for TemperatureSchedule {
    fn default() -> Self {
        Self::constant(default_temperature())
    }
}

impl TemperatureSchedule {
    pub fn constant(t0: f64) -> Self {
        Self {
            kind: ScheduleKind::Constant,
            t0,
            t_min: default_t_min().min(t0),
            decay: 0.0,
        }
    }

    pub fn linear(t0: f64, decay: f64, t_min: f64) -> Self {
        Self {
            kind: ScheduleKind::LinearDecay,
            t0,
            t_min,
            decay,
        }
    }

    pub fn exponential(t0: f64, decay: f64, t_min: f64) -> Self {
        Self {
            kind: ScheduleKind::ExponentialDecay,
            t0,
            t_min,
            decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.t0) || !positive(self.t_min) {
            return Err(Error::Parameter("t0 and t_min must be finite and > 0".into()));
        }
        if self.t_min > self.t0 {
            return Err(Error::Parameter(format!(
                "t_min {} exceeds t0 {}",
                self.t_min, self.t0
            )));
        }
        match self.kind {
            ScheduleKind::Constant => Ok(()),
            ScheduleKind::LinearDecay if self.decay >= 0.0 && self.decay.is_finite() => Ok(()),
            ScheduleKind::ExponentialDecay if self.decay > 0.0 && self.decay <= 1.0 => Ok(()),
            _ => Err(Error::Parameter(format!(
                "decay {} invalid for {:?} schedule",
                self.decay, self.kind
            ))),
        }
    }

    /// Temperature at round `t` (0-based).
    pub fn at(&self, t: usize) -> f64 {
        match self.kind {
            ScheduleKind::Constant => self.t0,
            ScheduleKind::LinearDecay => (self.t0 - self.decay * t as f64).max(self.t_min),
            ScheduleKind::ExponentialDecay => {
                (self.t0 * self.decay.powf(t as f64)).max(self.t_min)
            }
        }
    }
}

/// Validating wrapper around [`TemperatureSchedule::at`].
pub fn schedule_temperature(schedule: &TemperatureSchedule, t: usize) -> Result<f64> {
    schedule.validate()?;
    Ok(schedule.at(t))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Fossil,
    Focal,
    Meta,
    Uniform,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightingConfig {
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub meta_transform: MetaTransform,
    #[serde(default)]
    pub schedule: TemperatureSchedule,
}

fn default_gamma() -> f64 {
    2.0
}

/// Per-sample quantities a scheme may draw on for one epoch.
#[derive(Clone, Copy, Debug, Default)]
pub struct WeightInputs<'a> {
    pub difficulties: Option<&'a [f64]>,
    pub p_true: Option<&'a [f64]>,
    pub losses: Option<&'a [f64]>,
}

impl WeightingConfig {
    pub fn fossil(temperature: f64) -> Self {
        Self {
            scheme: Scheme::Fossil,
            schedule: TemperatureSchedule::constant(temperature),
            ..Self::uniform()
        }
    }

    pub fn uniform() -> Self {
        Self {
            scheme: Scheme::Uniform,
            gamma: default_gamma(),
            meta_transform: MetaTransform::default(),
            schedule: TemperatureSchedule::default(),
        }
    }

    pub fn focal(gamma: f64) -> Self {
        Self {
            scheme: Scheme::Focal,
            gamma,
            ..Self::uniform()
        }
    }

    pub fn meta(transform: MetaTransform) -> Self {
        Self {
            scheme: Scheme::Meta,
            meta_transform: transform,
            ..Self::uniform()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::Parameter(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        self.schedule.validate()
    }

    pub fn temperature_at(&self, epoch: usize) -> f64 {
        self.schedule.at(epoch)
    }

    /// Weights for `n` samples at `epoch`.
    pub fn weights(&self, n: usize, epoch: usize, inputs: WeightInputs<'_>) -> Result<WeightVector> {
        let need = |v: Option<&[f64]>, what: &str| -> Result<Vec<f64>> {
            let v = v.ok_or_else(|| {
                Error::Validation(format!("{:?} weighting needs {what}", self.scheme))
            })?;
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: v.len(),
                });
            }
            Ok(v.to_vec())
        };
        match self.scheme {
            Scheme::Uniform => Ok(WeightVector::uniform(n)),
            Scheme::Fossil => {
                let t = self.temperature_at(epoch);
                let w = need(inputs.difficulties, "difficulties")?
                    .into_iter()
                    .map(|d| fossil_weight(d, t))
                    .collect::<Result<Vec<_>>>()?;
                WeightVector::new(w)
            }
            Scheme::Focal => {
                let w = need(inputs.p_true, "true-class probabilities")?
                    .into_iter()
                    .map(|p| focal_weight(p, self.gamma))
                    .collect::<Result<Vec<_>>>()?;
                WeightVector::new(w)
            }
            Scheme::Meta => meta_weight(&need(inputs.losses, "losses")?, self.meta_transform),
        }
    }
}

/// Dumps `sample_id,weight` rows for auditing.
pub fn write_weights_csv(path: &Path, ids: &[String], weights: &WeightVector) -> Result<()> {
    if ids.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: ids.len(),
            got: weights.len(),
        });
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sample_id", "weight"])?;
    for (id, wt) in ids.iter().zip(weights.as_slice()) {
        w.write_record([id.clone(), wt.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn fossil_examples() {
        assert_eq!(fossil_weight(0.0, 1.0).unwrap(), 1.0);
        assert_abs_diff_eq!(fossil_weight(1.0, 1.0).unwrap(), 0.367_879_441_171_442_3, epsilon = 1e-15);
        assert_abs_diff_eq!(fossil_weight(0.5, 0.25).unwrap(), 0.135_335_283_236_612_7, epsilon = 1e-15);
    }

    #[test]
    fn fossil_rejects_bad_inputs() {
        assert!(matches!(fossil_weight(0.1, 0.0), Err(Error::Parameter(_))));
        assert!(matches!(fossil_weight(0.1, -1.0), Err(Error::Parameter(_))));
        assert!(matches!(fossil_weight(-0.1, 1.0), Err(Error::Validation(_))));
    }

    #[test]
    fn focal_examples() {
        assert_eq!(focal_weight(1.0, 2.0).unwrap(), 0.0);
        assert_eq!(focal_weight(0.37, 0.0).unwrap(), 1.0);
        assert_eq!(focal_weight(0.5, 2.0).unwrap(), 0.25);
        assert!(focal_weight(1.5, 2.0).is_err());
    }

    #[test]
    fn meta_examples() {
        let w = meta_weight(&[1.0, 1.0, 1.0], MetaTransform::Normalized).unwrap();
        assert_eq!(w.as_slice(), &[1.0, 1.0, 1.0]);
        let w = meta_weight(&[0.0, 2.0], MetaTransform::Identity).unwrap();
        assert_eq!(w.as_slice(), &[0.0, 2.0]);
        let w = meta_weight(&[1.0, 2.0, 3.0], MetaTransform::Normalized).unwrap();
        assert_eq!(w.as_slice(), &[0.5, 1.0, 1.5]);
        assert!(meta_weight(&[], MetaTransform::Identity).is_err());
    }

    #[test]
    fn weighted_loss_examples() {
        let ones = WeightVector::uniform(2);
        assert_eq!(weighted_loss(&[2.0, 4.0], &ones).unwrap(), 3.0);
        let zeros = WeightVector::new(vec![0.0, 0.0]).unwrap();
        assert_eq!(weighted_loss(&[2.0, 4.0], &zeros).unwrap(), 0.0);
        let w = WeightVector::new(vec![(-0.1f64).exp(), (-0.2f64).exp(), (-0.3f64).exp()]).unwrap();
        // mpmath, 30 digits: 1.58825119541235896290...
        assert_abs_diff_eq!(
            weighted_loss(&[1.0, 2.0, 3.0], &w).unwrap(),
            1.588_251_195_412_359,
            epsilon = 1e-14
        );
        assert!(weighted_loss(&[1.0], &ones).is_err());
    }

    #[test]
    fn schedule_examples() {
        let c = TemperatureSchedule::constant(1.0);
        assert_eq!(schedule_temperature(&c, 17).unwrap(), 1.0);
        let e = TemperatureSchedule::exponential(1.0, 0.5, 0.1);
        assert_eq!(schedule_temperature(&e, 1).unwrap(), 0.5);
        let l = TemperatureSchedule::linear(1.0, 0.2, 0.1);
        assert_eq!(schedule_temperature(&l, 10).unwrap(), 0.1);
        assert!(schedule_temperature(&TemperatureSchedule::exponential(1.0, 1.5, 0.1), 0).is_err());
        assert!(schedule_temperature(&TemperatureSchedule::linear(1.0, 0.1, 2.0), 0).is_err());
    }

    #[test]
    fn uniform_equivalences() {
        assert_eq!(focal_weight(0.3, 0.0).unwrap(), 1.0);
        assert_eq!(fossil_weight(0.0, 0.7).unwrap(), 1.0);
    }

    #[test]
    fn config_dispatch() {
        let cfg = WeightingConfig::fossil(1.0);
        let w = cfg
            .weights(2, 0, WeightInputs { difficulties: Some(&[0.0, 1.0]), ..Default::default() })
            .unwrap();
        assert_eq!(w.as_slice()[0], 1.0);
        assert!(cfg.weights(2, 0, WeightInputs::default()).is_err());
        let u = WeightingConfig::uniform().weights(3, 5, WeightInputs::default()).unwrap();
        assert_eq!(u.as_slice(), &[1.0; 3]);
    }

    proptest! {
        #[test]
        fn boundedness(d in 0.0f64..50.0, t in 1e-3f64..100.0) {
            let w = fossil_weight(d, t).unwrap();
            prop_assert!(w > 0.0 || (d / t) > 700.0);
            prop_assert!(w <= 1.0);
            prop_assert_eq!(w == 1.0, d == 0.0 || d / t < f64::EPSILON / 2.0);
        }

        #[test]
        fn ordering_reverses_difficulty(ds in prop::collection::vec(0.0f64..3.0, 2..30), t in 0.05f64..10.0) {
            let ws: Vec<f64> = ds.iter().map(|&d| fossil_weight(d, t).unwrap()).collect();
            for i in 0..ds.len() {
                for j in 0..ds.len() {
                    if ds[i] < ds[j] {
                        prop_assert!(ws[i] >= ws[j]);
                    }
                }
            }
        }

        #[test]
        fn schedules_are_non_increasing(
            t0 in 0.1f64..10.0, decay in 0.01f64..1.0, frac in 0.01f64..1.0, t in 0usize..500
        ) {
            let t_min = t0 * frac;
            for s in [
                TemperatureSchedule::linear(t0, decay, t_min),
                TemperatureSchedule::exponential(t0, decay, t_min),
                TemperatureSchedule::constant(t0),
            ] {
                prop_assert!(s.at(t + 1) <= s.at(t));
                prop_assert!(s.at(t) >= s.t_min);
            }
        }

        #[test]
        fn unit_weights_give_plain_mean(ls in prop::collection::vec(0.0f64..10.0, 1..40)) {
            let mean = ls.iter().sum::<f64>() / ls.len() as f64;
            prop_assert_eq!(weighted_loss(&ls, &WeightVector::uniform(ls.len())).unwrap(), mean);
        }
    }
}
