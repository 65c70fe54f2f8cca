//! Online convex optimization with difficulty-weighted steps.
//!
//! Each round `t` reveals a convex loss `l_t` and a sample weight `w_t`; the
//! learner plays `theta_t` and updates
//!
//! ```text
//! theta_{t+1} = P_B(theta_t - eta_t * w_t * g_t),   g_t = grad l_t(theta_t)
//! ```
//!
//! where `P_B` is Euclidean projection onto a ball. Model parameters are
//! always called `theta` here; `w` is reserved for sample weights. Regret is
//! measured against the best fixed `theta*` in the ball and compared with
//!
//! ```text
//! D^2 / (2 eta_T) + (eta_T G^2 / 2) * sum_t w_t^2
//! ```
//!
//! with `D` the ball diameter and `G` the analytic Lipschitz constant of the
//! stream over the ball.

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{distance, dot, norm, sub};
use crate::weighting::fossil_weight;

/// Stopping tolerance on the projected-gradient norm of the mean loss.
pub const HINDSIGHT_TOLERANCE: f64 = 1e-10;
const HINDSIGHT_MAX_ITER: usize = 200_000;

/// One round's convex loss in `theta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ConvexLoss {
    /// `(theta - a)^T Q (theta - a)`, `Q` symmetric positive semidefinite.
    Quadratic { q: Vec<Vec<f64>>, a: Vec<f64> },
    /// `ln(1 + exp(-y <x, theta>))` with `y` in `{-1, +1}`.
    Logistic { x: Vec<f64>, y: f64 },
    /// `|<x, theta> - y|`.
    AbsDeviation { x: Vec<f64>, y: f64 },
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
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

fn spectral_norm(q: &[Vec<f64>]) -> f64 {
    let n = q.len();
    let m = DMatrix::from_fn(n, n, |i, j| q[i][j]);
    m.symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
}

impl ConvexLoss {
    pub fn dim(&self) -> usize {
        match self {
            Self::Quadratic { a, .. } => a.len(),
            Self::Logistic { x, .. } | Self::AbsDeviation { x, .. } => x.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Self::Quadratic { q, a } => {
                let n = a.len();
                if n == 0 || q.len() != n || q.iter().any(|row| row.len() != n) {
                    return Err(Error::Validation("quadratic loss: Q must be square and match a".into()));
                }
                if !finite(a) || q.iter().any(|r| !finite(r)) {
                    return Err(Error::Validation("quadratic loss: non-finite entries".into()));
                }
                for i in 0..n {
                    for j in 0..i {
                        if (q[i][j] - q[j][i]).abs() > 1e-12 * (1.0 + q[i][j].abs()) {
                            return Err(Error::Validation("quadratic loss: Q not symmetric".into()));
                        }
                    }
                }
                let m = DMatrix::from_fn(n, n, |i, j| q[i][j]);
                let scale = spectral_norm(q).max(1.0);
                if m.symmetric_eigenvalues().iter().any(|&ev| ev < -1e-12 * scale) {
                    return Err(Error::Validation("quadratic loss: Q not positive semidefinite".into()));
                }
                Ok(())
            }
            Self::Logistic { x, y } => {
                if x.is_empty() || !finite(x) || (*y != 1.0 && *y != -1.0) {
                    return Err(Error::Validation("logistic loss needs finite x and y = +-1".into()));
                }
                Ok(())
            }
            Self::AbsDeviation { x, y } => {
                if x.is_empty() || !finite(x) || !y.is_finite() {
                    return Err(Error::Validation("absolute-deviation loss needs finite x, y".into()));
                }
                Ok(())
            }
        }
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        match self {
            Self::Quadratic { q, a } => {
                let d = sub(theta, a);
                q.iter().zip(&d).map(|(row, di)| di * dot(row, &d)).sum()
            }
            Self::Logistic { x, y } => softplus(-y * dot(x, theta)),
            Self::AbsDeviation { x, y } => (dot(x, theta) - y).abs(),
        }
    }

    /// Gradient (a subgradient with `sign(0) = 0` for absolute deviation).
    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        match self {
            Self::Quadratic { q, a } => {
                let d = sub(theta, a);
                q.iter().map(|row| 2.0 * dot(row, &d)).collect()
            }
            Self::Logistic { x, y } => {
                let coef = -y * sigmoid(-y * dot(x, theta));
                x.iter().map(|v| coef * v).collect()
            }
            Self::AbsDeviation { x, y } => {
                let r = dot(x, theta) - y;
                let s = if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                x.iter().map(|v| s * v).collect()
            }
        }
    }

    /// Lipschitz constant over `ball`, from the loss parameters.
    pub fn lipschitz(&self, ball: &FeasibleBall) -> f64 {
        match self {
            Self::Quadratic { q, a } => {
                2.0 * spectral_norm(q) * (ball.radius + distance(&ball.center, a))
            }
            Self::Logistic { x, .. } | Self::AbsDeviation { x, .. } => norm(x),
        }
    }

    /// Gradient Lipschitz constant, `None` for non-smooth losses.
    pub fn smoothness(&self) -> Option<f64> {
        match self {
            Self::Quadratic { q, .. } => Some(2.0 * spectral_norm(q)),
            Self::Logistic { x, .. } => Some(dot(x, x) / 4.0),
            Self::AbsDeviation { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Round {
    #[serde(flatten)]
    pub loss: ConvexLoss,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

/// Sequence of weighted convex losses over a common dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexLossStream {
    rounds: Vec<Round>,
    dim: usize,
}

impl ConvexLossStream {
    pub fn new(rounds: Vec<Round>) -> Result<Self> {
        let dim = rounds
            .first()
            .ok_or_else(|| Error::Validation("empty loss stream".into()))?
            .loss
            .dim();
        for (t, r) in rounds.iter().enumerate() {
            r.loss.validate()?;
            if r.loss.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.loss.dim(),
                });
            }
            if !(r.weight >= 0.0) || !r.weight.is_finite() {
                return Err(Error::Validation(format!("round {} has weight {}", t + 1, r.weight)));
            }
        }
        Ok(Self { rounds, dim })
    }

    pub fn rounds(&self) -> &[Round] {
        &self.rounds
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.weight).collect()
    }

    /// Same losses with every weight replaced.
    pub fn with_weights(&self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: weights.len(),
            });
        }
        Self::new(
            self.rounds
                .iter()
                .zip(weights)
                .map(|(r, &w)| Round {
                    loss: r.loss.clone(),
                    weight: w,
                })
                .collect(),
        )
    }

    pub fn total_loss(&self, theta: &[f64]) -> f64 {
        self.rounds.iter().map(|r| r.loss.value(theta)).sum()
    }

    pub fn total_gradient(&self, theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        for r in &self.rounds {
            for (gi, v) in g.iter_mut().zip(r.loss.gradient(theta)) {
                *gi += v;
            }
        }
        g
    }

    /// Largest per-round Lipschitz constant over `ball`.
    pub fn lipschitz(&self, ball: &FeasibleBall) -> f64 {
        self.rounds
            .iter()
            .map(|r| r.loss.lipschitz(ball))
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeasibleBall {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl FeasibleBall {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Parameter(format!("ball radius must be > 0, got {radius}")));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::Validation("ball center must be finite".into()));
        }
        Ok(Self { center, radius })
    }

    pub fn origin(dim: usize, radius: f64) -> Result<Self> {
        Self::new(vec![0.0; dim], radius)
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        distance(theta, &self.center) <= self.radius
    }
}

/// Euclidean projection of `theta` onto `ball`.
pub fn project(theta: &[f64], ball: &FeasibleBall) -> Vec<f64> {
    let offset = sub(theta, &ball.center);
    let dist = norm(&offset);
    if dist <= ball.radius {
        return theta.to_vec();
    }
    let mut scale = ball.radius / dist;
    loop {
        let p: Vec<f64> = ball
            .center
            .iter()
            .zip(&offset)
            .map(|(c, o)| c + o * scale)
            .collect();
        // rounding can land a hair outside; pull in so projection is idempotent
        if distance(&p, &ball.center) <= ball.radius {
            return p;
        }
        scale = scale.next_down();
    }
}

/// Step sizes `eta_t` for rounds `t = 1, 2, ...`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    Constant { eta: f64 },
    /// `scale / sqrt(t)`
    InverseSqrt { scale: f64 },
}

impl StepSchedule {
    /// `eta_t = D / (G sqrt(t))`.
    pub fn standard(ball: &FeasibleBall, lipschitz: f64) -> Self {
        Self::InverseSqrt {
            scale: ball.diameter() / lipschitz,
        }
    }

    pub fn at(&self, t: usize) -> f64 {
        match *self {
            Self::Constant { eta } => eta,
            Self::InverseSqrt { scale } => scale / (t as f64).sqrt(),
        }
    }

    fn validate(&self) -> Result<()> {
        let v = match *self {
            Self::Constant { eta } => eta,
            Self::InverseSqrt { scale } => scale,
        };
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Parameter(format!("step size must be > 0, got {v}")));
        }
        Ok(())
    }
}

/// `D^2 / (2 eta_T) + (eta_T G^2 / 2) sum_t w_t^2`.
pub fn regret_bound(diameter: f64, lipschitz: f64, eta_final: f64, weights: &[f64]) -> Result<f64> {
    for (name, v) in [("D", diameter), ("G", lipschitz), ("eta_T", eta_final)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Parameter(format!("{name} must be > 0, got {v}")));
        }
    }
    let sq: f64 = weights.iter().map(|w| w * w).sum();
    Ok(diameter * diameter / (2.0 * eta_final) + eta_final * lipschitz * lipschitz / 2.0 * sq)
}

/// Best fixed parameter in hindsight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HindsightOptimum {
    pub theta: Vec<f64>,
    pub total_loss: f64,
    /// Projected-gradient norm of the mean loss at `theta`.
    pub grad_norm: f64,
    pub iterations: usize,
    /// `false` when the stream contains non-smooth losses and the value comes
    /// from a subgradient search rather than a convergence certificate.
    pub certified: bool,
}

fn grad_mapping_norm(theta: &[f64], grad: &[f64], step: f64, ball: &FeasibleBall) -> f64 {
    let moved: Vec<f64> = theta.iter().zip(grad).map(|(t, g)| t - step * g).collect();
    let p = project(&moved, ball);
    distance(theta, &p) / step
}

/// Minimizer of the summed loss over `ball`.
///
/// For smooth streams this is accelerated projected gradient descent with
/// adaptive restart on the mean loss, run until the projected-gradient norm
/// falls to [`HINDSIGHT_TOLERANCE`]; convexity makes that point globally
/// optimal. Streams with absolute-deviation rounds fall back to a projected
/// subgradient search and are reported as uncertified.
pub fn hindsight_optimum(stream: &ConvexLossStream, ball: &FeasibleBall) -> Result<HindsightOptimum> {
    if stream.is_empty() {
        return Err(Error::Validation("empty loss stream".into()));
    }
    if ball.center.len() != stream.dim() {
        return Err(Error::DimensionMismatch {
            expected: stream.dim(),
            got: ball.center.len(),
        });
    }
    let n = stream.len() as f64;
    let smooth: Option<f64> = stream
        .rounds
        .iter()
        .map(|r| r.loss.smoothness())
        .sum::<Option<f64>>();
    match smooth {
        Some(l_sum) => hindsight_smooth(stream, ball, (l_sum / n).max(1e-12)),
        None => Ok(hindsight_subgradient(stream, ball)),
    }
}

fn hindsight_smooth(
    stream: &ConvexLossStream,
    ball: &FeasibleBall,
    smoothness: f64,
) -> Result<HindsightOptimum> {
    let n = stream.len() as f64;
    let mean_grad = |theta: &[f64]| -> Vec<f64> {
        stream.total_gradient(theta).into_iter().map(|g| g / n).collect()
    };
    let step = 1.0 / smoothness;
    let mut x = ball.center.clone();
    let mut y = x.clone();
    let mut momentum = 1.0f64;
    let mut grad_norm = f64::INFINITY;

    for iter in 0..HINDSIGHT_MAX_ITER {
        let gx = mean_grad(&x);
        grad_norm = grad_mapping_norm(&x, &gx, step, ball);
        if grad_norm <= HINDSIGHT_TOLERANCE {
            return Ok(HindsightOptimum {
                total_loss: stream.total_loss(&x),
                theta: x,
                grad_norm,
                iterations: iter,
                certified: true,
            });
        }
        if !grad_norm.is_finite() {
            break;
        }
        let gy = mean_grad(&y);
        let moved: Vec<f64> = y.iter().zip(&gy).map(|(t, g)| t - step * g).collect();
        let x_next = project(&moved, ball);
        let next_momentum = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
        let beta = (momentum - 1.0) / next_momentum;
        // restart when the momentum direction opposes descent
        let restart = dot(&sub(&y, &x_next), &sub(&x_next, &x)) > 0.0;
        if restart {
            momentum = 1.0;
            y = x_next.clone();
        } else {
            momentum = next_momentum;
            y = x_next
                .iter()
                .zip(&x)
                .map(|(a, b)| a + beta * (a - b))
                .collect();
        }
        x = x_next;
    }
    Err(Error::NonConvergence {
        iterations: HINDSIGHT_MAX_ITER,
        grad_norm,
    })
}

fn hindsight_subgradient(stream: &ConvexLossStream, ball: &FeasibleBall) -> HindsightOptimum {
    const ITERS: usize = 20_000;
    let n = stream.len() as f64;
    let g_max = stream.lipschitz(ball).max(1e-12);
    let mut theta = ball.center.clone();
    let mut best = theta.clone();
    let mut best_val = stream.total_loss(&theta);
    for k in 1..=ITERS {
        let g: Vec<f64> = stream.total_gradient(&theta).into_iter().map(|v| v / n).collect();
        let gn = norm(&g);
        if gn == 0.0 {
            break;
        }
        let step = ball.diameter() / (g_max * (k as f64).sqrt());
        let moved: Vec<f64> = theta.iter().zip(&g).map(|(t, gi)| t - step * gi / gn * g_max).collect();
        theta = project(&moved, ball);
        let v = stream.total_loss(&theta);
        if v < best_val {
            best_val = v;
            best = theta.clone();
        }
    }
    let g: Vec<f64> = stream.total_gradient(&best).into_iter().map(|v| v / n).collect();
    HindsightOptimum {
        grad_norm: grad_mapping_norm(&best, &g, 1.0, ball),
        theta: best,
        total_loss: best_val,
        iterations: ITERS,
        certified: false,
    }
}

/// Full record of one weighted online-gradient-descent run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    /// `theta_t` played at round `t` (index `t - 1`).
    pub thetas: Vec<Vec<f64>>,
    pub losses: Vec<f64>,
    pub step_sizes: Vec<f64>,
    pub weights: Vec<f64>,
    pub optimum: HindsightOptimum,
    /// Regret against `optimum` after each round.
    pub cum_regret: Vec<f64>,
    /// Bound evaluated at each prefix horizon `t`.
    pub bound_at: Vec<f64>,
    pub diameter: f64,
    pub lipschitz: f64,
}

impl RegretTrace {
    pub fn horizon(&self) -> usize {
        self.losses.len()
    }

    pub fn final_regret(&self) -> f64 {
        *self.cum_regret.last().expect("non-empty trace")
    }

    pub fn bound(&self) -> f64 {
        *self.bound_at.last().expect("non-empty trace")
    }

    /// `R_T <= bound + 1e-9 |bound|`.
    pub fn within_bound(&self) -> bool {
        let b = self.bound();
        self.final_regret() <= b + 1e-9 * b.abs()
    }

    /// Writes `t,loss,cum_regret,bound`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "loss", "cum_regret", "bound"])?;
        for t in 0..self.horizon() {
            w.write_record([
                (t + 1).to_string(),
                self.losses[t].to_string(),
                self.cum_regret[t].to_string(),
                self.bound_at[t].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Parameter path `theta_1, ..., theta_{T+1}` of the weighted update.
pub fn ogd_path(
    stream: &ConvexLossStream,
    ball: &FeasibleBall,
    steps: &StepSchedule,
    theta0: &[f64],
) -> Result<Vec<Vec<f64>>> {
    steps.validate()?;
    if theta0.len() != stream.dim() || ball.center.len() != stream.dim() {
        return Err(Error::DimensionMismatch {
            expected: stream.dim(),
            got: theta0.len(),
        });
    }
    if !ball.contains(theta0) {
        return Err(Error::Validation("theta0 lies outside the feasible ball".into()));
    }
    let mut path = Vec::with_capacity(stream.len() + 1);
    let mut theta = theta0.to_vec();
    for (i, round) in stream.rounds.iter().enumerate() {
        let t = i + 1;
        let g = round.loss.gradient(&theta);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { round: t });
        }
        let eta = steps.at(t);
        let moved: Vec<f64> = theta
            .iter()
            .zip(&g)
            .map(|(th, gi)| th - eta * round.weight * gi)
            .collect();
        let next = project(&moved, ball);
        path.push(std::mem::replace(&mut theta, next));
    }
    path.push(theta);
    Ok(path)
}

/// Runs weighted projected OGD and accounts regret against the hindsight
/// optimum.
pub fn run_weighted_ogd(
    stream: &ConvexLossStream,
    ball: &FeasibleBall,
    steps: &StepSchedule,
    theta0: &[f64],
) -> Result<RegretTrace> {
    let mut thetas = ogd_path(stream, ball, steps, theta0)?;
    thetas.pop();
    let optimum = hindsight_optimum(stream, ball)?;
    let lipschitz = stream.lipschitz(ball);
    let diameter = ball.diameter();

    let mut losses = Vec::with_capacity(stream.len());
    let mut step_sizes = Vec::with_capacity(stream.len());
    let mut cum_regret = Vec::with_capacity(stream.len());
    let mut bound_at = Vec::with_capacity(stream.len());
    let mut regret = 0.0;
    let mut sq_weights = 0.0;
    for (i, (round, theta)) in stream.rounds.iter().zip(&thetas).enumerate() {
        let t = i + 1;
        let loss = round.loss.value(theta);
        regret += loss - round.loss.value(&optimum.theta);
        sq_weights += round.weight * round.weight;
        let eta = steps.at(t);
        losses.push(loss);
        step_sizes.push(eta);
        cum_regret.push(regret);
        bound_at.push(if lipschitz > 0.0 {
            diameter * diameter / (2.0 * eta) + eta * lipschitz * lipschitz / 2.0 * sq_weights
        } else {
            diameter * diameter / (2.0 * eta)
        });
    }
    Ok(RegretTrace {
        thetas,
        losses,
        step_sizes,
        weights: stream.weights(),
        optimum,
        cum_regret,
        bound_at,
        diameter,
        lipschitz,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Horizons whose regret entered the fit.
    pub used: Vec<usize>,
    /// Horizons dropped for non-positive regret.
    pub excluded: Vec<usize>,
}

/// Least-squares slope of `ln R_T` against `ln T`.
pub fn regret_slope(points: &[(usize, f64)]) -> Result<SlopeFit> {
    let (used, excluded): (Vec<_>, Vec<_>) = points.iter().partition(|(_, r)| *r > 0.0);
    if used.len() < 2 {
        return Err(Error::Validation(format!(
            "slope needs at least two horizons with positive regret, got {}",
            used.len()
        )));
    }
    let xs: Vec<f64> = used.iter().map(|(t, _)| (*t as f64).ln()).collect();
    let ys: Vec<f64> = used.iter().map(|(_, r)| r.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Validation("slope needs at least two distinct horizons".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok(SlopeFit {
        slope,
        intercept: my - slope * mx,
        used: used.iter().map(|(t, _)| *t).collect(),
        excluded: excluded.iter().map(|(t, _)| *t).collect(),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFamily {
    Quadratic,
    #[default]
    Logistic,
    AbsDeviation,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamOrder {
    #[default]
    Shuffled,
    /// Rounds sorted by their target (label for logistic losses), which is
    /// the adversarial order for a learner that tracks recent rounds.
    SortedByTarget,
}

/// Recipe for a seeded synthetic stream whose round weights are
/// `exp(-d_t / T)` for difficulties `d_t ~ U[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratedStream {
    pub family: LossFamily,
    pub dim: usize,
    pub rounds: usize,
    pub seed: u64,
    /// Temperature of the round weights; `None` gives unit weights.
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub order: StreamOrder,
}

impl GeneratedStream {
    pub fn build(&self) -> Result<ConvexLossStream> {
        if self.dim == 0 || self.rounds == 0 {
            return Err(Error::Parameter("generated stream needs dim >= 1 and rounds >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let dim = self.dim;
        let gauss = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..dim).map(|_| StandardNormal.sample(rng)).collect()
        };
        let mut truth = gauss(&mut rng);
        let tn = norm(&truth).max(1e-12);
        truth.iter_mut().for_each(|v| *v *= 1.5 / tn);

        let mut items: Vec<(f64, ConvexLoss)> = (0..self.rounds)
            .map(|_| match self.family {
                LossFamily::Quadratic => {
                    let b: Vec<Vec<f64>> = (0..dim).map(|_| gauss(&mut rng)).collect();
                    let q: Vec<Vec<f64>> = (0..dim)
                        .map(|i| {
                            (0..dim)
                                .map(|j| {
                                    let bbt: f64 = (0..dim).map(|k| b[i][k] * b[j][k]).sum();
                                    0.5 * bbt / dim as f64 + if i == j { 0.25 } else { 0.0 }
                                })
                                .collect()
                        })
                        .collect();
                    let noise = Normal::new(0.0, 0.5).expect("valid normal");
                    let a: Vec<f64> = truth
                        .iter()
                        .map(|t| 0.5 * t + noise.sample(&mut rng))
                        .collect();
                    (a[0], ConvexLoss::Quadratic { q, a })
                }
                LossFamily::Logistic => {
                    let x = gauss(&mut rng);
                    let p = sigmoid(2.0 * dot(&x, &truth));
                    let y = if rng.random::<f64>() < p { 1.0 } else { -1.0 };
                    (y, ConvexLoss::Logistic { x, y })
                }
                LossFamily::AbsDeviation => {
                    let x = gauss(&mut rng);
                    let noise: f64 = Normal::new(0.0, 0.3).expect("valid normal").sample(&mut rng);
                    let y = dot(&x, &truth) + noise;
                    (y, ConvexLoss::AbsDeviation { x, y })
                }
            })
            .collect();

        match self.order {
            StreamOrder::Shuffled => items.shuffle(&mut rng),
            StreamOrder::SortedByTarget => items.sort_by(|a, b| a.0.total_cmp(&b.0)),
        }

        let rounds = items
            .into_iter()
            .map(|(_, loss)| {
                let weight = match self.temperature {
                    Some(t) => fossil_weight(rng.random::<f64>(), t)?,
                    None => 1.0,
                };
                Ok(Round { loss, weight })
            })
            .collect::<Result<Vec<_>>>()?;
        ConvexLossStream::new(rounds)
    }
}

/// Stream definition file: either explicit rounds or a generator recipe,
/// plus the feasible ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamFile {
    pub ball: FeasibleBall,
    #[serde(default)]
    pub generate: Option<GeneratedStream>,
    #[serde(default)]
    pub rounds: Vec<Round>,
}

impl StreamFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(toml::from_str(&text)?)
    }

    pub fn stream(&self) -> Result<ConvexLossStream> {
        match (&self.generate, self.rounds.is_empty()) {
            (Some(g), true) => g.build(),
            (None, false) => ConvexLossStream::new(self.rounds.clone()),
            _ => Err(Error::Config(
                "stream file needs exactly one of [generate] or [[rounds]]".into(),
            )),
        }
    }

    pub fn ball(&self) -> Result<FeasibleBall> {
        FeasibleBall::new(self.ball.center.clone(), self.ball.radius)
    }
}

/// One (stream, horizon) run of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonRun {
    pub stream: usize,
    pub family: LossFamily,
    pub horizon: usize,
    pub final_regret: f64,
    pub bound: f64,
    pub within_bound: bool,
    pub hindsight_certified: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonSweep {
    pub runs: Vec<HorizonRun>,
    /// `(T, mean R_T over streams)` per horizon.
    pub mean_regret: Vec<(usize, f64)>,
    pub slope: Option<SlopeFit>,
    /// Why `slope` is absent, when it is.
    pub slope_note: Option<String>,
    #[serde(skip)]
    pub traces: Vec<RegretTrace>,
}

impl HorizonSweep {
    pub fn all_within_bound(&self) -> bool {
        self.runs.iter().all(|r| r.within_bound)
    }
}

/// Runs each stream recipe at every horizon with the standard step schedule
/// and fits the log-log regret slope of the mean regret.
pub fn horizon_sweep(
    recipes: &[GeneratedStream],
    ball: &FeasibleBall,
    horizons: &[usize],
) -> Result<HorizonSweep> {
    let jobs: Vec<(usize, usize)> = (0..recipes.len())
        .flat_map(|s| horizons.iter().map(move |&h| (s, h)))
        .collect();
    let results: Vec<(HorizonRun, RegretTrace)> = jobs
        .par_iter()
        .map(|&(s, horizon)| {
            let recipe = GeneratedStream {
                rounds: horizon,
                ..recipes[s].clone()
            };
            let stream = recipe.build()?;
            let steps = StepSchedule::standard(ball, stream.lipschitz(ball));
            let trace = run_weighted_ogd(&stream, ball, &steps, &ball.center)?;
            let run = HorizonRun {
                stream: s,
                family: recipe.family,
                horizon,
                final_regret: trace.final_regret(),
                bound: trace.bound(),
                within_bound: trace.within_bound(),
                hindsight_certified: trace.optimum.certified,
            };
            Ok((run, trace))
        })
        .collect::<Result<Vec<_>>>()?;
    let (runs, traces): (Vec<_>, Vec<_>) = results.into_iter().unzip();

    let mean_regret: Vec<(usize, f64)> = horizons
        .iter()
        .map(|&h| {
            let rs: Vec<f64> = runs.iter().filter(|r| r.horizon == h).map(|r| r.final_regret).collect();
            (h, rs.iter().sum::<f64>() / rs.len().max(1) as f64)
        })
        .collect();
    let (slope, slope_note) = if horizons.len() < 2 {
        (None, Some("slope needs at least two horizons".to_string()))
    } else {
        match regret_slope(&mean_regret) {
            Ok(fit) => (Some(fit), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };
    Ok(HorizonSweep {
        runs,
        mean_regret,
        slope,
        slope_note,
        traces,
    })
}
