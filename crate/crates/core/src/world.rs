//! Synthetic delayed-impact world with known ground truth.
//!
//! People belong to one of two groups, have Gaussian features centered on a
//! group mean, and a label drawn from a logistic model of features and group.
//! A prediction `ŷ` for a person of group `t` produces the delayed impact
//! `α ŷ + (1 - α) N(μ_t, σ²_t)`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::classifier::{fit_behavior_model, BehaviorFit, StochasticLinearClassifier};
use crate::data::{Dataset, LabeledExample};
use crate::error::{ElfError, Result};

/// Gaussian noise parameters; `variance` is σ², not σ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    /// Weight of the prediction in the delayed impact.
    pub alpha: f64,
    pub dim: usize,
    pub group_proportions: Vec<f64>,
    /// Per-group feature means; features have identity covariance.
    pub feature_means: Vec<Vec<f64>>,
    /// Label law: `Pr(y = 1) = logistic(w·x + bias + group_effect · t)`.
    pub label_weights: Vec<f64>,
    pub label_bias: f64,
    pub label_group_effect: f64,
    /// Impact noise per group.
    pub di_noise: Vec<Gaussian>,
    /// Labeled sample size used to fit the behavior model.
    pub behavior_sample_size: usize,
    pub behavior_fit: BehaviorFit,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            alpha: 0.9,
            dim: 5,
            group_proportions: vec![0.5, 0.5],
            feature_means: vec![
                vec![0.5, 0.5, 0.0, 0.0, 0.0],
                vec![-0.5, -0.5, 0.0, 0.0, 0.0],
            ],
            label_weights: vec![1.5, -1.0, 1.0, 0.5, -0.5],
            label_bias: 1.0,
            label_group_effect: -0.5,
            di_noise: vec![
                Gaussian { mean: 2.0, variance: 0.5 },
                Gaussian { mean: 1.0, variance: 1.0 },
            ],
            behavior_sample_size: 1000,
            behavior_fit: BehaviorFit::default(),
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn with_alpha(&self, alpha: f64) -> Self {
        WorldConfig { alpha, ..self.clone() }
    }

    pub fn n_groups(&self) -> usize {
        self.group_proportions.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ElfError::Config(msg));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if self.n_groups() != 2 {
            return bad(format!("world needs 2 groups, got {}", self.n_groups()));
        }
        let total: f64 = self.group_proportions.iter().sum();
        if (total - 1.0).abs() > 1e-9 || self.group_proportions.iter().any(|p| *p < 0.0) {
            return bad("group proportions must be a probability vector".into());
        }
        if self.feature_means.len() != self.n_groups()
            || self.feature_means.iter().any(|m| m.len() != self.dim)
        {
            return bad("feature_means must have one length-dim vector per group".into());
        }
        if self.label_weights.len() != self.dim {
            return bad("label_weights must have dim entries".into());
        }
        if self.di_noise.len() != self.n_groups() || self.di_noise.iter().any(|g| !(g.variance > 0.0)) {
            return bad("di_noise needs one positive-variance entry per group".into());
        }
        if self.behavior_sample_size == 0 {
            return bad("behavior_sample_size must be positive".into());
        }
        Ok(())
    }

    /// `E[I | ŷ, t] = α ŷ + (1 - α) μ_t`, averaged over `ŷ ~ Bernoulli(p1)`.
    pub fn expected_impact(&self, p1: f64, t: usize) -> f64 {
        self.alpha * p1 + (1.0 - self.alpha) * self.di_noise[t].mean
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ElfError::io(path, e))?;
        let cfg: WorldConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Draws `α ŷ + (1 - α) N(μ_t, σ²_t)`.
pub fn draw_delayed_impact<R: Rng + ?Sized>(cfg: &WorldConfig, y_hat: usize, t: usize, rng: &mut R) -> f64 {
    let noise = cfg.di_noise[t];
    let z: f64 = StandardNormal.sample(rng);
    cfg.alpha * y_hat as f64 + (1.0 - cfg.alpha) * (noise.mean + noise.variance.sqrt() * z)
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Draws `(x, t, y)` for one person.
fn draw_person<R: Rng + ?Sized>(cfg: &WorldConfig, rng: &mut R) -> (Vec<f64>, usize, usize) {
    let u: f64 = rng.random();
    let mut t = cfg.n_groups() - 1;
    let mut acc = 0.0;
    for (g, p) in cfg.group_proportions.iter().enumerate() {
        acc += p;
        if u < acc {
            t = g;
            break;
        }
    }
    let x: Vec<f64> = cfg.feature_means[t]
        .iter()
        .map(|m| {
            let z: f64 = StandardNormal.sample(rng);
            m + z
        })
        .collect();
    let z = cfg.label_weights.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>()
        + cfg.label_bias
        + cfg.label_group_effect * t as f64;
    let y = usize::from(rng.random::<f64>() < logistic(z));
    (x, t, y)
}

/// People without logged predictions (`y_hat_beta = 0`, `i_beta = 0`);
/// used to fit the behavior model and as the ground-truth population.
pub fn sample_population<R: Rng + ?Sized>(cfg: &WorldConfig, n: usize, rng: &mut R) -> Result<Dataset> {
    let examples = (0..n)
        .map(|_| {
            let (x, t, y) = draw_person(cfg, rng);
            LabeledExample { x, y, t, y_hat_beta: 0, i_beta: 0.0 }
        })
        .collect();
    Dataset::new(examples, cfg.dim, 2, cfg.n_groups())
}

/// Fits the behavior model on a fresh labeled sample of
/// `behavior_sample_size` people. Uses features only.
pub fn train_behavior<R: Rng + ?Sized>(cfg: &WorldConfig, rng: &mut R) -> Result<StochasticLinearClassifier> {
    let sample = sample_population(cfg, cfg.behavior_sample_size, rng)?;
    fit_behavior_model(&sample, &cfg.behavior_fit)
}

/// Logged data: people, the behavior model's sampled predictions, and the
/// delayed impact those predictions caused.
pub fn behavior_dataset<R: Rng + ?Sized>(
    cfg: &WorldConfig,
    n: usize,
    beta: &StochasticLinearClassifier,
    rng: &mut R,
) -> Result<Dataset> {
    if beta.dim() != cfg.dim || beta.n_labels() != 2 {
        return Err(ElfError::Config("behavior model shape does not match the world".into()));
    }
    let examples = (0..n)
        .map(|_| {
            let (x, t, y) = draw_person(cfg, rng);
            let y_hat_beta = beta.sample_prediction(&x, rng);
            let i_beta = draw_delayed_impact(cfg, y_hat_beta, t, rng);
            LabeledExample { x, y, t, y_hat_beta, i_beta }
        })
        .collect();
    Dataset::new(examples, cfg.dim, 2, cfg.n_groups())
}

/// [`behavior_dataset`] seeded from `cfg.seed`.
pub fn generate_behavior_dataset(
    cfg: &WorldConfig,
    n: usize,
    beta: &StochasticLinearClassifier,
) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    behavior_dataset(cfg, n, beta, &mut rng)
}

/// Per-group mean of the logged impact: the delayed impact the behavior
/// model caused in each group.
pub fn compute_tolerances(data: &Dataset) -> Result<Vec<f64>> {
    let mut sums = vec![0.0; data.n_groups()];
    let mut counts = vec![0usize; data.n_groups()];
    for ex in data.iter() {
        sums[ex.t] += ex.i_beta;
        counts[ex.t] += 1;
    }
    sums.iter()
        .zip(&counts)
        .enumerate()
        .map(|(g, (s, &c))| {
            if c == 0 {
                Err(ElfError::Data(format!("group {g} has no examples")))
            } else {
                Ok(s / c as f64)
            }
        })
        .collect()
}
