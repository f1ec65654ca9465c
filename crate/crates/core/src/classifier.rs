//! Softmax-linear stochastic classifiers.
//!
//! Every classifier puts probability at least [`PROB_FLOOR`] on every label,
//! so importance weights between any two classifiers stay finite.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{ElfError, Result};

/// Mixing weight of the uniform distribution in every prediction:
/// `p = (1 - L * PROB_FLOOR) * softmax + PROB_FLOOR`.
pub const PROB_FLOOR: f64 = 1e-12;

/// `π_θ(x, ŷ) = softmax(θ [x; 1])_ŷ`, with `θ` stored row-major as
/// `n_labels × (dim + 1)` (bias in the last column).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticLinearClassifier {
    #[serde(rename = "L")]
    n_labels: usize,
    #[serde(rename = "d")]
    dim: usize,
    theta: Vec<f64>,
}

/// Full-batch gradient descent settings for the behavior model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BehaviorFit {
    pub steps: usize,
    pub learning_rate: f64,
}

impl Default for BehaviorFit {
    fn default() -> Self {
        BehaviorFit {
            steps: 2000,
            learning_rate: 0.1,
        }
    }
}

impl StochasticLinearClassifier {
    pub fn zeros(n_labels: usize, dim: usize) -> Self {
        StochasticLinearClassifier {
            n_labels,
            dim,
            theta: vec![0.0; n_labels * (dim + 1)],
        }
    }

    pub fn from_theta(n_labels: usize, dim: usize, theta: Vec<f64>) -> Result<Self> {
        if n_labels < 2 {
            return Err(ElfError::Config(format!("need at least 2 labels, got {n_labels}")));
        }
        if theta.len() != n_labels * (dim + 1) {
            return Err(ElfError::Config(format!(
                "theta has {} entries, expected {}",
                theta.len(),
                n_labels * (dim + 1)
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(ElfError::Numeric("theta has a non-finite entry".into()));
        }
        Ok(StochasticLinearClassifier { n_labels, dim, theta })
    }

    /// Number of parameters for the given shape.
    pub fn param_count(n_labels: usize, dim: usize) -> usize {
        n_labels * (dim + 1)
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    fn score(&self, x: &[f64], label: usize) -> f64 {
        let row = &self.theta[label * (self.dim + 1)..(label + 1) * (self.dim + 1)];
        row[..self.dim]
            .iter()
            .zip(x)
            .map(|(w, v)| w * v)
            .sum::<f64>()
            + row[self.dim]
    }

    fn softmax_into(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.score(x, k);
        }
        let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            sum += *o;
        }
        for o in out.iter_mut() {
            *o /= sum;
        }
    }

    fn floor_mix(&self, s: f64) -> f64 {
        (1.0 - self.n_labels as f64 * PROB_FLOOR) * s + PROB_FLOOR
    }

    /// Probability of every label at `x`; entries are strictly positive.
    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.n_labels];
        self.predict_proba_into(x, &mut p);
        p
    }

    /// [`predict_proba`](Self::predict_proba) into a caller-provided buffer
    /// of length `n_labels`.
    pub fn predict_proba_into(&self, x: &[f64], out: &mut [f64]) {
        self.softmax_into(x, out);
        for v in out.iter_mut() {
            *v = self.floor_mix(*v);
        }
    }

    /// Probability of a single label, without allocating.
    pub fn prob(&self, x: &[f64], label: usize) -> f64 {
        // one-pass log-sum-exp
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        let mut target = 0.0;
        for k in 0..self.n_labels {
            let z = self.score(x, k);
            if k == label {
                target = z;
            }
            if z > max {
                sum = sum * (max - z).exp() + 1.0;
                max = z;
            } else {
                sum += (z - max).exp();
            }
        }
        self.floor_mix((target - max).exp() / sum)
    }

    pub fn sample_prediction<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> usize {
        let p = self.predict_proba(x);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, pk) in p.iter().enumerate() {
            acc += pk;
            if u < acc {
                return k;
            }
        }
        self.n_labels - 1
    }

    /// Expected 0/1 loss of the stochastic classifier: `1 - mean π(x_i, y_i)`.
    pub fn expected_loss(&self, data: &Dataset) -> Result<f64> {
        Ok(1.0 - self.accuracy(data)?)
    }

    /// Expected accuracy: `mean π(x_i, y_i)`.
    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(ElfError::EmptyDataset);
        }
        let total: f64 = data.iter().map(|ex| self.prob(&ex.x, ex.y)).sum();
        Ok(total / data.len() as f64)
    }

    /// Mean negative log-likelihood of the true labels.
    pub fn nll(&self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(ElfError::EmptyDataset);
        }
        let total: f64 = data.iter().map(|ex| -self.prob(&ex.x, ex.y).ln()).sum();
        Ok(total / data.len() as f64)
    }

    /// Gradient of [`nll`](Self::nll) with respect to `θ`, row-major like `θ`.
    pub fn nll_gradient(&self, data: &Dataset) -> Result<Vec<f64>> {
        if data.is_empty() {
            return Err(ElfError::EmptyDataset);
        }
        let cols = self.dim + 1;
        let scale = 1.0 - self.n_labels as f64 * PROB_FLOOR;
        let mut grad = vec![0.0; self.theta.len()];
        let mut s = vec![0.0; self.n_labels];
        for ex in data.iter() {
            self.softmax_into(&ex.x, &mut s);
            let p_y = scale * s[ex.y] + PROB_FLOOR;
            // d(-ln p_y)/dz_k = -scale * s_y * ([k == y] - s_k) / p_y
            let factor = scale * s[ex.y] / p_y;
            for k in 0..self.n_labels {
                let indicator = if k == ex.y { 1.0 } else { 0.0 };
                let dz = -factor * (indicator - s[k]);
                let row = &mut grad[k * cols..(k + 1) * cols];
                for (g, v) in row.iter_mut().zip(&ex.x) {
                    *g += dz * v;
                }
                row[self.dim] += dz;
            }
        }
        let m = data.len() as f64;
        for g in grad.iter_mut() {
            *g /= m;
        }
        Ok(grad)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| ElfError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ElfError::io(path, e))?;
        let raw: StochasticLinearClassifier = serde_json::from_str(&text)?;
        Self::from_theta(raw.n_labels, raw.dim, raw.theta)
    }
}

/// Fits a softmax-linear behavior model on `(x, y)` by full-batch gradient
/// descent on the mean negative log-likelihood, starting from `θ = 0`.
pub fn fit_behavior_model(data: &Dataset, fit: &BehaviorFit) -> Result<StochasticLinearClassifier> {
    if data.is_empty() {
        return Err(ElfError::EmptyDataset);
    }
    let mut clf = StochasticLinearClassifier::zeros(data.n_labels(), data.dim());
    for step in 0..fit.steps {
        let grad = clf.nll_gradient(data)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(ElfError::Numeric(format!("non-finite gradient at step {step}")));
        }
        for (w, g) in clf.theta.iter_mut().zip(&grad) {
            *w -= fit.learning_rate * g;
        }
    }
    Ok(clf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabeledExample;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn with_scores(a: f64, b: f64) -> StochasticLinearClassifier {
        // d = 0: only biases
        StochasticLinearClassifier::from_theta(2, 0, vec![a, b]).unwrap()
    }

    fn labeled(x: Vec<f64>, y: usize) -> LabeledExample {
        LabeledExample { x, y, t: 0, y_hat_beta: y, i_beta: 0.0 }
    }

    #[test]
    fn uniform_at_zero() {
        let p = StochasticLinearClassifier::zeros(2, 3).predict_proba(&[1.0, -2.0, 0.5]);
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn softmax_hand_value() {
        let p = with_scores(0.0, 3f64.ln()).predict_proba(&[]);
        assert_abs_diff_eq!(p[0], 0.25, epsilon = 1e-11);
        assert_abs_diff_eq!(p[1], 0.75, epsilon = 1e-11);
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn extreme_scores_keep_full_support() {
        let clf = with_scores(0.0, 1000.0);
        let p = clf.predict_proba(&[]);
        assert!(p[0] > 0.0 && p[1] < 1.0);
        assert!(clf.prob(&[], 0) > 0.0 && clf.prob(&[], 1) < 1.0);
        let clf = with_scores(1e308, -1e308);
        assert!(clf.predict_proba(&[]).iter().all(|v| v.is_finite() && *v > 0.0));
    }

    #[test]
    fn prob_agrees_with_predict_proba() {
        let clf = StochasticLinearClassifier::from_theta(3, 2, vec![0.3, -1.0, 2.0, 0.1, 0.0, -0.5, 4.0, 1.0, 0.2]).unwrap();
        let x = [0.7, -1.3];
        let p = clf.predict_proba(&x);
        for k in 0..3 {
            assert_abs_diff_eq!(clf.prob(&x, k), p[k], epsilon = 1e-15);
        }
    }

    #[test]
    fn sampling_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let uniform = StochasticLinearClassifier::zeros(2, 1);
        let ones = (0..n).filter(|_| uniform.sample_prediction(&[0.3], &mut rng) == 1).count();
        assert!((ones as f64 / n as f64 - 0.5).abs() < 0.01);

        let skewed = with_scores(0.0, 3f64.ln());
        let ones = (0..n).filter(|_| skewed.sample_prediction(&[], &mut rng) == 1).count();
        assert!((ones as f64 / n as f64 - 0.75).abs() < 0.01);
    }

    #[test]
    fn sampling_is_deterministic() {
        let clf = with_scores(0.2, -0.4);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| clf.sample_prediction(&[], &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
    }

    #[test]
    fn loss_examples() {
        let data = Dataset::new(vec![labeled(vec![1.0], 0), labeled(vec![-1.0], 1)], 1, 2, 2).unwrap();
        let zero = StochasticLinearClassifier::zeros(2, 1);
        assert_abs_diff_eq!(zero.expected_loss(&data).unwrap(), 0.5, epsilon = 1e-12);

        // probability 0.9 on every true label
        let logit = (0.9f64 / 0.1).ln();
        let clf = StochasticLinearClassifier::from_theta(2, 1, vec![logit / 2.0, 0.0, -logit / 2.0, 0.0]).unwrap();
        assert_abs_diff_eq!(clf.expected_loss(&data).unwrap(), 0.1, epsilon = 1e-11);
        assert_abs_diff_eq!(clf.accuracy(&data).unwrap(), 0.9, epsilon = 1e-11);

        // true-label probabilities {0.25, 0.75}
        let data = Dataset::new(vec![labeled(vec![], 0), labeled(vec![], 1)], 0, 2, 2).unwrap();
        let clf = with_scores(0.0, 3f64.ln());
        assert_abs_diff_eq!(clf.expected_loss(&data).unwrap(), 0.5, epsilon = 1e-11);
        assert_abs_diff_eq!(clf.accuracy(&data).unwrap(), 0.5, epsilon = 1e-11);
    }

    #[test]
    fn empty_dataset_errors() {
        let data = Dataset::new(vec![], 1, 2, 2).unwrap();
        let clf = StochasticLinearClassifier::zeros(2, 1);
        assert!(clf.expected_loss(&data).is_err());
        assert!(clf.accuracy(&data).is_err());
        assert!(fit_behavior_model(&data, &BehaviorFit::default()).is_err());
    }

    fn separable() -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let examples = (0..200)
            .map(|i| {
                let y = i % 2;
                let c = if y == 1 { 2.0 } else { -2.0 };
                let x = vec![c + rng.random_range(-1.0..1.0), c + rng.random_range(-1.0..1.0)];
                labeled(x, y)
            })
            .collect();
        Dataset::new(examples, 2, 2, 2).unwrap()
    }

    #[test]
    fn behavior_fit_separates_clusters() {
        let data = separable();
        let clf = fit_behavior_model(&data, &BehaviorFit::default()).unwrap();
        assert!(clf.accuracy(&data).unwrap() > 0.95);
        assert_eq!(clf, fit_behavior_model(&data, &BehaviorFit::default()).unwrap());
    }

    #[test]
    fn zero_steps_returns_initialization() {
        let data = separable();
        let clf = fit_behavior_model(&data, &BehaviorFit { steps: 0, learning_rate: 0.1 }).unwrap();
        assert_eq!(clf, StochasticLinearClassifier::zeros(2, 2));
        assert_abs_diff_eq!(clf.accuracy(&data).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_theta() {
        assert!(StochasticLinearClassifier::from_theta(2, 1, vec![0.0; 3]).is_err());
        assert!(StochasticLinearClassifier::from_theta(2, 1, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
        assert!(StochasticLinearClassifier::from_theta(1, 1, vec![0.0; 2]).is_err());
    }

    #[test]
    fn json_shape() {
        let clf = StochasticLinearClassifier::from_theta(2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = serde_json::to_string(&clf).unwrap();
        assert_eq!(s, r#"{"L":2,"d":1,"theta":[1.0,2.0,3.0,4.0]}"#);
    }
}
