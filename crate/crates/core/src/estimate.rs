//! Importance-sampled estimates of constraint objectives from logged data.
//!
//! A delayed-impact constraint has the form `g(θ) = τ - E[I^π | c]`; each
//! logged example matching `c` yields the unbiased estimate
//! `τ - π(x, ŷβ) / β(x, ŷβ) · Iβ`. The accuracy constraint
//! `g(θ) = τ - E[ACC]` needs no reweighting: its per-example estimate is
//! `τ - π(x, y)`.

use serde::{Deserialize, Serialize};

use crate::bounds::BoundMethod;
use crate::classifier::StochasticLinearClassifier;
use crate::data::{Dataset, LabeledExample, Predicate};
use crate::error::{ElfError, Result};
use crate::world::WorldConfig;

/// What a constraint's expectation is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Expected delayed impact of the new model's predictions.
    #[default]
    DelayedImpact,
    /// Expected accuracy of the new model.
    Accuracy,
}

/// One constraint `g(θ) = τ - E[· | c] ≤ 0` to hold with probability `1 - δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiConstraint {
    #[serde(default)]
    pub objective: Objective,
    pub predicate: Predicate,
    pub tau: f64,
    pub delta: f64,
    #[serde(default = "default_bound")]
    pub bound: BoundMethod,
}

fn default_bound() -> BoundMethod {
    BoundMethod::TTest
}

impl DiConstraint {
    pub fn delayed_impact(predicate: Predicate, tau: f64, delta: f64) -> Self {
        DiConstraint {
            objective: Objective::DelayedImpact,
            predicate,
            tau,
            delta,
            bound: BoundMethod::TTest,
        }
    }

    pub fn min_accuracy(tau: f64, delta: f64) -> Self {
        DiConstraint {
            objective: Objective::Accuracy,
            predicate: Predicate::True,
            tau,
            delta,
            bound: BoundMethod::TTest,
        }
    }

    pub fn with_bound(mut self, bound: BoundMethod) -> Self {
        self.bound = bound;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(ElfError::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !self.tau.is_finite() {
            return Err(ElfError::Config("tau must be finite".into()));
        }
        self.bound.validate()
    }

    /// The estimate contributed by one matching example, given `π(x, ŷβ)`
    /// (delayed impact) or `π(x, y)` (accuracy) and `β(x, ŷβ)`.
    #[inline]
    pub(crate) fn entry(&self, ex: &LabeledExample, pi_prob: f64, beta_prob: f64) -> f64 {
        match self.objective {
            Objective::DelayedImpact => self.tau - pi_prob / beta_prob * ex.i_beta,
            Objective::Accuracy => self.tau - pi_prob,
        }
    }

    /// The label whose probability under `π` this constraint needs.
    #[inline]
    pub(crate) fn pi_label(&self, ex: &LabeledExample) -> usize {
        match self.objective {
            Objective::DelayedImpact => ex.y_hat_beta,
            Objective::Accuracy => ex.y,
        }
    }
}

/// The per-example estimates `ĝ` of one constraint, in dataset order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GEstimates(pub Vec<f64>);

impl GEstimates {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

const MIN_BEHAVIOR_PROB: f64 = 1e-300;

/// `π(x, ŷ) / β(x, ŷ)`.
pub fn importance_weight(
    pi: &StochasticLinearClassifier,
    beta: &StochasticLinearClassifier,
    x: &[f64],
    y_hat_beta: usize,
) -> Result<f64> {
    let b = beta.prob(x, y_hat_beta);
    if b < MIN_BEHAVIOR_PROB {
        return Err(ElfError::Numeric(format!("behavior probability {b:e} underflows")));
    }
    Ok(pi.prob(x, y_hat_beta) / b)
}

/// Builds `ĝ` for one constraint over the examples matching its predicate.
pub fn g_estimates(
    pi: &StochasticLinearClassifier,
    beta: &StochasticLinearClassifier,
    data: &Dataset,
    constraint: &DiConstraint,
) -> Result<GEstimates> {
    let mut out = Vec::new();
    for ex in data.iter().filter(|ex| constraint.predicate.evaluate(ex)) {
        let value = match constraint.objective {
            Objective::DelayedImpact => {
                constraint.tau - importance_weight(pi, beta, &ex.x, ex.y_hat_beta)? * ex.i_beta
            }
            Objective::Accuracy => constraint.tau - pi.prob(&ex.x, ex.y),
        };
        out.push(value);
    }
    Ok(GEstimates(out))
}

/// Ground-truth `g(θ)` on a population drawn from the synthetic world.
///
/// Uses the closed-form conditional mean of the world's delayed impact,
/// `E[I | x, t] = α π(x, 1) + (1 - α) μ_t`, averaged over the matching
/// population members. Features, labels and groups of the population are
/// used; its logged predictions and impacts are ignored.
pub fn true_g_oracle(
    pi: &StochasticLinearClassifier,
    population: &Dataset,
    constraint: &DiConstraint,
    world: &WorldConfig,
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for ex in population.iter().filter(|ex| constraint.predicate.evaluate(ex)) {
        total += match constraint.objective {
            Objective::DelayedImpact => world.expected_impact(pi.prob(&ex.x, 1), ex.t),
            Objective::Accuracy => pi.prob(&ex.x, ex.y),
        };
        count += 1;
    }
    if count == 0 {
        return Err(ElfError::InsufficientSamples { needed: 1, got: 0 });
    }
    Ok(constraint.tau - total / count as f64)
}
