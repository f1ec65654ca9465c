//! Candidate selection: a cost that predicts whether a model will pass the
//! fairness test, minimized by an evolutionary search.
//!
//! The cost returns the model's loss when every inflated bound clears
//! `-ξ/4`, and otherwise `loss_max + Σ max(U⁺_j, 0)`, so any model predicted
//! to fail costs at least as much as any model predicted to pass.

use serde::{Deserialize, Serialize};

use crate::bounds::{self, BoundMethod, BoundRequest};
use crate::classifier::StochasticLinearClassifier;
use crate::cmaes::{self, SearchConfig};
use crate::data::Dataset;
use crate::error::{ElfError, Result};
use crate::estimate::DiConstraint;
use crate::exec::Execution;
use crate::stats::t_quantile_upper;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Expected 0/1 loss of the stochastic classifier; bounded by 1.
    #[default]
    Expected01,
    /// Mean negative log-likelihood; unbounded, so `loss_max` must be set
    /// by the caller to something meaningful.
    Nll,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostConfig {
    pub constraints: Vec<DiConstraint>,
    pub xi: f64,
    pub lambda: f64,
    /// Size of the safety set the inflated bounds predict for.
    pub n_future: usize,
    pub loss: LossKind,
    /// Upper bound on the loss over all parameters.
    pub loss_max: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            constraints: Vec::new(),
            xi: 0.01,
            lambda: 2.0,
            n_future: 0,
            loss: LossKind::Expected01,
            loss_max: 1.0,
        }
    }
}

impl CostConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.xi > 0.0) {
            return Err(ElfError::Config(format!("xi must be positive, got {}", self.xi)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(ElfError::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if self.n_future < 2 {
            return Err(ElfError::Config(format!("n_future must be at least 2, got {}", self.n_future)));
        }
        if !self.loss_max.is_finite() {
            return Err(ElfError::Config("loss_max must be finite".into()));
        }
        self.constraints.iter().try_for_each(DiConstraint::validate)
    }
}

/// Detailed result of one cost evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CostBreakdown {
    pub value: f64,
    pub loss: f64,
    /// Inflated bound per constraint; `None` when the candidate set cannot
    /// support one (too few matches, or samples outside a Hoeffding range).
    pub upper: Vec<Option<f64>>,
    pub predicted_pass: bool,
}

/// Cost function bound to a candidate set, with everything that does not
/// depend on `θ` precomputed.
#[derive(Debug)]
pub struct CostModel<'a> {
    data: &'a Dataset,
    cfg: &'a CostConfig,
    beta_probs: Vec<f64>,
    members: Vec<Vec<usize>>,
    quantiles: Vec<f64>,
}

impl<'a> CostModel<'a> {
    pub fn new(data: &'a Dataset, cfg: &'a CostConfig, beta: &StochasticLinearClassifier) -> Result<Self> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(ElfError::EmptyDataset);
        }
        if beta.dim() != data.dim() || beta.n_labels() != data.n_labels() {
            return Err(ElfError::Config("behavior model shape does not match the data".into()));
        }
        let beta_probs: Vec<f64> = data.iter().map(|ex| beta.prob(&ex.x, ex.y_hat_beta)).collect();
        if let Some(p) = beta_probs.iter().find(|&&p| p < 1e-300) {
            return Err(ElfError::Numeric(format!("behavior probability {p:e} underflows")));
        }
        let members = cfg
            .constraints
            .iter()
            .map(|c| {
                data.iter()
                    .enumerate()
                    .filter(|(_, ex)| c.predicate.evaluate(ex))
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();
        let quantiles = cfg
            .constraints
            .iter()
            .map(|c| match c.bound {
                BoundMethod::TTest => t_quantile_upper(c.delta, (cfg.n_future - 1) as f64),
                BoundMethod::Hoeffding { .. } => Ok(f64::NAN),
            })
            .collect::<Result<_>>()?;
        Ok(CostModel {
            data,
            cfg,
            beta_probs,
            members,
            quantiles,
        })
    }

    pub fn param_count(&self) -> usize {
        StochasticLinearClassifier::param_count(self.data.n_labels(), self.data.dim())
    }

    /// Evaluates the cost; non-finite or mis-shaped `θ` costs `+∞`.
    pub fn evaluate(&self, theta: &[f64]) -> f64 {
        self.breakdown(theta).map_or(f64::INFINITY, |b| b.value)
    }

    pub fn breakdown(&self, theta: &[f64]) -> Result<CostBreakdown> {
        let pi = StochasticLinearClassifier::from_theta(self.data.n_labels(), self.data.dim(), theta.to_vec())?;
        let n_labels = self.data.n_labels();
        let mut probs = vec![0.0; self.data.len() * n_labels];
        for (ex, row) in self.data.iter().zip(probs.chunks_exact_mut(n_labels)) {
            pi.predict_proba_into(&ex.x, row);
        }
        let examples = self.data.examples();
        let p = |i: usize, label: usize| probs[i * n_labels + label];

        let m = examples.len() as f64;
        let loss = match self.cfg.loss {
            LossKind::Expected01 => 1.0 - (0..examples.len()).map(|i| p(i, examples[i].y)).sum::<f64>() / m,
            LossKind::Nll => -(0..examples.len()).map(|i| p(i, examples[i].y).ln()).sum::<f64>() / m,
        };

        let mut upper = Vec::with_capacity(self.cfg.constraints.len());
        let mut entries = Vec::new();
        for ((c, members), &quantile) in self.cfg.constraints.iter().zip(&self.members).zip(&self.quantiles) {
            entries.clear();
            entries.extend(members.iter().map(|&i| {
                let ex = &examples[i];
                c.entry(ex, p(i, c.pi_label(ex)), self.beta_probs[i])
            }));
            let u = match c.bound {
                BoundMethod::TTest if entries.len() >= 2 => {
                    Some(bounds::inflated_ttest(&entries, quantile, self.cfg.lambda, self.cfg.n_future))
                }
                BoundMethod::TTest => None,
                BoundMethod::Hoeffding { .. } => bounds::inflated_upper(&BoundRequest {
                    samples: &entries,
                    delta: c.delta,
                    method: c.bound,
                    lambda: self.cfg.lambda,
                    n_future: self.cfg.n_future,
                })
                .ok(),
            };
            upper.push(u.filter(|v| v.is_finite()));
        }

        let threshold = -self.cfg.xi / 4.0;
        let predicted_pass = upper.iter().all(|u| u.is_some_and(|v| v <= threshold));
        let value = if predicted_pass {
            loss
        } else {
            self.cfg.loss_max
                + upper
                    .iter()
                    .map(|u| u.map_or(self.cfg.loss_max, |v| v.max(0.0)))
                    .sum::<f64>()
        };
        Ok(CostBreakdown {
            value,
            loss,
            upper,
            predicted_pass,
        })
    }
}

/// One-shot cost evaluation of `θ` on a candidate set.
pub fn cost(
    theta: &[f64],
    candidate_set: &Dataset,
    cfg: &CostConfig,
    beta: &StochasticLinearClassifier,
) -> Result<f64> {
    let model = CostModel::new(candidate_set, cfg, beta)?;
    Ok(model.breakdown(theta)?.value)
}

/// Searches for the `θ` minimizing the cost on the candidate set, starting
/// from `θ = 0`.
pub fn select_candidate(
    candidate_set: &Dataset,
    cfg: &CostConfig,
    search: &SearchConfig,
    beta: &StochasticLinearClassifier,
    exec: Execution,
) -> Result<StochasticLinearClassifier> {
    let model = CostModel::new(candidate_set, cfg, beta)?;
    let start = vec![0.0; model.param_count()];
    let result = cmaes::minimize(|theta| model.evaluate(theta), &start, search, exec)?;
    log::debug!(
        "candidate search: best cost {:.6} after {} evaluations",
        result.best_value,
        result.evaluations
    );
    StochasticLinearClassifier::from_theta(candidate_set.n_labels(), candidate_set.dim(), result.best)
}
