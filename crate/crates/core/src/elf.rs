//! End-to-end training: partition, candidate selection, fairness test.

use serde::{Deserialize, Serialize};

use crate::candidate::{select_candidate, CostBreakdown, CostConfig, CostModel, LossKind};
use crate::classifier::StochasticLinearClassifier;
use crate::cmaes::SearchConfig;
use crate::data::{stratified_partition, Dataset};
use crate::error::{ElfError, Result};
use crate::estimate::DiConstraint;
use crate::exec::Execution;
use crate::fairness::{bound_constraints, ElfOutcome, TestReport};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElfConfig {
    pub constraints: Vec<DiConstraint>,
    /// Share of the data used for candidate selection.
    pub candidate_fraction: f64,
    pub xi: f64,
    pub lambda: f64,
    pub loss: LossKind,
    pub loss_max: f64,
    pub search: SearchConfig,
    pub seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for ElfConfig {
    fn default() -> Self {
        let cost = CostConfig::default();
        ElfConfig {
            constraints: Vec::new(),
            candidate_fraction: 0.6,
            xi: cost.xi,
            lambda: cost.lambda,
            loss: cost.loss,
            loss_max: cost.loss_max,
            search: SearchConfig::default(),
            seed: 0,
            execution: Execution::default(),
        }
    }
}

impl ElfConfig {
    pub fn cost_config(&self, n_future: usize) -> CostConfig {
        CostConfig {
            constraints: self.constraints.clone(),
            xi: self.xi,
            lambda: self.lambda,
            n_future,
            loss: self.loss,
            loss_max: self.loss_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.candidate_fraction > 0.0 && self.candidate_fraction < 1.0) {
            return Err(ElfError::Config(format!(
                "candidate_fraction must lie in (0, 1), got {}",
                self.candidate_fraction
            )));
        }
        self.search.validate()?;
        // n_future is checked per run
        self.cost_config(2).validate()
    }
}

/// Everything one run produced. Only `outcome` is the algorithm's answer;
/// the rest is diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ElfRun {
    pub outcome: ElfOutcome,
    /// The model candidate selection proposed, if it got that far.
    pub candidate: Option<StochasticLinearClassifier>,
    /// Candidate-selection cost of the proposed model.
    pub predicted: Option<CostBreakdown>,
    /// Fairness-test bounds of the proposed model.
    pub report: Option<TestReport>,
    pub reason: Option<String>,
}

impl ElfRun {
    fn nsf(reason: String) -> Self {
        ElfRun {
            outcome: ElfOutcome::NoSolutionFound,
            candidate: None,
            predicted: None,
            report: None,
            reason: Some(reason),
        }
    }
}

const MIN_EXAMPLES: usize = 4;
const SEARCH_STREAM: u64 = 1;

/// Runs the full algorithm on `data` logged by `beta`.
///
/// Data problems (too few examples, a constraint matching nothing, an empty
/// partition) produce NSF with a reason; invalid configuration and numeric
/// failures are errors.
pub fn run_elf(data: &Dataset, beta: &StochasticLinearClassifier, cfg: &ElfConfig) -> Result<ElfRun> {
    cfg.validate()?;
    if data.len() < MIN_EXAMPLES {
        return Ok(ElfRun::nsf(format!("{} examples, need at least {MIN_EXAMPLES}", data.len())));
    }
    for (j, c) in cfg.constraints.iter().enumerate() {
        if !data.iter().any(|ex| c.predicate.evaluate(ex)) {
            return Ok(ElfRun::nsf(format!("constraint {j} matches no examples")));
        }
    }

    let (candidate_set, safety_set) = match stratified_partition(data, cfg.candidate_fraction, cfg.seed) {
        Ok(parts) => parts,
        Err(e @ ElfError::EmptyPartition(_)) => return Ok(ElfRun::nsf(e.to_string())),
        Err(e) => return Err(e),
    };
    if safety_set.len() < 2 {
        return Ok(ElfRun::nsf(format!("safety set has {} example(s)", safety_set.len())));
    }

    let cost_cfg = cfg.cost_config(safety_set.len());
    let search = SearchConfig {
        seed: seed::derive(cfg.seed, &[SEARCH_STREAM, cfg.search.seed]),
        ..cfg.search.clone()
    };
    let theta_c = select_candidate(&candidate_set, &cost_cfg, &search, beta, cfg.execution)?;
    let predicted = CostModel::new(&candidate_set, &cost_cfg, beta)?.breakdown(theta_c.theta())?;

    let report = bound_constraints(&theta_c, &safety_set, &cfg.constraints, beta)?;
    let (outcome, reason) = if report.passed() {
        (ElfOutcome::Solution(theta_c.clone()), None)
    } else {
        (ElfOutcome::NoSolutionFound, report.failure())
    };
    if let Some(r) = &reason {
        log::debug!("no solution found: {r}");
    }
    Ok(ElfRun {
        outcome,
        candidate: Some(theta_c),
        predicted: Some(predicted),
        report: Some(report),
        reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{LabeledExample, Predicate};

    fn tiny(n: usize) -> Dataset {
        let examples = (0..n)
            .map(|i| LabeledExample { x: vec![i as f64], y: i % 2, t: (i / 2) % 2, y_hat_beta: i % 2, i_beta: 1.0 })
            .collect();
        Dataset::new(examples, 1, 2, 2).unwrap()
    }

    #[test]
    fn too_little_data_is_nsf() {
        let beta = StochasticLinearClassifier::zeros(2, 1);
        let cfg = ElfConfig {
            constraints: vec![DiConstraint::delayed_impact(Predicate::True, 0.0, 0.1)],
            ..ElfConfig::default()
        };
        let run = run_elf(&tiny(3), &beta, &cfg).unwrap();
        assert_eq!(run.outcome, ElfOutcome::NoSolutionFound);
        assert!(run.reason.is_some() && run.candidate.is_none());
    }

    #[test]
    fn unmatched_predicate_is_nsf() {
        let beta = StochasticLinearClassifier::zeros(2, 1);
        let cfg = ElfConfig {
            constraints: vec![DiConstraint::delayed_impact(
                Predicate::And(vec![Predicate::GroupEquals(0), Predicate::GroupEquals(1)]),
                0.0,
                0.1,
            )],
            ..ElfConfig::default()
        };
        let run = run_elf(&tiny(20), &beta, &cfg).unwrap();
        assert!(run.reason.unwrap().contains("matches no examples"));
    }

    #[test]
    fn bad_config_is_an_error() {
        let beta = StochasticLinearClassifier::zeros(2, 1);
        let cfg = ElfConfig { candidate_fraction: 1.2, ..ElfConfig::default() };
        assert!(run_elf(&tiny(20), &beta, &cfg).is_err());
    }

    #[test]
    fn config_json_defaults() {
        let cfg: ElfConfig = serde_json::from_str(
            r#"{"constraints":[{"predicate":"true","tau":0.0,"delta":0.1}],"seed":4}"#,
        )
        .unwrap();
        assert_eq!(cfg.candidate_fraction, 0.6);
        assert_eq!(cfg.lambda, 2.0);
        assert_eq!(cfg.xi, 0.01);
        assert_eq!(cfg.search.generations, 150);
        assert_eq!(cfg.seed, 4);
    }
}
