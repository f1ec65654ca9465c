//! The held-out safety check that gates the return of a candidate model.

use crate::bounds::upper_bound;
use crate::classifier::StochasticLinearClassifier;
use crate::data::Dataset;
use crate::error::{ElfError, Result};
use crate::estimate::{g_estimates, DiConstraint};

/// Either a certified model or "No Solution Found".
///
/// NSF is fair by convention: it never counts as a constraint violation.
#[derive(Debug, Clone, PartialEq)]
pub enum ElfOutcome {
    Solution(StochasticLinearClassifier),
    NoSolutionFound,
}

impl ElfOutcome {
    pub fn is_solution(&self) -> bool {
        matches!(self, ElfOutcome::Solution(_))
    }

    pub fn solution(&self) -> Option<&StochasticLinearClassifier> {
        match self {
            ElfOutcome::Solution(m) => Some(m),
            ElfOutcome::NoSolutionFound => None,
        }
    }
}

/// Per-constraint evidence behind a fairness-test decision.
#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    /// Upper bound per constraint; `None` when it could not be computed.
    pub upper: Vec<Option<f64>>,
    /// Why each uncertifiable constraint failed, if it did.
    pub reasons: Vec<Option<String>>,
}

impl TestReport {
    pub fn passed(&self) -> bool {
        self.upper.iter().all(|u| u.is_some_and(|v| v <= 0.0))
    }

    /// One-line summary of the first failing constraint.
    pub fn failure(&self) -> Option<String> {
        self.upper.iter().zip(&self.reasons).enumerate().find_map(|(j, (u, r))| match (u, r) {
            (Some(v), _) if *v > 0.0 => Some(format!("constraint {j}: upper bound {v:.6} > 0")),
            (None, Some(r)) => Some(format!("constraint {j}: {r}")),
            (None, None) => Some(format!("constraint {j}: no bound")),
            _ => None,
        })
    }
}

/// Bounds every constraint on the safety set without inflation.
pub fn bound_constraints(
    theta_c: &StochasticLinearClassifier,
    safety: &Dataset,
    constraints: &[DiConstraint],
    beta: &StochasticLinearClassifier,
) -> Result<TestReport> {
    if safety.is_empty() {
        return Err(ElfError::EmptyDataset);
    }
    let mut upper = Vec::with_capacity(constraints.len());
    let mut reasons = Vec::with_capacity(constraints.len());
    for c in constraints {
        c.validate()?;
        let g = g_estimates(theta_c, beta, safety, c)?;
        match upper_bound(g.values(), c.delta, c.bound) {
            Ok(u) => {
                upper.push(Some(u));
                reasons.push(None);
            }
            Err(e @ (ElfError::InsufficientSamples { .. } | ElfError::OutOfRange { .. })) => {
                upper.push(None);
                reasons.push(Some(e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(TestReport { upper, reasons })
}

/// Returns `θ_c` iff every constraint's upper bound on the safety set is
/// at most zero; constraints that cannot be bounded yield NSF.
pub fn fairness_test(
    theta_c: &StochasticLinearClassifier,
    safety: &Dataset,
    constraints: &[DiConstraint],
    beta: &StochasticLinearClassifier,
) -> Result<ElfOutcome> {
    let report = bound_constraints(theta_c, safety, constraints, beta)?;
    Ok(if report.passed() {
        ElfOutcome::Solution(theta_c.clone())
    } else {
        ElfOutcome::NoSolutionFound
    })
}
