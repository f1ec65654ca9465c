//! Covariance matrix adaptation evolution strategy.
//!
//! The (μ/μ_w, λ) variant with weighted recombination, cumulative step-size
//! adaptation and rank-one plus rank-μ covariance updates. Candidates of a
//! generation are evaluated through [`Execution`]; the state update between
//! generations is sequential, so results depend only on the seed.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ElfError, Result};
use crate::exec::Execution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Candidates per generation; `None` uses `4 + ⌊3 ln(dim)⌋`.
    pub population_size: Option<usize>,
    pub generations: usize,
    pub initial_step: f64,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            population_size: None,
            generations: 150,
            initial_step: 0.5,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn population_for(&self, dim: usize) -> usize {
        self.population_size
            .unwrap_or_else(|| 4 + (3.0 * (dim.max(1) as f64).ln()).floor() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if self.population_size.is_some_and(|p| p < 4) {
            return Err(ElfError::Config("population_size must be at least 4".into()));
        }
        if self.generations == 0 {
            return Err(ElfError::Config("generations must be at least 1".into()));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(ElfError::Config("initial_step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best: Vec<f64>,
    pub best_value: f64,
    pub evaluations: usize,
    pub final_step: f64,
}

/// Minimizes `objective` starting from `start`. Non-finite objective values
/// rank last.
pub fn minimize<F>(objective: F, start: &[f64], cfg: &SearchConfig, exec: Execution) -> Result<SearchResult>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    cfg.validate()?;
    let n = start.len();
    if n == 0 {
        return Err(ElfError::Config("cannot search an empty parameter vector".into()));
    }
    let nf = n as f64;
    let lambda = cfg.population_for(n);
    let mu = lambda / 2;

    let raw: Vec<f64> = (0..mu).map(|i| (mu as f64 + 0.5).ln() - ((i + 1) as f64).ln()).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

    let cc = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
    let cs = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
    let c1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
    let cmu = (1.0 - c1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
    let damps = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + cs;
    let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mean = DVector::from_column_slice(start);
    let mut sigma = cfg.initial_step;
    let mut cov = DMatrix::<f64>::identity(n, n);
    let mut p_sigma = DVector::<f64>::zeros(n);
    let mut p_c = DVector::<f64>::zeros(n);
    let mut basis = DMatrix::<f64>::identity(n, n);
    let mut scales = DVector::<f64>::from_element(n, 1.0);

    let mut best = start.to_vec();
    let mut best_value = f64::INFINITY;
    let mut evaluations = 0;

    for generation in 0..cfg.generations {
        let steps: Vec<DVector<f64>> = (0..lambda)
            .map(|_| {
                let z = DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
                &basis * z.component_mul(&scales)
            })
            .collect();
        let candidates: Vec<Vec<f64>> = steps
            .iter()
            .map(|y| (&mean + y * sigma).iter().copied().collect())
            .collect();
        let values: Vec<f64> = exec.map(&candidates, |x| {
            if x.iter().all(|v| v.is_finite()) {
                let v = objective(x);
                if v.is_finite() {
                    v
                } else {
                    f64::INFINITY
                }
            } else {
                f64::INFINITY
            }
        });
        evaluations += lambda;

        let mut order: Vec<usize> = (0..lambda).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        if values[order[0]] < best_value {
            best_value = values[order[0]];
            best = candidates[order[0]].clone();
        }

        let mut y_w = DVector::<f64>::zeros(n);
        for (w, &i) in weights.iter().zip(&order) {
            y_w += &steps[i] * *w;
        }
        mean += &y_w * sigma;

        let inv_sqrt = &basis * DMatrix::from_diagonal(&scales.map(|s| 1.0 / s)) * basis.transpose();
        p_sigma = &p_sigma * (1.0 - cs) + &inv_sqrt * &y_w * (cs * (2.0 - cs) * mu_eff).sqrt();
        let ps_norm = p_sigma.norm();
        let h_sigma = ps_norm / (1.0 - (1.0 - cs).powi(2 * (generation as i32 + 1))).sqrt() / chi_n
            < 1.4 + 2.0 / (nf + 1.0);
        let h = if h_sigma { 1.0 } else { 0.0 };
        p_c = &p_c * (1.0 - cc) + &y_w * (h * (cc * (2.0 - cc) * mu_eff).sqrt());

        let mut rank_mu = DMatrix::<f64>::zeros(n, n);
        for (w, &i) in weights.iter().zip(&order) {
            rank_mu += &steps[i] * steps[i].transpose() * *w;
        }
        cov = &cov * (1.0 - c1 - cmu)
            + (&p_c * p_c.transpose() + &cov * ((1.0 - h) * cc * (2.0 - cc))) * c1
            + rank_mu * cmu;
        cov = (&cov + cov.transpose()) * 0.5;

        sigma *= ((cs / damps) * (ps_norm / chi_n - 1.0)).exp();
        sigma = sigma.clamp(1e-300, 1e300);

        let eig = SymmetricEigen::new(cov.clone());
        if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(ElfError::Numeric("covariance eigendecomposition failed".into()));
        }
        basis = eig.eigenvectors;
        scales = eig.eigenvalues.map(|v| v.max(1e-300).sqrt());
    }

    Ok(SearchResult {
        best,
        best_value,
        evaluations,
        final_step: sigma,
    })
}
