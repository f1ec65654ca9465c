//! Repeated-trial experiments on the synthetic world: sweeps over the
//! prediction/impact dependency `α` and the dataset size `n`, measuring how
//! often a returned model actually violates a constraint, how often a model
//! is returned at all, and the returned models' accuracy.
//!
//! Ground truth comes from the world's closed-form expected impact evaluated
//! on a large population sample. The behavior model and that population are
//! drawn once per sweep and shared by every trial.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::StochasticLinearClassifier;
use crate::data::{Dataset, Predicate};
use crate::elf::{run_elf, ElfConfig};
use crate::error::{ElfError, Result};
use crate::estimate::{true_g_oracle, DiConstraint};
use crate::exec::Execution;
use crate::seed;
use crate::world::{behavior_dataset, compute_tolerances, sample_population, train_behavior, WorldConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub world: WorldConfig,
    pub alphas: Vec<f64>,
    pub ns: Vec<usize>,
    pub trials: usize,
    /// Confidence level of each per-group delayed-impact constraint.
    pub delta_di: f64,
    /// Minimum accuracy required of a returned model.
    pub accuracy_floor: f64,
    pub delta_acc: f64,
    pub eval_population_size: usize,
    pub base_seed: u64,
    /// Algorithm settings; its constraints and seed are set per trial.
    pub elf: ElfConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            world: WorldConfig::default(),
            alphas: vec![0.0, 0.5, 0.9],
            ns: (7..=14).map(|k| 1usize << k).collect(),
            trials: 100,
            delta_di: 0.1,
            accuracy_floor: 0.75,
            delta_acc: 0.1,
            eval_population_size: 100_000,
            base_seed: 0,
            elf: ElfConfig::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        if self.trials == 0 {
            return Err(ElfError::Config("trials must be at least 1".into()));
        }
        if self.ns.is_empty() || self.ns.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ElfError::Config("ns must be nonempty and strictly increasing".into()));
        }
        if self.alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(ElfError::Config("alphas must lie in [0, 1]".into()));
        }
        if self.eval_population_size == 0 {
            return Err(ElfError::Config("eval_population_size must be positive".into()));
        }
        self.elf.validate()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ElfError::io(path, e))?;
        let cfg: SweepConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One trial's outcome. Failure flags are only ever set for returned models.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub alpha: f64,
    pub n: usize,
    pub trial: usize,
    pub returned: bool,
    pub fail_g0: bool,
    pub fail_g1: bool,
    pub fail_acc: bool,
    /// True accuracy of the returned model.
    pub accuracy: Option<f64>,
    /// Fairness-test upper bounds of the two delayed-impact constraints.
    pub u0: Option<f64>,
    pub u1: Option<f64>,
}

/// A trial that could not be run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialError {
    pub alpha: f64,
    pub n: usize,
    pub trial: usize,
    pub message: String,
}

/// State shared by every trial of a sweep.
#[derive(Debug, Clone)]
pub struct SweepContext {
    pub beta: StochasticLinearClassifier,
    pub population: Dataset,
}

const BETA_STREAM: u64 = 0xbe7a;
const POPULATION_STREAM: u64 = 0x909;
const ELF_STREAM: u64 = 0xe1f;

impl SweepContext {
    pub fn prepare(cfg: &SweepConfig) -> Result<Self> {
        cfg.world.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.base_seed, &[BETA_STREAM]));
        let beta = train_behavior(&cfg.world, &mut rng)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.base_seed, &[POPULATION_STREAM]));
        let population = sample_population(&cfg.world, cfg.eval_population_size, &mut rng)?;
        Ok(SweepContext { beta, population })
    }
}

/// The seed of trial `(alpha, n, trial)`.
pub fn trial_seed(base_seed: u64, alpha: f64, n: usize, trial: usize) -> u64 {
    seed::derive(base_seed, &[alpha.to_bits(), n as u64, trial as u64])
}

/// Per-group delayed-impact constraints at the behavior model's own average
/// impact, plus the accuracy floor.
pub fn trial_constraints(taus: &[f64], cfg: &SweepConfig) -> Vec<DiConstraint> {
    let mut cs: Vec<DiConstraint> = taus
        .iter()
        .enumerate()
        .map(|(t, &tau)| DiConstraint::delayed_impact(Predicate::GroupEquals(t), tau, cfg.delta_di))
        .collect();
    cs.push(DiConstraint::min_accuracy(cfg.accuracy_floor, cfg.delta_acc));
    cs
}

/// Generates a behavior dataset of size `n`, trains with the per-group and
/// accuracy constraints, and judges any returned model against ground truth.
pub fn run_trial(
    alpha: f64,
    n: usize,
    trial: usize,
    seed: u64,
    cfg: &SweepConfig,
    ctx: &SweepContext,
) -> Result<SweepRecord> {
    let world = cfg.world.with_alpha(alpha);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = behavior_dataset(&world, n, &ctx.beta, &mut rng)?;
    let taus = compute_tolerances(&data)?;
    let constraints = trial_constraints(&taus, cfg);
    let elf_cfg = ElfConfig {
        constraints: constraints.clone(),
        seed: seed::derive(seed, &[ELF_STREAM]),
        ..cfg.elf.clone()
    };
    let run = run_elf(&data, &ctx.beta, &elf_cfg)?;
    let bound = |j: usize| run.report.as_ref().and_then(|r| r.upper.get(j).copied().flatten());

    let mut record = SweepRecord {
        alpha,
        n,
        trial,
        returned: false,
        fail_g0: false,
        fail_g1: false,
        fail_acc: false,
        accuracy: None,
        u0: bound(0),
        u1: bound(1),
    };
    if let Some(model) = run.outcome.solution() {
        record.returned = true;
        record.fail_g0 = true_g_oracle(model, &ctx.population, &constraints[0], &world)? > 0.0;
        record.fail_g1 = true_g_oracle(model, &ctx.population, &constraints[1], &world)? > 0.0;
        let accuracy = model.accuracy(&ctx.population)?;
        record.fail_acc = accuracy < cfg.accuracy_floor;
        record.accuracy = Some(accuracy);
    }
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepOutput {
    pub records: Vec<SweepRecord>,
    pub errors: Vec<TrialError>,
}

/// Runs every `(alpha, n, trial)` combination. Trials that fail are
/// collected in `errors` and the sweep continues.
pub fn run_sweep(cfg: &SweepConfig, exec: Execution) -> Result<SweepOutput> {
    cfg.validate()?;
    let ctx = SweepContext::prepare(cfg)?;
    run_sweep_with(cfg, &ctx, exec)
}

pub fn run_sweep_with(cfg: &SweepConfig, ctx: &SweepContext, exec: Execution) -> Result<SweepOutput> {
    let jobs: Vec<(f64, usize, usize)> = cfg
        .alphas
        .iter()
        .flat_map(|&a| cfg.ns.iter().flat_map(move |&n| (0..cfg.trials).map(move |t| (a, n, t))))
        .collect();
    // trials are the parallel unit; each trial runs its own search sequentially
    let inner = SweepConfig {
        elf: ElfConfig { execution: Execution::Sequential, ..cfg.elf.clone() },
        ..cfg.clone()
    };
    let results = exec.map(&jobs, |&(alpha, n, trial)| {
        run_trial(alpha, n, trial, trial_seed(cfg.base_seed, alpha, n, trial), &inner, ctx).map_err(|e| {
            TrialError { alpha, n, trial, message: e.to_string() }
        })
    });
    let mut out = SweepOutput::default();
    for r in results {
        match r {
            Ok(rec) => out.records.push(rec),
            Err(e) => {
                log::warn!("trial alpha={} n={} #{} failed: {}", e.alpha, e.n, e.trial, e.message);
                out.errors.push(e);
            }
        }
    }
    Ok(out)
}

/// Summary of one `(alpha, n)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub alpha: f64,
    pub n: usize,
    pub trials: usize,
    pub failrate_g0: f64,
    pub se_g0: f64,
    pub failrate_g1: f64,
    pub se_g1: f64,
    pub failrate_acc: f64,
    pub se_acc_fail: f64,
    pub solution_rate: f64,
    pub se_sol: f64,
    /// Mean true accuracy over returned models; `None` if none returned.
    pub mean_acc: Option<f64>,
    pub se_acc: Option<f64>,
}

/// `(p, sqrt(p (1 - p) / trials))`.
pub fn binomial_rate(successes: usize, trials: usize) -> (f64, f64) {
    let p = successes as f64 / trials as f64;
    (p, (p * (1.0 - p) / trials as f64).sqrt())
}

/// Groups records by `(alpha, n)` in order of first appearance.
pub fn aggregate(records: &[SweepRecord]) -> Result<Vec<AggregateRow>> {
    if records.is_empty() {
        return Err(ElfError::Data("no records to aggregate".into()));
    }
    let mut keys: Vec<(u64, usize)> = Vec::new();
    for r in records {
        let key = (r.alpha.to_bits(), r.n);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    Ok(keys
        .into_iter()
        .map(|(alpha_bits, n)| {
            let cell: Vec<&SweepRecord> = records
                .iter()
                .filter(|r| r.alpha.to_bits() == alpha_bits && r.n == n)
                .collect();
            let trials = cell.len();
            let count = |f: fn(&SweepRecord) -> bool| cell.iter().filter(|r| f(r)).count();
            let (failrate_g0, se_g0) = binomial_rate(count(|r| r.fail_g0), trials);
            let (failrate_g1, se_g1) = binomial_rate(count(|r| r.fail_g1), trials);
            let (failrate_acc, se_acc_fail) = binomial_rate(count(|r| r.fail_acc), trials);
            let (solution_rate, se_sol) = binomial_rate(count(|r| r.returned), trials);
            let accs: Vec<f64> = cell.iter().filter(|r| r.returned).filter_map(|r| r.accuracy).collect();
            let (mean_acc, se_acc) = match accs.len() {
                0 => (None, None),
                1 => (Some(accs[0]), Some(0.0)),
                k => {
                    let m = accs.iter().sum::<f64>() / k as f64;
                    let var = accs.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (k - 1) as f64;
                    (Some(m), Some((var / k as f64).sqrt()))
                }
            };
            AggregateRow {
                alpha: f64::from_bits(alpha_bits),
                n,
                trials,
                failrate_g0,
                se_g0,
                failrate_g1,
                se_g1,
                failrate_acc,
                se_acc_fail,
                solution_rate,
                se_sol,
                mean_acc,
                se_acc,
            }
        })
        .collect())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const RECORD_HEADER: [&str; 10] =
    ["alpha", "n", "trial", "returned", "fail_g0", "fail_g1", "fail_acc", "accuracy", "u0", "u1"];

pub const AGGREGATE_HEADER: [&str; 11] = [
    "alpha",
    "n",
    "trials",
    "failrate_g0",
    "se_g0",
    "failrate_g1",
    "se_g1",
    "solution_rate",
    "se_sol",
    "mean_acc",
    "se_acc",
];

pub fn write_records_csv<W: Write>(writer: W, records: &[SweepRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RECORD_HEADER)?;
    for r in records {
        w.write_record([
            r.alpha.to_string(),
            r.n.to_string(),
            r.trial.to_string(),
            r.returned.to_string(),
            r.fail_g0.to_string(),
            r.fail_g1.to_string(),
            r.fail_acc.to_string(),
            opt(r.accuracy),
            opt(r.u0),
            opt(r.u1),
        ])?;
    }
    w.flush().map_err(|e| ElfError::io("<records csv>", e))?;
    Ok(())
}

/// Writes the aggregate table; cells without returned models leave the
/// accuracy columns empty.
pub fn write_aggregate_csv<W: Write>(writer: W, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(AGGREGATE_HEADER)?;
    for r in rows {
        w.write_record([
            r.alpha.to_string(),
            r.n.to_string(),
            r.trials.to_string(),
            r.failrate_g0.to_string(),
            r.se_g0.to_string(),
            r.failrate_g1.to_string(),
            r.se_g1.to_string(),
            r.solution_rate.to_string(),
            r.se_sol.to_string(),
            opt(r.mean_acc),
            opt(r.se_acc),
        ])?;
    }
    w.flush().map_err(|e| ElfError::io("<aggregate csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn record(trial: usize, returned: bool, accuracy: Option<f64>) -> SweepRecord {
        SweepRecord {
            alpha: 0.9,
            n: 128,
            trial,
            returned,
            fail_g0: false,
            fail_g1: false,
            fail_acc: false,
            accuracy,
            u0: Some(-0.1),
            u1: None,
        }
    }

    #[test]
    fn no_failures_has_zero_rate() {
        let recs: Vec<_> = (0..10).map(|t| record(t, false, None)).collect();
        let rows = aggregate(&recs).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].failrate_g0, rows[0].se_g0), (0.0, 0.0));
        assert_eq!(rows[0].mean_acc, None);
    }

    #[test]
    fn half_returned() {
        let recs: Vec<_> = (0..10).map(|t| record(t, t % 2 == 0, (t % 2 == 0).then_some(0.8))).collect();
        let row = &aggregate(&recs).unwrap()[0];
        assert_eq!(row.solution_rate, 0.5);
        assert_abs_diff_eq!(row.se_sol, 0.15811388300841897, epsilon = 1e-12);
    }

    #[test]
    fn accuracy_averages_returned_trials_only() {
        let recs = vec![record(0, true, Some(0.8)), record(1, true, Some(0.9)), record(2, false, None)];
        let row = &aggregate(&recs).unwrap()[0];
        assert_abs_diff_eq!(row.mean_acc.unwrap(), 0.85, epsilon = 1e-12);
        assert_abs_diff_eq!(row.se_acc.unwrap(), 0.05, epsilon = 1e-12);
    }

    #[test]
    fn cells_keep_first_appearance_order() {
        let mut recs = vec![record(0, false, None)];
        recs.push(SweepRecord { n: 64, ..record(0, false, None) });
        recs.push(SweepRecord { alpha: 0.0, ..record(0, false, None) });
        let rows = aggregate(&recs).unwrap();
        let keys: Vec<_> = rows.iter().map(|r| (r.alpha, r.n)).collect();
        assert_eq!(keys, vec![(0.9, 128), (0.9, 64), (0.0, 128)]);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn csv_layout() {
        let recs = vec![record(0, true, Some(0.8)), record(1, false, None)];
        let mut buf = Vec::new();
        write_records_csv(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "alpha,n,trial,returned,fail_g0,fail_g1,fail_acc,accuracy,u0,u1");
        assert_eq!(lines.next().unwrap(), "0.9,128,0,true,false,false,false,0.8,-0.1,");
        assert_eq!(lines.next().unwrap(), "0.9,128,1,false,false,false,false,,-0.1,");

        let mut buf = Vec::new();
        write_aggregate_csv(&mut buf, &aggregate(&recs[1..]).unwrap()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "alpha,n,trials,failrate_g0,se_g0,failrate_g1,se_g1,solution_rate,se_sol,mean_acc,se_acc\n"
        ));
        assert!(text.lines().nth(1).unwrap().ends_with(",0,0,,"));
    }

    #[test]
    fn trial_seeds_are_distinct() {
        let a = trial_seed(1, 0.9, 128, 0);
        assert_ne!(a, trial_seed(1, 0.9, 128, 1));
        assert_ne!(a, trial_seed(1, 0.5, 128, 0));
        assert_ne!(a, trial_seed(1, 0.9, 256, 0));
        assert_eq!(a, trial_seed(1, 0.9, 128, 0));
    }

    #[test]
    fn config_validation() {
        assert!(SweepConfig::default().validate().is_ok());
        assert!(SweepConfig { ns: vec![256, 128], ..SweepConfig::default() }.validate().is_err());
        assert!(SweepConfig { trials: 0, ..SweepConfig::default() }.validate().is_err());
    }
}
