//! Command-line interface.
//!
//! Every subcommand reads one JSON config (`--config`); relative paths inside
//! a config resolve against the config file's directory.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::BoundMethod;
use crate::classifier::StochasticLinearClassifier;
use crate::data::{Dataset, Predicate};
use crate::elf::{run_elf, ElfConfig};
use crate::error::{ElfError, Result};
use crate::estimate::{true_g_oracle, DiConstraint, Objective};
use crate::exec::Execution;
use crate::fairness::ElfOutcome;
use crate::harness::{aggregate, run_sweep, write_aggregate_csv, write_records_csv, SweepConfig};
use crate::seed;
use crate::world::{generate_behavior_dataset, sample_population, train_behavior, WorldConfig};

#[derive(Debug, Parser)]
#[command(name = "elf", version, about = "Seldonian classification with delayed-impact constraints")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// JSON config for the subcommand.
    #[arg(long)]
    pub config: PathBuf,
    /// Output file (directory for `sweep`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a logged behavior dataset from the synthetic world.
    GenData(CommonArgs),
    /// Fit a behavior model on a labeled sample from the synthetic world.
    TrainBehavior(CommonArgs),
    /// Train on a logged dataset; prints the model path or `NSF`.
    Run(CommonArgs),
    /// Run an alpha × n sweep; writes records.csv and aggregate.csv.
    Sweep(CommonArgs),
    /// Print a model's true constraint values and accuracy as JSON.
    Eval(CommonArgs),
}

/// `gen-data` config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenDataConfig {
    #[serde(default)]
    pub world: WorldConfig,
    pub n: usize,
    /// Behavior model JSON; when absent one is trained from the world and
    /// written next to the output as `<out>.beta.json`.
    #[serde(default)]
    pub behavior: Option<PathBuf>,
}

/// A constraint in a `run` config. A delayed-impact constraint without
/// `tau` uses the mean logged impact over its matching examples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintSpec {
    #[serde(default)]
    pub objective: Objective,
    pub predicate: Predicate,
    #[serde(default)]
    pub tau: Option<f64>,
    pub delta: f64,
    #[serde(default)]
    pub bound: Option<BoundMethod>,
}

impl ConstraintSpec {
    pub fn resolve(&self, data: &Dataset) -> Result<DiConstraint> {
        let tau = match (self.tau, self.objective) {
            (Some(t), _) => t,
            (None, Objective::Accuracy) => {
                return Err(ElfError::Config("accuracy constraints need an explicit tau".into()))
            }
            (None, Objective::DelayedImpact) => {
                let matching: Vec<f64> =
                    data.iter().filter(|ex| self.predicate.evaluate(ex)).map(|ex| ex.i_beta).collect();
                if matching.is_empty() {
                    return Err(ElfError::Data("constraint predicate matches no examples".into()));
                }
                matching.iter().sum::<f64>() / matching.len() as f64
            }
        };
        let c = DiConstraint {
            objective: self.objective,
            predicate: self.predicate.clone(),
            tau,
            delta: self.delta,
            bound: self.bound.unwrap_or(BoundMethod::TTest),
        };
        c.validate()?;
        Ok(c)
    }
}

/// `run` config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: PathBuf,
    pub behavior: PathBuf,
    pub constraints: Vec<ConstraintSpec>,
    /// Algorithm settings; its `constraints` field is ignored.
    #[serde(default)]
    pub elf: ElfConfig,
}

/// `eval` config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    #[serde(default)]
    pub world: WorldConfig,
    pub model: PathBuf,
    /// Per-group tolerances; when given, `g` values are reported.
    #[serde(default)]
    pub taus: Option<Vec<f64>>,
    #[serde(default = "default_population")]
    pub population_size: usize,
}

fn default_population() -> usize {
    100_000
}

#[derive(Debug, Serialize)]
struct EvalReport {
    expected_impact: Vec<f64>,
    g: Option<Vec<f64>>,
    accuracy: f64,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| ElfError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new(".")).join(p)
    }
}

fn require_out(args: &CommonArgs) -> Result<&Path> {
    args.out.as_deref().ok_or_else(|| ElfError::Config("--out is required".into()))
}

fn gen_data(args: &CommonArgs) -> Result<()> {
    let mut cfg: GenDataConfig = read_json(&args.config)?;
    if let Some(s) = args.seed {
        cfg.world.seed = s;
    }
    cfg.world.validate()?;
    let out = require_out(args)?;
    let beta = match &cfg.behavior {
        Some(p) => StochasticLinearClassifier::load(&resolve(&args.config, p))?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.world.seed, &[0xbe7a]));
            let beta = train_behavior(&cfg.world, &mut rng)?;
            let mut beta_path = out.as_os_str().to_owned();
            beta_path.push(".beta.json");
            beta.save(Path::new(&beta_path))?;
            beta
        }
    };
    generate_behavior_dataset(&cfg.world, cfg.n, &beta)?.save(out)?;
    println!("{}", out.display());
    Ok(())
}

fn train(args: &CommonArgs) -> Result<()> {
    let mut world: WorldConfig = read_json(&args.config)?;
    if let Some(s) = args.seed {
        world.seed = s;
    }
    world.validate()?;
    let out = require_out(args)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(world.seed, &[0xbe7a]));
    train_behavior(&world, &mut rng)?.save(out)?;
    println!("{}", out.display());
    Ok(())
}

fn run(args: &CommonArgs) -> Result<()> {
    let cfg: RunConfig = read_json(&args.config)?;
    let data = Dataset::load(&resolve(&args.config, &cfg.data))?;
    let beta = StochasticLinearClassifier::load(&resolve(&args.config, &cfg.behavior))?;
    let constraints = cfg.constraints.iter().map(|c| c.resolve(&data)).collect::<Result<Vec<_>>>()?;
    let elf = ElfConfig {
        constraints,
        seed: args.seed.unwrap_or(cfg.elf.seed),
        ..cfg.elf
    };
    let result = run_elf(&data, &beta, &elf)?;
    match result.outcome {
        ElfOutcome::Solution(model) => {
            let out = require_out(args)?;
            model.save(out)?;
            println!("{}", out.display());
        }
        ElfOutcome::NoSolutionFound => {
            if let Some(r) = &result.reason {
                log::info!("{r}");
            }
            println!("NSF");
        }
    }
    Ok(())
}

fn sweep(args: &CommonArgs) -> Result<()> {
    let mut cfg = SweepConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.base_seed = s;
    }
    let out = require_out(args)?;
    std::fs::create_dir_all(out).map_err(|e| ElfError::io(out, e))?;
    let output = run_sweep(&cfg, Execution::Parallel)?;
    let create = |name: &str| {
        let p = out.join(name);
        std::fs::File::create(&p).map_err(|e| ElfError::io(p, e))
    };
    write_records_csv(create("records.csv")?, &output.records)?;
    if !output.records.is_empty() {
        write_aggregate_csv(create("aggregate.csv")?, &aggregate(&output.records)?)?;
    }
    if !output.errors.is_empty() {
        let mut w = csv::Writer::from_writer(create("errors.csv")?);
        w.write_record(["alpha", "n", "trial", "message"])?;
        for e in &output.errors {
            w.write_record([e.alpha.to_string(), e.n.to_string(), e.trial.to_string(), e.message.clone()])?;
        }
        w.flush().map_err(|e| ElfError::io(out.join("errors.csv"), e))?;
    }
    println!("{}", out.display());
    Ok(())
}

fn eval(args: &CommonArgs) -> Result<()> {
    let mut cfg: EvalConfig = read_json(&args.config)?;
    if let Some(s) = args.seed {
        cfg.world.seed = s;
    }
    cfg.world.validate()?;
    let model = StochasticLinearClassifier::load(&resolve(&args.config, &cfg.model))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.world.seed, &[0x909]));
    let population = sample_population(&cfg.world, cfg.population_size, &mut rng)?;
    let groups = cfg.world.n_groups();
    let expected_impact = (0..groups)
        .map(|t| {
            let c = DiConstraint::delayed_impact(Predicate::GroupEquals(t), 0.0, 0.5);
            true_g_oracle(&model, &population, &c, &cfg.world).map(|g| -g)
        })
        .collect::<Result<Vec<_>>>()?;
    let g = match &cfg.taus {
        Some(taus) if taus.len() != groups => {
            return Err(ElfError::Config(format!("expected {groups} taus, got {}", taus.len())))
        }
        Some(taus) => Some(taus.iter().zip(&expected_impact).map(|(t, e)| t - e).collect()),
        None => None,
    };
    let report = EvalReport {
        expected_impact,
        g,
        accuracy: model.accuracy(&population)?,
    };
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    let (Command::GenData(args)
    | Command::TrainBehavior(args)
    | Command::Run(args)
    | Command::Sweep(args)
    | Command::Eval(args)) = &cli.command;
    let work = || match &cli.command {
        Command::GenData(a) => gen_data(a),
        Command::TrainBehavior(a) => train(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Eval(a) => eval(a),
    };
    with_jobs(args.jobs, work)
}

#[cfg(feature = "parallel")]
fn with_jobs<F: FnOnce() -> Result<()> + Send>(jobs: Option<usize>, work: F) -> Result<()> {
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| ElfError::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_jobs<F: FnOnce() -> Result<()> + Send>(_jobs: Option<usize>, work: F) -> Result<()> {
    work()
}

/// Runs the CLI and returns the process exit status: 0 on success
/// (including NSF), 1 for usage, config and I/O errors, 2 for numeric
/// failures.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numeric() {
                2
            } else {
                1
            }
        }
    }
}
