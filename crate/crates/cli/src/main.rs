use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use robust_bed::abtest::{ABModel, Allocation};
use robust_bed::harness::{self, ConfigOverrides, Experiment, ExperimentConfig, ModelKind};
use robust_bed::linreg::{DesignBatch, FeatureMap, LinRegModel};
use robust_bed::nmc::{self, NmcConfig, WeightMode};
use robust_bed::primitives::calibrate_beta;
use robust_bed::{Order, Seed};

/// Environment variable supplying the seed when neither a flag nor a config
/// file sets one.
const SEED_ENV: &str = "ROBUST_BED_SEED";

#[derive(Parser)]
#[command(name = "robust-bed", version, about = "Robust Bayesian experimental design")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form Sibson alpha-mutual information (nats).
    Mi(ModelArgs),
    /// Nested Monte Carlo estimate of the robust information gain.
    Estimate(EstimateArgs),
    /// Dual multiplier beta* and order alpha* for a KL radius rho.
    Calibrate(CalibrateArgs),
    /// Realized gains at nominal- and robust-optimal designs.
    Infogain(ExperimentArgs),
    /// Coverage of nominal and tilted credible sets.
    Coverage(ExperimentArgs),
    /// Held-out log predictive density, random versus optimal designs.
    Elpd(ExperimentArgs),
    /// Naive versus PAC-Bayes design optimization regret.
    Regret(ExperimentArgs),
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    parse_enum(s)
}

fn parse_feature_map(s: &str) -> Result<FeatureMap, String> {
    parse_enum(s)
}

fn parse_oracle(s: &str) -> Result<harness::OracleKind, String> {
    parse_enum(s)
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}")))
        .collect()
}

/// Comma-separated reals as one flag value.
#[derive(Clone, Debug)]
struct FloatList(Vec<f64>);

fn parse_float_list(s: &str) -> Result<FloatList, String> {
    parse_list(s).map(FloatList)
}

fn parse_priors(s: &str) -> Result<[f64; 4], String> {
    let v = parse_list(s)?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected 4 comma-separated values, got {}", v.len()))
}

#[derive(Args)]
struct ModelArgs {
    /// linreg or abtest.
    #[arg(long, value_parser = parse_model, default_value = "linreg")]
    model: ModelKind,
    /// Order alpha in (0, 1].
    #[arg(long)]
    alpha: f64,
    /// Regression parameter dimension.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// affine or identity.
    #[arg(long, value_parser = parse_feature_map, default_value = "affine")]
    feature_map: FeatureMap,
    #[arg(long, default_value_t = 1.0)]
    noise_var: f64,
    #[arg(long, default_value_t = 1.0)]
    prior_var: f64,
    /// One regression design as comma-separated coordinates; repeat for a batch.
    #[arg(long = "design", value_parser = parse_list)]
    designs: Vec<Vec<f64>>,
    /// Subjects in group A.
    #[arg(long)]
    na: Option<u32>,
    /// Total subjects.
    #[arg(long)]
    nx: Option<u32>,
    /// Beta priors as delta_a,gamma_a,delta_b,gamma_b.
    #[arg(long, value_parser = parse_priors, default_value = "1,1,1,1")]
    priors: [f64; 4],
}

enum Problem {
    Linreg(LinRegModel, DesignBatch),
    Abtest(ABModel, Allocation),
}

impl ModelArgs {
    fn order(&self) -> Result<Order> {
        Ok(Order::new(self.alpha)?)
    }

    fn problem(&self) -> Result<Problem> {
        let mut c = ExperimentConfig::defaults(Experiment::Infogain);
        c.dim = self.dim;
        c.feature_map = self.feature_map;
        c.noise_var = self.noise_var;
        c.prior_var = self.prior_var;
        c.priors = self.priors;
        match self.model {
            ModelKind::Linreg => {
                if self.designs.is_empty() {
                    bail!("linreg needs at least one --design");
                }
                Ok(Problem::Linreg(c.linreg_model()?, DesignBatch::new(self.designs.clone())))
            }
            ModelKind::Abtest => {
                let (Some(na), Some(nx)) = (self.na, self.nx) else {
                    bail!("abtest needs --na and --nx");
                };
                c.total = nx;
                Ok(Problem::Abtest(c.ab_model()?, Allocation::split(nx, na)?))
            }
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Outer samples N.
    #[arg(long, default_value_t = 1000)]
    outer_n: usize,
    /// Inner samples M.
    #[arg(long, default_value_t = 100)]
    inner_m: usize,
    /// Separate contrastive sample size K (default: reuse the inner draws).
    #[arg(long)]
    contrastive_k: Option<usize>,
    /// Use exact marginal likelihoods instead of contrastive averages.
    #[arg(long)]
    exact_weights: bool,
    /// Root seed (default: $ROBUST_BED_SEED, else 0).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    model: CalibrateModel,
    /// KL radius of the ambiguity set.
    #[arg(long)]
    rho: f64,
    /// Sorted beta grid (default: 241 log-spaced points on [1e-3, 1e3]).
    #[arg(long, value_parser = parse_float_list)]
    grid: Option<FloatList>,
}

#[derive(Args)]
struct CalibrateModel {
    #[arg(long, value_parser = parse_model, default_value = "linreg")]
    model: ModelKind,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, value_parser = parse_feature_map, default_value = "affine")]
    feature_map: FeatureMap,
    #[arg(long, default_value_t = 1.0)]
    noise_var: f64,
    #[arg(long, default_value_t = 1.0)]
    prior_var: f64,
    #[arg(long = "design", value_parser = parse_list)]
    designs: Vec<Vec<f64>>,
    #[arg(long)]
    na: Option<u32>,
    #[arg(long)]
    nx: Option<u32>,
    #[arg(long, value_parser = parse_priors, default_value = "1,1,1,1")]
    priors: [f64; 4],
}

#[derive(Args)]
struct ExperimentArgs {
    /// Flat JSON config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_model)]
    model: Option<ModelKind>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Comma-separated orders for the ELPD sweep.
    #[arg(long, value_parser = parse_float_list)]
    alphas: Option<FloatList>,
    /// Comma-separated credible levels.
    #[arg(long, value_parser = parse_float_list)]
    levels: Option<FloatList>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    outer_n: Option<usize>,
    #[arg(long)]
    inner_m: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Root seed (default: config, then $ROBUST_BED_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// CSV path; metadata goes to `<path>.meta.json`.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, value_parser = parse_feature_map)]
    feature_map: Option<FeatureMap>,
    #[arg(long)]
    noise_var: Option<f64>,
    #[arg(long)]
    prior_var: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    train_size: Option<usize>,
    #[arg(long)]
    test_size: Option<usize>,
    #[arg(long)]
    total: Option<u32>,
    #[arg(long, value_parser = parse_priors)]
    priors: Option<[f64; 4]>,
    /// nmc or exact.
    #[arg(long, value_parser = parse_oracle)]
    oracle: Option<harness::OracleKind>,
    #[arg(long)]
    naive_iters: Option<usize>,
    #[arg(long)]
    naive_step: Option<f64>,
    #[arg(long)]
    fd_step: Option<f64>,
    #[arg(long)]
    policy_steps: Option<usize>,
    #[arg(long)]
    policy_batch: Option<usize>,
    #[arg(long)]
    lr_mean: Option<f64>,
    #[arg(long)]
    lr_log_std: Option<f64>,
    #[arg(long)]
    policy_std: Option<f64>,
    #[arg(long)]
    policy_samples: Option<usize>,
    #[arg(long)]
    gibbs_rounds: Option<usize>,
    /// Run the PAC-Bayes path of the regret study.
    #[arg(long)]
    pac: Option<bool>,
}

impl ExperimentArgs {
    fn resolve(self, experiment: Experiment) -> Result<ExperimentConfig> {
        let base = match &self.config {
            Some(path) => ConfigOverrides::from_json_file(path)?,
            None => ConfigOverrides::default(),
        };
        let flags = ConfigOverrides {
            model: self.model,
            alpha: self.alpha,
            alphas: self.alphas.map(|l| l.0),
            levels: self.levels.map(|l| l.0),
            trials: self.trials,
            outer_n: self.outer_n,
            inner_m: self.inner_m,
            lambda: self.lambda,
            delta: self.delta,
            seed: self.seed,
            output: self.output,
            dim: self.dim,
            feature_map: self.feature_map,
            noise_var: self.noise_var,
            prior_var: self.prior_var,
            batch_size: self.batch_size,
            train_size: self.train_size,
            test_size: self.test_size,
            total: self.total,
            priors: self.priors,
            oracle: self.oracle,
            naive_iters: self.naive_iters,
            naive_step: self.naive_step,
            fd_step: self.fd_step,
            policy_steps: self.policy_steps,
            policy_batch: self.policy_batch,
            lr_mean: self.lr_mean,
            lr_log_std: self.lr_log_std,
            policy_std: self.policy_std,
            policy_samples: self.policy_samples,
            gibbs_rounds: self.gibbs_rounds,
            pac: self.pac,
        };
        let mut merged = base.merge(flags);
        if merged.seed.is_none() {
            merged.seed = env_seed()?;
        }
        Ok(ExperimentConfig::resolve(experiment, &merged)?)
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => Ok(Some(v.trim().parse().with_context(|| format!("{SEED_ENV}={v:?} is not a seed"))?)),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(e).context(SEED_ENV),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Mi(args) => {
            let order = args.order()?;
            let value = match args.problem()? {
                Problem::Linreg(model, batch) => model.sibson_mi(&batch, order)?,
                Problem::Abtest(model, alloc) => model.sibson_mi(&alloc, order),
            };
            println!("sibson_mi={value}");
        }
        Command::Estimate(args) => {
            let order = args.model.order()?;
            let seed = match args.seed {
                Some(s) => s,
                None => env_seed()?.unwrap_or(0),
            };
            let mut config = NmcConfig::new(args.outer_n, args.inner_m, order);
            if let Some(k) = args.contrastive_k {
                config = config.with_contrastive_k(k);
            }
            if args.exact_weights {
                config = config.with_weights(WeightMode::Exact);
            }
            let value = match args.model.problem()? {
                Problem::Linreg(model, batch) => nmc::estimate(&model, &batch, &config, Seed::new(seed))?,
                Problem::Abtest(model, alloc) => nmc::estimate(&model, &alloc, &config, Seed::new(seed))?,
            };
            println!("estimate={value} outer_n={} inner_m={} seed={seed}", args.outer_n, args.inner_m);
        }
        Command::Calibrate(args) => {
            let m = args.model;
            let as_model = ModelArgs {
                model: m.model,
                alpha: 1.0,
                dim: m.dim,
                feature_map: m.feature_map,
                noise_var: m.noise_var,
                prior_var: m.prior_var,
                designs: m.designs,
                na: m.na,
                nx: m.nx,
                priors: m.priors,
            };
            let grid = args
                .grid
                .map(|l| l.0)
                .unwrap_or_else(|| (0..=240).map(|i| 10f64.powf(-3.0 + i as f64 / 40.0)).collect());
            let problem = as_model.problem()?;
            let mi = |beta: f64| -> robust_bed::Result<f64> {
                let order = robust_bed::primitives::alpha_from_beta(beta)?;
                match &problem {
                    Problem::Linreg(model, batch) => model.sibson_mi(batch, order),
                    Problem::Abtest(model, alloc) => Ok(model.sibson_mi(alloc, order)),
                }
            };
            let c = calibrate_beta(mi, args.rho, &grid)?;
            println!("beta={} alpha={}", c.beta, c.order.alpha());
        }
        Command::Infogain(args) => experiment(args, Experiment::Infogain)?,
        Command::Coverage(args) => experiment(args, Experiment::Coverage)?,
        Command::Elpd(args) => experiment(args, Experiment::Elpd)?,
        Command::Regret(args) => experiment(args, Experiment::Regret)?,
    }
    Ok(())
}

fn experiment(args: ExperimentArgs, experiment: Experiment) -> Result<()> {
    let config = args.resolve(experiment)?;
    let path = harness::run_and_write(&config)?;
    println!("output={}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version land here too and exit 0
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
