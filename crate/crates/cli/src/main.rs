use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use clipnet::datagen::{self, TargetFn, CALIBRATION_SAMPLES, CALIBRATION_SEED};
use clipnet::harness::{self, Estimator, ExperimentConfig, ExperimentTask};
use clipnet::nn::Activation;
use clipnet::optimizer::MonotonePolicy;
use clipnet::theory::{self, ClassParams, LipschitzSweep};

#[derive(Parser)]
#[command(
    name = "clipnet",
    version,
    about = "Sparse neural networks with the clipped L1 penalty"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Regression simulation on one of the six target functions.
    Simulate(SimulateArgs),
    /// Classification on a CSV file or on the toy logistic model.
    Classify(ClassifyArgs),
    /// Numerical checks of the approximation-theory results.
    Theory(TheoryArgs),
    /// Monte Carlo estimate of a target function's scaling constant.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON experiment config; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "n")]
    n_train: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<String>>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_test: Option<usize>,
    /// Absolute lambda grid, replacing the scaled default.
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    /// Multipliers of log^5(n)/n forming the lambda grid.
    #[arg(long, value_delimiter = ',')]
    lambda_scales: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    taus: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    adam_steps: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    widths: Option<Vec<usize>>,
    /// e.g. relu, tanh, leaky-relu:0.1
    #[arg(long)]
    activation: Option<String>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    k_bar: Option<usize>,
    #[arg(long)]
    outer_iters: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// strict or accept-last
    #[arg(long)]
    policy: Option<String>,
    /// Write zero instead of wall time so repeated runs give identical files.
    #[arg(long)]
    no_timing: bool,
    /// Also write per-iteration traces of the selected fits.
    #[arg(long)]
    traces: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "f1")]
    function: String,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    label: Option<String>,
    /// Input dimension of the toy model, used when no CSV is given.
    #[arg(long)]
    toy_dim: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Check {
    Lipschitz,
    Covering,
    Identity,
}

#[derive(Args)]
struct TheoryArgs {
    #[arg(long, value_enum)]
    check: Check,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random architectures for the Lipschitz check.
    #[arg(long, default_value_t = 1000)]
    instances: usize,
    #[arg(long, default_value_t = 2)]
    depth: usize,
    #[arg(long, default_value_t = 4)]
    width: usize,
    #[arg(long, default_value_t = 1.0)]
    bound: f64,
    #[arg(long, default_value_t = 10.0)]
    sparsity: f64,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    #[arg(long, default_value = "sigmoid")]
    activation: String,
    /// Half-width of the interval padding around [0,1] for the identity check.
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long, default_value_t = 1e-2)]
    epsilon: f64,
    /// Expansion point; a per-activation default is used when absent.
    #[arg(long)]
    t: Option<f64>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, default_value = "f1")]
    function: String,
    #[arg(long, default_value_t = CALIBRATION_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = CALIBRATION_SEED)]
    seed: u64,
}

fn load_config(path: Option<&PathBuf>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(ExperimentConfig::from_json(&text).with_context(|| format!("parsing {}", p.display()))?)
        }
        None => Ok(ExperimentConfig::default()),
    }
}

fn apply(common: &CommonArgs, cfg: &mut ExperimentConfig) -> Result<()> {
    macro_rules! set {
        ($src:expr => $dst:expr) => {
            if let Some(v) = &$src {
                $dst = v.clone();
            }
        };
    }
    set!(common.n_train => cfg.n_train);
    set!(common.replicates => cfg.n_replicates);
    set!(common.seed => cfg.seed);
    set!(common.n_test => cfg.n_test);
    set!(common.lambda_scales => cfg.lambda_scales);
    set!(common.taus => cfg.taus);
    set!(common.ks => cfg.ks);
    set!(common.adam_steps => cfg.adam_steps);
    set!(common.widths => cfg.hidden_widths);
    set!(common.eta => cfg.sdnn.eta);
    set!(common.k_bar => cfg.sdnn.k_bar);
    set!(common.outer_iters => cfg.sdnn.outer_iters);
    if common.lambdas.is_some() {
        cfg.lambdas = common.lambdas.clone();
    }
    if common.out.is_some() {
        cfg.out_dir = common.out.clone();
    }
    if let Some(b) = common.batch_size {
        cfg.sdnn.batch_size = Some(b);
        cfg.nsdnn.batch_size = Some(b);
    }
    if let Some(list) = &common.estimators {
        cfg.estimators = list.iter().map(|s| s.parse::<Estimator>()).collect::<Result<_, _>>()?;
    }
    if let Some(a) = &common.activation {
        cfg.activation = a.parse::<Activation>()?;
    }
    if let Some(p) = &common.policy {
        cfg.sdnn.monotone_policy = p.parse::<MonotonePolicy>()?;
    }
    if common.no_timing {
        cfg.record_timing = false;
    }
    if common.traces {
        cfg.write_traces = true;
    }
    Ok(())
}

fn run(cfg: &ExperimentConfig) -> Result<()> {
    let output = harness::run_experiment(cfg)?;
    println!("{}", serde_json::to_string_pretty(&output.summary)?);
    if let Some(dir) = &cfg.out_dir {
        eprintln!("wrote {} records to {}", output.records.len(), dir.display());
    }
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut cfg = load_config(args.common.config.as_ref())?;
    cfg.task = ExperimentTask::RegressionSim;
    cfg.function = args.function.parse::<TargetFn>()?;
    apply(&args.common, &mut cfg)?;
    run(&cfg)
}

fn classify(args: &ClassifyArgs) -> Result<()> {
    let mut cfg = load_config(args.common.config.as_ref())?;
    if let Some(csv) = &args.csv {
        cfg.task = ExperimentTask::ClassificationCsv;
        cfg.csv = Some(csv.clone());
        cfg.label_column = Some(args.label.clone().unwrap_or_else(|| "y".to_string()));
    } else if cfg.task != ExperimentTask::ClassificationCsv {
        if args.label.is_some() {
            bail!("--label needs --csv");
        }
        cfg.task = ExperimentTask::ClassificationToy;
    }
    if let Some(d) = args.toy_dim {
        cfg.toy_dim = d;
    }
    apply(&args.common, &mut cfg)?;
    run(&cfg)
}

fn theory_check(args: &TheoryArgs) -> Result<()> {
    let report = match args.check {
        Check::Lipschitz => {
            let sweep = LipschitzSweep {
                instances: args.instances,
                ..LipschitzSweep::default()
            };
            let r = theory::verify_lipschitz_random(&sweep, args.seed)?;
            json!({ "check": "lipschitz", "sweep": sweep, "report": r })
        }
        Check::Covering => {
            let p = ClassParams {
                depth: args.depth,
                width: args.width,
                bound: args.bound,
                sparsity: args.sparsity,
                delta: args.radius,
                tau: args.tau,
                output_bound: f64::INFINITY,
            };
            let plain = theory::covering_bound(&p)?;
            let clipped = theory::covering_bound_clipped(&p).map_err(|e| e.to_string());
            json!({
                "check": "covering",
                "depth": p.depth, "width": p.width, "bound": p.bound,
                "sparsity": p.sparsity, "radius": p.delta, "tau": p.tau,
                "zeta": p.zeta(),
                "log_covering": plain,
                "log_covering_clipped": match clipped { Ok(c) => json!(c), Err(e) => json!({ "error": e }) },
            })
        }
        Check::Identity => {
            let act: Activation = args.activation.parse()?;
            let net = theory::identity_net(args.delta, args.epsilon, act, args.t)?;
            json!({ "check": "identity", "result": net })
        }
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn calibrate(args: &CalibrateArgs) -> Result<()> {
    let f: TargetFn = args.function.parse()?;
    let c = datagen::calibrate_constant(f.index(), args.samples, args.seed)?;
    let out = json!({
        "function": f.to_string(),
        "c_m": c,
        "samples": args.samples,
        "seed": args.seed,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Classify(a) => classify(a),
        Command::Theory(a) => theory_check(a),
        Command::Calibrate(a) => calibrate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
