use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lossbench::ensemble::StackerConfig;
use lossbench::loss::{LossFamily, LossSpec};
use lossbench::run::{
    default_out_dir, interval_utility, verify_dir, DatasetSpec, EnsembleConfig, EnsembleMethod, FitSplit,
    MaskOp, MaskopsConfig, MetricsConfig, RunConfig,
};
use lossbench::seg::{SegLossFamily, SegLossSpec};
use lossbench::{Error, Result};

/// Calibration-aware losses, metrics and ensembles for imbalanced classification.
///
/// Exit status: 0 success, 1 validation failure, 2 I/O error.
/// Outputs default to $LOSSBENCH_OUT/<command> (or ./lossbench-out/<command>).
#[derive(Parser)]
#[command(name = "lossbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare analytic loss gradients with central differences.
    Gradcheck(GradcheckArgs),
    /// Train one toy model per loss on a synthetic or CSV dataset.
    Train(TrainArgs),
    /// Combine prediction CSVs by vote, average, fitted weights or stacking.
    Ensemble(EnsembleArgs),
    /// Metric report for a labeled prediction CSV, or CIs for a single value.
    Metrics(MetricsArgs),
    /// Mask fusion, metrics, crop, contrast stretch and segmentation losses on PGM files.
    Maskops(MaskopsArgs),
    /// Recompute the hashes recorded in an output directory's manifest.
    Verify { dir: PathBuf },
}

#[derive(Args)]
struct Common {
    /// Resolved config from an earlier run; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated loss names; `fusion_head` selects the fusion head.
    #[arg(long, value_delimiter = ',')]
    families: Option<Vec<String>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Loss name(s), comma-separated, or `all`.
    #[arg(long, value_delimiter = ',')]
    loss: Option<Vec<String>>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Hidden layer widths, comma-separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Seed of the synthetic dataset.
    #[arg(long)]
    data_seed: Option<u64>,
    /// Feature CSV (`label,f0,…`) for training; needs --test-csv and --classes.
    #[arg(long, requires_all = ["test_csv", "classes"])]
    train_csv: Option<PathBuf>,
    #[arg(long, requires = "train_csv")]
    test_csv: Option<PathBuf>,
    #[arg(long)]
    classes: Option<usize>,
}

#[derive(Args)]
struct EnsembleArgs {
    #[command(flatten)]
    common: Common,
    /// Prediction CSVs with identical sample ids.
    inputs: Vec<PathBuf>,
    /// vote, simple, weighted or stack.
    #[arg(long)]
    method: Option<EnsembleMethod>,
    /// Data the weights or meta-learner are fitted on: `eval` (the inputs) or `separate` (--fit-inputs).
    #[arg(long)]
    fit_split: Option<FitSplit>,
    #[arg(long, num_args = 1..)]
    fit_inputs: Vec<PathBuf>,
    #[arg(long)]
    stacker_hidden: Option<usize>,
    #[arg(long)]
    stacker_epochs: Option<usize>,
    #[arg(long)]
    stacker_lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct MetricsArgs {
    #[command(flatten)]
    common: Common,
    /// Labeled prediction CSV.
    input: Option<PathBuf>,
    /// Also write per-class ROC and PR curve CSVs.
    #[arg(long)]
    curves: bool,
    /// Utility mode: a metric value to put intervals around (needs --ci-n).
    #[arg(long, requires = "ci_n")]
    metric: Option<f64>,
    #[arg(long, requires = "metric")]
    ci_n: Option<u64>,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
}

#[derive(Args)]
struct MaskopsArgs {
    #[command(flatten)]
    common: Common,
    /// and, metrics, crop, stretch or segloss.
    op: Option<MaskOp>,
    /// PGM inputs: masks for `and`; prediction then truth for `metrics`/`segloss`;
    /// image then mask for `crop`; one image for `stretch`.
    inputs: Vec<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    family: Option<SegLossFamily>,
    /// Tversky false-positive weight.
    #[arg(long)]
    alpha: Option<f64>,
    /// Tversky false-negative weight.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    bce_weight: Option<f64>,
    /// Focal Tversky exponent.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    focal_alpha: Option<f64>,
    #[arg(long)]
    focal_gamma: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
}

fn load<T>(path: &Option<PathBuf>, pick: impl FnOnce(RunConfig) -> Option<T>, name: &str) -> Result<Option<T>> {
    let Some(p) = path else { return Ok(None) };
    let cfg = RunConfig::load(p)?;
    let found = cfg.name();
    pick(cfg)
        .map(Some)
        .ok_or_else(|| Error::Parse(format!("{} holds a `{found}` config, not `{name}`", p.display())))
}

fn gradcheck_config(a: GradcheckArgs) -> Result<RunConfig> {
    let mut c = load(&a.common.config, |c| match c {
        RunConfig::Gradcheck(c) => Some(c),
        _ => None,
    }, "gradcheck")?
    .unwrap_or_default();
    if let Some(f) = a.families {
        c.families = f;
    }
    c.trials = a.trials.unwrap_or(c.trials);
    c.step = a.step.unwrap_or(c.step);
    c.tolerance = a.tol.unwrap_or(c.tolerance);
    c.seed = a.seed.unwrap_or(c.seed);
    Ok(RunConfig::Gradcheck(c))
}

fn train_config(a: TrainArgs) -> Result<RunConfig> {
    let mut c = load(&a.common.config, |c| match c {
        RunConfig::Train(c) => Some(c),
        _ => None,
    }, "train")?
    .unwrap_or_default();
    if let Some(names) = a.loss {
        c.losses = if names.len() == 1 && names[0] == "all" {
            LossFamily::ALL.iter().map(|&f| LossSpec::new(f)).collect()
        } else {
            names
                .iter()
                .map(|n| n.parse::<LossFamily>().map(LossSpec::new))
                .collect::<Result<_>>()?
        };
    }
    for l in &mut c.losses {
        if let Some(v) = a.lambda {
            *l = l.with_lambda(v);
        }
        if let Some(v) = a.beta {
            *l = l.with_beta(v);
        }
        if let Some(v) = a.gamma {
            *l = l.with_gamma(v);
        }
        if let Some(v) = a.sigma {
            *l = l.with_sigma(v);
        }
    }
    c.epochs = a.epochs.unwrap_or(c.epochs);
    c.lr = a.lr.unwrap_or(c.lr);
    c.momentum = a.momentum.unwrap_or(c.momentum);
    c.batch_size = a.batch_size.unwrap_or(c.batch_size);
    c.hidden = a.hidden.unwrap_or(c.hidden);
    c.seed = a.seed.unwrap_or(c.seed);
    if let (Some(train), Some(test), Some(classes)) = (a.train_csv, a.test_csv, a.classes) {
        c.dataset = DatasetSpec::Csv { train, test, classes };
    }
    if let Some(s) = a.data_seed {
        match &mut c.dataset {
            DatasetSpec::Synthetic(d) => d.seed = s,
            DatasetSpec::Csv { .. } => return Err(Error::invalid("data_seed", "only applies to synthetic data")),
        }
    }
    Ok(RunConfig::Train(c))
}

fn ensemble_config(a: EnsembleArgs) -> Result<RunConfig> {
    let base = load(&a.common.config, |c| match c {
        RunConfig::Ensemble(c) => Some(c),
        _ => None,
    }, "ensemble")?;
    let mut c = match base {
        Some(c) => c,
        None => EnsembleConfig {
            method: a.method.ok_or_else(|| Error::invalid("method", "required (vote, simple, weighted, stack)"))?,
            inputs: Vec::new(),
            fit_split: None,
            fit_inputs: Vec::new(),
            stacker: None,
        },
    };
    c.method = a.method.unwrap_or(c.method);
    if !a.inputs.is_empty() {
        c.inputs = a.inputs;
    }
    c.fit_split = a.fit_split.or(c.fit_split);
    if !a.fit_inputs.is_empty() {
        c.fit_inputs = a.fit_inputs;
    }
    if c.method == EnsembleMethod::Stack {
        let mut s = c.stacker.take().unwrap_or_else(|| StackerConfig::new(c.inputs.len()));
        s.hidden_units = a.stacker_hidden.unwrap_or(s.hidden_units);
        s.epochs = a.stacker_epochs.unwrap_or(s.epochs);
        s.learning_rate = a.stacker_lr.unwrap_or(s.learning_rate);
        s.seed = a.seed.unwrap_or(s.seed);
        c.stacker = Some(s);
    }
    Ok(RunConfig::Ensemble(c))
}

fn metrics_config(a: MetricsArgs) -> Result<RunConfig> {
    let base = load(&a.common.config, |c| match c {
        RunConfig::Metrics(c) => Some(c),
        _ => None,
    }, "metrics")?;
    let input = a
        .input
        .or(base.as_ref().map(|b| b.input.clone()))
        .ok_or_else(|| Error::invalid("input", "a prediction CSV is required (or use --metric with --ci-n)"))?;
    let curves = a.curves || base.map_or(false, |b| b.curves);
    Ok(RunConfig::Metrics(MetricsConfig { input, curves }))
}

fn maskops_config(a: MaskopsArgs) -> Result<RunConfig> {
    let base = load(&a.common.config, |c| match c {
        RunConfig::Maskops(c) => Some(c),
        _ => None,
    }, "maskops")?;
    let mut c = match (base, a.op) {
        (Some(b), _) => b,
        (None, Some(op)) => MaskopsConfig {
            op,
            inputs: Vec::new(),
            threshold: None,
            segloss: None,
        },
        (None, None) => return Err(Error::invalid("op", "required (and, metrics, crop, stretch, segloss)")),
    };
    c.op = a.op.unwrap_or(c.op);
    if !a.inputs.is_empty() {
        c.inputs = a.inputs;
    }
    c.threshold = a.threshold.or(c.threshold);
    if c.op == MaskOp::Segloss {
        let mut s = c.segloss.unwrap_or_else(|| SegLossSpec::new(a.family.unwrap_or(SegLossFamily::Bce)));
        s.family = a.family.unwrap_or(s.family);
        s.alpha_fp = a.alpha.unwrap_or(s.alpha_fp);
        s.beta_fn = a.beta.unwrap_or(s.beta_fn);
        s.bce_weight = a.bce_weight.unwrap_or(s.bce_weight);
        s.gamma_ft = a.gamma.unwrap_or(s.gamma_ft);
        s.focal_alpha = a.focal_alpha.unwrap_or(s.focal_alpha);
        s.focal_gamma = a.focal_gamma.unwrap_or(s.focal_gamma);
        s.epsilon = a.epsilon.unwrap_or(s.epsilon);
        c.segloss = Some(s);
    }
    Ok(RunConfig::Maskops(c))
}

/// Stdout write that tolerates a closed pipe.
fn print_out(text: &str) {
    let mut so = std::io::stdout().lock();
    let _ = so.write_all(text.as_bytes());
    if !text.ends_with('\n') {
        let _ = so.write_all(b"\n");
    }
}

fn execute(cfg: RunConfig, out: Option<PathBuf>) -> Result<bool> {
    let dir = out.unwrap_or_else(|| default_out_dir(cfg.name()));
    let result = cfg.execute(&dir)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    print_out(&result.summary);
    eprintln!("outputs in {}", dir.display());
    Ok(result.passed)
}

fn verify(dir: &Path) -> Result<bool> {
    let m = verify_dir(dir)?;
    print_out(&format!("{}: {} outputs verified", dir.display(), m.outputs.len()));
    Ok(true)
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Gradcheck(a) => {
            let out = a.common.out.clone();
            execute(gradcheck_config(a)?, out)
        }
        Command::Train(a) => {
            let out = a.common.out.clone();
            execute(train_config(a)?, out)
        }
        Command::Ensemble(a) => {
            let out = a.common.out.clone();
            execute(ensemble_config(a)?, out)
        }
        Command::Metrics(a) => {
            if let (Some(m), Some(n)) = (a.metric, a.ci_n) {
                let v = interval_utility(m, n, a.level)?;
                print_out(&serde_json::to_string_pretty(&v).expect("json"));
                return Ok(true);
            }
            let out = a.common.out.clone();
            execute(metrics_config(a)?, out)
        }
        Command::Maskops(a) => {
            let out = a.common.out.clone();
            execute(maskops_config(a)?, out)
        }
        Command::Verify { dir } => verify(&dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
