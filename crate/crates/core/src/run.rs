//! Command implementations behind the `lossbench` binary: resolved run
//! configs (TOML), output directories with hashed manifests, and the
//! gradcheck / train / ensemble / metrics / maskops pipelines.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::ensemble::{
    apply_stacker, fit_stacker, fit_weights, fusion_head_gradient_check, majority_vote, simple_average,
    weighted_combine, StackerConfig,
};
use crate::error::{Error, Result};
use crate::loss::{loss_gradient_check, LossFamily, LossSpec};
use crate::matrix::Matrix;
use crate::metrics::{clopper_pearson_ci, metric_report, pr_curve, roc_curve, wald_ci};
use crate::nn::{generate_dataset, history_csv, run_multiloss_experiment, Dataset, SyntheticDatasetConfig, TrainConfig};
use crate::prob::PredictionMatrix;
use crate::seg::{
    and_fuse, binarize, bounding_box_crop, contrast_stretch, mask_metrics, read_pgm, seg_loss, write_pgm, BinaryMask,
    Image, SegLossFamily, SegLossSpec,
};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "LOSSBENCH_OUT";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const FUSION_HEAD: &str = "fusion_head";

/// `$LOSSBENCH_OUT/<command>`, or `lossbench-out/<command>` when unset.
pub fn default_out_dir(command: &str) -> PathBuf {
    let root = std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("lossbench-out"));
    root.join(command)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum RunConfig {
    Gradcheck(GradcheckConfig),
    Train(TrainRunConfig),
    Ensemble(EnsembleConfig),
    Metrics(MetricsConfig),
    Maskops(MaskopsConfig),
}

impl RunConfig {
    pub fn name(&self) -> &'static str {
        match self {
            RunConfig::Gradcheck(_) => "gradcheck",
            RunConfig::Train(_) => "train",
            RunConfig::Ensemble(_) => "ensemble",
            RunConfig::Metrics(_) => "metrics",
            RunConfig::Maskops(_) => "maskops",
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(format!("serializing config: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn execute(&self, out: &Path) -> Result<CommandOutput> {
        match self {
            RunConfig::Gradcheck(c) => run_gradcheck(c, out),
            RunConfig::Train(c) => run_train(c, out),
            RunConfig::Ensemble(c) => run_ensemble(c, out),
            RunConfig::Metrics(c) => run_metrics(c, out),
            RunConfig::Maskops(c) => run_maskops(c, out),
        }
    }
}

/// Text for stdout, warnings for stderr, and whether the run passed its checks.
#[derive(Debug, Clone, Default)]
pub struct CommandOutput {
    pub summary: String,
    pub warnings: Vec<String>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub created_unix: u64,
    pub inputs: Vec<FileHash>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileHash>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("manifest: {e}")))
    }

    /// Recomputes every hash; inputs are checked when still present.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for f in &self.outputs {
            let got = sha256_file(&dir.join(&f.path))?;
            if got != f.sha256 {
                return Err(Error::invalid("manifest", format!("output `{}` hash mismatch", f.path)));
            }
        }
        for f in &self.inputs {
            let p = Path::new(&f.path);
            if p.exists() && sha256_file(p)? != f.sha256 {
                return Err(Error::invalid("manifest", format!("input `{}` changed since the run", f.path)));
            }
        }
        Ok(())
    }
}

pub fn verify_dir(dir: &Path) -> Result<RunManifest> {
    let m = RunManifest::read(dir)?;
    m.verify(dir)?;
    Ok(m)
}

/// Output directory that hashes everything written through it.
struct Outputs {
    dir: PathBuf,
    files: Vec<FileHash>,
    inputs: Vec<FileHash>,
}

impl Outputs {
    fn create(dir: &Path, config: &RunConfig) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let mut out = Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            inputs: Vec::new(),
        };
        out.write(CONFIG_FILE, config.to_toml()?.as_bytes())?;
        Ok(out)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.files.push(FileHash {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    fn json(&mut self, name: &str, v: &serde_json::Value) -> Result<()> {
        let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    fn input(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path)
            .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        self.inputs.push(FileHash {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(bytes)
    }

    fn finish(self, command: &str) -> Result<()> {
        let created_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let m = RunManifest {
            tool: "lossbench".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            created_unix,
            inputs: self.inputs,
            outputs: self.files,
        };
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        fs::write(self.dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckConfig {
    /// Loss family names, plus `fusion_head` for the feature-fusion head.
    pub families: Vec<String>,
    pub trials: usize,
    pub step: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        let mut families: Vec<String> = LossFamily::ALL.iter().map(|f| f.name().to_string()).collect();
        families.push(FUSION_HEAD.into());
        Self {
            families,
            trials: 100,
            step: 1e-5,
            tolerance: 1e-4,
            seed: 0,
        }
    }
}

pub fn run_gradcheck(cfg: &GradcheckConfig, out_dir: &Path) -> Result<CommandOutput> {
    if cfg.families.is_empty() {
        return Err(Error::invalid("families", "nothing to check"));
    }
    if cfg.trials == 0 {
        return Err(Error::invalid("trials", "must be ≥ 1"));
    }
    let mut results: Vec<(String, f64, usize)> = Vec::new();
    for name in &cfg.families {
        if name == FUSION_HEAD {
            let err = fusion_head_gradient_check(8, 4, 3, cfg.trials, cfg.step, cfg.seed)?;
            results.push((name.clone(), err, 0));
        } else {
            let family: LossFamily = name.parse()?;
            let r = loss_gradient_check(&LossSpec::new(family), cfg.trials, cfg.step, cfg.seed)?;
            results.push((name.clone(), r.max_rel_error, r.rejected));
        }
    }
    let mut out = Outputs::create(out_dir, &RunConfig::Gradcheck(cfg.clone()))?;
    let mut summary = String::new();
    let mut csv = String::from("family,max_rel_error,rejected,passed\n");
    for (name, err, rejected) in &results {
        let ok = *err < cfg.tolerance;
        writeln!(summary, "{name:<28} {err:.3e}  {}", if ok { "ok" } else { "FAIL" }).unwrap();
        writeln!(csv, "{name},{err:?},{rejected},{ok}").unwrap();
    }
    let worst = results
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty");
    let passed = worst.1 < cfg.tolerance;
    if !passed {
        writeln!(
            summary,
            "gradient check failed: worst offender {} with relative error {:.3e} (tolerance {:e})",
            worst.0, worst.1, cfg.tolerance
        )
        .unwrap();
    }
    out.write("gradcheck.csv", csv.as_bytes())?;
    out.finish("gradcheck")?;
    Ok(CommandOutput {
        summary,
        warnings: Vec::new(),
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Synthetic(SyntheticDatasetConfig),
    /// CSV files with header `label,f0,f1,…`.
    Csv { train: PathBuf, test: PathBuf, classes: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRunConfig {
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub min_lr: f64,
    pub validation_fraction: f64,
    pub dataset: DatasetSpec,
    pub losses: Vec<LossSpec>,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        let t = TrainConfig::new(LossSpec::new(LossFamily::Cce));
        Self {
            seed: t.seed,
            hidden: vec![8],
            lr: t.lr,
            momentum: t.momentum,
            epochs: t.epochs,
            batch_size: t.batch_size,
            plateau_factor: t.plateau_factor,
            plateau_patience: t.plateau_patience,
            min_lr: t.min_lr,
            validation_fraction: t.validation_fraction,
            dataset: DatasetSpec::Synthetic(SyntheticDatasetConfig::default()),
            losses: vec![t.loss],
        }
    }
}

impl TrainRunConfig {
    pub fn template(&self) -> TrainConfig {
        TrainConfig {
            loss: self.losses.first().copied().unwrap_or_else(|| LossSpec::new(LossFamily::Cce)),
            lr: self.lr,
            momentum: self.momentum,
            plateau_factor: self.plateau_factor,
            plateau_patience: self.plateau_patience,
            min_lr: self.min_lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            validation_fraction: self.validation_fraction,
        }
    }
}

fn read_feature_csv(bytes: &[u8], classes: usize, what: &str) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_reader(bytes);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("label") || headers.len() < 2 {
        return Err(Error::Parse(format!("{what}: header must be `label,f0,f1,…`")));
    }
    let dim = headers.len() - 1;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let label = rec[0]
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Parse(format!("{what} line {line}: bad label `{}`", &rec[0])))?;
        labels.push(label);
        for f in rec.iter().skip(1) {
            data.push(
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("{what} line {line}: bad feature `{f}`")))?,
            );
        }
    }
    Dataset::new(Matrix::from_vec(labels.len(), dim, data)?, labels, classes)
}

fn load_dataset(spec: &DatasetSpec, out: &mut Outputs) -> Result<(Dataset, Dataset)> {
    match spec {
        DatasetSpec::Synthetic(c) => generate_dataset(c),
        DatasetSpec::Csv { train, test, classes } => {
            let tr = read_feature_csv(&out.input(train)?, *classes, "train csv")?;
            let te = read_feature_csv(&out.input(test)?, *classes, "test csv")?;
            if tr.features.cols() != te.features.cols() {
                return Err(Error::Shape("train and test csv have different feature counts".into()));
            }
            Ok((tr, te))
        }
    }
}

pub fn predictions_file(loss: &str) -> String {
    format!("{loss}.predictions.csv")
}

pub fn checkpoint_file(loss: &str) -> String {
    format!("{loss}.checkpoint")
}

pub fn run_train(cfg: &TrainRunConfig, out_dir: &Path) -> Result<CommandOutput> {
    if cfg.losses.is_empty() {
        return Err(Error::invalid("losses", "need at least one loss"));
    }
    if cfg.hidden.contains(&0) {
        return Err(Error::invalid("hidden", "layer widths must be ≥ 1"));
    }
    let mut names: Vec<&str> = cfg.losses.iter().map(|l| l.family.name()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("losses", "each loss family may appear once"));
    }
    let template = cfg.template();
    template.validate()?;
    for l in &cfg.losses {
        l.validate()?;
    }

    let mut out = Outputs::create(out_dir, &RunConfig::Train(cfg.clone()))?;
    let (train, test) = load_dataset(&cfg.dataset, &mut out)?;
    let runs = run_multiloss_experiment(&train, &test, &cfg.losses, &template, &cfg.hidden)?;

    let mut ranking = String::from("rank,loss,mcc,accuracy,log_loss\n");
    let mut summary = String::new();
    for (rank, run) in runs.iter().enumerate() {
        let name = run.spec.family.name();
        let mut buf = Vec::new();
        run.predictions.write_csv(&mut buf)?;
        out.write(&predictions_file(name), &buf)?;
        let mut buf = Vec::new();
        run.outcome.model.write_checkpoint(&mut buf)?;
        out.write(&checkpoint_file(name), &buf)?;
        out.write(&format!("{name}.history.csv"), history_csv(&run.outcome.history).as_bytes())?;
        out.json(&format!("{name}.metrics.json"), &run.report.to_flat_json())?;
        let r = &run.report;
        writeln!(ranking, "{},{name},{:?},{:?},{:?}", rank + 1, r.mcc, r.accuracy, r.log_loss).unwrap();
        writeln!(
            summary,
            "{:>2}. {name:<28} mcc {:.4}  acc {:.4}  log loss {:.4}",
            rank + 1,
            r.mcc,
            r.accuracy,
            r.log_loss
        )
        .unwrap();
    }
    out.write("ranking.csv", ranking.as_bytes())?;
    out.finish("train")?;
    Ok(CommandOutput {
        summary,
        warnings: Vec::new(),
        passed: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMethod {
    Vote,
    Simple,
    Weighted,
    Stack,
}

impl std::str::FromStr for EnsembleMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vote" => Ok(Self::Vote),
            "simple" => Ok(Self::Simple),
            "weighted" => Ok(Self::Weighted),
            "stack" => Ok(Self::Stack),
            _ => Err(Error::invalid("method", format!("unknown method `{s}` (vote, simple, weighted, stack)"))),
        }
    }
}

/// Which predictions the weights or meta-learner are fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitSplit {
    /// The evaluated inputs themselves.
    Eval,
    /// Separate `fit_inputs` from the same models, in the same order.
    Separate,
}

impl std::str::FromStr for FitSplit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eval" => Ok(Self::Eval),
            "separate" => Ok(Self::Separate),
            _ => Err(Error::invalid("fit_split", format!("unknown split `{s}` (eval, separate)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub method: EnsembleMethod,
    pub inputs: Vec<PathBuf>,
    pub fit_split: Option<FitSplit>,
    #[serde(default)]
    pub fit_inputs: Vec<PathBuf>,
    pub stacker: Option<StackerConfig>,
}

fn read_predictions(out: &mut Outputs, path: &Path) -> Result<PredictionMatrix> {
    let bytes = out.input(path)?;
    PredictionMatrix::read_csv(bytes.as_slice()).map_err(|e| match e {
        Error::Io(_) => e,
        other => Error::Parse(format!("{}: {other}", path.display())),
    })
}

pub fn run_ensemble(cfg: &EnsembleConfig, out_dir: &Path) -> Result<CommandOutput> {
    if cfg.inputs.is_empty() {
        return Err(Error::invalid("inputs", "need at least one prediction CSV"));
    }
    let needs_fit = matches!(cfg.method, EnsembleMethod::Weighted | EnsembleMethod::Stack);
    let mut warnings = Vec::new();
    if needs_fit {
        match cfg.fit_split {
            None => return Err(Error::invalid("fit_split", "required for weighted and stack ensembles")),
            Some(FitSplit::Eval) => {
                warnings.push("fitting and evaluating on the same predictions inflates the reported scores".into())
            }
            Some(FitSplit::Separate) if cfg.fit_inputs.len() != cfg.inputs.len() => {
                return Err(Error::invalid(
                    "fit_inputs",
                    format!("{} fit files for {} inputs", cfg.fit_inputs.len(), cfg.inputs.len()),
                ))
            }
            Some(FitSplit::Separate) => {}
        }
    }

    let mut out = Outputs::create(out_dir, &RunConfig::Ensemble(cfg.clone()))?;
    let models = cfg
        .inputs
        .iter()
        .map(|p| read_predictions(&mut out, p))
        .collect::<Result<Vec<_>>>()?;
    let fit_models = if cfg.fit_split == Some(FitSplit::Separate) && needs_fit {
        cfg.fit_inputs
            .iter()
            .map(|p| read_predictions(&mut out, p))
            .collect::<Result<Vec<_>>>()?
    } else {
        models.clone()
    };

    let mut summary = String::new();
    let fused = match cfg.method {
        EnsembleMethod::Vote => majority_vote(&models)?,
        EnsembleMethod::Simple => simple_average(&models)?,
        EnsembleMethod::Weighted => {
            let fit = fit_weights(&fit_models)?;
            out.json(
                "weights.json",
                &json!({ "weights": fit.weights.as_slice(), "log_loss": fit.log_loss, "iterations": fit.iterations }),
            )?;
            writeln!(summary, "weights {} (fit log loss {:.6})", fit.weights.to_json(), fit.log_loss).unwrap();
            weighted_combine(&models, &fit.weights)?
        }
        EnsembleMethod::Stack => {
            let sc = cfg.stacker.clone().unwrap_or_else(|| StackerConfig::new(models.len()));
            let stacker = fit_stacker(&fit_models, &sc)?;
            let mut buf = Vec::new();
            stacker.network.write_checkpoint(&mut buf)?;
            out.write("stacker.checkpoint", &buf)?;
            apply_stacker(&stacker, &models)?
        }
    };
    let mut buf = Vec::new();
    fused.write_csv(&mut buf)?;
    out.write("fused.csv", &buf)?;
    if fused.labels().is_some() {
        let report = metric_report(&fused)?;
        out.json("metrics.json", &report.to_flat_json())?;
        writeln!(
            summary,
            "fused: acc {:.4}  mcc {:.4}  log loss {:.4}",
            report.accuracy, report.mcc, report.log_loss
        )
        .unwrap();
    }
    out.finish("ensemble")?;
    Ok(CommandOutput {
        summary,
        warnings,
        passed: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    pub input: PathBuf,
    #[serde(default)]
    pub curves: bool,
}

pub fn run_metrics(cfg: &MetricsConfig, out_dir: &Path) -> Result<CommandOutput> {
    let mut out = Outputs::create(out_dir, &RunConfig::Metrics(cfg.clone()))?;
    let preds = read_predictions(&mut out, &cfg.input)?;
    let report = metric_report(&preds)?;
    let doc = report.to_flat_json();
    out.json("metrics.json", &doc)?;
    if cfg.curves {
        for c in 0..preds.k() {
            if let Ok(roc) = roc_curve(&preds, c) {
                out.write(&format!("curves/roc_class_{c}.csv"), roc.to_csv("fpr", "tpr").as_bytes())?;
            }
            if let Ok(pr) = pr_curve(&preds, c) {
                out.write(&format!("curves/pr_class_{c}.csv"), pr.to_csv("recall", "precision").as_bytes())?;
            }
        }
    }
    out.finish("metrics")?;
    Ok(CommandOutput {
        summary: serde_json::to_string_pretty(&doc).expect("json"),
        warnings: Vec::new(),
        passed: true,
    })
}

/// Both 95%-style intervals for a metric value measured on `n` samples.
pub fn interval_utility(metric: f64, n: u64, level: f64) -> Result<serde_json::Value> {
    let (wlo, whi) = wald_ci(metric, n, level)?;
    let successes = (metric * n as f64).round() as u64;
    let (clo, chi) = clopper_pearson_ci(successes, n, level)?;
    Ok(json!({
        "metric": metric,
        "n": n,
        "level": level,
        "wald": [wlo, whi],
        "clopper_pearson": [clo, chi],
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskOp {
    And,
    Metrics,
    Crop,
    Stretch,
    Segloss,
}

impl std::str::FromStr for MaskOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "and" => Ok(Self::And),
            "metrics" => Ok(Self::Metrics),
            "crop" => Ok(Self::Crop),
            "stretch" => Ok(Self::Stretch),
            "segloss" => Ok(Self::Segloss),
            _ => Err(Error::invalid("op", format!("unknown op `{s}` (and, metrics, crop, stretch, segloss)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskopsConfig {
    pub op: MaskOp,
    pub inputs: Vec<PathBuf>,
    /// Binarizes soft prediction masks before `and` / `metrics`.
    pub threshold: Option<f64>,
    pub segloss: Option<SegLossSpec>,
}

fn read_image(out: &mut Outputs, path: &Path) -> Result<Image> {
    let bytes = out.input(path)?;
    read_pgm(&bytes).map_err(|e| match e {
        Error::Pgm { offset, reason } => Error::Pgm {
            offset,
            reason: format!("{}: {reason}", path.display()),
        },
        other => other,
    })
}

fn pgm_bytes(img: &Image) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_pgm(img, &mut buf)?;
    Ok(buf)
}

pub fn run_maskops(cfg: &MaskopsConfig, out_dir: &Path) -> Result<CommandOutput> {
    let arity = match cfg.op {
        MaskOp::And => None,
        MaskOp::Metrics | MaskOp::Crop | MaskOp::Segloss => Some(2),
        MaskOp::Stretch => Some(1),
    };
    match arity {
        Some(a) if cfg.inputs.len() != a => {
            return Err(Error::invalid("inputs", format!("this op takes exactly {a} PGM files")))
        }
        None if cfg.inputs.is_empty() => return Err(Error::invalid("inputs", "need at least one mask")),
        _ => {}
    }
    let mut out = Outputs::create(out_dir, &RunConfig::Maskops(cfg.clone()))?;
    let images = cfg
        .inputs
        .iter()
        .map(|p| read_image(&mut out, p))
        .collect::<Result<Vec<_>>>()?;
    let mask = |img: &Image| -> Result<BinaryMask> {
        let m = BinaryMask::from_image(img.clone())?;
        match cfg.threshold {
            Some(t) => binarize(&m, t),
            None => Ok(m),
        }
    };
    let summary = match cfg.op {
        MaskOp::And => {
            let masks = images.iter().map(mask).collect::<Result<Vec<_>>>()?;
            let fused = and_fuse(&masks)?;
            out.write("fused.pgm", &pgm_bytes(fused.image())?)?;
            format!("fused {} masks, {} foreground pixels", masks.len(), fused.count_ones())
        }
        MaskOp::Metrics => {
            let m = mask_metrics(&mask(&images[0])?, &BinaryMask::from_image(images[1].clone())?)?;
            let doc = json!({ "iou": m.iou, "dice": m.dice, "accuracy": m.accuracy });
            out.json("metrics.json", &doc)?;
            serde_json::to_string_pretty(&doc).expect("json")
        }
        MaskOp::Crop => {
            let (crop, bbox) = bounding_box_crop(&images[0], &BinaryMask::from_image(images[1].clone())?)?;
            out.write("cropped.pgm", &pgm_bytes(&crop)?)?;
            let doc = serde_json::to_value(bbox).expect("json");
            out.json("bbox.json", &doc)?;
            serde_json::to_string_pretty(&doc).expect("json")
        }
        MaskOp::Stretch => {
            out.write("stretched.pgm", &pgm_bytes(&contrast_stretch(&images[0]))?)?;
            "stretched.pgm written".into()
        }
        MaskOp::Segloss => {
            let spec = cfg.segloss.unwrap_or_else(|| SegLossSpec::new(SegLossFamily::Bce));
            let pred = BinaryMask::from_image(images[0].clone())?;
            let truth = BinaryMask::from_image(images[1].clone())?;
            let value = seg_loss(&spec, &pred, &truth)?;
            let doc = json!({ "family": spec.family.name(), "value": value });
            out.json("segloss.json", &doc)?;
            serde_json::to_string_pretty(&doc).expect("json")
        }
    };
    out.finish("maskops")?;
    Ok(CommandOutput {
        summary,
        warnings: Vec::new(),
        passed: true,
    })
}
