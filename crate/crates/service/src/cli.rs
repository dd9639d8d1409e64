//! Command-line driver. Every subcommand reads the optional `--config` file
//! and lets flags override it.

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use prognosis::bundle::{canonical_json, dataset_fingerprint, ModelBundle, StageSummary};
use prognosis::dataset::{Cohort, LabelKind};
use prognosis::evaluation::{calibration_svg, decision_svg, profile, roc_svg, write_report_csv, ReportRow};
use prognosis::feature_select::{topk_sweep, ImportanceMethod};
use prognosis::history::HistoryStore;
use prognosis::learners::{ForestParams, LearnerSpec};
use prognosis::nomogram::NomogramModel;
use prognosis::pipeline::{clinical_cv_report, clinical_variables, crossval_run, rank_clinical, train_outcome, train_stage, write_fold_csv, CrossValidation, Modality, TrainedStage};
use prognosis::predict::{MissingPolicy, PredictRequest};
use prognosis::synth::{generate, write_synth};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::server::{serve, AppState};
use crate::{load_cohort, predict_bytes};

#[derive(Debug, Parser)]
#[command(name = "prognosis", version, about = "Two-stage prognostic engine: risk stacking and death nomogram")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-class summary statistics with chi-square and rank-sum tests.
    Profile(ProfileArgs),
    /// Write a synthetic cohort with ground truth.
    Synth(SynthArgs),
    /// Cross-validate and train the stage-1 risk classifier.
    TrainRisk(TrainRiskArgs),
    /// Train the stage-2 classifier and nomogram, and assemble the bundle.
    TrainOutcome(TrainOutcomeArgs),
    /// Rank clinical variables and sweep the top-k feature count.
    Sweep(SweepArgs),
    /// Cross-validated comparison table and curves for every modality.
    Evaluate(EvaluateArgs),
    /// Export a nomogram as JSON or SVG.
    Nomogram(NomogramArgs),
    /// Predict one request against a bundle.
    Predict(PredictArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LabelArg {
    Risk,
    Outcome,
}

impl From<LabelArg> for LabelKind {
    fn from(l: LabelArg) -> Self {
        match l {
            LabelArg::Risk => LabelKind::Risk,
            LabelArg::Outcome => LabelKind::Outcome,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModalityArg {
    Clinical,
    Image,
    Fused,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Clinical CSV (id, gender, age, biomarkers..., risk, outcome).
    #[arg(long)]
    pub clinical: Option<PathBuf>,
    /// Image-feature CSV keyed by id.
    #[arg(long)]
    pub images: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainingArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long, value_enum)]
    pub modality: Option<ModalityArg>,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "risk")]
    pub label: LabelArg,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory for clinical.csv, image_features.csv and ground_truth.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub feature_length: Option<usize>,
    #[arg(long)]
    pub missing_rate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainRiskArgs {
    #[command(flatten)]
    pub training: TrainingArgs,
    /// Stage artifact (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional comparison table for the cross-validation run.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainOutcomeArgs {
    #[command(flatten)]
    pub training: TrainingArgs,
    /// Stage artifact written by `train-risk`.
    #[arg(long)]
    pub risk_stage: PathBuf,
    /// Model bundle (JSON).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Recorded verbatim in the bundle metadata.
    #[arg(long)]
    pub created_at: Option<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "risk")]
    pub label: LabelArg,
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Sweep table CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub ranking_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "risk")]
    pub label: LabelArg,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Restrict to some modalities; all three by default.
    #[arg(long, value_enum)]
    pub modality: Vec<ModalityArg>,
    /// Directory for evaluation.csv, folds.csv and the SVG curves.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Svg,
}

#[derive(Debug, Args)]
pub struct NomogramArgs {
    /// Bundle to read; the built-in reference nomogram when omitted.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: FormatArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Bundle to read; falls back to `serve.bundle` in the config.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    /// Use the built-in fixture bundle instead of a file.
    #[arg(long, conflicts_with = "bundle")]
    pub fixture: bool,
    /// Request JSON.
    #[arg(long)]
    pub input: PathBuf,
    /// Reject requests with missing clinical values.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    #[arg(long, conflicts_with = "bundle")]
    pub fixture: bool,
    #[arg(long)]
    pub host: Option<String>,
    /// Overrides both the config and the PORT environment variable.
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long)]
    pub strict: bool,
}

/// Output of `train-risk`, consumed by `train-outcome`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskArtifact {
    pub modality: Modality,
    pub seed: u64,
    pub dataset_fingerprint: String,
    pub summary: StageSummary,
    pub stage: TrainedStage,
}

type CliResult<T = ()> = Result<T, String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> CliResult {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
            }
            std::fs::write(p, bytes).map_err(|e| format!("{}: {e}", p.display()))
        }
        None => std::io::stdout().write_all(bytes).map_err(err),
    }
}

fn apply_training(cfg: &mut Config, t: &TrainingArgs) {
    if let Some(s) = t.seed {
        cfg.seed = s;
    }
    if let Some(f) = t.folds {
        cfg.folds = f;
    }
    if let Some(m) = t.modality {
        cfg.modality = format!("{m:?}").to_lowercase();
    }
    apply_data(cfg, &t.data);
}

fn apply_data(cfg: &mut Config, d: &DataArgs) {
    if let Some(c) = &d.clinical {
        cfg.data.clinical = Some(c.clone());
    }
    if let Some(i) = &d.images {
        cfg.data.images = Some(i.clone());
    }
}

fn cohort(cfg: &Config) -> CliResult<Cohort> {
    let clinical = cfg
        .data
        .clinical
        .as_deref()
        .ok_or("no clinical CSV given (use --clinical or [data] clinical)")?;
    load_cohort(clinical, cfg.data.images.as_deref()).map_err(err)
}

fn cohort_for(cfg: &Config, modality: Modality) -> CliResult<Cohort> {
    if modality.uses_image() && cfg.data.images.is_none() {
        return Err(format!("modality {} needs an image-feature CSV (use --images)", modality.as_str()));
    }
    cohort(cfg)
}

fn report_csv(runs: &[&CrossValidation]) -> CliResult<Vec<u8>> {
    let rows: Vec<ReportRow> = runs.iter().flat_map(|r| r.report_rows()).collect();
    let mut out = Vec::new();
    write_report_csv(&rows, &mut out).map_err(err)?;
    Ok(out)
}

fn load_bundle(path: Option<&Path>, fixture: bool, cfg: &Config) -> CliResult<ModelBundle> {
    if fixture {
        return ModelBundle::fixture(0.9).map_err(err);
    }
    let path = path
        .or(cfg.serve.bundle.as_deref())
        .ok_or("no bundle given (use --bundle, --fixture or [serve] bundle)")?;
    ModelBundle::load(path).map_err(err)
}

fn policy(strict: bool, cfg: &Config) -> CliResult<MissingPolicy> {
    if strict {
        return Ok(MissingPolicy::Strict);
    }
    MissingPolicy::parse(&cfg.serve.policy).ok_or_else(|| format!("unknown policy `{}`", cfg.serve.policy))
}

/// Parses arguments and runs the chosen subcommand.
pub fn run(cli: Cli) -> CliResult {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Profile(a) => {
            apply_data(&mut cfg, &a.data);
            let c = cohort(&cfg)?;
            let p = profile(&c, a.label.into()).map_err(err)?;
            let mut out = Vec::new();
            p.write_csv(&mut out).map_err(err)?;
            write_output(a.out.as_deref(), &out)
        }
        Command::Synth(a) => {
            if let Some(n) = a.n {
                cfg.synth.n = n;
            }
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            if let Some(f) = a.feature_length {
                cfg.synth.feature_length = f;
            }
            if let Some(m) = a.missing_rate {
                cfg.synth.missing_rate = m;
            }
            let (c, truth) = generate(&cfg.synth_spec()).map_err(err)?;
            write_synth(&a.out, &c, &truth).map_err(err)?;
            let [low, high] = c.class_counts(LabelKind::Risk);
            let [surv, death] = c.class_counts(LabelKind::Outcome);
            eprintln!(
                "wrote {} patients ({low} low, {high} high; {surv} survived, {death} died) to {}",
                c.len(),
                a.out.display()
            );
            Ok(())
        }
        Command::TrainRisk(a) => {
            apply_training(&mut cfg, &a.training);
            let bc = cfg.bundle_config()?;
            let c = cohort_for(&cfg, bc.modality)?;
            let (stage, cv) = train_stage(&c, &bc.pipeline, bc.modality, LabelKind::Risk).map_err(err)?;
            let artifact = RiskArtifact {
                modality: bc.modality,
                seed: cfg.seed,
                dataset_fingerprint: dataset_fingerprint(&c).map_err(err)?,
                summary: StageSummary::from_cv(&cv),
                stage,
            };
            write_output(Some(&a.out), &canonical_json(&artifact).map_err(err)?)?;
            if let Some(r) = &a.report {
                write_output(Some(r), &report_csv(&[&cv])?)?;
            }
            eprintln!(
                "{}: weighted F1 {:.4}, AUC {:.4}",
                artifact.summary.stacking,
                artifact.summary.f1,
                artifact.summary.auc.unwrap_or(f64::NAN)
            );
            Ok(())
        }
        Command::TrainOutcome(a) => {
            apply_training(&mut cfg, &a.training);
            let mut bc = cfg.bundle_config()?;
            bc.created_at = a.created_at.clone();
            let c = cohort_for(&cfg, bc.modality)?;
            let bytes = std::fs::read(&a.risk_stage).map_err(|e| format!("{}: {e}", a.risk_stage.display()))?;
            let risk: RiskArtifact = serde_json::from_slice(&bytes).map_err(|e| format!("{}: {e}", a.risk_stage.display()))?;
            if risk.modality != bc.modality || risk.seed != cfg.seed {
                return Err(format!(
                    "risk stage was trained with modality {} and seed {}, not {} and {}",
                    risk.modality.as_str(),
                    risk.seed,
                    bc.modality.as_str(),
                    cfg.seed
                ));
            }
            if risk.dataset_fingerprint != dataset_fingerprint(&c).map_err(err)? {
                return Err("risk stage was trained on a different dataset".into());
            }
            let (outcome, nomogram, cv) = train_outcome(&c, &bc.pipeline, bc.modality, &bc.nomogram).map_err(err)?;
            let summary = StageSummary::from_cv(&cv);
            let bundle = ModelBundle::assemble(&c, &bc, risk.stage, outcome, nomogram, vec![risk.summary, summary.clone()]).map_err(err)?;
            bundle.save(&a.out).map_err(err)?;
            if let Some(r) = &a.report {
                write_output(Some(r), &report_csv(&[&cv])?)?;
            }
            eprintln!(
                "{}: weighted F1 {:.4}; bundle {}",
                summary.stacking,
                summary.f1,
                bundle.fingerprint().map_err(err)?
            );
            Ok(())
        }
        Command::Sweep(a) => {
            apply_data(&mut cfg, &a.data);
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            if let Some(f) = a.folds {
                cfg.folds = f;
            }
            let k_max = a.k_max.unwrap_or(cfg.sweep.k_max);
            let method = match cfg.sweep.importance.as_str() {
                "gini" => ImportanceMethod::Gini,
                "permutation" => ImportanceMethod::Permutation,
                other => return Err(format!("unknown importance `{other}`")),
            };
            let c = cohort(&cfg)?;
            let label: LabelKind = a.label.into();
            let c = if label == LabelKind::Outcome { c.high_risk() } else { c };
            let vars = clinical_variables(&c);
            let ranking = rank_clinical(&c, label, &vars, ForestParams::default(), method, cfg.seed).map_err(err)?;
            let spec = LearnerSpec::gradient_boosting(cfg.seed);
            let k_hi = k_max.min(vars.len());
            let sweep = topk_sweep(&ranking, 1..=k_hi, &spec.name, |features| {
                clinical_cv_report(&c, label, features, &spec, cfg.folds, cfg.seed)
            })
            .map_err(err)?;
            if let Some(r) = &a.ranking_out {
                let mut out = Vec::new();
                ranking.write_csv(&mut out).map_err(err)?;
                write_output(Some(r), &out)?;
            }
            let mut out = Vec::new();
            sweep.write_csv(&mut out).map_err(err)?;
            write_output(a.out.as_deref(), &out)?;
            eprintln!("best k = {}: {}", sweep.best_k, ranking.top(sweep.best_k).join(", "));
            Ok(())
        }
        Command::Evaluate(a) => {
            apply_data(&mut cfg, &a.data);
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            if let Some(f) = a.folds {
                cfg.folds = f;
            }
            let modalities: Vec<Modality> = if a.modality.is_empty() {
                Modality::ALL.to_vec()
            } else {
                a.modality
                    .iter()
                    .map(|m| Modality::parse(&format!("{m:?}")).expect("modality name"))
                    .collect()
            };
            let label: LabelKind = a.label.into();
            let mut c = cohort(&cfg)?;
            if label == LabelKind::Outcome {
                c = c.high_risk();
            }
            if modalities.iter().any(|m| m.uses_image()) && cfg.data.images.is_none() {
                return Err("image modalities need an image-feature CSV (use --images)".into());
            }
            let pipeline = cfg.pipeline_config();
            let runs = modalities
                .iter()
                .map(|&m| crossval_run(&c, &pipeline, m, label))
                .collect::<prognosis::Result<Vec<_>>>()
                .map_err(err)?;
            let dir = &a.out_dir;
            std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
            let refs: Vec<&CrossValidation> = runs.iter().collect();
            write_output(Some(&dir.join("evaluation.csv")), &report_csv(&refs)?)?;
            let mut folds = Vec::new();
            write_fold_csv(&runs, &mut folds).map_err(err)?;
            write_output(Some(&dir.join("folds.csv")), &folds)?;
            for run in &runs {
                let m = run.modality.as_str();
                let mut named: Vec<(String, &prognosis::evaluation::RocCurve)> =
                    run.candidates.iter().map(|c| (c.name.clone(), &c.evaluation.roc)).collect();
                named.push((run.stacking_name(), &run.stacking.evaluation.roc));
                let curves: Vec<(&str, _)> = named.iter().map(|(n, c)| (n.as_str(), *c)).collect();
                write_output(Some(&dir.join(format!("roc_{m}.svg"))), roc_svg(&format!("ROC, {m}"), &curves).as_bytes())?;
            }
            let names: Vec<String> = runs.iter().map(|r| format!("{} stacking", r.modality.as_str())).collect();
            let cal: Vec<_> = names.iter().zip(&runs).map(|(n, r)| (n.as_str(), &r.stacking.evaluation.calibration)).collect();
            write_output(Some(&dir.join("calibration.svg")), calibration_svg("Calibration", &cal).as_bytes())?;
            let dec: Vec<_> = names.iter().zip(&runs).map(|(n, r)| (n.as_str(), &r.stacking.evaluation.decision)).collect();
            write_output(Some(&dir.join("decision.svg")), decision_svg("Decision curve", &dec).as_bytes())?;
            for run in &runs {
                eprintln!(
                    "{:<9} {}: weighted F1 {:.4}",
                    run.modality.as_str(),
                    run.stacking_name(),
                    run.stacking.evaluation.report.f1.value
                );
            }
            Ok(())
        }
        Command::Nomogram(a) => {
            let model = match &a.bundle {
                Some(p) => ModelBundle::load(p)
                    .map_err(err)?
                    .nomogram
                    .ok_or("bundle has no nomogram")?,
                None => NomogramModel::reference(),
            };
            let bytes = match a.format {
                FormatArg::Json => canonical_json(&model.to_export()).map_err(err)?,
                FormatArg::Svg => model.to_svg().into_bytes(),
            };
            write_output(a.out.as_deref(), &bytes)
        }
        Command::Predict(a) => {
            let bundle = load_bundle(a.bundle.as_deref(), a.fixture, &cfg)?;
            let text = std::fs::read(&a.input).map_err(|e| format!("{}: {e}", a.input.display()))?;
            let request: PredictRequest = serde_json::from_slice(&text).map_err(|e| format!("{}: {e}", a.input.display()))?;
            let (bytes, _) = predict_bytes(&bundle, &request, policy(a.strict, &cfg)?).map_err(err)?;
            let mut out = bytes;
            out.push(b'\n');
            write_output(None, &out)
        }
        Command::Serve(a) => {
            let bundle = load_bundle(a.bundle.as_deref(), a.fixture, &cfg)?;
            let history = HistoryStore::open(a.history.as_deref().unwrap_or(&cfg.serve.history)).map_err(err)?;
            let state = AppState::new(bundle, history, policy(a.strict, &cfg)?).map_err(err)?;
            let host = a.host.clone().unwrap_or_else(|| cfg.serve.host.clone());
            let port = match a.port {
                Some(p) => p,
                None => cfg.port()?,
            };
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| format!("bad address {host}:{port}: {e}"))?;
            let rt = tokio::runtime::Runtime::new().map_err(err)?;
            rt.block_on(serve(Arc::new(state), addr)).map_err(err)
        }
    }
}
