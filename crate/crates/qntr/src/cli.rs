//! Run orchestration behind the command-line surface: JSON config, dataset
//! loading, training execution, metrics CSV and manifest output, the fuzz
//! harness entry point, and the gradient checker.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::hessian::QnKind;
use crate::idx::{self, IdxError};
use crate::objective::{fd_check, MlpModel, Objective, QuadraticObjective};
use crate::oracle;
use crate::train::{self, MetricsRecord, RunOutcome, TrainConfig, TrainReport};

/// Environment variable overriding the output directory.
pub const OUT_DIR_ENV: &str = "QNTR_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATASET: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("dataset error: {0}")]
    Dataset(#[from] IdxError),
    #[error("dataset file missing: {0}")]
    DatasetMissing(PathBuf),
    #[error("training failed: {0}")]
    Train(#[from] train::TrainError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigInvalid(_) => EXIT_CONFIG,
            CliError::Dataset(_) | CliError::DatasetMissing(_) => EXIT_DATASET,
            CliError::Train(_) | CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Io(_) => EXIT_CONFIG,
        }
    }
}

/// Which objective a run trains, with its data sources.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    /// Random symmetric positive definite quadratic.
    Quadratic {
        dim: usize,
        #[serde(default = "default_cond")]
        cond: f64,
        #[serde(default = "default_samples")]
        samples: usize,
    },
    /// Multilayer perceptron over IDX image/label files.
    MlpIdx {
        train_images: PathBuf,
        train_labels: PathBuf,
        #[serde(default)]
        test_images: Option<PathBuf>,
        #[serde(default)]
        test_labels: Option<PathBuf>,
        #[serde(default)]
        limit: Option<usize>,
        #[serde(default = "default_hidden")]
        hidden: Vec<usize>,
    },
}

fn default_cond() -> f64 {
    100.0
}
fn default_samples() -> usize {
    1
}
fn default_hidden() -> Vec<usize> {
    vec![32]
}

/// Full run configuration: the trainer settings plus the objective and the
/// output location. Unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(flatten)]
    pub train: TrainConfig,
    pub objective: ObjectiveSpec,
    #[serde(default)]
    pub run_name: Option<String>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Self-description written next to every metrics CSV.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub config: &'a RunConfig,
    pub seed: u64,
    pub dataset_checksum: Option<String>,
    pub started_unix_s: u64,
    pub metrics_path: String,
    pub outcome: String,
}

pub struct RunSummary {
    pub report: TrainReport,
    pub run_dir: PathBuf,
    pub metrics_path: PathBuf,
}

fn sha256_files(paths: &[&Path]) -> Result<String, CliError> {
    let mut hasher = Sha256::new();
    for p in paths {
        if !p.exists() {
            return Err(CliError::DatasetMissing(p.to_path_buf()));
        }
        hasher.update(fs::read(p)?);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

fn build_objectives(
    cfg: &RunConfig,
) -> Result<(Box<dyn Objective>, Option<Box<dyn Objective>>, Option<String>), CliError> {
    match &cfg.objective {
        ObjectiveSpec::Quadratic { dim, cond, samples } => {
            let obj = QuadraticObjective::random_spd(*dim, *cond, cfg.train.seed, *samples);
            Ok((Box::new(obj), None, None))
        }
        ObjectiveSpec::MlpIdx { train_images, train_labels, test_images, test_labels, limit, hidden } => {
            let checksum = sha256_files(&[train_images.as_path(), train_labels.as_path()])?;
            let ds = idx::read_idx(train_images, train_labels, *limit)?;
            let mut layers = vec![ds.rows * ds.cols];
            layers.extend_from_slice(hidden);
            layers.push(ds.classes);
            let train_obj = MlpModel::new(layers.clone(), ds.images, ds.labels);
            let test_obj = match (test_images, test_labels) {
                (Some(ti), Some(tl)) => {
                    let tds = idx::read_idx(ti, tl, None)?;
                    Some(Box::new(MlpModel::new(layers, tds.images, tds.labels)) as Box<dyn Objective>)
                }
                _ => None,
            };
            Ok((Box::new(train_obj), test_obj, Some(checksum)))
        }
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::ConfigInvalid(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::ConfigInvalid(e.to_string()))
}

fn resolve_run_dir(cfg: &RunConfig) -> PathBuf {
    let base = std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs"));
    let name = cfg.run_name.clone().unwrap_or_else(|| {
        let method = serde_json::to_value(cfg.train.method).unwrap();
        format!("{}-seed{}", method.as_str().unwrap(), cfg.train.seed)
    });
    base.join(name)
}

/// Fixed CSV column order.
pub const CSV_HEADER: &str =
    "iteration,epoch,wall_time_s,train_loss,train_acc,test_loss,test_acc,delta,rho,gamma,accepted,pairs_stored";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub fn csv_line(r: &MetricsRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        r.iteration,
        r.epoch,
        r.wall_time_s,
        r.train_loss,
        fmt_opt(r.train_acc),
        fmt_opt(r.test_loss),
        fmt_opt(r.test_acc),
        fmt_opt(r.delta),
        fmt_opt(r.rho),
        fmt_opt(r.gamma),
        r.accepted,
        r.pairs_stored,
    )
}

pub fn write_metrics_csv(path: &Path, records: &[MetricsRecord]) -> Result<(), CliError> {
    let mut out = String::with_capacity(records.len() * 64 + CSV_HEADER.len());
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&csv_line(r));
        out.push('\n');
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Executes the configured training run and writes the metrics CSV plus the
/// manifest into the run directory.
pub fn run(config_path: &Path) -> Result<RunSummary, CliError> {
    let cfg = load_config(config_path)?;
    let (obj, test_obj, checksum) = build_objectives(&cfg)?;
    let report = train::train(&cfg.train, obj.as_ref(), test_obj.as_deref())?;
    let run_dir = resolve_run_dir(&cfg);
    fs::create_dir_all(&run_dir)?;
    let metrics_path = run_dir.join("metrics.csv");
    write_metrics_csv(&metrics_path, &report.records)?;
    let manifest = RunManifest {
        config: &cfg,
        seed: cfg.train.seed,
        dataset_checksum: checksum,
        started_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        metrics_path: metrics_path.display().to_string(),
        outcome: format!("{:?}", report.outcome),
    };
    fs::write(run_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).unwrap())?;
    if report.outcome == RunOutcome::NonFiniteLoss {
        return Err(CliError::Numerical("loss or gradient became non-finite".into()));
    }
    Ok(RunSummary { report, run_dir, metrics_path })
}

/// Fuzz harness entry: random subproblem instances against the dense
/// oracle. Returns the process exit code.
pub fn fuzz(kind_name: &str, count: usize, seed: u64) -> i32 {
    let kind = match kind_name {
        "bfgs" => QnKind::Bfgs,
        "sr1" => QnKind::Sr1,
        other => {
            eprintln!("unknown kind {other:?}, expected bfgs or sr1");
            return EXIT_CONFIG;
        }
    };
    let report = oracle::run_fuzz(kind, count, seed);
    println!(
        "{kind_name}: {}/{} passed ({} hard cases, {} q mismatches, {} certificate failures)",
        report.passed, report.total, report.hard_cases_seen, report.q_mismatches, report.certificate_failures
    );
    if report.all_pass() {
        EXIT_OK
    } else {
        EXIT_NUMERICAL
    }
}

/// Gradient check for the configured objective at its seeded starting
/// point. Quadratics must agree to 1e-9, network objectives to 1e-5.
pub fn check_grad(config_path: &Path) -> Result<i32, CliError> {
    let cfg = load_config(config_path)?;
    let (obj, _, _) = build_objectives(&cfg)?;
    let bound = match cfg.objective {
        ObjectiveSpec::Quadratic { .. } => 1e-9,
        ObjectiveSpec::MlpIdx { .. } => 1e-5,
    };
    let w = obj.init_params(cfg.train.seed);
    let err = fd_check(obj.as_ref(), &w, 1e-5, cfg.train.seed);
    println!("max relative gradient error {err:.3e} (bound {bound:.0e})");
    Ok(if err < bound { EXIT_OK } else { EXIT_NUMERICAL })
}

/// Prints basic facts about an IDX dataset pair.
pub fn idx_info(image_path: &Path, label_path: &Path) -> Result<i32, CliError> {
    if !image_path.exists() {
        return Err(CliError::DatasetMissing(image_path.to_path_buf()));
    }
    if !label_path.exists() {
        return Err(CliError::DatasetMissing(label_path.to_path_buf()));
    }
    let ds = idx::read_idx(image_path, label_path, None)?;
    println!("samples: {}", ds.count);
    println!("image size: {}x{}", ds.rows, ds.cols);
    println!("classes: {}", ds.classes);
    let mut hist = vec![0usize; ds.classes];
    for &l in &ds.labels {
        hist[l as usize] += 1;
    }
    println!("label histogram: {hist:?}");
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_rejects_unknown_keys() {
        let text = r#"{"method":"adam","overlap":2,"objective":{"kind":"quadratic","dim":4},"bogus":1}"#;
        let err = serde_json::from_str::<RunConfig>(text).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn config_defaults_follow_footnotes() {
        let text = r#"{"method":"slbfgs-tr","overlap":50,"objective":{"kind":"quadratic","dim":4}}"#;
        let cfg: RunConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.train.epoch_max, 10);
        assert_eq!(cfg.train.grad_tol, 1e-5);
        assert_eq!(cfg.train.delta0, 1.0);
        assert_eq!(cfg.train.gamma0, 1.0);
        assert_eq!(cfg.train.tau1, 1e-4);
        assert_eq!(cfg.train.memory, 20);
        assert_eq!(cfg.train.curvature_tau(), 1e-2);
        assert_eq!(cfg.train.adam_beta1, 0.9);
        assert_eq!(cfg.train.adam_beta2, 0.999);
        assert_eq!(cfg.train.adam_eps, 1e-8);
        let text = r#"{"method":"slsr1-tr","overlap":50,"objective":{"kind":"quadratic","dim":4}}"#;
        let cfg: RunConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.train.curvature_tau(), 1e-8);
    }

    #[test]
    fn csv_line_layout() {
        let r = MetricsRecord {
            iteration: 3,
            epoch: 1,
            wall_time_s: 0.5,
            train_loss: 2.25,
            train_acc: Some(50.0),
            test_loss: None,
            test_acc: None,
            delta: Some(1.0),
            rho: Some(0.9),
            gamma: Some(1.5),
            accepted: true,
            pairs_stored: 2,
            grad_norm: 0.1,
        };
        assert_eq!(csv_line(&r), "3,1,0.5,2.25,50,,,1,0.9,1.5,true,2");
        assert_eq!(CSV_HEADER.split(',').count(), 12);
    }
}
