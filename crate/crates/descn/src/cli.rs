//! Command implementations behind the binary's subcommands.
//!
//! Each command is an ordinary library function over parsed arguments so it
//! can be driven from tests as easily as from the binary. Outputs are the
//! text formats documented in [`crate::data`], [`crate::artifact`], and
//! [`crate::experiment`]; given the same arguments every command rewrites its
//! files byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use crate::artifact::ModelArtifact;
use crate::data::{fit_standardizer, format_f64, read_table, write_table, TableSchema};
use crate::dgp::{default_config, generate, DgpConfig, Scenario};
use crate::error::{Error, Result};
use crate::experiment::{
    cells_csv, evaluate_model, load_train_config, report_csv, report_text, resolve_schema,
    run_experiment, ExperimentConfig, ExperimentOutput,
};
use crate::metrics::{RunMetrics, METRIC_NAMES};
use crate::model::{train, IteMode, ModelKind, TrainHistory};

pub struct GenerateArgs {
    pub preset: String,
    pub seed: u64,
    pub out: PathBuf,
    pub n_train: Option<usize>,
    pub n_test: Option<usize>,
}

pub struct TrainArgs {
    pub train: PathBuf,
    pub model: String,
    pub seed: u64,
    pub out: PathBuf,
    pub schema: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub ite_mode: Option<String>,
}

pub struct EvaluateArgs {
    pub params: PathBuf,
    pub test: PathBuf,
    pub out: PathBuf,
    pub schema: Option<PathBuf>,
    pub ite_mode: Option<String>,
}

pub struct ExperimentArgs {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn manifest_text(scenario: Scenario, cfg: &DgpConfig) -> String {
    let floats = |v: &[f64]| {
        v.iter()
            .map(|&x| format_f64(x))
            .collect::<Vec<_>>()
            .join(",")
    };
    let mut out = String::new();
    out.push_str(&format!("scenario = {}\n", scenario.name()));
    out.push_str(&format!("seed = {}\n", cfg.seed));
    out.push_str(&format!("d = {}\n", cfg.d));
    out.push_str(&format!("n_train = {}\n", cfg.n_train));
    out.push_str(&format!("n_test = {}\n", cfg.n_test));
    out.push_str(&format!(
        "propensity_clip_lo = {}\n",
        format_f64(cfg.propensity_clip.0)
    ));
    out.push_str(&format!(
        "propensity_clip_hi = {}\n",
        format_f64(cfg.propensity_clip.1)
    ));
    out.push_str(&format!(
        "propensity_intercept = {}\n",
        format_f64(cfg.propensity_intercept)
    ));
    out.push_str(&format!(
        "propensity_coefs = {}\n",
        floats(&cfg.propensity_coefs)
    ));
    out.push_str(&format!(
        "base_intercept = {}\n",
        format_f64(cfg.base_intercept)
    ));
    out.push_str(&format!("base_coefs = {}\n", floats(&cfg.base_coefs)));
    out.push_str(&format!(
        "effect_intercept = {}\n",
        format_f64(cfg.effect_intercept)
    ));
    out.push_str(&format!(
        "effect_scale = {}\n",
        format_f64(cfg.effect_scale)
    ));
    out.push_str(&format!(
        "effect_offset = {}\n",
        format_f64(cfg.effect_offset)
    ));
    out.push_str(&format!("effect_coefs = {}\n", floats(&cfg.effect_coefs)));
    out
}

/// Writes `train.csv`, `test.csv` (both with truth columns), and
/// `manifest.txt` recording the full generator config.
pub fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let scenario = Scenario::parse(&args.preset)?;
    let mut cfg = default_config(scenario);
    cfg.seed = args.seed;
    if let Some(n) = args.n_train {
        cfg.n_train = n;
    }
    if let Some(n) = args.n_test {
        cfg.n_test = n;
    }
    let (train_ds, test_ds) = generate(&cfg)?;
    ensure_dir(&args.out)?;
    let schema = TableSchema::synthetic(cfg.d);
    write_table(&train_ds, &schema, &args.out.join("train.csv"))?;
    write_table(&test_ds, &schema, &args.out.join("test.csv"))?;
    write_file(
        &args.out.join("manifest.txt"),
        &manifest_text(scenario, &cfg),
    )?;
    Ok(())
}

fn history_csv(history: &TrainHistory) -> String {
    let mut out = String::from(
        "epoch,lr,total,l_pi,l_estr,l_escr,l_tr,l_cr,l_cross_tr,l_cross_cr,\
         empty_treated_batches,empty_control_batches\n",
    );
    for e in &history.epochs {
        let comps = e
            .components
            .values()
            .into_iter()
            .map(format_f64)
            .collect::<Vec<_>>()
            .join(",");
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.epoch,
            format_f64(e.lr),
            format_f64(e.total),
            comps,
            e.empty_treated_batches,
            e.empty_control_batches
        ));
    }
    out
}

/// Trains one model on a table file; writes `model.txt` and `history.csv`.
pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let kind = ModelKind::parse(&args.model)?;
    let mut cfg = load_train_config(kind, args.config.as_deref())?;
    cfg.seed = args.seed;
    if let Some(mode) = &args.ite_mode {
        cfg.ite_mode = IteMode::parse(mode)?;
    }
    let schema = resolve_schema(&args.train, args.schema.as_deref())?;
    let raw = read_table(&args.train, &schema)?;
    let standardizer = fit_standardizer(&raw)?;
    let standardized = standardizer.apply(&raw)?;
    let (params, history) = train(kind, &standardized, &cfg)?;
    ensure_dir(&args.out)?;
    let artifact = ModelArtifact {
        kind,
        ite_mode: cfg.ite_mode,
        standardizer,
        params,
    };
    artifact.save(&args.out.join("model.txt"))?;
    write_file(&args.out.join("history.csv"), &history_csv(&history))?;
    Ok(())
}

/// `name,value` rows for every metric that was computable.
pub fn metrics_csv(metrics: &RunMetrics) -> String {
    let mut out = String::new();
    for (name, value) in METRIC_NAMES.iter().zip(metrics.values()) {
        if let Some(v) = value {
            out.push_str(&format!("{name},{}\n", format_f64(v)));
        }
    }
    out
}

/// Scores a saved model on a test table; writes `metrics.csv` under `out`.
///
/// Truth-based metrics appear only when the schema maps truth columns.
pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<RunMetrics> {
    let artifact = ModelArtifact::load(&args.params)?;
    let mode = match &args.ite_mode {
        Some(m) => IteMode::parse(m)?,
        None => artifact.ite_mode,
    };
    let schema = resolve_schema(&args.test, args.schema.as_deref())?;
    let raw = read_table(&args.test, &schema)?;
    let standardized = artifact.standardizer.apply(&raw)?;
    let metrics = evaluate_model(&artifact.params, &standardized, mode)?;
    ensure_dir(&args.out)?;
    write_file(&args.out.join("metrics.csv"), &metrics_csv(&metrics))?;
    Ok(metrics)
}

/// Runs a full experiment; prints the aggregate grid and, when `--out` is
/// given, writes `aggregate.csv`, `cells.csv`, and `report.txt`.
pub fn cmd_experiment(args: &ExperimentArgs) -> Result<ExperimentOutput> {
    let cfg = ExperimentConfig::from_file(&args.config)?;
    let output = run_experiment(&cfg)?;
    let text = report_text(&output.report);
    print!("{text}");
    if let Some(out) = &args.out {
        ensure_dir(out)?;
        write_file(&out.join("aggregate.csv"), &report_csv(&output.report))?;
        write_file(&out.join("cells.csv"), &cells_csv(&output.cells))?;
        write_file(&out.join("report.txt"), &text)?;
    }
    Ok(output)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(path: &Path) -> Vec<u8> {
        fs::read(path).unwrap()
    }

    #[test]
    fn generate_writes_three_files_and_reruns_identically() {
        let dir = tempfile::tempdir().unwrap();
        let args = GenerateArgs {
            preset: "imbalanced_biased".into(),
            seed: 1,
            out: dir.path().join("a"),
            n_train: Some(500),
            n_test: Some(300),
        };
        cmd_generate(&args).unwrap();
        for f in ["train.csv", "test.csv", "manifest.txt"] {
            assert!(args.out.join(f).exists(), "{f} missing");
        }
        let again = GenerateArgs {
            out: dir.path().join("b"),
            ..args
        };
        cmd_generate(&again).unwrap();
        for f in ["train.csv", "test.csv", "manifest.txt"] {
            assert_eq!(
                read(&dir.path().join("a").join(f)),
                read(&dir.path().join("b").join(f)),
                "{f} differs between identical runs"
            );
        }
    }

    #[test]
    fn generate_rejects_unknown_preset() {
        let dir = tempfile::tempdir().unwrap();
        let args = GenerateArgs {
            preset: "nope".into(),
            seed: 0,
            out: dir.path().to_path_buf(),
            n_train: None,
            n_test: None,
        };
        assert!(cmd_generate(&args).is_err());
    }

    fn train_args(dir: &Path, data: &Path, extra: Option<PathBuf>) -> TrainArgs {
        TrainArgs {
            train: data.to_path_buf(),
            model: "descn".into(),
            seed: 3,
            out: dir.to_path_buf(),
            schema: None,
            config: extra,
            ite_mode: None,
        }
    }

    #[test]
    fn train_and_evaluate_pipeline() {
        let dir = tempfile::tempdir().unwrap();
        let data_dir = dir.path().join("data");
        cmd_generate(&GenerateArgs {
            preset: "imbalanced_biased".into(),
            seed: 7,
            out: data_dir.clone(),
            n_train: Some(800),
            n_test: Some(500),
        })
        .unwrap();

        let cfg_path = dir.path().join("train.conf");
        fs::write(
            &cfg_path,
            "train.epochs = 1\ntrain.shared_hidden = 8\ntrain.head_hidden = 4\ntrain.depth = 2\n",
        )
        .unwrap();

        let run_a = dir.path().join("run_a");
        cmd_train(&train_args(
            &run_a,
            &data_dir.join("train.csv"),
            Some(cfg_path.clone()),
        ))
        .unwrap();
        assert!(run_a.join("model.txt").exists());
        let history = fs::read_to_string(run_a.join("history.csv")).unwrap();
        assert_eq!(history.lines().count(), 2, "header plus one epoch");

        // Re-run is byte-identical.
        let run_b = dir.path().join("run_b");
        cmd_train(&train_args(
            &run_b,
            &data_dir.join("train.csv"),
            Some(cfg_path),
        ))
        .unwrap();
        assert_eq!(
            read(&run_a.join("model.txt")),
            read(&run_b.join("model.txt"))
        );
        assert_eq!(
            read(&run_a.join("history.csv")),
            read(&run_b.join("history.csv"))
        );

        let eval_out = dir.path().join("eval");
        let metrics = cmd_evaluate(&EvaluateArgs {
            params: run_a.join("model.txt"),
            test: data_dir.join("test.csv"),
            out: eval_out.clone(),
            schema: None,
            ite_mode: None,
        })
        .unwrap();
        // Truth columns are present, so all four metrics are.
        assert!(metrics.sqrt_pehe.is_some());
        assert!(metrics.ate_error.is_some());
        assert!(metrics.att_error.is_some());
        assert!(metrics.auuc.is_some());
        let csv = fs::read_to_string(eval_out.join("metrics.csv")).unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("sqrt_pehe,"));
    }

    #[test]
    fn zero_epoch_training_writes_empty_history() {
        let dir = tempfile::tempdir().unwrap();
        let data_dir = dir.path().join("data");
        cmd_generate(&GenerateArgs {
            preset: "balanced".into(),
            seed: 2,
            out: data_dir.clone(),
            n_train: Some(200),
            n_test: Some(100),
        })
        .unwrap();
        let cfg_path = dir.path().join("t.conf");
        fs::write(
            &cfg_path,
            "train.epochs = 0\ntrain.shared_hidden = 4\ntrain.head_hidden = 3\ntrain.depth = 2\n",
        )
        .unwrap();
        let out = dir.path().join("run");
        cmd_train(&train_args(
            &out,
            &data_dir.join("train.csv"),
            Some(cfg_path),
        ))
        .unwrap();
        let history = fs::read_to_string(out.join("history.csv")).unwrap();
        assert_eq!(history.lines().count(), 1, "header only");
        assert!(out.join("model.txt").exists());
    }
}
