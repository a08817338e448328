//! Repeated-run experiment harness.
//!
//! An experiment trains a list of model kinds over `R` seeded repetitions on
//! a shared data source, evaluates each run on the held-out split, and
//! aggregates mean, standard error, and relative improvement against a named
//! baseline. Repetition `r` uses seed `base_seed + r` for both data
//! generation (preset sources) and training, so all models within a
//! repetition see identical data and the whole run is reproducible.
//!
//! Cells `(model, repetition)` are independent and may run in parallel;
//! nothing inside a cell is threaded, so results do not depend on scheduling.

use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;

use crate::data::{fit_standardizer, read_table, Dataset, TableSchema};
use crate::dgp::{default_config, generate, Scenario};
use crate::error::{Error, Result};
use crate::metrics::{
    aggregate, ate_error, att_error, auuc, pehe, AggregateReport, MetricAgg, RunMetrics,
    METRIC_NAMES,
};
use crate::model::{
    forward_heads, predict_from_bundle, train, IteMode, ModelKind, ModelParams, TrainConfig,
};

/// Where the train/test splits come from.
#[derive(Clone, Debug)]
pub enum DataSource {
    /// Generate from a preset per repetition (fresh seeded draw each time).
    Preset {
        scenario: Scenario,
        n_train: Option<usize>,
        n_test: Option<usize>,
    },
    /// Fixed table files; repetitions vary only the training seed.
    Files {
        train: PathBuf,
        test: PathBuf,
        schema: Option<PathBuf>,
    },
}

/// One model entry in an experiment.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub name: String,
    pub kind: ModelKind,
    pub cfg: TrainConfig,
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub models: Vec<ModelSpec>,
    pub repetitions: usize,
    pub base_seed: u64,
    pub baseline: String,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::config("repetitions must be >= 1"));
        }
        if self.models.is_empty() {
            return Err(Error::config("experiment lists no models"));
        }
        let mut names = std::collections::HashSet::new();
        for m in &self.models {
            if !names.insert(m.name.as_str()) {
                return Err(Error::config(format!("duplicate model entry `{}`", m.name)));
            }
            m.cfg.validate(m.kind)?;
        }
        if !self.models.iter().any(|m| m.name == self.baseline) {
            return Err(Error::config(format!(
                "baseline `{}` is not among the models",
                self.baseline
            )));
        }
        Ok(())
    }

    /// Parses the line-oriented `key = value` experiment format.
    ///
    /// Recognized keys: `repetitions`, `base_seed`, `baseline`, `models`
    /// (comma-separated kinds), `data.preset` or `data.train`/`data.test`
    /// (+ optional `data.schema`), `data.n_train`/`data.n_test` for presets,
    /// global `train.<param>` defaults and per-model `model.<kind>.<param>`
    /// overrides. Parameters: `epochs`, `batch_size`, `lr`, `decay`, `l2`,
    /// `shared_hidden`, `head_hidden`, `depth`, `seed`-independent loss
    /// weights `alpha`, `beta1`, `beta0`, `gamma1`, `gamma0`, and `ite_mode`.
    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let map = parse_kv_file(path)?;
        let get = |key: &str| {
            map.iter()
                .find(|(k, _, _)| k == key)
                .map(|(_, v, _)| v.clone())
        };
        let parse_usize = |key: &str, v: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| Error::config(format!("{key}: expected an integer, got `{v}`")))
        };

        let repetitions = match get("repetitions") {
            Some(v) => parse_usize("repetitions", &v)?,
            None => 1,
        };
        let base_seed = match get("base_seed") {
            Some(v) => v
                .parse()
                .map_err(|_| Error::config(format!("base_seed: expected an integer, got `{v}`")))?,
            None => 0,
        };

        let model_list = get("models").ok_or_else(|| Error::config("missing `models` list"))?;
        let kinds: Vec<ModelKind> = model_list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(ModelKind::parse)
            .collect::<Result<_>>()?;
        if kinds.is_empty() {
            return Err(Error::config("`models` lists no model kinds"));
        }
        let baseline = get("baseline").unwrap_or_else(|| kinds[0].name().to_string());

        let source =
            match (get("data.preset"), get("data.train"), get("data.test")) {
                (Some(p), None, None) => DataSource::Preset {
                    scenario: Scenario::parse(&p)?,
                    n_train: get("data.n_train")
                        .map(|v| parse_usize("data.n_train", &v))
                        .transpose()?,
                    n_test: get("data.n_test")
                        .map(|v| parse_usize("data.n_test", &v))
                        .transpose()?,
                },
                (None, Some(train), Some(test)) => DataSource::Files {
                    train: PathBuf::from(train),
                    test: PathBuf::from(test),
                    schema: get("data.schema").map(PathBuf::from),
                },
                _ => return Err(Error::config(
                    "data source must be either `data.preset` or both `data.train` and `data.test`",
                )),
            };

        let mut models = Vec::new();
        for kind in kinds {
            let mut cfg = TrainConfig::for_kind(kind);
            apply_overrides(&mut cfg, kind, &map)?;
            models.push(ModelSpec {
                name: kind.name().to_string(),
                kind,
                cfg,
            });
        }

        let cfg = ExperimentConfig {
            source,
            models,
            repetitions,
            base_seed,
            baseline,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn apply_param(cfg: &mut TrainConfig, param: &str, value: &str, key: &str) -> Result<()> {
    let parse_usize = |v: &str| -> Result<usize> {
        v.parse()
            .map_err(|_| Error::config(format!("{key}: expected an integer, got `{v}`")))
    };
    let parse_f64 = |v: &str| -> Result<f64> {
        v.parse()
            .map_err(|_| Error::config(format!("{key}: expected a number, got `{v}`")))
    };
    match param {
        "epochs" => cfg.epochs = parse_usize(value)?,
        "batch_size" => cfg.batch_size = parse_usize(value)?,
        "shared_hidden" => cfg.shared_hidden = parse_usize(value)?,
        "head_hidden" => cfg.head_hidden = parse_usize(value)?,
        "depth" => cfg.depth = parse_usize(value)?,
        "lr" => cfg.lr = parse_f64(value)?,
        "decay" => cfg.decay = parse_f64(value)?,
        "l2" => cfg.l2 = parse_f64(value)?,
        "alpha" => cfg.loss_weights.alpha = parse_f64(value)?,
        "beta1" => cfg.loss_weights.beta1 = parse_f64(value)?,
        "beta0" => cfg.loss_weights.beta0 = parse_f64(value)?,
        "gamma1" => cfg.loss_weights.gamma1 = parse_f64(value)?,
        "gamma0" => cfg.loss_weights.gamma0 = parse_f64(value)?,
        "ite_mode" => cfg.ite_mode = IteMode::parse(value)?,
        other => return Err(Error::config(format!("unknown train parameter `{other}`"))),
    }
    Ok(())
}

fn apply_overrides(
    cfg: &mut TrainConfig,
    kind: ModelKind,
    entries: &[(String, String, usize)],
) -> Result<()> {
    for (key, value, _) in entries {
        if let Some(param) = key.strip_prefix("train.") {
            apply_param(cfg, param, value, key)?;
        }
    }
    let prefix = format!("model.{}.", kind.name());
    for (key, value, _) in entries {
        if let Some(param) = key.strip_prefix(&prefix) {
            apply_param(cfg, param, value, key)?;
        }
    }
    Ok(())
}

fn parse_kv_file(path: &std::path::Path) -> Result<Vec<(String, String, usize)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(path, ln + 1, "expected `key = value`"))?;
        entries.push((key.trim().to_string(), value.trim().to_string(), ln + 1));
    }
    Ok(entries)
}

/// Baseline config for `kind`, with `train.*` and `model.<kind>.*` overrides
/// from an optional config file.
pub fn load_train_config(kind: ModelKind, path: Option<&std::path::Path>) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::for_kind(kind);
    if let Some(path) = path {
        apply_overrides(&mut cfg, kind, &parse_kv_file(path)?)?;
    }
    Ok(cfg)
}

/// Metrics (or the failure message) of one `(model, repetition)` cell.
#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub model: String,
    pub repetition: usize,
    pub seed: u64,
    pub outcome: std::result::Result<RunMetrics, String>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub cells: Vec<CellOutcome>,
    pub report: AggregateReport,
}

/// Scores a trained model on a standardized test split.
///
/// The ranking metric uses the model's own score mode. Average-error metrics
/// need calibrated effects, so a ranking-only `pte` score falls back to the
/// head difference for those.
pub fn evaluate_model(params: &ModelParams, test: &Dataset, mode: IteMode) -> Result<RunMetrics> {
    let bundle = forward_heads(params, &test.x)?;
    let scores = predict_from_bundle(&bundle, mode)?;
    let effects = if mode == IteMode::Pte {
        predict_from_bundle(&bundle, IteMode::HeadDiff)?
    } else {
        scores.clone()
    };
    let (sqrt_pehe, ate) = match &test.truth {
        Some(t) => (
            Some(pehe(&effects, &t.tau)?),
            Some(ate_error(&effects, &t.tau)?),
        ),
        None => (None, None),
    };
    Ok(RunMetrics {
        sqrt_pehe,
        ate_error: ate,
        att_error: Some(att_error(&effects, &test.y, &test.w)?),
        auuc: Some(auuc(&scores, &test.y, &test.w)?),
    })
}

/// Standardizes with train statistics, trains, and evaluates one cell.
pub fn run_cell(
    spec: &ModelSpec,
    train_raw: &Dataset,
    test_raw: &Dataset,
    seed: u64,
) -> Result<RunMetrics> {
    let standardizer = fit_standardizer(train_raw)?;
    let train_z = standardizer.apply(train_raw)?;
    let test_z = standardizer.apply(test_raw)?;
    let cfg = TrainConfig {
        seed,
        ..spec.cfg.clone()
    };
    let (params, _history) = train(spec.kind, &train_z, &cfg)?;
    evaluate_model(&params, &test_z, cfg.ite_mode)
}

fn preset_data(
    scenario: Scenario,
    n_train: Option<usize>,
    n_test: Option<usize>,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let mut dgp = default_config(scenario);
    if let Some(n) = n_train {
        dgp.n_train = n;
    }
    if let Some(n) = n_test {
        dgp.n_test = n;
    }
    dgp.seed = seed;
    generate(&dgp)
}

/// Runs every `(model, repetition)` cell and aggregates the survivors.
/// Cell failures are recorded per cell; the report covers whatever succeeded.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;

    let fixed_data: Option<Arc<(Dataset, Dataset)>> = match &cfg.source {
        DataSource::Files {
            train,
            test,
            schema,
        } => {
            let schema = resolve_schema(train, schema.as_deref())?;
            Some(Arc::new((
                read_table(train, &schema)?,
                read_table(test, &schema)?,
            )))
        }
        DataSource::Preset { .. } => None,
    };

    let cells: Vec<(usize, usize)> = (0..cfg.repetitions)
        .flat_map(|rep| (0..cfg.models.len()).map(move |m| (rep, m)))
        .collect();

    let outcomes: Vec<CellOutcome> = cells
        .par_iter()
        .map(|&(rep, mi)| {
            let spec = &cfg.models[mi];
            let seed = cfg.base_seed + rep as u64;
            let result = match (&cfg.source, &fixed_data) {
                (
                    DataSource::Preset {
                        scenario,
                        n_train,
                        n_test,
                    },
                    _,
                ) => preset_data(*scenario, *n_train, *n_test, seed)
                    .and_then(|(tr, te)| run_cell(spec, &tr, &te, seed)),
                (DataSource::Files { .. }, Some(data)) => run_cell(spec, &data.0, &data.1, seed),
                (DataSource::Files { .. }, None) => unreachable!("files loaded above"),
            };
            CellOutcome {
                model: spec.name.clone(),
                repetition: rep,
                seed,
                outcome: result.map_err(|e| e.to_string()),
            }
        })
        .collect();

    let runs_by_model: Vec<(String, Vec<RunMetrics>)> = cfg
        .models
        .iter()
        .map(|spec| {
            let runs = outcomes
                .iter()
                .filter(|c| c.model == spec.name)
                .filter_map(|c| c.outcome.as_ref().ok().copied())
                .collect();
            (spec.name.clone(), runs)
        })
        .collect();
    let report = aggregate(&runs_by_model, &cfg.baseline)?;
    Ok(ExperimentOutput {
        cells: outcomes,
        report,
    })
}

/// Loads an explicit schema file or infers one from the table header.
pub fn resolve_schema(
    table: &std::path::Path,
    schema: Option<&std::path::Path>,
) -> Result<TableSchema> {
    match schema {
        Some(p) => TableSchema::from_file(p),
        None => TableSchema::from_header(&crate::data::read_header(table)?),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(crate::data::format_f64).unwrap_or_default()
}

/// Machine-readable aggregate table: `model,metric,mean,se,impr_pct` rows.
pub fn report_csv(report: &AggregateReport) -> String {
    let mut out = String::from("model,metric,mean,se,impr_pct\n");
    for model in &report.models {
        for (mi, name) in METRIC_NAMES.iter().enumerate() {
            if let Some(agg) = model.metrics[mi] {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    model.model,
                    name,
                    crate::data::format_f64(agg.mean),
                    fmt_opt(agg.se),
                    fmt_opt(agg.impr_pct),
                ));
            }
        }
    }
    out
}

/// Per-cell breakdown: `model,repetition,seed,metric,value` rows, with a
/// final `error` column for failed cells.
pub fn cells_csv(cells: &[CellOutcome]) -> String {
    let mut out = String::from("model,repetition,seed,metric,value,error\n");
    for cell in cells {
        match &cell.outcome {
            Ok(metrics) => {
                for (name, value) in METRIC_NAMES.iter().zip(metrics.values()) {
                    if let Some(v) = value {
                        out.push_str(&format!(
                            "{},{},{},{},{},\n",
                            cell.model,
                            cell.repetition,
                            cell.seed,
                            name,
                            crate::data::format_f64(v)
                        ));
                    }
                }
            }
            Err(msg) => {
                out.push_str(&format!(
                    "{},{},{},,,{}\n",
                    cell.model,
                    cell.repetition,
                    cell.seed,
                    msg.replace(',', ";")
                ));
            }
        }
    }
    out
}

fn fmt_cell(agg: Option<MetricAgg>) -> String {
    match agg {
        None => "-".to_string(),
        Some(a) => {
            let mut s = format!("{:.4}", a.mean);
            if let Some(se) = a.se {
                s.push_str(&format!(" ± {se:.4}"));
            }
            if let Some(impr) = a.impr_pct {
                s.push_str(&format!(" ({impr:+.1}%)"));
            }
            s
        }
    }
}

/// Human-readable grid: one row per model, one column per metric, cells as
/// `mean ± se (impr%)` against the baseline.
pub fn report_text(report: &AggregateReport) -> String {
    let headers: Vec<String> = std::iter::once("model".to_string())
        .chain(METRIC_NAMES.iter().map(|s| s.to_string()))
        .collect();
    let mut rows: Vec<Vec<String>> = vec![headers];
    for model in &report.models {
        let mut row = vec![model.model.clone()];
        row.extend(model.metrics.iter().map(|m| fmt_cell(*m)));
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = format!("improvement vs baseline `{}`\n", report.baseline);
    for (ri, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if ri == 0 {
            let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}
