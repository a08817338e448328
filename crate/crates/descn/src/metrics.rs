//! Evaluation metrics for effect estimates: root precision-in-estimation
//! error and average-effect error against ground truth, treated-group error
//! and the normalized area under the uplift curve on observed outcomes, plus
//! cross-run aggregation with relative improvement against a baseline.

use crate::error::{Error, Result};

/// Metrics of a single evaluated run; a field is present exactly when its
/// inputs were available.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunMetrics {
    pub sqrt_pehe: Option<f64>,
    pub ate_error: Option<f64>,
    pub att_error: Option<f64>,
    pub auuc: Option<f64>,
}

pub const METRIC_NAMES: [&str; 4] = ["sqrt_pehe", "ate_error", "att_error", "auuc"];

impl RunMetrics {
    pub fn values(&self) -> [Option<f64>; 4] {
        [self.sqrt_pehe, self.ate_error, self.att_error, self.auuc]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "sqrt_pehe" => self.sqrt_pehe,
            "ate_error" => self.ate_error,
            "att_error" => self.att_error,
            "auuc" => self.auuc,
            _ => None,
        }
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::shape(format!("length mismatch: {a} vs {b}")));
    }
    if a == 0 {
        return Err(Error::argument("metrics need at least one sample"));
    }
    Ok(())
}

/// Root mean squared error between estimated and true per-sample effects.
pub fn pehe(tau_hat: &[f64], tau: &[f64]) -> Result<f64> {
    check_lengths(tau_hat.len(), tau.len())?;
    let mse = tau_hat
        .iter()
        .zip(tau)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / tau_hat.len() as f64;
    Ok(mse.sqrt())
}

/// Absolute difference of the mean estimated and mean true effect.
pub fn ate_error(tau_hat: &[f64], tau: &[f64]) -> Result<f64> {
    check_lengths(tau_hat.len(), tau.len())?;
    let n = tau_hat.len() as f64;
    Ok((tau_hat.iter().sum::<f64>() / n - tau.iter().sum::<f64>() / n).abs())
}

fn group_outcome_means(y: &[u8], w: &[u8]) -> Result<(f64, f64)> {
    let (mut ts, mut tn, mut cs, mut cn) = (0.0f64, 0usize, 0.0f64, 0usize);
    for (&yi, &wi) in y.iter().zip(w) {
        if wi == 1 {
            ts += f64::from(yi);
            tn += 1;
        } else {
            cs += f64::from(yi);
            cn += 1;
        }
    }
    if tn == 0 || cn == 0 {
        return Err(Error::argument("both treatment groups must be non-empty"));
    }
    Ok((ts / tn as f64, cs / cn as f64))
}

/// Absolute error of the mean estimated effect over the treated group against
/// the observed treated-minus-control outcome gap.
pub fn att_error(tau_hat: &[f64], y: &[u8], w: &[u8]) -> Result<f64> {
    check_lengths(tau_hat.len(), y.len())?;
    check_lengths(tau_hat.len(), w.len())?;
    let (t_mean, c_mean) = group_outcome_means(y, w)?;
    let att = t_mean - c_mean;
    let (mut sum, mut n_t) = (0.0, 0usize);
    for (&s, &wi) in tau_hat.iter().zip(w) {
        if wi == 1 {
            sum += s;
            n_t += 1;
        }
    }
    Ok((sum / n_t as f64 - att).abs())
}

/// Descending-score order with original index as the tie break.
fn ranking(score: &[f64]) -> Result<Vec<usize>> {
    if score.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("scores must be finite".into()));
    }
    let mut idx: Vec<usize> = (0..score.len()).collect();
    idx.sort_by(|&a, &b| {
        score[b]
            .partial_cmp(&score[a])
            .expect("finite scores compare")
            .then(a.cmp(&b))
    });
    Ok(idx)
}

fn uplift_at_k(k: usize, n: usize, t_sum: f64, t_cnt: usize, c_sum: f64, c_cnt: usize) -> f64 {
    let t_mean = if t_cnt == 0 {
        0.0
    } else {
        t_sum / t_cnt as f64
    };
    let c_mean = if c_cnt == 0 {
        0.0
    } else {
        c_sum / c_cnt as f64
    };
    (t_mean - c_mean) * (k as f64 / n as f64)
}

fn auuc_baseline(y: &[u8], w: &[u8]) -> Result<f64> {
    let n = y.len();
    let (t_mean, c_mean) = group_outcome_means(y, w)?;
    Ok((t_mean - c_mean) * (n as f64 + 1.0) / (2.0 * n as f64))
}

/// Normalized area under the uplift curve.
///
/// Samples are ranked by descending score (ties broken by original index).
/// For each prefix `k` the uplift is the treated-minus-control outcome-mean
/// gap inside the prefix (a missing group counts as zero) scaled by `k / n`;
/// the area is the mean over all prefixes, and the expected area of a random
/// ranking, `att * (n + 1) / (2n)`, is subtracted.
pub fn auuc(score: &[f64], y: &[u8], w: &[u8]) -> Result<f64> {
    check_lengths(score.len(), y.len())?;
    check_lengths(score.len(), w.len())?;
    let n = score.len();
    let order = ranking(score)?;
    let (mut t_sum, mut t_cnt, mut c_sum, mut c_cnt) = (0.0f64, 0usize, 0.0f64, 0usize);
    let mut area = 0.0;
    for (k, &i) in order.iter().enumerate() {
        if w[i] == 1 {
            t_sum += f64::from(y[i]);
            t_cnt += 1;
        } else {
            c_sum += f64::from(y[i]);
            c_cnt += 1;
        }
        area += uplift_at_k(k + 1, n, t_sum, t_cnt, c_sum, c_cnt);
    }
    area /= n as f64;
    Ok(area - auuc_baseline(y, w)?)
}

/// Same quantity as [`auuc`], recomputed per prefix by a full rescan with no
/// carried state. Quadratic; verification only.
pub fn auuc_oracle(score: &[f64], y: &[u8], w: &[u8]) -> Result<f64> {
    check_lengths(score.len(), y.len())?;
    check_lengths(score.len(), w.len())?;
    let n = score.len();
    let order = ranking(score)?;
    let mut area = 0.0;
    for k in 1..=n {
        let (mut t_sum, mut t_cnt, mut c_sum, mut c_cnt) = (0.0f64, 0usize, 0.0f64, 0usize);
        for &i in &order[..k] {
            if w[i] == 1 {
                t_sum += f64::from(y[i]);
                t_cnt += 1;
            } else {
                c_sum += f64::from(y[i]);
                c_cnt += 1;
            }
        }
        area += uplift_at_k(k, n, t_sum, t_cnt, c_sum, c_cnt);
    }
    area /= n as f64;
    Ok(area - auuc_baseline(y, w)?)
}

/// Mean, standard error, and relative improvement of one metric for one model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricAgg {
    pub mean: f64,
    /// Sample standard deviation over sqrt(R); absent for a single run.
    pub se: Option<f64>,
    /// `(mean - baseline_mean) / baseline_mean * 100`; absent when the
    /// baseline mean is zero or the baseline lacks the metric.
    pub impr_pct: Option<f64>,
    pub runs: usize,
}

/// Aggregated metrics per model, in input order.
#[derive(Clone, Debug)]
pub struct AggregateReport {
    pub baseline: String,
    pub models: Vec<ModelAggregate>,
}

#[derive(Clone, Debug)]
pub struct ModelAggregate {
    pub model: String,
    /// Indexed like [`METRIC_NAMES`].
    pub metrics: [Option<MetricAgg>; 4],
}

fn mean_and_se(values: &[f64]) -> (f64, Option<f64>) {
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1.0);
    (mean, Some(var.sqrt() / r.sqrt()))
}

/// Aggregates per-run metrics and computes improvement against `baseline`.
pub fn aggregate(
    runs_by_model: &[(String, Vec<RunMetrics>)],
    baseline: &str,
) -> Result<AggregateReport> {
    if runs_by_model.is_empty() {
        return Err(Error::argument("nothing to aggregate"));
    }
    if !runs_by_model.iter().any(|(m, _)| m == baseline) {
        return Err(Error::argument(format!(
            "baseline `{baseline}` is not among the models"
        )));
    }

    let collect = |runs: &[RunMetrics], metric: &str| -> Vec<f64> {
        runs.iter().filter_map(|r| r.get(metric)).collect()
    };
    let baseline_runs = &runs_by_model.iter().find(|(m, _)| m == baseline).unwrap().1;
    let baseline_means: Vec<Option<f64>> = METRIC_NAMES
        .iter()
        .map(|name| {
            let vals = collect(baseline_runs, name);
            (!vals.is_empty()).then(|| mean_and_se(&vals).0)
        })
        .collect();

    let mut models = Vec::new();
    for (model, runs) in runs_by_model {
        let mut metrics = [None; 4];
        for (mi, name) in METRIC_NAMES.iter().enumerate() {
            let vals = collect(runs, name);
            if vals.is_empty() {
                continue;
            }
            let (mean, se) = mean_and_se(&vals);
            let impr_pct = baseline_means[mi]
                .filter(|b| *b != 0.0)
                .map(|b| (mean - b) / b * 100.0);
            metrics[mi] = Some(MetricAgg {
                mean,
                se,
                impr_pct,
                runs: vals.len(),
            });
        }
        models.push(ModelAggregate {
            model: model.clone(),
            metrics,
        });
    }
    Ok(AggregateReport {
        baseline: baseline.to_string(),
        models,
    })
}
