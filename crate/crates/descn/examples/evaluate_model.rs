//! Score a trained model with the full metric set.
//!
//! Trains on the confounded split and evaluates on the randomized split:
//! root precision-in-estimation error and average-effect error against the
//! generator's ground truth, treated-group error and the normalized area
//! under the uplift curve from observed outcomes alone.
//!
//! ```text
//! cargo run --example evaluate_model
//! ```

use descn::experiment::evaluate_model;
use descn::{
    default_config, fit_standardizer, generate, train, IteMode, ModelKind, Scenario, TrainConfig,
};

fn main() -> descn::Result<()> {
    let mut dgp = default_config(Scenario::ImbalancedBiased);
    dgp.n_train = 8_000;
    dgp.n_test = 4_000;
    dgp.seed = 21;
    let (train_raw, test_raw) = generate(&dgp)?;
    let standardizer = fit_standardizer(&train_raw)?;
    let train_z = standardizer.apply(&train_raw)?;
    let test_z = standardizer.apply(&test_raw)?;

    for kind in [ModelKind::Tarnet, ModelKind::Descn] {
        let cfg = TrainConfig {
            epochs: 8,
            shared_hidden: 32,
            head_hidden: 16,
            seed: 2,
            ..TrainConfig::for_kind(kind)
        };
        let (params, _) = train(kind, &train_z, &cfg)?;
        let m = evaluate_model(&params, &test_z, IteMode::HeadDiff)?;
        println!(
            "{:<10}  sqrt_pehe {:.4}  ate_error {:.4}  att_error {:.4}  auuc {:+.4}",
            kind.name(),
            m.sqrt_pehe.unwrap(),
            m.ate_error.unwrap(),
            m.att_error.unwrap(),
            m.auuc.unwrap(),
        );
    }
    println!("\n(error metrics: lower is better; auuc: higher is better)");
    Ok(())
}
