//! The three effect-score readouts of a trained model.
//!
//! - `head_diff`: difference of the response-head probabilities;
//! - `esn_ratio`: entire-space responses divided by the propensity — this
//!   divides out the same propensity the products put in, so it agrees with
//!   `head_diff` wherever the clamp is inactive;
//! - `pte`: the pseudo-effect head mapped to `(-1, 1)`, a ranking-only score.
//!
//! ```text
//! cargo run --example predict_modes
//! ```

use descn::{
    default_config, fit_standardizer, generate, predict_ite, train, IteMode, ModelKind, Scenario,
    TrainConfig,
};

fn main() -> descn::Result<()> {
    let mut dgp = default_config(Scenario::Balanced);
    dgp.n_train = 5_000;
    dgp.n_test = 2_000;
    dgp.seed = 4;
    let (train_raw, test_raw) = generate(&dgp)?;
    let standardizer = fit_standardizer(&train_raw)?;
    let train_z = standardizer.apply(&train_raw)?;
    let test_z = standardizer.apply(&test_raw)?;

    let cfg = TrainConfig {
        epochs: 5,
        shared_hidden: 32,
        head_hidden: 16,
        seed: 9,
        ..TrainConfig::for_kind(ModelKind::Descn)
    };
    let (params, _) = train(ModelKind::Descn, &train_z, &cfg)?;

    let head_diff = predict_ite(&params, &test_z.x, IteMode::HeadDiff)?;
    let esn_ratio = predict_ite(&params, &test_z.x, IteMode::EsnRatio)?;
    let pte = predict_ite(&params, &test_z.x, IteMode::Pte)?;

    println!("sample   head_diff   esn_ratio         pte   true tau");
    let truth = test_z.truth.as_ref().unwrap();
    for i in 0..8 {
        println!(
            "{i:>6}   {:>+9.5}   {:>+9.5}   {:>+9.5}   {:>+8.4}",
            head_diff[i], esn_ratio[i], pte[i], truth.tau[i]
        );
    }

    let max_gap = head_diff
        .iter()
        .zip(&esn_ratio)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    println!(
        "\nmax |head_diff - esn_ratio| over {} samples: {max_gap:.2e}",
        head_diff.len()
    );

    // Rank correlation between the ranking-only pte score and head_diff.
    let agree = head_diff
        .iter()
        .zip(&pte)
        .filter(|(h, p)| (h.signum() - p.signum()).abs() < f64::EPSILON)
        .count();
    println!(
        "sign agreement between pte and head_diff: {:.1}%",
        100.0 * agree as f64 / pte.len() as f64
    );
    Ok(())
}
