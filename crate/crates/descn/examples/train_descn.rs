//! Train a DESCN model end to end and watch the loss components.
//!
//! Generates a confounded training set, standardizes features with training
//! statistics, trains for a few epochs, and prints every loss component per
//! epoch: the propensity loss, the entire-space response losses, and the
//! cross counterfactual losses.
//!
//! ```text
//! cargo run --example train_descn
//! ```

use descn::{default_config, fit_standardizer, generate, train, ModelKind, Scenario, TrainConfig};

fn main() -> descn::Result<()> {
    let mut dgp = default_config(Scenario::ImbalancedBiased);
    dgp.n_train = 6_000;
    dgp.n_test = 1_000;
    dgp.seed = 11;
    let (train_raw, _) = generate(&dgp)?;

    let standardizer = fit_standardizer(&train_raw)?;
    let train_z = standardizer.apply(&train_raw)?;

    let cfg = TrainConfig {
        epochs: 6,
        batch_size: 250,
        shared_hidden: 32,
        head_hidden: 16,
        seed: 3,
        ..TrainConfig::for_kind(ModelKind::Descn)
    };
    println!(
        "training descn on {} samples ({:.1}% treated), {} epochs, batch {}",
        train_z.len(),
        100.0 * train_z.treated_fraction(),
        cfg.epochs,
        cfg.batch_size
    );

    let (_params, history) = train(ModelKind::Descn, &train_z, &cfg)?;
    println!("epoch      lr    total     l_pi   l_estr   l_escr  l_crossTR  l_crossCR");
    for e in &history.epochs {
        let c = e.components;
        println!(
            "{:>5}  {:.5}  {:>7.4}  {:>7.4}  {:>7.4}  {:>7.4}  {:>9.4}  {:>9.4}",
            e.epoch, e.lr, e.total, c.l_pi, c.l_estr, c.l_escr, c.l_cross_tr, c.l_cross_cr
        );
    }
    Ok(())
}
