//! Generate synthetic observational datasets with known ground-truth effects.
//!
//! Builds both presets, prints group statistics that show the treatment bias
//! in the training split against the randomized test split, and writes the
//! tables to `target/example-out/`.
//!
//! ```text
//! cargo run --example generate_data
//! ```

use descn::dgp::confounder_score_gap;
use descn::{default_config, generate, write_table, Dataset, Scenario, TableSchema};

fn describe(name: &str, ds: &Dataset) {
    let truth = ds.truth.as_ref().unwrap();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let positives = ds.y.iter().map(|&y| y as usize).sum::<usize>();
    println!(
        "  {name}: n = {}, treated {:.1}%, positive outcomes {:.1}%, mean true effect {:+.4}",
        ds.len(),
        100.0 * ds.treated_fraction(),
        100.0 * positives as f64 / ds.len() as f64,
        mean(&truth.tau),
    );
}

fn main() -> descn::Result<()> {
    let out_dir = std::path::Path::new("target/example-out");
    std::fs::create_dir_all(out_dir).expect("create output dir");

    for scenario in [Scenario::Balanced, Scenario::ImbalancedBiased] {
        let mut cfg = default_config(scenario);
        cfg.n_train = 20_000;
        cfg.n_test = 10_000;
        cfg.seed = 7;
        let (train, test) = generate(&cfg)?;

        println!("preset `{}`:", scenario.name());
        describe("train", &train);
        describe("test ", &test);
        println!(
            "  confounder score gap (treated - control) in train: {:+.4}",
            confounder_score_gap(&cfg, &train)?
        );

        let schema = TableSchema::synthetic(cfg.d);
        let train_path = out_dir.join(format!("{}_train.csv", scenario.name()));
        let test_path = out_dir.join(format!("{}_test.csv", scenario.name()));
        write_table(&train, &schema, &train_path)?;
        write_table(&test, &schema, &test_path)?;
        println!(
            "  wrote {} and {}\n",
            train_path.display(),
            test_path.display()
        );
    }
    Ok(())
}
