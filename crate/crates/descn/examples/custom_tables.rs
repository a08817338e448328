//! Ingest external tables with arbitrary column names via a schema file.
//!
//! Writes a small observational table whose columns look nothing like the
//! defaults, maps it with a schema, trains on it, and scores a second table.
//! Without ground-truth columns only the observational metrics are computed,
//! mirroring production-style data.
//!
//! ```text
//! cargo run --example custom_tables
//! ```

use std::fs;

use descn::experiment::evaluate_model;
use descn::{fit_standardizer, read_table, train, IteMode, ModelKind, TableSchema, TrainConfig};

fn main() -> descn::Result<()> {
    let dir = std::path::Path::new("target/example-out");
    fs::create_dir_all(dir).expect("create output dir");

    // A tiny synthetic "export" with custom column names: two features, a
    // voucher flag, and a conversion flag.
    let mut rows = String::from("age_z,spend_z,got_voucher,converted\n");
    let mut state = 1u64;
    let mut next = || {
        // Small linear congruential stream keeps the example self-contained.
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..2_000 {
        let age = 2.0 * next() - 1.0;
        let spend = 2.0 * next() - 1.0;
        let voucher = u8::from(next() < 0.3 + 0.2 * age);
        let base = 0.2 + 0.3 * spend.max(0.0);
        let lift = if voucher == 1 { 0.1 } else { 0.0 };
        let converted = u8::from(next() < base + lift);
        rows.push_str(&format!("{age},{spend},{voucher},{converted}\n"));
    }
    let train_path = dir.join("voucher_train.csv");
    let test_path = dir.join("voucher_test.csv");
    let (head, body) = rows.split_at(rows.find('\n').unwrap() + 1);
    let split_at = body.len() * 3 / 4;
    let cut = head.len() + body[..split_at].rfind('\n').map_or(0, |i| i + 1);
    fs::write(&train_path, &rows[..cut]).expect("write train");
    fs::write(&test_path, format!("{head}{}", &rows[cut..])).expect("write test");

    let schema_path = dir.join("voucher.schema");
    fs::write(
        &schema_path,
        "feature_columns = age_z, spend_z\n\
         treatment_column = got_voucher\n\
         outcome_column = converted\n",
    )
    .expect("write schema");

    let schema = TableSchema::from_file(&schema_path)?;
    let train_raw = read_table(&train_path, &schema)?;
    let test_raw = read_table(&test_path, &schema)?;
    println!(
        "loaded {} train / {} test rows, {:.1}% treated",
        train_raw.len(),
        test_raw.len(),
        100.0 * train_raw.treated_fraction()
    );

    let standardizer = fit_standardizer(&train_raw)?;
    let cfg = TrainConfig {
        epochs: 6,
        batch_size: 200,
        shared_hidden: 16,
        head_hidden: 8,
        seed: 1,
        ..TrainConfig::for_kind(ModelKind::XNetwork)
    };
    let (params, _) = train(ModelKind::XNetwork, &standardizer.apply(&train_raw)?, &cfg)?;
    let metrics = evaluate_model(&params, &standardizer.apply(&test_raw)?, IteMode::HeadDiff)?;

    println!("truth columns absent, so only observational metrics are available:");
    println!("  att_error {:.4}", metrics.att_error.unwrap());
    println!("  auuc      {:+.4}", metrics.auuc.unwrap());
    assert!(metrics.sqrt_pehe.is_none() && metrics.ate_error.is_none());
    Ok(())
}
