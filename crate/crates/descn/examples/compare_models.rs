//! A small repeated experiment comparing the whole model family.
//!
//! Three seeded repetitions on the confounded imbalanced preset; every model
//! within a repetition sees the same data. Prints the aggregate grid with
//! mean, standard error, and relative improvement against the two-headed
//! baseline. A desk-scale version of the full experiment run by the
//! acceptance suite.
//!
//! ```text
//! cargo run --release --example compare_models
//! ```

use descn::experiment::{report_text, run_experiment, DataSource, ExperimentConfig, ModelSpec};
use descn::{ModelKind, Scenario, TrainConfig};

fn main() -> descn::Result<()> {
    let kinds = [
        ModelKind::Tarnet,
        ModelKind::EsnTarnet,
        ModelKind::XNetwork,
        ModelKind::EsnOnly,
        ModelKind::Descn,
    ];
    let cfg = ExperimentConfig {
        source: DataSource::Preset {
            scenario: Scenario::ImbalancedBiased,
            n_train: Some(10_000),
            n_test: Some(5_000),
        },
        models: kinds
            .into_iter()
            .map(|kind| ModelSpec {
                name: kind.name().to_string(),
                kind,
                cfg: TrainConfig {
                    epochs: 15,
                    shared_hidden: 32,
                    head_hidden: 16,
                    ..TrainConfig::for_kind(kind)
                },
            })
            .collect(),
        repetitions: 3,
        base_seed: 500,
        baseline: "tarnet".to_string(),
    };

    let output = run_experiment(&cfg)?;
    print!("{}", report_text(&output.report));
    println!("\n(error metrics: lower is better; auuc: higher is better)");
    Ok(())
}
