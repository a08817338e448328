//! Verify every loss's reverse-mode gradients against central differences.
//!
//! Builds small random networks and batches, backpropagates each composite
//! loss, and compares against a finite-difference probe of every parameter.
//!
//! ```text
//! cargo run --example gradient_check
//! ```

use descn::model::{
    backward_model, forward_heads, forward_heads_train, init_model, loss_for_kind, ALL_KINDS,
};
use descn::rng::{seeded_rng, std_normal, unit_f64};
use descn::{finite_diff_check, LossWeights, Mat, TrainConfig};

fn main() -> descn::Result<()> {
    println!(
        "central differences at eps = 1e-4; error = |analytic - numeric| / max(|a|, |n|, 1)\n"
    );
    for kind in ALL_KINDS {
        let cfg = TrainConfig {
            shared_hidden: 6,
            head_hidden: 4,
            depth: 2,
            ..TrainConfig::for_kind(kind)
        };
        let weights = LossWeights::defaults_for(kind);
        let mut worst: f64 = 0.0;
        for trial in 0..10 {
            let params = init_model(kind, 4, &cfg)?;
            let mut rng = seeded_rng(900 + trial);
            let rows: Vec<Vec<f64>> = (0..12)
                .map(|_| (0..4).map(|_| std_normal(&mut rng)).collect())
                .collect();
            let x = Mat::from_rows(&rows)?;
            let y: Vec<u8> = (0..12)
                .map(|_| u8::from(unit_f64(&mut rng) < 0.5))
                .collect();
            let w: Vec<u8> = (0..12)
                .map(|_| u8::from(unit_f64(&mut rng) < 0.5))
                .collect();

            let (bundle, tape) = forward_heads_train(&params, &x)?;
            let out = loss_for_kind(kind, &bundle, &y, &w, &weights)?;
            let analytic = backward_model(&params, &tape, &out.grads)?.flatten();
            let err = finite_diff_check(
                &params,
                &analytic,
                |p| {
                    let b = forward_heads(p, &x).expect("forward");
                    loss_for_kind(kind, &b, &y, &w, &weights)
                        .expect("loss")
                        .total
                },
                1e-4,
            )?;
            worst = worst.max(err);
        }
        println!(
            "{:<12} worst error over 10 trials: {worst:.3e}",
            kind.name()
        );
    }
    Ok(())
}
