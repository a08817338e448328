//! The uplift curve behind the ranking metric.
//!
//! Ranks the randomized test split by a score, then walks prefix by prefix:
//! at each depth the uplift is the treated-minus-control outcome gap inside
//! the prefix scaled by the prefix fraction. The area under that curve,
//! minus the expected area of a random ranking, is the reported metric.
//! Scoring by the true effect must beat scoring by its reverse.
//!
//! ```text
//! cargo run --example uplift_curve
//! ```

use descn::{auuc, default_config, generate, Scenario};

fn curve_points(score: &[f64], y: &[u8], w: &[u8], at: &[usize]) -> Vec<(usize, f64)> {
    let mut order: Vec<usize> = (0..score.len()).collect();
    order.sort_by(|&a, &b| score[b].partial_cmp(&score[a]).unwrap().then(a.cmp(&b)));
    let mut out = Vec::new();
    let (mut ts, mut tn, mut cs, mut cn) = (0.0f64, 0usize, 0.0f64, 0usize);
    for (k, &i) in order.iter().enumerate() {
        if w[i] == 1 {
            ts += f64::from(y[i]);
            tn += 1;
        } else {
            cs += f64::from(y[i]);
            cn += 1;
        }
        if at.contains(&(k + 1)) {
            let t_mean = if tn == 0 { 0.0 } else { ts / tn as f64 };
            let c_mean = if cn == 0 { 0.0 } else { cs / cn as f64 };
            out.push((
                k + 1,
                (t_mean - c_mean) * (k + 1) as f64 / score.len() as f64,
            ));
        }
    }
    out
}

fn main() -> descn::Result<()> {
    let mut dgp = default_config(Scenario::ImbalancedBiased);
    dgp.n_train = 1;
    dgp.n_test = 10_000;
    dgp.seed = 31;
    let (_, test) = generate(&dgp)?;
    let truth = test.truth.as_ref().unwrap();
    let reversed: Vec<f64> = truth.tau.iter().map(|t| -t).collect();

    let n = test.len();
    let depths: Vec<usize> = (1..=10).map(|k| k * n / 10).collect();
    println!("prefix    uplift(true tau)   uplift(reversed)");
    let ideal = curve_points(&truth.tau, &test.y, &test.w, &depths);
    let adv = curve_points(&reversed, &test.y, &test.w, &depths);
    for ((k, u_ideal), (_, u_adv)) in ideal.iter().zip(&adv) {
        println!(
            "{:>5.0}%   {u_ideal:>+16.5}   {u_adv:>+16.5}",
            100.0 * *k as f64 / n as f64
        );
    }

    let a_ideal = auuc(&truth.tau, &test.y, &test.w)?;
    let a_adv = auuc(&reversed, &test.y, &test.w)?;
    println!("\nauuc(score = true tau) = {a_ideal:+.5}");
    println!("auuc(score = reversed) = {a_adv:+.5}");
    Ok(())
}
