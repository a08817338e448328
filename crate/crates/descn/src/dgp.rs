//! Synthetic observational data with known ground truth.
//!
//! Covariates are i.i.d. standard normal. Outcome surfaces are logistic in
//! the covariates: a control response `p0`, a bounded heterogeneous effect
//! `tau`, and a confounded propensity `pi` used to assign treatment in the
//! training split. The test split assigns treatment by a fair coin, mimicking
//! a randomized holdout, so training data carry treatment bias while test
//! data do not. Every draw comes from seeded ChaCha8 streams (see
//! [`crate::rng`]); a config reproduces its datasets byte for byte.
//!
//! Draw order, per split: rows in order, and per row `d` normal draws for the
//! covariates, then one uniform for treatment assignment, one for `y(0)`, one
//! for `y(1)`. The training split uses the stream `derive_seed(seed, 0x7261)`
//! and the test split `derive_seed(seed, 0x7465)`.

use crate::data::{Dataset, Truth};
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::nn::sigmoid;
use crate::rng::{bernoulli, derive_seed, seeded_rng, std_normal, unit_f64};

const TRAIN_STREAM: u64 = 0x7261;
const TEST_STREAM: u64 = 0x7465;

/// Named presets for [`default_config`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    /// Symmetric propensity, roughly half the samples treated.
    Balanced,
    /// Confounded assignment targeting roughly one fifth treated, with a
    /// small positive average effect.
    ImbalancedBiased,
}

impl Scenario {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "balanced" => Ok(Scenario::Balanced),
            "imbalanced_biased" => Ok(Scenario::ImbalancedBiased),
            other => Err(Error::config(format!("unknown scenario `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Balanced => "balanced",
            Scenario::ImbalancedBiased => "imbalanced_biased",
        }
    }
}

/// Full parameterization of the generator.
#[derive(Clone, Debug, PartialEq)]
pub struct DgpConfig {
    pub d: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub propensity_coefs: Vec<f64>,
    pub propensity_intercept: f64,
    pub base_coefs: Vec<f64>,
    pub base_intercept: f64,
    pub effect_coefs: Vec<f64>,
    pub effect_intercept: f64,
    pub effect_scale: f64,
    pub effect_offset: f64,
    /// Propensity is clipped into `(lo, hi)` so overlap always holds.
    pub propensity_clip: (f64, f64),
    pub seed: u64,
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::config("d must be positive"));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::config("n_train and n_test must be positive"));
        }
        let (lo, hi) = self.propensity_clip;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::config(
                "propensity clip must satisfy 0 < lo < hi < 1",
            ));
        }
        for (name, coefs) in [
            ("propensity_coefs", &self.propensity_coefs),
            ("base_coefs", &self.base_coefs),
            ("effect_coefs", &self.effect_coefs),
        ] {
            if coefs.len() != self.d {
                return Err(Error::config(format!(
                    "{name} has {} entries, expected d = {}",
                    coefs.len(),
                    self.d
                )));
            }
        }
        Ok(())
    }
}

/// Ground-truth surfaces evaluated at one covariate vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Surfaces {
    pub pi: f64,
    pub p0: f64,
    pub p1: f64,
    /// Effect after clipping `p1` into `[0, 1]`, i.e. exactly `p1 - p0`.
    pub tau: f64,
}

fn dot(coefs: &[f64], x: &[f64]) -> f64 {
    coefs.iter().zip(x).map(|(c, v)| c * v).sum()
}

/// Evaluates propensity, control response, treated response, and effect.
///
/// `pi = clip(sigma(c_pi . x + b_pi), lo, hi)`,
/// `p0 = sigma(c_b . x + b_b)`,
/// `p1 = clip(p0 + scale * sigma(c_e . x + b_e) - offset, 0, 1)`,
/// and the returned `tau` is the post-clip `p1 - p0`.
pub fn dgp_surfaces(x: &[f64], cfg: &DgpConfig) -> Surfaces {
    let (lo, hi) = cfg.propensity_clip;
    let pi = sigmoid(dot(&cfg.propensity_coefs, x) + cfg.propensity_intercept).clamp(lo, hi);
    let p0 = sigmoid(dot(&cfg.base_coefs, x) + cfg.base_intercept);
    let raw_tau = cfg.effect_scale * sigmoid(dot(&cfg.effect_coefs, x) + cfg.effect_intercept)
        - cfg.effect_offset;
    let p1 = (p0 + raw_tau).clamp(0.0, 1.0);
    Surfaces {
        pi,
        p0,
        p1,
        tau: p1 - p0,
    }
}

fn generate_split(cfg: &DgpConfig, n: usize, stream: u64, randomized: bool) -> Dataset {
    let mut rng = seeded_rng(derive_seed(cfg.seed, stream));
    let mut xs = Vec::with_capacity(n * cfg.d);
    let mut w = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut truth = Truth {
        pi: Vec::with_capacity(n),
        mu0: Vec::with_capacity(n),
        mu1: Vec::with_capacity(n),
        tau: Vec::with_capacity(n),
    };
    let mut x_row = vec![0.0; cfg.d];
    for _ in 0..n {
        for v in &mut x_row {
            *v = std_normal(&mut rng);
        }
        let s = dgp_surfaces(&x_row, cfg);
        let assign_p = if randomized { 0.5 } else { s.pi };
        let wi = bernoulli(&mut rng, assign_p);
        let y0 = u8::from(unit_f64(&mut rng) < s.p0);
        let y1 = u8::from(unit_f64(&mut rng) < s.p1);
        xs.extend_from_slice(&x_row);
        w.push(wi);
        y.push(if wi == 1 { y1 } else { y0 });
        truth.pi.push(assign_p);
        truth.mu0.push(s.p0);
        truth.mu1.push(s.p1);
        truth.tau.push(s.tau);
    }
    Dataset {
        x: Mat::from_vec(n, cfg.d, xs).expect("row count matches buffer"),
        w,
        y,
        truth: Some(truth),
    }
}

/// Generates the biased training split and the randomized test split.
pub fn generate(cfg: &DgpConfig) -> Result<(Dataset, Dataset)> {
    cfg.validate()?;
    let train = generate_split(cfg, cfg.n_train, TRAIN_STREAM, false);
    let test = generate_split(cfg, cfg.n_test, TEST_STREAM, true);
    Ok((train, test))
}

// Preset coefficient vectors are fixed numbers produced by the recipe below:
// unit directions drawn from dedicated ChaCha8 streams, with the propensity
// direction tilted toward the control-response direction so assignment
// actually confounds the outcome.
const RECIPE_SEED: u64 = 0x0de5_c0de;
const PRESET_D: usize = 20;

fn recipe_direction(tag: u64, d: usize) -> Vec<f64> {
    let mut rng = seeded_rng(derive_seed(RECIPE_SEED, tag));
    let raw: Vec<f64> = (0..d).map(|_| 2.0 * unit_f64(&mut rng) - 1.0).collect();
    let len = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    raw.into_iter().map(|v| v / len).collect()
}

fn scaled_mix(a: &[f64], wa: f64, b: &[f64], wb: f64, norm: f64) -> Vec<f64> {
    let mixed: Vec<f64> = a.iter().zip(b).map(|(x, y)| wa * x + wb * y).collect();
    let len = mixed.iter().map(|v| v * v).sum::<f64>().sqrt();
    mixed.into_iter().map(|v| v * norm / len).collect()
}

/// Documented presets over 20 covariates. The returned config has `seed = 0`;
/// set it before calling [`generate`].
pub fn default_config(scenario: Scenario) -> DgpConfig {
    let base_dir = recipe_direction(1, PRESET_D);
    let effect_dir = recipe_direction(2, PRESET_D);
    let prop_own = recipe_direction(3, PRESET_D);
    match scenario {
        Scenario::Balanced => DgpConfig {
            d: PRESET_D,
            n_train: 20_000,
            n_test: 20_000,
            propensity_coefs: scaled_mix(&base_dir, 0.7, &prop_own, 0.3, 0.5),
            propensity_intercept: 0.0,
            base_coefs: base_dir.iter().map(|v| v * 0.8).collect(),
            base_intercept: -0.5,
            effect_coefs: effect_dir.iter().map(|v| v * 1.2).collect(),
            effect_intercept: 0.0,
            effect_scale: 0.3,
            effect_offset: 0.1,
            propensity_clip: (0.05, 0.95),
            seed: 0,
        },
        Scenario::ImbalancedBiased => DgpConfig {
            d: PRESET_D,
            n_train: 50_000,
            n_test: 20_000,
            propensity_coefs: scaled_mix(&base_dir, 0.7, &prop_own, 0.3, 1.0),
            propensity_intercept: -1.75,
            base_coefs: base_dir.iter().map(|v| v * 0.9).collect(),
            base_intercept: -1.6,
            effect_coefs: effect_dir.iter().map(|v| v * 1.5).collect(),
            effect_intercept: 0.0,
            effect_scale: 0.2,
            effect_offset: 0.07,
            propensity_clip: (0.05, 0.95),
            seed: 0,
        },
    }
}

/// Mean of `x . propensity_coefs` among treated minus among controls; a
/// positive gap witnesses confounded assignment.
pub fn confounder_score_gap(cfg: &DgpConfig, data: &Dataset) -> Result<f64> {
    let (mut t_sum, mut t_n, mut c_sum, mut c_n) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..data.len() {
        let s = dot(&cfg.propensity_coefs, data.x.row(i));
        if data.w[i] == 1 {
            t_sum += s;
            t_n += 1;
        } else {
            c_sum += s;
            c_n += 1;
        }
    }
    if t_n == 0 || c_n == 0 {
        return Err(Error::argument("both treatment groups must be non-empty"));
    }
    Ok(t_sum / t_n as f64 - c_sum / c_n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> DgpConfig {
        let mut cfg = default_config(Scenario::ImbalancedBiased);
        cfg.n_train = 400;
        cfg.n_test = 400;
        cfg.seed = 5;
        cfg
    }

    #[test]
    fn surfaces_all_zero_coefs() {
        let cfg = DgpConfig {
            d: 2,
            n_train: 1,
            n_test: 1,
            propensity_coefs: vec![0.0; 2],
            propensity_intercept: 0.0,
            base_coefs: vec![0.0; 2],
            base_intercept: 0.0,
            effect_coefs: vec![0.0; 2],
            effect_intercept: 0.0,
            effect_scale: 0.0,
            effect_offset: 0.0,
            propensity_clip: (0.05, 0.95),
            seed: 0,
        };
        let s = dgp_surfaces(&[3.0, -1.0], &cfg);
        assert_eq!((s.pi, s.p0, s.p1, s.tau), (0.5, 0.5, 0.5, 0.0));
    }

    #[test]
    fn surfaces_clip_effect_at_one() {
        // p0 = 0.9 and a +0.3 raw effect: p1 clips to 1, tau becomes 0.1.
        let cfg = DgpConfig {
            d: 1,
            n_train: 1,
            n_test: 1,
            propensity_coefs: vec![0.0],
            propensity_intercept: 0.0,
            base_coefs: vec![0.0],
            base_intercept: (0.9f64 / 0.1f64).ln(),
            effect_coefs: vec![0.0],
            effect_intercept: 0.0,
            effect_scale: 0.6,
            effect_offset: 0.0,
            propensity_clip: (0.05, 0.95),
            seed: 0,
        };
        let s = dgp_surfaces(&[0.0], &cfg);
        assert!((s.p0 - 0.9).abs() < 1e-12);
        assert_eq!(s.p1, 1.0);
        assert!((s.tau - 0.1).abs() < 1e-12);
    }

    #[test]
    fn returned_tau_is_p1_minus_p0_on_random_inputs() {
        let cfg = tiny_config();
        let mut rng = seeded_rng(11);
        for _ in 0..100_000 {
            let x: Vec<f64> = (0..cfg.d).map(|_| std_normal(&mut rng)).collect();
            let s = dgp_surfaces(&x, &cfg);
            assert_eq!(s.tau, s.p1 - s.p0);
            assert!((0.0..=1.0).contains(&s.p0));
            assert!((0.0..=1.0).contains(&s.p1));
        }
    }

    #[test]
    fn generate_is_deterministic() {
        let cfg = tiny_config();
        let (a_train, a_test) = generate(&cfg).unwrap();
        let (b_train, b_test) = generate(&cfg).unwrap();
        assert_eq!(a_train, b_train);
        assert_eq!(a_test, b_test);
    }

    #[test]
    fn overlap_holds_on_every_row() {
        let cfg = tiny_config();
        let (train, _) = generate(&cfg).unwrap();
        let (lo, hi) = cfg.propensity_clip;
        let truth = train.truth.as_ref().unwrap();
        assert!(truth.pi.iter().all(|&p| (lo..=hi).contains(&p)));
    }

    #[test]
    fn split_fractions_match_design() {
        let mut cfg = default_config(Scenario::ImbalancedBiased);
        cfg.n_train = 100_000;
        cfg.n_test = 100_000;
        cfg.seed = 1;
        let (train, test) = generate(&cfg).unwrap();
        let tf = train.treated_fraction();
        assert!(tf < 0.3, "train treated fraction {tf}");
        assert!((0.15..=0.25).contains(&tf), "preset target missed: {tf}");
        // 4 binomial standard deviations around one half.
        let sd4 = 4.0 * (0.25f64 / 100_000.0).sqrt();
        let dev = (test.treated_fraction() - 0.5).abs();
        assert!(dev < sd4, "test fraction deviates {dev}");
    }

    #[test]
    fn balanced_preset_is_symmetric() {
        let mut cfg = default_config(Scenario::Balanced);
        cfg.n_train = 100_000;
        cfg.seed = 2;
        let (train, _) = generate(&cfg).unwrap();
        let tf = train.treated_fraction();
        assert!((tf - 0.5).abs() < 0.02, "balanced treated fraction {tf}");
    }

    #[test]
    fn presets_respect_overlap_clip() {
        for s in [Scenario::Balanced, Scenario::ImbalancedBiased] {
            assert_eq!(default_config(s).propensity_clip, (0.05, 0.95));
        }
    }

    #[test]
    fn treated_have_higher_confounder_scores() {
        let mut cfg = default_config(Scenario::ImbalancedBiased);
        cfg.n_train = 50_000;
        cfg.seed = 3;
        let (train, _) = generate(&cfg).unwrap();
        let gap = confounder_score_gap(&cfg, &train).unwrap();
        assert!(gap > 0.0, "confounder gap {gap}");
    }

    #[test]
    fn monte_carlo_outcome_gap_converges_to_tau() {
        let cfg = tiny_config();
        let x: Vec<f64> = (0..cfg.d).map(|j| ((j % 5) as f64 - 2.0) * 0.6).collect();
        let s = dgp_surfaces(&x, &cfg);
        let reps = 100_000usize;
        let mut rng = seeded_rng(77);
        let mut acc = 0.0;
        for _ in 0..reps {
            let y0 = f64::from(u8::from(unit_f64(&mut rng) < s.p0));
            let y1 = f64::from(u8::from(unit_f64(&mut rng) < s.p1));
            acc += y1 - y0;
        }
        let mean = acc / reps as f64;
        let var = (s.p1 * (1.0 - s.p1) + s.p0 * (1.0 - s.p0)) / reps as f64;
        assert!(
            (mean - s.tau).abs() <= 4.0 * var.sqrt(),
            "mc gap {mean} vs tau {}",
            s.tau
        );
    }

    #[test]
    fn unknown_scenario_is_rejected() {
        assert!(Scenario::parse("wild").is_err());
    }

    #[test]
    fn validate_catches_bad_clip_and_dims() {
        let mut cfg = tiny_config();
        cfg.propensity_clip = (0.9, 0.1);
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.propensity_coefs.pop();
        assert!(cfg.validate().is_err());
    }
}
