//! The uplift model family: a shared trunk feeding propensity, treated,
//! control, and pseudo-effect heads, with losses that factorize responses over
//! the entire sample space.
//!
//! All heads emit raw logits. The entire-space treated response is the joint
//! probability `P(y, w=1 | x) = mu1 * pi`, handled in log space as
//! `log_sigmoid(mu1_logit) + log_sigmoid(pi_logit)`; likewise the control
//! response with `1 - pi`. Cross responses move the pseudo effect between the
//! response heads directly on logits: `cross_tr = mu0_logit + tau_logit` and
//! `cross_cr = mu1_logit - tau_logit`, so the sigmoid compositions hold
//! exactly and nothing ever leaves `[0, 1]`.

use crate::data::{batch_iter, Dataset};
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::nn::{
    bce_with_logits, init_params, log_sigmoid, optimizer_step, sigmoid, Activation, FlatParams,
    GradStore, LayerSpec, OptimizerState, ParamStore, Tape,
};
use crate::rng::derive_seed;

/// Which heads a model carries and which loss trains it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    /// Two response heads trained on their own subsets.
    Tarnet,
    /// Tarnet plus a propensity head, trained by the entire-space loss.
    EsnTarnet,
    /// Response heads plus a pseudo-effect head with cross losses.
    XNetwork,
    /// Propensity and response heads, entire-space loss only.
    EsnOnly,
    /// Entire-space loss applied on top of the cross network.
    Descn,
}

pub const ALL_KINDS: [ModelKind; 5] = [
    ModelKind::Tarnet,
    ModelKind::EsnTarnet,
    ModelKind::XNetwork,
    ModelKind::EsnOnly,
    ModelKind::Descn,
];

impl ModelKind {
    pub fn has_pi_head(self) -> bool {
        matches!(
            self,
            ModelKind::EsnTarnet | ModelKind::EsnOnly | ModelKind::Descn
        )
    }

    pub fn has_tau_head(self) -> bool {
        matches!(self, ModelKind::XNetwork | ModelKind::Descn)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Tarnet => "tarnet",
            ModelKind::EsnTarnet => "esn_tarnet",
            ModelKind::XNetwork => "x_network",
            ModelKind::EsnOnly => "esn_only",
            ModelKind::Descn => "descn",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        ALL_KINDS
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::argument(format!("unknown model kind `{s}`")))
    }
}

/// How a trained model turns head outputs into a per-sample effect score.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IteMode {
    /// `sigma(mu1_logit) - sigma(mu0_logit)`; the default.
    HeadDiff,
    /// `2 * sigma(tau_logit) - 1`, a signed score in `(-1, 1)`. This is a
    /// ranking score only; evaluation never feeds it into average-effect
    /// error metrics.
    Pte,
    /// Entire-space responses divided by the (clamped) propensity:
    /// `estr / pi - escr / (1 - pi)`.
    EsnRatio,
}

impl IteMode {
    pub fn name(self) -> &'static str {
        match self {
            IteMode::HeadDiff => "head_diff",
            IteMode::Pte => "pte",
            IteMode::EsnRatio => "esn_ratio",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "head_diff" => Ok(IteMode::HeadDiff),
            "pte" => Ok(IteMode::Pte),
            "esn_ratio" => Ok(IteMode::EsnRatio),
            other => Err(Error::argument(format!("unknown ite mode `{other}`"))),
        }
    }
}

/// Weights of the composite losses.
///
/// `alpha` scales the propensity loss, `beta1`/`beta0` the entire-space
/// treated/control response losses, `gamma1`/`gamma0` the cross response
/// losses. Weights a model kind cannot use must be zero; the plain two-headed
/// model uses none of them (its two subset losses carry unit weight).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta1: f64,
    pub beta0: f64,
    pub gamma1: f64,
    pub gamma0: f64,
}

impl LossWeights {
    pub fn zeros() -> Self {
        LossWeights {
            alpha: 0.0,
            beta1: 0.0,
            beta0: 0.0,
            gamma1: 0.0,
            gamma0: 0.0,
        }
    }

    pub fn defaults_for(kind: ModelKind) -> Self {
        let mut w = LossWeights::zeros();
        match kind {
            ModelKind::Tarnet => {}
            ModelKind::EsnTarnet | ModelKind::EsnOnly => {
                w.alpha = 1.0;
                w.beta1 = 1.0;
                w.beta0 = 1.0;
            }
            ModelKind::XNetwork => {
                w.gamma1 = 1.0;
                w.gamma0 = 1.0;
            }
            ModelKind::Descn => {
                w = LossWeights {
                    alpha: 1.0,
                    beta1: 1.0,
                    beta0: 1.0,
                    gamma1: 1.0,
                    gamma0: 1.0,
                };
            }
        }
        w
    }

    pub fn validate_for(&self, kind: ModelKind) -> Result<()> {
        let named = [
            ("alpha", self.alpha),
            ("beta1", self.beta1),
            ("beta0", self.beta0),
            ("gamma1", self.gamma1),
            ("gamma0", self.gamma0),
        ];
        for (name, v) in named {
            if v.is_nan() || v < 0.0 {
                return Err(Error::config(format!(
                    "loss weight {name} must be >= 0, got {v}"
                )));
            }
        }
        let relevant: &[&str] = match kind {
            ModelKind::Tarnet => &[],
            ModelKind::EsnTarnet | ModelKind::EsnOnly => &["alpha", "beta1", "beta0"],
            ModelKind::XNetwork => &["gamma1", "gamma0"],
            ModelKind::Descn => &["alpha", "beta1", "beta0", "gamma1", "gamma0"],
        };
        for (name, v) in named {
            if !relevant.contains(&name) && v != 0.0 {
                return Err(Error::config(format!(
                    "loss weight {name} is not used by `{}` and must be 0",
                    kind.name()
                )));
            }
        }
        // Kinds whose loss is entirely weight-scaled need at least one
        // positive weight; subset losses with implicit unit weight keep the
        // two-headed and cross-network kinds non-degenerate on their own.
        let needs_positive = matches!(
            kind,
            ModelKind::EsnTarnet | ModelKind::EsnOnly | ModelKind::Descn
        );
        if needs_positive && named.iter().all(|(_, v)| *v == 0.0) {
            return Err(Error::config(format!(
                "`{}` needs at least one positive loss weight",
                kind.name()
            )));
        }
        Ok(())
    }
}

/// Unit-weight subset losses plus cross weights, as the cross network trains.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct XNetworkWeights {
    pub w_tr: f64,
    pub w_cr: f64,
    pub gamma1: f64,
    pub gamma0: f64,
}

/// Everything a training run needs besides the data.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub shared_hidden: usize,
    pub head_hidden: usize,
    /// Fully connected layers per component (trunk and each head).
    pub depth: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub decay: f64,
    pub l2: f64,
    pub loss_weights: LossWeights,
    pub seed: u64,
    pub ite_mode: IteMode,
}

impl TrainConfig {
    /// Baseline configuration for a model kind.
    pub fn for_kind(kind: ModelKind) -> Self {
        TrainConfig {
            shared_hidden: 64,
            head_hidden: 32,
            depth: 3,
            batch_size: 500,
            epochs: 10,
            lr: 1e-3,
            decay: 0.95,
            l2: 1e-3,
            loss_weights: LossWeights::defaults_for(kind),
            seed: 0,
            ite_mode: IteMode::HeadDiff,
        }
    }

    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        if self.shared_hidden == 0 || self.head_hidden == 0 || self.depth == 0 {
            return Err(Error::config("network sizes must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if self.lr.is_nan() || self.lr <= 0.0 {
            return Err(Error::config("lr must be > 0"));
        }
        if self.decay.is_nan() || self.decay <= 0.0 || self.decay > 1.0 {
            return Err(Error::config("decay must satisfy 0 < decay <= 1"));
        }
        if self.l2.is_nan() || self.l2 < 0.0 {
            return Err(Error::config("l2 must be >= 0"));
        }
        self.loss_weights.validate_for(kind)?;
        if self.ite_mode == IteMode::Pte && !kind.has_tau_head() {
            return Err(Error::config(format!(
                "ite mode `pte` needs a pseudo-effect head; `{}` has none",
                kind.name()
            )));
        }
        if self.ite_mode == IteMode::EsnRatio && !kind.has_pi_head() {
            return Err(Error::config(format!(
                "ite mode `esn_ratio` needs a propensity head; `{}` has none",
                kind.name()
            )));
        }
        Ok(())
    }
}

/// Trainable state of one model: shared trunk plus per-head chains.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    kind: ModelKind,
    trunk: ParamStore,
    pi: Option<ParamStore>,
    mu1: ParamStore,
    mu0: ParamStore,
    tau: Option<ParamStore>,
}

const TRUNK_TAG: u64 = 0x6e01;
const PI_TAG: u64 = 0x6e02;
const MU1_TAG: u64 = 0x6e03;
const MU0_TAG: u64 = 0x6e04;
const TAU_TAG: u64 = 0x6e05;

fn trunk_specs(input_dim: usize, cfg: &TrainConfig) -> Vec<LayerSpec> {
    let mut specs = vec![LayerSpec::new(
        input_dim,
        cfg.shared_hidden,
        Activation::Elu,
    )];
    for _ in 1..cfg.depth {
        specs.push(LayerSpec::new(
            cfg.shared_hidden,
            cfg.shared_hidden,
            Activation::Elu,
        ));
    }
    specs
}

fn head_specs(cfg: &TrainConfig) -> Vec<LayerSpec> {
    if cfg.depth == 1 {
        return vec![LayerSpec::new(cfg.shared_hidden, 1, Activation::Identity)];
    }
    let mut specs = vec![LayerSpec::new(
        cfg.shared_hidden,
        cfg.head_hidden,
        Activation::Elu,
    )];
    for _ in 2..cfg.depth {
        specs.push(LayerSpec::new(
            cfg.head_hidden,
            cfg.head_hidden,
            Activation::Elu,
        ));
    }
    specs.push(LayerSpec::new(cfg.head_hidden, 1, Activation::Identity));
    specs
}

/// Initializes a model; each component draws from its own seed stream derived
/// from `cfg.seed`.
pub fn init_model(kind: ModelKind, input_dim: usize, cfg: &TrainConfig) -> Result<ModelParams> {
    if input_dim == 0 {
        return Err(Error::shape("input_dim must be positive"));
    }
    let head = head_specs(cfg);
    let mk_head = |tag: u64| init_params(&head, derive_seed(cfg.seed, tag));
    Ok(ModelParams {
        kind,
        trunk: init_params(
            &trunk_specs(input_dim, cfg),
            derive_seed(cfg.seed, TRUNK_TAG),
        )?,
        pi: kind.has_pi_head().then(|| mk_head(PI_TAG)).transpose()?,
        mu1: mk_head(MU1_TAG)?,
        mu0: mk_head(MU0_TAG)?,
        tau: kind.has_tau_head().then(|| mk_head(TAU_TAG)).transpose()?,
    })
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    /// Components in serialization order with their role names.
    pub fn components(&self) -> Vec<(&'static str, &ParamStore)> {
        let mut v = vec![("trunk", &self.trunk)];
        if let Some(pi) = &self.pi {
            v.push(("pi", pi));
        }
        v.push(("mu1", &self.mu1));
        v.push(("mu0", &self.mu0));
        if let Some(tau) = &self.tau {
            v.push(("tau", tau));
        }
        v
    }

    pub(crate) fn from_components(
        kind: ModelKind,
        mut parts: std::collections::HashMap<String, ParamStore>,
    ) -> Result<Self> {
        let mut take = |name: &str| {
            parts
                .remove(name)
                .ok_or_else(|| Error::config(format!("model file lacks component `{name}`")))
        };
        let trunk = take("trunk")?;
        let mu1 = take("mu1")?;
        let mu0 = take("mu0")?;
        let pi = if kind.has_pi_head() {
            Some(take("pi")?)
        } else {
            None
        };
        let tau = if kind.has_tau_head() {
            Some(take("tau")?)
        } else {
            None
        };
        if let Some(extra) = parts.keys().next() {
            return Err(Error::config(format!(
                "model file has unexpected component `{extra}` for kind `{}`",
                kind.name()
            )));
        }
        Ok(ModelParams {
            kind,
            trunk,
            pi,
            mu1,
            mu0,
            tau,
        })
    }

    fn parts(&self) -> Vec<&ParamStore> {
        self.components().into_iter().map(|(_, p)| p).collect()
    }

    fn parts_mut(&mut self) -> Vec<&mut ParamStore> {
        let mut v: Vec<&mut ParamStore> = vec![&mut self.trunk];
        if let Some(pi) = &mut self.pi {
            v.push(pi);
        }
        v.push(&mut self.mu1);
        v.push(&mut self.mu0);
        if let Some(tau) = &mut self.tau {
            v.push(tau);
        }
        v
    }
}

impl FlatParams for ModelParams {
    fn flat_len(&self) -> usize {
        self.parts().iter().map(|p| p.flat_len()).sum()
    }

    fn flat_get(&self, mut idx: usize) -> f64 {
        for p in self.parts() {
            if idx < p.flat_len() {
                return p.flat_get(idx);
            }
            idx -= p.flat_len();
        }
        panic!("flat index out of range");
    }

    fn flat_set(&mut self, mut idx: usize, value: f64) {
        for p in self.parts_mut() {
            if idx < p.flat_len() {
                p.flat_set(idx, value);
                return;
            }
            idx -= p.flat_len();
        }
        panic!("flat index out of range");
    }
}

/// Per-sample head logits with every derived quantity the losses need.
/// Columns for absent heads are empty.
#[derive(Clone, Debug, Default)]
pub struct ForwardBundle {
    n: usize,
    pub pi_logit: Vec<f64>,
    pub mu1_logit: Vec<f64>,
    pub mu0_logit: Vec<f64>,
    pub tau_logit: Vec<f64>,
    pub pi_hat: Vec<f64>,
    pub mu1_hat: Vec<f64>,
    pub mu0_hat: Vec<f64>,
    pub tau_hat: Vec<f64>,
    /// `log(mu1 * pi)` per sample.
    pub estr_log: Vec<f64>,
    /// `log(mu0 * (1 - pi))` per sample.
    pub escr_log: Vec<f64>,
    /// `mu0_logit + tau_logit` per sample.
    pub cross_tr_logit: Vec<f64>,
    /// `mu1_logit - tau_logit` per sample.
    pub cross_cr_logit: Vec<f64>,
}

impl ForwardBundle {
    /// Builds all derived quantities from raw head logits.
    pub fn from_logits(
        pi_logit: Option<Vec<f64>>,
        mu1_logit: Vec<f64>,
        mu0_logit: Vec<f64>,
        tau_logit: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = mu1_logit.len();
        if mu0_logit.len() != n {
            return Err(Error::shape("mu1/mu0 logit columns differ in length"));
        }
        if let Some(p) = &pi_logit {
            if p.len() != n {
                return Err(Error::shape("pi logit column has wrong length"));
            }
        }
        if let Some(t) = &tau_logit {
            if t.len() != n {
                return Err(Error::shape("tau logit column has wrong length"));
            }
        }
        let pi_logit = pi_logit.unwrap_or_default();
        let tau_logit = tau_logit.unwrap_or_default();
        let sig = |v: &[f64]| v.iter().map(|&z| sigmoid(z)).collect::<Vec<_>>();
        let mut bundle = ForwardBundle {
            n,
            pi_hat: sig(&pi_logit),
            mu1_hat: sig(&mu1_logit),
            mu0_hat: sig(&mu0_logit),
            tau_hat: sig(&tau_logit),
            ..Default::default()
        };
        if !pi_logit.is_empty() {
            bundle.estr_log = mu1_logit
                .iter()
                .zip(&pi_logit)
                .map(|(&m, &p)| log_sigmoid(m) + log_sigmoid(p))
                .collect();
            bundle.escr_log = mu0_logit
                .iter()
                .zip(&pi_logit)
                .map(|(&m, &p)| log_sigmoid(m) + log_sigmoid(-p))
                .collect();
        }
        if !tau_logit.is_empty() {
            bundle.cross_tr_logit = mu0_logit
                .iter()
                .zip(&tau_logit)
                .map(|(&m, &t)| m + t)
                .collect();
            bundle.cross_cr_logit = mu1_logit
                .iter()
                .zip(&tau_logit)
                .map(|(&m, &t)| m - t)
                .collect();
        }
        bundle.pi_logit = pi_logit;
        bundle.mu1_logit = mu1_logit;
        bundle.mu0_logit = mu0_logit;
        bundle.tau_logit = tau_logit;
        Ok(bundle)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn has_pi(&self) -> bool {
        !self.pi_logit.is_empty()
    }

    pub fn has_tau(&self) -> bool {
        !self.tau_logit.is_empty()
    }
}

/// Forward caches for one training batch.
pub struct ModelTape {
    trunk: Tape,
    pi: Option<Tape>,
    mu1: Tape,
    mu0: Tape,
    tau: Option<Tape>,
}

fn column(m: &Mat) -> Vec<f64> {
    m.data().to_vec()
}

/// Evaluates trunk and heads on a batch.
pub fn forward_heads(params: &ModelParams, x: &Mat) -> Result<ForwardBundle> {
    let shared = params.trunk.forward(x)?;
    let head = |p: &ParamStore| -> Result<Vec<f64>> { Ok(column(&p.forward(&shared)?)) };
    ForwardBundle::from_logits(
        params.pi.as_ref().map(head).transpose()?,
        head(&params.mu1)?,
        head(&params.mu0)?,
        params.tau.as_ref().map(head).transpose()?,
    )
}

/// Forward pass with caches for [`backward_model`].
pub fn forward_heads_train(params: &ModelParams, x: &Mat) -> Result<(ForwardBundle, ModelTape)> {
    let trunk_tape = params.trunk.forward_train(x)?;
    let shared = trunk_tape.output().clone();
    let run = |p: &ParamStore| p.forward_train(&shared);
    let pi_tape = params.pi.as_ref().map(run).transpose()?;
    let mu1_tape = run(&params.mu1)?;
    let mu0_tape = run(&params.mu0)?;
    let tau_tape = params.tau.as_ref().map(run).transpose()?;
    let bundle = ForwardBundle::from_logits(
        pi_tape.as_ref().map(|t| column(t.output())),
        column(mu1_tape.output()),
        column(mu0_tape.output()),
        tau_tape.as_ref().map(|t| column(t.output())),
    )?;
    Ok((
        bundle,
        ModelTape {
            trunk: trunk_tape,
            pi: pi_tape,
            mu1: mu1_tape,
            mu0: mu0_tape,
            tau: tau_tape,
        },
    ))
}

/// Per-sample derivatives of a scalar loss with respect to each head logit.
/// Vectors are empty for heads the loss does not touch.
#[derive(Clone, Debug, Default)]
pub struct LogitGrads {
    pub d_pi: Vec<f64>,
    pub d_mu1: Vec<f64>,
    pub d_mu0: Vec<f64>,
    pub d_tau: Vec<f64>,
}

/// Unweighted means of each loss component; zero when unused.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossComponents {
    pub l_pi: f64,
    pub l_estr: f64,
    pub l_escr: f64,
    pub l_tr: f64,
    pub l_cr: f64,
    pub l_cross_tr: f64,
    pub l_cross_cr: f64,
}

impl LossComponents {
    pub const NAMES: [&'static str; 7] = [
        "l_pi",
        "l_estr",
        "l_escr",
        "l_tr",
        "l_cr",
        "l_cross_tr",
        "l_cross_cr",
    ];

    pub fn values(&self) -> [f64; 7] {
        [
            self.l_pi,
            self.l_estr,
            self.l_escr,
            self.l_tr,
            self.l_cr,
            self.l_cross_tr,
            self.l_cross_cr,
        ]
    }
}

/// Flags raised when a subset-mean term saw no samples of its group.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SubsetDiag {
    pub empty_treated: bool,
    pub empty_control: bool,
}

/// Value, components, diagnostics, and logit gradients of one loss evaluation.
#[derive(Clone, Debug)]
pub struct LossOutput {
    pub total: f64,
    pub components: LossComponents,
    pub diag: SubsetDiag,
    pub grads: LogitGrads,
}

fn check_labels(bundle: &ForwardBundle, y: &[u8], w: &[u8]) -> Result<()> {
    if bundle.is_empty() {
        return Err(Error::argument("empty batch"));
    }
    if y.len() != bundle.len() || w.len() != bundle.len() {
        return Err(Error::shape("label columns do not match batch size"));
    }
    if y.iter().chain(w).any(|&v| v > 1) {
        return Err(Error::argument("labels must be 0 or 1"));
    }
    Ok(())
}

/// Cross entropy of a joint probability given by its logarithm.
///
/// Returns the value and its derivative in `log_p`. The label-0 branch uses
/// `1 - p = -expm1(log_p)` floored at the smallest positive double so the
/// logarithm stays finite as `log_p` approaches 0.
fn joint_bce(log_p: f64, target: u8) -> (f64, f64) {
    if target == 1 {
        (-log_p, -1.0)
    } else {
        let q = (-log_p.exp_m1()).max(f64::MIN_POSITIVE);
        (-q.ln(), log_p.exp() / q)
    }
}

/// Mean BCE of `logits` against `y` over samples with `w == group`.
///
/// Fills `dlogit` with the per-sample derivative of that mean (zero outside
/// the subset) and returns `(mean, subset_size)`; an empty subset yields
/// `(0.0, 0)` and leaves `dlogit` untouched.
fn subset_bce(logits: &[f64], y: &[u8], w: &[u8], group: u8, dlogit: &mut [f64]) -> (f64, usize) {
    let size = w.iter().filter(|&&g| g == group).count();
    if size == 0 {
        return (0.0, 0);
    }
    let mut sum = 0.0;
    for (i, ((&logit, &yi), &wi)) in logits.iter().zip(y).zip(w).enumerate() {
        if wi != group {
            continue;
        }
        sum += bce_with_logits(logit, yi);
        dlogit[i] = (sigmoid(logit) - f64::from(yi)) / size as f64;
    }
    (sum / size as f64, size)
}

fn axpy(dst: &mut [f64], scale: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}

/// Entire-space loss: propensity plus factorized treated/control responses,
/// each an average over the whole batch.
pub fn loss_esn(
    bundle: &ForwardBundle,
    y: &[u8],
    w: &[u8],
    weights: &LossWeights,
) -> Result<LossOutput> {
    check_labels(bundle, y, w)?;
    if !bundle.has_pi() {
        return Err(Error::shape("entire-space loss needs a propensity head"));
    }
    let n = bundle.len();
    let nf = n as f64;
    let mut g = LogitGrads {
        d_pi: vec![0.0; n],
        d_mu1: vec![0.0; n],
        d_mu0: vec![0.0; n],
        d_tau: Vec::new(),
    };

    let mut l_pi = 0.0;
    for (i, &wi) in w.iter().enumerate() {
        l_pi += bce_with_logits(bundle.pi_logit[i], wi);
        g.d_pi[i] += weights.alpha * (bundle.pi_hat[i] - f64::from(wi)) / nf;
    }
    l_pi /= nf;

    let mut l_estr = 0.0;
    for i in 0..n {
        let (val, dl) = joint_bce(bundle.estr_log[i], y[i] & w[i]);
        l_estr += val;
        let s = weights.beta1 * dl / nf;
        g.d_mu1[i] += s * sigmoid(-bundle.mu1_logit[i]);
        g.d_pi[i] += s * sigmoid(-bundle.pi_logit[i]);
    }
    l_estr /= nf;

    let mut l_escr = 0.0;
    for i in 0..n {
        let (val, dl) = joint_bce(bundle.escr_log[i], y[i] & (1 - w[i]));
        l_escr += val;
        let s = weights.beta0 * dl / nf;
        g.d_mu0[i] += s * sigmoid(-bundle.mu0_logit[i]);
        g.d_pi[i] -= s * bundle.pi_hat[i];
    }
    l_escr /= nf;

    Ok(LossOutput {
        total: weights.alpha * l_pi + weights.beta1 * l_estr + weights.beta0 * l_escr,
        components: LossComponents {
            l_pi,
            l_estr,
            l_escr,
            ..Default::default()
        },
        diag: SubsetDiag::default(),
        grads: g,
    })
}

/// Cross-network loss: subset response losses plus cross counterfactual
/// losses through the pseudo-effect head. Empty subsets contribute zero and
/// raise the matching diagnostic flag.
pub fn loss_xnetwork(
    bundle: &ForwardBundle,
    y: &[u8],
    w: &[u8],
    xw: &XNetworkWeights,
) -> Result<LossOutput> {
    check_labels(bundle, y, w)?;
    if !bundle.has_tau() {
        return Err(Error::shape(
            "cross-network loss needs a pseudo-effect head",
        ));
    }
    let n = bundle.len();
    let mut g = LogitGrads {
        d_pi: Vec::new(),
        d_mu1: vec![0.0; n],
        d_mu0: vec![0.0; n],
        d_tau: vec![0.0; n],
    };
    let mut scratch = vec![0.0; n];

    let (l_tr, n_t) = subset_bce(&bundle.mu1_logit, y, w, 1, &mut scratch);
    axpy(&mut g.d_mu1, xw.w_tr, &scratch);
    scratch.fill(0.0);
    let (l_cr, n_c) = subset_bce(&bundle.mu0_logit, y, w, 0, &mut scratch);
    axpy(&mut g.d_mu0, xw.w_cr, &scratch);

    scratch.fill(0.0);
    let (l_cross_tr, _) = subset_bce(&bundle.cross_tr_logit, y, w, 1, &mut scratch);
    axpy(&mut g.d_mu0, xw.gamma1, &scratch);
    axpy(&mut g.d_tau, xw.gamma1, &scratch);

    scratch.fill(0.0);
    let (l_cross_cr, _) = subset_bce(&bundle.cross_cr_logit, y, w, 0, &mut scratch);
    axpy(&mut g.d_mu1, xw.gamma0, &scratch);
    axpy(&mut g.d_tau, -xw.gamma0, &scratch);

    Ok(LossOutput {
        total: xw.w_tr * l_tr + xw.w_cr * l_cr + xw.gamma1 * l_cross_tr + xw.gamma0 * l_cross_cr,
        components: LossComponents {
            l_tr,
            l_cr,
            l_cross_tr,
            l_cross_cr,
            ..Default::default()
        },
        diag: SubsetDiag {
            empty_treated: n_t == 0,
            empty_control: n_c == 0,
        },
        grads: g,
    })
}

/// Combined loss: the entire-space terms plus the cross counterfactual terms;
/// the plain subset response losses are absent by construction.
pub fn loss_descn(
    bundle: &ForwardBundle,
    y: &[u8],
    w: &[u8],
    weights: &LossWeights,
) -> Result<LossOutput> {
    if !bundle.has_tau() {
        return Err(Error::shape("combined loss needs a pseudo-effect head"));
    }
    let esn = loss_esn(bundle, y, w, weights)?;
    let n = bundle.len();
    let mut g = esn.grads;
    g.d_tau = vec![0.0; n];
    let mut scratch = vec![0.0; n];

    let (l_cross_tr, n_t) = subset_bce(&bundle.cross_tr_logit, y, w, 1, &mut scratch);
    axpy(&mut g.d_mu0, weights.gamma1, &scratch);
    axpy(&mut g.d_tau, weights.gamma1, &scratch);

    scratch.fill(0.0);
    let (l_cross_cr, n_c) = subset_bce(&bundle.cross_cr_logit, y, w, 0, &mut scratch);
    axpy(&mut g.d_mu1, weights.gamma0, &scratch);
    axpy(&mut g.d_tau, -weights.gamma0, &scratch);

    Ok(LossOutput {
        total: esn.total + weights.gamma1 * l_cross_tr + weights.gamma0 * l_cross_cr,
        components: LossComponents {
            l_cross_tr,
            l_cross_cr,
            ..esn.components
        },
        diag: SubsetDiag {
            empty_treated: n_t == 0,
            empty_control: n_c == 0,
        },
        grads: g,
    })
}

/// Two-headed baseline loss: unit-weight subset response losses only.
pub fn loss_tarnet(bundle: &ForwardBundle, y: &[u8], w: &[u8]) -> Result<LossOutput> {
    check_labels(bundle, y, w)?;
    let n = bundle.len();
    let mut g = LogitGrads {
        d_pi: Vec::new(),
        d_mu1: vec![0.0; n],
        d_mu0: vec![0.0; n],
        d_tau: Vec::new(),
    };
    let mut scratch = vec![0.0; n];
    let (l_tr, n_t) = subset_bce(&bundle.mu1_logit, y, w, 1, &mut scratch);
    axpy(&mut g.d_mu1, 1.0, &scratch);
    scratch.fill(0.0);
    let (l_cr, n_c) = subset_bce(&bundle.mu0_logit, y, w, 0, &mut scratch);
    axpy(&mut g.d_mu0, 1.0, &scratch);
    Ok(LossOutput {
        total: l_tr + l_cr,
        components: LossComponents {
            l_tr,
            l_cr,
            ..Default::default()
        },
        diag: SubsetDiag {
            empty_treated: n_t == 0,
            empty_control: n_c == 0,
        },
        grads: g,
    })
}

/// Dispatches to the loss that trains `kind`.
pub fn loss_for_kind(
    kind: ModelKind,
    bundle: &ForwardBundle,
    y: &[u8],
    w: &[u8],
    weights: &LossWeights,
) -> Result<LossOutput> {
    match kind {
        ModelKind::Tarnet => loss_tarnet(bundle, y, w),
        ModelKind::EsnTarnet | ModelKind::EsnOnly => loss_esn(bundle, y, w, weights),
        ModelKind::XNetwork => loss_xnetwork(
            bundle,
            y,
            w,
            &XNetworkWeights {
                w_tr: 1.0,
                w_cr: 1.0,
                gamma1: weights.gamma1,
                gamma0: weights.gamma0,
            },
        ),
        ModelKind::Descn => loss_descn(bundle, y, w, weights),
    }
}

/// Gradients for every component of a model.
#[derive(Debug)]
pub struct ModelGrads {
    trunk: GradStore,
    pi: Option<GradStore>,
    mu1: GradStore,
    mu0: GradStore,
    tau: Option<GradStore>,
}

impl ModelGrads {
    /// Flat view matching [`FlatParams`] indexing on [`ModelParams`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.trunk.flatten();
        if let Some(pi) = &self.pi {
            out.extend(pi.flatten());
        }
        out.extend(self.mu1.flatten());
        out.extend(self.mu0.flatten());
        if let Some(tau) = &self.tau {
            out.extend(tau.flatten());
        }
        out
    }
}

/// Backpropagates per-sample logit gradients through heads and trunk.
pub fn backward_model(
    params: &ModelParams,
    tape: &ModelTape,
    grads: &LogitGrads,
) -> Result<ModelGrads> {
    let n = tape.trunk.output().rows();
    let shared_dim = params.trunk.output_dim();
    let mut trunk_upstream = Mat::zeros(n, shared_dim);

    let mut run_head = |head: &ParamStore, head_tape: &Tape, d: &[f64]| -> Result<GradStore> {
        if d.is_empty() {
            return Ok(GradStore::zeros_like(head));
        }
        let upstream = Mat::column_vector(d);
        let (gs, d_input) = head.backward(head_tape, &upstream)?;
        for r in 0..n {
            let acc = trunk_upstream.row_mut(r);
            for (a, v) in acc.iter_mut().zip(d_input.row(r)) {
                *a += v;
            }
        }
        Ok(gs)
    };

    let pi = match (&params.pi, &tape.pi) {
        (Some(p), Some(t)) => Some(run_head(p, t, &grads.d_pi)?),
        (None, None) => None,
        _ => return Err(Error::shape("tape does not match model heads")),
    };
    let mu1 = run_head(&params.mu1, &tape.mu1, &grads.d_mu1)?;
    let mu0 = run_head(&params.mu0, &tape.mu0, &grads.d_mu0)?;
    let tau = match (&params.tau, &tape.tau) {
        (Some(p), Some(t)) => Some(run_head(p, t, &grads.d_tau)?),
        (None, None) => None,
        _ => return Err(Error::shape("tape does not match model heads")),
    };
    let (trunk, _) = params.trunk.backward(&tape.trunk, &trunk_upstream)?;
    Ok(ModelGrads {
        trunk,
        pi,
        mu1,
        mu0,
        tau,
    })
}

/// Loss trajectory of one training run.
#[derive(Clone, Debug, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

/// Batch-size-weighted means of the loss and its components over one epoch.
#[derive(Clone, Debug)]
pub struct EpochStats {
    pub epoch: usize,
    /// Learning rate in effect during this epoch.
    pub lr: f64,
    pub total: f64,
    pub components: LossComponents,
    pub empty_treated_batches: usize,
    pub empty_control_batches: usize,
}

struct OptStates {
    states: Vec<OptimizerState>,
}

impl OptStates {
    fn new(params: &ModelParams, cfg: &TrainConfig) -> Result<Self> {
        let states = params
            .parts()
            .iter()
            .map(|p| OptimizerState::new(p, cfg.lr, cfg.decay, cfg.l2))
            .collect::<Result<_>>()?;
        Ok(OptStates { states })
    }

    fn step(&mut self, params: &mut ModelParams, grads: &ModelGrads) -> Result<()> {
        let mut g: Vec<&GradStore> = vec![&grads.trunk];
        if let Some(pi) = &grads.pi {
            g.push(pi);
        }
        g.push(&grads.mu1);
        g.push(&grads.mu0);
        if let Some(tau) = &grads.tau {
            g.push(tau);
        }
        for ((p, gs), st) in params.parts_mut().into_iter().zip(g).zip(&mut self.states) {
            optimizer_step(p, gs, st)?;
        }
        Ok(())
    }

    fn end_epoch(&mut self) {
        for s in &mut self.states {
            s.end_epoch();
        }
    }

    fn lr(&self) -> f64 {
        self.states[0].lr()
    }
}

/// Trains a model of `kind` on `data` under `cfg`.
///
/// Mini-batch order comes from the seeded shuffler in [`crate::data`]; with
/// `epochs = 0` the returned parameters equal the initialization. The run is
/// fully determined by `(kind, data, cfg)`.
pub fn train(
    kind: ModelKind,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    cfg.validate(kind)?;
    if data.is_empty() {
        return Err(Error::argument("training set is empty"));
    }
    let mut params = init_model(kind, data.num_features(), cfg)?;
    let mut states = OptStates::new(&params, cfg)?;
    let mut history = TrainHistory::default();
    let n = data.len();

    for epoch in 0..cfg.epochs {
        let batches = batch_iter(n, cfg.batch_size, cfg.seed, epoch)?;
        let lr = states.lr();
        let mut total_acc = 0.0;
        let mut comp_acc = [0.0; 7];
        let mut empty_t = 0usize;
        let mut empty_c = 0usize;
        for (bi, batch) in batches.iter().enumerate() {
            let bx = data.x.gather_rows(batch);
            let by: Vec<u8> = batch.iter().map(|&i| data.y[i]).collect();
            let bw: Vec<u8> = batch.iter().map(|&i| data.w[i]).collect();
            let (bundle, tape) = forward_heads_train(&params, &bx)?;
            let out = loss_for_kind(kind, &bundle, &by, &bw, &cfg.loss_weights)?;
            if !out.total.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            let grads = backward_model(&params, &tape, &out.grads)?;
            states.step(&mut params, &grads)?;
            let bn = batch.len() as f64;
            total_acc += out.total * bn;
            for (acc, v) in comp_acc.iter_mut().zip(out.components.values()) {
                *acc += v * bn;
            }
            empty_t += usize::from(out.diag.empty_treated);
            empty_c += usize::from(out.diag.empty_control);
        }
        states.end_epoch();
        let nf = n as f64;
        history.epochs.push(EpochStats {
            epoch,
            lr,
            total: total_acc / nf,
            components: LossComponents {
                l_pi: comp_acc[0] / nf,
                l_estr: comp_acc[1] / nf,
                l_escr: comp_acc[2] / nf,
                l_tr: comp_acc[3] / nf,
                l_cr: comp_acc[4] / nf,
                l_cross_tr: comp_acc[5] / nf,
                l_cross_cr: comp_acc[6] / nf,
            },
            empty_treated_batches: empty_t,
            empty_control_batches: empty_c,
        });
    }
    Ok((params, history))
}

/// Lower clamp on the propensity used by the entire-space ratio readout.
pub const ESN_RATIO_PI_CLAMP: f64 = 1e-3;

/// Per-sample effect scores for a trained model.
pub fn predict_ite(params: &ModelParams, x: &Mat, mode: IteMode) -> Result<Vec<f64>> {
    let bundle = forward_heads(params, x)?;
    predict_from_bundle(&bundle, mode)
}

/// Effect scores from an already-computed forward bundle.
pub fn predict_from_bundle(bundle: &ForwardBundle, mode: IteMode) -> Result<Vec<f64>> {
    match mode {
        IteMode::HeadDiff => Ok(bundle
            .mu1_hat
            .iter()
            .zip(&bundle.mu0_hat)
            .map(|(m1, m0)| m1 - m0)
            .collect()),
        IteMode::Pte => {
            if !bundle.has_tau() {
                return Err(Error::argument("ite mode `pte` needs a pseudo-effect head"));
            }
            Ok(bundle.tau_hat.iter().map(|t| 2.0 * t - 1.0).collect())
        }
        IteMode::EsnRatio => {
            if !bundle.has_pi() {
                return Err(Error::argument(
                    "ite mode `esn_ratio` needs a propensity head",
                ));
            }
            Ok((0..bundle.len())
                .map(|i| {
                    let pi = bundle.pi_hat[i].clamp(ESN_RATIO_PI_CLAMP, 1.0 - ESN_RATIO_PI_CLAMP);
                    bundle.estr_log[i].exp() / pi - bundle.escr_log[i].exp() / (1.0 - pi)
                })
                .collect())
        }
    }
}
