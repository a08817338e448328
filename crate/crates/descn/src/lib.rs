//! Uplift modeling with entire-space cross networks.
//!
//! This crate implements a family of multi-task neural uplift models over a
//! small, fully deterministic dense-network engine:
//!
//! - **tarnet** — a shared trunk with treated/control response heads trained
//!   on their own subsets;
//! - **esn_tarnet** / **esn_only** — a propensity head joins the trunk and the
//!   response heads are trained through the entire-space factorization
//!   `P(y, w=1|x) = mu1 * pi` and `P(y, w=0|x) = mu0 * (1 - pi)`, so every
//!   sample informs both responses;
//! - **x_network** — a pseudo-effect head couples the response heads through
//!   logit-space cross counterfactuals;
//! - **descn** — the entire-space loss applied on top of the cross network.
//!
//! Around the models: a synthetic generator with confounded treatment
//! assignment and known per-sample effects ([`dgp`]), CSV dataset handling
//! with train-fitted standardization ([`data`]), evaluation metrics with an
//! independent quadratic oracle for the uplift curve ([`metrics`]), and a
//! seeded experiment harness ([`experiment`]).
//!
//! Everything runs in `f64` and every random draw flows through seeded
//! ChaCha8 streams, so training runs, generated datasets, and experiment
//! reports reproduce bit for bit on one machine.
//!
//! The `examples/` directory walks through each capability; `cargo run
//! --example compare_models` is a good starting point. The `descn` binary
//! exposes the same flows as `generate`, `train`, `evaluate`, and
//! `experiment` subcommands.

pub mod artifact;
pub mod cli;
pub mod data;
pub mod dgp;
pub mod error;
pub mod experiment;
pub mod mat;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
pub use mat::Mat;

pub use data::{
    batch_iter, fit_standardizer, read_table, write_table, Dataset, Standardizer, TableSchema,
    Truth, TruthColumns,
};
pub use dgp::{default_config, dgp_surfaces, generate, DgpConfig, Scenario, Surfaces};
pub use metrics::{
    aggregate, ate_error, att_error, auuc, auuc_oracle, pehe, AggregateReport, MetricAgg,
    RunMetrics,
};
pub use model::{
    forward_heads, init_model, loss_descn, loss_esn, loss_for_kind, loss_tarnet, loss_xnetwork,
    predict_ite, train, ForwardBundle, IteMode, LossComponents, LossOutput, LossWeights, ModelKind,
    ModelParams, TrainConfig, TrainHistory, XNetworkWeights,
};
pub use nn::{
    bce_with_logits, finite_diff_check, init_params, log_sigmoid, optimizer_step, sigmoid,
    Activation, FlatParams, GradStore, LayerSpec, OptimizerState, ParamStore,
};
