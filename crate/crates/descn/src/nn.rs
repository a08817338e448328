//! Minimal dense-network engine.
//!
//! Feed-forward chains of affine layers with ELU or identity activations,
//! exact reverse-mode gradients, numerically stable logistic losses, an
//! adaptive-moment optimizer, and a finite-difference gradient checker.
//!
//! Everything runs in `f64`. Given the same seed and data, every operation
//! here is reproducible bit for bit on one machine.

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::rng::{seeded_rng, unit_f64};

/// Element-wise layer activation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    /// `z` for `z > 0`, `exp(z) - 1` otherwise.
    Elu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the post-activation value.
    ///
    /// For ELU, `a >= 0` iff `z >= 0`, and on the negative branch
    /// `d/dz elu(z) = exp(z) = a + 1`.
    fn grad_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Elu => {
                if a >= 0.0 {
                    1.0
                } else {
                    a + 1.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Elu => "elu",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "elu" => Ok(Activation::Elu),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::argument(format!("unknown activation `{other}`"))),
        }
    }
}

/// Shape and activation of one dense layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        LayerSpec {
            input_dim,
            output_dim,
            activation,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct DenseLayer {
    spec: LayerSpec,
    /// Row-major, shape `(output_dim, input_dim)`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// All trainable parameters of one feed-forward chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore {
    layers: Vec<DenseLayer>,
    rng_seed: u64,
}

/// Per-parameter gradients, shape-identical to a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct GradStore {
    d_weights: Vec<Vec<f64>>,
    d_bias: Vec<Vec<f64>>,
}

/// Cached activations from a forward pass, consumed by [`ParamStore::backward`].
#[derive(Clone, Debug)]
pub struct Tape {
    input: Mat,
    /// Post-activation output of each layer, in order.
    activations: Vec<Mat>,
}

impl Tape {
    /// Output of the final layer.
    pub fn output(&self) -> &Mat {
        self.activations.last().unwrap_or(&self.input)
    }
}

fn validate_chain(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::shape("network needs at least one layer"));
    }
    for spec in specs {
        if spec.input_dim == 0 || spec.output_dim == 0 {
            return Err(Error::shape("layer dims must be positive"));
        }
    }
    for (i, pair) in specs.windows(2).enumerate() {
        if pair[0].output_dim != pair[1].input_dim {
            return Err(Error::shape(format!(
                "layer {} outputs {} but layer {} expects {}",
                i,
                pair[0].output_dim,
                i + 1,
                pair[1].input_dim
            )));
        }
    }
    Ok(())
}

/// Initializes parameters for the given layer chain from `seed` alone.
///
/// Weights are fan-in-scaled uniform: each entry is drawn row-major (output
/// index outer, input index inner, layers in order) as
/// `limit * (2u - 1)` with `u` uniform in `[0,1)` and
/// `limit = sqrt(3 / input_dim)`, so `|w| <= sqrt(3 / input_dim)` always
/// holds. Biases start at zero and consume no draws.
pub fn init_params(specs: &[LayerSpec], seed: u64) -> Result<ParamStore> {
    validate_chain(specs)?;
    let mut rng = seeded_rng(seed);
    let layers = specs
        .iter()
        .map(|&spec| {
            let limit = (3.0 / spec.input_dim as f64).sqrt();
            let weights = (0..spec.input_dim * spec.output_dim)
                .map(|_| limit * (2.0 * unit_f64(&mut rng) - 1.0))
                .collect();
            DenseLayer {
                spec,
                weights,
                bias: vec![0.0; spec.output_dim],
            }
        })
        .collect();
    Ok(ParamStore {
        layers,
        rng_seed: seed,
    })
}

impl ParamStore {
    /// Rebuilds a store from serialized parts, validating shapes and finiteness.
    pub(crate) fn from_parts(
        specs: Vec<LayerSpec>,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
        rng_seed: u64,
    ) -> Result<Self> {
        validate_chain(&specs)?;
        if weights.len() != specs.len() || biases.len() != specs.len() {
            return Err(Error::shape("layer count mismatch in serialized params"));
        }
        let layers = specs
            .iter()
            .zip(weights)
            .zip(biases)
            .map(|((&spec, w), b)| {
                if w.len() != spec.input_dim * spec.output_dim || b.len() != spec.output_dim {
                    return Err(Error::shape(
                        "layer buffer size mismatch in serialized params",
                    ));
                }
                if w.iter().chain(&b).any(|v| !v.is_finite()) {
                    return Err(Error::Numeric(
                        "serialized params contain non-finite values".into(),
                    ));
                }
                Ok(DenseLayer {
                    spec,
                    weights: w,
                    bias: b,
                })
            })
            .collect::<Result<_>>()?;
        Ok(ParamStore { layers, rng_seed })
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().spec.output_dim
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Weight bound of the init scheme for layer `l`: `sqrt(3 / input_dim)`.
    pub fn init_weight_bound(&self, layer: usize) -> f64 {
        (3.0 / self.layers[layer].spec.input_dim as f64).sqrt()
    }

    pub(crate) fn layer_weights(&self, layer: usize) -> (&[f64], &[f64]) {
        let l = &self.layers[layer];
        (&l.weights, &l.bias)
    }

    #[cfg(test)]
    pub(crate) fn set_layer(&mut self, layer: usize, weights: Vec<f64>, bias: Vec<f64>) {
        self.layers[layer].weights = weights;
        self.layers[layer].bias = bias;
    }

    fn apply_layer(&self, layer: &DenseLayer, input: &Mat) -> Mat {
        let mut out = Mat::zeros(input.rows(), layer.spec.output_dim);
        for r in 0..input.rows() {
            let x = input.row(r);
            let y = out.row_mut(r);
            for (o, yo) in y.iter_mut().enumerate() {
                let row = &layer.weights[o * layer.spec.input_dim..(o + 1) * layer.spec.input_dim];
                let mut z = layer.bias[o];
                for (wi, xi) in row.iter().zip(x) {
                    z += wi * xi;
                }
                *yo = layer.spec.activation.apply(z);
            }
        }
        out
    }

    /// Evaluates the chain on a batch, row per sample.
    pub fn forward(&self, x: &Mat) -> Result<Mat> {
        self.check_input(x)?;
        let mut current = x.clone();
        for layer in &self.layers {
            current = self.apply_layer(layer, &current);
        }
        Ok(current)
    }

    /// Forward pass that caches per-layer activations for [`Self::backward`].
    pub fn forward_train(&self, x: &Mat) -> Result<Tape> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut current = x;
        let mut owned;
        for layer in &self.layers {
            owned = self.apply_layer(layer, current);
            activations.push(owned);
            current = activations.last().unwrap();
        }
        Ok(Tape {
            input: x.clone(),
            activations,
        })
    }

    fn check_input(&self, x: &Mat) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "input has {} features, network expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Reverse-mode gradients of a scalar loss through the chain.
    ///
    /// `upstream` is `dL/d(output)` per sample and output unit; any loss mean
    /// factors must already be folded into it. Returns parameter gradients and
    /// `dL/d(input)` so chained networks can keep propagating.
    pub fn backward(&self, tape: &Tape, upstream: &Mat) -> Result<(GradStore, Mat)> {
        if tape.activations.len() != self.layers.len() || tape.input.cols() != self.input_dim() {
            return Err(Error::shape(
                "tape does not match this network; run forward_train on the same params first",
            ));
        }
        let n = tape.input.rows();
        if upstream.rows() != n || upstream.cols() != self.output_dim() {
            return Err(Error::shape(format!(
                "upstream gradient is {}x{}, expected {}x{}",
                upstream.rows(),
                upstream.cols(),
                n,
                self.output_dim()
            )));
        }

        let mut d_weights = Vec::with_capacity(self.layers.len());
        let mut d_bias = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            d_weights.push(vec![0.0; layer.weights.len()]);
            d_bias.push(vec![0.0; layer.bias.len()]);
        }

        let mut delta = upstream.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let out = &tape.activations[l];
            let input = if l == 0 {
                &tape.input
            } else {
                &tape.activations[l - 1]
            };
            let in_dim = layer.spec.input_dim;
            let mut prev_delta = Mat::zeros(n, in_dim);
            for r in 0..n {
                let x = input.row(r);
                let a = out.row(r);
                let d = delta.row(r);
                let prev = prev_delta.row_mut(r);
                for o in 0..layer.spec.output_dim {
                    let dz = d[o] * layer.spec.activation.grad_from_output(a[o]);
                    if dz == 0.0 {
                        continue;
                    }
                    d_bias[l][o] += dz;
                    let w_row = &layer.weights[o * in_dim..(o + 1) * in_dim];
                    let g_row = &mut d_weights[l][o * in_dim..(o + 1) * in_dim];
                    for i in 0..in_dim {
                        g_row[i] += dz * x[i];
                        prev[i] += dz * w_row[i];
                    }
                }
            }
            delta = prev_delta;
        }
        Ok((GradStore { d_weights, d_bias }, delta))
    }
}

impl GradStore {
    pub fn zeros_like(params: &ParamStore) -> Self {
        GradStore {
            d_weights: params
                .layers
                .iter()
                .map(|l| vec![0.0; l.weights.len()])
                .collect(),
            d_bias: params
                .layers
                .iter()
                .map(|l| vec![0.0; l.bias.len()])
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.d_weights
            .iter()
            .chain(self.d_bias.iter())
            .all(|v| v.iter().all(|g| g.is_finite()))
    }

    pub fn layer_grads(&self, layer: usize) -> (&[f64], &[f64]) {
        (&self.d_weights[layer], &self.d_bias[layer])
    }

    /// Flat view matching [`FlatParams`] indexing on the owning store.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.d_weights.iter().zip(&self.d_bias) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }
}

/// Flat indexed access over all parameters: per layer, weights row-major
/// first, then biases.
pub trait FlatParams {
    fn flat_len(&self) -> usize;
    fn flat_get(&self, idx: usize) -> f64;
    fn flat_set(&mut self, idx: usize, value: f64);
}

impl FlatParams for ParamStore {
    fn flat_len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    fn flat_get(&self, mut idx: usize) -> f64 {
        for l in &self.layers {
            if idx < l.weights.len() {
                return l.weights[idx];
            }
            idx -= l.weights.len();
            if idx < l.bias.len() {
                return l.bias[idx];
            }
            idx -= l.bias.len();
        }
        panic!("flat index out of range");
    }

    fn flat_set(&mut self, mut idx: usize, value: f64) {
        for l in &mut self.layers {
            if idx < l.weights.len() {
                l.weights[idx] = value;
                return;
            }
            idx -= l.weights.len();
            if idx < l.bias.len() {
                l.bias[idx] = value;
                return;
            }
            idx -= l.bias.len();
        }
        panic!("flat index out of range");
    }
}

/// `log(sigmoid(z))` without overflow for any finite `z`.
///
/// Uses `-ln(1 + e^-z)` for `z >= 0` and `z - ln(1 + e^z)` otherwise, so the
/// exponent argument is never positive.
pub fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross entropy against a raw logit,
/// `-(label log sigma(z) + (1 - label) log sigma(-z))`, stable for large `|z|`.
pub fn bce_with_logits(logit: f64, label: u8) -> f64 {
    if label == 1 {
        -log_sigmoid(logit)
    } else {
        -log_sigmoid(-logit)
    }
}

/// Adaptive-moment optimizer state with decoupled L2 weight decay.
///
/// One step applies, per parameter `p` with gradient `g`:
///
/// ```text
/// m <- 0.9 m + 0.1 g
/// v <- 0.999 v + 0.001 g^2
/// p <- p - lr * ( m / (1 - 0.9^t) ) / ( sqrt(v / (1 - 0.999^t)) + 1e-8 )
/// p <- p - lr * l2 * p_before_step        (weight matrices only)
/// ```
///
/// `end_epoch` multiplies the learning rate by `decay` once.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    m: GradStore,
    v: GradStore,
    step: u64,
    lr: f64,
    decay: f64,
    l2: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl OptimizerState {
    pub fn new(params: &ParamStore, lr: f64, decay: f64, l2: f64) -> Result<Self> {
        if lr.is_nan() || lr <= 0.0 {
            return Err(Error::argument("learning rate must be > 0"));
        }
        if decay.is_nan() || decay <= 0.0 || decay > 1.0 {
            return Err(Error::argument("decay must satisfy 0 < decay <= 1"));
        }
        if l2.is_nan() || l2 < 0.0 {
            return Err(Error::argument("l2 coefficient must be >= 0"));
        }
        Ok(OptimizerState {
            m: GradStore::zeros_like(params),
            v: GradStore::zeros_like(params),
            step: 0,
            lr,
            decay,
            l2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies the per-epoch learning-rate decay.
    pub fn end_epoch(&mut self) {
        self.lr *= self.decay;
    }
}

/// One optimizer step. Rejects non-finite gradients before touching `params`.
pub fn optimizer_step(
    params: &mut ParamStore,
    grads: &GradStore,
    state: &mut OptimizerState,
) -> Result<()> {
    if grads.d_weights.len() != params.layers.len() {
        return Err(Error::shape("gradient store does not match params"));
    }
    for (l, layer) in params.layers.iter().enumerate() {
        if grads.d_weights[l].len() != layer.weights.len()
            || grads.d_bias[l].len() != layer.bias.len()
        {
            return Err(Error::shape(format!(
                "gradient shape mismatch at layer {l}"
            )));
        }
    }
    if !grads.is_finite() {
        return Err(Error::Numeric(
            "non-finite gradient in optimizer step".into(),
        ));
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for (l, layer) in params.layers.iter_mut().enumerate() {
        for (is_weight, values, g_all, m_all, v_all) in [
            (
                true,
                &mut layer.weights,
                &grads.d_weights[l],
                &mut state.m.d_weights[l],
                &mut state.v.d_weights[l],
            ),
            (
                false,
                &mut layer.bias,
                &grads.d_bias[l],
                &mut state.m.d_bias[l],
                &mut state.v.d_bias[l],
            ),
        ] {
            for i in 0..values.len() {
                let g = g_all[i];
                m_all[i] = state.beta1 * m_all[i] + (1.0 - state.beta1) * g;
                v_all[i] = state.beta2 * v_all[i] + (1.0 - state.beta2) * g * g;
                let m_hat = m_all[i] / bc1;
                let v_hat = v_all[i] / bc2;
                let before = values[i];
                let mut p = before - state.lr * m_hat / (v_hat.sqrt() + state.eps);
                if is_weight && state.l2 > 0.0 {
                    p -= state.lr * state.l2 * before;
                }
                values[i] = p;
            }
        }
    }
    Ok(())
}

/// Central-difference check of an analytic gradient.
///
/// `analytic` must be the flat gradient (see [`FlatParams`]) of `loss_fn` at
/// `params`. Per parameter the discrepancy is scored as
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1)`; the worst score is
/// returned. `loss_fn` must be deterministic and pure in the parameters.
pub fn finite_diff_check<P, F>(params: &P, analytic: &[f64], loss_fn: F, eps: f64) -> Result<f64>
where
    P: FlatParams + Clone,
    F: Fn(&P) -> f64,
{
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::argument("finite-difference eps must be > 0"));
    }
    if analytic.len() != params.flat_len() {
        return Err(Error::shape(format!(
            "analytic gradient has {} entries, params have {}",
            analytic.len(),
            params.flat_len()
        )));
    }
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = params.flat_get(i);
        probe.flat_set(i, orig + eps);
        let plus = loss_fn(&probe);
        probe.flat_set(i, orig - eps);
        let minus = loss_fn(&probe);
        probe.flat_set(i, orig);
        let numeric = (plus - minus) / (2.0 * eps);
        let denom = a.abs().max(numeric.abs()).max(1.0);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(i: usize, o: usize, act: Activation) -> LayerSpec {
        LayerSpec::new(i, o, act)
    }

    #[test]
    fn init_is_deterministic() {
        let specs = [spec(2, 3, Activation::Elu)];
        let a = init_params(&specs, 7).unwrap();
        let b = init_params(&specs, 7).unwrap();
        assert_eq!(a, b);
        let c = init_params(&specs, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_rejects_incompatible_dims() {
        let specs = [
            spec(2, 3, Activation::Elu),
            spec(4, 1, Activation::Identity),
        ];
        assert!(matches!(init_params(&specs, 0), Err(Error::Shape(_))));
    }

    #[test]
    fn init_weights_respect_fan_in_bound() {
        let specs = [
            spec(5, 128, Activation::Elu),
            spec(128, 128, Activation::Elu),
            spec(128, 1, Activation::Identity),
        ];
        let params = init_params(&specs, 1).unwrap();
        for l in 0..params.num_layers() {
            let bound = params.init_weight_bound(l);
            let (w, b) = params.layer_weights(l);
            assert!(w.iter().all(|x| x.abs() <= bound), "layer {l} beyond bound");
            assert!(b.iter().all(|&x| x == 0.0));
        }
        // Bound follows the documented formula directly.
        assert!((params.init_weight_bound(0) - (3.0f64 / 5.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn forward_zero_params_gives_zero_output() {
        let specs = [
            spec(3, 4, Activation::Elu),
            spec(4, 2, Activation::Identity),
        ];
        let mut params = init_params(&specs, 3).unwrap();
        for l in 0..params.num_layers() {
            let (w, b) = params.layer_weights(l);
            params.set_layer(l, vec![0.0; w.len()], vec![0.0; b.len()]);
        }
        let x = Mat::from_rows(&[vec![1.0, -2.0, 0.5], vec![3.0, 0.0, -1.0]]).unwrap();
        let y = params.forward(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_single_affine_layer() {
        let specs = [spec(1, 1, Activation::Identity)];
        let mut params = init_params(&specs, 0).unwrap();
        params.set_layer(0, vec![2.0], vec![1.0]);
        let y = params
            .forward(&Mat::from_rows(&[vec![3.0]]).unwrap())
            .unwrap();
        assert_eq!(y.get(0, 0), 7.0);
    }

    #[test]
    fn forward_rejects_dim_mismatch() {
        let params = init_params(&[spec(3, 2, Activation::Elu)], 0).unwrap();
        let x = Mat::zeros(1, 4);
        assert!(matches!(params.forward(&x), Err(Error::Shape(_))));
    }

    /// Straight-line scalar re-evaluation, independent of Mat and the layer loop.
    fn forward_oracle(params: &ParamStore, x: &[f64]) -> Vec<f64> {
        let mut a: Vec<f64> = x.to_vec();
        for l in 0..params.num_layers() {
            let s = params.specs()[l];
            let (w, b) = params.layer_weights(l);
            let mut next = vec![0.0; s.output_dim];
            for o in 0..s.output_dim {
                let mut z = b[o];
                for i in 0..s.input_dim {
                    z += w[o * s.input_dim + i] * a[i];
                }
                next[o] = match s.activation {
                    Activation::Elu => {
                        if z > 0.0 {
                            z
                        } else {
                            z.exp() - 1.0
                        }
                    }
                    Activation::Identity => z,
                };
            }
            a = next;
        }
        a
    }

    #[test]
    fn forward_matches_scalar_oracle() {
        let specs = [
            spec(4, 6, Activation::Elu),
            spec(6, 5, Activation::Elu),
            spec(5, 2, Activation::Identity),
        ];
        let params = init_params(&specs, 11).unwrap();
        let mut rng = seeded_rng(99);
        for _ in 0..20 {
            let x: Vec<f64> = (0..4).map(|_| 4.0 * unit_f64(&mut rng) - 2.0).collect();
            let batch = Mat::from_rows(std::slice::from_ref(&x)).unwrap();
            let got = params.forward(&batch).unwrap();
            let want = forward_oracle(&params, &x);
            for (g, w) in got.row(0).iter().zip(&want) {
                let denom = w.abs().max(1.0);
                assert!((g - w).abs() / denom < 1e-12, "got {g}, oracle {w}");
            }
        }
    }

    #[test]
    // Expected values frozen from 50-digit evaluations.
    #[allow(clippy::excessive_precision)]
    fn log_sigmoid_known_values() {
        assert!((log_sigmoid(0.0) - (-std::f64::consts::LN_2)).abs() < 1e-15);
        // Frozen from a 50-digit evaluation of ln(1/(1+exp(-z))).
        assert!((log_sigmoid(3.5) - (-0.02975041827262056519481117)).abs() < 1e-15);
        assert!((log_sigmoid(-2.25) - (-2.350206558916747211673153)).abs() < 1e-14);
        assert!((log_sigmoid(-1000.0) - (-1000.0)).abs() < 1e-9);
        assert!(log_sigmoid(700.0).is_finite());
        assert!(log_sigmoid(-700.0).is_finite());
    }

    #[test]
    // Expected values frozen from 50-digit evaluations.
    #[allow(clippy::excessive_precision)]
    fn bce_known_values() {
        assert!((bce_with_logits(0.0, 1) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bce_with_logits(40.0, 1).abs() < 1e-15);
        assert!(bce_with_logits(40.0, 1).is_finite());
        // Frozen from 50-digit evaluations.
        assert!((bce_with_logits(1.2, 0) - 1.463282467338031189187744).abs() < 1e-14);
        assert!((bce_with_logits(-0.7, 1) - 1.103186048885457893190906).abs() < 1e-14);
    }

    #[test]
    fn backward_rejects_foreign_tape() {
        let a = init_params(&[spec(3, 2, Activation::Elu)], 1).unwrap();
        let b = init_params(&[spec(4, 2, Activation::Elu)], 1).unwrap();
        let tape = a.forward_train(&Mat::zeros(2, 3)).unwrap();
        let upstream = Mat::zeros(2, 2);
        assert!(matches!(b.backward(&tape, &upstream), Err(Error::Shape(_))));
    }

    /// Mean of squared outputs as a simple scalar training loss.
    fn mean_sq_loss(params: &ParamStore, x: &Mat) -> f64 {
        let y = params.forward(x).unwrap();
        let n = (y.rows() * y.cols()) as f64;
        y.data().iter().map(|v| v * v).sum::<f64>() / n
    }

    fn mean_sq_grad(params: &ParamStore, x: &Mat) -> GradStore {
        let tape = params.forward_train(x).unwrap();
        let y = tape.output();
        let n = (y.rows() * y.cols()) as f64;
        let mut upstream = Mat::zeros(y.rows(), y.cols());
        for r in 0..y.rows() {
            for c in 0..y.cols() {
                upstream.set(r, c, 2.0 * y.get(r, c) / n);
            }
        }
        params.backward(&tape, &upstream).unwrap().0
    }

    #[test]
    fn backward_matches_finite_differences() {
        let specs = [
            spec(3, 5, Activation::Elu),
            spec(5, 4, Activation::Elu),
            spec(4, 2, Activation::Identity),
        ];
        let mut rng = seeded_rng(123);
        for trial in 0..5 {
            let params = init_params(&specs, 1000 + trial).unwrap();
            let rows: Vec<Vec<f64>> = (0..6)
                .map(|_| (0..3).map(|_| 2.0 * unit_f64(&mut rng) - 1.0).collect())
                .collect();
            let x = Mat::from_rows(&rows).unwrap();
            let analytic = mean_sq_grad(&params, &x).flatten();
            let err = finite_diff_check(&params, &analytic, |p| mean_sq_loss(p, &x), 1e-4).unwrap();
            assert!(err < 1e-4, "trial {trial}: err {err}");
        }
    }

    #[test]
    fn duplicated_batch_leaves_mean_gradients_unchanged() {
        let specs = [
            spec(2, 3, Activation::Elu),
            spec(3, 1, Activation::Identity),
        ];
        let params = init_params(&specs, 5).unwrap();
        let x = Mat::from_rows(&[vec![0.3, -1.1], vec![0.8, 0.2]]).unwrap();
        let x2 = Mat::from_rows(&[
            vec![0.3, -1.1],
            vec![0.8, 0.2],
            vec![0.3, -1.1],
            vec![0.8, 0.2],
        ])
        .unwrap();
        let g1 = mean_sq_grad(&params, &x).flatten();
        let g2 = mean_sq_grad(&params, &x2).flatten();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn unused_layer_gets_zero_grads() {
        // Two outputs, loss touches only the first: weights feeding the second
        // output receive zero gradient.
        let specs = [spec(2, 2, Activation::Identity)];
        let params = init_params(&specs, 9).unwrap();
        let x = Mat::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let tape = params.forward_train(&x).unwrap();
        let mut upstream = Mat::zeros(1, 2);
        upstream.set(0, 0, 1.0);
        let (grads, _) = params.backward(&tape, &upstream).unwrap();
        let (dw, db) = grads.layer_grads(0);
        assert_eq!(&dw[2..], &[0.0, 0.0]);
        assert_eq!(db[1], 0.0);
    }

    #[test]
    fn optimizer_zero_grads_is_a_no_op_on_params() {
        let params0 = init_params(&[spec(2, 2, Activation::Elu)], 4).unwrap();
        let mut params = params0.clone();
        let grads = GradStore::zeros_like(&params);
        let mut state = OptimizerState::new(&params, 0.01, 1.0, 0.0).unwrap();
        optimizer_step(&mut params, &grads, &mut state).unwrap();
        assert_eq!(params, params0);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn optimizer_l2_shrinks_weights_not_biases() {
        let mut params = init_params(&[spec(2, 2, Activation::Elu)], 4).unwrap();
        params.set_layer(0, vec![1.0, -2.0, 0.5, 3.0], vec![0.7, -0.4]);
        let before_w: Vec<f64> = params.layer_weights(0).0.to_vec();
        let grads = GradStore::zeros_like(&params);
        let mut state = OptimizerState::new(&params, 0.1, 1.0, 0.5).unwrap();
        optimizer_step(&mut params, &grads, &mut state).unwrap();
        let (w, b) = params.layer_weights(0);
        for (after, before) in w.iter().zip(&before_w) {
            assert!(after.abs() < before.abs());
            assert_eq!(after.signum(), before.signum());
        }
        assert_eq!(b, &[0.7, -0.4]);
    }

    #[test]
    fn optimizer_step_matches_hand_computation() {
        // Single 1x1 identity layer, one step from fresh moments.
        let mut params = init_params(&[spec(1, 1, Activation::Identity)], 0).unwrap();
        params.set_layer(0, vec![0.5], vec![0.2]);
        let mut grads = GradStore::zeros_like(&params);
        grads.d_weights[0][0] = 0.3;
        grads.d_bias[0][0] = -0.1;
        let (lr, l2) = (0.01, 0.02);
        let mut state = OptimizerState::new(&params, lr, 0.95, l2).unwrap();
        optimizer_step(&mut params, &grads, &mut state).unwrap();

        // Hand computation of the documented update, t = 1.
        let hand = |p: f64, g: f64, decay_l2: f64| {
            let m = 0.1 * g;
            let v = 0.001 * g * g;
            let m_hat = m / (1.0 - 0.9f64);
            let v_hat = v / (1.0 - 0.999f64);
            p - lr * m_hat / (v_hat.sqrt() + 1e-8) - lr * decay_l2 * p
        };
        let (w, b) = params.layer_weights(0);
        assert!((w[0] - hand(0.5, 0.3, l2)).abs() < 1e-15);
        assert!((b[0] - hand(0.2, -0.1, 0.0)).abs() < 1e-15);
    }

    #[test]
    fn optimizer_rejects_non_finite_grads() {
        let params0 = init_params(&[spec(2, 1, Activation::Identity)], 4).unwrap();
        let mut params = params0.clone();
        let mut grads = GradStore::zeros_like(&params);
        grads.d_weights[0][0] = f64::NAN;
        let mut state = OptimizerState::new(&params, 0.01, 1.0, 0.0).unwrap();
        assert!(matches!(
            optimizer_step(&mut params, &grads, &mut state),
            Err(Error::Numeric(_))
        ));
        assert_eq!(params, params0);
        assert_eq!(state.step_count(), 0);
    }

    #[test]
    fn epoch_decay_scales_learning_rate() {
        let params = init_params(&[spec(1, 1, Activation::Identity)], 0).unwrap();
        let mut state = OptimizerState::new(&params, 0.001, 0.95, 0.0).unwrap();
        state.end_epoch();
        state.end_epoch();
        assert!((state.lr() - 0.001 * 0.95 * 0.95).abs() < 1e-18);
    }

    #[test]
    fn finite_diff_check_exact_on_quadratic() {
        let mut params = init_params(&[spec(1, 2, Activation::Identity)], 2).unwrap();
        params.set_layer(0, vec![0.7, -1.3], vec![0.2, 0.4]);
        let loss = |p: &ParamStore| {
            (0..p.flat_len())
                .map(|i| p.flat_get(i) * p.flat_get(i))
                .sum::<f64>()
        };
        let analytic: Vec<f64> = (0..params.flat_len())
            .map(|i| 2.0 * params.flat_get(i))
            .collect();
        let err = finite_diff_check(&params, &analytic, loss, 1e-4).unwrap();
        assert!(err < 1e-8, "err {err}");
    }

    #[test]
    fn finite_diff_check_rejects_bad_eps() {
        let params = init_params(&[spec(1, 1, Activation::Identity)], 2).unwrap();
        let analytic = vec![0.0; params.flat_len()];
        assert!(matches!(
            finite_diff_check(&params, &analytic, |_| 0.0, 0.0),
            Err(Error::Argument(_))
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn logistic_primitives_stay_finite(z in -700.0f64..700.0) {
                let ls = log_sigmoid(z);
                prop_assert!(ls.is_finite());
                prop_assert!(ls <= 0.0);
                for label in [0u8, 1] {
                    let b = bce_with_logits(z, label);
                    prop_assert!(b.is_finite());
                    prop_assert!(b >= 0.0);
                }
            }

            #[test]
            fn log_sigmoid_complements_compose(z in -30.0f64..30.0) {
                // log sigma(z) + log sigma(-z) = log(sigma(z) * (1 - sigma(z))).
                let lhs = log_sigmoid(z) + log_sigmoid(-z);
                let rhs = (sigmoid(z) * sigmoid(-z)).ln();
                prop_assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
            }
        }
    }
}
