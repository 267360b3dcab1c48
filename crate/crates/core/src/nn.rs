//! Fixed-topology multilayer perceptrons with hand-derived backpropagation,
//! Adam, and polyak target tracking.
//!
//! Networks operate on row-major batches: an input of shape `batch x in`
//! produces an output of shape `batch x out`. Hidden layers use the
//! rectifier; the output activation is chosen per network.

use std::fmt::{Debug, Display};
use std::sync::atomic::{AtomicU64, Ordering};

use log::warn;
use ndarray::{Array1, Array2, ArrayView2, Axis, LinalgScalar, ScalarOperand, Zip};
use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{QtaError, Result};
use crate::rng::Rng;

/// Floating-point element type of a network.
pub trait Scalar:
    LinalgScalar + ScalarOperand + Float + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync
{
    const TAG: &'static str;

    fn from_f64_lossy(x: f64) -> Self;

    fn to_le_bytes_vec(self, out: &mut Vec<u8>);

    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const TAG: &'static str = "f32";

    fn from_f64_lossy(x: f64) -> Self {
        x as f32
    }

    fn to_le_bytes_vec(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const TAG: &'static str = "f64";

    fn from_f64_lossy(x: f64) -> Self {
        x
    }

    fn to_le_bytes_vec(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
    }
}

#[inline]
pub(crate) fn cast<F: Scalar>(x: f64) -> F {
    F::from_f64_lossy(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply<F: Scalar>(self, z: &mut Array2<F>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => z.mapv_inplace(|v| if v > F::zero() { v } else { F::zero() }),
            Activation::Tanh => z.mapv_inplace(|v| v.tanh()),
        }
    }

    /// Multiplies `upstream` by the derivative, given pre-activation `z` and
    /// post-activation `a`.
    fn backprop<F: Scalar>(self, upstream: &mut Array2<F>, z: &Array2<F>, a: &Array2<F>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => Zip::from(upstream).and(z).for_each(|u, &zv| {
                if zv <= F::zero() {
                    *u = F::zero();
                }
            }),
            Activation::Tanh => Zip::from(upstream)
                .and(a)
                .for_each(|u, &av| *u = *u * (F::one() - av * av)),
        }
    }
}

/// One affine layer; `weight` is `in x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Scalar> Layer<F> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.weight.dim()
    }

    fn zeros_like(&self) -> Self {
        let (i, o) = self.shape();
        Self::zeros(i, o)
    }

    fn all_finite(&self) -> bool {
        self.weight.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

/// Per-layer parameter gradients, laid out like the network.
pub type Gradients<F> = Vec<Layer<F>>;

pub fn gradients_finite<F: Scalar>(grads: &Gradients<F>) -> bool {
    grads.iter().all(Layer::all_finite)
}

static NEXT_NET_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_NET_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug)]
pub struct Mlp<F> {
    layers: Vec<Layer<F>>,
    output: Activation,
    id: u64,
    generation: u64,
}

impl<F: Scalar> Clone for Mlp<F> {
    fn clone(&self) -> Self {
        Self {
            layers: self.layers.clone(),
            output: self.output,
            id: fresh_id(),
            generation: 0,
        }
    }
}

impl<F: Scalar> PartialEq for Mlp<F> {
    fn eq(&self, other: &Self) -> bool {
        self.output == other.output && self.layers == other.layers
    }
}

/// Activations recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<F> {
    net_id: u64,
    generation: u64,
    /// Input of every evaluated layer.
    inputs: Vec<Array2<F>>,
    /// Pre-activation of every evaluated layer.
    pre: Vec<Array2<F>>,
    /// Output of the last evaluated layer.
    output: Array2<F>,
    latent_only: bool,
}

impl<F> ForwardCache<F> {
    pub fn output(&self) -> &Array2<F> {
        &self.output
    }
}

impl<F: Scalar> Mlp<F> {
    /// Fan-in uniform initialisation; the final layer is scaled by `final_scale`.
    pub fn new(sizes: &[usize], output: Activation, final_scale: f64, rng: &mut Rng) -> Result<Self> {
        let mut net = Self::zeros(sizes, output)?;
        let n = net.layers.len();
        for (l, layer) in net.layers.iter_mut().enumerate() {
            let fan_in = layer.weight.nrows() as f64;
            let mut bound = 1.0 / fan_in.sqrt();
            if l + 1 == n {
                bound *= final_scale;
            }
            layer
                .weight
                .mapv_inplace(|_| cast(rng.random_range(-bound..=bound)));
            layer.bias.mapv_inplace(|_| cast(rng.random_range(-bound..=bound)));
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize], output: Activation) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(QtaError::invalid("sizes", "need at least input and output sizes"));
        }
        if sizes.contains(&0) {
            return Err(QtaError::invalid("sizes", "layer sizes must be positive"));
        }
        let layers = sizes
            .windows(2)
            .map(|w| Layer::zeros(w[0], w[1]))
            .collect();
        Ok(Self {
            layers,
            output,
            id: fresh_id(),
            generation: 0,
        })
    }

    pub fn from_layers(layers: Vec<Layer<F>>, output: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(QtaError::invalid("layers", "empty"));
        }
        for pair in layers.windows(2) {
            if pair[0].shape().1 != pair[1].shape().0 {
                return Err(QtaError::LayoutMismatch(format!(
                    "layer output {} feeds input {}",
                    pair[0].shape().1,
                    pair[1].shape().0
                )));
            }
        }
        if layers.iter().any(|l| l.bias.len() != l.shape().1) {
            return Err(QtaError::LayoutMismatch("bias length".into()));
        }
        Ok(Self {
            layers,
            output,
            id: fresh_id(),
            generation: 0,
        })
    }

    pub fn layers(&self) -> &[Layer<F>] {
        &self.layers
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].shape().0
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].shape().1
    }

    pub fn latent_dim(&self) -> Option<usize> {
        (self.layers.len() >= 2).then(|| self.layers[self.layers.len() - 1].shape().0)
    }

    /// `[in, hidden.., out]`
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(|l| l.shape().1));
        sizes
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(Layer::all_finite)
    }

    fn touch(&mut self) {
        self.generation += 1;
    }

    fn check_input(&self, x: &ArrayView2<F>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(QtaError::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.ncols(),
            });
        }
        Ok(())
    }

    fn run(&self, x: ArrayView2<F>, count: usize, record: bool) -> ForwardCache<F> {
        let mut inputs = Vec::new();
        let mut pre = Vec::new();
        let mut a = x.to_owned();
        for (l, layer) in self.layers[..count].iter().enumerate() {
            let mut z = a.dot(&layer.weight);
            let act = if l + 1 == self.layers.len() {
                self.output
            } else {
                Activation::Relu
            };
            if record {
                z.zip_mut_with(&layer.bias, |a, &b| *a = *a + b);
                pre.push(z.clone());
                inputs.push(std::mem::replace(&mut a, Array2::zeros((0, 0))));
                act.apply(&mut z);
            } else if act == Activation::Relu {
                z.zip_mut_with(&layer.bias, |a, &b| {
                    let v = *a + b;
                    *a = if v > F::zero() { v } else { F::zero() };
                });
            } else {
                z.zip_mut_with(&layer.bias, |a, &b| *a = *a + b);
                act.apply(&mut z);
            }
            a = z;
        }
        ForwardCache {
            net_id: self.id,
            generation: self.generation,
            inputs,
            pre,
            output: a,
            latent_only: count < self.layers.len(),
        }
    }

    pub fn forward(&self, x: ArrayView2<F>) -> Result<(Array2<F>, ForwardCache<F>)> {
        self.check_input(&x)?;
        let cache = self.run(x, self.layers.len(), true);
        Ok((cache.output.clone(), cache))
    }

    /// Output only, without recording activations.
    pub fn predict(&self, x: ArrayView2<F>) -> Result<Array2<F>> {
        self.check_input(&x)?;
        Ok(self.run(x, self.layers.len(), false).output)
    }

    /// Post-activation of the last hidden layer.
    pub fn forward_to_latent(&self, x: ArrayView2<F>) -> Result<(Array2<F>, ForwardCache<F>)> {
        if self.layers.len() < 2 {
            return Err(QtaError::NoHiddenLayer);
        }
        self.check_input(&x)?;
        let cache = self.run(x, self.layers.len() - 1, true);
        Ok((cache.output.clone(), cache))
    }

    pub fn latent(&self, x: ArrayView2<F>) -> Result<Array2<F>> {
        if self.layers.len() < 2 {
            return Err(QtaError::NoHiddenLayer);
        }
        self.check_input(&x)?;
        Ok(self.run(x, self.layers.len() - 1, false).output)
    }

    /// Applies only the final layer to a latent batch.
    pub fn final_head(&self, latent: ArrayView2<F>) -> Result<Array2<F>> {
        let layer = &self.layers[self.layers.len() - 1];
        if latent.ncols() != layer.shape().0 {
            return Err(QtaError::DimensionMismatch {
                expected: layer.shape().0,
                actual: latent.ncols(),
            });
        }
        let mut z = latent.dot(&layer.weight);
        z.zip_mut_with(&layer.bias, |a, &b| *a = *a + b);
        self.output.apply(&mut z);
        Ok(z)
    }

    fn check_cache(&self, cache: &ForwardCache<F>, dy: &Array2<F>) -> Result<()> {
        if cache.net_id != self.id || cache.generation != self.generation {
            return Err(QtaError::StaleCache);
        }
        if dy.dim() != cache.output.dim() {
            return Err(QtaError::DimensionMismatch {
                expected: cache.output.ncols(),
                actual: dy.ncols(),
            });
        }
        Ok(())
    }

    /// Parameter gradients and input gradient for upstream gradient `dy`.
    ///
    /// With a cache from [`Mlp::forward_to_latent`], `dy` is the gradient
    /// with respect to the latent and the final layer's gradient is zero.
    pub fn backward(&self, cache: &ForwardCache<F>, dy: &Array2<F>) -> Result<(Gradients<F>, Array2<F>)> {
        self.check_cache(cache, dy)?;
        let mut grads: Gradients<F> = self.layers.iter().map(Layer::zeros_like).collect();
        let dx = self.backprop(cache, dy, Some(&mut grads));
        Ok((grads, dx))
    }

    /// Input gradient only.
    pub fn backward_input(&self, cache: &ForwardCache<F>, dy: &Array2<F>) -> Result<Array2<F>> {
        self.check_cache(cache, dy)?;
        Ok(self.backprop(cache, dy, None))
    }

    fn backprop(
        &self,
        cache: &ForwardCache<F>,
        dy: &Array2<F>,
        mut grads: Option<&mut Gradients<F>>,
    ) -> Array2<F> {
        let count = cache.inputs.len();
        let mut upstream = dy.clone();
        for l in (0..count).rev() {
            let act = if l + 1 == self.layers.len() {
                self.output
            } else {
                Activation::Relu
            };
            let post = if l + 1 == count {
                &cache.output
            } else {
                &cache.inputs[l + 1]
            };
            act.backprop(&mut upstream, &cache.pre[l], post);
            if let Some(g) = grads.as_deref_mut() {
                g[l].weight = cache.inputs[l].t().dot(&upstream);
                g[l].bias = upstream.sum_axis(Axis(0));
            }
            upstream = upstream.dot(&self.layers[l].weight.t());
        }
        debug_assert!(!cache.latent_only || count + 1 == self.layers.len());
        upstream
    }

    pub fn to_params(&self) -> ParamVector<F> {
        let mut values = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            values.extend(layer.weight.iter().copied());
            values.extend(layer.bias.iter().copied());
        }
        ParamVector {
            shapes: self.layers.iter().map(Layer::shape).collect(),
            values,
        }
    }

    pub fn set_params(&mut self, params: &ParamVector<F>) -> Result<()> {
        let shapes: Vec<_> = self.layers.iter().map(Layer::shape).collect();
        if shapes != params.shapes || params.values.len() != self.param_count() {
            return Err(QtaError::LayoutMismatch(format!(
                "network {:?} vs params {:?}",
                shapes, params.shapes
            )));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            for w in layer.weight.iter_mut() {
                *w = params.values[offset];
                offset += 1;
            }
            for b in layer.bias.iter_mut() {
                *b = params.values[offset];
                offset += 1;
            }
        }
        self.touch();
        Ok(())
    }

    pub fn from_params(params: &ParamVector<F>, output: Activation) -> Result<Self> {
        let layers = params
            .shapes
            .iter()
            .map(|&(i, o)| Layer::zeros(i, o))
            .collect();
        let mut net = Self::from_layers(layers, output)?;
        net.set_params(params)?;
        Ok(net)
    }

    /// `self <- rho * self + (1 - rho) * online`
    pub fn polyak_from(&mut self, online: &Mlp<F>, rho: F) -> Result<()> {
        check_rho(rho)?;
        if self.sizes() != online.sizes() {
            return Err(QtaError::LayoutMismatch("polyak between different topologies".into()));
        }
        let keep = F::one() - rho;
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            Zip::from(&mut t.weight)
                .and(&o.weight)
                .for_each(|t, &o| *t = polyak_mix(*t, o, rho, keep));
            Zip::from(&mut t.bias)
                .and(&o.bias)
                .for_each(|t, &o| *t = polyak_mix(*t, o, rho, keep));
        }
        self.touch();
        Ok(())
    }

    /// Copies parameters from a network of identical topology.
    pub fn copy_from(&mut self, other: &Mlp<F>) -> Result<()> {
        self.set_params(&other.to_params())
    }

    pub fn cast<G: Scalar>(&self) -> Mlp<G> {
        let layers = self
            .layers
            .iter()
            .map(|l| Layer {
                weight: l.weight.mapv(|v| cast::<G>(v.to_f64().unwrap_or(f64::NAN))),
                bias: l.bias.mapv(|v| cast::<G>(v.to_f64().unwrap_or(f64::NAN))),
            })
            .collect();
        Mlp {
            layers,
            output: self.output,
            id: fresh_id(),
            generation: 0,
        }
    }
}

fn check_rho<F: Scalar>(rho: F) -> Result<()> {
    if !(rho >= F::zero() && rho <= F::one()) {
        return Err(QtaError::invalid("rho", "must lie in [0, 1]"));
    }
    Ok(())
}

/// Flat parameter view with a stable ordering: per layer, weights row-major
/// then bias.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector<F> {
    pub shapes: Vec<(usize, usize)>,
    pub values: Vec<F>,
}

impl<F: Scalar> ParamVector<F> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `target <- rho * target + (1 - rho) * online`, elementwise.
pub fn polyak_update<F: Scalar>(target: &mut ParamVector<F>, online: &ParamVector<F>, rho: F) -> Result<()> {
    check_rho(rho)?;
    if target.shapes != online.shapes || target.values.len() != online.values.len() {
        return Err(QtaError::LayoutMismatch("polyak between different layouts".into()));
    }
    let keep = F::one() - rho;
    for (t, &o) in target.values.iter_mut().zip(&online.values) {
        *t = polyak_mix(*t, o, rho, keep);
    }
    Ok(())
}

/// Equal inputs are returned unchanged, so an already-tracked target is an
/// exact fixed point despite rounding in the blend.
#[inline]
fn polyak_mix<F: Scalar>(target: F, online: F, rho: F, keep: F) -> F {
    if target == online {
        target
    } else {
        rho * target + keep * online
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moment estimates for one network.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<F> {
    pub first: Vec<Layer<F>>,
    pub second: Vec<Layer<F>>,
    pub step: u64,
    pub config: AdamConfig,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(net: &Mlp<F>, config: AdamConfig) -> Self {
        let zeros: Vec<_> = net.layers.iter().map(Layer::zeros_like).collect();
        Self {
            first: zeros.clone(),
            second: zeros,
            step: 0,
            config,
        }
    }

    /// One bias-corrected Adam step. Returns `false` and leaves everything
    /// untouched when the gradients are not finite.
    pub fn apply(&mut self, net: &mut Mlp<F>, grads: &Gradients<F>, lr: f64) -> Result<bool> {
        let shapes: Vec<_> = net.layers.iter().map(Layer::shape).collect();
        let grad_shapes: Vec<_> = grads.iter().map(Layer::shape).collect();
        if shapes != grad_shapes || self.first.len() != shapes.len() {
            return Err(QtaError::LayoutMismatch("gradient layout differs from network".into()));
        }
        if !gradients_finite(grads) {
            warn!("non-finite gradient, skipping Adam step");
            return Ok(false);
        }
        self.step += 1;
        let b1: F = cast(self.config.beta1);
        let b2: F = cast(self.config.beta2);
        let eps: F = cast(self.config.epsilon);
        let c1 = 1.0 - self.config.beta1.powi(self.step.min(i32::MAX as u64) as i32);
        let c2 = 1.0 - self.config.beta2.powi(self.step.min(i32::MAX as u64) as i32);
        let lr_t: F = cast(lr / c1);
        let inv_c2: F = cast(1.0 / c2);
        let one = F::one();
        for (((layer, g), m), v) in net
            .layers
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            let update = |p: &mut F, g: &F, m: &mut F, v: &mut F| {
                *m = b1 * *m + (one - b1) * *g;
                *v = b2 * *v + (one - b2) * *g * *g;
                *p = *p - lr_t * *m / ((*v * inv_c2).sqrt() + eps);
            };
            Zip::from(&mut layer.weight)
                .and(&g.weight)
                .and(&mut m.weight)
                .and(&mut v.weight)
                .for_each(update);
            Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(update);
        }
        net.touch();
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Rng};
    use ndarray::{array, Array};
    use proptest::prelude::*;

    fn random_input(rows: usize, cols: usize, rng: &mut Rng) -> Array2<f64> {
        Array::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::<f64>::zeros(&[3, 8, 8, 2], Activation::Identity).unwrap();
        let x = random_input(4, 3, &mut stream(1, "x"));
        let (y, _) = net.forward(x.view()).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_linear_layer_is_matrix_product() {
        let layer = Layer {
            weight: array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]],
            bias: array![0.0, 0.0],
        };
        let net = Mlp::from_layers(vec![layer], Activation::Identity).unwrap();
        let y = net.predict(array![[1.0, 0.5, -1.0]].view()).unwrap();
        assert_eq!(y, array![[1.0 + 1.5 - 5.0, 2.0 + 2.0 - 6.0]]);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let net = Mlp::<f32>::zeros(&[3, 4, 1], Activation::Identity).unwrap();
        let x = Array2::<f32>::zeros((2, 5));
        assert!(matches!(
            net.forward(x.view()),
            Err(QtaError::DimensionMismatch { expected: 3, actual: 5 })
        ));
    }

    #[test]
    fn forward_is_deterministic() {
        let net = Mlp::<f64>::new(&[4, 16, 16, 3], Activation::Tanh, 1.0, &mut stream(2, "n")).unwrap();
        let x = random_input(5, 4, &mut stream(2, "x"));
        let a = net.predict(x.view()).unwrap();
        let b = net.clone().predict(x.view()).unwrap();
        assert!(a.iter().zip(b.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn latent_decomposition_is_exact() {
        let net = Mlp::<f32>::new(&[6, 256, 256, 1], Activation::Identity, 0.1, &mut stream(3, "n")).unwrap();
        let x = random_input(7, 6, &mut stream(3, "x")).mapv(|v| v as f32);
        let (latent, _) = net.forward_to_latent(x.view()).unwrap();
        assert_eq!(latent.ncols(), 256);
        assert!(latent.iter().all(|&v| v >= 0.0));
        let direct = net.predict(x.view()).unwrap();
        let composed = net.final_head(latent.view()).unwrap();
        assert_eq!(direct, composed);
    }

    #[test]
    fn latent_requires_hidden_layer() {
        let net = Mlp::<f64>::zeros(&[3, 2], Activation::Identity).unwrap();
        assert!(matches!(
            net.forward_to_latent(Array2::zeros((1, 3)).view()),
            Err(QtaError::NoHiddenLayer)
        ));
    }

    #[test]
    fn linear_layer_gradient_is_residual_outer_product() {
        let layer = Layer {
            weight: array![[0.5, -1.0], [2.0, 0.25]],
            bias: array![0.0, 0.0],
        };
        let net = Mlp::from_layers(vec![layer], Activation::Identity).unwrap();
        let x = array![[1.5, -2.0]];
        let t = array![[0.3, 0.7]];
        let (y, cache) = net.forward(x.view()).unwrap();
        let residual = &y - &t;
        let (grads, _) = net.backward(&cache, &residual).unwrap();
        // d/dW of 0.5 |xW - t|^2 = x^T (xW - t)
        let expected = x.t().dot(&residual);
        assert_eq!(grads[0].weight, expected);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = Mlp::<f64>::new(&[3, 8, 2], Activation::Tanh, 1.0, &mut stream(4, "n")).unwrap();
        let x = random_input(3, 3, &mut stream(4, "x"));
        let (y, cache) = net.forward(x.view()).unwrap();
        let (grads, dx) = net.backward(&cache, &Array2::zeros(y.dim())).unwrap();
        assert!(grads.iter().all(|g| g.weight.iter().chain(g.bias.iter()).all(|&v| v == 0.0)));
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_cache_rejected() {
        let mut net = Mlp::<f64>::new(&[3, 8, 2], Activation::Identity, 1.0, &mut stream(5, "n")).unwrap();
        let x = random_input(2, 3, &mut stream(5, "x"));
        let (y, cache) = net.forward(x.view()).unwrap();
        let other = net.clone();
        assert!(matches!(other.backward(&cache, &y), Err(QtaError::StaleCache)));
        let params = net.to_params();
        net.set_params(&params).unwrap();
        assert!(matches!(net.backward(&cache, &y), Err(QtaError::StaleCache)));
    }

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let mut net = Mlp::<f64>::new(&[2, 4, 1], Activation::Identity, 1.0, &mut stream(6, "n")).unwrap();
        let before = net.to_params();
        let mut adam = AdamState::new(&net, AdamConfig::default());
        let zeros: Gradients<f64> = net.layers().iter().map(Layer::zeros_like).collect();
        assert!(adam.apply(&mut net, &zeros, 1e-3).unwrap());
        assert_eq!(net.to_params(), before);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let layer = Layer {
            weight: array![[1.0]],
            bias: array![0.0],
        };
        let mut net = Mlp::from_layers(vec![layer], Activation::Identity).unwrap();
        let mut adam = AdamState::new(&net, AdamConfig::default());
        let grads = vec![Layer {
            weight: array![[1.0]],
            bias: array![0.0],
        }];
        adam.apply(&mut net, &grads, 0.001).unwrap();
        // m_hat = 1, v_hat = 1: step = lr / (1 + eps)
        let w = net.layers()[0].weight[[0, 0]];
        assert!((1.0 - w - 0.001).abs() < 1e-10, "{w}");
    }

    #[test]
    fn adam_skips_non_finite() {
        let mut net = Mlp::<f64>::new(&[2, 3, 1], Activation::Identity, 1.0, &mut stream(7, "n")).unwrap();
        let before = net.to_params();
        let mut adam = AdamState::new(&net, AdamConfig::default());
        let mut grads: Gradients<f64> = net.layers().iter().map(Layer::zeros_like).collect();
        grads[0].weight[[0, 0]] = f64::NAN;
        assert!(!adam.apply(&mut net, &grads, 1e-3).unwrap());
        assert_eq!(net.to_params(), before);
        assert_eq!(adam.step, 0);
    }

    #[test]
    fn adam_runs_are_reproducible() {
        let run = || {
            let mut rng = stream(8, "n");
            let mut net = Mlp::<f32>::new(&[3, 16, 1], Activation::Identity, 1.0, &mut rng).unwrap();
            let mut adam = AdamState::new(&net, AdamConfig::default());
            for _ in 0..20 {
                let x = Array::from_shape_fn((8, 3), |_| rng.random_range(-1.0f32..1.0));
                let (y, cache) = net.forward(x.view()).unwrap();
                let (g, _) = net.backward(&cache, &y).unwrap();
                adam.apply(&mut net, &g, 1e-2).unwrap();
            }
            net.to_params()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn polyak_examples() {
        let mut t = ParamVector {
            shapes: vec![(1, 1)],
            values: vec![1.0f64, 1.0],
        };
        let o = ParamVector {
            shapes: vec![(1, 1)],
            values: vec![0.0, 0.0],
        };
        polyak_update(&mut t, &o, 0.95).unwrap();
        assert_eq!(t.values, vec![0.95, 0.95]);
        let before = t.clone();
        polyak_update(&mut t, &o, 1.0).unwrap();
        assert_eq!(t, before);
        polyak_update(&mut t, &o, 0.0).unwrap();
        assert_eq!(t.values, o.values);
        assert!(polyak_update(&mut t, &o, 1.5).is_err());
        let bad = ParamVector {
            shapes: vec![(2, 1)],
            values: vec![0.0; 3],
        };
        assert!(polyak_update(&mut t, &bad, 0.5).is_err());
    }

    #[test]
    fn mlp_polyak_matches_flat_polyak() {
        let mut rng = stream(9, "n");
        let mut target = Mlp::<f64>::new(&[3, 5, 2], Activation::Identity, 1.0, &mut rng).unwrap();
        let online = Mlp::<f64>::new(&[3, 5, 2], Activation::Identity, 1.0, &mut rng).unwrap();
        let mut flat = target.to_params();
        polyak_update(&mut flat, &online.to_params(), 0.95).unwrap();
        target.polyak_from(&online, 0.95).unwrap();
        assert_eq!(target.to_params(), flat);
    }

    proptest! {
        #[test]
        fn param_vector_round_trip(seed in any::<u64>(), hidden in 1usize..12, out in 1usize..4) {
            let mut rng = stream(seed, "p");
            let net = Mlp::<f64>::new(&[3, hidden, hidden, out], Activation::Tanh, 1.0, &mut rng).unwrap();
            let params = net.to_params();
            let rebuilt = Mlp::from_params(&params, Activation::Tanh).unwrap();
            let again = rebuilt.to_params();
            prop_assert!(params.values.iter().zip(&again.values).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert_eq!(params.shapes, again.shapes);
        }

        #[test]
        fn polyak_fixed_point(seed in any::<u64>(), rho in 0.0f64..=1.0) {
            let net = Mlp::<f64>::new(&[2, 4, 1], Activation::Identity, 1.0, &mut stream(seed, "q")).unwrap();
            let mut target = net.to_params();
            polyak_update(&mut target, &net.to_params(), rho).unwrap();
            prop_assert_eq!(target, net.to_params());
        }
    }
}
