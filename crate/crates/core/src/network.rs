//! Fully-connected feed-forward networks with flat parameter indexing.
//!
//! # Parameter layout
//!
//! Parameters are stored in one flat vector, layer by layer. Inside a layer
//! with `in_dim` inputs and `out_dim` outputs the layout follows the
//! column-stacking convention of [`crate::tensor::kron`]:
//!
//! * weight from input `i` to output `j`: `offset + i * out_dim + j`
//! * bias of output `j` (after all weights): `offset + in_dim * out_dim + j`
//!
//! Equivalently, a layer's segment read row-major is the `(in_dim + 1) x
//! out_dim` matrix `[Wᵀ; bᵀ]`, which is exactly the augmented factor shape
//! used by the Kronecker-factored curvature. Biases sit at the augmented
//! input index `in_dim`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Matrix, Rng};

/// Default cap on the parameter count for dense Jacobian extraction.
pub const DEFAULT_JACOBIAN_CAP: usize = 100_000;

/// Elementwise activation function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply<S: Scalar>(self, z: S) -> S {
        match self {
            Activation::Relu => {
                if z > S::zero() {
                    z
                } else {
                    S::zero()
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `a = f(z)`.
    ///
    /// The ReLU derivative at the kink is 0.
    #[inline]
    pub fn deriv_from_output<S: Scalar>(self, a: S) -> S {
        match self {
            Activation::Relu => {
                if a > S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
            Activation::Tanh => S::one() - a * a,
            Activation::Identity => S::one(),
        }
    }
}

/// Shape of one dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    pub has_bias: bool,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation, has_bias: bool) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
            has_bias,
        }
    }

    /// Number of parameters in this layer.
    pub fn param_count(&self) -> usize {
        self.in_dim * self.out_dim + if self.has_bias { self.out_dim } else { 0 }
    }
}

/// Where a flat parameter index points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamCoord {
    /// Weight from `input` to `output` in `layer`.
    Weight {
        layer: usize,
        input: usize,
        output: usize,
    },
    /// Bias of `output` in `layer`.
    Bias { layer: usize, output: usize },
}

/// A stack of dense layers with a flat parameter vector and an optional
/// pruning mask aligned with it.
#[derive(Debug, Clone)]
pub struct Network<S> {
    layers: Vec<LayerSpec>,
    params: Vec<S>,
    offsets: Vec<usize>,
    mask: Option<Vec<bool>>,
}

/// Per-layer inputs and outputs captured during a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<S> {
    /// `layer_inputs[l]` is the batch fed into layer `l` (the raw input for
    /// `l = 0`, otherwise the activation output of layer `l - 1`).
    pub layer_inputs: Vec<Matrix<S>>,
    /// Activation outputs per layer; the last entry is the network output.
    pub layer_outputs: Vec<Matrix<S>>,
}

impl<S: Scalar> ForwardTrace<S> {
    pub fn output(&self) -> &Matrix<S> {
        self.layer_outputs.last().expect("non-empty network")
    }
}

/// Layer inputs and pre-activation output gradients from one backward pass,
/// the raw material of the Kronecker-factored curvature.
#[derive(Debug, Clone)]
pub struct BatchActivations<S> {
    /// `inputs[l]`: batch fed into layer `l` (`B x in_dim_l`).
    pub inputs: Vec<Matrix<S>>,
    /// `output_grads[l]`: gradient w.r.t. the pre-activation output of layer
    /// `l` (`B x out_dim_l`).
    pub output_grads: Vec<Matrix<S>>,
}

fn validate_layers(layers: &[LayerSpec]) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::structural("network needs at least one layer"));
    }
    for spec in layers {
        if spec.in_dim == 0 || spec.out_dim == 0 {
            return Err(Error::structural("layer dimensions must be >= 1"));
        }
    }
    for w in layers.windows(2) {
        if w[0].out_dim != w[1].in_dim {
            return Err(Error::structural(format!(
                "layer dims do not chain: out {} vs next in {}",
                w[0].out_dim, w[1].in_dim
            )));
        }
    }
    Ok(())
}

fn offsets_of(layers: &[LayerSpec]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(layers.len() + 1);
    let mut acc = 0;
    for spec in layers {
        offsets.push(acc);
        acc += spec.param_count();
    }
    offsets.push(acc);
    offsets
}

impl<S: Scalar> Network<S> {
    /// Builds a network with Kaiming-uniform fan-in weight initialization
    /// (bound `sqrt(6 / fan_in)`) and zero biases, drawn from the given seed.
    pub fn new(layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        validate_layers(&layers)?;
        let offsets = offsets_of(&layers);
        let mut params = vec![S::zero(); offsets[layers.len()]];
        let mut rng = Rng::new(seed).derive(0x1A17);
        for (l, spec) in layers.iter().enumerate() {
            let bound = (6.0 / spec.in_dim as f64).sqrt();
            let base = offsets[l];
            for p in params
                .iter_mut()
                .skip(base)
                .take(spec.in_dim * spec.out_dim)
            {
                *p = S::cast(rng.uniform_in(-bound, bound));
            }
            // biases stay zero
        }
        Ok(Self {
            layers,
            params,
            offsets,
            mask: None,
        })
    }

    /// Builds a network from explicit parameters.
    pub fn from_params(layers: Vec<LayerSpec>, params: Vec<S>) -> Result<Self> {
        validate_layers(&layers)?;
        let offsets = offsets_of(&layers);
        if params.len() != offsets[layers.len()] {
            return Err(Error::structural(format!(
                "parameter vector length {} does not match architecture ({})",
                params.len(),
                offsets[layers.len()]
            )));
        }
        Ok(Self {
            layers,
            params,
            offsets,
            mask: None,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[S] {
        &self.params
    }

    /// Overwrites the parameters; masked entries are re-zeroed so the mask
    /// invariant holds no matter what the caller passes.
    pub fn set_params(&mut self, params: Vec<S>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::structural("parameter length mismatch"));
        }
        self.params = params;
        self.enforce_mask();
        Ok(())
    }

    pub(crate) fn params_mut(&mut self) -> &mut [S] {
        &mut self.params
    }

    pub(crate) fn enforce_mask(&mut self) {
        if let Some(mask) = &self.mask {
            for (p, &keep) in self.params.iter_mut().zip(mask.iter()) {
                if !keep {
                    *p = S::zero();
                }
            }
        }
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    /// Installs a mask (true = keep) and zeroes the masked parameters.
    pub fn set_mask(&mut self, mask: Option<Vec<bool>>) -> Result<()> {
        if let Some(bits) = &mask {
            if bits.len() != self.params.len() {
                return Err(Error::structural("mask length mismatch"));
            }
        }
        self.mask = mask;
        self.enforce_mask();
        Ok(())
    }

    /// Flat index range of layer `l`'s parameters.
    pub fn layer_range(&self, l: usize) -> std::ops::Range<usize> {
        self.offsets[l]..self.offsets[l + 1]
    }

    /// Flat index of weight `input -> output` in layer `l`.
    #[inline]
    pub fn weight_index(&self, l: usize, input: usize, output: usize) -> usize {
        debug_assert!(input < self.layers[l].in_dim && output < self.layers[l].out_dim);
        self.offsets[l] + input * self.layers[l].out_dim + output
    }

    /// Flat index of the bias of `output` in layer `l` (layer must have bias).
    #[inline]
    pub fn bias_index(&self, l: usize, output: usize) -> usize {
        debug_assert!(self.layers[l].has_bias && output < self.layers[l].out_dim);
        self.offsets[l] + self.layers[l].in_dim * self.layers[l].out_dim + output
    }

    /// Inverse of the flat indexing: which coordinate a parameter index maps to.
    pub fn coord_of(&self, p: usize) -> Result<ParamCoord> {
        if p >= self.params.len() {
            return Err(Error::structural(format!(
                "parameter index {p} out of range"
            )));
        }
        let l = match self.offsets.binary_search(&p) {
            Ok(exact) if exact < self.layers.len() => exact,
            Ok(exact) => exact - 1,
            Err(ins) => ins - 1,
        };
        let spec = &self.layers[l];
        let local = p - self.offsets[l];
        let wcount = spec.in_dim * spec.out_dim;
        if local < wcount {
            Ok(ParamCoord::Weight {
                layer: l,
                input: local / spec.out_dim,
                output: local % spec.out_dim,
            })
        } else {
            Ok(ParamCoord::Bias {
                layer: l,
                output: local - wcount,
            })
        }
    }

    /// Number of units (outputs) of layer `l`.
    pub fn unit_count(&self, l: usize) -> Result<usize> {
        self.layers
            .get(l)
            .map(|s| s.out_dim)
            .ok_or_else(|| Error::structural(format!("layer index {l} out of range")))
    }

    /// Flat parameter indices of a unit's structure: its incoming weight row
    /// plus its bias entry when present.
    pub fn structure_params(&self, l: usize, unit: usize) -> Result<Vec<usize>> {
        let spec = self
            .layers
            .get(l)
            .ok_or_else(|| Error::structural(format!("layer index {l} out of range")))?;
        if unit >= spec.out_dim {
            return Err(Error::structural(format!(
                "unit index {unit} out of range for layer {l} ({} units)",
                spec.out_dim
            )));
        }
        let mut idx: Vec<usize> = (0..spec.in_dim)
            .map(|i| self.weight_index(l, i, unit))
            .collect();
        if spec.has_bias {
            idx.push(self.bias_index(l, unit));
        }
        Ok(idx)
    }

    fn check_input(&self, x: &Matrix<S>) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::structural(format!(
                "input feature dim {} does not match first layer in_dim {}",
                x.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// One dense layer applied to a batch: `act(X W + b)`.
    fn layer_forward(&self, l: usize, x: &Matrix<S>) -> Matrix<S> {
        let spec = &self.layers[l];
        let (b, din, dout) = (x.rows(), spec.in_dim, spec.out_dim);
        let seg = &self.params[self.layer_range(l)];
        let mut z = Matrix::zeros(b, dout);
        if b > 0 {
            // The weight block read row-major is `in_dim x out_dim`.
            S::gemm(
                b,
                din,
                dout,
                S::one(),
                x.data(),
                din as isize,
                1,
                &seg[..din * dout],
                dout as isize,
                1,
                S::zero(),
                z.data_mut(),
            );
        }
        if spec.has_bias {
            let bias = &seg[din * dout..];
            for r in 0..b {
                let row = z.row_mut(r);
                for (v, &bj) in row.iter_mut().zip(bias) {
                    *v += bj;
                }
            }
        }
        for v in z.data_mut() {
            *v = spec.activation.apply(*v);
        }
        z
    }

    /// Forward pass over a batch of row vectors.
    pub fn forward(&self, x: &Matrix<S>) -> Result<Matrix<S>> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for l in 0..self.layers.len() {
            cur = self.layer_forward(l, &cur);
        }
        Ok(cur)
    }

    /// Forward pass that keeps every layer input and output.
    pub fn forward_trace(&self, x: &Matrix<S>) -> Result<ForwardTrace<S>> {
        self.check_input(x)?;
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut layer_outputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for l in 0..self.layers.len() {
            let out = self.layer_forward(l, &cur);
            layer_inputs.push(cur);
            layer_outputs.push(out.clone());
            cur = out;
        }
        Ok(ForwardTrace {
            layer_inputs,
            layer_outputs,
        })
    }

    /// Backward pass reusing a forward trace.
    ///
    /// Computes the gradient of `Σ_n <upstream_n, f(x_n)>` w.r.t. the flat
    /// parameters (masked entries forced to zero) and captures the per-layer
    /// activations and pre-activation output gradients.
    pub fn backward_from_trace(
        &self,
        trace: &ForwardTrace<S>,
        upstream: &Matrix<S>,
    ) -> Result<(Vec<S>, BatchActivations<S>)> {
        let out = trace.output();
        if upstream.rows() != out.rows() || upstream.cols() != out.cols() {
            return Err(Error::structural(format!(
                "upstream shape {}x{} does not match output {}x{}",
                upstream.rows(),
                upstream.cols(),
                out.rows(),
                out.cols()
            )));
        }
        let batch = upstream.rows();
        let mut grad = vec![S::zero(); self.params.len()];
        let mut output_grads: Vec<Option<Matrix<S>>> = vec![None; self.layers.len()];
        let mut dact = upstream.clone();
        for l in (0..self.layers.len()).rev() {
            let spec = &self.layers[l];
            let (din, dout) = (spec.in_dim, spec.out_dim);
            // Chain through the activation: dZ = dA ∘ f'(A).
            let a = &trace.layer_outputs[l];
            let mut dz = dact;
            for (v, &av) in dz.data_mut().iter_mut().zip(a.data()) {
                *v = *v * spec.activation.deriv_from_output(av);
            }

            let x = &trace.layer_inputs[l];
            let range = self.layer_range(l);
            if batch > 0 {
                // dW (in x out, row-major = flat layout) = Xᵀ dZ.
                S::gemm(
                    din,
                    batch,
                    dout,
                    S::one(),
                    x.data(),
                    1,
                    din as isize,
                    dz.data(),
                    dout as isize,
                    1,
                    S::zero(),
                    &mut grad[range.start..range.start + din * dout],
                );
            }
            if spec.has_bias {
                let bias_grad = dz.col_sums();
                grad[range.start + din * dout..range.end].copy_from_slice(&bias_grad);
            }

            // dX = dZ Wᵀ, needed for every layer but the first.
            dact = if l > 0 {
                let seg = &self.params[range];
                let mut dx = Matrix::zeros(batch, din);
                if batch > 0 {
                    S::gemm(
                        batch,
                        dout,
                        din,
                        S::one(),
                        dz.data(),
                        dout as isize,
                        1,
                        &seg[..din * dout],
                        1,
                        dout as isize,
                        S::zero(),
                        dx.data_mut(),
                    );
                }
                dx
            } else {
                Matrix::zeros(0, 0)
            };
            output_grads[l] = Some(dz);
        }
        if let Some(mask) = &self.mask {
            for (g, &keep) in grad.iter_mut().zip(mask.iter()) {
                if !keep {
                    *g = S::zero();
                }
            }
        }
        let acts = BatchActivations {
            inputs: trace.layer_inputs.clone(),
            output_grads: output_grads.into_iter().map(|g| g.unwrap()).collect(),
        };
        Ok((grad, acts))
    }

    /// Forward + backward in one call.
    pub fn backward(
        &self,
        x: &Matrix<S>,
        upstream: &Matrix<S>,
    ) -> Result<(Vec<S>, BatchActivations<S>)> {
        let trace = self.forward_trace(x)?;
        self.backward_from_trace(&trace, upstream)
    }

    /// Backpropagates `upstream` to the pre-activation output of every layer
    /// without forming parameter gradients. Cheaper than
    /// [`Network::backward_from_trace`] when only the per-layer output
    /// gradients are needed (curvature accumulation).
    pub fn layer_output_grads(
        &self,
        trace: &ForwardTrace<S>,
        upstream: &Matrix<S>,
    ) -> Result<Vec<Matrix<S>>> {
        let out = trace.output();
        if upstream.rows() != out.rows() || upstream.cols() != out.cols() {
            return Err(Error::structural("upstream shape mismatch"));
        }
        let batch = upstream.rows();
        let mut output_grads: Vec<Option<Matrix<S>>> = vec![None; self.layers.len()];
        let mut dact = upstream.clone();
        for l in (0..self.layers.len()).rev() {
            let spec = &self.layers[l];
            let (din, dout) = (spec.in_dim, spec.out_dim);
            let a = &trace.layer_outputs[l];
            let mut dz = dact;
            for (v, &av) in dz.data_mut().iter_mut().zip(a.data()) {
                *v = *v * spec.activation.deriv_from_output(av);
            }
            dact = if l > 0 {
                let seg = &self.params[self.layer_range(l)];
                let mut dx = Matrix::zeros(batch, din);
                if batch > 0 {
                    S::gemm(
                        batch,
                        dout,
                        din,
                        S::one(),
                        dz.data(),
                        dout as isize,
                        1,
                        &seg[..din * dout],
                        1,
                        dout as isize,
                        S::zero(),
                        dx.data_mut(),
                    );
                }
                dx
            } else {
                Matrix::zeros(0, 0)
            };
            output_grads[l] = Some(dz);
        }
        Ok(output_grads.into_iter().map(|g| g.unwrap()).collect())
    }

    /// Dense Jacobian of the network output w.r.t. the parameters for a
    /// single input: row `c` is `∇_θ f_c(x)`.
    pub fn jacobian(&self, x: &[S], cap: Option<usize>) -> Result<Matrix<S>> {
        let cap = cap.unwrap_or(DEFAULT_JACOBIAN_CAP);
        if self.params.len() > cap {
            return Err(Error::Resource(format!(
                "jacobian needs {} parameters > cap {}",
                self.params.len(),
                cap
            )));
        }
        let xm = Matrix::new(1, x.len(), x.to_vec())?;
        let trace = self.forward_trace(&xm)?;
        let c = self.output_dim();
        let mut jac = Matrix::zeros(c, self.params.len());
        for class in 0..c {
            let mut upstream = Matrix::zeros(1, c);
            upstream.set(0, class, S::one());
            let (grad, _) = self.backward_from_trace(&trace, &upstream)?;
            jac.row_mut(class).copy_from_slice(&grad);
        }
        Ok(jac)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(i: usize, o: usize, act: Activation, bias: bool) -> LayerSpec {
        LayerSpec::new(i, o, act, bias)
    }

    fn random_net(layers: Vec<LayerSpec>, seed: u64) -> Network<f64> {
        let mut net = Network::new(layers, seed).unwrap();
        // Give biases nonzero values so gradient checks exercise them.
        let mut rng = Rng::new(seed ^ 0xB1A5);
        let params = net
            .params()
            .iter()
            .map(|&p| if p == 0.0 { rng.normal() * 0.3 } else { p })
            .collect();
        net.set_params(params).unwrap();
        net
    }

    #[test]
    fn zero_weight_identity_net_outputs_bias() {
        let mut net =
            Network::<f64>::from_params(vec![spec(3, 2, Activation::Identity, true)], vec![0.0; 8])
                .unwrap();
        let mut params = vec![0.0; 8];
        params[6] = 0.5;
        params[7] = -1.5;
        net.set_params(params).unwrap();
        let x = Matrix::from_fn(4, 3, |i, j| (i + j) as f64);
        let y = net.forward(&x).unwrap();
        for r in 0..4 {
            assert_eq!(y.row(r), &[0.5, -1.5]);
        }
    }

    #[test]
    fn identity_weight_layer_is_identity_map() {
        let mut params = vec![0.0; 9];
        let layers = vec![spec(3, 3, Activation::Identity, false)];
        // W = I under the documented layout: weight (i -> j) at i*out + j.
        for i in 0..3 {
            params[i * 3 + i] = 1.0;
        }
        let net = Network::from_params(layers, params).unwrap();
        let x = Matrix::from_fn(2, 3, |i, j| (i * 3 + j) as f64 - 2.0);
        let y = net.forward(&x).unwrap();
        assert!(y.max_abs_diff(&x) < 1e-15);
    }

    #[test]
    fn forward_matches_hand_rolled_oracle() {
        let net = random_net(
            vec![
                spec(2, 3, Activation::Tanh, true),
                spec(3, 2, Activation::Identity, true),
            ],
            99,
        );
        let x = Matrix::from_fn(5, 2, |i, j| (i as f64 * 0.7 - 1.0) * (j as f64 + 0.4));
        let y = net.forward(&x).unwrap();
        for n in 0..5 {
            let mut h = [0.0f64; 3];
            for (j, hj) in h.iter_mut().enumerate() {
                let mut z = net.params()[net.bias_index(0, j)];
                for i in 0..2 {
                    z += net.params()[net.weight_index(0, i, j)] * x.get(n, i);
                }
                *hj = z.tanh();
            }
            for j in 0..2 {
                let mut z = net.params()[net.bias_index(1, j)];
                for (i, hi) in h.iter().enumerate() {
                    z += net.params()[net.weight_index(1, i, j)] * hi;
                }
                assert!((y.get(n, j) - z).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let net = random_net(vec![spec(3, 2, Activation::Relu, true)], 5);
        let x = Matrix::from_fn(4, 3, |i, j| (i + j) as f64 * 0.1);
        let up = Matrix::zeros(4, 2);
        let (grad, _) = net.backward(&x, &up).unwrap();
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn scalar_chain_rule_exact() {
        // 1-1 identity net: d<u, w x + b>/dw = u x, /db = u.
        let net =
            Network::from_params(vec![spec(1, 1, Activation::Identity, true)], vec![3.0, 0.5])
                .unwrap();
        let x = Matrix::new(1, 1, vec![2.0]).unwrap();
        let up = Matrix::new(1, 1, vec![5.0]).unwrap();
        let (grad, _) = net.backward(&x, &up).unwrap();
        assert_eq!(grad, vec![10.0, 5.0]);
    }

    fn fd_gradient(net: &Network<f64>, x: &Matrix<f64>, up: &Matrix<f64>, h: f64) -> Vec<f64> {
        let mut out = vec![0.0; net.param_count()];
        let value = |net: &Network<f64>| -> f64 {
            let y = net.forward(x).unwrap();
            y.data()
                .iter()
                .zip(up.data())
                .map(|(a, b)| a * b)
                .sum::<f64>()
        };
        let mut probe = net.clone();
        for p in 0..net.param_count() {
            let theta = net.params()[p];
            let mut plus = net.params().to_vec();
            plus[p] = theta + h;
            probe.set_params(plus).unwrap();
            let f_plus = value(&probe);
            let mut minus = net.params().to_vec();
            minus[p] = theta - h;
            probe.set_params(minus).unwrap();
            let f_minus = value(&probe);
            out[p] = (f_plus - f_minus) / (2.0 * h);
        }
        out
    }

    #[test]
    fn backward_matches_finite_differences() {
        let net = random_net(
            vec![
                spec(3, 4, Activation::Tanh, true),
                spec(4, 2, Activation::Identity, true),
            ],
            17,
        );
        let x = Matrix::from_fn(3, 3, |i, j| 0.37 * (i as f64 + 1.0) - 0.21 * j as f64);
        let up = Matrix::from_fn(3, 2, |i, j| 0.5 - 0.3 * (i as f64) + 0.2 * (j as f64));
        let (grad, _) = net.backward(&x, &up).unwrap();
        let fd = fd_gradient(&net, &x, &up, 1e-4);
        for p in 0..net.param_count() {
            let denom = fd[p].abs().max(1e-6);
            assert!(
                (grad[p] - fd[p]).abs() / denom < 1e-5,
                "param {p}: analytic {} vs fd {}",
                grad[p],
                fd[p]
            );
        }
    }

    #[test]
    fn jacobian_of_linear_layer_replicates_inputs() {
        let net = random_net(vec![spec(3, 2, Activation::Identity, false)], 3);
        let x = [0.5, -1.0, 2.0];
        let jac = net.jacobian(&x, None).unwrap();
        for c in 0..2 {
            for (i, xi) in x.iter().enumerate() {
                for j in 0..2 {
                    let expect = if j == c { *xi } else { 0.0 };
                    assert!((jac.get(c, net.weight_index(0, i, j)) - expect).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn jacobian_zero_input_no_bias_is_zero() {
        let net = random_net(vec![spec(3, 2, Activation::Identity, false)], 4);
        let jac = net.jacobian(&[0.0, 0.0, 0.0], None).unwrap();
        assert!(jac.max_abs() == 0.0);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let net = random_net(
            vec![
                spec(2, 3, Activation::Relu, true),
                spec(3, 2, Activation::Tanh, true),
            ],
            21,
        );
        let x = [0.63, -0.38];
        let jac = net.jacobian(&x, None).unwrap();
        let xm = Matrix::new(1, 2, x.to_vec()).unwrap();
        for c in 0..2 {
            let mut up = Matrix::zeros(1, 2);
            up.set(0, c, 1.0);
            let fd = fd_gradient(&net, &xm, &up, 1e-4);
            for p in 0..net.param_count() {
                let denom = fd[p].abs().max(1e-6);
                assert!((jac.get(c, p) - fd[p]).abs() / denom < 1e-5);
            }
        }
    }

    #[test]
    fn jacobian_cap_is_enforced() {
        let net = random_net(vec![spec(4, 4, Activation::Identity, true)], 2);
        assert!(matches!(
            net.jacobian(&[0.0; 4], Some(10)),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn structure_params_cover_layer_exactly() {
        let net = random_net(
            vec![
                spec(3, 2, Activation::Relu, true),
                spec(2, 2, Activation::Identity, false),
            ],
            8,
        );
        assert_eq!(net.unit_count(0).unwrap(), 2);
        let s0 = net.structure_params(0, 0).unwrap();
        assert_eq!(s0.len(), 4); // 3 weights + 1 bias
        let mut all: Vec<usize> = (0..net.unit_count(0).unwrap())
            .flat_map(|u| net.structure_params(0, u).unwrap())
            .collect();
        all.sort_unstable();
        let expect: Vec<usize> = net.layer_range(0).collect();
        assert_eq!(all, expect);
        assert!(net.structure_params(0, 2).is_err());
        assert!(net.structure_params(5, 0).is_err());
    }

    #[test]
    fn flat_index_bijection() {
        let net = random_net(
            vec![
                spec(3, 2, Activation::Relu, true),
                spec(2, 4, Activation::Identity, false),
            ],
            8,
        );
        for p in 0..net.param_count() {
            let back = match net.coord_of(p).unwrap() {
                ParamCoord::Weight {
                    layer,
                    input,
                    output,
                } => net.weight_index(layer, input, output),
                ParamCoord::Bias { layer, output } => net.bias_index(layer, output),
            };
            assert_eq!(back, p);
        }
        assert!(net.coord_of(net.param_count()).is_err());
    }

    #[test]
    fn mask_zeroes_params_and_gradients_idempotently() {
        let mut net = random_net(vec![spec(2, 2, Activation::Identity, true)], 10);
        let mut mask = vec![true; net.param_count()];
        mask[0] = false;
        mask[5] = false;
        net.set_mask(Some(mask.clone())).unwrap();
        assert_eq!(net.params()[0], 0.0);
        assert_eq!(net.params()[5], 0.0);
        let snapshot = net.params().to_vec();
        net.set_mask(Some(mask)).unwrap();
        assert_eq!(net.params(), &snapshot[..]);

        // Values poked under masked entries do not affect the forward pass.
        let x = Matrix::from_fn(3, 2, |i, j| (i + 2 * j) as f64);
        let y0 = net.forward(&x).unwrap();
        let mut poked = net.params().to_vec();
        poked[0] = 1e9;
        poked[5] = -7.0;
        net.set_params(poked).unwrap();
        assert_eq!(net.params()[0], 0.0);
        let y1 = net.forward(&x).unwrap();
        assert!(y0.max_abs_diff(&y1) == 0.0);

        let up = Matrix::from_fn(3, 2, |_, _| 1.0);
        let (grad, _) = net.backward(&x, &up).unwrap();
        assert_eq!(grad[0], 0.0);
        assert_eq!(grad[5], 0.0);
    }

    #[test]
    fn shape_errors_are_structural() {
        let net = random_net(vec![spec(2, 2, Activation::Identity, true)], 1);
        let bad = Matrix::<f64>::zeros(1, 3);
        assert!(matches!(net.forward(&bad), Err(Error::Structural(_))));
        let x = Matrix::<f64>::zeros(1, 2);
        let bad_up = Matrix::<f64>::zeros(2, 2);
        assert!(net.backward(&x, &bad_up).is_err());
        assert!(Network::<f64>::from_params(
            vec![spec(2, 2, Activation::Identity, true)],
            vec![0.0; 3]
        )
        .is_err());
        assert!(Network::<f64>::new(
            vec![
                spec(2, 3, Activation::Relu, true),
                spec(4, 1, Activation::Relu, true)
            ],
            0
        )
        .is_err());
    }
}
