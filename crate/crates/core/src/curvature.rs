//! Curvature estimates of the negative-log-likelihood Hessian: diagonal GGN,
//! diagonal empirical Fisher, and layer-wise Kronecker factors.
//!
//! The diagonal estimators exploit the rank-1 per-sample structure of dense
//! layer gradients (`∂nll/∂W[j,i] = g_j a_i`), so batch accumulation reduces
//! to matrix products of squared activations against squared output
//! gradients and never materializes Jacobians.

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::likelihood::Likelihood;
use crate::network::Network;
use crate::scalar::Scalar;
use crate::tensor::{sym_eig, Matrix, Rng, SymEig};

/// Kronecker factors of one layer with their eigendecompositions.
///
/// `a` is `(in_dim + has_bias)` square (the input factor, carrying the `1/N`
/// average, with a homogeneous coordinate appended for the bias) and `g` is
/// `out_dim` square (the output-gradient factor, carrying the sum over
/// samples), so `a ⊗ g` totals a sum over the dataset.
#[derive(Debug, Clone)]
pub struct KfacLayer<S> {
    pub a: Matrix<S>,
    pub g: Matrix<S>,
    pub eig_a: SymEig<S>,
    pub eig_g: SymEig<S>,
}

impl<S: Scalar> KfacLayer<S> {
    fn from_factors(a: Matrix<S>, g: Matrix<S>) -> Result<Self> {
        let eig_a = sym_eig(&a)?;
        let eig_g = sym_eig(&g)?;
        Ok(Self { a, g, eig_a, eig_g })
    }

    /// Parameter count of the layer this factor pair describes.
    pub fn param_count(&self) -> usize {
        self.a.rows() * self.g.rows()
    }
}

/// Curvature of the NLL at the current parameters.
#[derive(Debug, Clone)]
pub enum CurvatureEstimate<S> {
    /// One nonnegative entry per parameter.
    Diag(Vec<S>),
    /// Per-layer Kronecker factors.
    Kfac(Vec<KfacLayer<S>>),
}

impl<S: Scalar> CurvatureEstimate<S> {
    pub fn is_kfac(&self) -> bool {
        matches!(self, CurvatureEstimate::Kfac(_))
    }
}

/// How the output-gradient factor of KFAC is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KfacMode {
    /// Per-sample loss gradients (empirical Fisher).
    EmpiricalFisher,
    /// One likelihood-sampled target per datum, seeded.
    GgnSampled { seed: u64 },
    /// Exact GGN: backpropagates every column of the output-Hessian
    /// square-root factor (deterministic, cost scales with the output dim).
    GgnExact,
}

/// Per-sample upstream rows for the loss gradient at the outputs.
fn nll_upstream<S: Scalar>(
    lik: &Likelihood<S>,
    output: &Matrix<S>,
    y: &[crate::likelihood::Target<S>],
) -> Result<Matrix<S>> {
    let mut up = Matrix::zeros(output.rows(), output.cols());
    for n in 0..output.rows() {
        let g = lik.output_grad(output.row(n), &y[n])?;
        up.row_mut(n).copy_from_slice(&g);
    }
    Ok(up)
}

/// Accumulates `Σ_n (a_{n,i} g_{n,j})²` into the flat layer segment layout
/// (weights at `i*out + j`, biases after them).
fn accumulate_squared_rank1<S: Scalar>(
    diag: &mut [S],
    inputs: &Matrix<S>,
    grads: &Matrix<S>,
    has_bias: bool,
) {
    let (b, din, dout) = (inputs.rows(), inputs.cols(), grads.cols());
    let a2 = inputs.hadamard(inputs);
    let g2 = grads.hadamard(grads);
    if b > 0 {
        S::gemm(
            din,
            b,
            dout,
            S::one(),
            a2.data(),
            1,
            din as isize,
            g2.data(),
            dout as isize,
            1,
            S::one(),
            &mut diag[..din * dout],
        );
    }
    if has_bias {
        for (o, s) in diag[din * dout..].iter_mut().zip(g2.col_sums()) {
            *o += s;
        }
    }
}

/// Exact diagonal of the generalized Gauss-Newton:
/// `h_p = Σ_n Σ_c [(Jᵀ L)_{p c}]²` with `L` the output-Hessian factor.
pub fn ggn_diag<S: Scalar>(
    net: &Network<S>,
    lik: &Likelihood<S>,
    batches: &[Batch<S>],
) -> Result<CurvatureEstimate<S>> {
    let mut h = vec![S::zero(); net.param_count()];
    let c_dim = net.output_dim();
    for batch in batches {
        let trace = net.forward_trace(&batch.x)?;
        let output = trace.output();
        let b = output.rows();
        // Per-sample square-root factors of the output Hessian.
        let mut factors = Vec::with_capacity(b);
        for n in 0..b {
            factors.push(lik.hessian_factor(output.row(n), &batch.y[n])?);
        }
        for c in 0..c_dim {
            let mut upstream = Matrix::zeros(b, c_dim);
            for n in 0..b {
                for r in 0..c_dim {
                    upstream.set(n, r, factors[n].get(r, c));
                }
            }
            let grads = net.layer_output_grads(&trace, &upstream)?;
            for (l, spec) in net.layers().iter().enumerate() {
                let seg = net.layer_range(l);
                accumulate_squared_rank1(
                    &mut h[seg],
                    &trace.layer_inputs[l],
                    &grads[l],
                    spec.has_bias,
                );
            }
        }
    }
    Ok(CurvatureEstimate::Diag(h))
}

/// Diagonal empirical Fisher: `h_p = Σ_n (∂nll_n/∂θ_p)²`.
pub fn ef_diag<S: Scalar>(
    net: &Network<S>,
    lik: &Likelihood<S>,
    batches: &[Batch<S>],
) -> Result<CurvatureEstimate<S>> {
    let mut h = vec![S::zero(); net.param_count()];
    for batch in batches {
        let trace = net.forward_trace(&batch.x)?;
        let upstream = nll_upstream(lik, trace.output(), &batch.y)?;
        let grads = net.layer_output_grads(&trace, &upstream)?;
        for (l, spec) in net.layers().iter().enumerate() {
            let seg = net.layer_range(l);
            accumulate_squared_rank1(&mut h[seg], &trace.layer_inputs[l], &grads[l], spec.has_bias);
        }
    }
    Ok(CurvatureEstimate::Diag(h))
}

/// Appends the homogeneous coordinate column when the layer has a bias.
fn augment<S: Scalar>(inputs: &Matrix<S>, has_bias: bool) -> Matrix<S> {
    if !has_bias {
        return inputs.clone();
    }
    let (b, d) = (inputs.rows(), inputs.cols());
    let mut out = Matrix::zeros(b, d + 1);
    for r in 0..b {
        out.row_mut(r)[..d].copy_from_slice(inputs.row(r));
        out.set(r, d, S::one());
    }
    out
}

/// Kronecker-factored curvature: `A_l = (1/N) Σ_n ã ãᵀ` over (augmented)
/// layer inputs, `G_l = Σ_n g gᵀ` over backpropagated output gradients.
pub fn kfac<S: Scalar>(
    net: &Network<S>,
    lik: &Likelihood<S>,
    batches: &[Batch<S>],
    mode: KfacMode,
) -> Result<CurvatureEstimate<S>> {
    let nl = net.num_layers();
    let mut a_acc: Vec<Matrix<S>> = net
        .layers()
        .iter()
        .map(|s| {
            let d = s.in_dim + usize::from(s.has_bias);
            Matrix::zeros(d, d)
        })
        .collect();
    let mut g_acc: Vec<Matrix<S>> = net
        .layers()
        .iter()
        .map(|s| Matrix::zeros(s.out_dim, s.out_dim))
        .collect();
    let mut total = 0usize;
    let mut rng = match mode {
        KfacMode::GgnSampled { seed } => Some(Rng::new(seed).derive(0x6F5A)),
        _ => None,
    };

    for batch in batches {
        let trace = net.forward_trace(&batch.x)?;
        let output = trace.output();
        let b = output.rows();
        total += b;

        for l in 0..nl {
            let aug = augment(&trace.layer_inputs[l], net.layers()[l].has_bias);
            let d = aug.cols();
            if b > 0 {
                S::gemm(
                    d,
                    b,
                    d,
                    S::one(),
                    aug.data(),
                    1,
                    d as isize,
                    aug.data(),
                    d as isize,
                    1,
                    S::one(),
                    a_acc[l].data_mut(),
                );
            }
        }

        let mut add_g = |grads: &[Matrix<S>], g_acc: &mut Vec<Matrix<S>>| {
            for l in 0..nl {
                let dz = &grads[l];
                let d = dz.cols();
                if b > 0 {
                    S::gemm(
                        d,
                        b,
                        d,
                        S::one(),
                        dz.data(),
                        1,
                        d as isize,
                        dz.data(),
                        d as isize,
                        1,
                        S::one(),
                        g_acc[l].data_mut(),
                    );
                }
            }
        };

        match mode {
            KfacMode::EmpiricalFisher => {
                let upstream = nll_upstream(lik, output, &batch.y)?;
                let grads = net.layer_output_grads(&trace, &upstream)?;
                add_g(&grads, &mut g_acc);
            }
            KfacMode::GgnSampled { .. } => {
                let rng = rng.as_mut().expect("sampled mode carries an rng");
                let mut upstream = Matrix::zeros(b, output.cols());
                for n in 0..b {
                    let sampled = lik.sample_target(output.row(n), rng);
                    let g = lik.output_grad(output.row(n), &sampled)?;
                    upstream.row_mut(n).copy_from_slice(&g);
                }
                let grads = net.layer_output_grads(&trace, &upstream)?;
                add_g(&grads, &mut g_acc);
            }
            KfacMode::GgnExact => {
                let c_dim = output.cols();
                let mut factors = Vec::with_capacity(b);
                for n in 0..b {
                    factors.push(lik.hessian_factor(output.row(n), &batch.y[n])?);
                }
                for c in 0..c_dim {
                    let mut upstream = Matrix::zeros(b, c_dim);
                    for n in 0..b {
                        for r in 0..c_dim {
                            upstream.set(n, r, factors[n].get(r, c));
                        }
                    }
                    let grads = net.layer_output_grads(&trace, &upstream)?;
                    add_g(&grads, &mut g_acc);
                }
            }
        }
    }

    if total == 0 {
        return Err(Error::structural("kfac needs at least one sample"));
    }
    let inv_n = S::one() / S::cast(total as f64);
    let mut layers = Vec::with_capacity(nl);
    for (a, g) in a_acc.into_iter().zip(g_acc) {
        let mut a = a.scale(inv_n);
        // Round-off symmetrization; the accumulation is symmetric by
        // construction up to gemm ordering.
        let at = a.transpose();
        a = a.add(&at).scale(S::cast(0.5));
        let gt = g.transpose();
        let g = g.add(&gt).scale(S::cast(0.5));
        layers.push(KfacLayer::from_factors(a, g)?);
    }
    Ok(CurvatureEstimate::Kfac(layers))
}

/// Diagonal of `A ⊗ G` in the flat layer layout: the entry for weight
/// `(i -> j)` is `A_ii * G_jj`, biases take the homogeneous row of `A`.
pub fn kfac_diag<S: Scalar>(layer: &KfacLayer<S>) -> Vec<S> {
    let din = layer.a.rows();
    let dout = layer.g.rows();
    let mut out = Vec::with_capacity(din * dout);
    for i in 0..din {
        let aii = layer.a.get(i, i);
        for j in 0..dout {
            out.push(aii * layer.g.get(j, j));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::Target;
    use crate::network::{Activation, LayerSpec, Network};
    use crate::tensor::kron;

    fn batch_from(x: Matrix<f64>, y: Vec<Target<f64>>) -> Vec<Batch<f64>> {
        vec![Batch { x, y }]
    }

    fn random_net(dims: &[usize], seed: u64) -> Network<f64> {
        let layers: Vec<LayerSpec> = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i + 2 == dims.len() {
                    Activation::Identity
                } else {
                    Activation::Tanh
                };
                LayerSpec::new(w[0], w[1], act, true)
            })
            .collect();
        let mut net = Network::new(layers, seed).unwrap();
        let mut rng = Rng::new(seed ^ 0xFACE);
        let params = net.params().iter().map(|_| rng.normal() * 0.5).collect();
        net.set_params(params).unwrap();
        net
    }

    /// Dense GGN `Σ_n Jᵀ Λ J` from explicit Jacobians (test oracle).
    fn dense_ggn(net: &Network<f64>, lik: &Likelihood<f64>, batch: &Batch<f64>) -> Matrix<f64> {
        let p = net.param_count();
        let mut h = Matrix::zeros(p, p);
        for n in 0..batch.x.rows() {
            let x = batch.x.row(n);
            let jac = net.jacobian(x, None).unwrap();
            let f = net
                .forward(&Matrix::new(1, x.len(), x.to_vec()).unwrap())
                .unwrap();
            let lam = lik.output_hessian(f.row(0), &batch.y[n]).unwrap();
            let jt_lam = jac.matmul_tt(true, &lam, false);
            let contrib = jt_lam.matmul(&jac);
            h = h.add(&contrib);
        }
        h
    }

    #[test]
    fn ggn_diag_zero_input_first_layer_weights() {
        let net = random_net(&[3, 2], 1);
        let lik = Likelihood::<f64>::Categorical;
        let x = Matrix::zeros(2, 3);
        let y = vec![Target::Class(0), Target::Class(1)];
        let CurvatureEstimate::Diag(h) = ggn_diag(&net, &lik, &batch_from(x, y)).unwrap() else {
            panic!()
        };
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(h[net.weight_index(0, i, j)], 0.0);
            }
        }
        // Bias entries stay nonzero in general.
        assert!(h[net.bias_index(0, 0)] > 0.0);
    }

    #[test]
    fn ggn_diag_linear_gaussian_hand_formula() {
        // f = Wx, gaussian sigma2=1: h for weight (i,j) is Σ_n x_{n,i}².
        let net = Network::<f64>::from_params(
            vec![LayerSpec::new(3, 2, Activation::Identity, false)],
            vec![0.3, -0.2, 0.5, 0.1, -0.7, 0.9],
        )
        .unwrap();
        let lik = Likelihood::gaussian(1.0).unwrap();
        let x = Matrix::from_fn(4, 3, |n, i| (n as f64 + 1.0) * 0.3 - i as f64 * 0.4);
        let y: Vec<Target<f64>> = (0..4).map(|_| Target::Values(vec![0.0, 0.0])).collect();
        let CurvatureEstimate::Diag(h) =
            ggn_diag(&net, &lik, &batch_from(x.clone(), y)).unwrap()
        else {
            panic!()
        };
        for i in 0..3 {
            let expect: f64 = (0..4).map(|n| x.get(n, i).powi(2)).sum();
            for j in 0..2 {
                assert!((h[net.weight_index(0, i, j)] - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn ggn_diag_matches_dense_oracle() {
        let net = random_net(&[2, 2, 2], 5);
        let lik = Likelihood::<f64>::Categorical;
        let x = Matrix::from_fn(3, 2, |n, i| 0.8 * (n as f64 - 1.0) + 0.3 * i as f64);
        let y = vec![Target::Class(0), Target::Class(1), Target::Class(0)];
        let batch = Batch { x, y };
        let CurvatureEstimate::Diag(h) =
            ggn_diag(&net, &lik, std::slice::from_ref(&batch)).unwrap()
        else {
            panic!()
        };
        let dense = dense_ggn(&net, &lik, &batch);
        for p in 0..net.param_count() {
            assert!(
                (h[p] - dense.get(p, p)).abs() < 1e-8,
                "p={p}: {} vs {}",
                h[p],
                dense.get(p, p)
            );
        }
    }

    #[test]
    fn dense_ggn_is_psd() {
        let net = random_net(&[2, 3, 2], 9);
        let lik = Likelihood::<f64>::Categorical;
        let x = Matrix::from_fn(4, 2, |n, i| 0.5 * n as f64 - 0.2 * i as f64);
        let y = vec![
            Target::Class(0),
            Target::Class(1),
            Target::Class(1),
            Target::Class(0),
        ];
        let batch = Batch { x, y };
        let dense = dense_ggn(&net, &lik, &batch);
        let mut rng = Rng::new(2);
        for _ in 0..20 {
            let v: Vec<f64> = (0..net.param_count()).map(|_| rng.normal()).collect();
            let hv = dense.matvec(&v);
            let q: f64 = v.iter().zip(&hv).map(|(a, b)| a * b).sum();
            assert!(q >= -1e-10, "quadratic form {q}");
        }
    }

    #[test]
    fn ef_diag_zero_residual_and_single_sample() {
        let net = Network::<f64>::from_params(
            vec![LayerSpec::new(2, 1, Activation::Identity, false)],
            vec![1.0, 2.0],
        )
        .unwrap();
        let lik = Likelihood::gaussian(1.0).unwrap();
        // Perfect fit: residual zero -> h = 0.
        let x = Matrix::new(1, 2, vec![1.0, 1.0]).unwrap();
        let y = vec![Target::Values(vec![3.0])];
        let CurvatureEstimate::Diag(h) = ef_diag(&net, &lik, &batch_from(x, y)).unwrap() else {
            panic!()
        };
        assert!(h.iter().all(|&v| v == 0.0));

        // Single sample: h equals the squared gradient.
        let x = Matrix::new(1, 2, vec![1.0, 1.0]).unwrap();
        let y = vec![Target::Values(vec![5.0])];
        let batch = Batch { x, y };
        let (grad, _) = {
            let trace = net.forward_trace(&batch.x).unwrap();
            let up = nll_upstream(&lik, trace.output(), &batch.y).unwrap();
            net.backward_from_trace(&trace, &up).unwrap()
        };
        let CurvatureEstimate::Diag(h) =
            ef_diag(&net, &lik, std::slice::from_ref(&batch)).unwrap()
        else {
            panic!()
        };
        for p in 0..2 {
            assert!((h[p] - grad[p] * grad[p]).abs() < 1e-12);
        }
    }

    #[test]
    fn ef_diag_matches_per_sample_loop() {
        let net = random_net(&[3, 4, 2], 13);
        let lik = Likelihood::<f64>::Categorical;
        let x = Matrix::from_fn(5, 3, |n, i| 0.4 * n as f64 - 0.3 * i as f64);
        let y: Vec<Target<f64>> = (0..5).map(|n| Target::Class(n % 2)).collect();
        let batch = Batch {
            x: x.clone(),
            y: y.clone(),
        };
        let CurvatureEstimate::Diag(h) =
            ef_diag(&net, &lik, std::slice::from_ref(&batch)).unwrap()
        else {
            panic!()
        };
        let mut expect = vec![0.0; net.param_count()];
        for n in 0..5 {
            let xn = Matrix::new(1, 3, x.row(n).to_vec()).unwrap();
            let single = Batch {
                x: xn.clone(),
                y: vec![y[n].clone()],
            };
            let trace = net.forward_trace(&single.x).unwrap();
            let up = nll_upstream(&lik, trace.output(), &single.y).unwrap();
            let (g, _) = net.backward_from_trace(&trace, &up).unwrap();
            for p in 0..expect.len() {
                expect[p] += g[p] * g[p];
            }
        }
        for p in 0..expect.len() {
            assert!((h[p] - expect[p]).abs() < 1e-10);
        }
    }

    #[test]
    fn curvature_is_additive_over_duplicated_data() {
        let net = random_net(&[2, 3, 2], 3);
        let lik = Likelihood::<f64>::Categorical;
        let x = Matrix::from_fn(3, 2, |n, i| 0.3 * n as f64 + 0.1 * i as f64);
        let y = vec![Target::Class(0), Target::Class(1), Target::Class(1)];
        let single = Batch {
            x: x.clone(),
            y: y.clone(),
        };
        let doubled = vec![single.clone(), single.clone()];
        for f in [ggn_diag::<f64>, ef_diag::<f64>] {
            let CurvatureEstimate::Diag(h1) = f(&net, &lik, std::slice::from_ref(&single)).unwrap()
            else {
                panic!()
            };
            let CurvatureEstimate::Diag(h2) = f(&net, &lik, &doubled).unwrap() else {
                panic!()
            };
            for p in 0..h1.len() {
                assert!((h2[p] - 2.0 * h1[p]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kfac_rank1_identity_with_ef() {
        // Single sample, single linear layer: diag(A ⊗ G) equals ef_diag.
        let net = Network::<f64>::from_params(
            vec![LayerSpec::new(3, 2, Activation::Identity, true)],
            vec![0.2, -0.4, 0.6, 0.1, -0.3, 0.5, 0.05, -0.15],
        )
        .unwrap();
        let lik = Likelihood::<f64>::Categorical;
        let x = Matrix::new(1, 3, vec![0.7, -0.2, 1.1]).unwrap();
        let y = vec![Target::Class(1)];
        let batch = Batch { x, y };
        let CurvatureEstimate::Kfac(layers) = kfac(
            &net,
            &lik,
            std::slice::from_ref(&batch),
            KfacMode::EmpiricalFisher,
        )
        .unwrap() else {
            panic!()
        };
        let CurvatureEstimate::Diag(h) =
            ef_diag(&net, &lik, std::slice::from_ref(&batch)).unwrap()
        else {
            panic!()
        };
        let kd = kfac_diag(&layers[0]);
        for p in 0..net.param_count() {
            assert!((kd[p] - h[p]).abs() < 1e-12, "p={p}: {} vs {}", kd[p], h[p]);
        }
    }

    #[test]
    fn kfac_zero_gradients_zero_g() {
        // Gaussian with zero residuals: EF output gradients vanish.
        let net = Network::<f64>::from_params(
            vec![LayerSpec::new(2, 1, Activation::Identity, false)],
            vec![1.0, 1.0],
        )
        .unwrap();
        let lik = Likelihood::gaussian(1.0).unwrap();
        let x = Matrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let y = vec![Target::Values(vec![1.0]), Target::Values(vec![1.0])];
        let CurvatureEstimate::Kfac(layers) =
            kfac(&net, &lik, &batch_from(x, y), KfacMode::EmpiricalFisher).unwrap()
        else {
            panic!()
        };
        assert_eq!(layers[0].g.max_abs(), 0.0);
        assert!(layers[0].eig_g.eigenvalues.iter().all(|&l| l.abs() < 1e-15));
    }

    #[test]
    fn kfac_a_factor_matches_loop() {
        let net = random_net(&[3, 2], 21);
        let lik = Likelihood::<f64>::Categorical;
        let x = Matrix::from_fn(4, 3, |n, i| 0.25 * n as f64 - 0.5 * i as f64);
        let y: Vec<Target<f64>> = (0..4).map(|n| Target::Class(n % 2)).collect();
        let batch = Batch {
            x: x.clone(),
            y,
        };
        let CurvatureEstimate::Kfac(layers) = kfac(
            &net,
            &lik,
            std::slice::from_ref(&batch),
            KfacMode::EmpiricalFisher,
        )
        .unwrap() else {
            panic!()
        };
        // A = (1/N) Σ ã ãᵀ with ã = (x, 1).
        let mut expect = Matrix::<f64>::zeros(4, 4);
        for n in 0..4 {
            let aug = [x.get(n, 0), x.get(n, 1), x.get(n, 2), 1.0];
            for i in 0..4 {
                for j in 0..4 {
                    expect.set(i, j, expect.get(i, j) + aug[i] * aug[j] / 4.0);
                }
            }
        }
        assert!(layers[0].a.max_abs_diff(&expect) < 1e-12);
        assert!(layers[0].a.asymmetry() < 1e-12);
        assert!(layers[0].g.asymmetry() < 1e-12);
    }

    #[test]
    fn kfac_diag_examples_and_dense_oracle() {
        let a = Matrix::diag(&[2.0, 3.0]);
        let g = Matrix::diag(&[5.0, 7.0]);
        let layer = KfacLayer::from_factors(a, g).unwrap();
        assert_eq!(kfac_diag(&layer), vec![10.0, 14.0, 15.0, 21.0]);

        let id = KfacLayer::from_factors(Matrix::identity(3), Matrix::identity(2)).unwrap();
        assert!(kfac_diag(&id).iter().all(|&v| (v - 1.0).abs() < 1e-15));

        let mut rng = Rng::new(6);
        let mk = |n: usize, rng: &mut Rng| {
            let m = Matrix::from_fn(n, n, |_, _| rng.normal());
            m.matmul_tt(false, &m, true) // PSD
        };
        let a = mk(3, &mut rng);
        let g = mk(4, &mut rng);
        let dense = kron(&a, &g).unwrap();
        let layer = KfacLayer::from_factors(a, g).unwrap();
        let kd = kfac_diag(&layer);
        for (p, &v) in kd.iter().enumerate() {
            assert!((v - dense.get(p, p)).abs() < 1e-12);
        }
    }

    #[test]
    fn kfac_ggn_exact_handles_multiple_columns() {
        let net = random_net(&[2, 3], 31);
        let lik = Likelihood::<f64>::Categorical;
        let x = Matrix::from_fn(3, 2, |n, i| 0.3 * (n as f64 + 1.0) * (i as f64 - 0.5));
        let y = vec![Target::Class(0), Target::Class(2), Target::Class(1)];
        let batch = Batch { x, y };
        let CurvatureEstimate::Kfac(layers) = kfac(
            &net,
            &lik,
            std::slice::from_ref(&batch),
            KfacMode::GgnExact,
        )
        .unwrap() else {
            panic!()
        };
        // For a single linear layer the G factor is Σ_n Λ_n.
        let trace = net.forward_trace(&batch.x).unwrap();
        let mut expect = Matrix::<f64>::zeros(3, 3);
        for n in 0..3 {
            let lam = lik
                .output_hessian(trace.output().row(n), &batch.y[n])
                .unwrap();
            expect = expect.add(&lam);
        }
        assert!(layers[0].g.max_abs_diff(&expect) < 1e-10);
    }

    #[test]
    fn kfac_sampled_is_seed_reproducible() {
        let net = random_net(&[2, 2], 40);
        let lik = Likelihood::<f64>::Categorical;
        let x = Matrix::from_fn(6, 2, |n, i| 0.2 * n as f64 + 0.1 * i as f64);
        let y: Vec<Target<f64>> = (0..6).map(|n| Target::Class(n % 2)).collect();
        let batch = Batch { x, y };
        let run = |seed| {
            let CurvatureEstimate::Kfac(layers) = kfac(
                &net,
                &lik,
                std::slice::from_ref(&batch),
                KfacMode::GgnSampled { seed },
            )
            .unwrap() else {
                panic!()
            };
            layers[0].g.clone()
        };
        assert!(run(7).max_abs_diff(&run(7)) == 0.0);
        assert!(run(7).max_abs_diff(&run(8)) > 0.0);
    }
}
