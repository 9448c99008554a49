//! Structured Gaussian prior precisions.
//!
//! Four structures are supported: scalar, layer-wise, unit-wise, and
//! parameter-wise. Hyperparameters live in log-space so positivity is
//! structural. `δ` is a precision throughout: larger values shrink harder.
//!
//! Unit-wise priors assign one log-precision per unit, including a vector for
//! the input "layer 0" (the input features). A weight from unit `i` of
//! unit-layer `l-1` to unit `j` of unit-layer `l` gets the product precision
//! `δ_{l-1,i} * δ_{l,j}`; a bias takes only the output-side factor `δ_{l,j}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Network, ParamCoord};
use crate::scalar::Scalar;

/// Prior hyperparameters in log-space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum PriorSpec<S> {
    Scalar { log_delta: S },
    LayerWise { log_delta: Vec<S> },
    UnitWise { log_delta: Vec<Vec<S>> },
    ParameterWise { log_delta: Vec<S> },
}

/// Names the four prior structures without carrying values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    Scalar,
    LayerWise,
    UnitWise,
    ParameterWise,
}

/// One strictly positive precision per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionVector<S>(Vec<S>);

impl<S: Scalar> PrecisionVector<S> {
    pub fn new(delta: Vec<S>) -> Result<Self> {
        if delta.iter().any(|d| !d.is_finite() || *d <= S::zero()) {
            return Err(Error::numerical(
                "precision vector entries must be finite and > 0",
            ));
        }
        Ok(Self(delta))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<S> {
        self.0
    }
}

impl<S: Scalar> PriorSpec<S> {
    /// A spec of the given structure with every precision set to `delta`
    /// (weights under unit-wise priors get `delta` per factor, so `delta²`).
    pub fn constant(kind: PriorKind, net: &Network<S>, delta: S) -> Result<Self> {
        if delta <= S::zero() || !delta.is_finite() {
            return Err(Error::structural("prior precision must be > 0"));
        }
        let log_delta = delta.ln();
        Ok(match kind {
            PriorKind::Scalar => PriorSpec::Scalar { log_delta },
            PriorKind::LayerWise => PriorSpec::LayerWise {
                log_delta: vec![log_delta; net.num_layers()],
            },
            PriorKind::UnitWise => {
                let mut per_layer = vec![vec![log_delta; net.input_dim()]];
                for l in 0..net.num_layers() {
                    per_layer.push(vec![log_delta; net.layers()[l].out_dim]);
                }
                PriorSpec::UnitWise {
                    log_delta: per_layer,
                }
            }
            PriorKind::ParameterWise => PriorSpec::ParameterWise {
                log_delta: vec![log_delta; net.param_count()],
            },
        })
    }

    pub fn kind(&self) -> PriorKind {
        match self {
            PriorSpec::Scalar { .. } => PriorKind::Scalar,
            PriorSpec::LayerWise { .. } => PriorKind::LayerWise,
            PriorSpec::UnitWise { .. } => PriorKind::UnitWise,
            PriorSpec::ParameterWise { .. } => PriorKind::ParameterWise,
        }
    }

    fn check_shape(&self, net: &Network<S>) -> Result<()> {
        let ok = match self {
            PriorSpec::Scalar { .. } => true,
            PriorSpec::LayerWise { log_delta } => log_delta.len() == net.num_layers(),
            PriorSpec::UnitWise { log_delta } => {
                log_delta.len() == net.num_layers() + 1
                    && log_delta[0].len() == net.input_dim()
                    && (0..net.num_layers())
                        .all(|l| log_delta[l + 1].len() == net.layers()[l].out_dim)
            }
            PriorSpec::ParameterWise { log_delta } => log_delta.len() == net.param_count(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::structural(
                "prior spec shape does not match the network structure",
            ))
        }
    }

    /// Expands the hyperparameters to one precision per parameter.
    pub fn expand(&self, net: &Network<S>) -> Result<PrecisionVector<S>> {
        self.check_shape(net)?;
        let p = net.param_count();
        let mut out = vec![S::zero(); p];
        match self {
            PriorSpec::Scalar { log_delta } => {
                let d = log_delta.exp();
                out.iter_mut().for_each(|o| *o = d);
            }
            PriorSpec::LayerWise { log_delta } => {
                for l in 0..net.num_layers() {
                    let d = log_delta[l].exp();
                    for o in &mut out[net.layer_range(l)] {
                        *o = d;
                    }
                }
            }
            PriorSpec::ParameterWise { log_delta } => {
                for (o, ld) in out.iter_mut().zip(log_delta) {
                    *o = ld.exp();
                }
            }
            PriorSpec::UnitWise { log_delta } => {
                for idx in 0..p {
                    out[idx] = match net.coord_of(idx)? {
                        ParamCoord::Weight {
                            layer,
                            input,
                            output,
                        } => (log_delta[layer][input] + log_delta[layer + 1][output]).exp(),
                        ParamCoord::Bias { layer, output } => log_delta[layer + 1][output].exp(),
                    };
                }
            }
        }
        PrecisionVector::new(out)
    }

    /// Flattened view of the log-space hyperparameters, in a fixed order.
    pub fn hyper_values(&self) -> Vec<S> {
        match self {
            PriorSpec::Scalar { log_delta } => vec![*log_delta],
            PriorSpec::LayerWise { log_delta } => log_delta.clone(),
            PriorSpec::ParameterWise { log_delta } => log_delta.clone(),
            PriorSpec::UnitWise { log_delta } => log_delta.iter().flatten().copied().collect(),
        }
    }

    /// Writes back a flattened hyperparameter vector (inverse of
    /// [`PriorSpec::hyper_values`]).
    pub fn set_hyper_values(&mut self, values: &[S]) -> Result<()> {
        let needed = self.hyper_values().len();
        if values.len() != needed {
            return Err(Error::structural(format!(
                "expected {needed} hyperparameters, got {}",
                values.len()
            )));
        }
        match self {
            PriorSpec::Scalar { log_delta } => *log_delta = values[0],
            PriorSpec::LayerWise { log_delta } | PriorSpec::ParameterWise { log_delta } => {
                log_delta.copy_from_slice(values)
            }
            PriorSpec::UnitWise { log_delta } => {
                let mut k = 0;
                for layer in log_delta.iter_mut() {
                    let n = layer.len();
                    layer.copy_from_slice(&values[k..k + n]);
                    k += n;
                }
            }
        }
        Ok(())
    }

    /// Chain rule from a gradient w.r.t. the expanded per-parameter `δ` to a
    /// gradient w.r.t. the flattened log-space hyperparameters.
    ///
    /// Handles the exp reparameterization and, for unit-wise priors, the
    /// product rule distributing each weight's gradient to both factor units.
    pub fn chain_to_hypers(&self, net: &Network<S>, grad_delta: &[S]) -> Result<Vec<S>> {
        self.check_shape(net)?;
        if grad_delta.len() != net.param_count() {
            return Err(Error::structural("gradient length mismatch"));
        }
        let delta = self.expand(net)?;
        let delta = delta.as_slice();
        match self {
            PriorSpec::Scalar { .. } => {
                let g = grad_delta
                    .iter()
                    .zip(delta)
                    .map(|(&g, &d)| g * d)
                    .sum::<S>();
                Ok(vec![g])
            }
            PriorSpec::LayerWise { log_delta } => {
                let mut out = vec![S::zero(); log_delta.len()];
                for (l, o) in out.iter_mut().enumerate() {
                    for p in net.layer_range(l) {
                        *o += grad_delta[p] * delta[p];
                    }
                }
                Ok(out)
            }
            PriorSpec::ParameterWise { .. } => Ok(grad_delta
                .iter()
                .zip(delta)
                .map(|(&g, &d)| g * d)
                .collect()),
            PriorSpec::UnitWise { log_delta } => {
                let mut out: Vec<Vec<S>> =
                    log_delta.iter().map(|v| vec![S::zero(); v.len()]).collect();
                for p in 0..net.param_count() {
                    // d δ_p / d u = δ_p for every log-factor u entering δ_p.
                    let contrib = grad_delta[p] * delta[p];
                    match net.coord_of(p)? {
                        ParamCoord::Weight {
                            layer,
                            input,
                            output,
                        } => {
                            out[layer][input] += contrib;
                            out[layer + 1][output] += contrib;
                        }
                        ParamCoord::Bias { layer, output } => out[layer + 1][output] += contrib,
                    }
                }
                Ok(out.into_iter().flatten().collect())
            }
        }
    }
}

/// Log density of the zero-mean Gaussian prior:
/// `½ Σ_p (ln δ_p − δ_p θ_p² − ln 2π)`.
pub fn log_prior<S: Scalar>(delta: &PrecisionVector<S>, theta: &[S]) -> Result<S> {
    if delta.len() != theta.len() {
        return Err(Error::structural("precision/parameter length mismatch"));
    }
    let ln2pi = S::cast(std::f64::consts::TAU).ln();
    let half = S::cast(0.5);
    let mut acc = S::zero();
    for (&d, &t) in delta.as_slice().iter().zip(theta) {
        acc += d.ln() - d * t * t - ln2pi;
    }
    Ok(half * acc)
}
