//! Learnable backscatter model: maps a depth map to an estimated
//! backscatter image through exponential activations and a sigmoid.
//!
//! Per channel, with `P` layers,
//!
//! ```text
//! s(z)  = sum_p [ b_inf * ceaf(rate1[p] * z) + b_res * eaf(rate2[p] * z) ]
//! pred  = sigmoid(s)
//! ```
//!
//! and fitting minimizes an adaptive Huber penalty on the signed residual
//! `observed - pred`, which drives the prediction toward the observed
//! image where the direct signal is weak (shadowed pixels) while bright
//! regions fall into the linear branch and lose influence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::sigmoid;
use crate::raster::{DepthMap, ImageField, ImageRgb};

/// Exponential activation: 1 on the non-positive branch, exp(-s) beyond.
#[inline]
pub fn eaf(s: f64) -> f64 {
    if s <= 0.0 {
        1.0
    } else {
        (-s).exp()
    }
}

/// Complement of [`eaf`] on the positive branch: 0 for s <= 0, else
/// 1 - exp(-s). `b_inf * ceaf(rate * z)` reproduces the saturating growth
/// of the physical backscatter curve.
#[inline]
pub fn ceaf(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        1.0 - (-s).exp()
    }
}

/// Derivative of [`eaf`]; the kink at s = 0 takes the zero subgradient.
#[inline]
fn eaf_deriv(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        -(-s).exp()
    }
}

/// Derivative of [`ceaf`]; the kink at s = 0 takes the zero subgradient.
#[inline]
fn ceaf_deriv(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        (-s).exp()
    }
}

/// Adaptive Huber loss configuration. `beta = 2` makes the quadratic and
/// linear branches meet exactly at |r| = delta.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct HuberConfig {
    pub delta: f64,
    pub beta: f64,
}

impl Default for HuberConfig {
    fn default() -> Self {
        Self { delta: 0.5, beta: 2.0 }
    }
}

impl HuberConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidArgument {
                what: "huber delta",
                why: format!("{} (must be > 0)", self.delta),
            });
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidArgument {
                what: "huber beta",
                why: format!("{} (must be > 0)", self.beta),
            });
        }
        Ok(())
    }

    /// Pointwise penalty: quadratic inside |r| <= delta, linear outside.
    #[inline]
    pub fn penalty(&self, r: f64) -> f64 {
        let a = r.abs();
        if a <= self.delta {
            r * r
        } else {
            self.beta * self.delta * (a - self.delta / 2.0)
        }
    }

    /// Derivative of [`HuberConfig::penalty`]; |r| = delta takes the
    /// quadratic branch.
    #[inline]
    pub fn penalty_deriv(&self, r: f64) -> f64 {
        if r.abs() <= self.delta {
            2.0 * r
        } else {
            self.beta * self.delta * r.signum()
        }
    }
}

/// Per-channel learnable backscatter parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackscatterChannel {
    /// Veiling amplitude, kept in [0,1] by projection.
    pub b_inf: f64,
    /// Residual amplitude, kept in [0,1] by projection.
    pub b_res: f64,
    /// Growth-rate kernel per layer, >= 0.
    pub rate1: Vec<f64>,
    /// Decay-rate kernel per layer, >= 0.
    pub rate2: Vec<f64>,
}

/// Learnable backscatter parameters for all three channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackscatterParams {
    pub channels: [BackscatterChannel; 3],
}

impl BackscatterParams {
    pub fn layers(&self) -> usize {
        self.channels[0].rate1.len()
    }

    /// Deterministic initialization: `b_inf` starts at the darkest-percentile
    /// channel mean (backscatter dominates shadows), `b_res` at 0.01, and
    /// both rate kernels at 1.
    pub fn init_from_image(observed: &ImageRgb, layers: usize) -> Self {
        let layers = layers.max(1);
        let channels = [0, 1, 2].map(|c| {
            let mut values: Vec<f64> = observed.channel(c).collect();
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let take = ((values.len() as f64) * 0.01).ceil() as usize;
            let take = take.clamp(1, values.len());
            let dark_mean = values[..take].iter().sum::<f64>() / take as f64;
            BackscatterChannel {
                b_inf: dark_mean.clamp(0.0, 1.0),
                b_res: 0.01,
                rate1: vec![1.0; layers],
                rate2: vec![1.0; layers],
            }
        });
        Self { channels }
    }

    /// Pre-activation sum for one channel at range z.
    pub fn preactivation(&self, channel: usize, z: f64) -> f64 {
        let ch = &self.channels[channel];
        let mut s = 0.0;
        for p in 0..ch.rate1.len() {
            s += ch.b_inf * ceaf(ch.rate1[p] * z) + ch.b_res * eaf(ch.rate2[p] * z);
        }
        s
    }

    /// Flat parameter order per channel: b_inf, b_res, rate1[..], rate2[..];
    /// channels concatenated R, G, B. The optimizer and the checkpoint
    /// format both rely on this layout.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        for ch in &self.channels {
            flat.push(ch.b_inf);
            flat.push(ch.b_res);
            flat.extend_from_slice(&ch.rate1);
            flat.extend_from_slice(&ch.rate2);
        }
        flat
    }

    /// Inverse of [`BackscatterParams::to_flat`]. Values are not
    /// validated; finite-difference probes may pass points slightly
    /// outside the feasible box.
    pub fn from_flat(layers: usize, flat: &[f64]) -> Self {
        let stride = 2 + 2 * layers;
        assert_eq!(flat.len(), 3 * stride, "flat parameter length");
        let channels = [0, 1, 2].map(|c| {
            let base = c * stride;
            BackscatterChannel {
                b_inf: flat[base],
                b_res: flat[base + 1],
                rate1: flat[base + 2..base + 2 + layers].to_vec(),
                rate2: flat[base + 2 + layers..base + stride].to_vec(),
            }
        });
        Self { channels }
    }

    /// Projection box per flat coordinate: amplitudes in [0,1], rates in
    /// [0, inf).
    pub fn bounds(layers: usize) -> Vec<(f64, f64)> {
        let mut bounds = Vec::new();
        for _ in 0..3 {
            bounds.push((0.0, 1.0));
            bounds.push((0.0, 1.0));
            for _ in 0..2 * layers {
                bounds.push((0.0, f64::INFINITY));
            }
        }
        bounds
    }
}

/// Evaluate the model over a depth map. Outputs are sigmoid values,
/// strictly inside (0,1).
pub fn predict_backscatter(params: &BackscatterParams, depth: &DepthMap) -> ImageRgb {
    let field = ImageField::from_fn(depth.width(), depth.height(), |x, y| {
        let z = depth.at(x, y);
        [
            sigmoid(params.preactivation(0, z)),
            sigmoid(params.preactivation(1, z)),
            sigmoid(params.preactivation(2, z)),
        ]
    });
    // Sigmoid output is already in (0,1); clamp is a no-op type change.
    field.clamp_to_rgb().0
}

/// Signed residual `observed - backscatter`, kept unclamped for the loss.
pub fn direct_residual(observed: &ImageRgb, backscatter: &ImageRgb) -> Result<ImageField> {
    if !observed.same_dims(backscatter) {
        return Err(Error::DimensionMismatch {
            what: "observed vs backscatter",
            expected_w: observed.width(),
            expected_h: observed.height(),
            found_w: backscatter.width(),
            found_h: backscatter.height(),
        });
    }
    let data = observed
        .data()
        .iter()
        .zip(backscatter.data().iter())
        .map(|(o, b)| o - b)
        .collect();
    Ok(ImageField::from_vec(observed.width(), observed.height(), data))
}

/// Mean adaptive-Huber penalty over all pixels and channels.
pub fn backscatter_loss(residual: &ImageField, cfg: &HuberConfig) -> f64 {
    let n = residual.data().len() as f64;
    crate::numeric::sum(residual.data().iter().map(|&r| cfg.penalty(r))) / n
}

/// Loss and exact analytic gradient in the flat parameter layout.
///
/// Kinks (|r| = delta, activation argument 0) take the subgradients
/// documented on the pointwise functions; they are measure-zero and the
/// gradient tests sample away from them.
pub fn backscatter_loss_grad(
    params: &BackscatterParams,
    observed: &ImageRgb,
    depth: &DepthMap,
    cfg: &HuberConfig,
) -> Result<(f64, Vec<f64>)> {
    depth.matches_image(observed)?;
    cfg.validate()?;
    let layers = params.layers();
    let stride = 2 + 2 * layers;
    let mut grad = vec![0.0; 3 * stride];
    let n = (observed.pixels() * 3) as f64;
    let mut loss_terms = Vec::with_capacity(observed.pixels() * 3);

    for y in 0..observed.height() {
        for x in 0..observed.width() {
            let z = depth.at(x, y);
            let pix = observed.pixel(x, y);
            for c in 0..3 {
                let ch = &params.channels[c];
                let s = params.preactivation(c, z);
                let pred = sigmoid(s);
                let r = pix[c] - pred;
                loss_terms.push(cfg.penalty(r));

                // dL/ds for this component, including the 1/n reduction.
                let g_s = -cfg.penalty_deriv(r) / n * pred * (1.0 - pred);
                if g_s == 0.0 {
                    continue;
                }
                let base = c * stride;
                for p in 0..layers {
                    let a1 = ch.rate1[p] * z;
                    let a2 = ch.rate2[p] * z;
                    grad[base] += g_s * ceaf(a1);
                    grad[base + 1] += g_s * eaf(a2);
                    grad[base + 2 + p] += g_s * ch.b_inf * ceaf_deriv(a1) * z;
                    grad[base + 2 + layers + p] += g_s * ch.b_res * eaf_deriv(a2) * z;
                }
            }
        }
    }
    let loss = crate::numeric::sum(loss_terms) / n;
    Ok((loss, grad))
}
