//! Forward underwater image formation: attenuation of the direct signal
//! plus range-dependent backscatter.
//!
//! Per channel, an observed image forms as
//!
//! ```text
//! I(z)   = J * exp(-a_D(z) * z) + B(z)
//! B(z)   = B_inf * (1 - exp(-rate1 * z)) + B_res * exp(-rate2 * z)
//! a_D(z) = sum_p a_prime[p] * exp(-a[p] * z)
//! ```
//!
//! The simulator generates degraded images from known parameters, which
//! the inversion tests treat as ground truth.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{DepthMap, ImageField, ImageRgb};

/// One attenuation term: `amplitude * exp(-rate * z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttenPair {
    pub amplitude: f64,
    pub rate: f64,
}

/// Per-channel formation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelFormation {
    /// Veiling-light asymptote of the backscatter curve, in [0,1].
    pub b_inf: f64,
    /// Residual near-field backscatter component, in [0,1].
    pub b_res: f64,
    /// Backscatter growth rate (>= 0).
    pub rate1: f64,
    /// Residual decay rate (>= 0).
    pub rate2: f64,
    /// Attenuation series; amplitudes and rates each in [0,1].
    pub atten: Vec<AttenPair>,
}

/// Full RGB formation model with per-channel parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationParams {
    pub channels: [ChannelFormation; 3],
}

/// Result of the forward model with saturation bookkeeping.
#[derive(Debug, Clone)]
pub struct Degraded {
    pub image: ImageRgb,
    /// Number of components clamped into [0,1]; nonzero means the
    /// synthetic sensor saturated and information was lost.
    pub clamped: usize,
}

impl ChannelFormation {
    fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v) && v.is_finite();
        if !in_unit(self.b_inf) || !in_unit(self.b_res) {
            return Err(Error::InvalidArgument {
                what: "formation amplitude",
                why: format!("b_inf={}, b_res={} (must be in [0,1])", self.b_inf, self.b_res),
            });
        }
        if !(self.rate1 >= 0.0 && self.rate1.is_finite() && self.rate2 >= 0.0 && self.rate2.is_finite()) {
            return Err(Error::InvalidArgument {
                what: "backscatter rate",
                why: format!("rate1={}, rate2={} (must be >= 0)", self.rate1, self.rate2),
            });
        }
        if self.atten.is_empty() {
            return Err(Error::InvalidArgument {
                what: "attenuation series",
                why: "needs at least one term".into(),
            });
        }
        for pair in &self.atten {
            if !in_unit(pair.amplitude) || !in_unit(pair.rate) {
                return Err(Error::InvalidArgument {
                    what: "attenuation pair",
                    why: format!("{pair:?} (amplitude and rate must be in [0,1])"),
                });
            }
        }
        Ok(())
    }

    /// Range-dependent attenuation coefficient `a_D(z)`.
    pub fn attenuation_coefficient(&self, z: f64) -> f64 {
        self.atten
            .iter()
            .map(|p| p.amplitude * (-p.rate * z).exp())
            .sum()
    }

    /// Backscatter curve `B(z)`, before any clamping.
    pub fn backscatter_at(&self, z: f64) -> f64 {
        self.b_inf * (1.0 - (-self.rate1 * z).exp()) + self.b_res * (-self.rate2 * z).exp()
    }
}

impl FormationParams {
    pub fn validate(&self) -> Result<()> {
        for ch in &self.channels {
            ch.validate()?;
        }
        Ok(())
    }

    pub fn attenuation_coefficient(&self, channel: usize, z: f64) -> f64 {
        self.channels[channel].attenuation_coefficient(z)
    }
}

/// Evaluate the backscatter image for a depth map. Values are clamped to
/// [0,1] (`b_inf + b_res` may reach 2); the clamp count is returned so
/// oracle tests can see when saturation occurred.
pub fn synthesize_backscatter(params: &FormationParams, depth: &DepthMap) -> Result<(ImageRgb, usize)> {
    params.validate()?;
    let field = ImageField::from_fn(depth.width(), depth.height(), |x, y| {
        let z = depth.at(x, y);
        [
            params.channels[0].backscatter_at(z),
            params.channels[1].backscatter_at(z),
            params.channels[2].backscatter_at(z),
        ]
    });
    Ok(field.clamp_to_rgb())
}

/// Attenuate a clean image along the depth map:
/// `out = clean * exp(-a_D(z) * z)` per pixel and channel.
pub fn attenuate(clean: &ImageRgb, depth: &DepthMap, params: &FormationParams) -> Result<ImageRgb> {
    params.validate()?;
    depth.matches_image(clean)?;
    let mut data = Vec::with_capacity(clean.data().len());
    for y in 0..clean.height() {
        for x in 0..clean.width() {
            let z = depth.at(x, y);
            let p = clean.pixel(x, y);
            for (c, v) in p.iter().enumerate() {
                let a = params.channels[c].attenuation_coefficient(z);
                data.push(v * (-a * z).exp());
            }
        }
    }
    ImageRgb::new(clean.width(), clean.height(), data)
}

/// Full forward model: attenuated direct signal plus backscatter, clamped
/// to the sensor range with clamp events counted.
pub fn degrade(clean: &ImageRgb, depth: &DepthMap, params: &FormationParams) -> Result<Degraded> {
    let direct = attenuate(clean, depth, params)?;
    let (backscatter, _) = synthesize_backscatter(params, depth)?;
    let data: Vec<f64> = direct
        .data()
        .iter()
        .zip(backscatter.data().iter())
        .map(|(d, b)| d + b)
        .collect();
    let field = ImageField::from_vec(clean.width(), clean.height(), data);
    let (image, clamped) = field.clamp_to_rgb();
    Ok(Degraded { image, clamped })
}

/// Sampling ranges for synthetic datasets. Defaults produce visible but
/// mostly unsaturated degradation; the exact ranges ship in every dataset
/// sidecar.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerRanges {
    pub b_inf: (f64, f64),
    pub b_res: (f64, f64),
    pub rate1: (f64, f64),
    pub rate2: (f64, f64),
    pub atten_amplitude: (f64, f64),
    pub atten_rate: (f64, f64),
    /// Number of attenuation terms per channel.
    pub atten_terms: usize,
}

impl Default for SamplerRanges {
    fn default() -> Self {
        Self {
            b_inf: (0.3, 0.9),
            b_res: (0.0, 0.1),
            rate1: (0.5, 5.0),
            rate2: (0.5, 5.0),
            atten_amplitude: (0.2, 1.0),
            atten_rate: (0.0, 1.0),
            atten_terms: 1,
        }
    }
}

/// Draw formation parameters uniformly from the configured ranges.
pub fn sample_formation_params<R: Rng>(rng: &mut R, ranges: &SamplerRanges) -> FormationParams {
    let mut draw = |lo_hi: (f64, f64)| {
        if lo_hi.0 == lo_hi.1 {
            lo_hi.0
        } else {
            rng.random_range(lo_hi.0..=lo_hi.1)
        }
    };
    let mut channel = || ChannelFormation {
        b_inf: draw(ranges.b_inf),
        b_res: draw(ranges.b_res),
        rate1: draw(ranges.rate1),
        rate2: draw(ranges.rate2),
        atten: (0..ranges.atten_terms.max(1))
            .map(|_| AttenPair {
                amplitude: draw(ranges.atten_amplitude),
                rate: draw(ranges.atten_rate),
            })
            .collect(),
    };
    FormationParams {
        channels: [channel(), channel(), channel()],
    }
}
