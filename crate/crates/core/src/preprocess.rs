//! White balance and gamma correction applied ahead of model fitting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::mean;
use crate::raster::ImageRgb;

/// Preprocessing knobs. Off by default so raw and preprocessed runs come
/// from the same binary.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub white_balance: bool,
    pub gamma: f64,
    /// Clamp white-balance output back into [0,1].
    pub wb_clip: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            white_balance: true,
            gamma: 0.8,
            wb_clip: true,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidArgument {
                what: "preprocess.gamma",
                why: format!("{} (must be > 0)", self.gamma),
            });
        }
        Ok(())
    }
}

/// Gray-world white balance: scale each channel by `mean_gray / mean_c`
/// so all channel means equal the global gray mean.
pub fn gray_world_white_balance(img: &ImageRgb, clip: bool) -> Result<ImageRgb> {
    let means = [
        mean(img.channel(0)),
        mean(img.channel(1)),
        mean(img.channel(2)),
    ];
    for (channel, m) in means.iter().enumerate() {
        if *m <= 0.0 {
            return Err(Error::ZeroMeanChannel { channel });
        }
    }
    let gray = (means[0] + means[1] + means[2]) / 3.0;
    let gains = [gray / means[0], gray / means[1], gray / means[2]];
    let data = img
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let g = gains[i % 3] * v;
            if clip {
                g.clamp(0.0, 1.0)
            } else {
                g
            }
        })
        .collect();
    // Without clipping, gains can push components above 1; callers asking
    // for unclipped output get the raw field clamped only at the type
    // boundary.
    if clip {
        ImageRgb::new(img.width(), img.height(), data)
    } else {
        let field = crate::raster::ImageField::from_vec(img.width(), img.height(), data);
        Ok(field.clamp_to_rgb().0)
    }
}

/// Unclipped white-balanced samples, for tests that check the equal-means
/// property before any clamping.
pub fn gray_world_gains(img: &ImageRgb) -> Result<[f64; 3]> {
    let means = [
        mean(img.channel(0)),
        mean(img.channel(1)),
        mean(img.channel(2)),
    ];
    for (channel, m) in means.iter().enumerate() {
        if *m <= 0.0 {
            return Err(Error::ZeroMeanChannel { channel });
        }
    }
    let gray = (means[0] + means[1] + means[2]) / 3.0;
    Ok([gray / means[0], gray / means[1], gray / means[2]])
}

/// Map every component to `component^gamma`. Monotone, fixes 0 and 1.
pub fn gamma_correct(img: &ImageRgb, gamma: f64) -> Result<ImageRgb> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument {
            what: "gamma",
            why: format!("{gamma} (must be > 0)"),
        });
    }
    let data = img.data().iter().map(|&v| v.powf(gamma)).collect();
    ImageRgb::new(img.width(), img.height(), data)
}

/// Apply the configured preprocessing steps in order: white balance, then
/// gamma.
pub fn preprocess(img: &ImageRgb, cfg: &PreprocessConfig) -> Result<ImageRgb> {
    cfg.validate()?;
    let balanced = if cfg.white_balance {
        gray_world_white_balance(img, cfg.wb_clip)?
    } else {
        img.clone()
    };
    gamma_correct(&balanced, cfg.gamma)
}
