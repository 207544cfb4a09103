//! The two-phase per-image enhancement pipeline.
//!
//! Phase 1 fits the backscatter model against the adaptive Huber loss;
//! phase 2 freezes it, forms the signed direct image `I - B`, fits the
//! deattenuation model against the composite loss, and the output is
//! `clamp(direct * alpha, 0, 1)`. Everything is deterministic given the
//! configuration: fixed initialization, no randomness anywhere.

use serde::{Deserialize, Serialize};

use crate::backscatter::{
    backscatter_loss_grad, predict_backscatter, BackscatterParams, HuberConfig,
};
use crate::deatten::{
    deatten_loss_grad, predict_deattenuation, reconstruct, DeattenLossConfig, DeattenParams,
};
use crate::error::Result;
use crate::optim::{fit, FitTrace, OptimConfig};
use crate::preprocess::{preprocess, PreprocessConfig};
use crate::raster::{DepthMap, ImageField, ImageRgb};

/// Everything the two fitting phases need. One optimizer configuration
/// drives both phases.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EnhanceConfig {
    /// Backscatter layer count (rate-kernel pairs per channel).
    pub backscatter_layers: usize,
    /// Deattenuation exponential-term count per channel.
    pub deatten_terms: usize,
    pub huber: HuberConfig,
    pub deatten_loss: DeattenLossConfig,
    pub optim: OptimConfig,
    /// Apply white balance / gamma before fitting.
    pub preprocess_enabled: bool,
    pub preprocess: PreprocessConfig,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        Self {
            backscatter_layers: 1,
            deatten_terms: 1,
            huber: HuberConfig::default(),
            deatten_loss: DeattenLossConfig::default(),
            optim: OptimConfig::default(),
            preprocess_enabled: false,
            preprocess: PreprocessConfig::default(),
        }
    }
}

/// Warm-start state carried between images of a sequence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WarmStart {
    pub backscatter: BackscatterParams,
    pub deatten: DeattenParams,
}

/// Output of one enhancement run.
#[derive(Debug, Clone)]
pub struct EnhanceResult {
    pub image: ImageRgb,
    /// Components clamped when mapping the reconstruction into [0,1].
    pub clamped: usize,
    pub backscatter: BackscatterParams,
    pub deatten: DeattenParams,
    pub backscatter_trace: FitTrace,
    pub deatten_trace: FitTrace,
}

/// Run the full pipeline with default (deterministic) initialization.
pub fn enhance(observed: &ImageRgb, depth: &DepthMap, cfg: &EnhanceConfig) -> Result<EnhanceResult> {
    enhance_from(observed, depth, cfg, None)
}

/// Run the full pipeline, optionally warm-starting both parameter sets
/// from a previous image's fit.
pub fn enhance_from(
    observed: &ImageRgb,
    depth: &DepthMap,
    cfg: &EnhanceConfig,
    warm: Option<&WarmStart>,
) -> Result<EnhanceResult> {
    depth.matches_image(observed)?;
    cfg.huber.validate()?;
    cfg.deatten_loss.validate()?;
    cfg.optim.validate()?;

    let work = if cfg.preprocess_enabled {
        preprocess(observed, &cfg.preprocess)?
    } else {
        observed.clone()
    };

    // Phase 1: backscatter.
    let layers = cfg.backscatter_layers.max(1);
    let init_b = match warm {
        Some(w) if w.backscatter.layers() == layers => w.backscatter.clone(),
        _ => BackscatterParams::init_from_image(&work, layers),
    };
    let bounds_b = BackscatterParams::bounds(layers);
    let (flat_b, backscatter_trace) = fit(
        &init_b.to_flat(),
        &bounds_b,
        |theta| {
            let p = BackscatterParams::from_flat(layers, theta);
            backscatter_loss_grad(&p, &work, depth, &cfg.huber)
        },
        &cfg.optim,
    )?;
    let backscatter = BackscatterParams::from_flat(layers, &flat_b);

    // Signed direct image; the loss phase needs it unclamped.
    let predicted_b = predict_backscatter(&backscatter, depth);
    let direct = crate::backscatter::direct_residual(&work, &predicted_b)?;

    // Phase 2: deattenuation, with the backscatter frozen.
    let terms = cfg.deatten_terms.max(1);
    let init_d = match warm {
        Some(w) if w.deatten.terms() == terms => w.deatten.clone(),
        _ => DeattenParams::init(terms),
    };
    let bounds_d = DeattenParams::bounds(terms);
    let (flat_d, deatten_trace) = fit(
        &init_d.to_flat(),
        &bounds_d,
        |theta| {
            let p = DeattenParams::from_flat(terms, theta);
            let (breakdown, grad) = deatten_loss_grad(&p, &direct, depth, &cfg.deatten_loss)?;
            Ok((breakdown.total, grad))
        },
        &cfg.optim,
    )?;
    let deatten = DeattenParams::from_flat(terms, &flat_d);

    let alpha = predict_deattenuation(&deatten, depth, cfg.deatten_loss.alpha_cap);
    let reconstructed = reconstruct(&direct, &alpha)?;
    let (image, clamped) = reconstructed.clamp_to_rgb();

    Ok(EnhanceResult {
        image,
        clamped,
        backscatter,
        deatten,
        backscatter_trace,
        deatten_trace,
    })
}

/// The signed direct image for an already-fitted backscatter model;
/// exposed for diagnostics and tests.
pub fn direct_image(
    observed: &ImageRgb,
    depth: &DepthMap,
    backscatter: &BackscatterParams,
) -> Result<ImageField> {
    let predicted = predict_backscatter(backscatter, depth);
    crate::backscatter::direct_residual(observed, &predicted)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> EnhanceConfig {
        EnhanceConfig {
            optim: OptimConfig {
                max_iters: 120,
                ..OptimConfig::default()
            },
            ..EnhanceConfig::default()
        }
    }

    fn test_scene() -> (ImageRgb, DepthMap) {
        let img = ImageRgb::from_fn(8, 8, |x, y| {
            [
                0.55 + 0.02 * (x % 3) as f64,
                0.60 + 0.01 * (y % 4) as f64,
                0.58,
            ]
        })
        .unwrap();
        let depth = DepthMap::from_fn(8, 8, |x, y| 0.05 + 0.9 * ((x + y) as f64 / 14.0)).unwrap();
        (img, depth)
    }

    #[test]
    fn enhance_is_deterministic_bit_for_bit() {
        let (img, depth) = test_scene();
        let cfg = small_cfg();
        let a = enhance(&img, &depth, &cfg).unwrap();
        let b = enhance(&img, &depth, &cfg).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.backscatter, b.backscatter);
        assert_eq!(a.deatten, b.deatten);
        assert_eq!(a.backscatter_trace.losses, b.backscatter_trace.losses);
        assert_eq!(a.deatten_trace.losses, b.deatten_trace.losses);
    }

    #[test]
    fn near_zero_depth_gives_near_unit_amplification() {
        let img = ImageRgb::from_fn(6, 6, |x, y| {
            [0.5 + 0.03 * (x as f64 / 6.0), 0.55, 0.45 + 0.02 * (y as f64 / 6.0)]
        })
        .unwrap();
        // All-floor depth: z == 1e-3 everywhere would be constant, which
        // the loader rejects, but the pipeline itself accepts any map.
        let depth = DepthMap::from_fn(6, 6, |x, _| 1e-3 + 1e-6 * x as f64).unwrap();
        let cfg = small_cfg();
        let out = enhance(&img, &depth, &cfg).unwrap();
        // alpha = exp(z * a_D) with z ~ 1e-3 and a_D <= terms: within 0.2%.
        let direct = direct_image(&img, &depth, &out.backscatter).unwrap();
        let alpha = predict_deattenuation(&out.deatten, &depth, cfg.deatten_loss.alpha_cap);
        for v in alpha.data() {
            assert!((*v - 1.0).abs() < 2e-3, "alpha {v}");
        }
        // Output approximately clamp(direct).
        let (clamped_direct, _) = direct.clamp_to_rgb();
        for (o, d) in out.image.data().iter().zip(clamped_direct.data().iter()) {
            assert!((o - d).abs() < 5e-3, "{o} vs {d}");
        }
    }

    #[test]
    fn all_parameters_respect_bounds_after_fit() {
        let (img, depth) = test_scene();
        let out = enhance(&img, &depth, &small_cfg()).unwrap();
        for ch in &out.backscatter.channels {
            assert!((0.0..=1.0).contains(&ch.b_inf));
            assert!((0.0..=1.0).contains(&ch.b_res));
            assert!(ch.rate1.iter().all(|r| *r >= 0.0));
            assert!(ch.rate2.iter().all(|r| *r >= 0.0));
        }
        for ch in &out.deatten.channels {
            for p in &ch.pairs {
                assert!((0.0..=1.0).contains(&p.amplitude));
                assert!((0.0..=1.0).contains(&p.rate));
            }
        }
    }

    #[test]
    fn warm_start_with_matching_shape_is_used() {
        let (img, depth) = test_scene();
        let cfg = small_cfg();
        let first = enhance(&img, &depth, &cfg).unwrap();
        let warm = WarmStart {
            backscatter: first.backscatter.clone(),
            deatten: first.deatten.clone(),
        };
        let second = enhance_from(&img, &depth, &cfg, Some(&warm)).unwrap();
        // Restarting from a converged point should not take longer.
        assert!(second.backscatter_trace.iterations <= first.backscatter_trace.iterations);
    }
}
