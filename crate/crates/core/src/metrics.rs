//! Image-quality metrics: grayscale-patch angular error, the underwater
//! quality measure and its colorfulness/sharpness/contrast parts, plus
//! reference-based PSNR and SSIM.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::sobel_magnitude;
use crate::numeric::{mean, sum};
use crate::raster::{ImageRgb, PatchAnnotation};

/// Coefficients combining the trimmed opponent-color statistics into the
/// colorfulness score.
const UICM_MU_COEFF: f64 = -0.0268;
const UICM_SIGMA_COEFF: f64 = 0.1586;

/// SSIM conventions: 11x11 Gaussian window, sigma 1.5, stabilizers for a
/// unit dynamic range.
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct UiqmConfig {
    /// Combination coefficients for colorfulness, sharpness, contrast.
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// Fraction trimmed from each tail of the opponent-channel statistics.
    pub trim_fraction: f64,
    /// Block edge length for the sharpness and contrast measures.
    pub block_size: usize,
    pub luminance_weights: [f64; 3],
}

impl Default for UiqmConfig {
    fn default() -> Self {
        Self {
            c1: 0.0282,
            c2: 0.2953,
            c3: 3.5753,
            trim_fraction: 0.1,
            block_size: 8,
            luminance_weights: [0.299, 0.587, 0.114],
        }
    }
}

impl UiqmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1.is_finite() && self.c2.is_finite() && self.c3.is_finite()) {
            return Err(Error::InvalidArgument {
                what: "uiqm coefficients",
                why: "must be finite".into(),
            });
        }
        if !(0.0..0.5).contains(&self.trim_fraction) {
            return Err(Error::InvalidArgument {
                what: "trim_fraction",
                why: format!("{} (must be in [0, 0.5))", self.trim_fraction),
            });
        }
        if self.block_size < 2 {
            return Err(Error::InvalidArgument {
                what: "block_size",
                why: format!("{} (must be >= 2)", self.block_size),
            });
        }
        Ok(())
    }
}

/// Angular error of the six calibration patches.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpmaeResult {
    pub mean_degrees: f64,
    pub per_patch_degrees: Vec<f64>,
}

/// Mean angle between each patch's mean color and the neutral gray axis.
///
/// Computed as `atan2(|v x (1,1,1)|, v . (1,1,1))`, which is exactly zero
/// for achromatic patches (the cross product cancels exactly) and avoids
/// the acos precision loss near zero angles.
pub fn gpmae(img: &ImageRgb, patches: &PatchAnnotation) -> Result<GpmaeResult> {
    patches.validate_against(img)?;
    let mut per_patch = Vec::with_capacity(6);
    for (index, rect) in patches.patches.iter().enumerate() {
        let mut acc = [0.0f64; 3];
        let mut count = 0usize;
        for y in rect.y0..rect.y1 {
            for x in rect.x0..rect.x1 {
                let p = img.pixel(x, y);
                acc[0] += p[0];
                acc[1] += p[1];
                acc[2] += p[2];
                count += 1;
            }
        }
        let n = count as f64;
        let (r, g, b) = (acc[0] / n, acc[1] / n, acc[2] / n);
        if r == 0.0 && g == 0.0 && b == 0.0 {
            return Err(Error::ZeroNormPatch { index });
        }
        let cross = ((g - b) * (g - b) + (b - r) * (b - r) + (r - g) * (r - g)).sqrt();
        let dot = r + g + b;
        per_patch.push(cross.atan2(dot).to_degrees());
    }
    let mean_degrees = sum(per_patch.iter().copied()) / 6.0;
    Ok(GpmaeResult {
        mean_degrees,
        per_patch_degrees: per_patch,
    })
}

/// Asymmetric trimmed mean: drop ceil(alpha*K) smallest and
/// floor(alpha*K) largest values, then average the rest.
fn trimmed_mean(sorted: &[f64], alpha: f64) -> f64 {
    let k = sorted.len();
    let t_lo = (alpha * k as f64).ceil() as usize;
    let t_hi = (alpha * k as f64).floor() as usize;
    if t_lo + t_hi >= k {
        return mean(sorted.iter().copied());
    }
    mean(sorted[t_lo..k - t_hi].iter().copied())
}

/// Colorfulness from trimmed statistics of the opponent channels
/// RG = R - G and YB = (R + G)/2 - B.
pub fn uicm(img: &ImageRgb, cfg: &UiqmConfig) -> Result<f64> {
    cfg.validate()?;
    let mut rg: Vec<f64> = Vec::with_capacity(img.pixels());
    let mut yb: Vec<f64> = Vec::with_capacity(img.pixels());
    for y in 0..img.height() {
        for x in 0..img.width() {
            let p = img.pixel(x, y);
            rg.push(p[0] - p[1]);
            yb.push((p[0] + p[1]) / 2.0 - p[2]);
        }
    }
    let stat = |values: &mut Vec<f64>| {
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mu = trimmed_mean(values, cfg.trim_fraction);
        let var = sum(values.iter().map(|v| (v - mu) * (v - mu))) / values.len() as f64;
        (mu, var)
    };
    let (mu_rg, var_rg) = stat(&mut rg);
    let (mu_yb, var_yb) = stat(&mut yb);
    Ok(UICM_MU_COEFF * (mu_rg * mu_rg + mu_yb * mu_yb).sqrt()
        + UICM_SIGMA_COEFF * (var_rg + var_yb).sqrt())
}

/// Block-wise log contrast of a plane: `2/(k1*k2) * sum ln(max/min)` over
/// complete blocks. Blocks with a non-positive minimum contribute zero.
fn eme(plane: &[f64], w: usize, h: usize, block: usize) -> Result<f64> {
    let k1 = w / block;
    let k2 = h / block;
    if k1 == 0 || k2 == 0 {
        return Err(Error::ImageTooSmall {
            what: "block contrast",
            min_w: block,
            min_h: block,
            w,
            h,
        });
    }
    let mut total = 0.0;
    for by in 0..k2 {
        for bx in 0..k1 {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for y in by * block..(by + 1) * block {
                for x in bx * block..(bx + 1) * block {
                    let v = plane[y * w + x];
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            if lo > 0.0 && hi > 0.0 {
                total += (hi / lo).ln();
            }
        }
    }
    Ok(2.0 / (k1 * k2) as f64 * total)
}

/// Sharpness: block log-contrast of the Sobel gradient magnitude per
/// channel, combined with the luminance weights.
pub fn uism(img: &ImageRgb, cfg: &UiqmConfig) -> Result<f64> {
    cfg.validate()?;
    let w = img.width();
    let h = img.height();
    let mut score = 0.0;
    for c in 0..3 {
        let plane: Vec<f64> = img.channel(c).collect();
        let mag = sobel_magnitude(&plane, w, h);
        score += cfg.luminance_weights[c] * eme(&mag, w, h, cfg.block_size)?;
    }
    Ok(score)
}

/// Contrast: block-wise logarithmic Michelson contrast of the luminance,
/// `-1/(k1*k2) * sum (m/s) * ln(m/s)` with m = max - min, s = max + min.
pub fn uiconm(img: &ImageRgb, cfg: &UiqmConfig) -> Result<f64> {
    cfg.validate()?;
    let w = img.width();
    let h = img.height();
    let block = cfg.block_size;
    let k1 = w / block;
    let k2 = h / block;
    if k1 == 0 || k2 == 0 {
        return Err(Error::ImageTooSmall {
            what: "block contrast",
            min_w: block,
            min_h: block,
            w,
            h,
        });
    }
    let lum = luminance(img, cfg.luminance_weights);
    let mut total = 0.0;
    for by in 0..k2 {
        for bx in 0..k1 {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for y in by * block..(by + 1) * block {
                for x in bx * block..(bx + 1) * block {
                    let v = lum[y * w + x];
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            let m = hi - lo;
            let s = hi + lo;
            if m > 0.0 && s > 0.0 {
                let ratio = m / s;
                total += ratio * ratio.ln();
            }
        }
    }
    Ok(-total / (k1 * k2) as f64)
}

/// The combined measure with its parts.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct UiqmResult {
    pub uiqm: f64,
    pub uicm: f64,
    pub uism: f64,
    pub uiconm: f64,
}

/// `uiqm = c1*uicm + c2*uism + c3*uiconm`.
pub fn uiqm(img: &ImageRgb, cfg: &UiqmConfig) -> Result<UiqmResult> {
    let uicm_v = uicm(img, cfg)?;
    let uism_v = uism(img, cfg)?;
    let uiconm_v = uiconm(img, cfg)?;
    Ok(UiqmResult {
        uiqm: cfg.c1 * uicm_v + cfg.c2 * uism_v + cfg.c3 * uiconm_v,
        uicm: uicm_v,
        uism: uism_v,
        uiconm: uiconm_v,
    })
}

/// Peak signal-to-noise ratio in dB at unit peak. Identical inputs report
/// the +infinity sentinel.
pub fn psnr(test: &ImageRgb, reference: &ImageRgb) -> Result<f64> {
    if !test.same_dims(reference) {
        return Err(Error::DimensionMismatch {
            what: "psnr inputs",
            expected_w: reference.width(),
            expected_h: reference.height(),
            found_w: test.width(),
            found_h: test.height(),
        });
    }
    let n = test.data().len() as f64;
    let mse = sum(
        test.data()
            .iter()
            .zip(reference.data().iter())
            .map(|(a, b)| (a - b) * (a - b)),
    ) / n;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(-10.0 * mse.log10())
    }
}

fn luminance(img: &ImageRgb, weights: [f64; 3]) -> Vec<f64> {
    img.data()
        .chunks_exact(3)
        .map(|p| weights[0] * p[0] + weights[1] * p[1] + weights[2] * p[2])
        .collect()
}

fn ssim_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as isize;
    let mut kernel = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for dy in -half..=half {
        for dx in -half..=half {
            let d2 = (dx * dx + dy * dy) as f64;
            kernel.push((-d2 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
        }
    }
    let total = sum(kernel.iter().copied());
    for v in kernel.iter_mut() {
        *v /= total;
    }
    kernel
}

/// Mean structural similarity over all fully-contained 11x11 windows of
/// the luminance planes.
pub fn ssim(test: &ImageRgb, reference: &ImageRgb, luminance_weights: [f64; 3]) -> Result<f64> {
    if !test.same_dims(reference) {
        return Err(Error::DimensionMismatch {
            what: "ssim inputs",
            expected_w: reference.width(),
            expected_h: reference.height(),
            found_w: test.width(),
            found_h: test.height(),
        });
    }
    let w = test.width();
    let h = test.height();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::ImageTooSmall {
            what: "ssim window",
            min_w: SSIM_WINDOW,
            min_h: SSIM_WINDOW,
            w,
            h,
        });
    }
    let x = luminance(test, luminance_weights);
    let y = luminance(reference, luminance_weights);
    let kernel = ssim_window();

    let mut scores = Vec::with_capacity((w - SSIM_WINDOW + 1) * (h - SSIM_WINDOW + 1));
    for y0 in 0..=h - SSIM_WINDOW {
        for x0 in 0..=w - SSIM_WINDOW {
            let mut mu_x = 0.0;
            let mut mu_y = 0.0;
            let mut xx = 0.0;
            let mut yy = 0.0;
            let mut xy = 0.0;
            let mut ki = 0;
            for dy in 0..SSIM_WINDOW {
                let row = (y0 + dy) * w + x0;
                for dx in 0..SSIM_WINDOW {
                    let kw = kernel[ki];
                    ki += 1;
                    let a = x[row + dx];
                    let b = y[row + dx];
                    mu_x += kw * a;
                    mu_y += kw * b;
                    xx += kw * a * a;
                    yy += kw * b * b;
                    xy += kw * a * b;
                }
            }
            let var_x = xx - mu_x * mu_x;
            let var_y = yy - mu_y * mu_y;
            let cov = xy - mu_x * mu_y;
            let num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * cov + SSIM_C2);
            let den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (var_x + var_y + SSIM_C2);
            scores.push(num / den);
        }
    }
    Ok(sum(scores.iter().copied()) / scores.len() as f64)
}

/// Per-image metric row. Reference-based columns stay absent (`None`)
/// when no reference or annotation exists; they are never fabricated.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub image: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gpmae_degrees: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gpmae_per_patch: Option<Vec<f64>>,
    pub uiqm: f64,
    pub uicm: f64,
    pub uism: f64,
    pub uiconm: f64,
    #[serde(with = "db_or_inf", default)]
    pub psnr_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ssim: Option<f64>,
    /// Resolved configuration snapshot recorded with every run.
    #[serde(default)]
    pub provenance: serde_json::Value,
}

/// JSON cannot hold IEEE infinities; the PSNR sentinel for identical
/// images serializes as the string "inf".
mod db_or_inf {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(x) if x.is_infinite() => s.serialize_str("inf"),
            Some(x) => s.serialize_f64(*x),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Option::<Raw>::deserialize(d)? {
            None => Ok(None),
            Some(Raw::Num(x)) => Ok(Some(x)),
            Some(Raw::Text(t)) if t == "inf" => Ok(Some(f64::INFINITY)),
            Some(Raw::Text(t)) => Err(D::Error::custom(format!("bad psnr value {t:?}"))),
        }
    }
}
