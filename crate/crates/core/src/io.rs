//! File ingestion and export for images, depth maps and patch sidecars.
//!
//! Images: 8/16-bit RGB PNG or TIFF. Depth: single-channel 8/16-bit PNG,
//! 8/16-bit or 32-bit float TIFF, or a whitespace-separated float grid.
//! Depth values are min-max normalized to [0,1], optionally inverted for
//! disparity-style sources, then floored to keep z strictly positive.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Rgb};

use crate::error::{Error, Result};
use crate::raster::{DepthMap, ImageRgb, PatchAnnotation};

/// Default floor applied to normalized depth so exp/division terms never
/// see z = 0.
pub const DEPTH_FLOOR: f64 = 1e-3;

/// Output sample width for [`save_image`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Load an 8- or 16-bit RGB raster and normalize samples into [0,1]
/// (integer value divided by 2^bits - 1).
pub fn load_image(path: &Path) -> Result<ImageRgb> {
    let decoded = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    match decoded {
        DynamicImage::ImageRgb8(buf) => {
            let (w, h) = buf.dimensions();
            let data = buf.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
            ImageRgb::new(w as usize, h as usize, data)
        }
        DynamicImage::ImageRgb16(buf) => {
            let (w, h) = buf.dimensions();
            let data = buf.as_raw().iter().map(|&v| v as f64 / 65535.0).collect();
            ImageRgb::new(w as usize, h as usize, data)
        }
        other => Err(Error::UnsupportedLayout {
            path: path.to_path_buf(),
            expected: "8- or 16-bit RGB",
            found: format!("{:?}", other.color()),
        }),
    }
}

/// Save an image as PNG or TIFF (chosen by extension), quantizing each
/// component to the requested bit depth with round-half-up.
pub fn save_image(img: &ImageRgb, path: &Path, depth: BitDepth) -> Result<()> {
    let w = img.width() as u32;
    let h = img.height() as u32;
    let map_err = |source| Error::Image {
        path: path.to_path_buf(),
        source,
    };
    match depth {
        BitDepth::Eight => {
            let data: Vec<u8> = img.data().iter().map(|&v| (v * 255.0).round() as u8).collect();
            let buf: ImageBuffer<Rgb<u8>, _> =
                ImageBuffer::from_raw(w, h, data).expect("sized buffer");
            buf.save(path).map_err(map_err)
        }
        BitDepth::Sixteen => {
            let data: Vec<u16> = img
                .data()
                .iter()
                .map(|&v| (v * 65535.0).round() as u16)
                .collect();
            let buf: ImageBuffer<Rgb<u16>, _> =
                ImageBuffer::from_raw(w, h, data).expect("sized buffer");
            buf.save(path).map_err(map_err)
        }
    }
}

/// Load a depth map from any supported source and normalize it.
///
/// Pipeline: min-max to [0,1] (error if the map is constant), optional
/// `1 - z` inversion for disparity-style monocular outputs, then floor at
/// `clamp_floor`.
pub fn load_depth(path: &Path, invert: bool, clamp_floor: f64) -> Result<DepthMap> {
    let (width, height, raw) = read_depth_raw(path)?;
    normalize_depth(width, height, raw, invert, clamp_floor)
}

/// Min-max normalize an already-loaded grid; shared by all depth sources.
pub fn normalize_depth(
    width: usize,
    height: usize,
    raw: Vec<f64>,
    invert: bool,
    clamp_floor: f64,
) -> Result<DepthMap> {
    if let Some(bad) = raw.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument {
            what: "depth value",
            why: format!("{bad} is not finite"),
        });
    }
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Err(Error::ConstantDepth);
    }
    let span = max - min;
    let z = raw
        .into_iter()
        .map(|v| {
            let n = (v - min) / span;
            let n = if invert { 1.0 - n } else { n };
            n.max(clamp_floor)
        })
        .collect();
    DepthMap::new(width, height, z)
}

fn read_depth_raw(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "tif" | "tiff" => read_depth_tiff(path),
        "png" => read_depth_png(path),
        _ => read_depth_text(path),
    }
}

fn read_depth_png(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let decoded = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    match decoded {
        DynamicImage::ImageLuma8(buf) => {
            let (w, h) = buf.dimensions();
            let raw = buf.as_raw().iter().map(|&v| v as f64).collect();
            Ok((w as usize, h as usize, raw))
        }
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = buf.dimensions();
            let raw = buf.as_raw().iter().map(|&v| v as f64).collect();
            Ok((w as usize, h as usize, raw))
        }
        other => Err(Error::UnsupportedLayout {
            path: path.to_path_buf(),
            expected: "single-channel 8/16-bit raster",
            found: format!("{:?}", other.color()),
        }),
    }
}

fn read_depth_tiff(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut decoder =
        tiff::decoder::Decoder::new(BufReader::new(file)).map_err(|source| Error::Tiff {
            path: path.to_path_buf(),
            source,
        })?;
    let (w, h) = decoder.dimensions().map_err(|source| Error::Tiff {
        path: path.to_path_buf(),
        source,
    })?;
    let color = decoder.colortype().map_err(|source| Error::Tiff {
        path: path.to_path_buf(),
        source,
    })?;
    if !matches!(color, tiff::ColorType::Gray(_)) {
        return Err(Error::UnsupportedLayout {
            path: path.to_path_buf(),
            expected: "single-channel tiff",
            found: format!("{color:?}"),
        });
    }
    let img = decoder.read_image().map_err(|source| Error::Tiff {
        path: path.to_path_buf(),
        source,
    })?;
    use tiff::decoder::DecodingResult;
    let raw: Vec<f64> = match img {
        DecodingResult::U8(v) => v.into_iter().map(|x| x as f64).collect(),
        DecodingResult::U16(v) => v.into_iter().map(|x| x as f64).collect(),
        DecodingResult::F32(v) => v.into_iter().map(|x| x as f64).collect(),
        DecodingResult::F64(v) => v,
        other => {
            return Err(Error::UnsupportedLayout {
                path: path.to_path_buf(),
                expected: "8/16-bit integer or 32-bit float samples",
                found: format!("{other:?}"),
            })
        }
    };
    Ok((w as usize, h as usize, raw))
}

fn read_depth_text(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut width = None;
    let mut raw = Vec::new();
    let mut height = 0usize;
    for (line_no, line) in text.lines().enumerate() {
        let row: std::result::Result<Vec<f64>, _> =
            line.split_whitespace().map(|t| t.parse::<f64>()).collect();
        let row = row.map_err(|e| Error::DepthText {
            path: path.to_path_buf(),
            line: line_no + 1,
            detail: e.to_string(),
        })?;
        if row.is_empty() {
            continue;
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::DepthText {
                    path: path.to_path_buf(),
                    line: line_no + 1,
                    detail: format!("row has {} values, expected {w}", row.len()),
                })
            }
            _ => {}
        }
        raw.extend(row);
        height += 1;
    }
    let width = width.ok_or_else(|| Error::DepthText {
        path: path.to_path_buf(),
        line: 0,
        detail: "no data rows".into(),
    })?;
    Ok((width, height, raw))
}

/// Read a patch-annotation JSON sidecar: `{"patches":[{"x0":..,..} x6]}`.
pub fn load_patches(path: &Path) -> Result<PatchAnnotation> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let ann: PatchAnnotation =
        serde_json::from_reader(BufReader::new(file)).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
    PatchAnnotation::new(ann.patches)
}

pub fn save_patches(ann: &PatchAnnotation, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, ann).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::PatchRect;

    fn tmpdir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn eight_bit_samples_normalize_by_255() {
        let dir = tmpdir();
        let path = dir.path().join("px.png");
        let buf: ImageBuffer<Rgb<u8>, _> =
            ImageBuffer::from_raw(1, 1, vec![255u8, 0, 128]).unwrap();
        buf.save(&path).unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.pixel(0, 0), [1.0, 0.0, 128.0 / 255.0]);
    }

    #[test]
    fn sixteen_bit_white_maps_to_one() {
        let dir = tmpdir();
        let path = dir.path().join("white.png");
        let buf: ImageBuffer<Rgb<u16>, _> =
            ImageBuffer::from_raw(1, 1, vec![65535u16, 65535, 65535]).unwrap();
        buf.save(&path).unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.pixel(0, 0), [1.0, 1.0, 1.0]);
    }

    #[test]
    fn black_single_pixel_maps_to_zero() {
        let dir = tmpdir();
        let path = dir.path().join("black.png");
        let buf: ImageBuffer<Rgb<u8>, _> = ImageBuffer::from_raw(1, 1, vec![0u8, 0, 0]).unwrap();
        buf.save(&path).unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!((img.width(), img.height()), (1, 1));
        assert_eq!(img.pixel(0, 0), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn rgba_layout_is_rejected() {
        let dir = tmpdir();
        let path = dir.path().join("rgba.png");
        let buf: ImageBuffer<image::Rgba<u8>, _> =
            ImageBuffer::from_raw(1, 1, vec![1u8, 2, 3, 4]).unwrap();
        buf.save(&path).unwrap();
        assert!(matches!(
            load_image(&path),
            Err(Error::UnsupportedLayout { .. })
        ));
    }

    #[test]
    fn save_rounds_half_up_at_eight_bits() {
        let dir = tmpdir();
        let path = dir.path().join("gray.png");
        let img = ImageRgb::filled(1, 1, [0.5, 0.5, 0.5]).unwrap();
        save_image(&img, &path, BitDepth::Eight).unwrap();
        let back = image::open(&path).unwrap().into_rgb8();
        assert_eq!(back.get_pixel(0, 0).0, [128, 128, 128]);

        let white = ImageRgb::filled(1, 1, [1.0, 1.0, 1.0]).unwrap();
        save_image(&white, &path, BitDepth::Eight).unwrap();
        let back = image::open(&path).unwrap().into_rgb8();
        assert_eq!(back.get_pixel(0, 0).0, [255, 255, 255]);
    }

    #[test]
    fn depth_text_grid_normalizes_min_max() {
        let dir = tmpdir();
        let path = dir.path().join("d.txt");
        std::fs::write(&path, "2 4 6\n").unwrap();
        let d = load_depth(&path, false, DEPTH_FLOOR).unwrap();
        assert_eq!(d.values(), &[DEPTH_FLOOR, 0.5, 1.0]);
    }

    #[test]
    fn disparity_inversion_then_floor() {
        let dir = tmpdir();
        let path = dir.path().join("disp.txt");
        std::fs::write(&path, "0 1\n").unwrap();
        let d = load_depth(&path, true, DEPTH_FLOOR).unwrap();
        assert_eq!(d.values(), &[1.0, DEPTH_FLOOR]);
    }

    #[test]
    fn constant_depth_map_is_an_error() {
        let dir = tmpdir();
        let path = dir.path().join("flat.txt");
        std::fs::write(&path, "0 0\n0 0\n").unwrap();
        assert!(matches!(
            load_depth(&path, false, DEPTH_FLOOR),
            Err(Error::ConstantDepth)
        ));
    }

    #[test]
    fn ragged_text_grid_is_an_error() {
        let dir = tmpdir();
        let path = dir.path().join("ragged.txt");
        std::fs::write(&path, "1 2 3\n4 5\n").unwrap();
        assert!(matches!(
            load_depth(&path, false, DEPTH_FLOOR),
            Err(Error::DepthText { line: 2, .. })
        ));
    }

    #[test]
    fn float_tiff_depth_roundtrip() {
        let dir = tmpdir();
        let path = dir.path().join("d.tif");
        {
            let file = File::create(&path).unwrap();
            let mut enc = tiff::encoder::TiffEncoder::new(BufWriter::new(file)).unwrap();
            enc.write_image::<tiff::encoder::colortype::Gray32Float>(
                2,
                2,
                &[0.0f32, 1.0, 2.0, 4.0],
            )
            .unwrap();
        }
        let d = load_depth(&path, false, DEPTH_FLOOR).unwrap();
        assert_eq!(d.values(), &[DEPTH_FLOOR, 0.25, 0.5, 1.0]);
    }

    #[test]
    fn ordering_preserved_for_already_normalized_grid() {
        let dir = tmpdir();
        let path = dir.path().join("mono.txt");
        std::fs::write(&path, "0.0 0.2 0.7 1.0\n").unwrap();
        let d = load_depth(&path, false, DEPTH_FLOOR).unwrap();
        let v = d.values();
        assert!(v.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(&v[1..], &[0.2, 0.7, 1.0]);
    }

    #[test]
    fn patch_sidecar_roundtrip() {
        let dir = tmpdir();
        let path = dir.path().join("patches.json");
        let ann = PatchAnnotation::new(
            (0..6)
                .map(|i| PatchRect {
                    x0: i,
                    y0: 0,
                    x1: i + 1,
                    y1: 2,
                })
                .collect(),
        )
        .unwrap();
        save_patches(&ann, &path).unwrap();
        let back = load_patches(&path).unwrap();
        assert_eq!(ann, back);
    }
}
