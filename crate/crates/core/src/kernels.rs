//! 3x3 convolution kernels and the replicate-padded apply/adjoint pair
//! shared by the edge losses and the sharpness metric.
//!
//! `convolve_3x3` computes the sliding dot-product (correlation) with
//! border samples replicated, so output size equals input size. The
//! adjoint scatters with the same clamped indexing, which makes analytic
//! gradients through a convolution agree with finite differences exactly,
//! including at the borders.

pub const SOBEL_X: [[f64; 3]; 3] = [
    [1.0, 0.0, -1.0],
    [2.0, 0.0, -2.0],
    [1.0, 0.0, -1.0],
];

pub const SOBEL_Y: [[f64; 3]; 3] = [
    [1.0, 2.0, 1.0],
    [0.0, 0.0, 0.0],
    [-1.0, -2.0, -1.0],
];

/// 3x3 binomial smoother, normalized by 1/16.
pub const GAUSSIAN: [[f64; 3]; 3] = [
    [1.0 / 16.0, 2.0 / 16.0, 1.0 / 16.0],
    [2.0 / 16.0, 4.0 / 16.0, 2.0 / 16.0],
    [1.0 / 16.0, 2.0 / 16.0, 1.0 / 16.0],
];

/// 4-neighbor Laplacian (positive center).
pub const LAPLACIAN: [[f64; 3]; 3] = [
    [0.0, -1.0, 0.0],
    [-1.0, 4.0, -1.0],
    [0.0, -1.0, 0.0],
];

#[inline]
fn clamp_idx(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Correlate `plane` (row-major, `w` x `h`) with a 3x3 kernel, replicating
/// the border.
pub fn convolve_3x3(plane: &[f64], w: usize, h: usize, kernel: &[[f64; 3]; 3]) -> Vec<f64> {
    debug_assert_eq!(plane.len(), w * h);
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (dy, row) in kernel.iter().enumerate() {
                let sy = clamp_idx(y as isize + dy as isize - 1, h);
                for (dx, &k) in row.iter().enumerate() {
                    let sx = clamp_idx(x as isize + dx as isize - 1, w);
                    acc += k * plane[sy * w + sx];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Adjoint of [`convolve_3x3`]: given the gradient of a loss with respect
/// to the convolution output, accumulate the gradient with respect to the
/// input. Border contributions fold back onto the replicated samples.
pub fn convolve_3x3_adjoint(
    grad_out: &[f64],
    w: usize,
    h: usize,
    kernel: &[[f64; 3]; 3],
) -> Vec<f64> {
    debug_assert_eq!(grad_out.len(), w * h);
    let mut grad_in = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let g = grad_out[y * w + x];
            if g == 0.0 {
                continue;
            }
            for (dy, row) in kernel.iter().enumerate() {
                let sy = clamp_idx(y as isize + dy as isize - 1, h);
                for (dx, &k) in row.iter().enumerate() {
                    let sx = clamp_idx(x as isize + dx as isize - 1, w);
                    grad_in[sy * w + sx] += k * g;
                }
            }
        }
    }
    grad_in
}

/// Gaussian smoothing followed by the Laplacian, both replicate-padded.
pub fn laplacian_of_gaussian(plane: &[f64], w: usize, h: usize) -> Vec<f64> {
    let smoothed = convolve_3x3(plane, w, h, &GAUSSIAN);
    convolve_3x3(&smoothed, w, h, &LAPLACIAN)
}

/// Adjoint of [`laplacian_of_gaussian`] (Laplacian adjoint, then Gaussian
/// adjoint).
pub fn laplacian_of_gaussian_adjoint(grad_out: &[f64], w: usize, h: usize) -> Vec<f64> {
    let g = convolve_3x3_adjoint(grad_out, w, h, &LAPLACIAN);
    convolve_3x3_adjoint(&g, w, h, &GAUSSIAN)
}

/// Per-pixel Sobel gradient magnitude sqrt(gx^2 + gy^2).
pub fn sobel_magnitude(plane: &[f64], w: usize, h: usize) -> Vec<f64> {
    let gx = convolve_3x3(plane, w, h, &SOBEL_X);
    let gy = convolve_3x3(plane, w, h, &SOBEL_Y);
    gx.iter()
        .zip(gy.iter())
        .map(|(a, b)| (a * a + b * b).sqrt())
        .collect()
}
