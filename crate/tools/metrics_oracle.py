#!/usr/bin/env python3
"""Independent reference implementation of the image-quality metrics.

Computes golden values for the fixtures frozen into the Rust test suite.
Kept deliberately separate from the Rust code path: plain numpy loops,
same formulas, so a bug would have to be made twice to go unnoticed.

Run:  python3 tools/metrics_oracle.py
"""

import math

import numpy as np


def mosaic16():
    img = np.zeros((16, 16, 3), dtype=np.float64)
    for y in range(16):
        for x in range(16):
            img[y, x, 0] = ((x * 7 + y * 3) % 17) / 16.0
            img[y, x, 1] = ((x * 5 + y * 11) % 13) / 12.0
            img[y, x, 2] = ((x * 3 + y * 13) % 11) / 10.0
    return img


def convolve3x3_replicate(plane, kernel):
    h, w = plane.shape
    out = np.zeros_like(plane)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for dy in range(3):
                sy = min(max(y + dy - 1, 0), h - 1)
                for dx in range(3):
                    sx = min(max(x + dx - 1, 0), w - 1)
                    acc += kernel[dy][dx] * plane[sy, sx]
            out[y, x] = acc
    return out


SOBEL_X = [[1, 0, -1], [2, 0, -2], [1, 0, -1]]
SOBEL_Y = [[1, 2, 1], [0, 0, 0], [-1, -2, -1]]


def sobel_magnitude(plane):
    gx = convolve3x3_replicate(plane, SOBEL_X)
    gy = convolve3x3_replicate(plane, SOBEL_Y)
    return np.sqrt(gx * gx + gy * gy)


def trimmed_mean(values, alpha):
    v = np.sort(values.ravel())
    k = len(v)
    t_lo = math.ceil(alpha * k)
    t_hi = math.floor(alpha * k)
    if t_lo + t_hi >= k:
        return float(np.mean(v))
    return float(np.mean(v[t_lo:k - t_hi]))


def uicm(img, alpha=0.1):
    r, g, b = img[:, :, 0], img[:, :, 1], img[:, :, 2]
    rg = (r - g).ravel()
    yb = ((r + g) / 2.0 - b).ravel()
    mu_rg = trimmed_mean(rg, alpha)
    mu_yb = trimmed_mean(yb, alpha)
    var_rg = float(np.mean((rg - mu_rg) ** 2))
    var_yb = float(np.mean((yb - mu_yb) ** 2))
    return -0.0268 * math.sqrt(mu_rg ** 2 + mu_yb ** 2) + 0.1586 * math.sqrt(var_rg + var_yb)


def eme(plane, block):
    h, w = plane.shape
    k1 = w // block
    k2 = h // block
    total = 0.0
    for by in range(k2):
        for bx in range(k1):
            blk = plane[by * block:(by + 1) * block, bx * block:(bx + 1) * block]
            lo = float(blk.min())
            hi = float(blk.max())
            if lo > 0.0 and hi > 0.0:
                total += math.log(hi / lo)
    return 2.0 / (k1 * k2) * total


def uism(img, block=8, weights=(0.299, 0.587, 0.114)):
    score = 0.0
    for c in range(3):
        mag = sobel_magnitude(img[:, :, c])
        score += weights[c] * eme(mag, block)
    return score


def uiconm(img, block=8, weights=(0.299, 0.587, 0.114)):
    lum = weights[0] * img[:, :, 0] + weights[1] * img[:, :, 1] + weights[2] * img[:, :, 2]
    h, w = lum.shape
    k1 = w // block
    k2 = h // block
    total = 0.0
    for by in range(k2):
        for bx in range(k1):
            blk = lum[by * block:(by + 1) * block, bx * block:(bx + 1) * block]
            lo = float(blk.min())
            hi = float(blk.max())
            m = hi - lo
            s = hi + lo
            if m > 0.0 and s > 0.0:
                total += (m / s) * math.log(m / s)
    return -total / (k1 * k2)


def ssim_lum(a, b, weights=(0.299, 0.587, 0.114), window=11, sigma=1.5):
    la = weights[0] * a[:, :, 0] + weights[1] * a[:, :, 1] + weights[2] * a[:, :, 2]
    lb = weights[0] * b[:, :, 0] + weights[1] * b[:, :, 1] + weights[2] * b[:, :, 2]
    half = window // 2
    kernel = np.zeros((window, window))
    for dy in range(-half, half + 1):
        for dx in range(-half, half + 1):
            kernel[dy + half, dx + half] = math.exp(-(dx * dx + dy * dy) / (2 * sigma * sigma))
    kernel /= kernel.sum()
    c1 = 0.01 ** 2
    c2 = 0.03 ** 2
    h, w = la.shape
    scores = []
    for y0 in range(h - window + 1):
        for x0 in range(w - window + 1):
            wa = la[y0:y0 + window, x0:x0 + window]
            wb = lb[y0:y0 + window, x0:x0 + window]
            mu_x = float((kernel * wa).sum())
            mu_y = float((kernel * wb).sum())
            xx = float((kernel * wa * wa).sum())
            yy = float((kernel * wb * wb).sum())
            xy = float((kernel * wa * wb).sum())
            var_x = xx - mu_x * mu_x
            var_y = yy - mu_y * mu_y
            cov = xy - mu_x * mu_y
            num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
            den = (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
            scores.append(num / den)
    return float(np.mean(scores))


def main():
    img = mosaic16()
    print(f"GOLDEN_UICM    = {uicm(img):.17g}")
    print(f"GOLDEN_UISM    = {uism(img):.17g}")
    print(f"GOLDEN_UICONM  = {uiconm(img):.17g}")
    neg = 1.0 - img
    print(f"GOLDEN_SSIM_VS_NEGATIVE = {ssim_lum(img, neg):.17g}")


if __name__ == "__main__":
    main()
