"""Reference Canny for 16x16 tiles, built on scipy.ndimage primitives.

Produces the frozen edge maps asserted in tests/features_oracle.rs.
Parameters: 5x5 Gaussian (sigma 1, normalised), Sobel, both with
half-sample reflection; magnitude / (4*sqrt(2)); thresholds (0.1, 0.2);
8-connected hysteresis via connected-component labelling.
"""
import numpy as np
from scipy import ndimage

TOL = 1e-9


def canny(gray, low=0.1, high=0.2, sigma=1.0):
    ax = np.arange(-2, 3, dtype=float)
    g1 = np.exp(-(ax ** 2) / (2 * sigma ** 2))
    k = np.outer(g1, g1)
    k /= k.sum()
    b = ndimage.correlate(gray, k, mode="reflect")
    gx = ndimage.sobel(b, axis=1, mode="reflect")
    gy = ndimage.sobel(b, axis=0, mode="reflect")
    mag = np.hypot(gx, gy) / (4 * np.sqrt(2))
    ang = np.degrees(np.arctan2(gy, gx))
    ang[ang < 0] += 180
    padded = np.pad(mag, 1, constant_values=0.0)
    thin = np.zeros_like(mag)
    for y in range(16):
        for x in range(16):
            m = mag[y, x]
            if m <= 0:
                continue
            a = ang[y, x]
            if a < 22.5 or a >= 157.5:
                d = (0, 1)
            elif a < 67.5:
                d = (1, 1)
            elif a < 112.5:
                d = (1, 0)
            else:
                d = (1, -1)
            ahead = padded[y + 1 + d[0], x + 1 + d[1]]
            behind = padded[y + 1 - d[0], x + 1 - d[1]]
            if m >= behind - TOL and m > ahead + TOL:
                thin[y, x] = m
    labels, n = ndimage.label(thin >= low, structure=np.ones((3, 3)))
    keep = np.zeros(n + 1, dtype=bool)
    keep[np.unique(labels[thin >= high])] = True
    keep[0] = False
    return keep[labels].astype(np.uint8)


def fixtures():
    yy, xx = np.mgrid[0:16, 0:16]
    out = {}
    out["vertical_step"] = (xx >= 8).astype(float)
    out["checker2"] = (((yy // 2) + (xx // 2)) % 2).astype(float)
    out["disc"] = (((yy - 7.5) ** 2 + (xx - 7.5) ** 2) < 25).astype(float) * 0.8 + 0.1
    out["diagonal"] = (yy > xx).astype(float) * 0.6 + 0.2
    out["ramp_box"] = np.where((yy >= 4) & (yy < 12) & (xx >= 3) & (xx < 13), 0.9, xx / 30.0)
    return out


if __name__ == "__main__":
    for name, img in fixtures().items():
        e = canny(img)
        print(name, e.sum())
        print("\n".join("".join(str(v) for v in row) for row in e))
