# Reference SSIM: 8x8 windows at stride 1 via numpy sliding windows,
# population statistics, grayscale 0.299/0.587/0.114 on the 0..255 scale.
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

C1 = (0.01 * 255) ** 2
C2 = (0.03 * 255) ** 2


def pattern(h, w):
    y, x = np.mgrid[0:h, 0:w]
    return np.stack([(x * 13 + y * 7) % 256, (x * x + y) % 251, (y * 31) % 256], -1).astype(np.uint8)


def luma(img):
    img = img.astype(np.float64)
    return 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]


def ssim(a, b):
    wa = sliding_window_view(luma(a), (8, 8))
    wb = sliding_window_view(luma(b), (8, 8))
    ma, mb = wa.mean((-1, -2)), wb.mean((-1, -2))
    va, vb = wa.var((-1, -2)), wb.var((-1, -2))
    cov = ((wa - ma[..., None, None]) * (wb - mb[..., None, None])).mean((-1, -2))
    s = ((2 * ma * mb + C1) * (2 * cov + C2)) / ((ma**2 + mb**2 + C1) * (va + vb + C2))
    return s.mean()


a = pattern(16, 32)
inv = 255 - a
shifted = np.roll(a, 3, axis=1)
blocky = a.copy()
blocky[4:12, 10:20] = [200, 40, 40]
for name, b in [("inverted", inv), ("shifted", shifted), ("blocky", blocky)]:
    print(f"{name} {ssim(a, b):.17g}")
