"""Low-level grid operations shared by the imaging, flow, and harness code.

Everything here works on plain 2-D float64 arrays; the Frame/MotionField
wrappers live one layer up.
"""

import numpy as np

GAUSS_5TAP = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def smooth_gaussian5(img: np.ndarray) -> np.ndarray:
    """Separable 5-tap binomial blur with mirrored borders."""
    h, w = img.shape
    padded = np.pad(img, ((0, 0), (2, 2)), mode="symmetric")
    out = np.zeros_like(img)
    for i, k in enumerate(GAUSS_5TAP):
        out += k * padded[:, i:i + w]
    padded = np.pad(out, ((2, 2), (0, 0)), mode="symmetric")
    out = np.zeros_like(img)
    for i, k in enumerate(GAUSS_5TAP):
        out += k * padded[i:i + h, :]
    return out


def decimate2(img: np.ndarray) -> np.ndarray:
    """Keep every second sample, truncating to floor-halved dimensions."""
    h, w = img.shape
    return img[0:2 * (h // 2):2, 0:2 * (w // 2):2]


def forward_gradient(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences with a zero last row/column (Neumann boundary)."""
    gx = np.zeros_like(a)
    gy = np.zeros_like(a)
    gx[:, :-1] = a[:, 1:] - a[:, :-1]
    gy[:-1, :] = a[1:, :] - a[:-1, :]
    return gx, gy


def divergence(px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Negative adjoint of forward_gradient; last row/column of p is ignored."""
    div = np.zeros_like(px)
    div[:, 0] = px[:, 0]
    div[:, 1:-1] = px[:, 1:-1] - px[:, :-2]
    div[:, -1] = -px[:, -2]
    div[0, :] += py[0, :]
    div[1:-1, :] += py[1:-1, :] - py[:-2, :]
    div[-1, :] += -py[-2, :]
    return div


def bilinear_sample(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sample img at real-valued coordinates, clamping to the border."""
    h, w = img.shape
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bottom * fy


def resize_bilinear(img: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    """Bilinear resize using pixel-center alignment."""
    h, w = img.shape
    xs = (np.arange(new_w) + 0.5) * (w / new_w) - 0.5
    ys = (np.arange(new_h) + 0.5) * (h / new_h) - 0.5
    gx, gy = np.meshgrid(xs, ys)
    return bilinear_sample(img, gx, gy)


def median3x3(a: np.ndarray) -> np.ndarray:
    """3x3 median with replicated borders."""
    h, w = a.shape
    padded = np.pad(a, 1, mode="edge")
    stack = np.stack([padded[dy:dy + h, dx:dx + w]
                      for dy in range(3) for dx in range(3)])
    return np.median(stack, axis=0)


def round_half_away(v):
    """Round half away from zero (np.round would round half to even)."""
    v = np.asarray(v, dtype=np.float64)
    return np.where(v >= 0.0, np.floor(v + 0.5), np.ceil(v - 0.5))
