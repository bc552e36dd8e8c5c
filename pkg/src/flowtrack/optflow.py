"""Dense optical flow between two consecutive frames.

Variational solver with an L1 brightness-constancy data term and a
Huber-smoothed total-variation penalty on each flow component, run
coarse-to-fine over a Gaussian pyramid with incremental warping. Each
warp linearizes the data term around the current flow and runs
primal-dual projected-gradient iterations; the flow is median-filtered
after every warp to suppress outliers.

The returned field maps pixels of the earlier frame to the later one:
content at p in `prev` appears at p + field(p) in `curr`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .imageops import (bilinear_sample, divergence, forward_gradient,
                       median3x3, resize_bilinear)
from .imaging import Frame, build_pyramid

# Coarsest pyramid dimension the automatic scale count will go down to.
MIN_COARSE_DIM = 16

# The solver's data term runs on 8-bit-equivalent intensities so that the
# conventional data_weight/time_step values keep their published meaning;
# frames themselves stay normalized to [0, 1].
INTENSITY_SCALE = 255.0

FLO_MAGIC = 202021.25  # spells "PIEH" when read as little-endian float


@dataclass(frozen=True)
class FlowParams:
    """Solver parameters.

    data_weight is the weight of the brightness-constancy term (smaller
    means smoother fields); huber_epsilon the quadratic-to-linear
    crossover of the smoothness penalty; time_step the primal step size
    (the dual step is derived as 1 / (8 * time_step) so the product meets
    the convergence bound of the gradient operator).
    """

    data_weight: float = 0.15
    huber_epsilon: float = 0.01
    time_step: float = 0.25
    warps_per_level: int = 5
    iterations_per_warp: int = 50
    pyramid_scales: int | None = None  # None: deepest with coarsest dim >= 16

    def __post_init__(self):
        if self.data_weight <= 0:
            raise ValueError("data_weight must be positive")
        if self.huber_epsilon < 0:
            raise ValueError("huber_epsilon must be non-negative")
        if self.time_step <= 0:
            raise ValueError("time_step must be positive")
        if self.warps_per_level < 1:
            raise ValueError("warps_per_level must be >= 1")
        if self.iterations_per_warp < 1:
            raise ValueError("iterations_per_warp must be >= 1")
        if self.pyramid_scales is not None and self.pyramid_scales < 1:
            raise ValueError("pyramid_scales must be >= 1")


@dataclass(frozen=True, eq=False)
class MotionField:
    """Dense per-pixel displacement between two frames, in pixels."""

    width: int
    height: int
    dx: np.ndarray
    dy: np.ndarray
    frame_index: int = -1  # index of the later frame of the pair

    def __post_init__(self):
        dx = np.ascontiguousarray(self.dx, dtype=np.float64)
        dy = np.ascontiguousarray(self.dy, dtype=np.float64)
        shape = (self.height, self.width)
        if dx.shape != shape or dy.shape != shape:
            raise ValueError(f"field components must be {shape}")
        if not (np.all(np.isfinite(dx)) and np.all(np.isfinite(dy))):
            raise ValueError("field contains non-finite values")
        dx.setflags(write=False)
        dy.setflags(write=False)
        object.__setattr__(self, "dx", dx)
        object.__setattr__(self, "dy", dy)

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.dx, self.dy)


def auto_scales(width: int, height: int) -> int:
    """Pyramid depth whose coarsest level still has both sides >= 16."""
    scales = 1
    w, h = width, height
    while min(w // 2, h // 2) >= MIN_COARSE_DIM:
        w //= 2
        h //= 2
        scales += 1
    return scales


def warp_image(image: Frame, field: MotionField) -> Frame:
    """Resample: output(p) = image(p + field(p)), clamping at the border."""
    if (image.width, image.height) != (field.width, field.height):
        raise ValueError(
            f"image {image.width}x{image.height} does not match field "
            f"{field.width}x{field.height}")
    ys, xs = np.meshgrid(np.arange(image.height, dtype=np.float64),
                         np.arange(image.width, dtype=np.float64),
                         indexing="ij")
    data = bilinear_sample(image.data, xs + field.dx, ys + field.dy)
    return Frame(width=image.width, height=image.height, index=image.index,
                 data=data)


def _huber(mag: np.ndarray, eps: float) -> np.ndarray:
    if eps <= 0.0:
        return mag
    return np.where(mag <= eps, mag * mag / (2.0 * eps), mag - eps / 2.0)


def _energy(i0: np.ndarray, i1: np.ndarray, u1: np.ndarray, u2: np.ndarray,
            params: FlowParams) -> float:
    h, w = i0.shape
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    i1w = bilinear_sample(i1, xs + u1, ys + u2)
    total = params.data_weight * float(np.abs(i1w - i0).sum())
    for comp in (u1, u2):
        gx, gy = forward_gradient(comp)
        total += float(_huber(np.hypot(gx, gy), params.huber_epsilon).sum())
    return total


def flow_energy(prev: Frame, curr: Frame, field: MotionField,
                params: FlowParams = FlowParams()) -> float:
    """TV-L1 objective value of a field for a frame pair."""
    return _energy(prev.data * INTENSITY_SCALE, curr.data * INTENSITY_SCALE,
                   field.dx, field.dy, params)


def _solve_level(i0, i1, u1, u2, params: FlowParams, energy_trace=None):
    h, w = i0.shape
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    lam = params.data_weight
    tau = params.time_step
    sigma = 1.0 / (8.0 * tau)
    eps = params.huber_epsilon
    grad_y, grad_x = np.gradient(i1)

    for _ in range(params.warps_per_level):
        map_x = xs + u1
        map_y = ys + u2
        i1w = bilinear_sample(i1, map_x, map_y)
        gx = bilinear_sample(grad_x, map_x, map_y)
        gy = bilinear_sample(grad_y, map_x, map_y)
        grad_sq = gx * gx + gy * gy
        safe = grad_sq > 1e-12
        inv_grad = np.where(safe, 1.0 / np.maximum(grad_sq, 1e-12), 0.0)
        # residual of the linearized constancy term at zero flow
        rho0 = i1w - i0 - gx * u1 - gy * u2

        p11 = np.zeros_like(u1)
        p12 = np.zeros_like(u1)
        p21 = np.zeros_like(u1)
        p22 = np.zeros_like(u1)
        ub1 = u1
        ub2 = u2
        dual_scale = 1.0 / (1.0 + sigma * eps)
        thresh = tau * lam * grad_sq

        for _ in range(params.iterations_per_warp):
            # dual ascent on the smoothness term, Huber prox + ball projection
            g1x, g1y = forward_gradient(ub1)
            g2x, g2y = forward_gradient(ub2)
            p11 = (p11 + sigma * g1x) * dual_scale
            p12 = (p12 + sigma * g1y) * dual_scale
            p21 = (p21 + sigma * g2x) * dual_scale
            p22 = (p22 + sigma * g2y) * dual_scale
            n1 = np.maximum(1.0, np.hypot(p11, p12))
            n2 = np.maximum(1.0, np.hypot(p21, p22))
            p11 /= n1
            p12 /= n1
            p21 /= n2
            p22 /= n2

            # primal descent, then closed-form shrinkage of the data term
            v1 = u1 + tau * divergence(p11, p12)
            v2 = u2 + tau * divergence(p21, p22)
            rho = rho0 + gx * v1 + gy * v2
            step_lo = rho < -thresh
            step_hi = rho > thresh
            d = np.where(step_lo, tau * lam,
                         np.where(step_hi, -tau * lam, -rho * inv_grad))
            d = np.where(safe | step_lo | step_hi, d, 0.0)
            u1_new = v1 + d * gx
            u2_new = v2 + d * gy

            ub1 = 2.0 * u1_new - u1
            ub2 = 2.0 * u2_new - u2
            u1 = u1_new
            u2 = u2_new

        u1 = median3x3(u1)
        u2 = median3x3(u2)
        if energy_trace is not None:
            energy_trace.append(_energy(i0, i1, u1, u2, params))
    return u1, u2


def compute_flow(prev: Frame, curr: Frame,
                 params: FlowParams = FlowParams(),
                 energy_trace: list | None = None) -> MotionField:
    """Coarse-to-fine flow estimate from prev to curr.

    Both frames are expected to be structure-texture preprocessed. When
    energy_trace is a list, the finest-scale objective value after each
    warp is appended to it.
    """
    if (prev.width, prev.height) != (curr.width, curr.height):
        raise ValueError(
            f"frame sizes differ: {prev.width}x{prev.height} vs "
            f"{curr.width}x{curr.height}")
    if prev.width < 2 or prev.height < 2:
        raise ValueError("frames must be at least 2x2")
    scales = params.pyramid_scales
    if scales is None:
        scales = auto_scales(prev.width, prev.height)
    pyr0 = build_pyramid(prev, scales)  # rejects degenerate coarse levels
    pyr1 = build_pyramid(curr, scales)

    coarsest = pyr0.levels[-1]
    u1 = np.zeros((coarsest.height, coarsest.width))
    u2 = np.zeros_like(u1)
    for level in range(scales - 1, -1, -1):
        i0 = pyr0.levels[level].data * INTENSITY_SCALE
        i1 = pyr1.levels[level].data * INTENSITY_SCALE
        if level != scales - 1:
            h, w = i0.shape
            sx = w / u1.shape[1]
            sy = h / u1.shape[0]
            u1 = resize_bilinear(u1, w, h) * sx
            u2 = resize_bilinear(u2, w, h) * sy
        trace = energy_trace if level == 0 else None
        u1, u2 = _solve_level(i0, i1, u1, u2, params, trace)
    return MotionField(width=prev.width, height=prev.height,
                       dx=u1, dy=u2, frame_index=curr.index)


def write_flo(field: MotionField, path) -> None:
    """Dump a field in Middlebury .flo format (float32, interleaved)."""
    with open(path, "wb") as f:
        f.write(struct.pack("<fii", FLO_MAGIC, field.width, field.height))
        interleaved = np.empty((field.height, field.width, 2),
                               dtype=np.float32)
        interleaved[..., 0] = field.dx
        interleaved[..., 1] = field.dy
        f.write(interleaved.tobytes())


def read_flo(path) -> MotionField:
    with open(path, "rb") as f:
        header = f.read(12)
        if len(header) != 12:
            raise ValueError(f"{path}: truncated .flo header")
        magic, width, height = struct.unpack("<fii", header)
        if abs(magic - FLO_MAGIC) > 1e-3:
            raise ValueError(f"{path}: bad .flo magic {magic}")
        raw = f.read(width * height * 8)
        if len(raw) != width * height * 8:
            raise ValueError(f"{path}: truncated .flo data")
    interleaved = np.frombuffer(raw, dtype=np.float32).reshape(
        height, width, 2)
    return MotionField(width=width, height=height,
                       dx=interleaved[..., 0].astype(np.float64),
                       dy=interleaved[..., 1].astype(np.float64))
