"""Detections, pluggable detection sources, and detector geometry.

Detection sources stand in for per-frame neural inference: the scripted
source replays a JSONL sidecar keyed by frame index, the harness module
provides a synthetic source. Two sources (general objects in ids 0..79,
text = 80, logo = 81) share one label namespace so their streams can be
merged per frame.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

GENERAL_CLASS_COUNT = 80
TEXT_CLASS_ID = 80
LOGO_CLASS_ID = 81


class DetectionFormatError(ValueError):
    """Raised for malformed detection sidecar files."""


class SourceError(RuntimeError):
    """Raised when a detection source fails mid-run."""


@dataclass(frozen=True)
class Detection:
    """One detected object in original-frame pixel coordinates."""

    class_id: int
    label: str
    score: float
    box: tuple[float, float, float, float]  # x, y, w, h

    def __post_init__(self):
        x, y, w, h = self.box
        if not all(np.isfinite(v) for v in (x, y, w, h)):
            raise ValueError("box coordinates must be finite")
        if w <= 0 or h <= 0:
            raise ValueError(f"box must have positive size, got {w}x{h}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        object.__setattr__(self, "box", (float(x), float(y),
                                         float(w), float(h)))


@dataclass(frozen=True)
class ReceptiveField:
    width: int
    height: int


@dataclass(frozen=True)
class AnchorSet:
    """Cluster centers of box sizes, sorted by area ascending."""

    anchors: tuple[tuple[float, float], ...]

    @property
    def k(self) -> int:
        return len(self.anchors)


def adaptive_receptive_field(img_w: int, img_h: int, base: int,
                             round_to: int | None = None) -> ReceptiveField:
    """Receptive field matching the image aspect ratio.

    The longer image side maps to `base`; the shorter side is scaled
    proportionally and floored. No stride alignment is applied unless
    round_to is given, in which case the short side snaps to the nearest
    positive multiple.
    """
    if img_w <= 0 or img_h <= 0 or base <= 0:
        raise ValueError("image size and base must be positive")
    if img_w >= img_h:
        w, h = base, int(base * img_h / img_w)
        if round_to:
            h = max(round_to, round_to * int((h + round_to / 2) // round_to))
    else:
        w, h = int(base * img_w / img_h), base
        if round_to:
            w = max(round_to, round_to * int((w + round_to / 2) // round_to))
    return ReceptiveField(width=w, height=h)


def remap_detection(box, field: ReceptiveField, img_w: int,
                    img_h: int) -> tuple[float, float, float, float]:
    """Map a box from receptive-field coordinates back to image pixels.

    Uniform scale on both axes (the inverse of the proportional resize),
    then clamped to the frame rectangle.
    """
    scale = max(img_w, img_h) / max(field.width, field.height)
    x, y, w, h = (float(v) * scale for v in box)
    x2 = min(x + w, float(img_w))
    y2 = min(y + h, float(img_h))
    x = max(x, 0.0)
    y = max(y, 0.0)
    if x2 <= x or y2 <= y:
        raise ValueError(f"box {tuple(box)} lies entirely outside the "
                         f"{img_w}x{img_h} frame after remapping")
    return (x, y, x2 - x, y2 - y)


def aligned_iou(size_a, size_b) -> float:
    """IOU of two boxes anchored at the origin, given as (w, h) pairs."""
    wa, ha = size_a
    wb, hb = size_b
    inter = min(wa, wb) * min(ha, hb)
    return inter / (wa * ha + wb * hb - inter)


def _size_distances(sizes: np.ndarray, centers: np.ndarray,
                    metric: str) -> np.ndarray:
    if metric == "iou":
        inter = (np.minimum(sizes[:, None, 0], centers[None, :, 0])
                 * np.minimum(sizes[:, None, 1], centers[None, :, 1]))
        areas = sizes[:, 0] * sizes[:, 1]
        careas = centers[:, 0] * centers[:, 1]
        return 1.0 - inter / (areas[:, None] + careas[None, :] - inter)
    if metric == "euclidean":
        diff = sizes[:, None, :] - centers[None, :, :]
        return np.hypot(diff[..., 0], diff[..., 1])
    raise ValueError(f"unknown metric {metric!r}")


def _seed_centers(sizes: np.ndarray, k: int, rng: np.random.Generator,
                  metric: str) -> np.ndarray:
    # k-means++ style: next seed drawn with probability proportional to the
    # squared distance to the nearest seed so far
    n = len(sizes)
    chosen = [int(rng.integers(n))]
    nearest = _size_distances(sizes, sizes[chosen], metric)[:, 0]
    for _ in range(k - 1):
        weights = nearest * nearest
        total = weights.sum()
        if total <= 0.0:
            raise ValueError(
                f"cannot seed {k} clusters: fewer than {k} distinct box "
                f"sizes (clusters would collapse)")
        pick = int(rng.choice(n, p=weights / total))
        chosen.append(pick)
        nearest = np.minimum(
            nearest, _size_distances(sizes, sizes[[pick]], metric)[:, 0])
    return sizes[chosen].astype(np.float64)


def anchor_kmeans(boxes, k: int, seed: int = 0, metric: str = "iou",
                  max_iter: int = 300,
                  distortion_trace: list | None = None) -> AnchorSet:
    """Cluster box sizes into k anchors.

    Distance is 1 - IOU of origin-aligned boxes (or plain Euclidean on
    (w, h) with metric="euclidean"); centers are updated as per-cluster
    means. Iterates to a fixed point or max_iter; if a mean update would
    increase the total distortion, the previous centers are kept instead,
    so the distortion trace is non-increasing. Deterministic given seed.
    """
    sizes = np.asarray(boxes, dtype=np.float64)
    if sizes.ndim != 2 or sizes.shape[1] != 2:
        raise ValueError("boxes must be a sequence of (w, h) pairs")
    n = len(sizes)
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise ValueError(f"need at least k={k} boxes, got {n}")
    if np.any(sizes <= 0):
        raise ValueError("all box sizes must be positive")

    rng = np.random.default_rng(seed)
    centers = _seed_centers(sizes, k, rng, metric)
    rows = np.arange(n)
    prev_assign = None
    prev_distortion = np.inf
    prev_centers = centers
    for _ in range(max_iter):
        dist = _size_distances(sizes, centers, metric)
        assign = dist.argmin(axis=1)
        distortion = float(dist[rows, assign].sum())
        if distortion > prev_distortion + 1e-12:
            centers = prev_centers
            assign = prev_assign
            break
        if distortion_trace is not None:
            distortion_trace.append(distortion)
        if prev_assign is not None and np.array_equal(assign, prev_assign):
            break
        prev_assign = assign
        prev_distortion = distortion
        prev_centers = centers
        centers = np.array([
            sizes[assign == j].mean(axis=0) if np.any(assign == j)
            else centers[j]
            for j in range(k)])

    counts = np.bincount(assign, minlength=k)
    if np.any(counts == 0):
        raise ValueError(
            f"k-means collapsed: {int((counts == 0).sum())} of {k} clusters "
            f"ended up empty")
    order = np.argsort(centers[:, 0] * centers[:, 1], kind="stable")
    return AnchorSet(tuple((float(w), float(h)) for w, h in centers[order]))


def filter_detections(detections, min_score: float):
    """Keep detections scoring at least min_score, order preserved."""
    return [d for d in detections if d.score >= min_score]


class DetectionSource:
    """A per-frame detection provider; lookup may be called once per frame
    by a single consumer."""

    def lookup(self, frame_index: int) -> list[Detection]:
        raise NotImplementedError


class ScriptedSource(DetectionSource):
    """Detections preloaded from a JSONL sidecar, keyed by frame index.

    Frames without records yield empty lists.
    """

    def __init__(self, by_frame: dict[int, list[Detection]]):
        self._by_frame = by_frame

    @classmethod
    def from_file(cls, path) -> "ScriptedSource":
        return cls(load_detection_file(path))

    def lookup(self, frame_index: int) -> list[Detection]:
        return list(self._by_frame.get(frame_index, ()))


class DelayedSource(DetectionSource):
    """Adds a fixed per-lookup delay, emulating detector inference latency.

    Used by the benchmark so the concurrent mode has real work to overlap
    with the flow computation, as a GPU detector would.
    """

    def __init__(self, inner: DetectionSource, delay_s: float):
        self._inner = inner
        self._delay = float(delay_s)

    def lookup(self, frame_index: int) -> list[Detection]:
        time.sleep(self._delay)
        return self._inner.lookup(frame_index)


def _require(condition: bool, path, lineno: int, message: str) -> None:
    if not condition:
        raise DetectionFormatError(f"{path}:{lineno}: {message}")


def load_detection_file(path) -> dict[int, list[Detection]]:
    """Parse a detection sidecar: one JSON object per line with keys
    frame, class_id, label, score, box ([x, y, w, h] in pixels)."""
    by_frame: dict[int, list[Detection]] = {}
    last_frame = -1
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise DetectionFormatError(
                    f"{path}:{lineno}: invalid JSON ({e.msg})") from None
            _require(isinstance(record, dict), path, lineno,
                     "record is not an object")
            for key in ("frame", "class_id", "label", "score", "box"):
                _require(key in record, path, lineno, f"missing key {key!r}")
            frame = record["frame"]
            _require(isinstance(frame, int) and frame >= 0, path, lineno,
                     f"bad frame index {frame!r}")
            _require(frame >= last_frame, path, lineno,
                     f"frame indices went backwards ({frame} after "
                     f"{last_frame})")
            last_frame = frame
            _require(isinstance(record["class_id"], int), path, lineno,
                     "class_id must be an integer")
            _require(isinstance(record["label"], str), path, lineno,
                     "label must be a string")
            box = record["box"]
            _require(isinstance(box, list) and len(box) == 4
                     and all(isinstance(v, (int, float)) for v in box),
                     path, lineno, "box must be [x, y, w, h]")
            _require(isinstance(record["score"], (int, float)), path, lineno,
                     "score must be a number")
            try:
                det = Detection(class_id=record["class_id"],
                                label=record["label"],
                                score=float(record["score"]),
                                box=tuple(float(v) for v in box))
            except ValueError as e:
                raise DetectionFormatError(f"{path}:{lineno}: {e}") from None
            by_frame.setdefault(frame, []).append(det)
    return by_frame


def load_box_sizes(path) -> list[tuple[float, float]]:
    """Parse a JSONL file of {"w": ..., "h": ...} records."""
    sizes = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise DetectionFormatError(
                    f"{path}:{lineno}: invalid JSON ({e.msg})") from None
            _require(isinstance(record, dict) and "w" in record
                     and "h" in record, path, lineno,
                     'expected {"w": ..., "h": ...}')
            w, h = record["w"], record["h"]
            _require(isinstance(w, (int, float)) and isinstance(h, (int, float))
                     and w > 0 and h > 0, path, lineno,
                     f"box size must be positive, got {w}x{h}")
            sizes.append((float(w), float(h)))
    return sizes
