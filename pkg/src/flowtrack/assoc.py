"""IOU scoring and globally optimal assignment of objects to detections.

The matching builds a 1 - IOU cost matrix, marks pairs below the IOU gate
or across class labels as forbidden (a large finite sentinel keeps the
solver free of infinities), solves it with the Hungarian algorithm, and
drops any pair that still landed on a forbidden cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Sentinel cost for disallowed pairs; must exceed any achievable total of
# real costs (which are 1 - IOU <= 1 summed over at most a few thousand
# pairs).
FORBIDDEN_COST = 1e6


@dataclass(frozen=True)
class Assignment:
    """Result of matching: index pairs plus the leftovers on both sides."""

    pairs: tuple[tuple[int, int, float], ...]  # (scene idx, det idx, iou)
    unmatched_scene: tuple[int, ...]
    unmatched_detections: tuple[int, ...]


def iou(a, b) -> float:
    """Intersection-over-union of two (x, y, w, h) boxes, continuous area."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    if aw <= 0 or ah <= 0 or bw <= 0 or bh <= 0:
        raise ValueError("boxes must have positive width and height")
    ix = max(ax, bx)
    iy = max(ay, by)
    ix2 = min(ax + aw, bx + bw)
    iy2 = min(ay + ah, by + bh)
    inter = max(0.0, ix2 - ix) * max(0.0, iy2 - iy)
    return inter / (aw * ah + bw * bh - inter)


def _solve(cost: np.ndarray) -> list[tuple[int, int]]:
    """Shortest-augmenting-path assignment for rows <= cols.

    Rows are inserted in index order and column scans run in index order,
    so ties between equal-cost alternatives resolve toward low indices.
    """
    n_rows, n_cols = cost.shape
    u = np.zeros(n_rows)            # row potentials
    v = np.zeros(n_cols + 1)        # column potentials, last is virtual
    owner = np.full(n_cols + 1, -1, dtype=np.intp)  # col -> assigned row
    for row in range(n_rows):
        owner[n_cols] = row
        j0 = n_cols
        min_slack = np.full(n_cols, np.inf)
        came_from = np.full(n_cols, n_cols, dtype=np.intp)
        used = np.zeros(n_cols + 1, dtype=bool)
        while True:
            used[j0] = True
            r = owner[j0]
            slack = cost[r, :] - u[r] - v[:n_cols]
            better = ~used[:n_cols] & (slack < min_slack)
            min_slack[better] = slack[better]
            came_from[better] = j0
            candidates = np.where(used[:n_cols], np.inf, min_slack)
            j1 = int(np.argmin(candidates))
            delta = candidates[j1]
            for j in np.flatnonzero(used):
                u[owner[j]] += delta
                v[j] -= delta
            min_slack[~used[:n_cols]] -= delta
            j0 = j1
            if owner[j0] == -1:
                break
        while j0 != n_cols:
            j_prev = came_from[j0]
            owner[j0] = owner[j_prev]
            j0 = j_prev
    return [(int(owner[j]), j) for j in range(n_cols) if owner[j] != -1]


def hungarian(cost, forbidden: float | None = None) -> list[tuple[int, int]]:
    """Globally minimal assignment of min(m, n) pairs of an m x n matrix.

    Costs must be finite. Cells holding `forbidden` (or more) are treated
    as disallowed: the solver avoids them whenever possible and any pair
    still landing on one is dropped from the result. Pairs are returned
    sorted by row index. An empty matrix yields an empty assignment.
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    if c.size == 0:
        return []
    if not np.all(np.isfinite(c)):
        raise ValueError("costs must be finite")
    if c.shape[0] <= c.shape[1]:
        pairs = _solve(c)
    else:
        pairs = [(i, j) for j, i in _solve(c.T)]
    pairs.sort()
    if forbidden is not None:
        pairs = [(i, j) for i, j in pairs if c[i, j] < forbidden]
    return pairs


def match(objects, detections, gate: float = 0.3) -> Assignment:
    """Pair tracked objects with detections by IOU, class-constrained.

    Both inputs need .box and .class_id attributes. Pairs with IOU below
    the gate or differing class ids are never produced; leftover indices
    land in the unmatched lists.
    """
    m, n = len(objects), len(detections)
    if m == 0 or n == 0:
        return Assignment((), tuple(range(m)), tuple(range(n)))
    scores = np.zeros((m, n))
    cost = np.full((m, n), FORBIDDEN_COST)
    for i, obj in enumerate(objects):
        for j, det in enumerate(detections):
            s = iou(obj.box, det.box)
            scores[i, j] = s
            if s >= gate and obj.class_id == det.class_id:
                cost[i, j] = 1.0 - s
    pairs = hungarian(cost, forbidden=FORBIDDEN_COST)
    matched_obj = {i for i, _ in pairs}
    matched_det = {j for _, j in pairs}
    return Assignment(
        pairs=tuple((i, j, float(scores[i, j])) for i, j in pairs),
        unmatched_scene=tuple(i for i in range(m) if i not in matched_obj),
        unmatched_detections=tuple(j for j in range(n)
                                   if j not in matched_det),
    )
