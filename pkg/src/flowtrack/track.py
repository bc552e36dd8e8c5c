"""Scene-object lifecycle: flow-based prediction, match-driven updates.

Objects are immutable; update returns a fresh list. An object that fails
to match becomes Lost and stays in the list as a tombstone, permanently
excluded from prediction and matching. Every unmatched detection spawns a
new object immediately.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .assoc import Assignment
from .imageops import round_half_away
from .optflow import MotionField

ACTIVE = "active"
LOST = "lost"


@dataclass(frozen=True)
class SceneObject:
    """A persistent tracked entity in original-frame coordinates."""

    id: int
    class_id: int
    label: str
    box: tuple[float, float, float, float]  # x, y, w, h
    state: str = ACTIVE
    born_at: int = 0
    last_seen: int = 0
    score: float = 1.0
    lost_at: int | None = None

    def __post_init__(self):
        if self.state not in (ACTIVE, LOST):
            raise ValueError(f"unknown state {self.state!r}")
        if self.last_seen < self.born_at:
            raise ValueError("last_seen cannot precede born_at")
        x, y, w, h = self.box
        if w <= 0 or h <= 0:
            raise ValueError(f"box must have positive size, got {w}x{h}")
        object.__setattr__(self, "box", (float(x), float(y),
                                         float(w), float(h)))


def active_set(objects) -> list[SceneObject]:
    """Objects still eligible for prediction and matching, order kept."""
    return [o for o in objects if o.state == ACTIVE]


def _support(value: float, scale: float) -> int:
    return int(round_half_away(value / scale))


def predict(objects, field: MotionField, level: int,
            frame_size: tuple[int, int]) -> list:
    """Shift each object's box by the mean flow inside it.

    Boxes are scaled into pyramid-level coordinates, the flow vectors of
    all pixels inside the rounded-and-clamped box are averaged, and the
    box is moved by that average (scaled back), clamped to the frame,
    size unchanged. Pixel support uses round-half-away edges. Returns one
    entry per object: the shifted (x, y, w, h), or None when the box has
    no pixel support left, in which case the caller should drop the
    object from matching (it will be flagged Lost).
    """
    scale = float(2 ** level)
    frame_w, frame_h = frame_size
    out = []
    for obj in objects:
        if obj.state != ACTIVE:
            raise ValueError(f"cannot predict lost object {obj.id}")
        x, y, w, h = obj.box
        left = max(_support(x, scale), 0)
        top = max(_support(y, scale), 0)
        right = min(_support(x + w, scale), field.width)
        bottom = min(_support(y + h, scale), field.height)
        if right <= left or bottom <= top:
            out.append(None)
            continue
        shift_x = float(field.dx[top:bottom, left:right].mean()) * scale
        shift_y = float(field.dy[top:bottom, left:right].mean()) * scale
        nx = min(max(x + shift_x, 0.0), max(float(frame_w) - w, 0.0))
        ny = min(max(y + shift_y, 0.0), max(float(frame_h) - h, 0.0))
        out.append((nx, ny, w, h))
    return out


def update(objects, assignment: Assignment, detections, frame_index: int,
           detection_blend: float = 1.0) -> list[SceneObject]:
    """Apply match results for one frame.

    Matched objects take the matched detection's box and score (or a
    blend of detection and predicted box when detection_blend < 1) and
    stay Active. Unmatched Active objects become Lost. Every unmatched
    detection spawns a new Active object with a fresh, strictly
    increasing id.
    """
    matched_obj: dict[int, int] = {}
    matched_det = set()
    for i, j, _ in assignment.pairs:
        if not 0 <= i < len(objects):
            raise IndexError(f"scene index {i} out of range")
        if not 0 <= j < len(detections):
            raise IndexError(f"detection index {j} out of range")
        matched_obj[i] = j
        matched_det.add(j)

    next_id = max((o.id for o in objects), default=-1) + 1
    updated: list[SceneObject] = []
    for i, obj in enumerate(objects):
        if i in matched_obj:
            if obj.state != ACTIVE:
                raise ValueError(
                    f"lost object {obj.id} appeared in the assignment")
            det = detections[matched_obj[i]]
            if detection_blend >= 1.0:
                box = det.box
            else:
                b = detection_blend
                box = tuple(b * dv + (1.0 - b) * ov
                            for dv, ov in zip(det.box, obj.box))
            updated.append(replace(obj, box=box, score=det.score,
                                   last_seen=frame_index))
        elif obj.state == ACTIVE:
            updated.append(replace(obj, state=LOST, lost_at=frame_index))
        else:
            updated.append(obj)

    for j, det in enumerate(detections):
        if j in matched_det:
            continue
        updated.append(SceneObject(id=next_id, class_id=det.class_id,
                                   label=det.label, box=det.box,
                                   state=ACTIVE, born_at=frame_index,
                                   last_seen=frame_index, score=det.score))
        next_id += 1
    return updated
