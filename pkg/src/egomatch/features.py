"""Input preparation for the embedding networks and baselines.

Images are float arrays [H, W, 3] with values in [0, 1]; flow fields are
float arrays [H, W, 2] holding per-pixel (u, v) displacement in pixels
per frame. All operations are pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HOOF_GRID = 3
HOOF_BINS = 5
HOOF_DIM = HOOF_GRID * HOOF_GRID * HOOF_BINS
HOOF_WINDOW = 10
FLOW_STACK_LEN = 5


@dataclass(frozen=True)
class BBox:
    """Axis-aligned person box; (x, y) is the top-left pixel."""

    x: int
    y: int
    w: int
    h: int
    person_id: int = -1

    def clipped(self, width: int, height: int) -> "BBox | None":
        """Intersection with a width x height frame, or None if empty."""
        x0, y0 = max(self.x, 0), max(self.y, 0)
        x1, y1 = min(self.x + self.w, width), min(self.y + self.h, height)
        if x1 <= x0 or y1 <= y0:
            return None
        return BBox(x0, y0, x1 - x0, y1 - y0, self.person_id)


def mask_person(frame: np.ndarray, box: BBox) -> np.ndarray:
    """Black out a person's bounding box in a third-person frame.

    The wearer never appears in their own first-person view, so the
    network should match the surrounding scene, not the person.
    """
    h, w = frame.shape[:2]
    clip = box.clipped(w, h)
    if clip is None:
        raise ValueError(f"mask_person: box {box} lies fully outside {w}x{h} frame")
    out = frame.copy()
    out[clip.y:clip.y + clip.h, clip.x:clip.x + clip.w] = 0.0
    return out


def crop_flow(flow: np.ndarray, box: BBox, out_w: int, out_h: int) -> np.ndarray:
    """Crop the flow field inside a box and resize to (out_w, out_h).

    Nearest-neighbor sampling; (u, v) values are carried unscaled so the
    crop preserves actual pixel displacements.
    """
    h, w = flow.shape[:2]
    clip = box.clipped(w, h)
    if clip is None:
        raise ValueError(f"crop_flow: box {box} lies fully outside {w}x{h} field")
    region = flow[clip.y:clip.y + clip.h, clip.x:clip.x + clip.w]
    ys = np.minimum((np.arange(out_h) * clip.h) // out_h, clip.h - 1)
    xs = np.minimum((np.arange(out_w) * clip.w) // out_w, clip.w - 1)
    return region[np.ix_(ys, xs)].copy()


def stack_flows(flows) -> np.ndarray:
    """Stack 5 consecutive flow fields into a [10, H, W] tensor.

    Channel order is [u1, v1, u2, v2, ..., u5, v5].
    """
    flows = list(flows)
    if len(flows) != FLOW_STACK_LEN:
        raise ValueError(
            f"stack_flows: expected {FLOW_STACK_LEN} fields, got {len(flows)}")
    shape = flows[0].shape
    for i, f in enumerate(flows):
        if f.shape != shape:
            raise ValueError(f"stack_flows: field {i} has shape {f.shape}, expected {shape}")
    h, w = shape[:2]
    out = np.empty((10, h, w))
    for i, f in enumerate(flows):
        out[2 * i] = f[..., 0]
        out[2 * i + 1] = f[..., 1]
    return out


def unstack_flows(stack: np.ndarray):
    """Inverse of stack_flows."""
    return [np.stack([stack[2 * i], stack[2 * i + 1]], axis=-1) for i in range(5)]


def _grid_edges(n: int, cells: int):
    # remainder pixels go to the last row/column cell
    base = n // cells
    edges = [i * base for i in range(cells)] + [n]
    return edges


def hoof(flow: np.ndarray) -> np.ndarray:
    """Histogram of Optical Flow: 3x3 grid x 5 angle bins -> 45-d.

    Each pixel votes its flow angle atan2(v, u) in [-pi, pi) into one of
    5 equal bins, weighted by magnitude sqrt(u^2 + v^2). Each cell's
    5-bin block is L1-normalized (all-zero if the cell has no flow), so
    the descriptor is invariant to positive scaling of the field.
    """
    h, w = flow.shape[:2]
    if h < HOOF_GRID or w < HOOF_GRID:
        raise ValueError(f"hoof: field {w}x{h} smaller than {HOOF_GRID}x{HOOF_GRID} grid")
    u, v = flow[..., 0], flow[..., 1]
    mag = np.hypot(u, v)
    ang = np.arctan2(v, u)
    # half-open [-pi, pi): atan2's +pi wraps to bin 0
    bins = np.floor((ang + np.pi) / (2.0 * np.pi) * HOOF_BINS).astype(np.int64) % HOOF_BINS
    ye = _grid_edges(h, HOOF_GRID)
    xe = _grid_edges(w, HOOF_GRID)
    out = np.zeros(HOOF_DIM)
    k = 0
    for gy in range(HOOF_GRID):
        for gx in range(HOOF_GRID):
            cb = bins[ye[gy]:ye[gy + 1], xe[gx]:xe[gx + 1]].ravel()
            cm = mag[ye[gy]:ye[gy + 1], xe[gx]:xe[gx + 1]].ravel()
            block = np.bincount(cb, weights=cm, minlength=HOOF_BINS)
            total = block.sum()
            if total > 0.0:
                block /= total
            out[k:k + HOOF_BINS] = block
            k += HOOF_BINS
    return out


def hoof_window(hoofs, window: int = HOOF_WINDOW) -> np.ndarray:
    """Elementwise mean of up to `window` per-frame HOOF vectors."""
    hoofs = list(hoofs)[-window:]
    if not hoofs:
        raise ValueError("hoof_window: empty sequence")
    return np.mean(np.stack(hoofs), axis=0)


def mean_flow_magnitude(flow: np.ndarray) -> float:
    """Mean over pixels of sqrt(u^2 + v^2)."""
    return float(np.hypot(flow[..., 0], flow[..., 1]).mean())
