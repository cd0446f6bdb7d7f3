"""Skeleton-to-image rendering.

Each frame becomes a [1, G, G] grayscale tensor: the 2-D projection
(depth dropped) of every confident joint is min-max normalized into the
central [0.1, 0.9]*G box and drawn as an intensity-1.0 point; bones are
0.5 Bresenham segments underneath. Normalization bounds come from the
whole sequence, not the single frame, so within-sequence motion keeps
its amplitude and the rendering is invariant to uniform scaling and
translation of the input coordinates.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from . import tensor as T
from .skeleton import BONE_EDGES, SkeletonFrame, SkeletonSequence

__all__ = [
    "DegenerateBoxWarning",
    "PixelBounds",
    "sequence_bounds",
    "frame_bounds",
    "rasterize_frame",
    "rasterize_sequence",
]

BOX_MARGIN = 0.1  # fraction of the grid left blank on every side
MIN_GRID = 8
JOINT_INTENSITY = 1.0
BONE_INTENSITY = 0.5


class DegenerateBoxWarning(UserWarning):
    """All confident joints coincide; frames collapse to a center pixel."""


class PixelBounds:
    """Per-axis min/max of the confident joints of one sequence."""

    __slots__ = ("x_min", "x_max", "y_min", "y_max")

    def __init__(self, x_min, x_max, y_min, y_max):
        self.x_min = float(x_min)
        self.x_max = float(x_max)
        self.y_min = float(y_min)
        self.y_max = float(y_max)

    def __repr__(self):
        return (
            f"PixelBounds(x=[{self.x_min}, {self.x_max}], "
            f"y=[{self.y_min}, {self.y_max}])"
        )


def _bounds_of(joints: np.ndarray, active: np.ndarray) -> PixelBounds:
    if not np.any(active):
        raise ValueError("no joint has confidence > 0; nothing to render")
    xs = joints[active, 0]
    ys = joints[active, 1]
    bounds = PixelBounds(xs.min(), xs.max(), ys.min(), ys.max())
    if bounds.x_min == bounds.x_max and bounds.y_min == bounds.y_max:
        warnings.warn(
            "all confident joints coincide; rendering a single center pixel",
            DegenerateBoxWarning,
            stacklevel=3,
        )
    return bounds


def frame_bounds(frame: SkeletonFrame) -> PixelBounds:
    return _bounds_of(frame.joints, frame.confidence > 0.0)


def sequence_bounds(seq: SkeletonSequence) -> PixelBounds:
    joints = np.concatenate([f.joints for f in seq.frames])
    active = np.concatenate([f.confidence for f in seq.frames]) > 0.0
    return _bounds_of(joints, active)


def _axis_to_pixel(value: float, lo: float, hi: float, grid: int, flip: bool) -> int:
    # Degenerate extent centers the axis instead of dividing by zero.
    u = 0.5 if hi == lo else (value - lo) / (hi - lo)
    if flip:
        u = 1.0 - u
    return int(round((BOX_MARGIN + (1.0 - 2.0 * BOX_MARGIN) * u) * grid))


def _bresenham(image: np.ndarray, r0: int, c0: int, r1: int, c1: int, value: float):
    """Classic integer line rasterization, all octants."""
    dr = abs(r1 - r0)
    dc = abs(c1 - c0)
    step_r = 1 if r1 >= r0 else -1
    step_c = 1 if c1 >= c0 else -1
    err = dc - dr
    r, c = r0, c0
    while True:
        image[r, c] = value
        if r == r1 and c == c1:
            return
        doubled = 2 * err
        if doubled >= -dr:
            err -= dr
            c += step_c
        if doubled <= dc:
            err += dc
            r += step_r


def rasterize_frame(
    frame: SkeletonFrame,
    grid: int = 64,
    bone_edges=BONE_EDGES,
    bounds: PixelBounds | None = None,
    dtype=np.float64,
) -> T.Tensor:
    """Render one frame to a [1, grid, grid] tensor.

    ``bounds`` should be the enclosing sequence's bounds; when omitted the
    frame normalizes against itself (single-frame use only).
    """
    if grid < MIN_GRID:
        raise ValueError(f"grid must be at least {MIN_GRID}, got {grid}")
    if bounds is None:
        bounds = frame_bounds(frame)
    active = frame.confidence > 0.0
    if not np.any(active):
        raise ValueError("no joint has confidence > 0; nothing to render")
    rows = np.empty(len(frame.joints), dtype=np.int64)
    cols = np.empty(len(frame.joints), dtype=np.int64)
    for j, (x, y, _z) in enumerate(frame.joints):
        cols[j] = _axis_to_pixel(x, bounds.x_min, bounds.x_max, grid, flip=False)
        rows[j] = _axis_to_pixel(y, bounds.y_min, bounds.y_max, grid, flip=True)
    image = np.zeros((grid, grid))
    for a, b in bone_edges:
        if active[a] and active[b]:
            _bresenham(image, rows[a], cols[a], rows[b], cols[b], BONE_INTENSITY)
    for j in np.flatnonzero(active):
        image[rows[j], cols[j]] = JOINT_INTENSITY
    return T.Tensor(image[np.newaxis].astype(dtype))


def rasterize_sequence(
    seq: SkeletonSequence,
    grid: int = 64,
    bone_edges=BONE_EDGES,
    dtype=np.float64,
) -> list[T.Tensor]:
    """Render every frame against the shared sequence-level bounds."""
    bounds = sequence_bounds(seq)
    return [
        rasterize_frame(f, grid=grid, bone_edges=bone_edges, bounds=bounds, dtype=dtype)
        for f in seq.frames
    ]
