"""Labeled tensor datasets: rasterized samples and group-atomic splits.

A sequence becomes a sample by resampling to the working frame rate
(default 10 fps) and rendering every frame against shared sequence
bounds. Splitting never separates a group: cross-subject keeps each
subject wholly on one side, cross-view does the same per camera, so the
held-out side measures generalization to unseen people or viewpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .rasterize import rasterize_sequence
from .skeleton import ActivityLabel, SkeletonSequence, resample_fps

__all__ = [
    "DEFAULT_TARGET_FPS",
    "Provenance",
    "LabeledSample",
    "SplitError",
    "build_sample",
    "build_samples",
    "split_dataset",
]

DEFAULT_TARGET_FPS = 10.0


class SplitError(ValueError):
    """The requested partition cannot be formed from the given groups."""


@dataclass(frozen=True)
class Provenance:
    subject_id: int
    camera_id: int
    source: str = ""


@dataclass(frozen=True, eq=False)
class LabeledSample:
    """A rasterized, rate-normalized training example."""

    tensor_frames: tuple[T.Tensor, ...]
    label: ActivityLabel
    provenance: Provenance

    def __post_init__(self):
        frames = tuple(self.tensor_frames)
        if not frames:
            raise ValueError("sample must contain at least one frame")
        shape = frames[0].shape
        for i, frame in enumerate(frames):
            if frame.shape != shape:
                raise ValueError(
                    f"frame {i} has shape {frame.shape}, expected {shape}"
                )
            if frame.data.min() < 0.0 or frame.data.max() > 1.0:
                raise ValueError(f"frame {i} has pixels outside [0, 1]")
        if len(shape) != 3 or shape[0] != 1 or shape[1] != shape[2]:
            raise ValueError(f"frames must be [1, G, G], got {shape}")
        object.__setattr__(self, "tensor_frames", frames)

    @property
    def grid(self) -> int:
        return self.tensor_frames[0].shape[1]

    def __len__(self) -> int:
        return len(self.tensor_frames)


def build_sample(
    seq: SkeletonSequence,
    grid: int = 64,
    target_fps: float = DEFAULT_TARGET_FPS,
    dtype=np.float32,
    source: str = "",
) -> LabeledSample:
    if seq.label is None:
        raise ValueError("sequence carries no label; cannot build a labeled sample")
    resampled = resample_fps(seq, target_fps) if target_fps != seq.source_fps else seq
    frames = rasterize_sequence(resampled, grid=grid, dtype=dtype)
    return LabeledSample(
        tensor_frames=tuple(frames),
        label=seq.label,
        provenance=Provenance(seq.subject_id, seq.camera_id, source),
    )


def build_samples(
    sequences,
    grid: int = 64,
    target_fps: float = DEFAULT_TARGET_FPS,
    dtype=np.float32,
) -> list[LabeledSample]:
    return [
        build_sample(seq, grid=grid, target_fps=target_fps, dtype=dtype)
        for seq in sequences
    ]


def _group_id(sample, mode: str) -> int:
    source = getattr(sample, "provenance", sample)
    if mode == "cross_subject":
        return int(source.subject_id)
    if mode == "cross_view":
        return int(source.camera_id)
    raise ValueError(f"unknown split mode {mode!r}; use cross_subject or cross_view")


def split_dataset(samples, mode: str, train_fraction: float = 0.8, seed: int = 0):
    """Partition into (train, test) without ever splitting a group.

    Groups (subjects or cameras) are shuffled by ``seed`` and added to
    the training side greedily while it stays within the target count;
    with equal-sized groups the split is as close to ``train_fraction``
    as group atomicity permits. Both sides always end up nonempty.
    """
    samples = list(samples)
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    groups: dict[int, list] = {}
    for sample in samples:
        groups.setdefault(_group_id(sample, mode), []).append(sample)
    if len(groups) < 2:
        raise SplitError(
            f"{mode} split needs at least 2 groups, found {len(groups)}"
        )
    order = sorted(groups)
    rng = np.random.default_rng(seed)
    rng.shuffle(order)
    target = int(round(train_fraction * len(samples)))
    train_groups: list[int] = []
    count = 0
    for gid in order:
        size = len(groups[gid])
        if count + size <= target:
            train_groups.append(gid)
            count += size
    if not train_groups:  # every group overshoots; take the first anyway
        train_groups = [order[0]]
    if len(train_groups) == len(order):  # keep the test side alive
        train_groups.pop()
    chosen = set(train_groups)
    train = [s for s in samples if _group_id(s, mode) in chosen]
    test = [s for s in samples if _group_id(s, mode) not in chosen]
    return train, test
