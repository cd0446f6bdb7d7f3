"""Skeleton sequence data model, JSONL interchange, and frame-rate resampling.

A sequence is an ordered list of 25-joint body poses captured at a known
frame rate. Joints are 3-D camera-space coordinates in meters with an
optional per-joint confidence. Files use a line-delimited JSON format:
an optional metadata header line followed by one frame object per line.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

JOINT_COUNT = 25

# Body joint order used throughout (index 0 is "base of spine").
JOINT_NAMES = (
    "spine_base",
    "spine_mid",
    "neck",
    "head",
    "shoulder_left",
    "elbow_left",
    "wrist_left",
    "hand_left",
    "shoulder_right",
    "elbow_right",
    "wrist_right",
    "hand_right",
    "hip_left",
    "knee_left",
    "ankle_left",
    "foot_left",
    "hip_right",
    "knee_right",
    "ankle_right",
    "foot_right",
    "spine_shoulder",
    "hand_tip_left",
    "thumb_left",
    "hand_tip_right",
    "thumb_right",
)

# Limb segments as 0-based joint index pairs (torso, arms, legs, hands).
BONE_EDGES = (
    (0, 1),
    (1, 20),
    (2, 20),
    (3, 2),
    (4, 20),
    (5, 4),
    (6, 5),
    (7, 6),
    (8, 20),
    (9, 8),
    (10, 9),
    (11, 10),
    (12, 0),
    (13, 12),
    (14, 13),
    (15, 14),
    (16, 0),
    (17, 16),
    (18, 17),
    (19, 18),
    (21, 22),
    (22, 7),
    (23, 24),
    (24, 11),
)

__all__ = [
    "JOINT_COUNT",
    "JOINT_NAMES",
    "BONE_EDGES",
    "ACTIVITY_CLASSES",
    "CLASS_CODES",
    "ActivityLabel",
    "SkeletonFrame",
    "SkeletonSequence",
    "ParseError",
    "UpsamplingError",
    "label_from_code",
    "class_index",
    "parse_sequence_file",
    "parse_sequence_text",
    "serialize_sequence",
    "write_sequence_file",
    "resample_fps",
]


@dataclass(frozen=True)
class ActivityLabel:
    """One recognizable activity class.

    ``critical`` marks the default alert-eligible classes; deployments can
    widen or narrow that set in their gateway configuration.
    """

    class_code: str
    display_name: str
    critical: bool = False


ACTIVITY_CLASSES: tuple[ActivityLabel, ...] = (
    ActivityLabel("A41", "sneeze/cough"),
    ActivityLabel("A42", "staggering", critical=True),
    ActivityLabel("A43", "falling down", critical=True),
    ActivityLabel("A44", "headache"),
    ActivityLabel("A45", "chest pain", critical=True),
    ActivityLabel("A46", "back pain"),
    ActivityLabel("A47", "neck pain"),
    ActivityLabel("A48", "vomiting", critical=True),
    ActivityLabel("A49", "fan self"),
    ActivityLabel("A103", "yawn"),
    ActivityLabel("A104", "stretch oneself"),
    ActivityLabel("A105", "blow nose"),
)

CLASS_CODES = tuple(label.class_code for label in ACTIVITY_CLASSES)
_LABELS_BY_CODE = {label.class_code: label for label in ACTIVITY_CLASSES}
_INDEX_BY_CODE = {label.class_code: i for i, label in enumerate(ACTIVITY_CLASSES)}


def label_from_code(code: str) -> ActivityLabel:
    """Look up the closed activity table; unknown codes are rejected."""
    try:
        return _LABELS_BY_CODE[code]
    except KeyError:
        raise ValueError(
            f"unknown activity code {code!r}; expected one of {', '.join(CLASS_CODES)}"
        ) from None


def class_index(label: ActivityLabel | str) -> int:
    """Stable 0-based class position used as the classifier target."""
    code = label if isinstance(label, str) else label.class_code
    if code not in _INDEX_BY_CODE:
        raise ValueError(f"unknown activity code {code!r}")
    return _INDEX_BY_CODE[code]


class ParseError(ValueError):
    """A sequence file line is malformed; ``line_number`` is 1-based."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class UpsamplingError(ValueError):
    """Requested frame rate exceeds the source rate."""


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class SkeletonFrame:
    """A single 25-joint pose.

    joints: [25, 3] array of (x, y, z) in meters, camera coordinates.
    confidence: [25] per-joint confidence in [0, 1]; defaults to all ones
    when the capture source does not report one.
    """

    timestamp: float
    joints: np.ndarray
    confidence: np.ndarray | None = None

    def __post_init__(self):
        ts = float(self.timestamp)
        if not math.isfinite(ts):
            raise ValueError("frame timestamp must be finite")
        joints = _readonly(np.asarray(self.joints, dtype=np.float64))
        if joints.shape != (JOINT_COUNT, 3):
            raise ValueError(
                f"expected {JOINT_COUNT} joints of (x, y, z), got array of shape {joints.shape}"
            )
        if not np.all(np.isfinite(joints)):
            raise ValueError("joint coordinates must be finite")
        if self.confidence is None:
            conf = _readonly(np.ones(JOINT_COUNT))
        else:
            conf = _readonly(np.asarray(self.confidence, dtype=np.float64))
            if conf.shape != (JOINT_COUNT,):
                raise ValueError(
                    f"expected {JOINT_COUNT} confidence values, got shape {conf.shape}"
                )
            if not np.all(np.isfinite(conf)) or conf.min() < 0.0 or conf.max() > 1.0:
                raise ValueError("confidence values must lie in [0, 1]")
        object.__setattr__(self, "timestamp", ts)
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "confidence", conf)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SkeletonFrame):
            return NotImplemented
        return (
            self.timestamp == other.timestamp
            and np.array_equal(self.joints, other.joints)
            and np.array_equal(self.confidence, other.confidence)
        )


@dataclass(frozen=True, eq=False)
class SkeletonSequence:
    """An ordered, strictly time-increasing run of skeleton frames."""

    frames: tuple[SkeletonFrame, ...]
    source_fps: float = 24.0
    subject_id: int = 0
    camera_id: int = 0
    label: ActivityLabel | None = None

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise ValueError("sequence must contain at least one frame")
        fps = float(self.source_fps)
        if not math.isfinite(fps) or fps <= 0.0:
            raise ValueError(f"source_fps must be positive, got {self.source_fps}")
        times = [f.timestamp for f in frames]
        for i in range(1, len(times)):
            if times[i] <= times[i - 1]:
                raise ValueError(
                    f"timestamps must be strictly increasing; frame {i} has "
                    f"t={times[i]} after t={times[i - 1]}"
                )
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "source_fps", fps)
        object.__setattr__(self, "subject_id", int(self.subject_id))
        object.__setattr__(self, "camera_id", int(self.camera_id))

    def __len__(self) -> int:
        return len(self.frames)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SkeletonSequence):
            return NotImplemented
        return (
            self.source_fps == other.source_fps
            and self.subject_id == other.subject_id
            and self.camera_id == other.camera_id
            and self.label == other.label
            and len(self.frames) == len(other.frames)
            and all(a == b for a, b in zip(self.frames, other.frames))
        )

    @property
    def duration(self) -> float:
        """Covered time in seconds: each frame accounts for 1/fps."""
        return len(self.frames) / self.source_fps

    def joint_array(self) -> np.ndarray:
        """All joint positions stacked to [T, 25, 3]."""
        return np.stack([f.joints for f in self.frames])


# ---------------------------------------------------------------------------
# JSONL interchange
# ---------------------------------------------------------------------------

_HEADER_KEYS = {"fps", "subject", "camera", "label"}
_FRAME_KEYS = {"t", "joints", "conf"}


def _require_number(value, line_number: int, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(line_number, f"{what} must be a number, got {value!r}")
    out = float(value)
    if not math.isfinite(out):
        raise ParseError(line_number, f"{what} must be finite, got {value!r}")
    return out


def _parse_header(obj: dict, line_number: int):
    unknown = set(obj) - _HEADER_KEYS
    if unknown:
        raise ParseError(line_number, f"unknown header keys {sorted(unknown)}")
    for key in ("fps", "subject", "camera"):
        if key not in obj:
            raise ParseError(line_number, f"header missing required key {key!r}")
    fps = _require_number(obj["fps"], line_number, "fps")
    if fps <= 0:
        raise ParseError(line_number, f"fps must be positive, got {obj['fps']!r}")
    for key in ("subject", "camera"):
        if isinstance(obj[key], bool) or not isinstance(obj[key], int):
            raise ParseError(line_number, f"{key} must be an integer, got {obj[key]!r}")
    label = None
    if "label" in obj:
        if not isinstance(obj["label"], str):
            raise ParseError(line_number, f"label must be a string, got {obj['label']!r}")
        try:
            label = label_from_code(obj["label"])
        except ValueError as exc:
            raise ParseError(line_number, str(exc)) from None
    return fps, int(obj["subject"]), int(obj["camera"]), label


def _parse_frame(obj: dict, line_number: int) -> SkeletonFrame:
    unknown = set(obj) - _FRAME_KEYS
    if unknown:
        raise ParseError(line_number, f"unknown frame keys {sorted(unknown)}")
    for key in ("t", "joints"):
        if key not in obj:
            raise ParseError(line_number, f"frame missing required key {key!r}")
    t = _require_number(obj["t"], line_number, "t")
    joints = obj["joints"]
    if not isinstance(joints, list):
        raise ParseError(line_number, "joints must be a list of [x, y, z] triples")
    if len(joints) != JOINT_COUNT:
        raise ParseError(line_number, f"expected {JOINT_COUNT} joints, got {len(joints)}")
    coords = np.empty((JOINT_COUNT, 3))
    for j, triple in enumerate(joints):
        if not isinstance(triple, list) or len(triple) != 3:
            raise ParseError(line_number, f"joint {j} must be an [x, y, z] triple")
        for a, value in enumerate(triple):
            coords[j, a] = _require_number(value, line_number, f"joint {j} axis {a}")
    conf = None
    if "conf" in obj:
        raw = obj["conf"]
        if not isinstance(raw, list) or len(raw) != JOINT_COUNT:
            raise ParseError(
                line_number, f"conf must list {JOINT_COUNT} values, got {raw!r}"
            )
        conf = np.empty(JOINT_COUNT)
        for j, value in enumerate(raw):
            conf[j] = _require_number(value, line_number, f"conf[{j}]")
        if conf.min() < 0.0 or conf.max() > 1.0:
            raise ParseError(line_number, "conf values must lie in [0, 1]")
    try:
        return SkeletonFrame(timestamp=t, joints=coords, confidence=conf)
    except ValueError as exc:
        raise ParseError(line_number, str(exc)) from None


def parse_sequence_text(text: str) -> SkeletonSequence:
    """Parse the line-delimited JSON format.

    Line 1 may be a metadata header ({"fps", "subject", "camera", "label"?});
    when it already looks like a frame the defaults fps=24, subject=0,
    camera=0 apply. Every error names the offending 1-based file line.
    """
    fps, subject, camera, label = 24.0, 0, 0, None
    frames: list[SkeletonFrame] = []
    saw_header = False
    for line_number, line in enumerate(text.split("\n"), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            obj = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise ParseError(line_number, f"invalid JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise ParseError(line_number, f"expected a JSON object, got {type(obj).__name__}")
        if not frames and not saw_header and not ("t" in obj or "joints" in obj):
            fps, subject, camera, label = _parse_header(obj, line_number)
            saw_header = True
            continue
        frame = _parse_frame(obj, line_number)
        if frames and frame.timestamp <= frames[-1].timestamp:
            raise ParseError(
                line_number,
                f"timestamp {frame.timestamp} not greater than previous "
                f"{frames[-1].timestamp}",
            )
        frames.append(frame)
    if not frames:
        raise ParseError(1, "file contains no frames")
    return SkeletonSequence(
        frames=tuple(frames),
        source_fps=fps,
        subject_id=subject,
        camera_id=camera,
        label=label,
    )


def parse_frame_line(text: str, line_number: int = 1) -> SkeletonFrame:
    """Parse one frame record; line-oriented sources feed these incrementally."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(line_number, f"invalid JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise ParseError(line_number, f"expected a JSON object, got {type(obj).__name__}")
    return _parse_frame(obj, line_number)


def parse_sequence_file(source) -> SkeletonSequence:
    """Parse from a path, raw bytes, or a readable file object."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as handle:
            data = handle.read()
        return parse_sequence_text(data.decode("utf-8"))
    if isinstance(source, (bytes, bytearray)):
        return parse_sequence_text(bytes(source).decode("utf-8"))
    if hasattr(source, "read"):
        data = source.read()
        if isinstance(data, (bytes, bytearray)):
            data = bytes(data).decode("utf-8")
        return parse_sequence_text(data)
    raise TypeError(f"cannot parse sequence from {type(source).__name__}")


def _frame_to_obj(frame: SkeletonFrame) -> dict:
    obj = {
        "t": frame.timestamp,
        "joints": [[float(v) for v in joint] for joint in frame.joints],
    }
    if not np.all(frame.confidence == 1.0):
        obj["conf"] = [float(c) for c in frame.confidence]
    return obj


def serialize_sequence(seq: SkeletonSequence) -> str:
    """Render the header plus one frame per line; inverse of parsing."""
    header: dict = {
        "fps": seq.source_fps,
        "subject": seq.subject_id,
        "camera": seq.camera_id,
    }
    if seq.label is not None:
        header["label"] = seq.label.class_code
    lines = [json.dumps(header)]
    lines.extend(json.dumps(_frame_to_obj(f)) for f in seq.frames)
    return "\n".join(lines) + "\n"


def write_sequence_file(seq: SkeletonSequence, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(serialize_sequence(seq))


# ---------------------------------------------------------------------------
# Frame-rate resampling
# ---------------------------------------------------------------------------


def resample_fps(seq: SkeletonSequence, target_fps: float) -> SkeletonSequence:
    """Downsample by nearest-timestamp selection (no interpolation).

    Output frame k picks the source frame whose timestamp is nearest to
    first_timestamp + k/target_fps, ties resolved to the earlier frame.
    The output has ceil(duration * target_fps) frames and its timestamps
    are rewritten onto the uniform target grid starting at zero.
    """
    target = float(target_fps)
    if not math.isfinite(target) or target <= 0.0:
        raise ValueError(f"target_fps must be positive, got {target_fps}")
    if target > seq.source_fps:
        raise UpsamplingError(
            f"cannot resample {seq.source_fps} fps up to {target} fps; "
            "only downsampling is supported"
        )
    count = math.ceil(seq.duration * target)
    times = np.array([f.timestamp for f in seq.frames])
    rel = times - times[0]
    frames = []
    for k in range(count):
        want = k / target
        picked = int(np.argmin(np.abs(rel - want)))  # first minimum: ties go earlier
        src = seq.frames[picked]
        frames.append(
            SkeletonFrame(timestamp=want, joints=src.joints, confidence=src.confidence)
        )
    return SkeletonSequence(
        frames=tuple(frames),
        source_fps=target,
        subject_id=seq.subject_id,
        camera_id=seq.camera_id,
        label=seq.label,
    )
