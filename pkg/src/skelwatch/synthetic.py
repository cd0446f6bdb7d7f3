"""Parametric synthetic motion corpus.

Each activity class is a hand-built caricature applied to a standing
rest pose: falling translates every joint downward, staggering sways the
whole body laterally, the hand-to-target classes (headache, chest pain,
blow nose, ...) move an arm chain toward a class-specific anchor. Every
sample draws amplitude, phase, timing, and a smooth low-frequency wobble
from its own seeded generator, so corpora are reproducible bit for bit
and generation parallelizes across samples.

Subjects and cameras are assigned round-robin; a camera is a yaw
rotation of the whole trajectory, a subject is a body-size rescale.
"""

from __future__ import annotations

import math

import numpy as np

from .skeleton import (
    ACTIVITY_CLASSES,
    JOINT_NAMES,
    ActivityLabel,
    SkeletonFrame,
    SkeletonSequence,
)

__all__ = [
    "NUM_SUBJECTS",
    "NUM_CAMERAS",
    "CAMERA_YAW_DEGREES",
    "rest_pose",
    "generate_sequence",
    "generate_synthetic_corpus",
]

NUM_SUBJECTS = 8
NUM_CAMERAS = 3
CAMERA_YAW_DEGREES = (-30.0, 0.0, 30.0)

_J = {name: i for i, name in enumerate(JOINT_NAMES)}

# Standing rest pose, meters, y up, z toward the camera.
_REST = np.array([
    [0.00, 0.95, 0.00],   # spine_base
    [0.00, 1.20, 0.00],   # spine_mid
    [0.00, 1.55, 0.00],   # neck
    [0.00, 1.70, 0.00],   # head
    [-0.20, 1.45, 0.00],  # shoulder_left
    [-0.24, 1.18, 0.00],  # elbow_left
    [-0.26, 0.95, 0.00],  # wrist_left
    [-0.27, 0.88, 0.00],  # hand_left
    [0.20, 1.45, 0.00],   # shoulder_right
    [0.24, 1.18, 0.00],   # elbow_right
    [0.26, 0.95, 0.00],   # wrist_right
    [0.27, 0.88, 0.00],   # hand_right
    [-0.10, 0.90, 0.00],  # hip_left
    [-0.11, 0.50, 0.00],  # knee_left
    [-0.12, 0.10, 0.00],  # ankle_left
    [-0.12, 0.04, 0.12],  # foot_left
    [0.10, 0.90, 0.00],   # hip_right
    [0.11, 0.50, 0.00],   # knee_right
    [0.12, 0.10, 0.00],   # ankle_right
    [0.12, 0.04, 0.12],   # foot_right
    [0.00, 1.45, 0.00],   # spine_shoulder
    [-0.28, 0.80, 0.00],  # hand_tip_left
    [-0.23, 0.86, 0.04],  # thumb_left
    [0.28, 0.80, 0.00],   # hand_tip_right
    [0.23, 0.86, 0.04],   # thumb_right
])

# Reach targets, right-handed; mirror x for the left arm.
_MOUTH = np.array([0.04, 1.60, 0.13])
_NOSE = np.array([0.02, 1.63, 0.14])
_HEAD_SIDE = np.array([0.13, 1.66, 0.05])
_CHEST = np.array([0.06, 1.30, 0.12])
_LOWER_BACK = np.array([0.09, 0.98, -0.16])
_NECK_SIDE = np.array([0.07, 1.53, -0.05])
_FACE_FRONT = np.array([0.22, 1.62, 0.16])
_OVERHEAD = np.array([0.16, 2.08, -0.02])

# Arm chain weights: how far along the reach each joint travels.
_ARM = {
    "left": (
        ("elbow_left", 0.45),
        ("wrist_left", 0.90),
        ("hand_left", 1.0),
        ("hand_tip_left", 1.0),
        ("thumb_left", 1.0),
    ),
    "right": (
        ("elbow_right", 0.45),
        ("wrist_right", 0.90),
        ("hand_right", 1.0),
        ("hand_tip_right", 1.0),
        ("thumb_right", 1.0),
    ),
}

rest_pose = _REST.copy  # public read accessor


def _smoothstep(t):
    return t * t * (3.0 - 2.0 * t)


def _ramp(ts, end):
    return _smoothstep(np.clip(ts / end, 0.0, 1.0))


def _bump(ts, center, width):
    return np.exp(-0.5 * ((ts - center) / width) ** 2)


def _mirror(target):
    return target * np.array([-1.0, 1.0, 1.0])


def _hold(base, n):
    return np.repeat(base[np.newaxis], n, axis=0)


def _reach(joints, base, side, target, alpha):
    """Pull one arm chain toward ``target`` by per-frame fraction alpha."""
    hand = _J[f"hand_{side}"]
    for name, weight in _ARM[side]:
        j = _J[name]
        # keep finger joints slightly spread around the shared target
        goal = target + (base[j] - base[hand]) * 0.3
        joints[:, j] += (weight * alpha)[:, np.newaxis] * (goal - base[j])


def _reach_both(joints, base, target, alpha):
    _reach(joints, base, "left", _mirror(target), alpha)
    _reach(joints, base, "right", target, alpha)


def _lean(joints, ts, profile, z_amounts, y_amounts):
    """Tilt the torso: per-joint forward (z) and drop (y) displacements."""
    del ts
    for name, amount in z_amounts:
        joints[:, _J[name], 2] += amount * profile
    for name, amount in y_amounts:
        joints[:, _J[name], 1] += amount * profile


def _motion_sneeze(base, ts, p):
    joints = _hold(base, len(ts))
    pitch = p["amp"] * (_bump(ts, 0.45, 0.07) + 0.8 * _bump(ts, 0.72, 0.07))
    _lean(
        joints, ts, pitch,
        z_amounts=(("head", 0.13), ("neck", 0.08), ("spine_shoulder", 0.05)),
        y_amounts=(("head", -0.06), ("neck", -0.035)),
    )
    _reach_both(joints, base, _MOUTH, _ramp(ts, 0.3))
    return joints


def _motion_stagger(base, ts, p):
    joints = _hold(base, len(ts))
    sway = 0.26 * p["amp"] * np.sin(2 * np.pi * p["freq"] * ts + p["phase"])
    drift = 0.25 * p["amp"] * p["direction"] * ts
    joints[:, :, 0] += (sway + drift)[:, np.newaxis]
    top = 0.10 * p["amp"] * np.sin(2 * np.pi * p["freq"] * ts + p["phase"] + 0.6)
    for name, w in (("head", 1.0), ("neck", 0.8), ("spine_shoulder", 0.6)):
        joints[:, _J[name], 0] += w * top
    bob = 0.02 * p["amp"] * np.sin(4 * np.pi * p["freq"] * ts + p["phase"])
    joints[:, :, 1] += bob[:, np.newaxis]
    return joints


def _motion_fall(base, ts, p):
    joints = _hold(base, len(ts))
    # drop fraction strictly increases: the linear term keeps every frame
    # step larger than the wobble bound, so spine-base y strictly decreases
    drop = p["amp"] * (0.43 * _smoothstep(ts) + 0.12 * ts)
    joints[:, :, 1] = base[np.newaxis, :, 1] * (1.0 - drop[:, np.newaxis])
    # the body pivots forward while collapsing; high joints travel farther
    joints[:, :, 2] += base[np.newaxis, :, 1] * 0.45 * _smoothstep(ts)[:, np.newaxis]
    return joints


def _motion_headache(base, ts, p):
    joints = _hold(base, len(ts))
    reach = _ramp(ts, 0.35)
    _reach(joints, base, "left", _mirror(_HEAD_SIDE), reach)
    _reach(joints, base, "right", _HEAD_SIDE, reach)
    rub = 0.025 * p["amp"] * reach * np.sin(2 * np.pi * 2.8 * ts + p["phase"])
    for side in ("left", "right"):
        for name, w in _ARM[side]:
            joints[:, _J[name], 1] += w * rub
    joints[:, _J["head"], 0] += 0.02 * np.sin(2 * np.pi * ts + p["phase"])
    return joints


def _motion_chest_pain(base, ts, p):
    joints = _hold(base, len(ts))
    hunch = _ramp(ts, 0.5) * p["amp"]
    _lean(
        joints, ts, hunch,
        z_amounts=(("head", 0.10), ("neck", 0.07), ("spine_shoulder", 0.05)),
        y_amounts=(("head", -0.06), ("neck", -0.04), ("spine_shoulder", -0.025)),
    )
    _reach_both(joints, base, _CHEST, _ramp(ts, 0.35))
    clutch = 0.02 * p["amp"] * _ramp(ts, 0.35) * np.sin(2 * np.pi * 2.2 * ts + p["phase"])
    for side in ("left", "right"):
        for name, w in _ARM[side]:
            joints[:, _J[name], 2] += w * clutch
    return joints


def _motion_back_pain(base, ts, p):
    joints = _hold(base, len(ts))
    arch = _ramp(ts, 0.5) * p["amp"]
    _lean(
        joints, ts, arch,
        z_amounts=(("head", -0.08), ("neck", -0.055), ("spine_shoulder", -0.035),
                   ("spine_base", 0.04), ("hip_left", 0.04), ("hip_right", 0.04)),
        y_amounts=(("head", -0.01),),
    )
    _reach(joints, base, "left", _mirror(_LOWER_BACK), _ramp(ts, 0.4))
    _reach(joints, base, "right", _LOWER_BACK, _ramp(ts, 0.4))
    return joints


def _motion_neck_pain(base, ts, p):
    joints = _hold(base, len(ts))
    side = p["side"]
    sign = -1.0 if side == "left" else 1.0
    target = _NECK_SIDE if side == "right" else _mirror(_NECK_SIDE)
    _reach(joints, base, side, target, _ramp(ts, 0.35))
    # pronounced lateral head tilt sets this apart from the other
    # hand-to-face classes
    tilt = sign * p["amp"] * (0.11 * _ramp(ts, 0.5)
                              + 0.045 * np.sin(2 * np.pi * 1.3 * ts + p["phase"]))
    joints[:, _J["head"], 0] += tilt
    joints[:, _J["neck"], 0] += 0.4 * tilt
    shoulder = _J[f"shoulder_{side}"]
    joints[:, shoulder, 1] += 0.05 * p["amp"] * _ramp(ts, 0.5)  # shrug
    return joints


def _motion_vomit(base, ts, p):
    joints = _hold(base, len(ts))
    hunch = _ramp(ts, 0.4) * p["amp"]
    _lean(
        joints, ts, hunch,
        z_amounts=(("head", 0.20), ("neck", 0.14), ("spine_shoulder", 0.09),
                   ("spine_mid", 0.05)),
        y_amounts=(("head", -0.14), ("neck", -0.10), ("spine_shoulder", -0.06)),
    )
    heave = p["amp"] * (_bump(ts, 0.55, 0.08) + _bump(ts, 0.8, 0.08))
    joints[:, _J["head"], 2] += 0.06 * heave
    joints[:, _J["head"], 1] -= 0.05 * heave
    _reach_both(joints, base, np.array([0.05, 1.45, 0.18]), _ramp(ts, 0.35))
    return joints


def _motion_fan_self(base, ts, p):
    joints = _hold(base, len(ts))
    side = p["side"]
    target = _FACE_FRONT if side == "right" else _mirror(_FACE_FRONT)
    reach = _ramp(ts, 0.3)
    _reach(joints, base, side, target, reach)
    # fast wide flapping is the class signature
    flap = 0.12 * p["amp"] * reach * np.sin(2 * np.pi * 3.8 * ts + p["phase"])
    for name, w in _ARM[side]:
        joints[:, _J[name], 0] += w * flap
    joints[:, _J[f"elbow_{side}"], 1] += 0.09 * p["amp"] * reach
    return joints


def _motion_yawn(base, ts, p):
    joints = _hold(base, len(ts))
    s = _ramp(ts, 0.5) * p["amp"]
    # head thrown back plus the idle arm swinging wide mark a yawn
    joints[:, _J["head"], 2] -= 0.12 * s
    joints[:, _J["head"], 1] += 0.05 * s
    joints[:, _J["neck"], 2] -= 0.07 * s
    side = p["side"]
    target = _MOUTH if side == "right" else _mirror(_MOUTH)
    _reach(joints, base, side, target, _ramp(ts, 0.5))
    other = "left" if side == "right" else "right"
    for name, w in _ARM[other]:
        joints[:, _J[name], 0] += (-1.0 if other == "left" else 1.0) * 0.12 * w * s
        joints[:, _J[name], 1] += 0.06 * w * s
    return joints


def _motion_stretch(base, ts, p):
    joints = _hold(base, len(ts))
    raise_arms = _ramp(ts, 0.6)
    _reach(joints, base, "left", _mirror(_OVERHEAD), raise_arms)
    _reach(joints, base, "right", _OVERHEAD, raise_arms)
    extend = 0.03 * p["amp"] * raise_arms
    for name, w in (("head", 1.0), ("neck", 0.9), ("spine_shoulder", 0.8),
                    ("spine_mid", 0.5)):
        joints[:, _J[name], 1] += w * extend
    joints[:, _J["head"], 2] -= 0.03 * p["amp"] * raise_arms
    return joints


def _motion_blow_nose(base, ts, p):
    joints = _hold(base, len(ts))
    side = p["side"]
    target = _NOSE if side == "right" else _mirror(_NOSE)
    reach = _ramp(ts, 0.3)
    _reach(joints, base, side, target, reach)
    s = _ramp(ts, 0.4) * p["amp"]
    joints[:, _J["head"], 2] += 0.09 * s
    joints[:, _J["head"], 1] -= 0.06 * s
    joints[:, _J["neck"], 2] += 0.05 * s
    joints[:, _J["spine_shoulder"], 2] += 0.03 * s
    # slow lateral wipe across the nose, nothing like fanning's flap
    wipe = 0.05 * p["amp"] * reach * np.sin(2 * np.pi * 1.6 * ts + p["phase"])
    for name, w in _ARM[side]:
        joints[:, _J[name], 0] += w * wipe
        joints[:, _J[name], 1] += 0.3 * w * wipe
    return joints


_MOTIONS = {
    "A41": _motion_sneeze,
    "A42": _motion_stagger,
    "A43": _motion_fall,
    "A44": _motion_headache,
    "A45": _motion_chest_pain,
    "A46": _motion_back_pain,
    "A47": _motion_neck_pain,
    "A48": _motion_vomit,
    "A49": _motion_fan_self,
    "A103": _motion_yawn,
    "A104": _motion_stretch,
    "A105": _motion_blow_nose,
}

# Smooth wobble stands in for tracking jitter. Its slope bound must stay
# below the falling class' per-frame drop so monotonicity survives:
# eps*2*pi*freq / (n-1) <= 0.004*2*pi*1.2/43 ~ 0.0007 < fall step ~0.0017.
_WOBBLE_AMP = (0.0015, 0.004)
_WOBBLE_FREQ = (0.4, 1.2)
_MIN_FRAMES = 44
_MAX_FRAMES = 52


def _subject_scale(subject_id: int) -> float:
    return 0.92 + 0.02 * ((subject_id - 1) % NUM_SUBJECTS)


def _camera_yaw(camera_id: int) -> float:
    return CAMERA_YAW_DEGREES[(camera_id - 1) % NUM_CAMERAS]


def generate_sequence(
    label: ActivityLabel,
    subject_id: int,
    camera_id: int,
    rng: np.random.Generator,
    fps: float = 24.0,
) -> SkeletonSequence:
    """One jittered sample of ``label`` seen from the camera's yaw angle."""
    if label.class_code not in _MOTIONS:
        raise ValueError(f"no motion defined for {label.class_code!r}")
    n = int(rng.integers(_MIN_FRAMES, _MAX_FRAMES + 1))
    ts = np.linspace(0.0, 1.0, n)
    params = {
        "amp": rng.uniform(0.85, 1.10),
        "phase": rng.uniform(0.0, 2.0 * math.pi),
        "freq": rng.uniform(1.2, 2.0),
        "direction": float(rng.choice([-1.0, 1.0])),
        "side": str(rng.choice(["left", "right"])),
    }
    joints = _MOTIONS[label.class_code](_REST, ts, params)
    joints = joints * _subject_scale(subject_id)
    eps = rng.uniform(*_WOBBLE_AMP, size=(25, 3))
    freq = rng.uniform(*_WOBBLE_FREQ, size=(25, 3))
    psi = rng.uniform(0.0, 2.0 * math.pi, size=(25, 3))
    joints = joints + eps * np.sin(2.0 * np.pi * freq * ts[:, None, None] + psi)
    theta = math.radians(_camera_yaw(camera_id))
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    x, z = joints[:, :, 0].copy(), joints[:, :, 2].copy()
    joints[:, :, 0] = cos_t * x + sin_t * z
    joints[:, :, 2] = -sin_t * x + cos_t * z
    frames = tuple(
        SkeletonFrame(timestamp=i / fps, joints=joints[i]) for i in range(n)
    )
    return SkeletonSequence(
        frames=frames,
        source_fps=fps,
        subject_id=subject_id,
        camera_id=camera_id,
        label=label,
    )


def generate_synthetic_corpus(
    samples_per_class: int,
    seed: int,
    classes=ACTIVITY_CLASSES,
    num_subjects: int = NUM_SUBJECTS,
    num_cameras: int = NUM_CAMERAS,
    fps: float = 24.0,
) -> list[SkeletonSequence]:
    """Labeled sequences, ``samples_per_class`` per activity class.

    Sample (class c, index i) derives its generator from (seed, c, i)
    alone, so any subset can be regenerated independently. Subject and
    camera ids cycle so both split modes see several groups.
    """
    if samples_per_class < 1:
        raise ValueError("samples_per_class must be at least 1")
    corpus = []
    for ci, label in enumerate(classes):
        for si in range(samples_per_class):
            rng = np.random.default_rng([seed, ci, si])
            corpus.append(
                generate_sequence(
                    label,
                    subject_id=1 + si % num_subjects,
                    camera_id=1 + si % num_cameras,
                    rng=rng,
                    fps=fps,
                )
            )
    return corpus
