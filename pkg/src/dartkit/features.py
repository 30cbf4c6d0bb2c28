"""Kinematic features of a recorded throw.

Eighteen named scalars per throw: twelve read at or around the release
instant (speeds, angles, stabilities, grip geometry, release phase) and
six time-averages of per-frame curves resampled onto the release-anchored
grid. The per-frame curves themselves are kept as a SeriesBundle so the
diagnostics layer can compare full profiles point by point.

Conventions: positions are meters, speeds m/s, angles degrees,
stabilities and grip statistics millimeters. The release frame is the
end frame of the fastest hand-tip step; speed series entry i describes
the step ending at frame i+1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .skeleton import (
    Joint,
    MIN_FRAMES,
    SkeletonFrame,
    SkeletonSequence,
    ThrowRecord,
    _eval_columns,
    _spline_coefficients,
    resample_grid,
)

STABILITY_WINDOW_HALF = 5

# Joints used for the three tabled stability indices.
HEAD_JOINT = Joint.HEAD
TRUNK_JOINT = Joint.SPINE_MID
WRIST_JOINT = Joint.WRIST_RIGHT

FEATURE_NAMES = (
    "release_velocity",
    "release_alignment_angle",
    "mean_grip_distance",
    "grip_distance_variability",
    "head_stability",
    "trunk_stability",
    "wrist_stability",
    "shoulder_pitch_at_release",
    "elbow_flexion_at_release",
    "wrist_extension_at_release",
    "trunk_yaw_at_release",
    "release_phase_pct",
    "mean_hand_velocity",
    "mean_target_alignment_angle",
    "mean_shoulder_pitch",
    "mean_elbow_flexion",
    "mean_wrist_extension",
    "mean_trunk_yaw",
)

SERIES_NAMES = (
    "hand_speed",
    "target_alignment",
    "shoulder_pitch",
    "elbow_flexion",
    "wrist_extension",
    "trunk_yaw",
)

DEFAULT_TARGET_DIR = (0.0, 0.0, 1.0)
DEFAULT_GRID_SAMPLES = 100


@dataclass(frozen=True)
class ReleaseInfo:
    """Release frame (0 < release_idx < T) and the hand speed there."""

    release_idx: int
    release_speed: float


@dataclass(frozen=True)
class FeatureVector:
    """The 18 scalar features of one throw, fixed order."""

    release_velocity: float
    release_alignment_angle: float
    mean_grip_distance: float
    grip_distance_variability: float
    head_stability: float
    trunk_stability: float
    wrist_stability: float
    shoulder_pitch_at_release: float
    elbow_flexion_at_release: float
    wrist_extension_at_release: float
    trunk_yaw_at_release: float
    release_phase_pct: float
    mean_hand_velocity: float
    mean_target_alignment_angle: float
    mean_shoulder_pitch: float
    mean_elbow_flexion: float
    mean_wrist_extension: float
    mean_trunk_yaw: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FEATURE_NAMES], dtype=float)

    @classmethod
    def from_array(cls, values) -> "FeatureVector":
        values = np.asarray(values, dtype=float)
        if values.shape != (len(FEATURE_NAMES),):
            raise ValueError(f"need {len(FEATURE_NAMES)} values")
        return cls(**{n: float(v) for n, v in zip(FEATURE_NAMES, values)})

    @staticmethod
    def names() -> tuple:
        return FEATURE_NAMES


@dataclass(frozen=True, eq=False)
class SeriesBundle:
    """Per-throw dynamic curves on the release-anchored grid.

    Each curve has grid_samples points; grid holds the source frame
    indices the samples were taken at.
    """

    grid_samples: int
    release_sample: int
    grid: np.ndarray
    hand_speed: np.ndarray
    target_alignment: np.ndarray
    shoulder_pitch: np.ndarray
    elbow_flexion: np.ndarray
    wrist_extension: np.ndarray
    trunk_yaw: np.ndarray

    def series(self, name: str) -> np.ndarray:
        if name not in SERIES_NAMES:
            raise KeyError(f"unknown series {name!r}")
        return getattr(self, name)

    def as_matrix(self) -> np.ndarray:
        return np.stack([getattr(self, n) for n in SERIES_NAMES])


# ---------------------------------------------------------------------------
# Elementary measurements


def hand_speed_series(seq: SkeletonSequence) -> np.ndarray:
    """Hand-tip speed per step: ||p(t) - p(t-1)|| * fps, length T-1.

    Entry i is the speed over the step ending at frame i+1.
    """
    tip = seq.joint_track(Joint.HAND_TIP_RIGHT)
    return np.linalg.norm(np.diff(tip, axis=0), axis=1) * seq.fps


def detect_release(speed_series) -> int:
    """Index of the maximal entry, earliest on ties."""
    s = np.asarray(speed_series, dtype=float)
    if s.size == 0:
        raise ValueError("empty speed series")
    return int(np.argmax(s))


def find_release(seq: SkeletonSequence) -> ReleaseInfo:
    """Locate the release: the end frame of the fastest hand-tip step."""
    speeds = hand_speed_series(seq)
    k = detect_release(speeds)
    return ReleaseInfo(release_idx=k + 1, release_speed=float(speeds[k]))


def release_speed(seq: SkeletonSequence, release_idx: int) -> float:
    """Hand speed at the release frame (the step ending there)."""
    if not 1 <= release_idx <= seq.n_frames - 1:
        raise ValueError(f"release_idx {release_idx} outside [1, {seq.n_frames - 1}]")
    tip = seq.joint_track(Joint.HAND_TIP_RIGHT)
    step = tip[release_idx] - tip[release_idx - 1]
    return float(np.linalg.norm(step) * seq.fps)


def angle_between(a, b) -> float:
    """Angle in degrees between two vectors via the clamped arccos."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("angle undefined for zero-norm vector")
    cosv = float(np.dot(a, b) / (na * nb))
    return math.degrees(math.acos(min(1.0, max(-1.0, cosv))))


def _angles_between_rows(A: np.ndarray, B: np.ndarray, what: str) -> np.ndarray:
    na = np.linalg.norm(A, axis=1)
    nb = np.linalg.norm(B, axis=1)
    bad = (na == 0.0) | (nb == 0.0)
    if np.any(bad):
        raise ValueError(f"frame {int(np.flatnonzero(bad)[0])}: zero-length {what}")
    cosv = np.einsum("ij,ij->i", A, B) / (na * nb)
    return np.degrees(np.arccos(np.clip(cosv, -1.0, 1.0)))


def trunk_yaw_of(line: np.ndarray) -> np.ndarray:
    """Signed yaw (degrees) of shoulder-line vectors, counterclockwise
    positive about the vertical axis, 0 along the sensor lateral axis."""
    line = np.asarray(line, dtype=float)
    if line.ndim == 1:
        return float(np.degrees(np.arctan2(-line[2], line[0])))
    return np.degrees(np.arctan2(-line[..., 2], line[..., 0]))


def joint_angles(frame: SkeletonFrame) -> dict:
    """The four posture angles of one frame, degrees.

    shoulder_pitch: upper arm vs the trunk-down axis.
    elbow_flexion: upper arm vs forearm, at the elbow (180 = straight).
    wrist_extension: hand-tip direction vs the forearm line (0 = straight).
    trunk_yaw: signed shoulder-line yaw about vertical.
    """
    j = frame.joints
    sh = j[Joint.SHOULDER_RIGHT]
    el = j[Joint.ELBOW_RIGHT]
    wr = j[Joint.WRIST_RIGHT]
    tip = j[Joint.HAND_TIP_RIGHT]
    trunk_down = j[Joint.SPINE_BASE] - j[Joint.SPINE_SHOULDER]
    line = j[Joint.SHOULDER_RIGHT] - j[Joint.SHOULDER_LEFT]
    return {
        "shoulder_pitch": angle_between(el - sh, trunk_down),
        "elbow_flexion": angle_between(sh - el, wr - el),
        "wrist_extension": angle_between(wr - el, tip - wr),
        "trunk_yaw": trunk_yaw_of(line),
    }


def arm_vertical_angle(frame: SkeletonFrame) -> float:
    """Alternate aiming reading: throwing-arm axis (shoulder to hand tip)
    vs the vertical axis. Kept separate from the velocity-based
    release_alignment_angle."""
    j = frame.joints
    arm = j[Joint.HAND_TIP_RIGHT] - j[Joint.SHOULDER_RIGHT]
    return angle_between(arm, np.array([0.0, 1.0, 0.0]))


def stability_index(seq: SkeletonSequence, joint: int, release_idx: int,
                    window_half: int = STABILITY_WINDOW_HALF) -> float:
    """Mean consecutive displacement (mm) of one joint over the window
    centered at the release frame, clamped to the sequence."""
    T = seq.n_frames
    if not 0 <= release_idx < T:
        raise ValueError(f"release_idx {release_idx} outside [0, {T})")
    lo = max(0, release_idx - window_half)
    hi = min(T - 1, release_idx + window_half)
    if hi - lo < 1:
        raise ValueError("stability window has fewer than 2 frames")
    track = seq.joint_track(joint)[lo: hi + 1]
    disp = np.linalg.norm(np.diff(track, axis=0), axis=1)
    return float(np.mean(disp) * 1000.0)


def grip_stats(seq: SkeletonSequence) -> tuple:
    """Mean and population standard deviation (mm) of the hand-tip to
    thumb separation over the whole sequence."""
    d = np.linalg.norm(
        seq.joint_track(Joint.HAND_TIP_RIGHT) - seq.joint_track(Joint.THUMB_RIGHT),
        axis=1,
    )
    return float(np.mean(d) * 1000.0), float(np.std(d) * 1000.0)


def release_phase_pct(release_idx: int, n_frames: int) -> float:
    """Release instant as a percentage of the cycle, 100 * r / T."""
    if release_idx > n_frames:
        raise ValueError(f"release_idx {release_idx} exceeds frame count {n_frames}")
    if release_idx <= 0 or n_frames <= 0:
        raise ValueError("release_idx and n_frames must be positive")
    return 100.0 * release_idx / n_frames


# ---------------------------------------------------------------------------
# Per-frame curves and the full feature vector


def _frame_angle_curves(seq: SkeletonSequence) -> dict:
    j = seq.joints
    sh = j[:, Joint.SHOULDER_RIGHT]
    el = j[:, Joint.ELBOW_RIGHT]
    wr = j[:, Joint.WRIST_RIGHT]
    tip = j[:, Joint.HAND_TIP_RIGHT]
    trunk_down = j[:, Joint.SPINE_BASE] - j[:, Joint.SPINE_SHOULDER]
    line = j[:, Joint.SHOULDER_RIGHT] - j[:, Joint.SHOULDER_LEFT]
    return {
        "shoulder_pitch": _angles_between_rows(el - sh, trunk_down, "upper arm or trunk"),
        "elbow_flexion": _angles_between_rows(sh - el, wr - el, "arm segment"),
        "wrist_extension": _angles_between_rows(wr - el, tip - wr, "forearm or hand"),
        "trunk_yaw": trunk_yaw_of(line),
    }


def _alignment_curve(seq: SkeletonSequence, target_dir: np.ndarray) -> np.ndarray:
    """Angle of each hand-tip velocity step to the target direction.

    Zero-motion steps carry the nearest moving step's angle so the curve
    stays defined during holds; a throw whose hand never moves is an
    error.
    """
    steps = np.diff(seq.joint_track(Joint.HAND_TIP_RIGHT), axis=0)
    norms = np.linalg.norm(steps, axis=1)
    moving = norms > 0.0
    if not np.any(moving):
        raise ValueError("hand never moves; aiming angle undefined")
    tnorm = np.linalg.norm(target_dir)
    cosv = (steps @ target_dir) / (np.where(moving, norms, 1.0) * tnorm)
    ang = np.degrees(np.arccos(np.clip(cosv, -1.0, 1.0)))
    if not np.all(moving):
        idx = np.arange(len(ang))
        valid = idx[moving]
        nearest = valid[np.argmin(np.abs(idx[:, None] - valid[None, :]), axis=1)]
        ang = ang[nearest]
    return ang


def compute_series(seq: SkeletonSequence, release_idx: int,
                   target_dir=DEFAULT_TARGET_DIR,
                   grid_samples: int = DEFAULT_GRID_SAMPLES) -> SeriesBundle:
    """Spline the six per-frame curves onto the release-anchored grid."""
    T = seq.n_frames
    if grid_samples < MIN_FRAMES:
        raise ValueError(f"grid_samples must be >= {MIN_FRAMES}")
    target = np.asarray(target_dir, dtype=float)
    if target.shape != (3,) or np.linalg.norm(target) == 0:
        raise ValueError("target_dir must be a nonzero 3-vector")
    grid, r_s = resample_grid(grid_samples, release_idx, T)

    angles = _frame_angle_curves(seq)
    speeds = hand_speed_series(seq)
    align = _alignment_curve(seq, target)

    frame_knots = np.arange(T, dtype=float)
    step_knots = np.arange(1, T, dtype=float)

    angle_mat = np.stack(
        [angles[k] for k in ("shoulder_pitch", "elbow_flexion",
                             "wrist_extension", "trunk_yaw")], axis=1
    )
    angle_vals = _eval_columns(
        frame_knots, _spline_coefficients(frame_knots, angle_mat), grid
    )
    step_mat = np.stack([speeds, align], axis=1)
    step_vals = _eval_columns(
        step_knots, _spline_coefficients(step_knots, step_mat), grid
    )
    return SeriesBundle(
        grid_samples=grid_samples,
        release_sample=r_s,
        grid=grid,
        hand_speed=step_vals[:, 0],
        target_alignment=step_vals[:, 1],
        shoulder_pitch=angle_vals[:, 0],
        elbow_flexion=angle_vals[:, 1],
        wrist_extension=angle_vals[:, 2],
        trunk_yaw=angle_vals[:, 3],
    )


def throw_profile(seq, target_dir=DEFAULT_TARGET_DIR,
                  grid_samples: int = DEFAULT_GRID_SAMPLES):
    """Full analysis of one throw.

    Accepts a SkeletonSequence or a ThrowRecord. Returns
    (FeatureVector, SeriesBundle, ReleaseInfo).
    """
    if isinstance(seq, ThrowRecord):
        seq = seq.sequence
    target = np.asarray(target_dir, dtype=float)
    if target.shape != (3,) or np.linalg.norm(target) == 0:
        raise ValueError("target_dir must be a nonzero 3-vector")

    rel = find_release(seq)
    r = rel.release_idx
    T = seq.n_frames

    angles_r = joint_angles(seq.frame(r))
    align = _alignment_curve(seq, target)
    grip_mean, grip_std = grip_stats(seq)
    bundle = compute_series(seq, r, target, grid_samples)

    fv = FeatureVector(
        release_velocity=rel.release_speed,
        release_alignment_angle=float(align[r - 1]),
        mean_grip_distance=grip_mean,
        grip_distance_variability=grip_std,
        head_stability=stability_index(seq, HEAD_JOINT, r),
        trunk_stability=stability_index(seq, TRUNK_JOINT, r),
        wrist_stability=stability_index(seq, WRIST_JOINT, r),
        shoulder_pitch_at_release=angles_r["shoulder_pitch"],
        elbow_flexion_at_release=angles_r["elbow_flexion"],
        wrist_extension_at_release=angles_r["wrist_extension"],
        trunk_yaw_at_release=angles_r["trunk_yaw"],
        release_phase_pct=release_phase_pct(r, T),
        mean_hand_velocity=float(np.mean(bundle.hand_speed)),
        mean_target_alignment_angle=float(np.mean(bundle.target_alignment)),
        mean_shoulder_pitch=float(np.mean(bundle.shoulder_pitch)),
        mean_elbow_flexion=float(np.mean(bundle.elbow_flexion)),
        mean_wrist_extension=float(np.mean(bundle.wrist_extension)),
        mean_trunk_yaw=float(np.mean(bundle.trunk_yaw)),
    )
    return fv, bundle, rel


def extract_features(seq, target_dir=DEFAULT_TARGET_DIR,
                     grid_samples: int = DEFAULT_GRID_SAMPLES) -> FeatureVector:
    """The 18-feature vector of a throw (sequence or record)."""
    fv, _, _ = throw_profile(seq, target_dir, grid_samples)
    return fv
