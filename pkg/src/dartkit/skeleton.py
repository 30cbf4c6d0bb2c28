"""Skeleton data model, throw-log I/O, natural cubic splines, and
phase-aligned trajectory resampling.

Positions are meters in the sensor frame with y up; millimeters appear
only at I/O boundaries (landing offsets, stability reports). Containers
are immutable after construction and every operation is a pure function
of its inputs, so sequences can be processed concurrently without
shared state.

Throw-log format (plain text):
    fps=<float>
    [reference=true]
    t=<seconds>,<75 comma-separated floats: joint0.x,joint0.y,joint0.z,...>

Floats are written with shortest round-trip repr, so load(save(seq))
reproduces the sequence bit for bit. A sibling ``<log>.meta`` record
carries athlete id, throw index and the measured landing offset in mm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import solve_banded

N_JOINTS = 25

# Fraction of the nominal frame period by which consecutive timestamps
# may deviate from 1/fps before the sequence is rejected.
TIMEBASE_TOLERANCE = 0.5

MIN_FRAMES = 8


class Joint(IntEnum):
    """Sensor joint indices (25-joint body model)."""

    SPINE_BASE = 0
    SPINE_MID = 1
    NECK = 2
    HEAD = 3
    SHOULDER_LEFT = 4
    ELBOW_LEFT = 5
    WRIST_LEFT = 6
    HAND_LEFT = 7
    SHOULDER_RIGHT = 8
    ELBOW_RIGHT = 9
    WRIST_RIGHT = 10
    HAND_RIGHT = 11
    HIP_LEFT = 12
    KNEE_LEFT = 13
    ANKLE_LEFT = 14
    FOOT_LEFT = 15
    HIP_RIGHT = 16
    KNEE_RIGHT = 17
    ANKLE_RIGHT = 18
    FOOT_RIGHT = 19
    SPINE_SHOULDER = 20
    HAND_TIP_LEFT = 21
    THUMB_LEFT = 22
    HAND_TIP_RIGHT = 23
    THUMB_RIGHT = 24


# Throwing-arm chain tracked by the reference fit.
REFERENCE_JOINTS = (
    Joint.SHOULDER_RIGHT,
    Joint.ELBOW_RIGHT,
    Joint.WRIST_RIGHT,
    Joint.HAND_RIGHT,
    Joint.HAND_TIP_RIGHT,
)

# Mirror pairs for left/right handedness flips.
_LR_PAIRS = (
    (Joint.SHOULDER_LEFT, Joint.SHOULDER_RIGHT),
    (Joint.ELBOW_LEFT, Joint.ELBOW_RIGHT),
    (Joint.WRIST_LEFT, Joint.WRIST_RIGHT),
    (Joint.HAND_LEFT, Joint.HAND_RIGHT),
    (Joint.HIP_LEFT, Joint.HIP_RIGHT),
    (Joint.KNEE_LEFT, Joint.KNEE_RIGHT),
    (Joint.ANKLE_LEFT, Joint.ANKLE_RIGHT),
    (Joint.FOOT_LEFT, Joint.FOOT_RIGHT),
    (Joint.HAND_TIP_LEFT, Joint.HAND_TIP_RIGHT),
    (Joint.THUMB_LEFT, Joint.THUMB_RIGHT),
)


class ThrowLogError(ValueError):
    """Base class for throw-log parsing and validation failures."""


class MalformedRowError(ThrowLogError):
    """A line of the log could not be tokenized as expected."""


class JointCountError(ThrowLogError):
    """A frame row does not carry exactly 25 joints."""


class NonFiniteError(ThrowLogError):
    """A coordinate is NaN or infinite."""


class NonMonotoneError(ThrowLogError):
    """Timestamps fail to increase strictly."""


class TimebaseError(ThrowLogError):
    """Frame spacing is inconsistent with the declared fps."""


def _as_float_array(x, shape, name):
    arr = np.asarray(x, dtype=float)
    if arr.shape != shape:
        raise ValueError(f"{name}: expected shape {shape}, got {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class SkeletonFrame:
    """One observed body pose: a timestamp plus 25 joint positions (m)."""

    timestamp: float
    joints: np.ndarray  # (25, 3) float64

    def __post_init__(self):
        arr = _as_float_array(self.joints, (N_JOINTS, 3), "joints")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "joints", arr)
        object.__setattr__(self, "timestamp", float(self.timestamp))
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("joint positions must be finite")

    def joint(self, j: int) -> np.ndarray:
        return self.joints[int(j)]

    def __eq__(self, other):
        if not isinstance(other, SkeletonFrame):
            return NotImplemented
        return self.timestamp == other.timestamp and np.array_equal(
            self.joints, other.joints
        )


@dataclass(frozen=True, eq=False)
class SkeletonSequence:
    """A recorded throw cycle: fps plus per-frame times and joints.

    Invariants enforced at construction: at least 8 frames, strictly
    increasing timestamps, and frame spacing within half a frame period
    of 1/fps.
    """

    fps: float
    times: np.ndarray   # (T,)
    joints: np.ndarray  # (T, 25, 3)

    def __post_init__(self):
        fps = float(self.fps)
        if not (math.isfinite(fps) and fps > 0):
            raise ThrowLogError(f"fps must be positive and finite, got {fps}")
        times = np.ascontiguousarray(np.asarray(self.times, dtype=float))
        joints = np.ascontiguousarray(np.asarray(self.joints, dtype=float))
        if times.ndim != 1 or joints.shape != (times.shape[0], N_JOINTS, 3):
            raise ThrowLogError(
                f"inconsistent arrays: times {times.shape}, joints {joints.shape}"
            )
        T = times.shape[0]
        if T < MIN_FRAMES:
            raise ThrowLogError(f"sequence too short: {T} frames, need >= {MIN_FRAMES}")
        if not np.all(np.isfinite(times)):
            bad = int(np.flatnonzero(~np.isfinite(times))[0])
            raise NonFiniteError(f"frame {bad}: non-finite timestamp")
        if not np.all(np.isfinite(joints)):
            bad = int(np.flatnonzero(~np.isfinite(joints).all(axis=(1, 2)))[0])
            raise NonFiniteError(f"frame {bad}: non-finite coordinate")
        dt = np.diff(times)
        if np.any(dt <= 0):
            bad = int(np.flatnonzero(dt <= 0)[0]) + 1
            raise NonMonotoneError(f"frame {bad}: timestamp does not increase")
        period = 1.0 / fps
        off = np.abs(dt - period)
        if np.any(off > TIMEBASE_TOLERANCE * period + 1e-12):
            bad = int(np.flatnonzero(off > TIMEBASE_TOLERANCE * period + 1e-12)[0]) + 1
            raise TimebaseError(
                f"frame {bad}: spacing {dt[bad - 1]:.6g}s inconsistent with fps={fps:g}"
            )
        times.setflags(write=False)
        joints.setflags(write=False)
        object.__setattr__(self, "fps", fps)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "joints", joints)

    @property
    def n_frames(self) -> int:
        return self.times.shape[0]

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def frame(self, i: int) -> SkeletonFrame:
        return SkeletonFrame(float(self.times[i]), self.joints[i])

    @property
    def frames(self) -> list:
        return [self.frame(i) for i in range(self.n_frames)]

    def joint_track(self, j: int) -> np.ndarray:
        """Positions of one joint over time, shape (T, 3)."""
        return self.joints[:, int(j), :]

    def __eq__(self, other):
        if not isinstance(other, SkeletonSequence):
            return NotImplemented
        return (
            self.fps == other.fps
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.joints, other.joints)
        )


@dataclass(frozen=True)
class ThrowRecord:
    """A throw: its skeleton sequence plus identity and board outcome.

    landing_offset is (dx, dy) from board center in millimeters, None
    when no board measurement accompanies the throw. board_distance is
    the throwing distance in millimeters, None when unknown.
    """

    athlete_id: str
    throw_index: int
    sequence: SkeletonSequence
    landing_offset: tuple | None = None
    board_distance: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "throw_index", int(self.throw_index))
        if self.throw_index < 0:
            raise ValueError("throw_index must be non-negative")
        if self.landing_offset is not None:
            off = (float(self.landing_offset[0]), float(self.landing_offset[1]))
            if not all(math.isfinite(v) for v in off):
                raise ValueError("landing_offset must be finite")
            object.__setattr__(self, "landing_offset", off)
        if self.board_distance is not None:
            object.__setattr__(self, "board_distance", float(self.board_distance))


# ---------------------------------------------------------------------------
# Throw-log I/O


def _fmt(x: float) -> str:
    return repr(float(x))


def save_sequence(seq: SkeletonSequence, path, reference: bool = False) -> None:
    """Write a sequence in the throw-log text format.

    Floats use shortest round-trip repr so the file re-loads bit-exactly.
    """
    lines = [f"fps={_fmt(seq.fps)}"]
    if reference:
        lines.append("reference=true")
    flat = seq.joints.reshape(seq.n_frames, N_JOINTS * 3)
    for i in range(seq.n_frames):
        row = ",".join(_fmt(v) for v in flat[i])
        lines.append(f"t={_fmt(seq.times[i])},{row}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_sequence(path) -> SkeletonSequence:
    """Parse a throw log, validating joint count, finiteness and timebase.

    Raises a distinct ThrowLogError subclass naming the first offending
    record: MalformedRowError, JointCountError, NonFiniteError,
    NonMonotoneError or TimebaseError.
    """
    seq, _ = load_sequence_flagged(path)
    return seq


def load_sequence_flagged(path):
    """Like load_sequence but also returns the reference-header flag."""
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("fps="):
        raise MalformedRowError("header: expected 'fps=<float>' on line 1")
    try:
        fps = float(lines[0][4:])
    except ValueError:
        raise MalformedRowError(f"header: cannot parse {lines[0]!r}") from None
    body = lines[1:]
    is_reference = False
    if body and body[0].strip().lower() == "reference=true":
        is_reference = True
        body = body[1:]
    times = []
    frames = []
    for i, ln in enumerate(body):
        tokens = ln.split(",")
        if not tokens[0].startswith("t="):
            raise MalformedRowError(f"frame {i}: row must start with 't='")
        try:
            t = float(tokens[0][2:])
        except ValueError:
            raise MalformedRowError(f"frame {i}: bad timestamp {tokens[0]!r}") from None
        coords = tokens[1:]
        if len(coords) % 3 != 0:
            raise MalformedRowError(
                f"frame {i}: {len(coords)} values is not a whole number of joints"
            )
        if len(coords) != N_JOINTS * 3:
            raise JointCountError(f"frame {i}: {len(coords) // 3} joints")
        try:
            vals = np.array([float(c) for c in coords], dtype=float)
        except ValueError:
            raise MalformedRowError(f"frame {i}: non-numeric coordinate") from None
        if not np.all(np.isfinite(vals)):
            raise NonFiniteError(f"frame {i}: non-finite coordinate")
        if not math.isfinite(t):
            raise NonFiniteError(f"frame {i}: non-finite timestamp")
        if times and t <= times[-1]:
            raise NonMonotoneError(f"frame {i}: timestamp does not increase")
        times.append(t)
        frames.append(vals.reshape(N_JOINTS, 3))
    if len(frames) < MIN_FRAMES:
        raise ThrowLogError(f"sequence too short: {len(frames)} frames")
    seq = SkeletonSequence(fps, np.array(times), np.array(frames))
    return seq, is_reference


def save_metadata(record: ThrowRecord, path) -> None:
    """Write the sibling metadata record (athlete, index, landing offset)."""
    lines = [
        f"athlete_id={record.athlete_id}",
        f"throw_index={record.throw_index}",
    ]
    if record.landing_offset is not None:
        dx, dy = record.landing_offset
        lines.append(f"landing_offset_mm={_fmt(dx)},{_fmt(dy)}")
    if record.board_distance is not None:
        lines.append(f"board_distance_mm={_fmt(record.board_distance)}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_metadata(path) -> dict:
    """Parse a metadata sidecar into a plain dict."""
    out: dict = {}
    for i, ln in enumerate(Path(path).read_text().splitlines()):
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        if "=" not in ln:
            raise MalformedRowError(f"metadata line {i}: expected key=value")
        key, val = ln.split("=", 1)
        key = key.strip()
        if key == "athlete_id":
            out["athlete_id"] = val.strip()
        elif key == "throw_index":
            out["throw_index"] = int(val)
        elif key == "landing_offset_mm":
            parts = val.split(",")
            if len(parts) != 2:
                raise MalformedRowError(f"metadata line {i}: offset needs dx,dy")
            out["landing_offset"] = (float(parts[0]), float(parts[1]))
        elif key == "board_distance_mm":
            out["board_distance"] = float(val)
        else:
            raise MalformedRowError(f"metadata line {i}: unknown key {key!r}")
    return out


def metadata_path(log_path) -> Path:
    return Path(str(log_path) + ".meta")


def save_throw(record: ThrowRecord, log_path) -> None:
    save_sequence(record.sequence, log_path)
    save_metadata(record, metadata_path(log_path))


def load_throw(log_path, athlete_id: str | None = None,
               throw_index: int | None = None) -> ThrowRecord:
    """Load a throw log plus its sidecar (if present) into a ThrowRecord."""
    seq = load_sequence(log_path)
    meta: dict = {}
    mp = metadata_path(log_path)
    if mp.exists():
        meta = load_metadata(mp)
    return ThrowRecord(
        athlete_id=athlete_id or meta.get("athlete_id", "unknown"),
        throw_index=throw_index if throw_index is not None else meta.get("throw_index", 0),
        sequence=seq,
        landing_offset=meta.get("landing_offset"),
        board_distance=meta.get("board_distance"),
    )


def mirror_sequence(seq: SkeletonSequence) -> SkeletonSequence:
    """Left/right flip for left-handed throwers: swap paired joints and
    negate the lateral (x) axis."""
    joints = seq.joints.copy()
    for a, b in _LR_PAIRS:
        joints[:, [int(a), int(b)], :] = joints[:, [int(b), int(a)], :]
    joints[:, :, 0] *= -1.0
    return SkeletonSequence(seq.fps, seq.times.copy(), joints)


# ---------------------------------------------------------------------------
# Natural cubic splines


@dataclass(frozen=True, eq=False)
class CubicSpline:
    """Piecewise cubic with natural end conditions.

    Segment i covers [knots[i], knots[i+1]] and evaluates as
    a[i] + b[i]*u + c[i]*u**2 + d[i]*u**3 with u = t - knots[i].
    """

    knots: np.ndarray  # (m,)
    a: np.ndarray      # (m-1,)
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def __call__(self, t):
        return eval_spline(self, t)


def _spline_coefficients(t: np.ndarray, y: np.ndarray):
    """Natural-spline coefficients for columns of y over knots t.

    t is (m,) strictly increasing, y is (m,) or (m, k). Returns
    (a, b, c, d), each (m-1,) or (m-1, k). Second derivatives at the two
    end knots are zero; interior values come from the standard
    tridiagonal continuity system, solved in banded form.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    m = t.shape[0]
    if m < 3:
        raise ValueError(f"need at least 3 knots, got {m}")
    h = np.diff(t)
    if np.any(h <= 0):
        raise ValueError("knot positions must be strictly increasing")
    flat = y.reshape(m, -1)
    slope = np.diff(flat, axis=0) / h[:, None]
    # Interior continuity equations for the second derivatives M[1..m-2]:
    #   h[i-1] M[i-1] + 2(h[i-1]+h[i]) M[i] + h[i] M[i+1] = 6 (slope[i] - slope[i-1])
    M = np.zeros_like(flat)
    if m > 2:
        n_int = m - 2
        ab = np.zeros((3, n_int))
        ab[0, 1:] = h[1:-1]                    # super-diagonal
        ab[1, :] = 2.0 * (h[:-1] + h[1:])      # diagonal
        ab[2, :-1] = h[1:-1]                   # sub-diagonal
        rhs = 6.0 * (slope[1:] - slope[:-1])
        M[1:-1] = solve_banded((1, 1), ab, rhs)
    a = flat[:-1]
    b = slope - h[:, None] * (2.0 * M[:-1] + M[1:]) / 6.0
    c = M[:-1] / 2.0
    d = (M[1:] - M[:-1]) / (6.0 * h[:, None])
    shape = (m - 1,) + y.shape[1:]
    return (a.reshape(shape), b.reshape(shape), c.reshape(shape), d.reshape(shape))


def fit_cubic_spline(knots) -> CubicSpline:
    """Fit a natural cubic spline through (t, y) knots.

    Requires at least 3 knots with strictly increasing t. The fitted
    curve interpolates every knot, is C2 across interior knots, and has
    zero second derivative at both ends.
    """
    pts = np.asarray(list(knots), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("knots must be a sequence of (t, y) pairs")
    t = pts[:, 0]
    y = pts[:, 1]
    a, b, c, d = _spline_coefficients(t, y)
    return CubicSpline(knots=t.copy(), a=a, b=b, c=c, d=d)


def _segment_index(knots: np.ndarray, t: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(knots, t, side="right") - 1
    return np.clip(idx, 0, knots.shape[0] - 2)


def eval_spline(spline: CubicSpline, t):
    """Evaluate a spline; arguments outside the knot span are clamped to
    the nearest endpoint value."""
    scalar = np.isscalar(t) or np.ndim(t) == 0
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    tt = np.clip(tt, spline.knots[0], spline.knots[-1])
    i = _segment_index(spline.knots, tt)
    u = tt - spline.knots[i]
    val = spline.a[i] + u * (spline.b[i] + u * (spline.c[i] + u * spline.d[i]))
    return float(val[0]) if scalar else val


def eval_spline_derivative(spline: CubicSpline, t, order: int = 1):
    """First or second derivative of the fitted cubic (clamped span)."""
    scalar = np.isscalar(t) or np.ndim(t) == 0
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    tt = np.clip(tt, spline.knots[0], spline.knots[-1])
    i = _segment_index(spline.knots, tt)
    u = tt - spline.knots[i]
    if order == 1:
        val = spline.b[i] + u * (2.0 * spline.c[i] + 3.0 * u * spline.d[i])
    elif order == 2:
        val = 2.0 * spline.c[i] + 6.0 * u * spline.d[i]
    else:
        raise ValueError("order must be 1 or 2")
    return float(val[0]) if scalar else val


def _eval_columns(t_knots, coeffs, x):
    """Evaluate multi-column spline coefficients at points x (clamped)."""
    a, b, c, d = coeffs
    x = np.clip(np.asarray(x, dtype=float), t_knots[0], t_knots[-1])
    i = _segment_index(t_knots, x)
    u = (x - t_knots[i])[:, None]
    return a[i] + u * (b[i] + u * (c[i] + u * d[i]))


# ---------------------------------------------------------------------------
# Phase-aligned resampling


@dataclass(frozen=True, eq=False)
class NormalizedTrajectory:
    """A throw resampled onto a fixed-length grid, release-anchored.

    samples has shape (n_samples, len(joints), 3); times holds the
    source-time (seconds) of each grid sample; release_phase is the
    release instant as a fraction of the cycle; release_sample is the
    grid index the release was pinned to.
    """

    n_samples: int
    samples: np.ndarray
    release_phase: float
    joints: tuple
    times: np.ndarray
    release_sample: int

    def __post_init__(self):
        samples = np.ascontiguousarray(np.asarray(self.samples, dtype=float))
        times = np.ascontiguousarray(np.asarray(self.times, dtype=float))
        n = int(self.n_samples)
        if samples.shape != (n, len(self.joints), 3):
            raise ValueError(
                f"samples shape {samples.shape} inconsistent with "
                f"n={n}, joints={len(self.joints)}"
            )
        if times.shape != (n,):
            raise ValueError("times must have one entry per sample")
        if not 0.0 < self.release_phase <= 1.0:
            raise ValueError("release_phase must lie in (0, 1]")
        samples.setflags(write=False)
        times.setflags(write=False)
        object.__setattr__(self, "n_samples", n)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "joints", tuple(int(j) for j in self.joints))
        object.__setattr__(self, "release_sample", int(self.release_sample))


def release_sample_index(n: int, release_idx: int, n_frames: int) -> int:
    """Grid index the release frame is pinned to: round(n*r/T), kept off
    the grid ends unless the release is the final frame."""
    r_s = int(math.floor(n * release_idx / n_frames + 0.5))
    hi = n - 1 if release_idx == n_frames - 1 else n - 2
    return int(min(max(r_s, 1), hi))


def resample_grid(n: int, release_idx: int, n_frames: int) -> tuple:
    """Piecewise-linear frame-index grid 0 -> release_idx -> T-1 with the
    release pinned at its grid index. Identity when n == T."""
    r_s = release_sample_index(n, release_idx, n_frames)
    pre = np.linspace(0.0, float(release_idx), r_s + 1)
    post = np.linspace(float(release_idx), float(n_frames - 1), n - r_s)
    return np.concatenate([pre, post[1:]]), r_s


def resample_trajectory(seq: SkeletonSequence, joints: Sequence[int],
                        release_idx: int, n: int) -> NormalizedTrajectory:
    """Spline each coordinate of the chosen joints over frame index and
    sample onto an n-point release-anchored grid.

    Parameters
    ----------
    seq : SkeletonSequence
        Source frames.
    joints : sequence of int
        Joint ids to keep, in order.
    release_idx : int
        Release frame, 0 < release_idx < T.
    n : int
        Grid length, at least 8.
    """
    T = seq.n_frames
    if n < MIN_FRAMES:
        raise ValueError(f"n must be >= {MIN_FRAMES}, got {n}")
    if not 0 < release_idx < T:
        raise ValueError(f"release_idx {release_idx} outside (0, {T})")
    joints = tuple(int(j) for j in joints)
    if not joints:
        raise ValueError("need at least one joint")
    grid, r_s = resample_grid(n, release_idx, T)
    frame_idx = np.arange(T, dtype=float)
    Y = seq.joints[:, joints, :].reshape(T, -1)
    coeffs = _spline_coefficients(frame_idx, Y)
    vals = _eval_columns(frame_idx, coeffs, grid)
    samples = vals.reshape(n, len(joints), 3)
    times = np.interp(grid, frame_idx, seq.times)
    return NormalizedTrajectory(
        n_samples=n,
        samples=samples,
        release_phase=release_idx / T,
        joints=joints,
        times=times,
        release_sample=r_s,
    )
