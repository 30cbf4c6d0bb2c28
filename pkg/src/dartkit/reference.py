"""Individualized reference trajectory fitting.

Selected throws are resampled onto a shared release-anchored grid,
translated so the right shoulder's time-mean sits at the origin, blended
into a score-weighted template, and smoothed by a quadratic penalty on
third differences. The blend weight decay is tuned by golden-section
search validated against a coarse grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

from .features import DEFAULT_GRID_SAMPLES, find_release
from .skeleton import (
    Joint,
    REFERENCE_JOINTS,
    SkeletonSequence,
    load_sequence_flagged,
    resample_trajectory,
    save_sequence,
)
from .scoring import SelectionConfig, score_throws, select_top_k

ALIGN_JOINT = Joint.SHOULDER_RIGHT
DEFAULT_SMOOTH_LAMBDA = 5.0
WEIGHT_BOUNDS = (0.0, 5.0)
WEIGHT_TOL = 1.0e-4
_GRID_PROBES = 64
_RESIDUAL_REL_TOL = 1.0e-8

_INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class InsufficientDataError(RuntimeError):
    """Raised when too few scoreable throws exist to fit anything."""


@dataclass(frozen=True, eq=False)
class AlignedSet:
    """Resampled, shoulder-centered throws plus their scoring inputs.

    trajectories: (K, n, J, 3) meters, each centered on the time-mean
    right-shoulder position. distances_cm and jerks are per-throw and
    feed the blend weights. times is (K, n) seconds per source throw.
    """

    trajectories: np.ndarray
    distances_cm: np.ndarray
    jerks: np.ndarray
    joints: tuple
    times: np.ndarray
    release_phases: np.ndarray

    def __post_init__(self):
        if self.trajectories.shape[0] < 2:
            raise InsufficientDataError(
                f"need >= 2 throws to align, got {self.trajectories.shape[0]}"
            )

    @property
    def n_members(self) -> int:
        return self.trajectories.shape[0]

    @property
    def n_samples(self) -> int:
        return self.trajectories.shape[1]


def align_trajectories(trajectories, distances_cm, jerks) -> AlignedSet:
    """Center resampled throws on the time-mean right-shoulder position.

    Translation only: rotations are left untouched so orientation
    differences remain visible downstream.
    """
    if len(trajectories) < 2:
        raise InsufficientDataError(
            f"need >= 2 throws to align, got {len(trajectories)}"
        )
    joints = trajectories[0].joints
    n = trajectories[0].n_samples
    if ALIGN_JOINT not in joints:
        raise ValueError("right shoulder must be among resampled joints")
    anchor = joints.index(ALIGN_JOINT)
    stacked = []
    times = []
    phases = []
    for i, traj in enumerate(trajectories):
        if traj.joints != joints:
            raise ValueError(f"member {i}: joint set differs")
        if traj.n_samples != n:
            raise ValueError(f"member {i}: sample count differs")
        center = traj.samples[:, anchor, :].mean(axis=0)
        stacked.append(traj.samples - center)
        times.append(traj.times)
        phases.append(traj.release_phase)
    return AlignedSet(
        trajectories=np.array(stacked),
        distances_cm=np.asarray(distances_cm, dtype=float),
        jerks=np.asarray(jerks, dtype=float),
        joints=joints,
        times=np.array(times),
        release_phases=np.array(phases),
    )


def blend_weights(aset: AlignedSet, distance_decay: float,
                  jerk_scale: float) -> np.ndarray:
    """Normalized per-throw weights exp(-a*d) / sqrt(1 + b*jerk)."""
    raw = np.exp(-distance_decay * aset.distances_cm) / np.sqrt(
        1.0 + jerk_scale * aset.jerks
    )
    total = raw.sum()
    if total <= 0.0 or not np.isfinite(total):
        raise ArithmeticError("blend weights underflowed to zero")
    return raw / total


def weighted_template(aset: AlignedSet, distance_decay: float,
                      jerk_scale: float) -> np.ndarray:
    """Weight-averaged trajectory, shape (n, J, 3)."""
    w = blend_weights(aset, distance_decay, jerk_scale)
    return np.einsum("k,knjc->njc", w, aset.trajectories)


def template_mse(aset: AlignedSet, distance_decay: float,
                 jerk_scale: float) -> float:
    """Sum over members of mean squared sample-to-template distance."""
    q = weighted_template(aset, distance_decay, jerk_scale)
    diff = aset.trajectories - q[None]
    per_member = np.sum(diff * diff, axis=(1, 2, 3)) / (
        aset.n_samples * len(aset.joints)
    )
    return float(per_member.sum())


def optimize_weight_param(aset: AlignedSet, jerk_scale: float,
                          bounds=WEIGHT_BOUNDS, tol: float = WEIGHT_TOL):
    """Distance-decay value minimizing the template's total MSE.

    Golden-section search over `bounds`, cross-checked against a 64-point
    grid; whichever candidate evaluates lower is returned. A flat
    objective (relative spread below 1e-12) short-circuits to the
    interval midpoint. Returns (decay, objective).
    """
    lo, hi = float(bounds[0]), float(bounds[1])
    if not lo < hi:
        raise ValueError("bounds must satisfy lo < hi")
    if tol <= 0:
        raise ValueError("tol must be positive")

    def f(a):
        return template_mse(aset, a, jerk_scale)

    grid = np.linspace(lo, hi, _GRID_PROBES)
    grid_vals = np.array([f(a) for a in grid])
    spread = grid_vals.max() - grid_vals.min()
    if spread <= 1.0e-12 * max(1.0, abs(grid_vals.max())):
        mid = 0.5 * (lo + hi)
        return mid, f(mid)

    a, b = lo, hi
    c = b - _INV_GOLDEN * (b - a)
    d = a + _INV_GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_GOLDEN * (b - a)
            fd = f(d)
    gs_a = 0.5 * (a + b)
    gs_val = f(gs_a)

    gi = int(np.argmin(grid_vals))
    if grid_vals[gi] < gs_val:
        return float(grid[gi]), float(grid_vals[gi])
    return float(gs_a), float(gs_val)


# ---------------------------------------------------------------------------
# Minimum-jerk smoothing: (I + lam * D3' D3) x = y, banded Cholesky solve.

_THIRD_DIFF_STENCIL = np.array([-1.0, 3.0, -3.0, 1.0])
_factor_cache: dict = {}


def _banded_upper(n: int, lam: float) -> np.ndarray:
    """Upper banded storage of I + lam * D3'D3 for scipy's banded Cholesky."""
    c = _THIRD_DIFF_STENCIL
    n_rows = n - 3
    ab = np.zeros((4, n))
    for off in range(4):
        col = np.zeros(n - off)
        for m in range(4 - off):
            # rows k of D3 contribute c[m]*c[m+off] to entry (k+m, k+m+off)
            first = m
            last = min(n - off - 1, n_rows - 1 + m)
            if last >= first:
                col[first:last + 1] += c[m] * c[m + off]
        ab[3 - off, off:] = lam * col
    ab[3, :] += 1.0
    return ab


def _third_diff_gram_apply(x: np.ndarray) -> np.ndarray:
    """Apply D3'D3 without forming matrices (for residual certification)."""
    y = np.diff(x, n=3, axis=0)
    out = np.zeros_like(x)
    for m, cm in enumerate(_THIRD_DIFF_STENCIL):
        out[m:m + y.shape[0]] += cm * y
    return out


def min_jerk_smooth(traj, lam: float = DEFAULT_SMOOTH_LAMBDA) -> np.ndarray:
    """Solve (I + lam * D3'D3) x = traj along the first axis.

    lam = 0 returns an exact copy of the input. The Cholesky factor is
    cached per (length, lam) and shared across all trailing columns. The
    solution's residual is certified against the matrix-free operator;
    failure raises instead of returning a silently bad smooth.
    """
    y = np.asarray(traj, dtype=float)
    if y.shape[0] < 4:
        raise ValueError(f"need >= 4 samples to smooth, got {y.shape[0]}")
    if not math.isfinite(lam) or lam < 0:
        raise ValueError("lam must be finite and non-negative")
    if lam == 0.0:
        return y.copy()
    n = y.shape[0]
    key = (n, float(lam))
    factor = _factor_cache.get(key)
    if factor is None:
        factor = cholesky_banded(_banded_upper(n, lam), lower=False)
        _factor_cache[key] = factor
    flat = y.reshape(n, -1)
    x = cho_solve_banded((factor, False), flat)
    residual = x + lam * _third_diff_gram_apply(x) - flat
    scale = np.abs(flat).max()
    if np.abs(residual).max() > _RESIDUAL_REL_TOL * max(scale, 1.0e-30):
        raise ArithmeticError(
            "smoothing solve residual exceeds tolerance; system ill-conditioned"
        )
    return x.reshape(y.shape)


def jerk_functional(traj) -> float:
    """Sum of squared third differences across all trailing axes."""
    arr = np.asarray(traj, dtype=float)
    if arr.shape[0] < 4:
        raise ValueError("need >= 4 samples")
    d3 = np.diff(arr, n=3, axis=0)
    return float(np.sum(d3 * d3))


# ---------------------------------------------------------------------------
# Fitted reference container and round-trip serialization.

@dataclass(frozen=True, eq=False)
class ReferenceTrajectory:
    """Smoothed, weight-blended model throw for one athlete.

    samples: (n, J, 3) meters on the release-anchored grid.
    times: (n,) seconds, the score-weighted mean of member times.
    """

    athlete_id: str
    samples: np.ndarray
    joints: tuple
    times: np.ndarray
    smooth_lambda: float
    distance_decay: float
    release_phase: float
    source_throw_ids: tuple
    weights: tuple

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    def joint_track(self, joint) -> np.ndarray:
        return self.samples[:, self.joints.index(joint), :]


def fit_reference(records, sel_cfg: SelectionConfig = SelectionConfig(),
                  smooth_lambda: float = DEFAULT_SMOOTH_LAMBDA,
                  grid_samples: int = DEFAULT_GRID_SAMPLES,
                  joints: tuple = REFERENCE_JOINTS,
                  bounds=WEIGHT_BOUNDS,
                  tol: float = WEIGHT_TOL) -> ReferenceTrajectory:
    """Select, resample, align, blend, and smooth an athlete's throws."""
    records = list(records)
    if not records:
        raise InsufficientDataError("no throws supplied")
    athlete_ids = {r.athlete_id for r in records}
    if len(athlete_ids) != 1:
        raise ValueError(f"records span multiple athletes: {sorted(athlete_ids)}")
    scored, _ = score_throws(records, sel_cfg)
    selected = select_top_k(scored, sel_cfg)
    if len(selected) < 2:
        raise InsufficientDataError(
            f"need >= 2 scoreable throws to fit a reference, got {len(selected)}"
        )
    by_index = {r.throw_index: r for r in records}
    trajs = []
    for s in selected:
        seq = by_index[s.throw_index].sequence
        rel = find_release(seq)
        trajs.append(
            resample_trajectory(seq, joints, rel.release_idx, grid_samples)
        )
    aset = align_trajectories(
        trajs,
        [s.distance_cm for s in selected],
        [s.jerk for s in selected],
    )
    decay, _ = optimize_weight_param(aset, sel_cfg.jerk_scale, bounds, tol)
    w = blend_weights(aset, decay, sel_cfg.jerk_scale)
    template = np.einsum("k,knjc->njc", w, aset.trajectories)
    smoothed = min_jerk_smooth(template, smooth_lambda)
    times = w @ aset.times
    return ReferenceTrajectory(
        athlete_id=selected[0].athlete_id,
        samples=smoothed,
        joints=joints,
        times=times,
        smooth_lambda=float(smooth_lambda),
        distance_decay=float(decay),
        release_phase=float(w @ aset.release_phases),
        source_throw_ids=tuple(s.throw_index for s in selected),
        weights=tuple(float(x) for x in w),
    )


def peak_hand_speed(ref: ReferenceTrajectory) -> float:
    """Largest hand-tip step speed of the reference, m/s."""
    tip = ref.joint_track(Joint.HAND_TIP_RIGHT)
    dt = np.diff(ref.times)
    if np.any(dt <= 0):
        raise ValueError("reference times must be strictly increasing")
    speeds = np.linalg.norm(np.diff(tip, axis=0), axis=1) / dt
    return float(speeds.max())


def _provenance_path(log_path) -> Path:
    return Path(str(log_path) + ".provenance.json")


def save_reference(ref: ReferenceTrajectory, path) -> None:
    """Write a reference as a flagged throw log plus a provenance sidecar.

    Joints outside the tracked set are stored as zeros; the sidecar
    records which columns are meaningful.
    """
    n = ref.n_samples
    full = np.zeros((n, 25, 3))
    for col, j in enumerate(ref.joints):
        full[:, int(j), :] = ref.samples[:, col, :]
    dt = np.diff(ref.times)
    seq = SkeletonSequence(fps=1.0 / float(dt.mean()), times=ref.times,
                           joints=full)
    save_sequence(seq, path, reference=True)
    prov = {
        "athlete_id": ref.athlete_id,
        "joints": [int(j) for j in ref.joints],
        "smooth_lambda": ref.smooth_lambda,
        "distance_decay": ref.distance_decay,
        "release_phase": ref.release_phase,
        "source_throw_ids": list(ref.source_throw_ids),
        "weights": list(ref.weights),
    }
    _provenance_path(path).write_text(
        json.dumps(prov, sort_keys=True, indent=1) + "\n"
    )


def load_reference(path) -> ReferenceTrajectory:
    """Rebuild a ReferenceTrajectory saved by save_reference."""
    seq, is_reference = load_sequence_flagged(path)
    if not is_reference:
        raise ValueError(f"{path}: log is not flagged as a reference")
    prov = json.loads(_provenance_path(path).read_text())
    joints = tuple(Joint(j) for j in prov["joints"])
    cols = np.array([int(j) for j in joints])
    return ReferenceTrajectory(
        athlete_id=prov["athlete_id"],
        samples=seq.joints[:, cols, :].copy(),
        joints=joints,
        times=seq.times.copy(),
        smooth_lambda=float(prov["smooth_lambda"]),
        distance_decay=float(prov["distance_decay"]),
        release_phase=float(prov["release_phase"]),
        source_throw_ids=tuple(int(i) for i in prov["source_throw_ids"]),
        weights=tuple(float(w) for w in prov["weights"]),
    )
