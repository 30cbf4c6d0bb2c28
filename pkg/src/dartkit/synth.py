"""Synthetic data generators and independent oracles.

Everything here is seeded and bitwise deterministic. Throws are built
from a closed-form minimum-jerk point-to-point profile so their release
instant, peak hand speed, and posed joint angles are known exactly.
Board scenes are evaluated analytically per camera pixel (membership
tests in continuous plane coordinates mapped through the ground-truth
homography), so no image-resampling code is shared with the vision
pipeline under test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .skeleton import (
    Joint,
    N_JOINTS,
    SkeletonFrame,
    SkeletonSequence,
    ThrowRecord,
)

# ---------------------------------------------------------------------------
# Base standing pose (meters, y up, z toward the board)

BASE_POSE = np.array(
    [
        [0.000, 0.950, 0.000],   # 0  spine base
        [0.000, 1.200, 0.000],   # 1  spine mid
        [0.000, 1.460, 0.000],   # 2  neck
        [0.000, 1.620, 0.000],   # 3  head
        [-0.180, 1.400, 0.000],  # 4  shoulder L
        [-0.240, 1.120, 0.020],  # 5  elbow L
        [-0.260, 0.880, 0.040],  # 6  wrist L
        [-0.270, 0.800, 0.050],  # 7  hand L
        [0.180, 1.400, 0.000],   # 8  shoulder R
        [0.280, 1.180, 0.100],   # 9  elbow R
        [0.300, 1.300, 0.320],   # 10 wrist R
        [0.310, 1.330, 0.400],   # 11 hand R
        [-0.090, 0.920, 0.000],  # 12 hip L
        [-0.100, 0.500, 0.010],  # 13 knee L
        [-0.100, 0.080, 0.020],  # 14 ankle L
        [-0.100, 0.020, 0.120],  # 15 foot L
        [0.090, 0.920, 0.000],   # 16 hip R
        [0.100, 0.500, 0.010],   # 17 knee R
        [0.100, 0.080, 0.020],   # 18 ankle R
        [0.100, 0.020, 0.120],   # 19 foot R
        [0.000, 1.420, 0.000],   # 20 spine shoulder
        [-0.280, 0.740, 0.060],  # 21 hand tip L
        [-0.250, 0.780, 0.070],  # 22 thumb L
        [0.315, 1.350, 0.470],   # 23 hand tip R
        [0.295, 1.310, 0.440],   # 24 thumb R
    ],
    dtype=float,
)

# Joints carried by the throwing motion, with their default amplitude
# scales. Only the hand unit moves by default so that head, trunk and
# wrist stabilities are exactly zero in noiseless throws.
MOVING_JOINTS = (
    Joint.SHOULDER_RIGHT,
    Joint.ELBOW_RIGHT,
    Joint.WRIST_RIGHT,
    Joint.HAND_RIGHT,
    Joint.HAND_TIP_RIGHT,
    Joint.THUMB_RIGHT,
)
DEFAULT_AMPLITUDE_SCALE = (0.0, 0.0, 0.0, 1.0, 1.0, 1.0)


def minimum_jerk_fraction(s):
    """Normalized point-to-point profile 10 s^3 - 15 s^4 + 6 s^5 on [0,1],
    clamped to {0, 1} outside."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    return s**3 * (10.0 + s * (-15.0 + 6.0 * s))


def minimum_jerk_rate(s):
    """Derivative of the normalized profile w.r.t. s (peaks at 1.875)."""
    s = np.asarray(s, dtype=float)
    out = 30.0 * s**2 * (1.0 - s) ** 2
    return np.where((s < 0.0) | (s > 1.0), 0.0, out)


@dataclass(frozen=True)
class ThrowParams:
    """Knobs for one synthetic throw."""

    duration: float = 1.2          # seconds
    fps: float = 30.0
    release_phase: float = 0.8     # peak-speed instant as fraction of cycle
    peak_hand_speed: float = 5.2   # m/s at the release instant
    direction: tuple = (0.0, 0.25, 1.0)  # motion direction, normalized inside
    amplitude_scale: tuple = DEFAULT_AMPLITUDE_SCALE  # per MOVING_JOINTS entry
    noise_std: float = 0.0         # meters, isotropic per joint per frame
    landing_offset: tuple | None = None  # (dx, dy) mm on the board
    board_distance: float | None = 2370.0
    athlete_id: str = "synth"
    throw_index: int = 0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.release_phase < 1.0:
            raise ValueError("release_phase must lie in (0, 1)")
        if self.fps <= 0 or self.duration <= 0:
            raise ValueError("fps and duration must be positive")
        if self.peak_hand_speed <= 0:
            raise ValueError("peak_hand_speed must be positive")
        if len(self.amplitude_scale) != len(MOVING_JOINTS):
            raise ValueError(
                f"amplitude_scale needs {len(MOVING_JOINTS)} entries"
            )
        d = np.asarray(self.direction, dtype=float)
        if d.shape != (3,) or not np.all(np.isfinite(d)) or np.linalg.norm(d) == 0:
            raise ValueError("direction must be a finite nonzero 3-vector")


@dataclass(frozen=True)
class ThrowTruth:
    """Ground-truth annotations for a generated throw."""

    release_index: int            # frame index of the max-speed step end
    release_speed: float          # discrete hand-tip speed at that step
    commanded_peak_speed: float   # analytic instantaneous peak
    release_time: float           # seconds, instant of the analytic peak
    direction: tuple              # unit motion direction
    angles: dict                  # posed joint angles at the release frame
    travel: float                 # hand-tip travel distance, meters


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def _angle_deg(a, b) -> float:
    a = _unit(a)
    b = _unit(b)
    return math.degrees(math.acos(min(1.0, max(-1.0, float(np.dot(a, b))))))


def _posed_angles(joints: np.ndarray) -> dict:
    """Joint angles read off a pose with direct vector geometry."""
    sh = joints[Joint.SHOULDER_RIGHT]
    el = joints[Joint.ELBOW_RIGHT]
    wr = joints[Joint.WRIST_RIGHT]
    tip = joints[Joint.HAND_TIP_RIGHT]
    trunk_down = joints[Joint.SPINE_BASE] - joints[Joint.SPINE_SHOULDER]
    line = joints[Joint.SHOULDER_RIGHT] - joints[Joint.SHOULDER_LEFT]
    return {
        "shoulder_pitch": _angle_deg(el - sh, trunk_down),
        "elbow_flexion": _angle_deg(sh - el, wr - el),
        "wrist_extension": _angle_deg(wr - el, tip - wr),
        "trunk_yaw": math.degrees(math.atan2(-line[2], line[0])),
    }


def gen_throw(params: ThrowParams = ThrowParams()):
    """Generate one synthetic throw.

    Returns (ThrowRecord, ThrowTruth). The moving joints translate along
    params.direction following the minimum-jerk profile, timed so the
    instantaneous speed peak sits at release_phase * duration and equals
    peak_hand_speed for unit amplitude scale. All other joints hold the
    base pose. Gaussian position noise (noise_std) is added to every
    joint of every frame when requested.
    """
    p = params
    T = int(round(p.duration * p.fps)) + 1
    times = np.arange(T, dtype=float) / p.fps
    t_mid = p.release_phase * p.duration
    half = min(p.release_phase, 1.0 - p.release_phase) * p.duration
    t0, t1 = t_mid - half, t_mid + half
    window = t1 - t0
    travel = p.peak_hand_speed * window / 1.875
    u = _unit(p.direction)

    sigma = minimum_jerk_fraction((times - t0) / window)
    disp = travel * sigma  # (T,)

    joints = np.broadcast_to(BASE_POSE, (T, N_JOINTS, 3)).copy()
    for j, scale in zip(MOVING_JOINTS, p.amplitude_scale):
        joints[:, int(j), :] += (scale * disp)[:, None] * u[None, :]

    if p.noise_std > 0:
        rng = np.random.default_rng(p.seed)
        joints = joints + rng.normal(0.0, p.noise_std, size=joints.shape)

    seq = SkeletonSequence(p.fps, times, joints)

    # Hand-tip amplitude scale drives the annotated speeds.
    tip_scale = p.amplitude_scale[MOVING_JOINTS.index(Joint.HAND_TIP_RIGHT)]
    steps = np.diff(tip_scale * disp) * p.fps
    k = int(np.argmax(np.abs(steps)))
    release_index = k + 1  # end frame of the max step
    truth = ThrowTruth(
        release_index=release_index,
        release_speed=float(abs(steps[k])),
        commanded_peak_speed=p.peak_hand_speed * tip_scale,
        release_time=t_mid,
        direction=tuple(u),
        angles=_posed_angles(joints[release_index]),
        travel=travel,
    )
    record = ThrowRecord(
        athlete_id=p.athlete_id,
        throw_index=p.throw_index,
        sequence=seq,
        landing_offset=p.landing_offset,
        board_distance=p.board_distance,
    )
    return record, truth


def gen_cohort(n_throws: int, base: ThrowParams = ThrowParams(), seed: int = 0,
               speed_std: float = 0.15, offset_std_mm: float = 25.0,
               phase_std: float = 0.01, noise_std: float = 0.002) -> list:
    """A reproducible cohort of throws with varied speed, phase, landing.

    Returns a list of (ThrowRecord, ThrowTruth), throw_index 0..n-1.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_throws):
        speed = max(0.5, base.peak_hand_speed + speed_std * rng.standard_normal())
        phase = float(np.clip(base.release_phase + phase_std * rng.standard_normal(),
                              0.55, 0.92))
        offset = tuple(offset_std_mm * rng.standard_normal(2))
        p = replace(
            base,
            peak_hand_speed=float(speed),
            release_phase=phase,
            landing_offset=offset,
            noise_std=noise_std,
            throw_index=i,
            seed=seed * 1_000_003 + i,
        )
        out.append(gen_throw(p))
    return out


# ---------------------------------------------------------------------------
# Posed-skeleton oracle


def _rodrigues(v: np.ndarray, axis: np.ndarray, angle_rad: float) -> np.ndarray:
    a = _unit(axis)
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    return v * c + np.cross(a, v) * s + a * np.dot(a, v) * (1.0 - c)


def pose_frame(shoulder_pitch: float, elbow_flexion: float,
               wrist_extension: float, trunk_yaw: float = 0.0,
               upper_arm: float = 0.30, forearm: float = 0.26,
               hand: float = 0.10) -> SkeletonFrame:
    """Build a frame whose four named angles (degrees) are exact by
    construction: each bone direction is produced by an explicit rotation
    about an axis perpendicular to its parent, so the arccos recovers the
    requested angle identically. Used as the independent oracle for angle
    extraction.
    """
    th_s = math.radians(shoulder_pitch)
    th_e = math.radians(elbow_flexion)
    th_w = math.radians(wrist_extension)
    phi = math.radians(trunk_yaw)

    joints = BASE_POSE.copy()
    yaw = np.array(
        [
            [math.cos(phi), 0.0, math.sin(phi)],
            [0.0, 1.0, 0.0],
            [-math.sin(phi), 0.0, math.cos(phi)],
        ]
    )
    spine_shoulder = joints[Joint.SPINE_SHOULDER]
    lateral = yaw @ np.array([1.0, 0.0, 0.0])

    joints[Joint.SHOULDER_RIGHT] = spine_shoulder + 0.18 * lateral
    joints[Joint.SHOULDER_LEFT] = spine_shoulder - 0.18 * lateral

    # Upper arm: rotate the trunk-down direction by the pitch, in the
    # yawed sagittal plane.
    d1 = yaw @ np.array([0.0, -math.cos(th_s), math.sin(th_s)])
    joints[Joint.ELBOW_RIGHT] = joints[Joint.SHOULDER_RIGHT] + upper_arm * d1

    d2 = _rodrigues(-d1, lateral, th_e)
    joints[Joint.WRIST_RIGHT] = joints[Joint.ELBOW_RIGHT] + forearm * d2

    d3 = _rodrigues(d2, lateral, th_w)
    joints[Joint.HAND_RIGHT] = joints[Joint.WRIST_RIGHT] + 0.6 * hand * d3
    joints[Joint.HAND_TIP_RIGHT] = joints[Joint.WRIST_RIGHT] + hand * d3
    joints[Joint.THUMB_RIGHT] = (
        joints[Joint.WRIST_RIGHT] + 0.5 * hand * d3 + 0.02 * lateral
    )
    return SkeletonFrame(0.0, joints)


# ---------------------------------------------------------------------------
# Sequence transforms used by invariance tests


def yaw_matrix(angle_deg: float) -> np.ndarray:
    """Rotation about +y; positive angle increases trunk yaw."""
    a = math.radians(angle_deg)
    return np.array(
        [
            [math.cos(a), 0.0, math.sin(a)],
            [0.0, 1.0, 0.0],
            [-math.sin(a), 0.0, math.cos(a)],
        ]
    )


def rotation_matrix(axis, angle_deg: float) -> np.ndarray:
    a = _unit(np.asarray(axis, dtype=float))
    th = math.radians(angle_deg)
    K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + math.sin(th) * K + (1 - math.cos(th)) * (K @ K)


def transform_sequence(seq: SkeletonSequence, rotation=None,
                       translation=None) -> SkeletonSequence:
    """Apply one global rigid motion to every frame."""
    joints = seq.joints
    if rotation is not None:
        joints = joints @ np.asarray(rotation, dtype=float).T
    if translation is not None:
        joints = joints + np.asarray(translation, dtype=float)[None, None, :]
    return SkeletonSequence(seq.fps, seq.times.copy(), np.ascontiguousarray(joints))


def upsample_midpoint(seq: SkeletonSequence) -> SkeletonSequence:
    """Double the frame rate by inserting exact midpoints (duplication
    with interpolation): motion per frame halves, fps doubles."""
    T = seq.n_frames
    times = np.empty(2 * T - 1)
    joints = np.empty((2 * T - 1, N_JOINTS, 3))
    times[0::2] = seq.times
    times[1::2] = (seq.times[:-1] + seq.times[1:]) / 2.0
    joints[0::2] = seq.joints
    joints[1::2] = (seq.joints[:-1] + seq.joints[1:]) / 2.0
    return SkeletonSequence(seq.fps * 2.0, times, joints)


# ---------------------------------------------------------------------------
# Board scenes

# Palette chosen so each rendered zone lands inside the intended HSV gate
# of the detection chain; the dart green sits 220 max-channel counts away
# from both board zones, giving a uniform change signal.
CANVAS_COLOR = (225, 225, 225)
BOARD_RED = (190, 45, 35)
BOARD_BLACK = (18, 25, 40)     # near-black navy: keeps saturation in range
CELL_LIGHT = (245, 245, 245)
CELL_DARK = (10, 10, 10)
DART_GREEN = (10, 230, 10)


@dataclass(frozen=True)
class BoardSceneParams:
    """Layout and imaging knobs for one synthetic board scene.

    All geometry is in board-plane pixels; `homography` (plane -> camera,
    row-major 3x3) produces the oblique camera view, identity when None.
    """

    size: tuple = (720, 640)              # width, height
    board_center: tuple = (200.0, 320.0)
    board_radius: float = 180.0
    black_radius_frac: float = 0.63
    grid_origin: tuple = (420.0, 30.0)    # top-left outer corner of the plate
    grid_rows: int = 4                    # inner corners down
    grid_cols: int = 3                    # inner corners across
    cell_px: float = 60.0
    cell_mm: float = 20.0
    dart_tip: tuple | None = (230.0, 290.0)
    dart_angle_deg: float = 25.0          # axis direction from tip to tail
    dart_half_width: float = 6.0
    dart_rod_len: float = 60.0
    dart_taper_half_angle_deg: float = 35.0
    decoy_center: tuple | None = None
    decoy_radius: float = 150.0
    homography: tuple | None = None
    noise_std: float = 0.0
    brightness_shift: int = 0             # added to the post image
    plate_supersample: int = 4            # anti-alias factor over the plate
    seed: int = 0

    @property
    def px_per_mm(self) -> float:
        return self.cell_px / self.cell_mm


@dataclass(frozen=True)
class BoardSceneTruth:
    """Plane-space ground truth for a rendered scene."""

    center: tuple                 # bullseye center, plane px
    tip: tuple | None             # dart tip, plane px
    px_per_mm: float
    landing_offset_mm: tuple | None
    corners: np.ndarray           # (rows*cols, 2) inner corners, raster order
    homography: np.ndarray        # 3x3 plane -> camera
    board_radius: float
    decoy_center: tuple | None


def grid_inner_corners(params: BoardSceneParams) -> np.ndarray:
    """Inner-corner plane coordinates in raster order (row-major)."""
    ox, oy = params.grid_origin
    pts = [
        (ox + j * params.cell_px, oy + i * params.cell_px)
        for i in range(1, params.grid_rows + 1)
        for j in range(1, params.grid_cols + 1)
    ]
    return np.array(pts, dtype=float)


def _dart_membership(x, y, params: BoardSceneParams) -> np.ndarray:
    tip = np.asarray(params.dart_tip, dtype=float)
    ang = math.radians(params.dart_angle_deg)
    u = np.array([math.cos(ang), math.sin(ang)])
    nvec = np.array([-u[1], u[0]])
    dx = x - tip[0]
    dy = y - tip[1]
    s = dx * u[0] + dy * u[1]
    q = np.abs(dx * nvec[0] + dy * nvec[1])
    tan_taper = math.tan(math.radians(params.dart_taper_half_angle_deg))
    taper_len = params.dart_half_width / tan_taper
    in_taper = (s >= 0.0) & (s <= taper_len) & (q <= s * tan_taper)
    in_rod = (
        (s > taper_len)
        & (s <= taper_len + params.dart_rod_len)
        & (q <= params.dart_half_width)
    )
    # Rounded tail cap: a square rod end has corner curvature close to
    # the taper apex, and warp resampling can blur the apex enough for a
    # corner to win the tip search. The cap's curvature (1/half_width)
    # stays well below the apex's.
    cap_c = s - (taper_len + params.dart_rod_len)
    in_cap = (cap_c > 0.0) & (cap_c**2 + (dx * nvec[0] + dy * nvec[1]) ** 2
                              <= params.dart_half_width**2)
    return in_taper | in_rod | in_cap


def _scene_colors(x: np.ndarray, y: np.ndarray, params: BoardSceneParams,
                  with_dart: bool) -> np.ndarray:
    """Evaluate the scene color at continuous plane coordinates."""
    w, h = params.size
    out = np.zeros(x.shape + (3,), dtype=float)
    inside = (x >= 0) & (x < w) & (y >= 0) & (y < h)
    out[inside] = CANVAS_COLOR

    # Calibration plate.
    ox, oy = params.grid_origin
    ncx = params.grid_cols + 1
    ncy = params.grid_rows + 1
    gx = (x - ox) / params.cell_px
    gy = (y - oy) / params.cell_px
    on_plate = (gx >= 0) & (gx < ncx) & (gy >= 0) & (gy < ncy) & inside
    parity = (np.floor(gx).astype(int) + np.floor(gy).astype(int)) % 2
    out[on_plate & (parity == 0)] = CELL_LIGHT
    out[on_plate & (parity == 1)] = CELL_DARK

    # Board: red disc with a dark center.
    cx, cy = params.board_center
    r2 = (x - cx) ** 2 + (y - cy) ** 2
    out[inside & (r2 <= params.board_radius**2)] = BOARD_RED
    black_r = params.black_radius_frac * params.board_radius
    out[inside & (r2 <= black_r**2)] = BOARD_BLACK

    if params.decoy_center is not None:
        dcx, dcy = params.decoy_center
        d2 = (x - dcx) ** 2 + (y - dcy) ** 2
        out[inside & (d2 <= params.decoy_radius**2)] = BOARD_RED

    if with_dart and params.dart_tip is not None:
        out[inside & _dart_membership(x, y, params)] = DART_GREEN
    return out


def _project_points(hinv: np.ndarray, xs: np.ndarray, ys: np.ndarray):
    denom = hinv[2, 0] * xs + hinv[2, 1] * ys + hinv[2, 2]
    px = (hinv[0, 0] * xs + hinv[0, 1] * ys + hinv[0, 2]) / denom
    py = (hinv[1, 0] * xs + hinv[1, 1] * ys + hinv[1, 2]) / denom
    return px, py


def _plate_camera_bbox(params: BoardSceneParams, H: np.ndarray):
    """Clipped camera-pixel bounds covering the plate plus a margin."""
    margin = 12.0
    ox, oy = params.grid_origin
    pw = (params.grid_cols + 1) * params.cell_px
    ph = (params.grid_rows + 1) * params.cell_px
    quad = np.array(
        [
            [ox - margin, oy - margin],
            [ox + pw + margin, oy - margin],
            [ox + pw + margin, oy + ph + margin],
            [ox - margin, oy + ph + margin],
        ]
    )
    hom = (H @ np.c_[quad, np.ones(4)].T).T
    cam = hom[:, :2] / hom[:, 2:3]
    w, h = params.size
    x0 = max(0, int(math.floor(cam[:, 0].min())))
    x1 = min(w - 1, int(math.ceil(cam[:, 0].max())))
    y0 = max(0, int(math.floor(cam[:, 1].min())))
    y1 = min(h - 1, int(math.ceil(cam[:, 1].max())))
    return x0, x1, y0, y1


def render_board_scene(params: BoardSceneParams):
    """Render (pre, post, truth) for a scene.

    The camera image is produced by evaluating the analytic plane scene
    at H^-1 of each pixel center, so rendering shares no resampling code
    with the rectification under test. The calibration-plate region is
    re-rendered with subpixel supersampling: point-sampled edges quantize
    positions to the pixel comb, which would put a floor under corner
    accuracy that has nothing to do with the detector. Noise and the
    optional brightness shift are applied after projection.
    """
    w, h = params.size
    H = (
        np.eye(3)
        if params.homography is None
        else np.asarray(params.homography, dtype=float).reshape(3, 3)
    )
    Hinv = np.linalg.inv(H)
    xs, ys = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    px, py = _project_points(Hinv, xs, ys)

    pre = _scene_colors(px, py, params, with_dart=False)
    post = _scene_colors(px, py, params, with_dart=True)

    ss = params.plate_supersample
    if ss > 1:
        x0, x1, y0, y1 = _plate_camera_bbox(params, H)
        if x1 >= x0 and y1 >= y0:
            bx, by = np.meshgrid(
                np.arange(x0, x1 + 1, dtype=float),
                np.arange(y0, y1 + 1, dtype=float),
            )
            offsets = (np.arange(ss) + 0.5) / ss - 0.5
            acc_pre = np.zeros(bx.shape + (3,))
            acc_post = np.zeros(bx.shape + (3,))
            for dy in offsets:
                for dx in offsets:
                    spx, spy = _project_points(Hinv, bx + dx, by + dy)
                    acc_pre += _scene_colors(spx, spy, params, with_dart=False)
                    acc_post += _scene_colors(spx, spy, params, with_dart=True)
            pre[y0:y1 + 1, x0:x1 + 1] = acc_pre / (ss * ss)
            post[y0:y1 + 1, x0:x1 + 1] = acc_post / (ss * ss)

    if params.brightness_shift:
        post = post + float(params.brightness_shift)
    if params.noise_std > 0:
        rng = np.random.default_rng(params.seed)
        pre = pre + rng.normal(0.0, params.noise_std, pre.shape)
        post = post + rng.normal(0.0, params.noise_std, post.shape)
    pre = np.clip(np.rint(pre), 0, 255).astype(np.uint8)
    post = np.clip(np.rint(post), 0, 255).astype(np.uint8)

    center = params.board_center
    tip = params.dart_tip
    offset = None
    if tip is not None:
        offset = (
            (tip[0] - center[0]) / params.px_per_mm,
            (tip[1] - center[1]) / params.px_per_mm,
        )
    truth = BoardSceneTruth(
        center=tuple(center),
        tip=None if tip is None else tuple(tip),
        px_per_mm=params.px_per_mm,
        landing_offset_mm=offset,
        corners=grid_inner_corners(params),
        homography=H,
        board_radius=params.board_radius,
        decoy_center=params.decoy_center,
    )
    return pre, post, truth


def random_camera_homography(rng, size=(720, 640), max_rot_deg=5.0,
                             scale_range=(0.97, 1.08), max_shift=15.0,
                             max_perspective=2.0e-5) -> np.ndarray:
    """A mild plane -> camera homography centered on the canvas."""
    w, h = size
    th = math.radians(rng.uniform(-max_rot_deg, max_rot_deg))
    s = rng.uniform(*scale_range)
    tx = rng.uniform(-max_shift, max_shift)
    ty = rng.uniform(-max_shift, max_shift)
    p1 = rng.uniform(-max_perspective, max_perspective)
    p2 = rng.uniform(-max_perspective, max_perspective)
    M = np.array(
        [
            [s * math.cos(th), -s * math.sin(th), tx],
            [s * math.sin(th), s * math.cos(th), ty],
            [p1, p2, 1.0],
        ]
    )
    C = np.array([[1.0, 0.0, w / 2.0], [0.0, 1.0, h / 2.0], [0.0, 0.0, 1.0]])
    Cinv = np.array([[1.0, 0.0, -w / 2.0], [0.0, 1.0, -h / 2.0], [0.0, 0.0, 1.0]])
    return C @ M @ Cinv


def scene_for_landing(offset_mm: tuple, decoy: bool = False,
                      homography=None, seed: int = 0,
                      dart_angle_deg: float | None = None) -> BoardSceneParams:
    """Convenience: a scene whose dart lands offset_mm from center."""
    base = BoardSceneParams()
    tip = (
        base.board_center[0] + offset_mm[0] * base.px_per_mm,
        base.board_center[1] + offset_mm[1] * base.px_per_mm,
    )
    if dart_angle_deg is None:
        # Tail toward the board center: the whole dart then sits over the
        # dark central disc, so the frame difference is one uniform step.
        dart_angle_deg = math.degrees(
            math.atan2(base.board_center[1] - tip[1], base.board_center[0] - tip[0])
        )
    return replace(
        base,
        dart_tip=tip,
        dart_angle_deg=dart_angle_deg,
        decoy_center=(520.0, 500.0) if decoy else None,
        homography=None if homography is None else tuple(np.asarray(homography).ravel()),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Dense smoothing oracle


def third_difference_dense(n: int) -> np.ndarray:
    """The (n-3) x n third-difference operator as a dense matrix."""
    if n < 4:
        raise ValueError("need n >= 4")
    D = np.zeros((n - 3, n))
    for k in range(n - 3):
        D[k, k: k + 4] = (-1.0, 3.0, -3.0, 1.0)
    return D


def dense_smooth_oracle(traj: np.ndarray, lam: float) -> np.ndarray:
    """Reference solution of (I + lam * D3^T D3) x = traj by a dense
    generic solver. Guards n <= 500; the fast path must match this to
    near machine precision."""
    traj = np.asarray(traj, dtype=float)
    n = traj.shape[0]
    if n > 500:
        raise ValueError("dense oracle limited to n <= 500")
    if n < 4:
        raise ValueError("need at least 4 samples")
    D = third_difference_dense(n)
    A = np.eye(n) + lam * (D.T @ D)
    flat = traj.reshape(n, -1)
    out = np.linalg.solve(A, flat)
    return out.reshape(traj.shape)
