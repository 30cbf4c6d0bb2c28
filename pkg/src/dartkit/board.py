"""Dartboard photograph measurement chain.

Calibration finds checkerboard saddle points, maps the camera view onto
the board plane with a least-squares homography, and records the
pixel-per-millimeter scale implied by the known cell size. Scoring
rectifies a pre/post throw pair, locates the bullseye by color and
shape, segments the dart from the frame difference, walks the dart
contour to its sharpest far point, and reports the landing offset in
millimeters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError

DEFAULT_CORNER_SIGMA = 3.0
DEFAULT_NMS_SIZE = 15
DEFAULT_CORNER_REL_THRESHOLD = 0.2
DEFAULT_CLOSE_KERNEL = (2, 8)
DEFAULT_CLOSE_ITERATIONS = 10
DEFAULT_MIN_BLACK_FILL = 0.35
DEFAULT_DIFF_KEEP_FRACTION = 0.98
DEFAULT_CURVATURE_OFFSET = 5
DEFAULT_CANDIDATE_FRACTION = 0.9
MIN_CONTOUR_POINTS = 12

# Hue is halved into [0, 180]; saturation and value span [0, 255].
RED_RANGES = (
    ((0, 60, 40), (10, 255, 255)),
    ((168, 40, 160), (180, 255, 255)),
)
BLACK_RANGE = (((50, 50, 0), (180, 200, 70)),)


class DetectionError(RuntimeError):
    """A vision stage could not find what it was asked to find."""


# ---------------------------------------------------------------------------
# Image I/O

def read_image(path) -> np.ndarray:
    """Load an image file as an (h, w, 3) uint8 RGB array."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def write_image(img: np.ndarray, path) -> None:
    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        raise ValueError("image must be uint8")
    Image.fromarray(arr).save(path)


def _luminance(img: np.ndarray) -> np.ndarray:
    rgb = np.asarray(img, dtype=float)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected (h, w, 3) image, got {rgb.shape}")
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]


# ---------------------------------------------------------------------------
# Checkerboard corners

# Pseudo-inverse of the 3x3 quadratic design [x^2, y^2, xy, x, y, 1],
# rows enumerated y-major over offsets {-1, 0, 1}.
_QUAD_DESIGN = np.array(
    [
        [dx * dx, dy * dy, dx * dy, dx, dy, 1.0]
        for dy in (-1, 0, 1)
        for dx in (-1, 0, 1)
    ]
)
_QUAD_PINV = np.linalg.pinv(_QUAD_DESIGN)


def _subpixel_offset(patch: np.ndarray):
    """Peak offset of a quadratic fit to a 3x3 neighborhood, clamped to 1."""
    coef = _QUAD_PINV @ patch.reshape(9)
    a, b, c, d, e, _ = coef
    hess = np.array([[2.0 * a, c], [c, 2.0 * b]])
    det = np.linalg.det(hess)
    if abs(det) < 1.0e-12:
        return 0.0, 0.0
    ox, oy = np.linalg.solve(hess, [-d, -e])
    if abs(ox) > 1.0 or abs(oy) > 1.0:
        return 0.0, 0.0
    return float(ox), float(oy)


def find_chessboard_corners(img: np.ndarray, rows: int, cols: int,
                            sigma: float = DEFAULT_CORNER_SIGMA,
                            nms_size: int = DEFAULT_NMS_SIZE,
                            rel_threshold: float = DEFAULT_CORNER_REL_THRESHOLD,
                            ) -> np.ndarray:
    """Inner checkerboard corners as (rows*cols, 2) (x, y), raster order.

    The response Ixy^2 - Ixx*Iyy of Gaussian second derivatives peaks at
    saddle points, which singles out X-corners and stays low on edges,
    blobs, and L- or T-junctions. Peaks are refined to sub-pixel by a
    quadratic fit and ordered row-major; overlapping row bands (e.g. a
    heavily rotated plate) are reported instead of silently mis-ordered.
    """
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be positive")
    gray = _luminance(img)
    ixx = ndimage.gaussian_filter(gray, sigma, order=(0, 2))
    iyy = ndimage.gaussian_filter(gray, sigma, order=(2, 0))
    ixy = ndimage.gaussian_filter(gray, sigma, order=(1, 1))
    resp = ixy * ixy - ixx * iyy
    rmax = float(resp.max())
    if rmax <= 0.0:
        raise DetectionError("no saddle-like corner response in image")
    local_max = ndimage.maximum_filter(resp, size=nms_size, mode="constant",
                                       cval=-np.inf)
    peak_mask = (resp == local_max) & (resp >= rel_threshold * rmax)
    ys, xs = np.nonzero(peak_mask)
    expected = rows * cols
    # Plateaus of exactly equal response survive the filter as ties;
    # greedy suppression keeps one peak per nms_size neighborhood, in
    # deterministic strongest-first order, then the strongest `expected`
    # survivors win (weaker junk like plate-edge T-junctions drops out).
    order = np.lexsort((xs, ys, -resp[ys, xs]))
    kept_x: list = []
    kept_y: list = []
    for i in order:
        x, y = int(xs[i]), int(ys[i])
        if any(
            abs(kx - x) < nms_size and abs(ky - y) < nms_size
            for kx, ky in zip(kept_x, kept_y)
        ):
            continue
        kept_x.append(x)
        kept_y.append(y)
    if len(kept_x) < expected:
        raise DetectionError(
            f"found {len(kept_x)} corner candidates, expected {expected}"
        )
    px = np.array(kept_x[:expected], dtype=float)
    py = np.array(kept_y[:expected], dtype=float)

    h, w = resp.shape
    for i in range(expected):
        xi, yi = int(px[i]), int(py[i])
        if 1 <= xi < w - 1 and 1 <= yi < h - 1:
            ox, oy = _subpixel_offset(resp[yi - 1: yi + 2, xi - 1: xi + 2])
            px[i] += ox
            py[i] += oy

    byy = np.argsort(py, kind="stable")
    grid = []
    for r in range(rows):
        band = byy[r * cols: (r + 1) * cols]
        grid.append(band[np.argsort(px[band], kind="stable")])
    for r in range(rows - 1):
        if py[grid[r]].max() >= py[grid[r + 1]].min():
            raise DetectionError(
                "corner rows overlap vertically; grid ordering is ambiguous"
            )
    idx = np.concatenate(grid)
    return np.stack([px[idx], py[idx]], axis=1)


# ---------------------------------------------------------------------------
# Homography

def _normalizer(pts: np.ndarray) -> np.ndarray:
    centroid = pts.mean(axis=0)
    dist = np.linalg.norm(pts - centroid, axis=1).mean()
    if dist <= 0.0:
        raise ValueError("degenerate correspondences: points coincide")
    s = math.sqrt(2.0) / dist
    return np.array(
        [[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]]
    )


def solve_homography(src_pts, dst_pts) -> np.ndarray:
    """Least-squares homography H with H @ [x, y, 1] ~ [u, v, 1].

    Both point sets are centered and scaled before the direct linear
    system is solved by SVD, and H is normalized to H[2,2] = 1. Four
    correspondences give an exact map; more are fit in least squares.
    """
    src = np.asarray(src_pts, dtype=float)
    dst = np.asarray(dst_pts, dtype=float)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise ValueError("src and dst must both be (N, 2)")
    if src.shape[0] < 4:
        raise ValueError(f"need >= 4 correspondences, got {src.shape[0]}")
    if not (np.isfinite(src).all() and np.isfinite(dst).all()):
        raise ValueError("correspondences must be finite")
    ts = _normalizer(src)
    td = _normalizer(dst)
    sn = (ts @ np.c_[src, np.ones(len(src))].T).T
    dn = (td @ np.c_[dst, np.ones(len(dst))].T).T
    a = np.zeros((2 * len(src), 9))
    x, y = sn[:, 0], sn[:, 1]
    u, v = dn[:, 0], dn[:, 1]
    a[0::2, 0] = -x
    a[0::2, 1] = -y
    a[0::2, 2] = -1.0
    a[0::2, 6] = u * x
    a[0::2, 7] = u * y
    a[0::2, 8] = u
    a[1::2, 3] = -x
    a[1::2, 4] = -y
    a[1::2, 5] = -1.0
    a[1::2, 6] = v * x
    a[1::2, 7] = v * y
    a[1::2, 8] = v
    _, sv, vt = np.linalg.svd(a)
    if sv[-2] <= 1.0e-10 * sv[0]:
        raise ValueError("degenerate correspondences: solution not unique")
    hn = vt[-1].reshape(3, 3)
    h = np.linalg.inv(td) @ hn @ ts
    if abs(h[2, 2]) < 1.0e-12:
        raise ValueError("degenerate homography: vanishing normalization")
    return h / h[2, 2]


def apply_homography(h: np.ndarray, pts) -> np.ndarray:
    """Map (N, 2) points through a homography."""
    p = np.asarray(pts, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    ones = np.ones((len(p), 1))
    q = (np.asarray(h, dtype=float) @ np.c_[p, ones].T).T
    wc = q[:, 2]
    if np.any(np.abs(wc) < 1.0e-12):
        raise ArithmeticError("point maps to infinity under homography")
    out = q[:, :2] / wc[:, None]
    return out[0] if single else out


def reprojection_rms(h: np.ndarray, src_pts, dst_pts) -> float:
    """Root-mean-square distance between H(src) and dst, in pixels."""
    mapped = apply_homography(h, src_pts)
    err = mapped - np.atleast_2d(np.asarray(dst_pts, dtype=float))
    return float(np.sqrt(np.mean(np.sum(err * err, axis=1))))


def warp_perspective(img: np.ndarray, h: np.ndarray, out_size) -> np.ndarray:
    """Resample img under H (source -> dest) onto a (w, h) canvas.

    Each destination pixel is pulled from H^-1 with bilinear
    interpolation; samples outside the source fill with black.
    """
    src = np.asarray(img)
    if src.dtype != np.uint8:
        raise ValueError("expected a uint8 image")
    gray_in = src.ndim == 2
    if gray_in:
        src = src[..., None]
    ow, oh = int(out_size[0]), int(out_size[1])
    if ow < 1 or oh < 1:
        raise ValueError("out_size must be positive")
    hinv = np.linalg.inv(np.asarray(h, dtype=float))
    xs, ys = np.meshgrid(np.arange(ow, dtype=float), np.arange(oh, dtype=float))
    denom = hinv[2, 0] * xs + hinv[2, 1] * ys + hinv[2, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = (hinv[0, 0] * xs + hinv[0, 1] * ys + hinv[0, 2]) / denom
        sy = (hinv[1, 0] * xs + hinv[1, 1] * ys + hinv[1, 2]) / denom
    sh, sw = src.shape[:2]
    valid = (
        np.isfinite(sx) & np.isfinite(sy)
        & (sx >= 0.0) & (sx <= sw - 1.0)
        & (sy >= 0.0) & (sy <= sh - 1.0)
    )
    sx = np.where(valid, sx, 0.0)
    sy = np.where(valid, sy, 0.0)
    x0 = np.floor(sx).astype(int)
    y0 = np.floor(sy).astype(int)
    x1 = np.minimum(x0 + 1, sw - 1)
    y1 = np.minimum(y0 + 1, sh - 1)
    fx = (sx - x0)[..., None]
    fy = (sy - y0)[..., None]
    f = src.astype(float)
    top = f[y0, x0] * (1.0 - fx) + f[y0, x1] * fx
    bot = f[y1, x0] * (1.0 - fx) + f[y1, x1] * fx
    out = top * (1.0 - fy) + bot * fy
    out[~valid] = 0.0
    out = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return out[..., 0] if gray_in else out


# ---------------------------------------------------------------------------
# Color gating

def rgb_to_hsv(img: np.ndarray) -> np.ndarray:
    """Hexcone HSV with hue halved to [0, 180], S and V in [0, 255]."""
    rgb = np.asarray(img)
    if rgb.dtype != np.uint8 or rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError("expected (h, w, 3) uint8")
    rf = rgb[..., 0].astype(float)
    gf = rgb[..., 1].astype(float)
    bf = rgb[..., 2].astype(float)
    v = np.maximum(np.maximum(rf, gf), bf)
    mn = np.minimum(np.minimum(rf, gf), bf)
    delta = v - mn
    safe = np.where(delta == 0.0, 1.0, delta)
    hue = np.select(
        [delta == 0.0, v == rf, v == gf],
        [
            np.zeros_like(v),
            60.0 * np.mod((gf - bf) / safe, 6.0),
            60.0 * ((bf - rf) / safe + 2.0),
        ],
        default=60.0 * ((rf - gf) / safe + 4.0),
    )
    sat = np.where(v > 0.0, 255.0 * delta / np.where(v == 0.0, 1.0, v), 0.0)
    out = np.empty(rgb.shape, dtype=np.uint8)
    out[..., 0] = np.rint(hue / 2.0).astype(np.uint8)
    out[..., 1] = np.rint(sat).astype(np.uint8)
    out[..., 2] = np.rint(v).astype(np.uint8)
    return out


def mask_by_ranges(hsv: np.ndarray, ranges) -> np.ndarray:
    """Union of inclusive per-channel (lo, hi) HSV gates."""
    arr = np.asarray(hsv)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError("expected (h, w, 3) HSV")
    mask = np.zeros(arr.shape[:2], dtype=bool)
    for lo, hi in ranges:
        part = np.ones(arr.shape[:2], dtype=bool)
        for ch in range(3):
            part &= (arr[..., ch] >= lo[ch]) & (arr[..., ch] <= hi[ch])
        mask |= part
    return mask


def ellipse_kernel(width: int, height: int) -> np.ndarray:
    """Boolean (height, width) footprint of the inscribed ellipse."""
    if width < 1 or height < 1:
        raise ValueError("kernel sides must be >= 1")
    ys, xs = np.mgrid[0:height, 0:width]
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    rx, ry = width / 2.0, height / 2.0
    fp = ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2 <= 1.0
    fp[int(round(cy)), int(round(cx))] = True
    return fp


def morph_close(mask: np.ndarray, kernel=DEFAULT_CLOSE_KERNEL,
                iterations: int = DEFAULT_CLOSE_ITERATIONS) -> np.ndarray:
    """Close with an elliptical footprint: dilate n times, erode n times.

    kernel is (width, height). Iterations compound before the erosions
    start, so the pass is one closing by the n-fold dilated ellipse and
    a 4 px gap is bridged by a 2 px kernel at 10 iterations. Even-sized
    footprints make scipy's window asymmetric by one pixel; the erosion
    compensates with a mirrored origin so the closing is drift-free (an
    isolated pixel stays exactly where it was). Erosion pads with
    foreground so shapes clipped by the frame keep their border pixels.
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    m = np.asarray(mask, dtype=bool).astype(np.uint8)
    if iterations == 0:
        return m.astype(bool)
    fp = ellipse_kernel(*kernel)
    fast = _solid_close_windows(fp, iterations)
    if fast is not None:
        size, dilate_origin, erode_origin = fast
        m = ndimage.maximum_filter(m, size=size, mode="constant", cval=0,
                                   origin=dilate_origin)
        m = ndimage.minimum_filter(m, size=size, mode="constant", cval=1,
                                   origin=erode_origin)
        return m.astype(bool)
    erode_origin = tuple(-1 if s % 2 == 0 else 0 for s in fp.shape)
    for _ in range(iterations):
        m = ndimage.maximum_filter(m, footprint=fp, mode="constant", cval=0)
    for _ in range(iterations):
        m = ndimage.minimum_filter(m, footprint=fp, mode="constant", cval=1,
                                   origin=erode_origin)
    return m.astype(bool)


def _solid_close_windows(fp: np.ndarray, iterations: int):
    """Separable equivalent of `iterations` footprint passes, if one exists.

    Thin elliptical footprints degenerate to solid rectangles, and n
    dilations by a rectangle equal one dilation by the n-fold Minkowski
    sum, a larger rectangle. Rectangles make scipy's filters separable,
    which turns the 2n footprint passes of a close into two cheap calls.
    Returns (size, dilate_origin, erode_origin), or None when the
    footprint is not solid or the compound origin leaves scipy's range.
    """
    ys, xs = np.nonzero(fp)
    if not fp[ys.min():ys.max() + 1, xs.min():xs.max() + 1].all():
        return None
    size, od, oe = [], [], []
    for lo_px, hi_px, length in (
        (ys.min(), ys.max(), fp.shape[0]),
        (xs.min(), xs.max(), fp.shape[1]),
    ):
        # Per-pass window offsets relative to scipy's footprint center.
        lo = int(lo_px) - length // 2
        hi = int(hi_px) - length // 2
        s = iterations * (hi - lo) + 1
        # scipy origin o shifts the window by -o off its default center.
        d = -(s // 2) - iterations * lo     # dilation window -> [n*lo, n*hi]
        e = -(s // 2) + iterations * hi     # erosion window, reflected
        if not all(-(s // 2) <= o <= (s - 1) // 2 for o in (d, e)):
            return None
        size.append(s)
        od.append(d)
        oe.append(e)
    return tuple(size), tuple(od), tuple(oe)


# ---------------------------------------------------------------------------
# Minimum enclosing circle

def _circle_two(p, q):
    c = (p + q) / 2.0
    return c, float(np.linalg.norm(p - q) / 2.0)


def _circle_three(p, q, r):
    ax, ay = p
    bx, by = q
    cx, cy = r
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if abs(d) < 1.0e-12:
        return None
    a2, b2, c2 = ax * ax + ay * ay, bx * bx + by * by, cx * cx + cy * cy
    ux = (a2 * (by - cy) + b2 * (cy - ay) + c2 * (ay - by)) / d
    uy = (a2 * (cx - bx) + b2 * (ax - cx) + c2 * (bx - ax)) / d
    center = np.array([ux, uy])
    return center, float(np.linalg.norm(p - center))


def _circle_of_support(support):
    if not support:
        return None
    if len(support) == 1:
        return support[0].copy(), 0.0
    if len(support) == 2:
        return _circle_two(support[0], support[1])
    circ = _circle_three(*support)
    if circ is not None:
        return circ
    # Collinear support: the widest pair encloses the third point.
    best = None
    for i in range(3):
        for j in range(i + 1, 3):
            c, r = _circle_two(support[i], support[j])
            if best is None or r > best[1]:
                best = (c, r)
    return best


def _in_circle(circle, p) -> bool:
    if circle is None:
        return False
    c, r = circle
    return float(np.linalg.norm(p - c)) <= r * (1.0 + 1.0e-10) + 1.0e-9


def min_enclosing_circle(points) -> tuple:
    """Smallest circle covering all points: ((cx, cy), radius).

    Convex-hull reduction first, then the classic randomized incremental
    construction with a fixed shuffle seed so results are reproducible.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) == 0:
        raise ValueError("need a non-empty (N, 2) point set")
    if len(pts) > 16:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except QhullError:
            pass  # collinear or tiny spread: run on the raw points
    rng = np.random.default_rng(12345)
    pts = pts[rng.permutation(len(pts))]

    def solve(n, support):
        circ = _circle_of_support(support)
        if len(support) == 3:
            return circ
        for i in range(n):
            if not _in_circle(circ, pts[i]):
                circ = solve(i, support + [pts[i]])
        return circ

    import sys
    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, len(pts) * 4 + 100))
    try:
        center, radius = solve(len(pts), [])
    finally:
        sys.setrecursionlimit(old_limit)
    return (float(center[0]), float(center[1])), float(radius)


# ---------------------------------------------------------------------------
# Bullseye

@dataclass(frozen=True)
class BullseyeDetection:
    center: tuple
    radius: float
    fill_ratio: float


def _components_by_area(mask: np.ndarray):
    labels, count = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    if count == 0:
        return labels, []
    areas = np.bincount(labels.ravel())[1:]
    order = sorted(range(1, count + 1), key=lambda lb: (-areas[lb - 1], lb))
    return labels, order


def _boundary_points(component: np.ndarray) -> np.ndarray:
    interior = ndimage.minimum_filter(component.astype(np.uint8), size=3,
                                      mode="constant", cval=0).astype(bool)
    ys, xs = np.nonzero(component & ~interior)
    return np.stack([xs, ys], axis=1).astype(float)


def detect_bullseye(img: np.ndarray,
                    red_ranges=RED_RANGES,
                    black_range=BLACK_RANGE,
                    close_kernel=DEFAULT_CLOSE_KERNEL,
                    close_iterations: int = DEFAULT_CLOSE_ITERATIONS,
                    min_black_fill: float = DEFAULT_MIN_BLACK_FILL,
                    ) -> BullseyeDetection:
    """Find the board center: a red region whose enclosing circle is dark.

    Red candidate regions are tried largest-first; each is accepted only
    if the black-gated pixels fill at least min_black_fill of its
    minimum enclosing circle. Red objects without a dark interior (logos,
    stray markers) fail the fill check and are skipped.
    """
    hsv = rgb_to_hsv(img)
    red = morph_close(mask_by_ranges(hsv, red_ranges), close_kernel,
                      close_iterations)
    labels, order = _components_by_area(red)
    if not order:
        raise DetectionError("no red regions found")
    black = mask_by_ranges(hsv, black_range)
    h, w = red.shape
    best_fill = 0.0
    for lb in order:
        comp = labels == lb
        boundary = _boundary_points(comp)
        (cx, cy), radius = min_enclosing_circle(boundary)
        if radius < 1.0:
            continue
        x0 = max(0, int(math.floor(cx - radius)))
        x1 = min(w - 1, int(math.ceil(cx + radius)))
        y0 = max(0, int(math.floor(cy - radius)))
        y1 = min(h - 1, int(math.ceil(cy + radius)))
        if x1 < x0 or y1 < y0:
            continue
        ys, xs = np.mgrid[y0:y1 + 1, x0:x1 + 1]
        inside = (xs - cx) ** 2 + (ys - cy) ** 2 <= radius * radius
        total = int(inside.sum())
        if total == 0:
            continue
        fill = float((black[y0:y1 + 1, x0:x1 + 1] & inside).sum()) / total
        best_fill = max(best_fill, fill)
        if fill >= min_black_fill:
            return BullseyeDetection(center=(float(cx), float(cy)),
                                     radius=float(radius),
                                     fill_ratio=fill)
    raise DetectionError(
        f"no red region passed the dark-fill check "
        f"(best fill {best_fill:.3f} < {min_black_fill})"
    )


# ---------------------------------------------------------------------------
# Dart segmentation and tip location

def dart_mask(pre: np.ndarray, post: np.ndarray,
              keep_fraction: float = DEFAULT_DIFF_KEEP_FRACTION,
              close_kernel=DEFAULT_CLOSE_KERNEL,
              close_iterations: int = DEFAULT_CLOSE_ITERATIONS) -> np.ndarray:
    """Pixels whose normalized max-channel change is in the top band.

    Min-max normalizing the per-pixel change discards global brightness
    shifts between the frames. Identical or uniformly-shifted frames
    have no usable contrast and raise. The thresholded mask is closed to
    heal pinholes where the dart's shading grazes the threshold.
    """
    a = np.asarray(pre)
    b = np.asarray(post)
    if a.shape != b.shape or a.ndim != 3 or a.shape[2] != 3:
        raise ValueError("pre and post must be matching (h, w, 3) images")
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError("keep_fraction must lie in (0, 1]")
    diff = np.abs(b.astype(np.int16) - a.astype(np.int16)).max(axis=2).astype(float)
    dmin, dmax = float(diff.min()), float(diff.max())
    if dmax == dmin:
        raise DetectionError("frame difference has no contrast; no dart found")
    norm = (diff - dmin) * (255.0 / (dmax - dmin))
    return morph_close(norm >= keep_fraction * 255.0,
                       close_kernel, close_iterations)


# Moore ring in clockwise order for image coordinates (x right, y down).
_MOORE_RING = (
    (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)
)


def largest_contour(mask: np.ndarray) -> np.ndarray:
    """Outer boundary of the largest connected region, as ordered (x, y).

    Moore neighbor tracing: from each boundary pixel, its 8-ring is
    scanned clockwise starting just past the backtrack (the background
    pixel the walk arrived from), and the first foreground hit becomes
    the next pixel. The walk is a deterministic map on (pixel, backtrack)
    states, so it terminates exactly when a state repeats.
    """
    m = np.asarray(mask, dtype=bool)
    labels, order = _components_by_area(m)
    if not order:
        raise DetectionError("empty mask: nothing to outline")
    comp = labels == order[0]
    ys, xs = np.nonzero(comp)
    start = (int(xs[0]), int(ys[0]))  # first foreground pixel, raster order
    h, w = comp.shape

    def fg(p):
        x, y = p
        return 0 <= x < w and 0 <= y < h and comp[y, x]

    def step(p, b):
        # Scan clockwise from the slot after b; return (next, new backtrack).
        di = _MOORE_RING.index((b[0] - p[0], b[1] - p[1]))
        prev = b
        for k in range(1, 9):
            d = _MOORE_RING[(di + k) % 8]
            q = (p[0] + d[0], p[1] + d[1])
            if fg(q):
                return q, prev
            prev = q
        return None, None

    # The raster scan reached `start` moving rightward, so its western
    # neighbor is guaranteed background: a valid initial backtrack.
    p, b = start, (start[0] - 1, start[1])
    contour = [start]
    seen = {(p, b)}
    max_steps = 8 * int(comp.sum()) + 8
    for _ in range(max_steps):
        q, nb = step(p, b)
        if q is None:
            return np.array(contour, dtype=int)  # isolated single pixel
        p, b = q, nb
        if (p, b) in seen:
            return np.array(contour, dtype=int)
        seen.add((p, b))
        contour.append(p)
    raise DetectionError("contour trace failed to close")


@dataclass(frozen=True)
class TipDetection:
    tip: tuple
    curvature: float
    contour_length: int
    candidate_count: int


def locate_tip(mask: np.ndarray,
               arc_offset: int = DEFAULT_CURVATURE_OFFSET,
               candidate_fraction: float = DEFAULT_CANDIDATE_FRACTION,
               ) -> TipDetection:
    """The sharpest of the contour points far from the region centroid.

    Candidates are contour points whose centroid distance exceeds
    candidate_fraction of the maximum; each is scored by the circle
    through it and its two arc_offset-separated neighbors (Menger
    curvature), and the sharpest wins. The elongated dart makes its tip
    and tail the only far points, and the tapered tip is the sharper.
    """
    contour = largest_contour(mask)
    n = len(contour)
    # A ring shorter than 12 px has no stable far-point geometry even
    # when the +-arc_offset probes would fit.
    if n < max(MIN_CONTOUR_POINTS, 2 * arc_offset + 1):
        raise DetectionError(
            f"contour of {n} px is too short for curvature probes"
        )
    pts = contour.astype(float)
    centroid = pts.mean(axis=0)
    dist = np.linalg.norm(pts - centroid, axis=1)
    dmax = float(dist.max())
    if dmax <= 0.0:
        raise DetectionError("degenerate contour")
    cand = np.nonzero(dist > candidate_fraction * dmax)[0]
    best_idx = -1
    best_k = -1.0
    for i in cand:
        p_prev = pts[(i - arc_offset) % n]
        p_here = pts[i]
        p_next = pts[(i + arc_offset) % n]
        a = np.linalg.norm(p_here - p_prev)
        b = np.linalg.norm(p_next - p_here)
        c = np.linalg.norm(p_next - p_prev)
        if min(a, b, c) <= 0.0:
            k = 0.0
        else:
            cross = abs(
                (p_here[0] - p_prev[0]) * (p_next[1] - p_prev[1])
                - (p_here[1] - p_prev[1]) * (p_next[0] - p_prev[0])
            )
            k = 2.0 * cross / (a * b * c)
        if k > best_k:
            best_k = k
            best_idx = int(i)
    return TipDetection(
        tip=(float(pts[best_idx, 0]), float(pts[best_idx, 1])),
        curvature=float(best_k),
        contour_length=n,
        candidate_count=int(len(cand)),
    )


def landing_offset_mm(tip_px, center_px, px_per_mm: float) -> tuple:
    """Rightward/downward offset of the tip from center, millimeters."""
    if not math.isfinite(px_per_mm) or px_per_mm <= 0:
        raise ValueError("px_per_mm must be positive")
    return (
        (float(tip_px[0]) - float(center_px[0])) / px_per_mm,
        (float(tip_px[1]) - float(center_px[1])) / px_per_mm,
    )


# ---------------------------------------------------------------------------
# Calibration and scoring entry points

@dataclass(frozen=True, eq=False)
class CalibrationRecord:
    """Camera-to-board-plane rectification and scale for one session."""

    homography: np.ndarray       # camera px -> rectified plane px
    px_per_mm: float
    out_size: tuple              # rectified canvas (width, height)
    board_center: tuple          # bullseye center in rectified px


def save_calibration(rec: CalibrationRecord, path) -> None:
    # The matrix is stored flat in row-major order.
    payload = {
        "homography": [float(v) for v in np.asarray(rec.homography).ravel()],
        "px_per_mm": float(rec.px_per_mm),
        "out_size": [int(rec.out_size[0]), int(rec.out_size[1])],
        "board_center": [float(rec.board_center[0]), float(rec.board_center[1])],
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def load_calibration(path) -> CalibrationRecord:
    data = json.loads(Path(path).read_text())
    flat = np.asarray(data["homography"], dtype=float)
    if flat.size != 9:
        raise ValueError(f"{path}: homography must hold 9 values")
    return CalibrationRecord(
        homography=flat.reshape(3, 3),
        px_per_mm=float(data["px_per_mm"]),
        out_size=(int(data["out_size"][0]), int(data["out_size"][1])),
        board_center=(float(data["board_center"][0]),
                      float(data["board_center"][1])),
    )


def calibrate_board(img: np.ndarray, rows: int, cols: int, cell_mm: float,
                    grid_pitch_px: float | None = None,
                    grid_anchor=None, out_size=None) -> CalibrationRecord:
    """Build a rectification from one view of the corner plate.

    The rectified grid pitch defaults to the median observed corner
    spacing, so the rectified frame keeps roughly the camera's scale;
    px_per_mm then follows from the known cell size. The bullseye is
    located in the rectified view to seed the record's board center.
    """
    if cell_mm <= 0:
        raise ValueError("cell_mm must be positive")
    corners = find_chessboard_corners(img, rows, cols)
    grid = corners.reshape(rows, cols, 2)
    gaps = []
    if cols > 1:
        gaps.append(np.linalg.norm(np.diff(grid, axis=1), axis=2).ravel())
    if rows > 1:
        gaps.append(np.linalg.norm(np.diff(grid, axis=0), axis=2).ravel())
    if not gaps:
        raise ValueError("grid must have at least 2 corners on one side")
    pitch = float(np.median(np.concatenate(gaps)))
    if grid_pitch_px is not None:
        pitch = float(grid_pitch_px)
    if pitch <= 0:
        raise DetectionError("observed corner pitch is not positive")
    anchor = corners[0] if grid_anchor is None else np.asarray(grid_anchor, float)
    dst = np.array(
        [
            (anchor[0] + j * pitch, anchor[1] + i * pitch)
            for i in range(rows)
            for j in range(cols)
        ]
    )
    h = solve_homography(corners, dst)
    if out_size is None:
        out_size = (img.shape[1], img.shape[0])
    rect = warp_perspective(img, h, out_size)
    bull = detect_bullseye(rect)
    return CalibrationRecord(
        homography=h,
        px_per_mm=pitch / cell_mm,
        out_size=(int(out_size[0]), int(out_size[1])),
        board_center=bull.center,
    )


@dataclass(frozen=True)
class LandingMeasurement:
    """One scored throw image pair, all lengths in rectified space."""

    dx_mm: float
    dy_mm: float
    distance_mm: float
    tip_px: tuple
    center_px: tuple
    bullseye_radius_px: float
    fill_ratio: float
    tip_curvature: float

    def to_text(self) -> str:
        items = (
            ("dx_mm", repr(self.dx_mm)),
            ("dy_mm", repr(self.dy_mm)),
            ("distance_mm", repr(self.distance_mm)),
            ("tip_px", f"{self.tip_px[0]!r},{self.tip_px[1]!r}"),
            ("center_px", f"{self.center_px[0]!r},{self.center_px[1]!r}"),
            ("bullseye_radius_px", repr(self.bullseye_radius_px)),
            ("fill_ratio", repr(self.fill_ratio)),
            ("tip_curvature", repr(self.tip_curvature)),
        )
        return "".join(f"{k}={v}\n" for k, v in items)


def score_board(pre: np.ndarray, post: np.ndarray,
                calib: CalibrationRecord) -> LandingMeasurement:
    """Measure where a dart landed from a rectified pre/post pair.

    The bullseye is re-detected on each pre image rather than trusted
    from the calibration record, so a re-hung board between sessions
    cannot silently bias every offset.
    """
    rect_pre = warp_perspective(pre, calib.homography, calib.out_size)
    rect_post = warp_perspective(post, calib.homography, calib.out_size)
    bull = detect_bullseye(rect_pre)
    mask = dart_mask(rect_pre, rect_post)
    tip = locate_tip(mask)
    dx, dy = landing_offset_mm(tip.tip, bull.center, calib.px_per_mm)
    return LandingMeasurement(
        dx_mm=dx,
        dy_mm=dy,
        distance_mm=math.hypot(dx, dy),
        tip_px=tip.tip,
        center_px=bull.center,
        bullseye_radius_px=bull.radius,
        fill_ratio=bull.fill_ratio,
        tip_curvature=tip.curvature,
    )
