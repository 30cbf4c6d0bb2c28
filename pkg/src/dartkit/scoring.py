"""Throw quality scoring and Top-K selection.

A throw's score combines its landing distance from the bullseye with a
smoothness penalty derived from third differences of the raw hand-tip
path. The default form is exp(-a * distance_cm) / sqrt(1 + b * jerk), so
nearer and smoother throws score higher. A literal flag restores the
positive-exponent variant kept only for comparison runs; it rewards
distance and is off by default.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .skeleton import Joint, ThrowRecord

logger = logging.getLogger(__name__)

JERK_MIN_SAMPLES = 4


@dataclass(frozen=True)
class SelectionConfig:
    """Scoring and selection knobs.

    window: number of most recent throws (by throw_index) eligible.
    top_k: how many of those to keep, 0 < top_k <= window.
    distance_decay: exponent rate per centimeter of landing distance.
    jerk_scale: weight of the jerk term inside the square root.
    paper_literal_score: use the positive-exponent score form.
    """

    window: int = 200
    top_k: int = 30
    distance_decay: float = 0.25
    jerk_scale: float = 1.0e4
    paper_literal_score: bool = False

    def __post_init__(self):
        if self.window <= 0:
            raise ValueError("window must be positive")
        if not 0 < self.top_k <= self.window:
            raise ValueError("top_k must satisfy 0 < top_k <= window")
        if self.distance_decay <= 0:
            raise ValueError("distance_decay must be positive")
        if self.jerk_scale <= 0:
            raise ValueError("jerk_scale must be positive")


@dataclass(frozen=True)
class ScoredThrow:
    """Flat scoring record for one throw."""

    athlete_id: str
    throw_index: int
    distance_cm: float
    jerk: float
    score: float


def jerk_metric(hand_traj) -> float:
    """Sum of squared third differences of a raw position track.

    No frame-period normalization is applied: the metric compares throws
    recorded at one rate. Needs at least 4 samples.
    """
    traj = np.asarray(hand_traj, dtype=float)
    if traj.shape[0] < JERK_MIN_SAMPLES:
        raise ValueError(f"need >= {JERK_MIN_SAMPLES} samples, got {traj.shape[0]}")
    d3 = np.diff(traj, n=3, axis=0)
    return float(np.sum(d3 * d3))


def throw_score(distance_cm: float, jerk: float,
                cfg: SelectionConfig = SelectionConfig()) -> float:
    """Score one throw from its landing distance (cm) and jerk metric."""
    if not math.isfinite(distance_cm) or distance_cm < 0:
        raise ValueError("distance_cm must be finite and non-negative")
    if not math.isfinite(jerk) or jerk < 0:
        raise ValueError("jerk must be finite and non-negative")
    sign = 1.0 if cfg.paper_literal_score else -1.0
    return math.exp(sign * cfg.distance_decay * distance_cm) / math.sqrt(
        1.0 + cfg.jerk_scale * jerk
    )


def landing_distance_cm(landing_offset_mm) -> float:
    """Euclidean distance from center in centimeters for a (dx, dy) mm offset."""
    dx, dy = landing_offset_mm
    return math.hypot(float(dx), float(dy)) / 10.0


def score_throw(record: ThrowRecord,
                cfg: SelectionConfig = SelectionConfig()) -> ScoredThrow:
    """Score one throw record; requires a landing offset."""
    if record.landing_offset is None:
        raise ValueError(
            f"throw {record.throw_index}: no landing offset, cannot score"
        )
    distance = landing_distance_cm(record.landing_offset)
    jerk = jerk_metric(record.sequence.joint_track(Joint.HAND_TIP_RIGHT))
    return ScoredThrow(
        athlete_id=record.athlete_id,
        throw_index=record.throw_index,
        distance_cm=distance,
        jerk=jerk,
        score=throw_score(distance, jerk, cfg),
    )


def score_throws(records, cfg: SelectionConfig = SelectionConfig()):
    """Score every record that carries a landing offset.

    Returns (scored, unscoreable_indices). Throws without offsets are
    excluded and flagged, never silently scored.
    """
    scored = []
    skipped = []
    for rec in records:
        if rec.landing_offset is None:
            skipped.append(rec.throw_index)
        else:
            scored.append(score_throw(rec, cfg))
    if skipped:
        logger.warning(
            "excluded %d throw(s) without landing offsets: %s",
            len(skipped), skipped,
        )
    return scored, skipped


def select_top_k(scored, cfg: SelectionConfig = SelectionConfig()):
    """Keep the best top_k of the most recent `window` scored throws.

    Ordering is score-descending; ties break by smaller distance, then
    smaller throw_index. Returns fewer than top_k when fewer are
    available.
    """
    pool = sorted(scored, key=lambda s: -s.throw_index)[: cfg.window]
    ranked = sorted(pool, key=lambda s: (-s.score, s.distance_cm, s.throw_index))
    if len(ranked) < cfg.top_k:
        logger.warning(
            "only %d scoreable throw(s) available for top_k=%d",
            len(ranked), cfg.top_k,
        )
    return ranked[: cfg.top_k]


# ---------------------------------------------------------------------------
# Flat tabular export

SCORE_TABLE_HEADER = ("athlete_id", "throw_index", "distance_cm", "jerk", "score")


def write_score_table(scored, path) -> None:
    """Tab-separated score records; floats use round-trip repr."""
    lines = ["\t".join(SCORE_TABLE_HEADER)]
    for s in scored:
        lines.append(
            "\t".join(
                (
                    s.athlete_id,
                    str(s.throw_index),
                    repr(s.distance_cm),
                    repr(s.jerk),
                    repr(s.score),
                )
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_score_table(path):
    """Parse a score table written by write_score_table."""
    lines = Path(path).read_text().splitlines()
    if not lines or tuple(lines[0].split("\t")) != SCORE_TABLE_HEADER:
        raise ValueError("not a score table: bad header")
    out = []
    for ln in lines[1:]:
        if not ln.strip():
            continue
        aid, idx, dist, jerk, score = ln.split("\t")
        out.append(
            ScoredThrow(
                athlete_id=aid,
                throw_index=int(idx),
                distance_cm=float(dist),
                jerk=float(jerk),
                score=float(score),
            )
        )
    return out
