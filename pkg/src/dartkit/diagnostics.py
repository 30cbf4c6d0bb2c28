"""Z-score diagnostics against a top-throw baseline, plus coaching rules.

A baseline summarizes the athlete's selected throws per scalar feature
(mean, sample std) and per phase-aligned series (pointwise mean/std
curves). New throws are reduced to signed z-scores, tiered, and mapped
through a rule table to plain-language recommendations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .features import FEATURE_NAMES, SERIES_NAMES, FeatureVector, SeriesBundle

STD_FLOOR_REL = 1.0e-6
TIER_ACCEPTABLE = "acceptable"
TIER_SLIGHT = "slight"
TIER_SIGNIFICANT = "significant"
INSUFFICIENT_LABEL = "insufficient variability"
_TIER_RANK = {TIER_ACCEPTABLE: 0, TIER_SLIGHT: 1, TIER_SIGNIFICANT: 2}

# Report targets in canonical order: 18 scalars then 6 series curves.
SERIES_TARGETS = tuple(f"series:{name}" for name in SERIES_NAMES)
ALL_TARGETS = FEATURE_NAMES + SERIES_TARGETS


class RuleCoverageError(RuntimeError):
    """The rule table cannot serve every reportable deviation."""


@dataclass(frozen=True, eq=False)
class Baseline:
    """Per-feature and per-series reference statistics for one athlete.

    Stds are sample stds (k-1 denominator) floored at
    STD_FLOOR_REL * max(|mean|, 1); floored entries are flagged so
    downstream reports can label them instead of trusting inflated z.
    """

    athlete_id: str
    k_used: int
    grid_samples: int
    feature_mean: np.ndarray
    feature_std: np.ndarray
    feature_floored: np.ndarray
    series_mean: dict
    series_std: dict
    series_floored: dict


def _floored_std(values: np.ndarray, mean: np.ndarray):
    std = values.std(axis=0, ddof=1)
    floor = STD_FLOOR_REL * np.maximum(np.abs(mean), 1.0)
    mask = std < floor
    return np.where(mask, floor, std), mask


def build_baseline(profiles, athlete_id: str = "") -> Baseline:
    """Summarize (FeatureVector, SeriesBundle) pairs into a Baseline.

    Input order must not matter: rows are put in a canonical order
    (feature tuple, then raw series bytes) before any reduction, so the
    same throw set always yields a bitwise-identical baseline.
    """
    pairs = list(profiles)
    if len(pairs) < 2:
        raise ValueError(f"need >= 2 throws to build a baseline, got {len(pairs)}")
    grids = {b.grid_samples for _, b in pairs}
    if len(grids) != 1:
        raise ValueError(f"mixed grid sizes in baseline input: {sorted(grids)}")
    pairs.sort(key=lambda p: (tuple(p[0].as_array()), p[1].as_matrix().tobytes()))
    feats = np.array([fv.as_array() for fv, _ in pairs])
    f_mean = feats.mean(axis=0)
    f_std, f_mask = _floored_std(feats, f_mean)
    s_mean, s_std, s_mask = {}, {}, {}
    for name in SERIES_NAMES:
        curves = np.array([b.series(name) for _, b in pairs])
        m = curves.mean(axis=0)
        s, flo = _floored_std(curves, m)
        s_mean[name], s_std[name], s_mask[name] = m, s, flo
    return Baseline(
        athlete_id=athlete_id,
        k_used=len(pairs),
        grid_samples=grids.pop(),
        feature_mean=f_mean,
        feature_std=f_std,
        feature_floored=f_mask,
        series_mean=s_mean,
        series_std=s_std,
        series_floored=s_mask,
    )


def zscore(value: float, mean: float, std: float) -> float:
    if not (math.isfinite(value) and math.isfinite(mean) and math.isfinite(std)):
        raise ValueError("z-score inputs must be finite")
    if std <= 0:
        raise ValueError("std must be positive (baseline floors guarantee this)")
    return (value - mean) / std


def assess(z: float, slight: float = 1.0, significant: float = 2.0) -> str:
    """Tier a signed z-score by its magnitude."""
    if not 0 < slight < significant:
        raise ValueError("thresholds must satisfy 0 < slight < significant")
    a = abs(z)
    if a <= slight:
        return TIER_ACCEPTABLE
    if a <= significant:
        return TIER_SLIGHT
    return TIER_SIGNIFICANT


def series_z_max(series, mean_curve, std_curve):
    """Signed z at the sample of largest |z|; returns (z, sample_index)."""
    s = np.asarray(series, dtype=float)
    m = np.asarray(mean_curve, dtype=float)
    sd = np.asarray(std_curve, dtype=float)
    if s.shape != m.shape or s.shape != sd.shape:
        raise ValueError(
            f"series/baseline grids differ: {s.shape} vs {m.shape} vs {sd.shape}"
        )
    if np.any(sd <= 0):
        raise ValueError("std curve must be positive everywhere")
    z = (s - m) / sd
    idx = int(np.argmax(np.abs(z)))
    return float(z[idx]), idx


@dataclass(frozen=True)
class ReportEntry:
    """One deviation line: a scalar feature or a series extreme."""

    target: str
    kind: str
    z: float
    phase_index: int | None
    tier: str
    floored: bool
    order: int


@dataclass(frozen=True)
class ZReport:
    """All 24 deviation entries for one throw, largest |z| first."""

    athlete_id: str
    throw_index: int
    entries: tuple
    slight: float
    significant: float
    baseline_k: int
    grid_samples: int

    def entry(self, target: str) -> ReportEntry:
        for e in self.entries:
            if e.target == target:
                return e
        raise KeyError(target)


def diagnose_profile(fv: FeatureVector, bundle: SeriesBundle,
                     baseline: Baseline, slight: float = 1.0,
                     significant: float = 2.0, athlete_id: str = "",
                     throw_index: int = -1) -> ZReport:
    """Score one throw's profile against a baseline."""
    if bundle.grid_samples != baseline.grid_samples:
        raise ValueError(
            f"throw grid {bundle.grid_samples} != baseline grid "
            f"{baseline.grid_samples}"
        )
    entries = []
    x = fv.as_array()
    for i, name in enumerate(FEATURE_NAMES):
        z = zscore(float(x[i]), float(baseline.feature_mean[i]),
                   float(baseline.feature_std[i]))
        floored = bool(baseline.feature_floored[i])
        tier = INSUFFICIENT_LABEL if floored else assess(z, slight, significant)
        entries.append(ReportEntry(name, "feature", z, None, tier, floored, i))
    for k, name in enumerate(SERIES_NAMES):
        z, idx = series_z_max(bundle.series(name), baseline.series_mean[name],
                              baseline.series_std[name])
        floored = bool(baseline.series_floored[name][idx])
        tier = INSUFFICIENT_LABEL if floored else assess(z, slight, significant)
        entries.append(
            ReportEntry(f"series:{name}", "series", z, idx, tier, floored,
                        len(FEATURE_NAMES) + k)
        )
    entries.sort(key=lambda e: (-abs(e.z), e.order))
    return ZReport(
        athlete_id=athlete_id,
        throw_index=throw_index,
        entries=tuple(entries),
        slight=slight,
        significant=significant,
        baseline_k=baseline.k_used,
        grid_samples=baseline.grid_samples,
    )


# ---------------------------------------------------------------------------
# Rule table

_VALID_SIGNS = ("+", "-", "any")


@dataclass(frozen=True)
class Rule:
    """One coaching rule; templates may use {z} and {direction}."""

    target: str
    sign: str
    min_tier: str
    template: str


@dataclass(frozen=True)
class RuleTable:
    rules: tuple

    def first_match(self, target: str, z: float, tier: str):
        for r in self.rules:
            if r.target != target:
                continue
            if r.sign == "+" and z <= 0:
                continue
            if r.sign == "-" and z >= 0:
                continue
            if _TIER_RANK[tier] < _TIER_RANK[r.min_tier]:
                continue
            return r
        return None


def _parse_rule(line: str, where: str) -> Rule:
    parts = [p.strip() for p in line.split("|")]
    if len(parts) != 4:
        raise RuleCoverageError(f"{where}: expected 4 |-separated fields")
    target, sign, min_tier, template = parts
    if target not in ALL_TARGETS:
        raise RuleCoverageError(f"{where}: unknown target {target!r}")
    if sign not in _VALID_SIGNS:
        raise RuleCoverageError(f"{where}: sign must be one of {_VALID_SIGNS}")
    if min_tier not in _TIER_RANK:
        raise RuleCoverageError(f"{where}: bad tier {min_tier!r}")
    if not template:
        raise RuleCoverageError(f"{where}: empty template")
    try:
        template.format(z=1.23, direction="above")
    except (KeyError, IndexError, ValueError) as exc:
        raise RuleCoverageError(f"{where}: bad template slots: {exc}") from exc
    return Rule(target, sign, min_tier, template)


def validate_coverage(table: RuleTable) -> None:
    """Every target needs a catch-all rule (sign any, tier <= slight).

    Without one, a flagged deviation could fail to produce advice, which
    is a configuration defect, not a data condition.
    """
    missing = []
    for target in ALL_TARGETS:
        ok = any(
            r.target == target and r.sign == "any"
            and _TIER_RANK[r.min_tier] <= _TIER_RANK[TIER_SLIGHT]
            for r in table.rules
        )
        if not ok:
            missing.append(target)
    if missing:
        raise RuleCoverageError(
            "rule table lacks catch-all rules for: " + ", ".join(missing)
        )


def parse_rules(text: str, origin: str = "<rules>") -> RuleTable:
    rules = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        rules.append(_parse_rule(line, f"{origin}:{lineno}"))
    table = RuleTable(rules=tuple(rules))
    validate_coverage(table)
    return table


def load_rules(path) -> RuleTable:
    p = Path(path)
    return parse_rules(p.read_text(), origin=str(p))


def default_rules() -> RuleTable:
    text = resources.files("dartkit").joinpath("data/default.rules").read_text()
    return parse_rules(text, origin="dartkit/data/default.rules")


@dataclass(frozen=True)
class Recommendation:
    target: str
    z: float
    tier: str
    phase_index: int | None
    text: str


def generate_recommendations(report: ZReport, rules: RuleTable,
                             min_tier: str = TIER_SLIGHT):
    """Advice for every non-floored entry at or above min_tier.

    Entries keep the report's |z|-descending order, and every
    recommendation carries the z value that triggered it. A flagged
    entry with no matching rule raises: that is a broken rule table.
    """
    if min_tier not in _TIER_RANK:
        raise ValueError(f"bad min_tier {min_tier!r}")
    recs = []
    for e in report.entries:
        if e.floored or _TIER_RANK.get(e.tier, -1) < _TIER_RANK[min_tier]:
            continue
        rule = rules.first_match(e.target, e.z, e.tier)
        if rule is None:
            raise RuleCoverageError(
                f"no rule matched target={e.target} z={e.z:+.3f} tier={e.tier}"
            )
        direction = "above" if e.z > 0 else "below"
        recs.append(
            Recommendation(
                target=e.target,
                z=e.z,
                tier=e.tier,
                phase_index=e.phase_index,
                text=rule.template.format(z=e.z, direction=direction),
            )
        )
    return recs


# ---------------------------------------------------------------------------
# Rendering

def render_report_text(report: ZReport, recommendations) -> str:
    """Human-readable diagnosis, stable across reruns."""
    lines = [
        f"athlete: {report.athlete_id}",
        f"throw: {report.throw_index}",
        f"baseline throws: {report.baseline_k}",
        f"thresholds: slight |z| > {report.slight:g}, "
        f"significant |z| > {report.significant:g}",
        "",
        "deviations (largest |z| first):",
    ]
    for e in report.entries:
        phase = f"  @ sample {e.phase_index}" if e.phase_index is not None else ""
        lines.append(f"  {e.target:<32} z = {e.z:+9.3f}  {e.tier}{phase}")
    lines.append("")
    if recommendations:
        lines.append("recommendations:")
        for i, r in enumerate(recommendations, start=1):
            lines.append(f"  {i}. [{r.tier}] {r.target} (z = {r.z:+.2f}): {r.text}")
    else:
        lines.append("recommendations: none, all tracked quantities acceptable")
    return "\n".join(lines) + "\n"


REPORT_TSV_HEADER = ("target", "kind", "z", "phase_index", "tier", "floored")


def write_report_tsv(report: ZReport, path) -> None:
    """Machine-readable report rows with round-trip float text."""
    lines = ["\t".join(REPORT_TSV_HEADER)]
    for e in report.entries:
        lines.append(
            "\t".join(
                (
                    e.target,
                    e.kind,
                    repr(e.z),
                    "" if e.phase_index is None else str(e.phase_index),
                    e.tier,
                    "1" if e.floored else "0",
                )
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")
