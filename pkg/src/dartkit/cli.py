"""Command-line front end and per-athlete session store.

The store is a directory tree, one subdirectory per athlete, holding
throw logs exactly as ingested plus an append-only index of content
hashes. Fitted references live next to the logs they came from; reports
and other derived artifacts go wherever --out points. Nothing in the
store or in any emitted file records wall-clock time, so rerunning a
command over unchanged inputs reproduces its outputs byte for byte.

Exit codes: 0 success, 2 parse failure, 3 insufficient data, 4 vision
no-detection, 5 configuration defect.
"""

from __future__ import annotations

import argparse
import fcntl
import hashlib
import json
import math
import os
import sys
from contextlib import contextmanager
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np
from PIL import UnidentifiedImageError

from .board import (
    DetectionError,
    calibrate_board,
    find_chessboard_corners,
    load_calibration,
    read_image,
    reprojection_rms,
    save_calibration,
    score_board,
    write_image,
)
from .diagnostics import (
    RuleCoverageError,
    TIER_SLIGHT,
    _TIER_RANK,
    build_baseline,
    default_rules,
    diagnose_profile,
    generate_recommendations,
    load_rules,
    render_report_text,
    write_report_tsv,
)
from .features import (
    DEFAULT_GRID_SAMPLES,
    DEFAULT_TARGET_DIR,
    SERIES_NAMES,
    throw_profile,
)
from .reference import (
    DEFAULT_SMOOTH_LAMBDA,
    InsufficientDataError,
    fit_reference,
    load_reference,
    peak_hand_speed,
    save_reference,
)
from .scoring import SelectionConfig, score_throws, select_top_k, write_score_table
from .skeleton import (
    ThrowLogError,
    ThrowRecord,
    load_metadata,
    load_throw,
    metadata_path,
    save_metadata,
    save_sequence,
)
from .synth import (
    ThrowParams,
    gen_cohort,
    random_camera_homography,
    render_board_scene,
    scene_for_landing,
)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INSUFFICIENT = 3
EXIT_NODETECT = 4
EXIT_CONFIG = 5


class ConfigError(ValueError):
    """The configuration file or flags are not usable."""


@dataclass(frozen=True)
class Config:
    """Analysis settings shared by fit, diagnose and report.

    Defaults are the toolkit's standard operating point: a 200-throw
    window, Top-30 selection, distance decay 0.25, jerk scale 1e4,
    smoothing strength 5, and deviation thresholds 1.0/2.0.
    """

    window: int = 200
    top_k: int = 30
    distance_decay: float = 0.25
    jerk_scale: float = 1.0e4
    paper_literal_score: bool = False
    smooth_lambda: float = DEFAULT_SMOOTH_LAMBDA
    grid_samples: int = DEFAULT_GRID_SAMPLES
    slight: float = 1.0
    significant: float = 2.0
    rules_path: str | None = None
    target_direction: tuple = DEFAULT_TARGET_DIR
    calibration_path: str | None = None

    def validate(self) -> "Config":
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if self.top_k < 2:
            raise ConfigError("top_k must be >= 2")
        for name in ("distance_decay", "jerk_scale", "smooth_lambda"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be a finite non-negative number")
        if self.grid_samples < 4:
            raise ConfigError("grid_samples must be >= 4")
        if not (0 < self.slight <= self.significant):
            raise ConfigError("need 0 < slight <= significant")
        d = np.asarray(self.target_direction, dtype=float)
        if d.shape != (3,) or not np.all(np.isfinite(d)) or not np.linalg.norm(d):
            raise ConfigError("target_direction must be a nonzero 3-vector")
        return self

    def selection(self) -> SelectionConfig:
        return SelectionConfig(
            window=self.window,
            top_k=self.top_k,
            distance_decay=self.distance_decay,
            jerk_scale=self.jerk_scale,
            paper_literal_score=self.paper_literal_score,
        )

    def rules(self):
        return load_rules(self.rules_path) if self.rules_path else default_rules()


_CONFIG_FIELDS = {f.name for f in fields(Config)}


def load_config_file(path) -> dict:
    """Read a JSON config; unknown keys are a configuration defect."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = sorted(set(data) - _CONFIG_FIELDS)
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {unknown}")
    if "target_direction" in data:
        data["target_direction"] = tuple(data["target_direction"])
    return data


def build_config(args) -> Config:
    """Defaults, then the --config file, then explicit flags."""
    settings: dict = {}
    if getattr(args, "config", None):
        settings.update(load_config_file(args.config))
    for name in _CONFIG_FIELDS:
        flag = getattr(args, name, None)
        if flag is not None:
            settings[name] = flag
    try:
        cfg = Config(**settings)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def _parse_direction(text: str) -> tuple:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("direction must be 'x,y,z'")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad direction {text!r}") from None


# ---------------------------------------------------------------------------
# Session store

def _athlete_dir(store, athlete: str, create: bool = False) -> Path:
    if not athlete or "/" in athlete or athlete.startswith("."):
        raise ConfigError(f"bad athlete id {athlete!r}")
    d = Path(store) / athlete
    if create:
        (d / "throws").mkdir(parents=True, exist_ok=True)
    return d


@contextmanager
def _store_lock(adir: Path):
    # Advisory single-writer lock per athlete directory.
    fd = os.open(adir / ".lock", os.O_CREAT | os.O_RDWR, 0o644)
    try:
        fcntl.flock(fd, fcntl.LOCK_EX)
        yield
    finally:
        fcntl.flock(fd, fcntl.LOCK_UN)
        os.close(fd)


INDEX_HEADER = ("throw_index", "sha256", "stored_as", "source")


def _index_path(adir: Path) -> Path:
    return adir / "index.tsv"


def read_index(adir: Path) -> list:
    """Rows of the athlete's append-only ingest index."""
    p = _index_path(adir)
    if not p.exists():
        return []
    lines = p.read_text().splitlines()
    if not lines or tuple(lines[0].split("\t")) != INDEX_HEADER:
        raise ThrowLogError(f"{p}: bad index header")
    rows = []
    for ln in lines[1:]:
        idx, digest, stored, source = ln.split("\t")
        rows.append((int(idx), digest, stored, source))
    return rows


def _append_index(adir: Path, rows_before: int, digest: str,
                  stored: str, source: str) -> None:
    p = _index_path(adir)
    with open(p, "a") as fh:
        if rows_before == 0 and p.stat().st_size == 0:
            fh.write("\t".join(INDEX_HEADER) + "\n")
        fh.write(f"{rows_before}\t{digest}\t{stored}\t{source}\n")


def load_store_throws(store, athlete: str) -> list:
    """All of an athlete's ingested throws, in append order."""
    adir = _athlete_dir(store, athlete)
    records = []
    for idx, _, stored, _ in read_index(adir):
        records.append(load_throw(adir / "throws" / stored))
    return records


def _sibling_images(log_path: Path):
    pre = log_path.with_suffix(".pre.png")
    post = log_path.with_suffix(".post.png")
    return (pre, post) if pre.exists() and post.exists() else None


def cmd_ingest(args) -> int:
    cfg = build_config(args)
    adir = _athlete_dir(args.store, args.athlete, create=True)
    calib = load_calibration(cfg.calibration_path) if cfg.calibration_path else None
    ingested, skipped, failures = [], [], []
    with _store_lock(adir):
        index = read_index(adir)
        known = {digest for _, digest, _, _ in index}
        next_idx = len(index)
        for raw in args.paths:
            src = Path(raw)
            try:
                payload = src.read_bytes()
                digest = hashlib.sha256(payload).hexdigest()
                if digest in known:
                    skipped.append(src.name)
                    continue
                record = load_throw(src, athlete_id=args.athlete,
                                    throw_index=next_idx)
                offset = record.landing_offset
                pair = _sibling_images(src)
                if pair is not None and calib is not None:
                    meas = score_board(read_image(pair[0]), read_image(pair[1]),
                                       calib)
                    offset = (meas.dx_mm, meas.dy_mm)
                stored = f"{next_idx:04d}.log"
                (adir / "throws" / stored).write_bytes(payload)
                save_metadata(
                    replace(record, landing_offset=offset),
                    metadata_path(adir / "throws" / stored),
                )
                _append_index(adir, next_idx, digest, stored, src.name)
                known.add(digest)
                ingested.append((next_idx, src.name))
                next_idx += 1
            except (ThrowLogError, OSError, UnidentifiedImageError,
                    DetectionError, ValueError) as exc:
                failures.append((src.name, f"{type(exc).__name__}: {exc}"))
    for idx, name in ingested:
        print(f"ingested {name} as throw {idx}")
    for name in skipped:
        print(f"skipped {name}: duplicate content")
    for name, why in failures:
        print(f"failed {name}: {why}", file=sys.stderr)
    print(f"{len(ingested)} ingested, {len(skipped)} duplicates, "
          f"{len(failures)} failed")
    return EXIT_PARSE if failures else EXIT_OK


# ---------------------------------------------------------------------------
# Board commands

def cmd_calibrate(args) -> int:
    img = read_image(args.image)
    rec = calibrate_board(img, args.rows, args.cols, args.cell_mm)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "calibration.json"
    save_calibration(rec, path)
    corners = find_chessboard_corners(img, args.rows, args.cols)
    pitch = rec.px_per_mm * args.cell_mm
    anchor = corners[0]
    dst = np.array([(anchor[0] + j * pitch, anchor[1] + i * pitch)
                    for i in range(args.rows) for j in range(args.cols)])
    rms = reprojection_rms(rec.homography, corners, dst)
    print(f"calibration written to {path}")
    print(f"px_per_mm={rec.px_per_mm!r}")
    print(f"board_center={rec.board_center[0]!r},{rec.board_center[1]!r}")
    print(f"reprojection_rms_px={rms!r}")
    return EXIT_OK


def cmd_score_board(args) -> int:
    calib = load_calibration(args.calibration)
    meas = score_board(read_image(args.pre), read_image(args.post), calib)
    text = meas.to_text()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    name = f"landing_{Path(args.post).stem}.txt"
    (out / name).write_text(text)
    sys.stdout.write(text)
    print(f"landing record written to {out / name}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Analysis commands

def cmd_features(args) -> int:
    cfg = build_config(args)
    record = load_throw(args.log)
    fv, bundle, rel = throw_profile(
        record, cfg.target_direction, cfg.grid_samples
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.log).stem
    fpath = out / f"features_{stem}.tsv"
    values = fv.as_array()
    with open(fpath, "w") as fh:
        fh.write("feature\tvalue\n")
        for name, value in zip(fv.names(), values):
            fh.write(f"{name}\t{float(value)!r}\n")
    spath = out / f"series_{stem}.tsv"
    mat = bundle.as_matrix()
    with open(spath, "w") as fh:
        fh.write("\t".join(SERIES_NAMES) + "\n")
        for row in mat.T:
            fh.write("\t".join(repr(float(v)) for v in row) + "\n")
    print(f"release frame {rel.release_idx} of {record.sequence.n_frames}, "
          f"speed {rel.release_speed:.3f} m/s")
    for name, value in zip(fv.names(), values):
        print(f"{name} = {float(value):.6g}")
    print(f"features written to {fpath}")
    print(f"series written to {spath}")
    return EXIT_OK


def _reference_paths(adir: Path):
    return adir / "reference.log"


def cmd_fit(args) -> int:
    cfg = build_config(args)
    adir = _athlete_dir(args.store, args.athlete)
    records = load_store_throws(args.store, args.athlete)
    if len(records) < 2:
        raise InsufficientDataError(
            f"athlete {args.athlete!r} has {len(records)} stored throws; need >= 2"
        )
    ref = fit_reference(
        records,
        sel_cfg=cfg.selection(),
        smooth_lambda=cfg.smooth_lambda,
        grid_samples=cfg.grid_samples,
    )
    with _store_lock(adir):
        path = _reference_paths(adir)
        save_reference(ref, path)
    print(f"reference written to {path}")
    print(f"built from throws {','.join(str(i) for i in ref.source_throw_ids)}")
    print(f"distance_decay={ref.distance_decay!r}")
    print(f"peak_hand_speed={peak_hand_speed(ref)!r}")
    return EXIT_OK


def _select_records(records, cfg: Config):
    scored, skipped = score_throws(records, cfg.selection())
    selected = select_top_k(scored, cfg.selection())
    return scored, selected, skipped


def cmd_diagnose(args) -> int:
    cfg = build_config(args)
    records = load_store_throws(args.store, args.athlete)
    by_index = {r.throw_index: r for r in records}
    if args.throw not in by_index:
        raise InsufficientDataError(
            f"throw {args.throw} is not in athlete {args.athlete!r}'s store"
        )
    _, selected, _ = _select_records(records, cfg)
    if len(selected) < 2:
        raise InsufficientDataError(
            f"only {len(selected)} scoreable throws; need >= 2 for a baseline"
        )
    profiles = []
    for s in selected:
        fv, bundle, _ = throw_profile(
            by_index[s.throw_index], cfg.target_direction, cfg.grid_samples
        )
        profiles.append((fv, bundle))
    baseline = build_baseline(profiles, athlete_id=args.athlete)
    fv, bundle, _ = throw_profile(
        by_index[args.throw], cfg.target_direction, cfg.grid_samples
    )
    report = diagnose_profile(
        fv, bundle, baseline, cfg.slight, cfg.significant,
        athlete_id=args.athlete, throw_index=args.throw,
    )
    recs = generate_recommendations(report, cfg.rules(), args.min_tier)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"diagnosis_{args.athlete}_{args.throw:04d}"
    text = render_report_text(report, recs)
    (out / f"{stem}.txt").write_text(text)
    write_report_tsv(report, out / f"{stem}.tsv")
    sys.stdout.write(text)
    print(f"report written to {out / stem}.txt and .tsv")
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = build_config(args)
    records = load_store_throws(args.store, args.athlete)
    scored, selected, skipped = _select_records(records, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spath = out / f"scores_{args.athlete}.tsv"
    write_score_table(scored, spath)
    tpath = out / f"selection_{args.athlete}.tsv"
    write_score_table(selected, tpath)
    chosen = {s.throw_index for s in selected}
    lines = [
        f"athlete {args.athlete}: {len(records)} stored, "
        f"{len(scored)} scoreable, {len(skipped)} without landing offsets,"
        f" top {len(selected)} selected",
        "  X  throw  distance_cm      jerk         score",
    ]
    for s in sorted(scored, key=lambda s: (-s.score, s.distance_cm, s.throw_index)):
        mark = "*" if s.throw_index in chosen else " "
        lines.append(
            f"  {mark}  {s.throw_index:5d}  {s.distance_cm:11.4f}  "
            f"{s.jerk:12.6g}  {s.score:12.6g}"
        )
    ref_path = _reference_paths(_athlete_dir(args.store, args.athlete))
    if ref_path.exists():
        ref = load_reference(ref_path)
        lines.append(
            f"reference: lambda={ref.smooth_lambda:g} "
            f"a*={ref.distance_decay:.6g} "
            f"peak_hand_speed={peak_hand_speed(ref):.4f} m/s"
        )
    text = "\n".join(lines) + "\n"
    (out / f"report_{args.athlete}.txt").write_text(text)
    sys.stdout.write(text)
    print(f"score table written to {spath}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Synthetic data

def cmd_simulate(args) -> int:
    cfg = build_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base = ThrowParams(athlete_id=args.athlete, noise_std=0.0)
    cohort = gen_cohort(
        args.throws, base=base, seed=args.seed, noise_std=args.noise_std
    )
    if args.boards:
        # One camera pose for the whole session, like a fixed tripod.
        rng = np.random.default_rng(args.seed)
        H = random_camera_homography(rng)
        capped = []
        for record, truth in cohort:
            dx, dy = record.landing_offset
            r = math.hypot(dx, dy)
            if r > 34.0:  # keep the dart inside the board's dark center
                dx, dy = dx * 34.0 / r, dy * 34.0 / r
            capped.append((replace(record, landing_offset=(dx, dy)), truth))
        cohort = capped
    manifest = ["throw_index\trelease_index\trelease_speed\t"
                "commanded_peak_speed\ttravel_m\tlanding_dx_mm\tlanding_dy_mm"]
    for record, truth in cohort:
        stem = f"throw_{record.throw_index:04d}"
        save_sequence(record.sequence, out / f"{stem}.log")
        save_metadata(record, metadata_path(out / f"{stem}.log"))
        dx, dy = record.landing_offset
        manifest.append(
            f"{record.throw_index}\t{truth.release_index}\t"
            f"{truth.release_speed!r}\t{truth.commanded_peak_speed!r}\t"
            f"{truth.travel!r}\t{dx!r}\t{dy!r}"
        )
        if args.boards:
            scene = scene_for_landing((dx, dy), homography=H,
                                      seed=args.seed + record.throw_index)
            pre, post, _ = render_board_scene(scene)
            write_image(pre, out / f"{stem}.pre.png")
            write_image(post, out / f"{stem}.post.png")
    (out / "manifest.tsv").write_text("\n".join(manifest) + "\n")
    print(f"{args.throws} throws written under {out}"
          + (" with board image pairs" if args.boards else ""))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing and dispatch

def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("analysis settings")
    g.add_argument("--config", help="JSON file of Config fields")
    g.add_argument("--window", type=int)
    g.add_argument("--top-k", dest="top_k", type=int)
    g.add_argument("--distance-decay", dest="distance_decay", type=float)
    g.add_argument("--jerk-scale", dest="jerk_scale", type=float)
    g.add_argument("--paper-literal-score", dest="paper_literal_score",
                   action="store_const", const=True,
                   help="use the positive-exponent distance term")
    g.add_argument("--smooth-lambda", dest="smooth_lambda", type=float)
    g.add_argument("--grid-samples", dest="grid_samples", type=int)
    g.add_argument("--slight", type=float)
    g.add_argument("--significant", type=float)
    g.add_argument("--rules", dest="rules_path")
    g.add_argument("--target-direction", dest="target_direction",
                   type=_parse_direction, metavar="X,Y,Z")
    g.add_argument("--calibration", dest="calibration_path")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dartkit",
        description="Dart-throw analysis: ingest, fit, diagnose, report.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("ingest", help="add throw logs to an athlete's store")
    q.add_argument("--store", required=True)
    q.add_argument("--athlete", required=True)
    q.add_argument("paths", nargs="+")
    _add_config_flags(q)
    q.set_defaults(func=cmd_ingest)

    q = sub.add_parser("calibrate", help="solve board rectification from a photo")
    q.add_argument("--image", required=True)
    q.add_argument("--rows", type=int, required=True,
                   help="inner corners per column")
    q.add_argument("--cols", type=int, required=True,
                   help="inner corners per row")
    q.add_argument("--cell-mm", dest="cell_mm", type=float, default=20.0)
    q.add_argument("--out", default=".")
    q.set_defaults(func=cmd_calibrate)

    q = sub.add_parser("score-board", help="measure a landing from two photos")
    q.add_argument("--pre", required=True)
    q.add_argument("--post", required=True)
    q.add_argument("--calibration", required=True)
    q.add_argument("--out", default=".")
    q.set_defaults(func=cmd_score_board)

    q = sub.add_parser("features", help="extract one throw's feature profile")
    q.add_argument("--log", required=True)
    q.add_argument("--out", default=".")
    _add_config_flags(q)
    q.set_defaults(func=cmd_features)

    q = sub.add_parser("fit", help="fit the athlete's reference trajectory")
    q.add_argument("--store", required=True)
    q.add_argument("--athlete", required=True)
    _add_config_flags(q)
    q.set_defaults(func=cmd_fit)

    q = sub.add_parser("diagnose", help="z-score one throw against the baseline")
    q.add_argument("--store", required=True)
    q.add_argument("--athlete", required=True)
    q.add_argument("--throw", type=int, required=True)
    q.add_argument("--min-tier", dest="min_tier", default=TIER_SLIGHT,
                   choices=sorted(_TIER_RANK, key=_TIER_RANK.get))
    q.add_argument("--out", default=".")
    _add_config_flags(q)
    q.set_defaults(func=cmd_diagnose)

    q = sub.add_parser("simulate", help="generate synthetic throws and boards")
    q.add_argument("--out", default=".")
    q.add_argument("--athlete", default="synth")
    q.add_argument("--throws", type=int, default=40)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--noise-std", dest="noise_std", type=float, default=0.002)
    q.add_argument("--boards", action="store_true",
                   help="render a pre/post photo pair per throw")
    _add_config_flags(q)
    q.set_defaults(func=cmd_simulate)

    q = sub.add_parser("report", help="score table and selection summary")
    q.add_argument("--store", required=True)
    q.add_argument("--athlete", required=True)
    q.add_argument("--out", default=".")
    _add_config_flags(q)
    q.set_defaults(func=cmd_report)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ThrowLogError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (OSError, UnidentifiedImageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except InsufficientDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    except DetectionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NODETECT
    except (ConfigError, RuleCoverageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def run() -> None:
    sys.exit(main())
