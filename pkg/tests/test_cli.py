"""End-to-end command-line coverage: store layout, exit codes, reruns."""

import json

import numpy as np
import pytest

from dartkit.board import write_image
from dartkit.cli import (
    EXIT_CONFIG,
    EXIT_INSUFFICIENT,
    EXIT_NODETECT,
    EXIT_OK,
    EXIT_PARSE,
    INDEX_HEADER,
    ConfigError,
    build_config,
    build_parser,
    load_config_file,
    main,
    read_index,
)
from dartkit.reference import load_reference
from dartkit.skeleton import load_throw


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """simulate -> ingest -> fit -> diagnose -> report, one athlete."""
    root = tmp_path_factory.mktemp("pipeline")
    sim = root / "sim"
    store = root / "store"
    out = root / "out"
    assert main(["simulate", "--out", str(sim), "--throws", "12",
                 "--seed", "5", "--athlete", "ana"]) == EXIT_OK
    logs = sorted(str(p) for p in sim.glob("throw_*.log"))
    assert len(logs) == 12
    assert main(["ingest", "--store", str(store), "--athlete", "ana",
                 *logs]) == EXIT_OK
    assert main(["fit", "--store", str(store), "--athlete", "ana"]) == EXIT_OK
    assert main(["diagnose", "--store", str(store), "--athlete", "ana",
                 "--throw", "3", "--out", str(out)]) == EXIT_OK
    assert main(["report", "--store", str(store), "--athlete", "ana",
                 "--out", str(out)]) == EXIT_OK
    return root, sim, store, out


@pytest.fixture(scope="module")
def board_session(tmp_path_factory):
    """A small simulated session with rendered photo pairs, calibrated."""
    root = tmp_path_factory.mktemp("boards")
    sim = root / "sim"
    assert main(["simulate", "--out", str(sim), "--throws", "3", "--seed", "2",
                 "--athlete", "bo", "--boards"]) == EXIT_OK
    cal = root / "cal"
    assert main(["calibrate", "--image", str(sim / "throw_0000.pre.png"),
                 "--rows", "4", "--cols", "3", "--out", str(cal)]) == EXIT_OK
    return root, sim, cal


def _manifest_offsets(sim):
    lines = (sim / "manifest.tsv").read_text().splitlines()
    head = lines[0].split("\t")
    rows = {}
    for ln in lines[1:]:
        d = dict(zip(head, ln.split("\t")))
        rows[int(d["throw_index"])] = (
            float(d["landing_dx_mm"]), float(d["landing_dy_mm"])
        )
    return rows


# ---------------------------------------------------------------------------
# Store pipeline


def test_store_layout(pipeline):
    _, _, store, _ = pipeline
    adir = store / "ana"
    rows = read_index(adir)
    assert len(rows) == 12
    assert [r[0] for r in rows] == list(range(12))
    assert [r[2] for r in rows] == [f"{i:04d}.log" for i in range(12)]
    first = (adir / "index.tsv").read_text().splitlines()[0]
    assert tuple(first.split("\t")) == INDEX_HEADER
    for i in range(12):
        assert (adir / "throws" / f"{i:04d}.log").exists()
        assert (adir / "throws" / f"{i:04d}.log.meta").exists()


def test_reingest_skips_duplicates(pipeline, capsys):
    _, sim, store, _ = pipeline
    logs = sorted(str(p) for p in sim.glob("throw_*.log"))
    assert main(["ingest", "--store", str(store), "--athlete", "ana",
                 *logs]) == EXIT_OK
    out = capsys.readouterr().out
    assert "0 ingested, 12 duplicates, 0 failed" in out
    assert "duplicate content" in out
    assert len(read_index(store / "ana")) == 12


def test_fit_wrote_loadable_reference(pipeline):
    _, _, store, _ = pipeline
    ref = load_reference(store / "ana" / "reference.log")
    assert set(ref.source_throw_ids) <= set(range(12))
    assert len(ref.source_throw_ids) > 1


def test_diagnose_and_report_artifacts(pipeline):
    _, _, _, out = pipeline
    text = (out / "diagnosis_ana_0003.txt").read_text()
    assert text.startswith("athlete: ana\n")
    assert "deviations (largest |z| first):" in text
    assert (out / "diagnosis_ana_0003.tsv").exists()

    scores = (out / "scores_ana.tsv").read_text().splitlines()
    assert len(scores) == 13  # header + 12 throws
    selection = (out / "selection_ana.tsv").read_text().splitlines()
    assert len(selection) == 13  # top_k 30 keeps all 12
    report = (out / "report_ana.txt").read_text()
    assert "12 stored, 12 scoreable" in report
    assert "reference: lambda=" in report


def test_features_command_outputs(pipeline, tmp_path, capsys):
    _, sim, _, _ = pipeline
    log = sim / "throw_0003.log"
    assert main(["features", "--log", str(log), "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "release frame" in out
    feats = (tmp_path / "features_throw_0003.tsv").read_text().splitlines()
    assert feats[0] == "feature\tvalue"
    assert len(feats) == 19
    name, value = feats[1].split("\t")
    assert name == "release_velocity"
    assert float(value) > 0
    series = (tmp_path / "series_throw_0003.tsv").read_text().splitlines()
    assert len(series) == 101  # header + default grid


def test_diagnose_reruns_are_byte_identical(pipeline, tmp_path):
    _, _, store, _ = pipeline
    a = tmp_path / "a"
    b = tmp_path / "b"
    for out in (a, b):
        assert main(["diagnose", "--store", str(store), "--athlete", "ana",
                     "--throw", "7", "--out", str(out)]) == EXIT_OK
    for name in ("diagnosis_ana_0007.txt", "diagnosis_ana_0007.tsv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_report_reruns_are_byte_identical(pipeline, tmp_path):
    _, _, store, _ = pipeline
    a = tmp_path / "a"
    b = tmp_path / "b"
    for out in (a, b):
        assert main(["report", "--store", str(store), "--athlete", "ana",
                     "--out", str(out)]) == EXIT_OK
    for name in ("report_ana.txt", "scores_ana.tsv", "selection_ana.tsv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


# ---------------------------------------------------------------------------
# Board commands


def test_calibrate_cli_reports_scale(board_session, tmp_path, capsys):
    _, sim, _ = board_session
    assert main(["calibrate", "--image", str(sim / "throw_0000.pre.png"),
                 "--rows", "4", "--cols", "3", "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    scale_line = next(ln for ln in out.splitlines() if ln.startswith("px_per_mm="))
    assert 2.5 <= float(scale_line.split("=", 1)[1]) <= 3.5
    assert "reprojection_rms_px=" in out
    payload = json.loads((tmp_path / "calibration.json").read_text())
    assert len(payload["homography"]) == 9


def test_score_board_cli_measures_landing(board_session, tmp_path, capsys):
    _, sim, cal = board_session
    truth = _manifest_offsets(sim)[1]
    assert main(["score-board",
                 "--pre", str(sim / "throw_0001.pre.png"),
                 "--post", str(sim / "throw_0001.post.png"),
                 "--calibration", str(cal / "calibration.json"),
                 "--out", str(tmp_path)]) == EXIT_OK
    capsys.readouterr()
    text = (tmp_path / "landing_throw_0001.post.txt").read_text()
    fields = dict(ln.split("=", 1) for ln in text.strip().splitlines())
    assert abs(float(fields["dx_mm"]) - truth[0]) <= 2.0
    assert abs(float(fields["dy_mm"]) - truth[1]) <= 2.0


def test_ingest_remeasures_offsets_from_images(board_session, tmp_path):
    _, sim, cal = board_session
    store = tmp_path / "store"
    logs = sorted(str(p) for p in sim.glob("throw_*.log"))
    assert main(["ingest", "--store", str(store), "--athlete", "bo",
                 "--calibration", str(cal / "calibration.json"), *logs]) == EXIT_OK
    truth = _manifest_offsets(sim)
    for i in range(3):
        rec = load_throw(store / "bo" / "throws" / f"{i:04d}.log")
        assert rec.landing_offset is not None
        assert abs(rec.landing_offset[0] - truth[i][0]) <= 2.0
        assert abs(rec.landing_offset[1] - truth[i][1]) <= 2.0
        # Measured values differ from the simulator's exact annotation.
        assert rec.landing_offset != truth[i]


# ---------------------------------------------------------------------------
# Exit codes


def test_parse_failure_exit_code(tmp_path, capsys):
    bad = tmp_path / "junk.log"
    bad.write_text("this is not a throw log\n")
    rc = main(["ingest", "--store", str(tmp_path / "s"), "--athlete", "x",
               str(bad)])
    assert rc == EXIT_PARSE
    captured = capsys.readouterr()
    assert "0 ingested" in captured.out
    assert "failed" in captured.err


def test_missing_log_is_parse_failure(tmp_path, capsys):
    rc = main(["features", "--log", str(tmp_path / "absent.log"),
               "--out", str(tmp_path)])
    assert rc == EXIT_PARSE
    assert "error:" in capsys.readouterr().err


def test_insufficient_data_exit_codes(pipeline, tmp_path, capsys):
    sim = tmp_path / "sim"
    store = tmp_path / "store"
    assert main(["simulate", "--out", str(sim), "--throws", "1",
                 "--seed", "1"]) == EXIT_OK
    log = next(iter(sim.glob("throw_*.log")))
    assert main(["ingest", "--store", str(store), "--athlete", "solo",
                 str(log)]) == EXIT_OK
    assert main(["fit", "--store", str(store), "--athlete", "solo"]) \
        == EXIT_INSUFFICIENT
    _, _, big_store, _ = pipeline
    rc = main(["diagnose", "--store", str(big_store), "--athlete", "ana",
               "--throw", "99", "--out", str(tmp_path)])
    assert rc == EXIT_INSUFFICIENT
    assert "not in athlete" in capsys.readouterr().err


def test_no_detection_exit_code(board_session, tmp_path, capsys):
    _, _, cal = board_session
    blank = np.full((640, 720, 3), 225, dtype=np.uint8)
    pre = tmp_path / "blank_pre.png"
    post = tmp_path / "blank_post.png"
    write_image(blank, pre)
    write_image(blank, post)
    rc = main(["score-board", "--pre", str(pre), "--post", str(post),
               "--calibration", str(cal / "calibration.json"),
               "--out", str(tmp_path)])
    assert rc == EXIT_NODETECT
    assert "error:" in capsys.readouterr().err


def test_config_defect_exit_codes(pipeline, tmp_path, capsys):
    _, _, store, _ = pipeline
    base = ["report", "--store", str(store), "--athlete", "ana",
            "--out", str(tmp_path)]
    bad_json = tmp_path / "bad.json"
    bad_json.write_text("{\"windoww\": 5}")
    assert main(base + ["--config", str(bad_json)]) == EXIT_CONFIG
    not_json = tmp_path / "not.json"
    not_json.write_text("nope")
    assert main(base + ["--config", str(not_json)]) == EXIT_CONFIG
    assert main(base + ["--slight", "0"]) == EXIT_CONFIG
    assert main(base + ["--slight", "3", "--significant", "2"]) == EXIT_CONFIG
    assert main(base + ["--top-k", "1"]) == EXIT_CONFIG
    assert main(base + ["--grid-samples", "3"]) == EXIT_CONFIG
    capsys.readouterr()

    rules = tmp_path / "partial.rules"
    rules.write_text("release_velocity | any | slight | only one {z:+.2f}\n")
    rc = main(["diagnose", "--store", str(store), "--athlete", "ana",
               "--throw", "3", "--out", str(tmp_path),
               "--rules", str(rules)])
    assert rc == EXIT_CONFIG
    assert "catch-all" in capsys.readouterr().err


def test_bad_athlete_id_is_config_defect(tmp_path, capsys):
    rc = main(["fit", "--store", str(tmp_path), "--athlete", "../escape"])
    assert rc == EXIT_CONFIG
    assert "bad athlete id" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# Configuration plumbing


def test_config_file_then_flags_precedence(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"top_k": 5, "slight": 0.8}))
    args = build_parser().parse_args(
        ["report", "--store", "s", "--athlete", "a",
         "--config", str(cfg_path), "--top-k", "7"]
    )
    cfg = build_config(args)
    assert cfg.top_k == 7  # flag beats file
    assert cfg.slight == 0.8  # file beats default
    assert cfg.window == 200  # untouched default


def test_load_config_file_validation(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("[1, 2]")
    with pytest.raises(ConfigError, match="top level"):
        load_config_file(p)
    p.write_text("{\"nope\": 1}")
    with pytest.raises(ConfigError, match="unknown config keys"):
        load_config_file(p)
    p.write_text("{\"target_direction\": [0, 0, 1]}")
    assert load_config_file(p) == {"target_direction": (0, 0, 1)}
