"""Acceptance gate: ten end-to-end behavior checks, one per test.

Each test records a one-line summary with its measured margins; the
run's terminal summary prints them as a ten-line scorecard.
"""

import math
import time

import numpy as np

from conftest import scorecard

from dartkit.board import apply_homography, calibrate_board, score_board
from dartkit.cli import main as cli_main
from dartkit.diagnostics import (
    TIER_ACCEPTABLE,
    TIER_SIGNIFICANT,
    TIER_SLIGHT,
    assess,
    build_baseline,
    default_rules,
    diagnose_profile,
    generate_recommendations,
    render_report_text,
)
from dartkit.features import (
    FEATURE_NAMES,
    SERIES_NAMES,
    FeatureVector,
    SeriesBundle,
    extract_features,
    find_release,
)
from dartkit.reference import (
    AlignedSet,
    align_trajectories,
    fit_reference,
    jerk_functional,
    min_jerk_smooth,
    optimize_weight_param,
    peak_hand_speed,
    template_mse,
    weighted_template,
)
from dartkit.scoring import (
    ScoredThrow,
    SelectionConfig,
    jerk_metric,
    select_top_k,
    score_throws,
    throw_score,
)
from dartkit.skeleton import (
    REFERENCE_JOINTS,
    Joint,
    eval_spline,
    fit_cubic_spline,
    resample_trajectory,
)
from dartkit.synth import (
    ThrowParams,
    dense_smooth_oracle,
    gen_cohort,
    random_camera_homography,
    render_board_scene,
    rotation_matrix,
    scene_for_landing,
    third_difference_dense,
    transform_sequence,
    upsample_midpoint,
    yaw_matrix,
)


def _pass(num: int, msg: str) -> None:
    line = f"criterion {num:02d} PASS: {msg}"
    print(line)
    scorecard(line)


# ---------------------------------------------------------------------------
# 1. Banded smoothing agrees with a dense solver and minimizes its objective.


def test_criterion_01_smoothing_matches_dense_oracle():
    rng = np.random.default_rng(101)
    lam = 5.0
    n = 100
    D = third_difference_dense(n)
    A = np.eye(n) + lam * (D.T @ D)
    worst_elem = 0.0
    worst_resid = 0.0
    t0 = time.perf_counter()
    for _ in range(100):
        y = rng.normal(size=(n, 5, 3))
        x = min_jerk_smooth(y, lam)
        ref = dense_smooth_oracle(y, lam)
        worst_elem = max(worst_elem, float(np.abs(x - ref).max()))
        flat_x = x.reshape(n, -1)
        flat_y = y.reshape(n, -1)
        resid = float(np.abs(A @ flat_x - flat_y).max())
        worst_resid = max(worst_resid, resid)
        assert np.abs(x - ref).max() <= 1.0e-8
        assert resid <= 1.0e-8 * max(float(np.abs(y).max()), 1.0e-30)
        obj_out = float(np.sum((x - y) ** 2)) + lam * jerk_functional(x)
        obj_in = lam * jerk_functional(y)
        assert obj_out <= obj_in * (1.0 + 1.0e-12)
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    _pass(1, f"max elem diff {worst_elem:.2e}, max residual {worst_resid:.2e}, "
             f"{elapsed:.2f}s for 100 trajectories")


# ---------------------------------------------------------------------------
# 2. Natural cubic splines: interpolation, smoothness, linear reproduction.


def test_criterion_02_spline_interpolation_and_smoothness():
    rng = np.random.default_rng(202)
    worst_interp = 0.0
    worst_c2 = 0.0
    worst_linear = 0.0
    for _ in range(1000):
        m = int(rng.integers(4, 13))
        t = np.cumsum(rng.uniform(0.3, 1.2, size=m))
        y = rng.normal(size=m)
        sp = fit_cubic_spline(np.column_stack([t, y]))

        interp = float(np.abs(eval_spline(sp, t) - y).max())
        worst_interp = max(worst_interp, interp)
        assert interp <= 1.0e-12

        h = np.diff(t)
        a, b, c, d = sp.a, sp.b, sp.c, sp.d
        for i in range(m - 2):
            u = h[i]
            val = a[i] + u * (b[i] + u * (c[i] + u * d[i]))
            d1 = b[i] + 2.0 * c[i] * u + 3.0 * d[i] * u * u
            d2 = 2.0 * c[i] + 6.0 * d[i] * u
            gaps = (abs(val - a[i + 1]), abs(d1 - b[i + 1]), abs(d2 - 2.0 * c[i + 1]))
            worst_c2 = max(worst_c2, *gaps)
            assert max(gaps) <= 1.0e-9
        # Natural end conditions: zero curvature at both boundary knots.
        assert abs(c[0]) <= 1.0e-9
        assert abs(2.0 * c[-1] + 6.0 * d[-1] * h[-1]) <= 1.0e-9

        alpha = rng.uniform(-2.0, 2.0)
        beta = rng.uniform(-5.0, 5.0)
        lin = fit_cubic_spline(np.column_stack([t, alpha * t + beta]))
        probes = rng.uniform(t[0], t[-1], size=50)
        lin_err = float(np.abs(eval_spline(lin, probes) - (alpha * probes + beta)).max())
        worst_linear = max(worst_linear, lin_err)
        assert lin_err <= 1.0e-12
    _pass(2, f"1000 knot sets: interp {worst_interp:.2e}, "
             f"c2 gap {worst_c2:.2e}, linear {worst_linear:.2e}")


# ---------------------------------------------------------------------------
# 3. Tier boundaries, closed at both thresholds.


def test_criterion_03_tier_boundary_table():
    table = {
        -2.5: TIER_SIGNIFICANT,
        -2.0: TIER_SLIGHT,
        -1.5: TIER_SLIGHT,
        -1.0: TIER_ACCEPTABLE,
        0.0: TIER_ACCEPTABLE,
        1.0: TIER_ACCEPTABLE,
        1.5: TIER_SLIGHT,
        2.0: TIER_SLIGHT,
        2.5: TIER_SIGNIFICANT,
    }
    for z, expected in table.items():
        assert assess(z) == expected, f"assess({z})"
    # Just past the closed boundaries the tier must step up.
    assert assess(math.nextafter(1.0, 2.0)) == TIER_SLIGHT
    assert assess(math.nextafter(2.0, 3.0)) == TIER_SIGNIFICANT
    _pass(3, "nine-probe tier table exact, boundaries closed at 1.0 and 2.0")


# ---------------------------------------------------------------------------
# 4. Injected deviations come back as their own z and sort to the top.


def _random_profiles(rng, count, gs=50):
    grid = np.linspace(0.0, 59.0, gs)
    out = []
    for _ in range(count):
        fv = FeatureVector.from_array(rng.normal(10.0, 4.0, size=len(FEATURE_NAMES)))
        curves = {name: rng.normal(5.0, 2.0, size=gs) for name in SERIES_NAMES}
        out.append((fv, SeriesBundle(grid_samples=gs, release_sample=int(0.8 * gs),
                                     grid=grid, **curves)))
    return out


def test_criterion_04_injection_fidelity_and_ordering():
    rng = np.random.default_rng(404)
    baseline = build_baseline(_random_profiles(rng, 12), athlete_id="probe")
    assert not baseline.feature_floored.any()

    injections = [
        ("wrist_stability", 11.55),
        ("head_stability", 7.59),
        ("trunk_stability", 6.92),
        ("elbow_flexion_at_release", 3.0),
        ("release_phase_pct", 1.6),
        ("release_velocity", 0.5),
    ]
    arr = baseline.feature_mean.copy()
    for name, k in injections:
        i = FEATURE_NAMES.index(name)
        arr[i] = baseline.feature_mean[i] + k * baseline.feature_std[i]
    gs = baseline.grid_samples
    bundle = SeriesBundle(
        grid_samples=gs, release_sample=int(0.8 * gs),
        grid=np.linspace(0.0, 59.0, gs),
        **{name: baseline.series_mean[name].copy() for name in SERIES_NAMES},
    )
    report = diagnose_profile(FeatureVector.from_array(arr), bundle, baseline,
                              athlete_id="probe", throw_index=0)

    worst = 0.0
    for name, k in injections:
        z = report.entry(name).z
        worst = max(worst, abs(z - k))
        assert abs(z - k) <= 1.0e-9
    expected_tiers = [TIER_SIGNIFICANT, TIER_SIGNIFICANT, TIER_SIGNIFICANT,
                      TIER_SIGNIFICANT, TIER_SLIGHT, TIER_ACCEPTABLE]
    assert [e.target for e in report.entries[:6]] == [n for n, _ in injections]
    assert [e.tier for e in report.entries[:6]] == expected_tiers
    for e in report.entries[6:]:
        assert e.z == 0.0
    zs = [abs(e.z) for e in report.entries]
    assert zs == sorted(zs, reverse=True)

    text = render_report_text(
        report, generate_recommendations(report, default_rules())
    )
    dev_lines = [ln for ln in text.splitlines() if " z = " in ln and "(z =" not in ln]
    rendered = [(ln[2:34].strip(), float(ln.split(" z = ")[1].split()[0]))
                for ln in dev_lines]
    assert [t for t, _ in rendered[:6]] == [n for n, _ in injections]
    assert [abs(z) for _, z in rendered] == sorted(
        (abs(z) for _, z in rendered), reverse=True
    )
    _pass(4, f"six injected z recovered to {worst:.1e}, report descending")


# ---------------------------------------------------------------------------
# 5. Score monotonicity, the fixed-point value, and selection vs full sort.


def test_criterion_05_score_monotonicity_and_selection():
    dists = np.linspace(0.0, 20.0, 50)
    jerks = np.linspace(0.0, 1.0e-3, 50)
    S = np.array([[throw_score(d, j) for j in jerks] for d in dists])
    assert np.all(np.diff(S, axis=0) < 0.0)
    assert np.all(np.diff(S, axis=1) < 0.0)
    assert abs(throw_score(4.0, 0.0) - math.exp(-1.0)) <= 1.0e-12

    rng = np.random.default_rng(505)
    dist = np.round(rng.uniform(0.0, 25.0, size=200), 1)
    jerk = np.round(rng.uniform(0.0, 2.0e-3, size=200), 6)
    # Forty deliberate duplicates force exact score ties; the ordering
    # must then fall through distance to the throw index.
    for spot in range(40):
        dist[spot + 100] = dist[spot]
        jerk[spot + 100] = jerk[spot]
    order = rng.permutation(200)
    scored = [
        ScoredThrow(athlete_id="x", throw_index=int(i),
                    distance_cm=float(dist[i]), jerk=float(jerk[i]),
                    score=throw_score(float(dist[i]), float(jerk[i])))
        for i in order
    ]
    for cfg in (SelectionConfig(window=120, top_k=30), SelectionConfig()):
        pool = sorted(scored, key=lambda s: -s.throw_index)[: cfg.window]
        expect = sorted(
            pool, key=lambda s: (-s.score, s.distance_cm, s.throw_index)
        )[: cfg.top_k]
        assert select_top_k(scored, cfg) == expect
    _pass(5, "50x50 grid strictly monotone, e^-1 fixed point, "
             "selection equals full-sort oracle")


# ---------------------------------------------------------------------------
# 6. A 200-throw cohort fits a plausible, genuinely smoothed template.


def test_criterion_06_reference_band_on_cohort():
    t0 = time.perf_counter()
    cohort = gen_cohort(200, ThrowParams(athlete_id="band"), seed=66)
    records = [rec for rec, _ in cohort]
    ref = fit_reference(records)
    peak = peak_hand_speed(ref)
    assert 5.1 <= peak <= 5.5

    scored, skipped = score_throws(records)
    assert not skipped
    selected = select_top_k(scored)
    assert ref.source_throw_ids == tuple(s.throw_index for s in selected)
    by_index = {r.throw_index: r for r in records}
    trajs = []
    for s in selected:
        seq = by_index[s.throw_index].sequence
        trajs.append(resample_trajectory(seq, REFERENCE_JOINTS,
                                         find_release(seq).release_idx, 100))
    aset = align_trajectories(trajs, [s.distance_cm for s in selected],
                              [s.jerk for s in selected])
    template = weighted_template(aset, ref.distance_decay, 1.0e4)
    raw_jerk = jerk_functional(template)
    smooth_jerk = jerk_functional(ref.samples)
    assert smooth_jerk <= raw_jerk
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    _pass(6, f"peak hand speed {peak:.4f} m/s in [5.1, 5.5], "
             f"jerk {smooth_jerk:.3e} <= raw {raw_jerk:.3e}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 7. Decay optimization against a dense grid oracle.


def _grid_mse_oracle(aset: AlignedSet, jerk_scale: float, grid: np.ndarray):
    m = aset.n_members
    X = aset.trajectories.reshape(m, -1)
    G = X @ X.T
    raw = np.exp(-np.outer(grid, aset.distances_cm)) / np.sqrt(
        1.0 + jerk_scale * aset.jerks
    )[None, :]
    W = raw / raw.sum(axis=1, keepdims=True)
    A = W @ G
    vals = (np.trace(G) - 2.0 * A.sum(axis=1) + m * np.einsum("km,km->k", A, W))
    return vals / (aset.n_samples * len(aset.joints))


def test_criterion_07_decay_recovery_vs_grid():
    rng = np.random.default_rng(707)
    grid = np.linspace(0.0, 5.0, 100_000)
    worst_arg = 0.0
    worst_val = 0.0
    for _ in range(20):
        m = int(rng.integers(4, 10))
        # Member spread of a few centimeters, the scale real aligned
        # throws show; the golden bracket then costs well under 1e-9.
        base = rng.normal(scale=0.5, size=(1, 40, 2, 3))
        members = base + rng.normal(scale=0.03, size=(m, 40, 2, 3))
        aset = AlignedSet(
            trajectories=members,
            distances_cm=rng.uniform(0.0, 15.0, size=m),
            jerks=rng.uniform(0.0, 3.0e-4, size=m),
            joints=(8, 11),
            times=np.tile(np.linspace(0.0, 1.2, 40), (m, 1)),
            release_phases=np.full(m, 0.8),
        )
        a_opt, v_opt = optimize_weight_param(aset, 1.0e4)
        vals = _grid_mse_oracle(aset, 1.0e4, grid)
        gi = int(np.argmin(vals))
        # The oracle reuses only the algebra, not the search: spot-check it.
        assert abs(vals[gi] - template_mse(aset, float(grid[gi]), 1.0e4)) <= 1.0e-12
        worst_arg = max(worst_arg, abs(a_opt - grid[gi]))
        worst_val = max(worst_val, abs(v_opt - vals[gi]))
        assert abs(a_opt - grid[gi]) <= 1.0e-3
        assert abs(v_opt - vals[gi]) <= 1.0e-9
    _pass(7, f"20 sets: arg within {worst_arg:.2e}, value within {worst_val:.2e}")


# ---------------------------------------------------------------------------
# 8. Rendered scenes measured end to end, decoys rejected.


def test_criterion_08_vision_chain_on_rendered_scenes():
    rng = np.random.default_rng(88)
    scenes = []
    for s in range(50):
        radius = rng.uniform(2.0, 34.0)
        theta = rng.uniform(0.0, 2.0 * math.pi)
        offset = (radius * math.cos(theta), radius * math.sin(theta))
        H = random_camera_homography(rng)
        params = scene_for_landing(offset, decoy=(s % 4 == 0),
                                   homography=H, seed=1000 + s)
        scenes.append(render_board_scene(params))

    hits = 0
    worst = 0.0
    t0 = time.perf_counter()
    for pre, post, truth in scenes:
        calib = calibrate_board(pre, 4, 3, 20.0)
        meas = score_board(pre, post, calib)
        err = math.hypot(meas.dx_mm - truth.landing_offset_mm[0],
                         meas.dy_mm - truth.landing_offset_mm[1])
        worst = max(worst, err)
        if err <= 2.0:
            hits += 1
        if truth.decoy_center is not None:
            to_rect = lambda p: apply_homography(
                calib.homography, apply_homography(truth.homography, [p])
            )[0]
            center = np.asarray(meas.center_px)
            assert np.linalg.norm(center - to_rect(truth.center)) <= 5.0
            assert np.linalg.norm(center - to_rect(truth.decoy_center)) > 50.0
    elapsed = time.perf_counter() - t0
    assert hits >= 48
    assert elapsed < 60.0
    _pass(8, f"{hits}/50 within 2 mm (worst {worst:.3f} mm), "
             f"all 13 decoys rejected, chain {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 9. Same inputs, two independent store runs, identical bytes out.


def test_criterion_09_pipeline_determinism(tmp_path):
    sim = tmp_path / "sim"
    assert cli_main(["simulate", "--out", str(sim), "--throws", "12",
                     "--seed", "7", "--athlete", "ana"]) == 0
    logs = sorted(str(p) for p in sim.glob("throw_*.log"))
    outputs = []
    for tag in ("a", "b"):
        store = tmp_path / f"store_{tag}"
        out = tmp_path / f"out_{tag}"
        assert cli_main(["ingest", "--store", str(store), "--athlete", "ana",
                         *logs]) == 0
        assert cli_main(["fit", "--store", str(store), "--athlete", "ana"]) == 0
        assert cli_main(["diagnose", "--store", str(store), "--athlete", "ana",
                         "--throw", "5", "--out", str(out)]) == 0
        assert cli_main(["report", "--store", str(store), "--athlete", "ana",
                         "--out", str(out)]) == 0
        outputs.append({
            "index": (store / "ana" / "index.tsv").read_bytes(),
            "reference": (store / "ana" / "reference.log").read_bytes(),
            "provenance":
                (store / "ana" / "reference.log.provenance.json").read_bytes(),
            "diag_txt": (out / "diagnosis_ana_0005.txt").read_bytes(),
            "diag_tsv": (out / "diagnosis_ana_0005.tsv").read_bytes(),
            "scores": (out / "scores_ana.tsv").read_bytes(),
            "selection": (out / "selection_ana.tsv").read_bytes(),
            "report": (out / "report_ana.txt").read_bytes(),
        })
    assert outputs[0] == outputs[1]
    _pass(9, f"{len(outputs[0])} artifacts byte-identical across two store runs")


# ---------------------------------------------------------------------------
# 10. Rigid-motion, rotation, and frame-rate invariances.


def test_criterion_10_invariance_suite():
    cohort = gen_cohort(100, ThrowParams(athlete_id="inv"), seed=909)
    rng = np.random.default_rng(1010)
    yaw_cols = (FEATURE_NAMES.index("trunk_yaw_at_release"),
                FEATURE_NAMES.index("mean_trunk_yaw"))
    worst_feat = 0.0
    worst_jerk = 0.0
    worst_speed = 0.0
    for rec, _ in cohort:
        seq = rec.sequence
        phi = float(rng.uniform(-60.0, 60.0))
        R = yaw_matrix(phi)
        shift = rng.uniform(-1.0, 1.0, size=3)
        moved = transform_sequence(seq, rotation=R, translation=shift)
        target = R @ np.array([0.0, 0.0, 1.0])
        f_base = extract_features(seq).as_array()
        f_moved = extract_features(moved, target_dir=target).as_array()
        diff = f_moved - f_base
        for i in range(len(FEATURE_NAMES)):
            if i in yaw_cols:
                # World-frame trunk yaw follows the rotation itself.
                err = abs(diff[i] - phi)
            else:
                err = abs(diff[i])
            worst_feat = max(worst_feat, err)
            assert err <= 1.0e-6, FEATURE_NAMES[i]

        tip = seq.joint_track(Joint.HAND_TIP_RIGHT)
        axis = rng.normal(size=3)
        Rg = rotation_matrix(axis, float(rng.uniform(0.0, 360.0)))
        j1 = jerk_metric(tip)
        j2 = jerk_metric(tip @ Rg.T)
        jerr = abs(j2 - j1) / max(j1, 1.0e-30)
        worst_jerk = max(worst_jerk, jerr)
        assert jerr <= 1.0e-9

        doubled = upsample_midpoint(seq)
        s1 = find_release(seq).release_speed
        s2 = find_release(doubled).release_speed
        serr = abs(s2 - s1) / s1
        worst_speed = max(worst_speed, serr)
        assert serr <= 1.0e-3
    _pass(10, f"100 throws: features {worst_feat:.1e}, jerk {worst_jerk:.1e}, "
              f"release speed {worst_speed:.1e}")
