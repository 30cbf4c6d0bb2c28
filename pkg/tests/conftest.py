"""Shared builders for the test suite."""

import numpy as np

from dartkit.skeleton import N_JOINTS, SkeletonSequence


def sequence_with_tracks(tracks, T, fps=30.0, fill=0.0):
    """Sequence where each joint in `tracks` follows its (T, 3) path and
    every other joint holds still at `fill`."""
    joints = np.full((T, N_JOINTS, 3), float(fill))
    for j, track in tracks.items():
        joints[:, int(j), :] = np.asarray(track, dtype=float)
    return SkeletonSequence(fps, np.arange(T, dtype=float) / fps, joints)


def random_sequence(rng, T=24, fps=30.0, scale=0.5):
    joints = rng.normal(0.0, scale, size=(T, N_JOINTS, 3))
    return SkeletonSequence(fps, np.arange(T, dtype=float) / fps, joints)


def base_pose_sequence(tracks, T, fps=30.0):
    """Standing-pose sequence with selected joints overridden; keeps the
    trunk and shoulder geometry valid for angle extraction."""
    from dartkit.synth import BASE_POSE

    joints = np.broadcast_to(BASE_POSE, (T, N_JOINTS, 3)).copy()
    for j, track in tracks.items():
        joints[:, int(j), :] = np.asarray(track, dtype=float)
    return SkeletonSequence(fps, np.arange(T, dtype=float) / fps, joints)


# ---------------------------------------------------------------------------
# Acceptance scorecard: tests append lines, the summary prints them after
# the run so the margins survive output capture.

_scorecard_lines = []


def pytest_configure(config):
    _scorecard_lines.clear()


def scorecard(line: str) -> None:
    _scorecard_lines.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _scorecard_lines:
        terminalreporter.section("acceptance scorecard")
        for line in _scorecard_lines:
            terminalreporter.write_line(line)
