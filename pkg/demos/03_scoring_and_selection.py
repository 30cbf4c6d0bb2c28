"""How throws are scored and which ones make the cut.

Scores a 40-throw cohort, walks the score formula on two contrasting
throws, and shows the recency window interacting with top-k selection.
"""

import numpy as np

from dartkit.scoring import (
    SelectionConfig,
    landing_distance_cm,
    score_throws,
    select_top_k,
    throw_score,
)
from dartkit.synth import ThrowParams, gen_cohort


def main():
    cohort = gen_cohort(40, ThrowParams(athlete_id="demo"), seed=21)
    records = [rec for rec, _ in cohort]
    scored, skipped = score_throws(records)
    assert not skipped

    by_score = sorted(scored, key=lambda s: -s.score)
    best, worst = by_score[0], by_score[-1]
    print("score = exp(-a * distance_cm) / sqrt(1 + b * jerk), "
          "a=0.25, b=1e4\n")
    for label, s in (("best", best), ("worst", worst)):
        print(f"{label}: throw {s.throw_index}, "
              f"distance {s.distance_cm:.2f} cm, jerk {s.jerk:.3e} "
              f"-> score {s.score:.5f}")
    print(f"\nsame distance, zero jerk, for comparison: "
          f"{throw_score(best.distance_cm, 0.0):.5f}")
    print(f"a 2 cm miss alone costs a factor {np.exp(-0.25 * 2.0):.3f}")

    # Selection: only the most recent `window` throws compete, then the
    # best top_k of those survive.
    cfg = SelectionConfig(window=20, top_k=5)
    kept = select_top_k(scored, cfg)
    print(f"\nwindow={cfg.window}, top_k={cfg.top_k}:")
    print(f"{'throw':>6} {'dist_cm':>8} {'jerk':>10} {'score':>8}")
    for s in kept:
        print(f"{s.throw_index:>6} {s.distance_cm:>8.2f} "
              f"{s.jerk:>10.3e} {s.score:>8.5f}")
    eligible = {s.throw_index for s in scored if s.throw_index >= 20}
    assert all(s.throw_index in eligible for s in kept)
    print("note: every selected throw comes from the 20 most recent; an "
          "older throw with a higher score was not eligible.")

    offsets = [(5.0, 0.0), (30.0, 40.0)]
    print("\nlanding offsets to distances: " + ", ".join(
        f"{o} mm -> {landing_distance_cm(o):.1f} cm" for o in offsets))


if __name__ == "__main__":
    main()
