"""From baseline to a readable deviation report.

Builds a baseline from a cohort's top throws, then diagnoses a probe
throw with two planted flaws: a slow release and an unstable wrist.
"""

import numpy as np

from dartkit.diagnostics import (
    build_baseline,
    default_rules,
    diagnose_profile,
    generate_recommendations,
    render_report_text,
)
from dartkit.features import FEATURE_NAMES, FeatureVector, SERIES_NAMES, SeriesBundle, throw_profile
from dartkit.scoring import score_throws, select_top_k
from dartkit.synth import ThrowParams, gen_cohort


def main():
    cohort = gen_cohort(30, ThrowParams(athlete_id="demo"), seed=44)
    records = {rec.throw_index: rec for rec, _ in cohort}

    scored, _ = score_throws(records.values())
    selected = select_top_k(scored)
    profiles = []
    for s in selected:
        fv, bundle, _ = throw_profile(records[s.throw_index])
        profiles.append((fv, bundle))
    baseline = build_baseline(profiles, athlete_id="demo")
    print(f"baseline over {baseline.k_used} throws, "
          f"{int(baseline.feature_floored.sum())} floored features")

    # Probe: take the baseline means and push two features off target.
    arr = baseline.feature_mean.copy()
    for name, k in (("release_velocity", -2.6), ("wrist_stability", 3.4)):
        i = FEATURE_NAMES.index(name)
        arr[i] += k * baseline.feature_std[i]
    gs = baseline.grid_samples
    bundle = SeriesBundle(
        grid_samples=gs,
        release_sample=profiles[0][1].release_sample,
        grid=profiles[0][1].grid.copy(),
        **{name: baseline.series_mean[name].copy() for name in SERIES_NAMES},
    )
    report = diagnose_profile(FeatureVector.from_array(arr), bundle, baseline,
                              athlete_id="demo", throw_index=31)

    recs = generate_recommendations(report, default_rules())
    print()
    print(render_report_text(report, recs))


if __name__ == "__main__":
    main()
