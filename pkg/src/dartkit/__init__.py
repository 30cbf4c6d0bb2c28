"""Dart-throw training analysis toolkit.

Turns recorded 25-joint skeleton sequences and dartboard photographs
into kinematic feature profiles, individualized smoothed reference
trajectories built from an athlete's best throws, and tiered z-score
reports with rule-driven coaching recommendations.
"""

from .skeleton import (
    Joint,
    JointCountError,
    MalformedRowError,
    NonFiniteError,
    NonMonotoneError,
    REFERENCE_JOINTS,
    SkeletonFrame,
    SkeletonSequence,
    ThrowLogError,
    ThrowRecord,
    TimebaseError,
    fit_cubic_spline,
    load_sequence,
    load_throw,
    mirror_sequence,
    resample_trajectory,
    save_sequence,
    save_throw,
)
from .features import (
    FEATURE_NAMES,
    FeatureVector,
    ReleaseInfo,
    SERIES_NAMES,
    SeriesBundle,
    extract_features,
    find_release,
    throw_profile,
)
from .scoring import (
    ScoredThrow,
    SelectionConfig,
    jerk_metric,
    landing_distance_cm,
    read_score_table,
    score_throw,
    score_throws,
    select_top_k,
    throw_score,
    write_score_table,
)
from .reference import (
    AlignedSet,
    InsufficientDataError,
    ReferenceTrajectory,
    align_trajectories,
    fit_reference,
    jerk_functional,
    load_reference,
    min_jerk_smooth,
    optimize_weight_param,
    peak_hand_speed,
    save_reference,
)
from .diagnostics import (
    Baseline,
    Recommendation,
    ReportEntry,
    Rule,
    RuleCoverageError,
    RuleTable,
    ZReport,
    build_baseline,
    default_rules,
    diagnose_profile,
    generate_recommendations,
    load_rules,
    render_report_text,
    write_report_tsv,
    zscore,
)
from .board import (
    BullseyeDetection,
    CalibrationRecord,
    DetectionError,
    LandingMeasurement,
    TipDetection,
    calibrate_board,
    dart_mask,
    detect_bullseye,
    find_chessboard_corners,
    landing_offset_mm,
    largest_contour,
    load_calibration,
    locate_tip,
    min_enclosing_circle,
    morph_close,
    read_image,
    rgb_to_hsv,
    save_calibration,
    score_board,
    solve_homography,
    warp_perspective,
    write_image,
)

__version__ = "0.1.0"
