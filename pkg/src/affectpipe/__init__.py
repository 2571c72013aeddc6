"""Continuous infant affect classification from facial and body landmarks.

The pipeline runs landmark ingestion, 0.25 s binning, normalization into
four feature groups, dual-window temporal aggregation, Welch-t feature
selection, a grouped-branch neural classifier with joint and late fusion,
and subject-disjoint cross-validated evaluation with accuracy-over-time
curves. A seeded synthetic session generator provides ground truth for
verification at desk scale.
"""

from .core import (
    AffectLabel,
    Bin,
    BIN_WIDTH_S,
    CONFIDENCE_THRESHOLD,
    FrameRecord,
    Modality,
    Session,
    bin_frames,
    map_label,
)
from .errors import AffectPipeError
from .evaluate import (
    CvResult,
    FoldAssignment,
    PredictionTrace,
    TemporalCurve,
    auc,
    confidence_interval_95,
    run_cv,
    run_cv_multi,
    stratified_subject_folds,
    tsat_curve,
    tspt_curve,
)
from .ingest import (
    DatasetManifest,
    ManifestEntry,
    load_dataset,
    load_manifest,
    load_session,
    parse_frames,
    parse_labels,
    write_session,
)
from .model import (
    GroupedModel,
    PcaResult,
    TrainConfig,
    forward,
    late_fuse,
    load_model,
    pca_embed,
    save_model,
    train,
    weighted_bce,
)
from .preprocess import (
    BinFeatures,
    FeatureGroupId,
    center_landmarks,
    compute_bin_features,
    landmark_speeds,
    pairwise_distances,
    scale_landmarks,
)
from .select import (
    FeatureSelection,
    select_top_k,
    t_sf_two_sided,
    welch_t,
)
from .synth import (
    EffectSizes,
    GroundTruth,
    OcclusionConfig,
    SynthConfig,
    generate_dataset,
    generate_session,
)
from .windows import (
    WindowConfig,
    WindowedSample,
    aggregate_window,
    build_samples,
    partition,
    window_success,
)

__version__ = "0.1.0"
