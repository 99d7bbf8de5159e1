"""Context-less DGA detection toolkit.

Classifies single domain names (no traffic context) as benign, a known DGA
family, or NEW_DGA, using a residual character-level convnet plus several
rejection mechanisms: induced per-class regexes, softmax-confidence
thresholds, family-vector centroids, and one-class anomaly models over
intermediate feature taps. Includes a LOGO evaluation harness, new-family
clustering, class-incremental adaptation, a CLI, and an HTTP service.
"""

from .domain import (
    CharVocab,
    DomainError,
    DomainName,
    encode_domain,
    extract_contextless,
    parse_domain,
    shannon_entropy,
)
from .synth import (
    BENIGN_LABEL,
    DatasetConfig,
    FamilySpec,
    LabeledSample,
    archetype_catalog,
    build_dataset,
    make_logo_runs,
    separable_catalog,
)
from .net import (
    NetBundle,
    NetConfig,
    TrainConfig,
    load_bundle,
    penultimate_tap,
    save_bundle,
    tap_registry,
    train_net,
)
from .detectors import NEW_DGA, Verdict, refit_artifacts
from .evaluate import (
    EvalReport,
    EvalSettings,
    MetricRow,
    classify_with_artifacts,
    compute_loc_metrics,
    compute_macro_metrics,
    run_logo_eval,
)
from .cluster import ClusterReport, XMeansConfig, refine_clusters, xmeans_cluster

__version__ = "0.1.0"

__all__ = [
    "BENIGN_LABEL",
    "CharVocab",
    "ClusterReport",
    "DatasetConfig",
    "DomainError",
    "DomainName",
    "EvalReport",
    "EvalSettings",
    "FamilySpec",
    "LabeledSample",
    "MetricRow",
    "NEW_DGA",
    "NetBundle",
    "NetConfig",
    "TrainConfig",
    "Verdict",
    "XMeansConfig",
    "archetype_catalog",
    "build_dataset",
    "classify_with_artifacts",
    "compute_loc_metrics",
    "compute_macro_metrics",
    "encode_domain",
    "extract_contextless",
    "load_bundle",
    "make_logo_runs",
    "parse_domain",
    "penultimate_tap",
    "refine_clusters",
    "refit_artifacts",
    "run_logo_eval",
    "save_bundle",
    "separable_catalog",
    "shannon_entropy",
    "tap_registry",
    "train_net",
    "xmeans_cluster",
]
