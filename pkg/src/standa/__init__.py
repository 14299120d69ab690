"""Anomaly detection after domain adaptation, with selectively valid p-values.

The package tests anomalies flagged by an autoencoder's reconstruction error
on domain-adapted representations. Because the hypotheses are chosen by the
same data, classical p-values break; here each detected anomaly gets an
exact truncated-normal p-value conditioned on the selection event, computed
by propagating the data line through the piecewise-linear network and
assembling the feasible region window by window.
"""

from .datamodel import (
    CovarianceSpec,
    DataPair,
    mat_rows,
    sample_matrix_normal,
    sigma_times,
    vec_rows,
)
from .engine import (
    AffineTriple,
    PatternAbortError,
    PipelineEngine,
    affine_add_bias,
    affine_matmul,
    conditioned_forward,
    si_relu,
)
from .events import (
    LinearConstraintSet,
    ad_event_constraints,
    sign_event_constraints,
    solve_constraints,
)
from .gauss import RegionMassError, truncated_two_sided_p
from .inference import (
    InferenceReport,
    NuisanceLine,
    ScanResult,
    TestDirection,
    bonferroni_p,
    build_eta,
    divide_and_conquer,
    infer_anomaly,
    naive_p,
    nuisance_line,
    selective_p,
    stand_da,
    stand_da_oc,
)
from .intervals import Interval, IntervalSet
from .network import (
    Affine,
    BundleFormatError,
    DetectionResult,
    ModelBundle,
    PiecewiseLinearNetwork,
    ReLU,
    detect,
    detect_anomalies,
    detect_from_errors,
    forward,
    load_bundle,
    reconstruction_errors,
    save_bundle,
)

__version__ = "0.1.0"

__all__ = [
    "Affine",
    "AffineTriple",
    "BundleFormatError",
    "CovarianceSpec",
    "DataPair",
    "DetectionResult",
    "InferenceReport",
    "Interval",
    "IntervalSet",
    "LinearConstraintSet",
    "ModelBundle",
    "NuisanceLine",
    "PatternAbortError",
    "PiecewiseLinearNetwork",
    "PipelineEngine",
    "ReLU",
    "RegionMassError",
    "ScanResult",
    "TestDirection",
    "ad_event_constraints",
    "affine_add_bias",
    "affine_matmul",
    "bonferroni_p",
    "build_eta",
    "conditioned_forward",
    "detect",
    "detect_anomalies",
    "detect_from_errors",
    "divide_and_conquer",
    "forward",
    "infer_anomaly",
    "load_bundle",
    "mat_rows",
    "naive_p",
    "nuisance_line",
    "reconstruction_errors",
    "sample_matrix_normal",
    "save_bundle",
    "selective_p",
    "si_relu",
    "sigma_times",
    "sign_event_constraints",
    "solve_constraints",
    "stand_da",
    "stand_da_oc",
    "truncated_two_sided_p",
    "vec_rows",
]
