"""Sensor-fingerprint toolkit.

Extracts PRNU fingerprints from images, estimates the brightness-dependent
gain the camera's transfer curve imprints on them, recovers that transfer
curve, and runs crop-search device-identification experiments with PCE
detection, all validated against a synthetic sensor simulator.
"""

__version__ = "0.1.0"

from .detection import CorrelationPlane, DetectionScore, align_and_score, ncc_surface, pce
from .emphasis import (
    EmphasisCurve,
    EstimationError,
    PhiMatrix,
    iterate_emphasis,
    load_curve,
    rank1_emphasis,
    regressogram_1d,
    regressogram_2d,
    save_curve,
    symmetrize,
)
from .experiment import (
    ExperimentConfig,
    ExperimentResult,
    RocCurve,
    emphasis_bands,
    roc_points,
    run_device_id,
    tpr_at_fpr,
)
from .fingerprint import (
    FingerprintEstimate,
    estimate_fingerprint,
    load_fingerprint,
    save_fingerprint,
    weight_eval,
)
from .ingest import ingest, load_residual_cache
from .plane import PlaneError, as_plane, load_image, read_plane, save_image, write_plane
from .preprocess import (
    DenoiseParams,
    ResidualPair,
    denoise,
    extract_residual,
    rgb_to_gray,
    wiener_dft,
    zero_mean,
)
from .simulate import (
    Capture,
    PrnuPattern,
    TransferError,
    TransferSpec,
    eval_transfer,
    flat_scene,
    make_prnu,
    simulate_capture,
    smooth_scene,
    true_emphasis,
)
from .transfer import TransferCurve, gamma_linearity_score, load_transfer, recover_transfer, save_transfer

__all__ = [
    "CorrelationPlane",
    "DetectionScore",
    "align_and_score",
    "ncc_surface",
    "pce",
    "EmphasisCurve",
    "EstimationError",
    "PhiMatrix",
    "iterate_emphasis",
    "load_curve",
    "rank1_emphasis",
    "regressogram_1d",
    "regressogram_2d",
    "save_curve",
    "symmetrize",
    "ExperimentConfig",
    "ExperimentResult",
    "RocCurve",
    "emphasis_bands",
    "roc_points",
    "run_device_id",
    "tpr_at_fpr",
    "FingerprintEstimate",
    "estimate_fingerprint",
    "load_fingerprint",
    "save_fingerprint",
    "weight_eval",
    "ingest",
    "load_residual_cache",
    "PlaneError",
    "as_plane",
    "load_image",
    "read_plane",
    "save_image",
    "write_plane",
    "DenoiseParams",
    "ResidualPair",
    "denoise",
    "extract_residual",
    "rgb_to_gray",
    "wiener_dft",
    "zero_mean",
    "Capture",
    "PrnuPattern",
    "TransferError",
    "TransferSpec",
    "eval_transfer",
    "flat_scene",
    "make_prnu",
    "simulate_capture",
    "smooth_scene",
    "true_emphasis",
    "TransferCurve",
    "gamma_linearity_score",
    "load_transfer",
    "recover_transfer",
    "save_transfer",
]
