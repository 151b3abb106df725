"""GNSS spoofing detection: LSTM shift prediction and DTW turn matching."""

from ._core import (
    Error,
    compute_threshold,
    config_hash,
    default_config,
    detect,
    dtw,
    haversine_distance,
    knn_classify,
    load_trace,
    model_info,
    predict_shift,
    simulate,
)

__all__ = [
    "Error",
    "compute_threshold",
    "config_hash",
    "default_config",
    "detect",
    "dtw",
    "haversine_distance",
    "knn_classify",
    "load_trace",
    "model_info",
    "predict_shift",
    "simulate",
]
