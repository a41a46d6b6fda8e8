"""One-class SVM change-point detection for run-to-failure time series."""

from ._core import (
    CalibrationError,
    ConvergenceError,
    DataError,
    Model,
    calibrate,
    de_minimize,
    detect,
    generate_synthetic,
    infer_change_point,
    log_loss,
    qp_reference_solve,
    rbf_kernel,
    smooth_labels,
    train_ocsvm,
)

__all__ = [
    "CalibrationError",
    "ConvergenceError",
    "DataError",
    "Model",
    "calibrate",
    "de_minimize",
    "detect",
    "generate_synthetic",
    "infer_change_point",
    "log_loss",
    "qp_reference_solve",
    "rbf_kernel",
    "smooth_labels",
    "train_ocsvm",
]
__version__ = "0.1.0"
