"""Bridge from fitted scikit-learn classifiers to the model exchange format."""

from .export import (
    DEFAULT_ACC_BITS,
    DEFAULT_SCALE_SHIFT,
    DEFAULT_VALUE_BITS,
    ExportError,
    ExportJob,
    export_model,
    fit_ranges,
    quantize_threshold,
    to_document,
)

__all__ = [
    "DEFAULT_ACC_BITS",
    "DEFAULT_SCALE_SHIFT",
    "DEFAULT_VALUE_BITS",
    "ExportError",
    "ExportJob",
    "export_model",
    "fit_ranges",
    "quantize_threshold",
    "to_document",
]
