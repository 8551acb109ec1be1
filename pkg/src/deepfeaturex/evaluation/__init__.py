from .metrics import (
    BINARY_NAMES,
    MULTICLASS_NAMES,
    ConfusionMatrix,
    MetricsReport,
    Mode,
    collapse_binary,
    collapse_labels,
    confusion_matrix,
    metrics_from_confusion,
)
from .protocols import REFERENCE_QFS, binary_from_predictions, evaluate, generalization_eval, robustness_sweep, score
from .reports import CSV_HEADER, GeneralizationReport, RobustnessReport, emit_report, from_json, to_csv, to_json, to_markdown

__all__ = [
    "BINARY_NAMES",
    "CSV_HEADER",
    "MULTICLASS_NAMES",
    "REFERENCE_QFS",
    "ConfusionMatrix",
    "GeneralizationReport",
    "MetricsReport",
    "Mode",
    "RobustnessReport",
    "binary_from_predictions",
    "collapse_binary",
    "collapse_labels",
    "confusion_matrix",
    "emit_report",
    "evaluate",
    "from_json",
    "generalization_eval",
    "metrics_from_confusion",
    "robustness_sweep",
    "score",
    "to_csv",
    "to_json",
    "to_markdown",
]
