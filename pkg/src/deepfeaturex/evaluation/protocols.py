"""Scoring a fusion model on test manifests, JPEG sweeps and generalization benches."""

from __future__ import annotations

import json
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

from ..data.images import jpeg_corpus, load_images
from ..data.manifest import ClassLabel, Manifest
from ..errors import EmptyBench, EmptyTestSet
from .metrics import (
    BINARY_NAMES,
    MetricsReport,
    Mode,
    collapse_binary,
    collapse_labels,
    confusion_matrix,
    metrics_from_confusion,
)
from .reports import GeneralizationReport, RobustnessReport

if TYPE_CHECKING:
    from ..fusion import FusionModel

REFERENCE_QFS = (90, 80, 70, 60, 50)


def score(fm: FusionModel, m: Manifest, chunk: int = 64, log_path: str | Path | None = None) -> list[ClassLabel]:
    """Predicted class per record, in manifest order."""
    # fusion imports basemodel, which imports this package
    from ..fusion import predict_batch

    preds: list[ClassLabel] = []
    log = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for s in range(0, len(m), chunk):
            recs = m.records[s:s + chunk]
            labels, probs = predict_batch(fm, load_images([r.path for r in recs], fm.input_size))
            preds.extend(labels)
            if log:
                for r, y, p in zip(recs, labels, probs):
                    log.write(
                        json.dumps(
                            {"path": r.path, "label": r.label.tag, "prediction": y.tag, "probabilities": [float(v) for v in p]}
                        )
                        + "\n"
                    )
    finally:
        if log:
            log.close()
    return preds


def evaluate(
    fm: FusionModel,
    test: Manifest,
    setting: str = "raw",
    log_path: str | Path | None = None,
) -> tuple[MetricsReport, MetricsReport]:
    """(multiclass, binary) metrics; binary collapses GAN and DM into FAKE."""
    if len(test) == 0:
        raise EmptyTestSet("empty test manifest")
    preds = score(fm, test, log_path=log_path)
    cm = confusion_matrix(preds, [r.label for r in test])
    multi = metrics_from_confusion(cm, Mode.MULTICLASS, setting)
    binary = metrics_from_confusion(collapse_binary(cm), Mode.BINARY, setting)
    return multi, binary


def robustness_sweep(
    fm: FusionModel,
    test: Manifest,
    qf_list: Sequence[int] = REFERENCE_QFS,
    workdir: str | Path = "jpeg",
) -> RobustnessReport:
    """Raw row first, then one row per QF in descending order."""
    report = RobustnessReport()
    report.rows["raw"] = evaluate(fm, test, "raw")
    qfs = sorted({int(q) for q in qf_list}, reverse=True)
    if qfs:
        corpora = jpeg_corpus(test, qfs, workdir)
        for q in qfs:
            report.rows[f"qf{q}"] = evaluate(fm, corpora[q], f"qf{q}")
    return report


def binary_from_predictions(preds: Sequence, labels: Sequence, setting: str = "") -> MetricsReport:
    cm = confusion_matrix(collapse_labels(preds), collapse_labels(labels), classes=BINARY_NAMES)
    return metrics_from_confusion(cm, Mode.BINARY, setting)


def generalization_eval(
    fm: FusionModel,
    benches: Sequence[tuple[str, Manifest]],
    model_name: str = "model",
) -> GeneralizationReport:
    """Binary real-vs-fake scoring per bench; one accuracy cell per bench."""
    for name, m in benches:
        labels = [r.label for r in m]
        if ClassLabel.REAL not in labels or all(y == ClassLabel.REAL for y in labels):
            raise EmptyBench(f"bench {name} needs both real and fake images")
    report = GeneralizationReport(model_name)
    for name, m in benches:
        preds = score(fm, m)
        report.benches[name] = binary_from_predictions(preds, [r.label for r in m], name)
    return report
