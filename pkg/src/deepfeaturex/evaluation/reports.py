"""Report containers and their JSON / CSV / Markdown serialization."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from ..errors import IoFailure, ValidationError
from .metrics import MetricsReport, Mode

CSV_HEADER = ("setting", "mode", "accuracy", "recall", "precision", "f1", "n")
AVERAGING_NOTE = "multiclass recall/precision/F1 are macro averages; binary metrics use FAKE as positive"


@dataclass
class RobustnessReport:
    """Rows keyed by setting ("raw", "qf90", ...), each a (multiclass, binary) pair."""

    rows: dict[str, tuple[MetricsReport, MetricsReport]] = field(default_factory=dict)

    def metrics(self) -> list[MetricsReport]:
        return [m for pair in self.rows.values() for m in pair]


@dataclass
class GeneralizationReport:
    """One binary MetricsReport per benchmark, in the order scored."""

    model: str = "model"
    benches: dict[str, MetricsReport] = field(default_factory=dict)

    def metrics(self) -> list[MetricsReport]:
        return list(self.benches.values())


Report = MetricsReport | RobustnessReport | GeneralizationReport | Sequence[MetricsReport]


def _metrics(report) -> list[MetricsReport]:
    if isinstance(report, MetricsReport):
        return [report]
    if isinstance(report, (RobustnessReport, GeneralizationReport)):
        return report.metrics()
    return list(report)


def _kind(report) -> str:
    if isinstance(report, RobustnessReport):
        return "robustness"
    if isinstance(report, GeneralizationReport):
        return "generalization"
    return "metrics"


def to_json(report) -> str:
    doc = {"kind": _kind(report), "averaging": AVERAGING_NOTE, "rows": [m.to_dict() for m in _metrics(report)]}
    if isinstance(report, GeneralizationReport):
        doc["model"] = report.model
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def from_json(text: str):
    doc = json.loads(text)
    rows = [MetricsReport.from_dict(d) for d in doc["rows"]]
    kind = doc.get("kind", "metrics")
    if kind == "robustness":
        out = RobustnessReport()
        for i in range(0, len(rows), 2):
            out.rows[rows[i].setting] = (rows[i], rows[i + 1])
        return out
    if kind == "generalization":
        return GeneralizationReport(doc.get("model", "model"), {m.setting: m for m in rows})
    return rows


def to_csv(report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for m in _metrics(report):
        w.writerow([m.setting, m.mode.value, repr(m.accuracy), repr(m.recall), repr(m.precision), repr(m.f1), m.n])
    return buf.getvalue()


def _pct(x: float) -> str:
    return f"{100 * x:.2f}"


def to_markdown(report) -> str:
    """Settings as columns, percentages in cells."""
    lines = [f"<!-- {AVERAGING_NOTE} -->"]
    if isinstance(report, RobustnessReport):
        settings = list(report.rows)
        lines.append("| | " + " | ".join(s.upper() for s in settings) + " |")
        lines.append("|---|" + "---|" * len(settings))
        for idx, name in ((0, "Multi-class Acc / F1 (%)"), (1, "Binary Acc / F1 (%)")):
            cells = [f"{_pct(report.rows[s][idx].accuracy)}/{_pct(report.rows[s][idx].f1)}" for s in settings]
            lines.append(f"| {name} | " + " | ".join(cells) + " |")
    elif isinstance(report, GeneralizationReport):
        names = list(report.benches)
        lines.append("| | " + " | ".join(names) + " |")
        lines.append("|---|" + "---|" * len(names))
        lines.append(f"| {report.model} | " + " | ".join(_pct(report.benches[n].accuracy) for n in names) + " |")
    else:
        rows = _metrics(report)
        lines.append("| | " + " | ".join(m.setting for m in rows) + " |")
        lines.append("|---|" + "---|" * len(rows))
        for attr in ("accuracy", "recall", "precision", "f1"):
            lines.append(f"| {attr} (%) | " + " | ".join(_pct(getattr(m, attr)) for m in rows) + " |")
    return "\n".join(lines) + "\n"


FORMATS = {"json": to_json, "csv": to_csv, "markdown": to_markdown, "md": to_markdown}


def emit_report(report, fmt: str, path: str | Path) -> Path:
    if fmt not in FORMATS:
        raise ValidationError(f"unknown report format {fmt!r}")
    for m in _metrics(report):
        if not all(math.isfinite(v) for v in (m.accuracy, m.recall, m.precision, m.f1)):
            raise ValidationError(f"report row {m.setting} has non-finite metrics")
    text = FORMATS[fmt](report)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write report {path}: {exc}") from exc
    return path
