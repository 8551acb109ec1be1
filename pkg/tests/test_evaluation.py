from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from conftest import synthetic_manifest
from oracles import brute_force_metrics
from deepfeaturex.data import ClassLabel, Manifest, balance_eval_set
from deepfeaturex.errors import EmptyBench, EmptyMatrix, EmptyTestSet, LengthMismatch, ValidationError, WrongShape
from deepfeaturex.evaluation import (
    CSV_HEADER,
    ConfusionMatrix,
    GeneralizationReport,
    MetricsReport,
    Mode,
    RobustnessReport,
    collapse_binary,
    collapse_labels,
    confusion_matrix,
    emit_report,
    evaluate,
    from_json,
    generalization_eval,
    metrics_from_confusion,
    robustness_sweep,
    to_csv,
    to_json,
    to_markdown,
)

REAL, GAN, DM = ClassLabel.REAL, ClassLabel.GAN, ClassLabel.DM
BINARY = ("real", "fake")


def test_confusion_perfect_and_tally():
    labels = [REAL, GAN, DM, DM]
    assert np.array_equal(confusion_matrix(labels, labels).counts, np.diag([1, 1, 2]))
    cm = confusion_matrix([GAN, GAN, REAL], [DM, GAN, REAL])
    assert cm.counts[DM, GAN] == 1 and cm.counts[GAN, GAN] == 1 and cm.counts[REAL, REAL] == 1
    assert cm.total == 3


def test_confusion_matches_double_loop(rng):
    preds, labels = rng.integers(0, 3, 1000).tolist(), rng.integers(0, 3, 1000).tolist()
    naive = [[0] * 3 for _ in range(3)]
    for p, y in zip(preds, labels):
        naive[y][p] += 1
    assert confusion_matrix(preds, labels).counts.tolist() == naive


def test_confusion_guards():
    with pytest.raises(LengthMismatch):
        confusion_matrix([0, 1], [0])
    with pytest.raises(EmptyMatrix):
        confusion_matrix([], [])
    with pytest.raises(WrongShape):
        ConfusionMatrix(np.zeros((2, 2)))
    with pytest.raises(ValidationError):
        ConfusionMatrix(-np.ones((3, 3)))


def test_metrics_worked_example():
    cm = ConfusionMatrix(np.array([[50, 0, 0], [10, 40, 0], [0, 0, 50]]))
    m = metrics_from_confusion(cm)
    assert m.accuracy == pytest.approx(140 / 150)
    assert m.recall == pytest.approx((1.0 + 0.8 + 1.0) / 3)
    assert round(m.accuracy, 4) == round(m.recall, 4) == 0.9333
    assert m.n == 150 and m.mode is Mode.MULTICLASS


def test_metrics_diagonal_all_ones():
    m = metrics_from_confusion(ConfusionMatrix(np.diag([3, 4, 5])))
    assert (m.accuracy, m.recall, m.precision, m.f1) == (1.0, 1.0, 1.0, 1.0)


def test_metrics_binary_example():
    m = metrics_from_confusion(ConfusionMatrix(np.array([[2, 0], [1, 1]]), BINARY), Mode.BINARY)
    assert (m.accuracy, m.recall, m.precision) == (0.75, 0.5, 1.0)
    assert m.f1 == pytest.approx(2 / 3)
    assert round(m.f1, 4) == 0.6667


def test_metrics_zero_division_flags():
    m = metrics_from_confusion(ConfusionMatrix(np.array([[4, 0], [0, 0]]), BINARY), Mode.BINARY)
    assert (m.recall, m.precision, m.f1) == (0.0, 0.0, 0.0)
    assert set(m.flags) == {"recall_undefined:fake", "precision_undefined:fake"}


def test_collapse_examples():
    cm = ConfusionMatrix(np.array([[50, 0, 0], [10, 40, 0], [0, 0, 50]]))
    assert collapse_binary(cm).counts.tolist() == [[50, 0], [10, 90]]
    assert collapse_binary(ConfusionMatrix(np.diag([1, 2, 3]))).counts.tolist() == [[1, 0], [0, 5]]
    assert collapse_labels([REAL, GAN, DM, "real"]) == [0, 1, 1, 0]


@given(hnp.arrays(np.int64, (3, 3), elements=st.integers(0, 50)))
def test_collapse_never_lowers_accuracy(counts):
    if counts.sum() == 0:
        return
    cm = ConfusionMatrix(counts)
    multi = metrics_from_confusion(cm)
    binary = metrics_from_confusion(collapse_binary(cm), Mode.BINARY)
    assert binary.accuracy >= multi.accuracy
    assert collapse_binary(cm).total == cm.total


@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=80))
def test_metrics_match_brute_force(pairs):
    preds, labels = [p for p, _ in pairs], [y for _, y in pairs]
    m = metrics_from_confusion(confusion_matrix(preds, labels))
    assert (m.accuracy, m.recall, m.precision, m.f1) == brute_force_metrics(preds, labels, 3)
    for v in (m.accuracy, m.recall, m.precision, m.f1):
        assert 0.0 <= v <= 1.0


# reports


def _row(setting, mode=Mode.MULTICLASS, acc=0.5):
    return MetricsReport(setting, mode, acc, 0.25, 1 / 3, 0.2857142857142857, 12)


def _robustness():
    r = RobustnessReport()
    for s, a in (("raw", 0.9), ("qf90", 0.8), ("qf50", 0.1 + 0.2)):
        r.rows[s] = (_row(s, acc=a), _row(s, Mode.BINARY, acc=a))
    return r


def test_csv_header_and_repr_floats():
    lines = to_csv(_robustness()).splitlines()
    assert lines[0] == ",".join(CSV_HEADER) == "setting,mode,accuracy,recall,precision,f1,n"
    assert len(lines) == 7
    assert lines[-1].split(",")[2] == repr(0.1 + 0.2)


def test_reports_are_deterministic(tmp_path):
    for fmt in ("json", "csv", "markdown"):
        a = emit_report(_robustness(), fmt, tmp_path / f"a.{fmt}").read_bytes()
        b = emit_report(_robustness(), fmt, tmp_path / f"b.{fmt}").read_bytes()
        assert a == b


def test_json_roundtrip():
    back = from_json(to_json(_robustness()))
    assert isinstance(back, RobustnessReport)
    assert list(back.rows) == ["raw", "qf90", "qf50"]
    for s, (m, b) in _robustness().rows.items():
        for orig, got in ((m, back.rows[s][0]), (b, back.rows[s][1])):
            for attr in ("accuracy", "recall", "precision", "f1"):
                assert abs(getattr(orig, attr) - getattr(got, attr)) <= 1e-12
    gen = GeneralizationReport("m", {"T_G_i": _row("T_G_i", Mode.BINARY)})
    assert from_json(to_json(gen)) == gen


def test_markdown_layout():
    md = to_markdown(_robustness()).splitlines()
    assert md[1] == "| | RAW | QF90 | QF50 |"
    assert md[3].startswith("| Multi-class Acc / F1 (%) | 90.00/28.57")
    gen = GeneralizationReport("toy", {f"b{i}": _row(f"b{i}", Mode.BINARY) for i in range(9)})
    assert to_markdown(gen).splitlines()[-1].count("|") == 11


def test_emit_rejects_bad_input(tmp_path):
    with pytest.raises(ValidationError):
        emit_report(_robustness(), "xml", tmp_path / "r.xml")
    bad = MetricsReport("x", Mode.BINARY, float("nan"), 0, 0, 0, 1)
    with pytest.raises(ValidationError):
        emit_report([bad], "json", tmp_path / "r.json")


# protocols on the trained toy model


def test_evaluate_collapse_consistency(toy_run, tmp_path):
    test = balance_eval_set(toy_run.test, seed=0)
    log = tmp_path / "preds.jsonl"
    multi, binary = evaluate(toy_run.fusion, test, log_path=log)
    assert multi.accuracy >= 0.9
    assert binary.accuracy >= multi.accuracy
    entries = [json.loads(line) for line in log.read_text().splitlines()]
    assert len(entries) == len(test)
    assert all(abs(sum(e["probabilities"]) - 1) < 1e-9 for e in entries)
    with pytest.raises(EmptyTestSet):
        evaluate(toy_run.fusion, Manifest(()))


def test_sweep_without_qfs_has_raw_row_only(toy_run, tmp_path):
    small = Manifest(tuple(balance_eval_set(toy_run.test, seed=0).records[::10]))
    report = robustness_sweep(toy_run.fusion, small, [], tmp_path)
    assert list(report.rows) == ["raw"]


def test_generalization_rejects_real_only_bench(toy_run):
    reals = Manifest(tuple(toy_run.test.by_label(REAL)[:4]))
    with pytest.raises(EmptyBench):
        generalization_eval(toy_run.fusion, [("only_real", reals)])
