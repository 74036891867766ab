import csv
import io
import json

import numpy as np
import numpy.testing as npt
import pytest

from cocoanet.evaluation import (MetricsReport, accuracy, build_report, confusion_from_predictions,
                                 macro_average, per_class_metrics, render_report, round2)


def brute_force(true, pred, k=3):
    """Tally TP/FP/FN by walking every sample; percentages with the 0/0 = 0 rule."""
    out = []
    for c in range(k):
        tp = sum(1 for t, p in zip(true, pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(true, pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(true, pred) if t == c and p != c)
        prec = 100.0 * tp / (tp + fp) if tp + fp else 0.0
        rec = 100.0 * tp / (tp + fn) if tp + fn else 0.0
        f1 = 2.0 * prec * rec / (prec + rec) if prec + rec else 0.0
        out.append((prec, rec, f1))
    acc = 100.0 * sum(1 for t, p in zip(true, pred) if t == p) / len(true)
    return out, acc


def test_fuzz_against_brute_force():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        n = int(rng.integers(1, 60))
        true = rng.integers(0, 3, n).tolist()
        pred = rng.integers(0, 3, n).tolist()
        if rng.random() < 0.2:
            pred = [min(t, 1) for t in true]  # force a never-predicted class
        cm = confusion_from_predictions(true, pred)
        assert cm.sum() == n
        p, r, f = per_class_metrics(cm)
        expected, acc = brute_force(true, pred)
        assert [tuple(v) for v in zip(p, r, f)] == expected
        assert accuracy(cm) == acc


def test_fuzz_identities():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        cm = rng.integers(0, 50, (3, 3))
        if cm.sum() == 0:
            continue
        p, r, f = per_class_metrics(cm)
        assert np.all(np.abs(f * (p + r) - 2 * p * r) <= 1e-9)
        support = cm.sum(axis=1)
        assert accuracy(cm) == pytest.approx(float((r * support).sum() / support.sum()), abs=1e-9)
        perm = rng.permutation(3)
        assert macro_average(f[perm]) == pytest.approx(macro_average(f), abs=1e-12)
        assert np.all((p >= 0) & (p <= 100) & (r >= 0) & (r <= 100))


def test_confusion_hand_enumerated():
    true = [0, 0, 1, 1, 2, 2]
    pred = [0, 1, 1, 1, 2, 0]
    npt.assert_array_equal(confusion_from_predictions(true, pred), [[1, 1, 0], [0, 2, 0], [1, 0, 1]])


def test_confusion_edge_cases():
    npt.assert_array_equal(confusion_from_predictions([0, 1, 2, 2], [0, 1, 2, 2]), np.diag([1, 1, 2]))
    npt.assert_array_equal(confusion_from_predictions([], []), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        confusion_from_predictions([0, 3], [0, 1])
    with pytest.raises(ValueError):
        confusion_from_predictions([0, 1], [0, -1])


def test_two_class_reduction():
    p, r, _ = per_class_metrics([[5, 1], [2, 4]])
    npt.assert_allclose(p, [100 * 5 / 7, 80.0])
    npt.assert_allclose(r, [100 * 5 / 6, 100 * 4 / 6])
    npt.assert_allclose(p / 100, [0.714, 0.8], atol=5e-4)
    npt.assert_allclose(r / 100, [0.833, 0.667], atol=5e-4)


def test_zero_false_negatives_gives_full_recall():
    cm = [[80, 14, 0], [0, 100, 0], [1, 3, 90]]
    assert per_class_metrics(cm)[1][1] == 100.0


def test_absent_class_is_zero(caplog):
    p, r, f = per_class_metrics([[3, 0, 0], [0, 4, 0], [0, 0, 0]])
    assert (p[2], r[2], f[2]) == (0.0, 0.0, 0.0)
    assert "0/0" in caplog.text


def test_resnet50_reference_macro_values():
    recall = [85.66, 100, 95.59]
    f1 = [91.70, 95.09, 96.24]
    assert round2(macro_average(recall)) == 93.75
    assert round2(macro_average(f1)) == 94.34
    assert macro_average([7.5, 7.5, 7.5]) == 7.5


def test_accuracy_cases():
    assert accuracy(np.diag([3, 4, 5])) == 100.0
    assert accuracy([[0, 2, 1], [3, 0, 0], [1, 1, 0]]) == 0.0
    assert round(accuracy([[1658, 106], [0, 0]]), 2) == 93.99
    with pytest.raises(ValueError):
        accuracy(np.zeros((3, 3)))


def test_round_half_even():
    assert round2(0.125) == 0.12
    assert round2(0.135) == 0.14
    assert round2(93.745) == 93.74
    assert round2(2.675) == 2.68


def resnet50_reference_report():
    return MetricsReport(["Anthracnose", "CSSVD", "Healthy"], [98.66, 90.64, 96.89],
                         [85.66, 100.0, 95.59], [91.70, 95.09, 96.24], [586, 727, 451],
                         95.40, 93.75, 94.34, 94.0, [[0] * 3] * 3, "resnet50", 20, "test")


def test_text_table_rows():
    text = render_report(resnet50_reference_report(), "text").decode()
    rows = [" ".join(line.split()) for line in text.splitlines()]
    assert any(row.startswith("CSSVD 90.64 100 95.09") for row in rows)
    names = [row.split()[0] for row in rows if row and not row.startswith("-")]
    assert names == ["Class", "Anthracnose", "CSSVD", "Healthy", "Overall"]


def test_json_roundtrip():
    cm = np.array([[40, 3, 2], [1, 50, 0], [4, 0, 33]])
    report = build_report(cm, model="vit", epoch=5, split="val")
    doc = json.loads(render_report(report, "json"))
    assert set(doc) == {"model", "epoch", "split", "classes", "overall", "confusion_matrix"}
    assert MetricsReport.from_dict(doc) == report
    p, _, _ = per_class_metrics(cm)
    assert doc["classes"]["CSSVD"]["precision"] == round2(p[1])
    assert doc["overall"]["accuracy"] == round2(accuracy(cm))


def test_csv_layout():
    rows = list(csv.reader(io.StringIO(render_report(resnet50_reference_report(), "csv").decode())))
    assert len(rows) == 5
    assert rows[0] == ["class", "precision", "recall", "f1", "accuracy"]
    assert [r[0] for r in rows[1:]] == ["Anthracnose", "CSSVD", "Healthy", "Overall"]


def test_unknown_format():
    with pytest.raises(ValueError, match="unknown report format"):
        render_report(resnet50_reference_report(), "xml")


def test_report_values_bounded():
    rng = np.random.default_rng(0)
    for _ in range(50):
        report = build_report(rng.integers(0, 20, (3, 3)) + np.eye(3, dtype=int))
        vals = report.precision + report.recall + report.f1 + [report.accuracy, report.macro_f1]
        assert all(0 <= v <= 100 for v in vals)
