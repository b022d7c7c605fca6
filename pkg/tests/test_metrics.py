import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import mann_whitney_auc, headline_metrics

from wound_ensemble.errors import InputError
from wound_ensemble.labels import LabelSpace
from wound_ensemble.metrics import ConfusionMatrix, ROCCurve, confusion, report, roc_auc, write_report_csv

SV = LabelSpace.of(["S", "V"])
DSV = LabelSpace.of(["D", "S", "V"])


def pct(rep, code):
    m = rep.per_class[code]
    return 100 * rep.accuracy, 100 * m.precision, 100 * m.recall, 100 * m.f1


@pytest.mark.parametrize(
    "counts, published",
    [
        ([[27, 1], [2, 54]], (96.4, 93.1, 96.4, 94.72)),  # ensemble
        ([[20, 8], [6, 50]], (83.3, 76.9, 71.4, 74.04)),  # classifier A
    ],
)
def test_binary_table_reconstruction(counts, published):
    rep = report(ConfusionMatrix(np.array(counts), SV))
    got = pct(rep, "S")
    assert np.allclose(got, headline_metrics(counts), atol=1e-12)
    assert all(abs(g - p) <= 0.05 for g, p in zip(got, published))


def test_classifier_b_row_reconstruction():
    # [[22, 6], [9, 47]] is the integer matrix consistent with row B (82.1 / 71 / 78.6 / 74.60)
    got = pct(report(ConfusionMatrix(np.array([[22, 6], [9, 47]]), SV)), "S")
    assert all(abs(g - p) <= 0.1 for g, p in zip(got, (82.1, 71.0, 78.6, 74.60)))


@pytest.mark.parametrize(
    "counts, acc, precision, recall",
    [
        ([[44, 5, 5], [6, 19, 3], [0, 4, 52]], 83.3, (88.0, 67.9, 86.7), (81.5, 67.9, 92.9)),
        ([[50, 2, 2], [6, 22, 0], [2, 3, 51]], 89.1, (86.2, 81.5, 96.2), (92.6, 78.6, 91.1)),
    ],
)
def test_three_class_reconstruction(counts, acc, precision, recall):
    rep = report(ConfusionMatrix(np.array(counts), DSV))
    assert 100 * rep.accuracy == pytest.approx(acc, abs=0.05)
    for code, p, r in zip(DSV.codes, precision, recall):
        assert 100 * rep.per_class[code].precision == pytest.approx(p, abs=0.05)
        assert 100 * rep.per_class[code].recall == pytest.approx(r, abs=0.05)


def test_diagonal_matrix_is_perfect():
    rep = report(ConfusionMatrix(np.diag([3, 4, 5]), DSV))
    assert rep.accuracy == 1 and rep.macro_f1 == 1 and not rep.undefined


def test_undefined_ratios_are_flagged():
    rep = report(ConfusionMatrix(np.array([[5, 0], [3, 0]]), SV))
    assert ("V", "precision") in rep.undefined
    assert rep.per_class["V"].precision == 0


def test_confusion_from_lists_and_errors():
    cm = confusion(["S", "V", "V"], ["S", "S", "V"], SV)
    assert cm.counts.tolist() == [[1, 1], [0, 1]]
    with pytest.raises(InputError):
        confusion([], [], SV)
    with pytest.raises(InputError):
        report(ConfusionMatrix(np.zeros((2, 2), int), SV))
    with pytest.raises(InputError):
        confusion(["D"], ["S"], SV)


def test_roc_basics():
    assert roc_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]).auc == 1.0
    assert roc_auc([0.5] * 6, [1, 0, 1, 0, 1, 0]).auc == 0.5
    with pytest.raises(InputError):
        roc_auc([0.1, 0.2], [1, 1])


@settings(max_examples=200, deadline=None)
@given(
    data=st.lists(st.tuples(st.integers(0, 10), st.booleans()), min_size=2, max_size=60).filter(
        lambda d: any(p for _, p in d) and not all(p for _, p in d)
    )
)
def test_roc_matches_pair_counting(data):
    scores = [s / 10 for s, _ in data]  # coarse grid forces ties
    pos = [p for _, p in data]
    roc = roc_auc(scores, pos)
    assert abs(roc.auc - mann_whitney_auc(scores, pos)) < 1e-12
    assert roc.points[0] == (0.0, 0.0) and roc.points[-1] == (1.0, 1.0)
    assert np.all(np.diff(roc.fpr) >= 0) and np.all(np.diff(roc.tpr) >= 0)


def test_roc_json_round_trip():
    roc = roc_auc([0.3, 0.9, 0.4, 0.4], [0, 1, 1, 0])
    back = ROCCurve.from_dict(roc.to_dict())
    assert back.auc == roc.auc and back.points == roc.points
    assert np.array_equal(back.thresholds, roc.thresholds)


def test_report_json_and_csv(tmp_path):
    rep = report(ConfusionMatrix(np.array([[27, 1], [2, 54]]), SV))
    assert type(rep).from_dict(rep.to_dict()) == rep
    write_report_csv([{"classifier": "ensemble", "accuracy": rep.accuracy, "f1": rep.per_class["S"].f1}],
                     tmp_path / "m.csv")
    rows = list(csv.DictReader((tmp_path / "m.csv").open()))
    assert rows == [{"classifier": "ensemble", "accuracy": "96.4", "f1": "94.74"}]
    ConfusionMatrix(np.array([[27, 1], [2, 54]]), SV).write_csv(tmp_path / "cm.csv")
    assert (tmp_path / "cm.csv").read_text().splitlines()[0] == "actual\\predicted,S,V"
