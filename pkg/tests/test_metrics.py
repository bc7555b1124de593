from fractions import Fraction

import numpy as np
import pytest

from twister.metrics import iou_metrics, mask_iou


def brute(preds, gts):
    ious = []
    ti = tu = 0
    for p, g in zip(preds, gts):
        i = u = 0
        for a, b in zip(p.ravel().tolist(), g.ravel().tolist()):
            i += a and b
            u += a or b
        ti += i
        tu += u
        ious.append(Fraction(1) if u == 0 else Fraction(i, u))
    miou = sum(ious, Fraction(0)) / len(ious)
    oiou = Fraction(1) if tu == 0 else Fraction(ti, tu)
    prec = {x: Fraction(sum(v > Fraction(x, 100) for v in ious), len(ious)) for x in (50, 60, 70, 90)}
    return miou, oiou, prec


def test_identical_and_disjoint():
    m = np.array([[1, 0], [1, 1]], bool)
    r = iou_metrics([m, m], [m, m])
    assert r.miou == r.oiou == 1.0 and all(v == 1.0 for v in r.precision.values())
    r = iou_metrics([m], [~m])
    assert r.miou == r.oiou == 0.0 and all(v == 0.0 for v in r.precision.values())


def test_hand_case():
    full = np.ones((2, 2), bool)
    pred = np.array([[1, 1], [1, 0]], bool)
    gt = np.array([[1, 0], [0, 0]], bool)
    assert mask_iou(pred, gt) == pytest.approx(1 / 3)
    r = iou_metrics([full, pred], [full, gt])
    assert r.miou == pytest.approx(2 / 3, abs=1e-12)
    assert r.precision[50] == 0.5
    assert r.oiou == pytest.approx(5 / 7, abs=1e-12)


def test_against_brute_force(rng):
    preds = [rng.random((8, 8)) < rng.random() for _ in range(60)]
    gts = [rng.random((8, 8)) < rng.random() for _ in range(60)]
    miou, oiou, prec = brute(preds, gts)
    r = iou_metrics(preds, gts)
    assert abs(r.miou - float(miou)) < 1e-12 and abs(r.oiou - float(oiou)) < 1e-12
    for x in prec:
        assert r.precision[x] == float(prec[x])


def test_shape_mismatch():
    with pytest.raises(ValueError):
        iou_metrics([np.zeros((2, 2))], [np.zeros((3, 2))])
