import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from bscgnet.core import ShapeError, Tensor, gradcheck, ops
from bscgnet.objective import (aggregate, bce_loss, bce_with_logits, evaluate_pair, f_beta,
                               f_measure_curve, iou_loss, joint_loss, mae, s_measure)
from bscgnet.objective.metrics import ImageRecord


# --- loop oracles -----------------------------------------------------------------

def bce_oracle(p, y, eps=1e-7):
    total = 0.0
    for pv, yv in zip(p.ravel(), y.ravel()):
        pv = min(max(pv, eps), 1 - eps)
        total += -(yv * math.log(pv) + (1 - yv) * math.log(1 - pv))
    return total / p.size


def mae_oracle(s, g):
    # exact rational accumulation, rounded once
    total = Fraction(0)
    for i in range(s.shape[0]):
        for j in range(s.shape[1]):
            total += Fraction(abs(s[i, j] - g[i, j]))
    return float(total) / s.size


def curve_oracle(s, g, beta2=0.3):
    prec, rec, f = [], [], []
    for t in range(256):
        tp = fp = fn = 0
        for sv, gv in zip(s.ravel(), g.ravel()):
            pos, true = sv > t / 255, gv > 0.5
            tp += pos and true
            fp += pos and not true
            fn += (not pos) and true
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        prec.append(p)
        rec.append(r)
        f.append((1 + beta2) * p * r / (beta2 * p + r) if beta2 * p + r > 0 else 0.0)
    return np.array(prec), np.array(rec), np.array(f)


def random_pair(rng, size=32):
    s = np.round(rng.random((size, size)) * 255) / 255
    g = (rng.random((size, size)) < rng.uniform(0.1, 0.6)).astype(np.float64)
    return s, g


# --- losses ----------------------------------------------------------------------

def test_bce_perfect_and_half():
    y = np.array([[[[0.0, 1.0], [1.0, 0.0]]]])
    assert bce_loss(Tensor(y), y).item() == pytest.approx(-math.log(1 - 1e-7), rel=1e-6)
    assert bce_loss(Tensor(np.full(y.shape, 0.5)), y).item() == pytest.approx(math.log(2))


def test_bce_matches_loop_oracle(rng, f64):
    p = rng.random((2, 1, 5, 5))
    y = (rng.random((2, 1, 5, 5)) > 0.5).astype(float)
    assert bce_loss(Tensor(p), y).item() == pytest.approx(bce_oracle(p, y), abs=1e-9)


def test_bce_with_logits_equals_probability_form(rng, f64):
    z = rng.normal(0, 8, (2, 1, 6, 6))
    y = (rng.random(z.shape) > 0.5).astype(float)
    via_p = bce_loss(ops.sigmoid(Tensor(z)), y).item()
    assert bce_with_logits(Tensor(z), y).item() == pytest.approx(via_p, rel=1e-9)
    assert bce_with_logits(Tensor(z), y).item() == pytest.approx(bce_oracle(1 / (1 + np.exp(-z)), y), rel=1e-9)


def test_iou_cases():
    y = np.zeros((1, 1, 4, 4))
    y[..., 1:3, 1:3] = 1
    assert iou_loss(Tensor(y.copy()), y).item() == pytest.approx(0.0, abs=1e-7)
    ones = np.ones((1, 1, 4, 4))
    assert iou_loss(Tensor(np.full(ones.shape, 0.5)), ones).item() == pytest.approx(0.5)
    assert iou_loss(Tensor(np.zeros(ones.shape)), ones).item() == pytest.approx(1.0)


def test_iou_is_per_image_then_averaged():
    y = np.ones((2, 1, 2, 2))
    p = np.zeros((2, 1, 2, 2))
    p[0] = 1.0
    assert iou_loss(Tensor(p), y).item() == pytest.approx(0.5, abs=1e-7)


def test_loss_shape_mismatch():
    with pytest.raises(ShapeError):
        bce_loss(Tensor(np.zeros((1, 1, 2, 2))), np.zeros((1, 1, 3, 3)))


def test_joint_loss_terms(rng, f64):
    y = (rng.random((1, 1, 8, 8)) > 0.5).astype(float)
    perfect = [Tensor(np.where(y > 0, 40.0, -40.0)) for _ in range(6)]
    assert joint_loss(perfect, y, expected=6).joint.item() <= 1e-5
    maps = [Tensor(rng.standard_normal(y.shape)) for _ in range(6)]
    terms = joint_loss(maps, y, expected=6)
    assert terms.joint.item() == pytest.approx(sum(r["joint"] for r in terms.per_output))
    assert all(r["joint"] == pytest.approx(r["bce"] + r["iou"]) for r in terms.per_output)
    with pytest.raises(ShapeError, match="expected 6"):
        joint_loss(maps[:4], y, expected=6)
    bce_only = joint_loss(maps, y, use_iou=False)
    assert bce_only.joint.item() == pytest.approx(terms.bce)


def test_joint_loss_gradient_through_a_head(rng, f64):
    from bscgnet.nn import Conv2d

    head = Conv2d(3, 1, 1, rng)
    x = Tensor(rng.standard_normal((1, 3, 6, 6)), requires_grad=True)
    y = (rng.random((1, 1, 6, 6)) > 0.5).astype(float)
    fn = lambda: joint_loss([head(x), ops.mul_scalar(head(x), 0.5)], y).joint
    assert gradcheck(fn, [x] + head.parameters()).max_rel_error <= 1e-4


# --- metrics ---------------------------------------------------------------------

def test_mae_cases(rng):
    g = (rng.random((8, 8)) > 0.5).astype(float)
    assert mae(g, g) == 0.0
    assert mae(np.ones((4, 4)), np.zeros((4, 4))) == 1.0
    with pytest.raises(ShapeError):
        mae(np.zeros((2, 2)), np.zeros((3, 3)))


@pytest.mark.parametrize("seed", range(5))
def test_mae_and_curve_match_loop_oracles(seed):
    s, g = random_pair(np.random.default_rng(seed), 16)
    assert mae(s, g) == mae_oracle(s, g)
    curve = f_measure_curve(s, g)
    p, r, f = curve_oracle(s, g)
    assert np.array_equal(curve["precision"], p)
    assert np.array_equal(curve["recall"], r)
    assert np.array_equal(curve["f"], f)
    assert curve["max_f"] == f.max()


def test_f_beta_hand_case():
    assert float(f_beta(0.5, 1.0)) == pytest.approx(0.565217, abs=1e-6)
    # the same value through the curve: half of the predicted pixels are correct
    g = np.array([[1.0, 0.0]])
    s = np.array([[1.0, 1.0]])
    assert f_measure_curve(s, g)["f"][0] == pytest.approx(1.3 * 0.5 / (0.3 * 0.5 + 1.0), abs=1e-12)


def test_curve_perfect_and_guards():
    g = np.zeros((4, 4))
    g[1:3, 1:3] = 1
    curve = f_measure_curve(g, g)
    assert curve["max_f"] == 1.0 and len(curve["f"]) == 256
    empty = f_measure_curve(np.zeros((4, 4)), g)
    assert empty["max_f"] == 0.0 and not empty["precision"].any()
    no_gt = f_measure_curve(np.ones((4, 4)), np.zeros((4, 4)))
    assert not no_gt["recall"].any() and no_gt["max_f"] == 0.0


# Goldens computed once with the reference structure-measure package (py_sod_metrics
# Smeasure, inputs already in [0, 1], normalize=False) and frozen here.
S_MEASURE_GOLDENS = [
    0.7970047442612347, 0.8055001229455687, 0.7911318185382942, 0.7681485187072516,
    0.7853361379560446, 0.788214149345962, 0.5040594362745098, 0.4959405637254902,
]


def golden_cases():
    rng = np.random.default_rng(2024)
    out = []
    for h, w in [(32, 32), (24, 40), (17, 23), (32, 32), (8, 8), (40, 24)]:
        yy, xx = np.mgrid[:h, :w]
        cy, cx = rng.uniform(0.3, 0.7) * h, rng.uniform(0.3, 0.7) * w
        g = ((yy - cy) ** 2 / (0.3 * h) ** 2 + (xx - cx) ** 2 / (0.25 * w) ** 2) <= 1
        s = np.clip(0.6 * g + rng.uniform(0, 0.5, (h, w)), 0, 1)
        out.append((s, g))
    s = rng.uniform(0, 1, (16, 16))
    out.append((s, np.zeros((16, 16), bool)))
    out.append((s, np.ones((16, 16), bool)))
    return [(np.round(s * 255) / 255, g.astype(float)) for s, g in out]


@pytest.mark.parametrize("case,expected", list(zip(range(8), S_MEASURE_GOLDENS)))
def test_s_measure_goldens(case, expected):
    s, g = golden_cases()[case]
    assert s_measure(s, g) == pytest.approx(expected, abs=1e-12)


def test_s_measure_bounds_and_weighting(rng):
    g = np.zeros((32, 32))
    g[8:20, 10:26] = 1
    assert s_measure(g, g) >= 0.98
    assert s_measure(1 - g, g) <= 0.35
    s = rng.random((32, 32))
    value, so, sr = s_measure(s, g, components=True)
    assert value == pytest.approx((so + sr) / 2, abs=1e-15)


@settings(max_examples=100)
@given(arrays(np.float64, (9, 11), elements=st.floats(0, 1)),
       arrays(np.bool_, (9, 11)))
def test_metrics_in_unit_interval(s, g):
    g = g.astype(float)
    rec = evaluate_pair("x", s, g)
    for v in (rec.mae, rec.s_measure, rec.max_f):
        assert 0.0 <= v <= 1.0
    assert rec.max_f == rec.f_curve.max()
    assert f_measure_curve(g, g)["max_f"] >= rec.max_f or not g.any()


# --- aggregation ---------------------------------------------------------------------

def _rec(name, m):
    z = np.zeros(256)
    return ImageRecord(name, m, 0.5, 0.5, z, z, z)


def test_aggregate_single_and_pair():
    one = aggregate([_rec("a", 0.2)])
    assert one.means["mae"] == 0.2 and one.mae_quartiles["median"] == 0.2
    assert aggregate([_rec("a", 0.0), _rec("b", 0.1)]).means["mae"] == pytest.approx(0.05)


def test_aggregate_quartiles_sort_oracle():
    vals = [0.03, 0.05, 0.01, 0.04, 0.02]
    q = aggregate([_rec(str(i), v) for i, v in enumerate(vals)]).mae_quartiles
    srt = sorted(vals)
    assert (q["min"], q["q1"], q["median"], q["q3"], q["max"]) == pytest.approx(tuple(srt))


def test_aggregate_orders_by_name_and_rejects_empty():
    rep = aggregate([_rec("b", 0.1), _rec("a", 0.2)])
    assert [r.name for r in rep.records] == ["a", "b"]
    with pytest.raises(ValueError):
        aggregate([])
