"""Finite-difference gradient suite over every op family and the three main stages.

Everything runs in float64. Each case builds a scalar probe ``sum(w * f(...))``
with a fixed random ``w`` so that all output entries contribute.
"""
from __future__ import annotations

from typing import Callable, Dict, List

import numpy as np

from .core import ops
from .core.gradcheck import GradCheckResult, gradcheck
from .core.tensor import Tensor, default_dtype

TOLERANCE = 1e-4
INSTANCES = 5


def _leaf(rng, *shape, scale=1.0) -> Tensor:
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True)


def _probe(out: Tensor, weights: np.ndarray) -> Tensor:
    return ops.sum_all(ops.mul(out, Tensor(weights)))


def _weights_for(fn: Callable[[], Tensor], rng) -> np.ndarray:
    return rng.standard_normal(fn().shape)


def _case(fn, inputs, rng, **kw) -> GradCheckResult:
    w = _weights_for(fn, rng)
    return gradcheck(lambda: _probe(fn(), w), inputs, rng=rng, **kw)


def _conv2d(rng):
    n, c, o = rng.integers(1, 3), rng.integers(1, 4), rng.integers(1, 4)
    k, s, p, d = rng.integers(1, 4), rng.integers(1, 3), rng.integers(0, 3), rng.integers(1, 3)
    x, w, b = _leaf(rng, n, c, 7, 6), _leaf(rng, o, c, k, k), _leaf(rng, o)
    return _case(lambda: ops.conv2d(x, w, b, stride=s, padding=p, dilation=d), [x, w, b], rng)


def _conv_transpose2d(rng):
    n, c, o = rng.integers(1, 3), rng.integers(1, 4), rng.integers(1, 4)
    k, s = rng.integers(1, 4), rng.integers(1, 3)
    x, w, b = _leaf(rng, n, c, 4, 5), _leaf(rng, c, o, k, k), _leaf(rng, o)
    return _case(lambda: ops.conv_transpose2d(x, w, b, stride=s), [x, w, b], rng)


def _bilinear_resize(rng):
    x = _leaf(rng, 2, 2, int(rng.integers(2, 7)), int(rng.integers(2, 7)))
    oh, ow = int(rng.integers(1, 12)), int(rng.integers(1, 12))
    return _case(lambda: ops.bilinear_resize(x, oh, ow), [x], rng)


def _grid_sample(rng):
    h, w = int(rng.integers(3, 7)), int(rng.integers(3, 7))
    x = _leaf(rng, 2, 3, h, w)
    # keep sample points away from integer grid lines where the warp has kinks
    flow = rng.uniform(-2.5, 2.5, (2, 2, h, w))
    frac = flow - np.round(flow)
    flow = np.where(np.abs(frac) < 0.05, flow + 0.1, flow)
    f = Tensor(flow, requires_grad=True)
    return _case(lambda: ops.grid_sample(x, f), [x, f], rng)


def _se_layer(rng):
    c = int(rng.integers(2, 9))
    r = int(rng.integers(1, c + 1))
    hidden = max(1, c // r)
    x = _leaf(rng, 2, c, 4, 3)
    p = {"w1": _leaf(rng, hidden, c, 1, 1), "b1": _leaf(rng, hidden),
         "w2": _leaf(rng, c, hidden, 1, 1), "b2": _leaf(rng, c)}
    return _case(lambda: ops.se_layer(x, p, r), [x, *p.values()], rng)


def _maxpool2(rng):
    x = _leaf(rng, 2, 2, 2 * int(rng.integers(1, 4)), 2 * int(rng.integers(1, 4)))
    return _case(lambda: ops.maxpool2(x), [x], rng)


def _elementwise(rng):
    a, b, m = _leaf(rng, 2, 3, 4, 4), _leaf(rng, 2, 3, 4, 4), _leaf(rng, 2, 1, 4, 4)
    s = float(rng.standard_normal())

    def fn():
        y = ops.add(ops.mul(a, b), ops.mul(m, ops.sigmoid(a)))
        return ops.relu(ops.add_scalar(ops.mul_scalar(y, 1.5), s))

    return _case(fn, [a, b, m], rng)


def _concat(rng):
    xs = [_leaf(rng, 2, int(rng.integers(1, 4)), 3, 5) for _ in range(int(rng.integers(1, 4)))]
    return _case(lambda: ops.concat_channels(xs), xs, rng)


def _losses(rng):
    from .objective.losses import bce_loss, bce_with_logits, iou_loss

    z = _leaf(rng, 2, 1, 5, 5)
    y = (rng.random((2, 1, 5, 5)) > 0.5).astype(np.float64)

    def fn():
        p = ops.sigmoid(z)
        both = ops.add(bce_loss(p, y), ops.mul_scalar(iou_loss(p, y), 0.7))
        return ops.add(both, ops.mul_scalar(bce_with_logits(z, y), 1.3))

    return gradcheck(fn, [z], rng=rng)


OP_FAMILIES: Dict[str, Callable] = {
    "conv2d": _conv2d,
    "conv_transpose2d": _conv_transpose2d,
    "bilinear_resize": _bilinear_resize,
    "grid_sample": _grid_sample,
    "se_layer": _se_layer,
    "maxpool2": _maxpool2,
    "elementwise": _elementwise,
    "concat": _concat,
    "losses": _losses,
}


def _randomize_flows(bpc, rng, scale=0.05) -> None:
    for conv in bpc.flow:
        conv.weight.data = rng.standard_normal(conv.weight.shape) * scale
        conv.bias.data = rng.uniform(0.2, 0.8, conv.bias.shape)


def _tiny(rng, size=32):
    from .network import BSCGNet, ModelConfig

    model = BSCGNet(ModelConfig(input_size=size), rng=rng)
    _randomize_flows(model.bpc, rng)
    return model


def stage_bpc(rng, entries: int = 3) -> GradCheckResult:
    from .backbone import EncoderPyramid

    model = _tiny(rng)
    widths = model.config.widths
    pyr = [_leaf(rng, 1, widths[k], 32 >> k, 32 >> k) for k in range(5)]
    params = model.bpc.parameters()
    fn = lambda: model.bpc(EncoderPyramid(*pyr)).i3
    return _case(fn, pyr[:4] + params, rng, max_entries=entries)


def stage_decode(rng, entries: int = 3) -> GradCheckResult:
    model = _tiny(rng)
    widths = model.config.widths
    feats = [_leaf(rng, 1, widths[k], 32 >> k, 32 >> k) for k in range(5)]
    params = model.decoder.parameters()
    return _case(lambda: model.decoder(feats).d1, feats + params, rng, max_entries=entries)


def stage_afr(rng, entries: int = 3) -> GradCheckResult:
    from .dffc import DecoderPyramid

    model = _tiny(rng)
    c = model.config.width
    dp = [_leaf(rng, 1, c, 32 >> k, 32 >> k) for k in (3, 2, 1, 0)]
    i3 = _leaf(rng, 1, c, 32, 32)
    params = model.afr.parameters()
    ws = [rng.standard_normal((1, 1, 32, 32)) for _ in range(6)]

    def fn():
        outs = model.afr(DecoderPyramid(*dp), i3)
        total = None
        for m, w in zip(outs.maps, ws):
            term = _probe(m, w)
            total = term if total is None else ops.add(total, term)
        return total

    return gradcheck(fn, dp + [i3] + params, rng=rng, max_entries=entries)


def full_model(rng, entries: int = 2) -> GradCheckResult:
    """Every parameter tensor of the full network, a few sampled entries each."""
    from .objective.losses import joint_loss

    model = _tiny(rng)
    image = Tensor(rng.random((1, 3, 32, 32)))
    y = (rng.random((1, 1, 32, 32)) > 0.5).astype(np.float64)
    return gradcheck(lambda: joint_loss(model(image).outputs, y).joint, model.parameters(),
                     rng=rng, max_entries=entries)


STAGES: Dict[str, Callable] = {
    "bpc_forward": stage_bpc,
    "decode": stage_decode,
    "afr_forward": stage_afr,
}


def run_suite(seed: int = 0, instances: int = INSTANCES, stages: bool = True) -> List[tuple]:
    """``(name, max_rel_error, n_checked)`` for each op family and stage."""
    rng = np.random.default_rng(seed)
    rows = []
    with default_dtype(np.float64):
        for name, case in OP_FAMILIES.items():
            results = [case(rng) for _ in range(instances)]
            rows.append((name, max(r.max_rel_error for r in results), sum(r.n_checked for r in results)))
        if stages:
            for name, case in STAGES.items():
                r = case(rng)
                rows.append((name, r.max_rel_error, r.n_checked))
    return rows
