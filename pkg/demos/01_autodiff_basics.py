# coding: utf-8

# # Tensors, gradients and a finite-difference check
#
# The package ships its own small reverse-mode autodiff engine on top of numpy.
# Here we build a tiny expression, backpropagate, and compare against finite differences.

import numpy as np

from bscgnet.core import Tensor, default_dtype, gradcheck, ops

rng = np.random.default_rng(0)

# float64 everywhere for the check
with default_dtype(np.float64):
    x = Tensor(rng.standard_normal((1, 2, 6, 6)), requires_grad=True)
    w = Tensor(rng.standard_normal((3, 2, 3, 3)), requires_grad=True)
    b = Tensor(np.zeros(3), requires_grad=True)

    def probe():
        y = ops.relu(ops.conv2d(x, w, b, padding=1))
        return ops.sum_all(ops.sigmoid(y))

    loss = probe()
    loss.backward()
    print("loss", float(loss.data))
    print("grad norm wrt weights", np.linalg.norm(w.grad))

    result = gradcheck(probe, [x, w, b], rng=rng)
    print("max relative error", result.max_rel_error, "over", result.n_checked, "entries")


# # The whole suite
#
# The same check runs over every op family and three pieces of the network.

from bscgnet.verification import run_suite

for name, err, n in run_suite(seed=0):
    print(f"{name:<18} {err:.2e}  ({n} entries)")
