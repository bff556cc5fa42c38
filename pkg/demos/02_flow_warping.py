# coding: utf-8

# # Warping a feature map with a flow field
#
# grid_sample moves every pixel by a (dx, dy) displacement with bilinear weights.
# A zero flow returns the input untouched; a constant flow shifts it.

import numpy as np

from bscgnet.core import Tensor, ops

x = np.arange(25, dtype=np.float64).reshape(1, 1, 5, 5)
print(x[0, 0])

zero = np.zeros((1, 2, 5, 5))
same = ops.grid_sample(Tensor(x), Tensor(zero)).data
print("zero flow is the identity:", np.array_equal(same, x))

# half a pixel to the right: each value averages with its right neighbour,
# and the last column repeats because samples are clamped to the border
flow = np.zeros((1, 2, 5, 5))
flow[:, 0] = 0.5
print(ops.grid_sample(Tensor(x), Tensor(flow)).data[0, 0])


# # Inside the calibration module
#
# Each calibration step predicts a flow from two neighbouring layers and warps
# the running sum before adding the next layer. At initialisation the flow
# predictor is zero, so the step is a plain sum.

from bscgnet.bpc import calibrate_step

rng = np.random.default_rng(1)
nxt, carry = rng.standard_normal((2, 1, 4, 5, 5))
out = calibrate_step(Tensor(nxt), Tensor(np.zeros((1, 2, 5, 5))), Tensor(carry)).data
print("zero-flow step equals the sum:", np.allclose(out, nxt + carry))
