import numpy as np
import pytest

from bscgnet.core import Parameter, adam_step, gradcheck
from bscgnet.core.gradcheck import relative_error
from bscgnet.verification import OP_FAMILIES, STAGES, TOLERANCE, full_model, run_suite


@pytest.mark.parametrize("family", sorted(OP_FAMILIES))
def test_op_family_gradients(family, f64):
    rng = np.random.default_rng(7)
    for _ in range(5):
        assert OP_FAMILIES[family](rng).max_rel_error <= TOLERANCE


@pytest.mark.parametrize("stage", sorted(STAGES))
def test_stage_gradients(stage, f64):
    assert STAGES[stage](np.random.default_rng(3)).max_rel_error <= TOLERANCE


def test_full_model_every_parameter_tensor(f64):
    r = full_model(np.random.default_rng(11), entries=1)
    assert r.max_rel_error <= TOLERANCE
    assert r.n_checked > 100


def test_run_suite_covers_all_families():
    rows = run_suite(seed=1, instances=1, stages=False)
    assert [name for name, _, _ in rows] == list(OP_FAMILIES)


def test_gradcheck_flags_a_wrong_gradient(f64):
    from bscgnet.core import Tensor
    from bscgnet.core.tensor import make_node

    x = Tensor(np.array([0.3, -1.2]), requires_grad=True)

    def square_with_bad_grad():
        return make_node(np.asarray((x.data ** 2).sum()), (x,), lambda g: (g * x.data,))

    assert gradcheck(square_with_bad_grad, [x]).max_rel_error > 0.4


def test_gradcheck_refuses_float32():
    from bscgnet.core import Tensor

    with pytest.raises(TypeError):
        gradcheck(lambda: None, [Tensor(np.zeros(2, np.float32), requires_grad=True)])


def test_relative_error_floor():
    assert relative_error(0.0, 1e-12) == pytest.approx(1e-4)
    assert relative_error(2.0, 1.0) == 0.5


# --- Adam -----------------------------------------------------------------------

def adam_oracle(p, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    return p


def test_adam_zero_gradient_is_noop():
    p = Parameter(np.array([1.5]))
    adam_step([p], lr=0.1)
    assert p.data[0] == 1.5
    assert p.step == 1


@pytest.mark.parametrize("g", [3.0, -0.02])
def test_adam_first_step_is_lr_sign(g):
    p = Parameter(np.array([0.0]))
    p.grad = np.array([g])
    adam_step([p], lr=0.01)
    assert p.data[0] == pytest.approx(-0.01 * np.sign(g), rel=1e-6)
    assert p.data[0] == adam_oracle(0.0, [g], 0.01)


def test_adam_matches_hand_stepped_oracle():
    grads = [0.5, -1.0, 2.0, 0.1]
    p = Parameter(np.array([1.0]))
    for g in grads:
        p.grad = np.array([g])
        adam_step([p], lr=0.05)
    assert p.data[0] == pytest.approx(adam_oracle(1.0, grads, 0.05), abs=1e-15)
    np.testing.assert_array_equal(p.grad, [0.1])  # untouched


def test_adam_converges_on_quadratic():
    p = Parameter(np.array([0.0]))
    for _ in range(100):
        p.grad = 2 * (p.data - 3.0)
        adam_step([p], lr=0.1)
    assert abs(p.data[0] - 3.0) < 0.05
