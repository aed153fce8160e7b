import numpy as np
import pytest

from _oracles import max_grad_rel_err
from msmt.fusion import FusionParams, fuse, init_fusion_params
from msmt.tensor import Tensor


def _params(gate, bias):
    return FusionParams(Tensor(np.asarray(gate, dtype=float)), Tensor(np.asarray(bias, dtype=float)))


def test_equal_inputs_are_fixed_point():
    rng = np.random.default_rng(0)
    a = Tensor(rng.normal(size=(4, 4, 3)))
    params = init_fusion_params(3, rng)
    out = fuse(a, Tensor(a.data.copy()), params)
    np.testing.assert_allclose(out.data, a.data, atol=1e-12)


def test_saturated_gate_selects_first_operand():
    rng = np.random.default_rng(1)
    a = Tensor(rng.normal(size=(2, 2, 2)))
    b = Tensor(rng.normal(size=(2, 2, 2)))
    out = fuse(a, b, _params(np.zeros(4), 20.0))
    # sigmoid(20) is within 1e-8 of 1
    np.testing.assert_allclose(out.data, a.data, atol=1e-7)


def test_neutral_gate_averages():
    rng = np.random.default_rng(2)
    a = Tensor(rng.normal(size=(3, 3, 2)))
    b = Tensor(rng.normal(size=(3, 3, 2)))
    out = fuse(a, b, _params(np.zeros(4), 0.0))
    np.testing.assert_allclose(out.data, (a.data + b.data) / 2.0, atol=1e-12)


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError, match="share a shape"):
        fuse(Tensor(np.ones((2, 2, 2))), Tensor(np.ones((2, 3, 2))), _params(np.zeros(4), 0.0))


@pytest.mark.parametrize("seed", range(20))
def test_output_within_operand_envelope(seed):
    rng = np.random.default_rng(seed)
    a = Tensor(rng.normal(size=(4, 4, 3)))
    b = Tensor(rng.normal(size=(4, 4, 3)))
    out = fuse(a, b, init_fusion_params(3, rng, scale=1.0))
    lo = np.minimum(a.data, b.data)
    hi = np.maximum(a.data, b.data)
    assert np.all(out.data >= lo - 1e-12)
    assert np.all(out.data <= hi + 1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_swap_with_negated_params_is_equivalent(seed):
    rng = np.random.default_rng(100 + seed)
    a = Tensor(rng.normal(size=(3, 3, 2)))
    b = Tensor(rng.normal(size=(3, 3, 2)))
    gate = rng.normal(size=4)
    bias = rng.normal()
    out = fuse(a, b, _params(gate, bias))
    swapped_gate = -np.concatenate([gate[2:], gate[:2]])
    out_swapped = fuse(b, a, _params(swapped_gate, -bias))
    np.testing.assert_allclose(out_swapped.data, out.data, atol=1e-12)


def test_gradients_vs_fd():
    rng = np.random.default_rng(9)
    a = Tensor(rng.normal(size=(2, 2, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=(2, 2, 3)), requires_grad=True)
    params = init_fusion_params(3, rng, scale=0.5)
    targets = [a, b, params.gate, params.bias]
    err = max_grad_rel_err(lambda: fuse(a, b, params).sum(), targets)
    assert err < 1e-4
