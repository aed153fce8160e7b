import numpy as np
import pytest

from _oracles import max_grad_rel_err
from msmt.losses import LossWeights, discriminator_loss, generator_loss, redundancy_loss
from msmt.tensor import Tensor

LN2 = float(np.log(2.0))


def _const_map(vec, s=4):
    return Tensor(np.broadcast_to(np.asarray(vec, dtype=float), (s, s, len(vec))).copy())


def _score_pair(u, c):
    return Tensor(np.asarray(u, dtype=float)), Tensor(np.asarray(c, dtype=float))


def test_redundancy_identical_heads_t6():
    out = _const_map([0.3, -0.7, 0.2])
    loss = redundancy_loss([out] * 6)
    assert loss.item() == pytest.approx(15.0, abs=1e-9)


def test_redundancy_orthogonal_heads():
    outs = [_const_map([1.0, 0.0, 0.0]), _const_map([0.0, 1.0, 0.0]), _const_map([0.0, 0.0, 1.0])]
    assert redundancy_loss(outs).item() == pytest.approx(0.0, abs=1e-12)


def test_redundancy_known_pair():
    outs = [_const_map([1.0, 0.0]), _const_map([1.0 / np.sqrt(2.0), 1.0 / np.sqrt(2.0)])]
    assert redundancy_loss(outs).item() == pytest.approx(1.0 / np.sqrt(2.0), abs=1e-9)


def test_redundancy_single_head_zero():
    assert redundancy_loss([_const_map([1.0, 2.0])]).item() == 0.0


def test_redundancy_zero_vector_pairs_contribute_zero():
    outs = [_const_map([0.0, 0.0]), _const_map([1.0, 1.0])]
    assert redundancy_loss(outs).item() == 0.0


@pytest.mark.parametrize("seed", range(10))
def test_redundancy_permutation_and_scale_invariance(seed):
    rng = np.random.default_rng(seed)
    outs = [Tensor(rng.normal(size=(3, 3, 4))) for _ in range(4)]
    base = redundancy_loss(outs).item()
    perm = [outs[i] for i in rng.permutation(4)]
    assert redundancy_loss(perm).item() == pytest.approx(base, abs=1e-12)
    scaled = [Tensor(outs[0].data * 3.7), *outs[1:]]
    assert redundancy_loss(scaled).item() == pytest.approx(base, abs=1e-10)


def test_redundancy_gradients_vs_fd():
    rng = np.random.default_rng(3)
    outs = [Tensor(rng.normal(size=(3, 3, 3)), requires_grad=True) for _ in range(3)]
    assert max_grad_rel_err(lambda: redundancy_loss(outs), outs) < 1e-4


def _neutral_ca(batch=2, dim=3):
    return [(Tensor(np.zeros(dim)), Tensor(np.zeros(dim))) for _ in range(batch)]


def test_generator_loss_half_scores_fixed_point():
    scores = [[_score_pair(0.5, 0.5)] for _ in range(3)]
    weights = LossWeights(ca=1.0, redundancy=0.5)
    total, comps = generator_loss(scores, _neutral_ca(1), [], weights)
    assert total.item() == pytest.approx(3 * LN2, abs=1e-9)
    for k in (1, 2, 3):
        assert comps[f"l_g_{k}"] == pytest.approx(LN2, abs=1e-9)
    assert comps["l_ca"] == pytest.approx(0.0, abs=1e-12)


def test_generator_loss_perfect_fooling_vanishes():
    scores = [[_score_pair(1.0, 1.0)]]
    total, _ = generator_loss(scores, _neutral_ca(1), [], LossWeights())
    assert abs(total.item()) < 1e-6


def test_generator_loss_redundancy_weight_zero_removes_term():
    rng = np.random.default_rng(4)
    heads = [[[Tensor(rng.normal(size=(2, 2, 3))) for _ in range(3)]]]
    scores = [[_score_pair(0.5, 0.5)], [_score_pair(0.5, 0.5)]]
    with_red, comps = generator_loss(scores, _neutral_ca(1), heads, LossWeights(redundancy=0.5))
    without, _ = generator_loss(scores, _neutral_ca(1), heads, LossWeights(redundancy=0.0))
    assert without.item() == pytest.approx(2 * LN2, abs=1e-9)
    assert with_red.item() == pytest.approx(2 * LN2 + 0.5 * comps["l_red_2"], abs=1e-9)


def test_generator_loss_decreases_as_scores_rise():
    weights = LossWeights()
    values = []
    for u in (0.3, 0.5, 0.7, 0.9):
        total, _ = generator_loss([[_score_pair(u, 0.5)]], _neutral_ca(1), [], weights)
        values.append(total.item())
    assert all(a > b for a, b in zip(values, values[1:]))


def test_discriminator_loss_half_scores_fixed_point():
    real = [_score_pair(0.5, 0.5) for _ in range(2)]
    fake = [_score_pair(0.5, 0.5) for _ in range(2)]
    assert discriminator_loss(real, fake).item() == pytest.approx(2 * LN2, abs=1e-9)


def test_discriminator_loss_perfect_discrimination_vanishes():
    real = [_score_pair(1.0, 1.0)]
    fake = [_score_pair(0.0, 0.0)]
    assert abs(discriminator_loss(real, fake).item()) < 1e-6


@pytest.mark.parametrize("seed", range(10))
def test_discriminator_loss_nonnegative_and_finite(seed):
    rng = np.random.default_rng(seed)
    real = [_score_pair(rng.uniform(1e-7, 1 - 1e-7), rng.uniform(1e-7, 1 - 1e-7))
            for _ in range(3)]
    fake = [_score_pair(rng.uniform(1e-7, 1 - 1e-7), rng.uniform(1e-7, 1 - 1e-7))
            for _ in range(3)]
    val = discriminator_loss(real, fake).item()
    assert np.isfinite(val)
    assert val >= 0.0


def test_discriminator_loss_batch_size_mismatch_rejected():
    with pytest.raises(ValueError, match="same size"):
        discriminator_loss([_score_pair(0.5, 0.5)], [])


def test_weights_reject_negative():
    with pytest.raises(ValueError, match="nonnegative"):
        LossWeights(ca=-1.0)


def test_losses_gradients_vs_fd():
    rng = np.random.default_rng(8)
    u = Tensor(np.array(0.4), requires_grad=True)
    c = Tensor(np.array(0.6), requires_grad=True)
    mu = Tensor(rng.normal(size=3), requires_grad=True)
    logvar = Tensor(rng.normal(size=3), requires_grad=True)
    heads = [Tensor(rng.normal(size=(2, 2, 3)), requires_grad=True) for _ in range(2)]

    def build():
        total, _ = generator_loss(
            [[(u, c)]], [(mu, logvar)], [[heads]], LossWeights(ca=1.0, redundancy=0.5))
        return total

    assert max_grad_rel_err(build, [u, c, mu, logvar, *heads]) < 1e-4
