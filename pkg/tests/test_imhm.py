import numpy as np
import pytest

import msmt.imhm as imhm_mod
from _oracles import max_grad_rel_err
from msmt.fusion import fuse
from msmt.imhm import RefinementStage, memory_source_check, refine
from msmt.mtwig import StageFeatures
from msmt.sdm import GridSpec, run_head
from msmt.tensor import Tensor

N_WORD, N_FEAT, N_MEM = 4, 3, 5


def _stage(head_count=2, s=8, h=2, seed=0, scale=0.1):
    return RefinementStage(2, head_count, N_WORD, N_FEAT, N_MEM, GridSpec(s, h),
                           np.random.default_rng(seed), scale=scale)


def _inputs(s=8, length=3, seed=1):
    rng = np.random.default_rng(seed)
    feats = StageFeatures(Tensor(rng.normal(size=(s, s, N_FEAT))), stage=1, resolution=s)
    return feats, Tensor(rng.normal(size=(length, N_WORD)))


def test_single_head_matches_manual_path():
    stage = _stage(head_count=1)
    feats, words = _inputs()
    result = refine(feats, words, stage)

    out, _, _ = run_head(stage.heads[0], words, feats.features, feats.features)
    update = fuse(feats.features, out.features, stage.head_fusions[0])
    np.testing.assert_array_equal(result.head_outputs[0].data, out.features.data)
    np.testing.assert_array_equal(result.updates[0].data, update.data)
    # with one head the stage response is exactly fuse(U_1, stage input)
    response = fuse(update, feats.features, stage.skip_fusion)
    refused = fuse(result.updates[-1], feats.features, stage.skip_fusion)
    np.testing.assert_array_equal(refused.data, response.data)


def test_second_head_neutralized_keeps_update():
    stage = _stage(head_count=2)
    stage.heads[1].value_w.data[...] = 0.0
    stage.heads[1].value_b.data[...] = 0.0
    stage.head_fusions[1].gate.data[...] = 0.0
    stage.head_fusions[1].bias.data[...] = 20.0
    feats, words = _inputs(seed=2)
    result = refine(feats, words, stage)
    np.testing.assert_allclose(result.head_outputs[1].data, 0.0, atol=1e-12)
    np.testing.assert_allclose(result.updates[1].data, result.updates[0].data, atol=1e-7)


def test_image_bounds_and_resolution_doubles():
    stage = _stage(head_count=2, scale=0.5)
    feats, words = _inputs(seed=3)
    result = refine(feats, words, stage)
    assert result.image.shape == (16, 16, 3)
    assert result.stage_features.features.shape == (16, 16, N_FEAT)
    assert result.stage_features.resolution == 16
    assert result.image.data.min() >= -1.0 and result.image.data.max() <= 1.0


def test_resolution_mismatch_rejected():
    stage = _stage()
    feats, words = _inputs(s=4)
    with pytest.raises(ValueError, match="expects 8x8"):
        refine(feats, words, stage)


@pytest.mark.parametrize("head_count", [1, 2, 3])
def test_head_pass_and_fusion_counts(head_count, monkeypatch):
    stage = _stage(head_count=head_count, seed=head_count)
    feats, words = _inputs(seed=head_count)
    calls = {"head": 0, "fuse": 0}

    real_run_head, real_fuse = imhm_mod.run_head, imhm_mod.fuse

    def counting_head(*args, **kwargs):
        calls["head"] += 1
        return real_run_head(*args, **kwargs)

    def counting_fuse(*args, **kwargs):
        calls["fuse"] += 1
        return real_fuse(*args, **kwargs)

    monkeypatch.setattr(imhm_mod, "run_head", counting_head)
    monkeypatch.setattr(imhm_mod, "fuse", counting_fuse)
    result = refine(feats, words, stage)
    assert calls["head"] == head_count
    assert calls["fuse"] == head_count + 1
    assert len(result.head_outputs) == head_count


def test_every_fusion_step_convex():
    stage = _stage(head_count=3, scale=0.4, seed=5)
    feats, words = _inputs(seed=5)
    result = refine(feats, words, stage)
    prev = feats.features.data
    for update, out in zip(result.updates, result.head_outputs):
        lo = np.minimum(prev, out.data)
        hi = np.maximum(prev, out.data)
        assert np.all(update.data >= lo - 1e-12) and np.all(update.data <= hi + 1e-12)
        prev = update.data


def test_memory_source_check_passes_on_fresh_stage():
    stage = _stage(head_count=2, seed=6)
    feats, words = _inputs(seed=6)
    memory_source_check(stage, feats, words)


def test_memory_source_check_detects_shared_heads():
    stage = _stage(head_count=2, seed=7)
    stage.heads[1] = stage.heads[0]
    feats, words = _inputs(seed=7)
    with pytest.raises(AssertionError, match="identical memory banks"):
        memory_source_check(stage, feats, words)


def test_full_stage_gradients_vs_fd_desk_scale():
    stage = RefinementStage(2, 2, 16, 8, 16, GridSpec(16, 4),
                            np.random.default_rng(8), scale=0.05)
    rng = np.random.default_rng(9)
    feats = StageFeatures(Tensor(rng.normal(size=(16, 16, 8)), requires_grad=True),
                          stage=1, resolution=16)
    words = Tensor(rng.normal(size=(3, 16)), requires_grad=True)

    def build():
        return refine(feats, words, stage).image.sum()

    params = stage.parameters()
    targets = [feats.features, words,
               params["head0.gate_word"], params["head0.cell_enc_w"],
               params["head0.key_w"], params["head1.value_w"],
               params["fuse0.gate"], params["fuse1.bias"], params["skip.gate"],
               params["res0a_w"], params["up_w"], params["image_w"]]
    assert max_grad_rel_err(build, targets, max_entries=5) < 1e-4
