import numpy as np

from msmt.audit import run_gradcheck
from msmt.config import from_dict

TINY = {"preset": "desk", "resolutions": [8, 16], "n_word": 8, "n_feat": 4, "n_mem": 8,
        "n_noise": 4, "n_cond": 8, "grid": 2, "head_count": 1}


def _cfg():
    return from_dict(TINY)


def test_audit_passes_on_fresh_init():
    report = run_gradcheck(cfg=_cfg(), seed=0, samples=1, log=lambda *a: None)
    assert report["passed"]
    assert report["max_rel_err"] < 1e-4
    assert set(report["paths"]) == {"mtwig", "sdm", "imhm", "discriminator",
                                    "losses.generator", "losses.discriminator"}


def test_audit_fails_with_corrupted_backward():
    report = run_gradcheck(cfg=_cfg(), seed=0, samples=1, corrupt=True, log=lambda *a: None)
    assert not report["passed"]
    assert report["max_rel_err"] > 1e-4


def test_audit_deterministic_given_seed():
    a = run_gradcheck(cfg=_cfg(), seed=3, samples=1, log=lambda *a_: None)
    b = run_gradcheck(cfg=_cfg(), seed=3, samples=1, log=lambda *a_: None)
    assert a["max_rel_err"] == b["max_rel_err"]
    for path in a["paths"]:
        assert a["paths"][path]["groups"] == b["paths"][path]["groups"]


def test_audit_reports_every_parameter_group():
    report = run_gradcheck(cfg=_cfg(), seed=1, samples=1, log=lambda *a: None)
    sdm_groups = report["paths"]["sdm"]["groups"]
    assert "input.features" in sdm_groups and "input.words" in sdm_groups
    assert any(name.startswith("head.") for name in sdm_groups)
    gen_groups = report["paths"]["losses.generator"]["groups"]
    assert any(name.startswith("generator.encoder.") for name in gen_groups)
    assert any(name.startswith("generator.stage2.") for name in gen_groups)
    assert all(np.isfinite(v) for v in gen_groups.values())
