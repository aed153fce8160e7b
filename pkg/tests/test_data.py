import numpy as np
import pytest

from msmt.data import (
    SceneSpec,
    all_scene_specs,
    caption,
    caption_tokens,
    export_corpus,
    parse_caption,
    render,
    sample_corpus,
    to_ppm_bytes,
    vocabulary_tokens,
)


def test_render_deterministic():
    spec = SceneSpec("circle", "red", "large", "center")
    np.testing.assert_array_equal(render(spec, 32), render(spec, 32))


def test_render_red_shape_on_constant_background():
    spec = SceneSpec("square", "red", "large", "center")
    img = render(spec, 16)
    mask = img[:, :, 0] > 0
    assert mask.any()
    np.testing.assert_allclose(img[mask], np.tile([1.0, -1.0, -1.0], (mask.sum(), 1)))
    np.testing.assert_allclose(img[~mask], -1.0)


@pytest.mark.parametrize("shape", ["circle", "square", "triangle"])
@pytest.mark.parametrize("size", ["small", "large"])
def test_centered_shape_centroid(shape, size):
    img = render(SceneSpec(shape, "green", size, "center"), 32)
    mask = img[:, :, 1] > 0
    yy, xx = np.nonzero(mask)
    centroid = np.array([yy.mean() + 0.5, xx.mean() + 0.5])
    assert np.all(np.abs(centroid - 16.0) < 1.0)


def test_every_spec_renders_nonempty_within_bounds():
    for spec in all_scene_specs():
        img = render(spec, 16)
        mask = np.any(img != -1.0, axis=2)
        assert mask.any(), spec
        assert img.min() >= -1.0 and img.max() <= 1.0


def test_caption_grammar_length():
    for spec in all_scene_specs():
        assert 6 <= len(caption_tokens(spec)) <= 7


def test_caption_roundtrip_identity():
    for spec in all_scene_specs():
        assert parse_caption(caption(spec)) == spec


def test_parse_rejects_nonconforming():
    with pytest.raises(ValueError, match="grammar"):
        parse_caption("a small red circle near the top")


def test_corpus_deterministic():
    a = sample_corpus(20, seed=5, resolutions=(16,))
    b = sample_corpus(20, seed=5, resolutions=(16,))
    for x, y in zip(a, b):
        assert x.spec == y.spec
        np.testing.assert_array_equal(x.images[16], y.images[16])


def test_corpus_covers_all_combinations():
    items = sample_corpus(240, seed=0, resolutions=(16,))
    seen = {item.spec for item in items}
    assert len(seen) == 120
    counts = {}
    for item in items:
        counts[item.spec] = counts.get(item.spec, 0) + 1
    assert all(c >= 1 for c in counts.values())


def test_corpus_captions_parse_back():
    for item in sample_corpus(10, seed=3, resolutions=(16,)):
        assert parse_caption(item.tokens) == item.spec


def test_vocabulary_token_count():
    tokens = vocabulary_tokens()
    assert len(tokens) == len(set(tokens))
    assert 15 <= len(tokens) <= 25


def test_ppm_bytes_roundtrip_values():
    img = np.full((2, 3, 3), -1.0)
    img[0, 0] = [1.0, -1.0, 1.0]
    raw = to_ppm_bytes(img)
    assert raw.startswith(b"P6\n3 2\n255\n")
    pixels = np.frombuffer(raw.split(b"255\n", 1)[1], dtype=np.uint8).reshape(2, 3, 3)
    assert tuple(pixels[0, 0]) == (255, 0, 255)
    assert tuple(pixels[1, 2]) == (0, 0, 0)


def test_export_corpus(tmp_path):
    items = sample_corpus(3, seed=1, resolutions=(16, 32))
    export_corpus(items, tmp_path)
    captions = (tmp_path / "captions.tsv").read_text().splitlines()
    assert len(captions) == 3
    idx, text = captions[0].split("\t")
    assert parse_caption(text) == items[0].spec
    assert (tmp_path / "00000_16.ppm").exists()
    assert (tmp_path / "00002_32.ppm").exists()
