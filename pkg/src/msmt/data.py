"""Deterministic synthetic corpus of captioned shape images.

Scenes are drawn from closed enumerations (shape, color, size, position) and
rendered without anti-aliasing at the pipeline's stage resolutions, so every
training and evaluation run has exact, reproducible ground truth.
"""

from __future__ import annotations

import itertools
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SHAPES = ("circle", "square", "triangle")
COLORS = ("red", "green", "blue", "yellow")
SIZES = ("small", "large")
POSITIONS = ("top", "bottom", "left", "right", "center")

RESOLUTIONS = (16, 32, 64)

_COLOR_RGB = {
    "red": (1.0, -1.0, -1.0),
    "green": (-1.0, 1.0, -1.0),
    "blue": (-1.0, -1.0, 1.0),
    "yellow": (1.0, 1.0, -1.0),
}
_BACKGROUND = -1.0


@dataclass(frozen=True)
class SceneSpec:
    shape: str
    color: str
    size: str
    position: str

    def __post_init__(self):
        for field, allowed in (
            ("shape", SHAPES),
            ("color", COLORS),
            ("size", SIZES),
            ("position", POSITIONS),
        ):
            if getattr(self, field) not in allowed:
                raise ValueError(f"{field} {getattr(self, field)!r} not in {allowed}")


def all_scene_specs() -> list[SceneSpec]:
    return [
        SceneSpec(shape=sh, color=c, size=sz, position=p)
        for sh, c, sz, p in itertools.product(SHAPES, COLORS, SIZES, POSITIONS)
    ]


def caption_tokens(spec: SceneSpec) -> list[str]:
    return ["a", spec.size, spec.color, spec.shape, "at", "the", spec.position]


def caption(spec: SceneSpec) -> str:
    return " ".join(caption_tokens(spec))


def parse_caption(text: str | list[str]) -> SceneSpec:
    tokens = text.split() if isinstance(text, str) else list(text)
    if len(tokens) != 7 or tokens[0] != "a" or tokens[4:6] != ["at", "the"]:
        raise ValueError(f"caption does not match the scene grammar: {tokens!r}")
    return SceneSpec(shape=tokens[3], color=tokens[2], size=tokens[1], position=tokens[6])


def vocabulary_tokens() -> list[str]:
    return ["a", "at", "the", *SIZES, *COLORS, *SHAPES, *POSITIONS]


def _anchor(position: str, s: int) -> tuple[float, float]:
    half, quarter = s / 2.0, s / 4.0
    return {
        "center": (half, half),
        "top": (quarter, half),
        "bottom": (3 * quarter, half),
        "left": (half, quarter),
        "right": (half, 3 * quarter),
    }[position]


def _shape_mask(spec: SceneSpec, s: int) -> np.ndarray:
    cy, cx = _anchor(spec.position, s)
    r = s * (0.11 if spec.size == "small" else 0.22)
    yy, xx = np.meshgrid(np.arange(s) + 0.5, np.arange(s) + 0.5, indexing="ij")
    if spec.shape == "circle":
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    if spec.shape == "square":
        return (np.abs(yy - cy) <= r) & (np.abs(xx - cx) <= r)
    # triangle with vertices chosen so the filled centroid sits on the anchor
    verts = [(cx, cy - r), (cx - r, cy + r / 2.0), (cx + r, cy + r / 2.0)]
    mask = np.ones((s, s), dtype=bool)
    for (x0, y0), (x1, y1) in zip(verts, verts[1:] + verts[:1]):
        cross = (x1 - x0) * (yy - y0) - (y1 - y0) * (xx - x0)
        mask &= cross <= 0
    return mask


def render(spec: SceneSpec, resolution: int) -> np.ndarray:
    """Rasterize a scene to (s,s,3) float64 pixels in [-1,1]."""
    if resolution not in RESOLUTIONS:
        raise ValueError(f"resolution must be one of {RESOLUTIONS}, got {resolution}")
    img = np.full((resolution, resolution, 3), _BACKGROUND)
    mask = _shape_mask(spec, resolution)
    img[mask] = _COLOR_RGB[spec.color]
    return img


@dataclass
class CorpusItem:
    index: int
    spec: SceneSpec
    tokens: list[str]
    images: dict[int, np.ndarray]


def sample_corpus(n: int, seed: int, resolutions=(16, 32)) -> list[CorpusItem]:
    """Seeded corpus of n captioned scenes covering all combinations when n >= 120."""
    if n < 1:
        raise ValueError("corpus size must be >= 1")
    specs = all_scene_specs()
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(specs))
    items = []
    for i in range(n):
        spec = specs[perm[i % len(specs)]]
        items.append(
            CorpusItem(
                index=i,
                spec=spec,
                tokens=caption_tokens(spec),
                images={res: render(spec, res) for res in resolutions},
            )
        )
    return items


def to_ppm_bytes(image: np.ndarray) -> bytes:
    """Encode an (H,W,3) image in [-1,1] as binary PPM (P6, maxval 255)."""
    h, w, _ = image.shape
    u8 = np.clip(np.rint((image + 1.0) * 127.5), 0, 255).astype(np.uint8)
    return f"P6\n{w} {h}\n255\n".encode("ascii") + u8.tobytes()


def to_png_bytes(image: np.ndarray) -> bytes:
    """Encode an (H,W,3) image in [-1,1] as an 8-bit RGB PNG."""
    h, w, _ = image.shape
    u8 = np.clip(np.rint((image + 1.0) * 127.5), 0, 255).astype(np.uint8)
    raw = b"".join(b"\x00" + u8[row].tobytes() for row in range(h))

    def chunk(tag: bytes, payload: bytes) -> bytes:
        return (struct.pack(">I", len(payload)) + tag + payload
                + struct.pack(">I", zlib.crc32(tag + payload)))

    header = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    return (b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", header)
            + chunk(b"IDAT", zlib.compress(raw)) + chunk(b"IEND", b""))


def export_corpus(items: list[CorpusItem], out_dir: str | Path) -> None:
    """Write PPM images plus a captions file with one "id<TAB>caption" line each."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for item in items:
        lines.append(f"{item.index}\t{' '.join(item.tokens)}")
        for res, img in item.images.items():
            (out / f"{item.index:05d}_{res}.ppm").write_bytes(to_ppm_bytes(img))
    (out / "captions.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
