"""Full generator pipeline and per-stage discriminators.

The generator chains the text encoder, the word-window initial stage and the
refinement stages; every parameter is reachable under a stable dotted name,
which is also the checkpoint record name.  Checkpoints embed the numeric
config fields as scalar records so generation and evaluation can rebuild the
model from a single file.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from msmt.config import Config
from msmt.data import vocabulary_tokens
from msmt.discriminator import Discriminator
from msmt.imhm import RefinementStage, RefineResult, refine
from msmt.mtwig import MtwigParams, StageFeatures, run_mtwig
from msmt.sdm import GridSpec
from msmt.tensor import Tensor
from msmt.text import TextEncoder, Vocabulary


@dataclass
class GeneratorOutput:
    images: list[Tensor]               # one per stage, coarse to fine
    stage_features: list[StageFeatures]
    head_outputs: list[list[Tensor]]   # per refinement stage, per head
    words: Tensor
    sentence: Tensor
    mu: Tensor
    logvar: Tensor


class Generator:
    def __init__(self, cfg: Config, rng: np.random.Generator):
        self.cfg = cfg
        self.vocab = Vocabulary(vocabulary_tokens())
        self.encoder = TextEncoder(len(self.vocab), cfg.n_word, cfg.n_cond, rng)
        self.mtwig = MtwigParams(cfg.n_word, cfg.n_noise, cfg.n_cond, cfg.n_feat,
                                 cfg.resolutions[0], cfg.kernel_size, rng)
        self.stages = [
            RefinementStage(k + 2, cfg.head_count, cfg.n_word, cfg.n_feat, cfg.n_mem,
                            GridSpec(cfg.resolutions[k], cfg.grid), rng)
            for k in range(len(cfg.resolutions) - 1)
        ]

    def parameters(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        for name, t in self.encoder.parameters().items():
            params[f"encoder.{name}"] = t
        for name, t in self.mtwig.parameters().items():
            params[f"mtwig.{name}"] = t
        for stage in self.stages:
            for name, t in stage.parameters().items():
                params[f"stage{stage.stage_index}.{name}"] = t
        return params

    def count_parameters(self) -> int:
        return sum(t.size for t in self.parameters().values())

    def forward(self, token_ids: list[int], rng: np.random.Generator) -> GeneratorOutput:
        """All stage images for one caption; rng supplies the CA noise and z."""
        words, sentence = self.encoder.encode(token_ids)
        resampled, mu, logvar = self.encoder.condition_augment(sentence, rng)
        noise = Tensor(np.asarray(rng.standard_normal(self.cfg.n_noise)))

        stage, image, _ = run_mtwig(self.mtwig, resampled, noise, words)
        images, feats, heads = [image], [stage], []
        for refinement in self.stages:
            result: RefineResult = refine(stage, words, refinement)
            stage = result.stage_features
            images.append(result.image)
            feats.append(stage)
            heads.append(result.head_outputs)
        return GeneratorOutput(images=images, stage_features=feats, head_outputs=heads,
                               words=words, sentence=sentence, mu=mu, logvar=logvar)


def build_discriminators(cfg: Config, rng: np.random.Generator) -> list[Discriminator]:
    return [Discriminator(res, cfg.n_word, 2 * cfg.n_feat, rng) for res in cfg.resolutions]


# ---------------------------------------------------------------------------
# analytic parameter count, kept in sync with the constructions above


def _conv_count(kh, kw, cin, cout):
    return kh * kw * cin * cout + cout


def _fusion_count(n_feat):
    return 2 * n_feat + 1


def _sdm_count(cfg: Config, grid_side: int) -> int:
    n_w, n_r, n_m = cfg.n_word, cfg.n_feat, cfg.n_mem
    total = n_w                       # gate word row
    total += grid_side * grid_side * n_r  # gate cell rows
    total += n_w * n_m + n_m          # word encoder
    total += _conv_count(3, 3, n_r, n_m)
    total += 3 * _conv_count(3, 3, n_r, n_r)  # query encoders
    total += _conv_count(3, 3, n_m, 3 * n_r)  # key encoder
    total += _conv_count(3, 3, n_m, n_r)      # value encoder
    return total


def analytic_generator_param_count(cfg: Config) -> int:
    """Closed-form size of the generator, mirrored from the layer shapes."""
    vocab_size = len(vocabulary_tokens())
    n_w, n_r = cfg.n_word, cfg.n_feat
    total = vocab_size * n_w
    total += n_w * n_w + n_w                      # sentence projection
    total += 2 * (n_w * cfg.n_cond + cfg.n_cond)  # CA mean and log-variance

    n_in = cfg.n_cond + cfg.n_noise + n_w
    depth = int(np.log2(cfg.resolutions[0] // 4))
    c0 = 8 * n_r if depth else n_r
    total += cfg.kernel_size * n_in * n_in + n_in  # window conv (n_window = n_in)
    total += n_in * 16 * c0 + 16 * c0              # seed projection
    channels = [c0 >> i for i in range(1, depth)] + [n_r] if depth else []
    cin = c0
    for cout in channels:
        total += _conv_count(3, 3, cin, cout)
        cin = cout
    total += _fusion_count(n_r)
    total += _conv_count(3, 3, n_r, 3)

    for k in range(len(cfg.resolutions) - 1):
        total += cfg.head_count * _sdm_count(cfg, cfg.grid)
        total += (cfg.head_count + 1) * _fusion_count(n_r)
        total += 4 * _conv_count(3, 3, n_r, n_r)  # two residual blocks
        total += _conv_count(3, 3, n_r, n_r)      # upsampling conv
        total += _conv_count(3, 3, n_r, 3)        # image head
    return total


# ---------------------------------------------------------------------------
# checkpoint records

_CONFIG_SCALARS = ("n_word", "n_feat", "n_mem", "n_noise", "n_cond", "grid", "head_count",
                   "kernel_size", "weight_ca", "weight_red", "lr", "beta1", "beta2",
                   "batch_size", "epochs", "seed", "corpus_size")
_CONFIG_INTS = {"n_word", "n_feat", "n_mem", "n_noise", "n_cond", "grid", "head_count",
                "kernel_size", "batch_size", "epochs", "seed", "corpus_size"}


def collect_records(cfg: Config, gen: Generator,
                    discs: list[Discriminator]) -> dict[str, np.ndarray]:
    records: dict[str, np.ndarray] = {"config.resolutions": np.asarray(cfg.resolutions, dtype=float)}
    for field in _CONFIG_SCALARS:
        records[f"config.{field}"] = np.asarray(float(getattr(cfg, field)))
    for name, t in gen.parameters().items():
        records[f"generator.{name}"] = t.data
    for disc in discs:
        for name, t in disc.parameters().items():
            records[f"disc{disc.resolution}.{name}"] = t.data
    return records


def restore(records: dict[str, np.ndarray]) -> tuple[Config, Generator, list[Discriminator]]:
    """Rebuild config, generator and discriminators from checkpoint records."""
    try:
        resolutions = [int(round(float(v))) for v in records["config.resolutions"]]
        fields = {
            name: (int(round(float(records[f"config.{name}"]))) if name in _CONFIG_INTS
                   else float(records[f"config.{name}"]))
            for name in _CONFIG_SCALARS
        }
    except KeyError as err:
        raise ValueError(f"checkpoint is missing config record {err.args[0]!r}") from None
    cfg = Config(resolutions=resolutions, preset="custom", **fields)

    rng = np.random.default_rng(0)
    gen = Generator(cfg, rng)
    discs = build_discriminators(cfg, rng)
    tensors: dict[str, Tensor] = {}
    for name, t in gen.parameters().items():
        tensors[f"generator.{name}"] = t
    for disc in discs:
        for name, t in disc.parameters().items():
            tensors[f"disc{disc.resolution}.{name}"] = t

    param_records = {k for k in records if not k.startswith("config.")}
    missing = set(tensors) - param_records
    extra = param_records - set(tensors)
    if missing or extra:
        raise ValueError(f"checkpoint does not match the model: missing {sorted(missing)[:3]}, "
                         f"unexpected {sorted(extra)[:3]}")
    for name, t in tensors.items():
        arr = records[name]
        if tuple(arr.shape) != tuple(t.shape):
            raise ValueError(f"record {name} has shape {arr.shape}, expected {t.shape}")
        t.data[...] = arr
    return cfg, gen, discs
