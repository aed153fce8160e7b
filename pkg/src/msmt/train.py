"""Alternating adversarial training loop with Adam.

Each batch takes one discriminator step per stage on real and detached
generated images, then one generator step on the full objective.  Runs are
deterministic in (config, seed, corpus): the init and training rng streams
are derived from the seed, and loss logs plus checkpoints are byte-stable.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from msmt import checkpoint
from msmt.config import Config
from msmt.data import CorpusItem, sample_corpus
from msmt.losses import LossWeights, discriminator_loss, generator_loss
from msmt.model import Generator, build_discriminators, collect_records
from msmt.tensor import Tensor, add as tensor_add


class TrainingDiverged(RuntimeError):
    pass


class Adam:
    def __init__(self, params: dict[str, Tensor], lr: float, beta1: float, beta2: float,
                 eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.t = 0

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.zero_grad()

    def step(self) -> None:
        self.t += 1
        correct1 = 1.0 - self.beta1 ** self.t
        correct2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / correct1) / (np.sqrt(v / correct2) + self.eps)


def loss_columns(cfg: Config) -> list[str]:
    stages = cfg.stage_count
    return (["step", "l_ca"]
            + [f"l_red_{k}" for k in range(2, stages + 1)]
            + [f"l_g_{k}" for k in range(1, stages + 1)]
            + [f"l_d_{k}" for k in range(1, stages + 1)])


def train(cfg: Config, out_dir: str | Path, corpus: list[CorpusItem] | None = None,
          log=print) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    init_rng = np.random.default_rng([cfg.seed, 0])
    gen = Generator(cfg, init_rng)
    discs = build_discriminators(cfg, init_rng)
    log(f"generator parameters: {gen.count_parameters()}")

    if corpus is None:
        corpus = sample_corpus(cfg.corpus_size, seed=cfg.seed, resolutions=tuple(cfg.resolutions))
    if len(corpus) < cfg.batch_size:
        raise ValueError("corpus smaller than one batch")

    weights = LossWeights(ca=cfg.weight_ca, redundancy=cfg.weight_red)
    g_opt = Adam(gen.parameters(), cfg.lr, cfg.beta1, cfg.beta2)
    d_opts = [Adam(d.parameters(), cfg.lr, cfg.beta1, cfg.beta2) for d in discs]
    train_rng = np.random.default_rng([cfg.seed, 1])

    columns = loss_columns(cfg)
    rows: list[list[float]] = []
    step = 0
    batches = len(corpus) // cfg.batch_size

    def dump_and_abort(batch_items, detail):
        payload = {
            "step": step,
            "captions": [" ".join(it.tokens) for it in batch_items],
            "detail": detail,
        }
        (out / "diverged.json").write_text(json.dumps(payload, indent=2))
        _write_losses(out, columns, rows)
        raise TrainingDiverged(f"non-finite loss at step {step}; dump in {out / 'diverged.json'}")

    for epoch in range(cfg.epochs):
        order = train_rng.permutation(len(corpus))
        for b in range(batches):
            batch_items = [corpus[i] for i in order[b * cfg.batch_size:(b + 1) * cfg.batch_size]]
            outs = [gen.forward(gen.vocab.encode(it.tokens), train_rng) for it in batch_items]

            # discriminator phase: real vs detached fakes, one step per stage
            for opt in d_opts:
                opt.zero_grad()
            d_values = []
            d_total = None
            for k, disc in enumerate(discs):
                real_scores, fake_scores = [], []
                for item, gout in zip(batch_items, outs):
                    sent = gout.sentence.detach()
                    real_scores.append(disc.score(Tensor(item.images[cfg.resolutions[k]]), sent))
                    fake_scores.append(disc.score(gout.images[k].detach(), sent))
                l_d = discriminator_loss(real_scores, fake_scores)
                d_values.append(l_d.item())
                d_total = l_d if d_total is None else tensor_add(d_total, l_d)
            d_total.backward()
            for opt in d_opts:
                opt.step()

            # generator phase on the live graphs
            g_opt.zero_grad()
            d_scores = [[disc.score(gout.images[k], gout.sentence) for gout in outs]
                        for k, disc in enumerate(discs)]
            ca_pairs = [(gout.mu, gout.logvar) for gout in outs]
            head_outputs = [[gout.head_outputs[j] for gout in outs]
                            for j in range(len(gen.stages))]
            g_total, comps = generator_loss(d_scores, ca_pairs, head_outputs, weights)
            g_total.backward()
            g_opt.step()

            step += 1
            row = [float(step), comps["l_ca"]]
            row += [comps[f"l_red_{k}"] for k in range(2, cfg.stage_count + 1)]
            row += [comps[f"l_g_{k}"] for k in range(1, cfg.stage_count + 1)]
            row += d_values
            rows.append(row)
            if not all(np.isfinite(v) for v in row):
                dump_and_abort(batch_items, comps)

        checkpoint.save(out / f"checkpoint_epoch_{epoch + 1:03d}.msmt",
                        collect_records(cfg, gen, discs))
        log(f"epoch {epoch + 1}/{cfg.epochs}: "
            + " ".join(f"{c}={v:.4f}" for c, v in zip(columns[1:], rows[-1][1:])))

    final = out / "checkpoint.msmt"
    checkpoint.save(final, collect_records(cfg, gen, discs))
    losses_path = _write_losses(out, columns, rows)
    return {"checkpoint": final, "losses_csv": losses_path, "rows": rows,
            "generator": gen, "discriminators": discs}


def _write_losses(out: Path, columns: list[str], rows: list[list[float]]) -> Path:
    path = out / "losses.csv"
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(repr(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
