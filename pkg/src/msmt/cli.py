"""Command-line interface: train, generate, gradcheck and eval."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from msmt import audit, config, evaluate, train as train_mod
from msmt.data import to_png_bytes, to_ppm_bytes


def _add_train(sub):
    p = sub.add_parser("train", help="train the full pipeline on the synthetic corpus")
    p.add_argument("--config", required=True, help="JSON config file (preset plus overrides)")
    p.add_argument("--out", required=True, help="output directory for checkpoints and logs")


def _add_generate(sub):
    p = sub.add_parser("generate", help="generate stage images for one caption")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--caption", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--png", action="store_true", help="also write PNG copies")


def _add_gradcheck(sub):
    p = sub.add_parser("gradcheck", help="finite-difference audit of every gradient path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="optional JSON config; defaults to the desk preset")
    p.add_argument("--samples", type=int, default=audit.SAMPLES_PER_TENSOR,
                   help="entries checked per parameter tensor")


def _add_eval(sub):
    p = sub.add_parser("eval", help="Fréchet distance of generated vs real images")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--out", required=True, help="path for the JSON report")
    p.add_argument("--extractor-seed", type=int, default=0)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="msmt")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_train(sub)
    _add_generate(sub)
    _add_gradcheck(sub)
    _add_eval(sub)
    args = parser.parse_args(argv)

    if args.command == "train":
        cfg = config.load(args.config)
        result = train_mod.train(cfg, args.out)
        print(f"checkpoint: {result['checkpoint']}")
        print(f"loss log:   {result['losses_csv']}")
        return 0

    if args.command == "generate":
        cfg, images = evaluate.generate_images(args.ckpt, args.caption, args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for res, image in zip(cfg.resolutions, images):
            (out / f"stage_{res}.ppm").write_bytes(to_ppm_bytes(image))
            if args.png:
                (out / f"stage_{res}.png").write_bytes(to_png_bytes(image))
        print(f"wrote {len(images)} images to {out}")
        return 0

    if args.command == "gradcheck":
        cfg = config.load(args.config) if args.config else None
        report = audit.run_gradcheck(cfg=cfg, seed=args.seed, samples=args.samples)
        return 0 if report["passed"] else 1

    if args.command == "eval":
        report = evaluate.evaluate_checkpoint(args.ckpt, args.n,
                                              extractor_seed=args.extractor_seed)
        Path(args.out).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
        print(json.dumps(report))
        return 0

    return 2


if __name__ == "__main__":
    sys.exit(main())
