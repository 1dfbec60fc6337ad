"""Command-line interface.

    score gen     --config cfg [--set s.k=v ...] [--seed N]
    score prior   --image in.svol --out prior.svol [--set prior.k=v ...]
    score train   --config cfg [--set s.k=v ...] [--seed N]
    score refine  --checkpoint ckpt --image img.svol --masks init.svol --out out.svol
    score eval    --manifest cases.jsonl --checkpoint ckpt --out dir
    score serve   --manifest cases.jsonl [--bind host:port] [--assets dir]

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
error during training.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, NumericError, ScoreToolError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="score", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="INI-style config file")
        sp.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE", help="override one config key")
        sp.add_argument("--seed", type=int, default=None)

    sp = sub.add_parser("gen", help="generate a synthetic phantom dataset")
    common(sp)
    sp.add_argument("--out", help="output directory (overrides [gen] out_dir)")

    sp = sub.add_parser("prior", help="compute the boundary prior of a volume")
    common(sp)
    sp.add_argument("--image", required=True)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("train", help="train the refiner")
    common(sp)

    sp = sub.add_parser("refine", help="refine one case with a trained checkpoint")
    common(sp, config=False)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--image", required=True)
    sp.add_argument("--masks", required=True)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("eval", help="evaluate a checkpoint over a manifest")
    common(sp, config=False)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("serve", help="serve the annotation API and UI")
    common(sp, config=False)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--bind", default="127.0.0.1:8000")
    sp.add_argument("--assets", default=None, help="directory with built UI assets")
    return p


def _cmd_gen(args) -> int:
    from .config import load_gen_config
    from .synth import generate_dataset

    cfg = load_gen_config(args.config, args.overrides, args.seed)
    out_dir = args.out or cfg.out_dir
    manifests = generate_dataset(cfg.phantom, cfg.dataset, out_dir)
    for split, path in manifests.items():
        print(f"{split}: {path}")
    return EXIT_OK


def _cmd_prior(args) -> int:
    from .config import _build  # reuse section coercion for [prior]
    from .config import _read_sections, apply_overrides
    from .prior import PriorConfig, build_prior
    from .volume import read_volume, write_volume

    sections = _read_sections(args.config) if args.config else {}
    apply_overrides(sections, args.overrides)
    pcfg = _build(PriorConfig, sections.get("prior", {}), "prior")
    img = read_volume(args.image)
    res = build_prior(img, pcfg)
    write_volume(res.prior, args.out)
    print(f"t_lo={res.t_lo:.4f} t_hi={res.t_hi:.4f}"
          + (" (degenerate fallback)" if res.degenerate else ""))
    return EXIT_OK


def _cmd_train(args) -> int:
    from .config import load_train_config
    from .training import train

    cfg = load_train_config(args.config, args.overrides, args.seed)
    result = train(cfg)
    print(f"checkpoint: {result.checkpoint}")
    print(f"best step {result.selection.best_step}, "
          f"validation dice {result.selection.best_score:.4f}")
    return EXIT_OK


def _cmd_refine(args) -> int:
    from .training import refine
    from .volume import read_masks, read_volume, write_masks

    img = read_volume(args.image)
    init = read_masks(args.masks)
    out = refine(args.checkpoint, img, init)
    write_masks(out, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    from .training import evaluate

    summary = evaluate(args.manifest, args.checkpoint, args.out)
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def _cmd_serve(args) -> int:
    from .server import serve

    serve(args.manifest, args.bind, args.assets)
    return EXIT_OK


_COMMANDS = {
    "gen": _cmd_gen,
    "prior": _cmd_prior,
    "train": _cmd_train,
    "refine": _cmd_refine,
    "eval": _cmd_eval,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ScoreToolError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
