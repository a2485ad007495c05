"""Command-line entry point: ``changeannot <command> [options]``.

Exit codes: 0 success, 2 validation error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .config import experiment_dir, load_config
from .errors import ArgumentError, ChangeAnnotError

log = logging.getLogger("changeannot")

# flag -> config key (section "{s}" is filled per command)
_COMMON = {
    "experiment": "experiment.name",
    "output_dir": "experiment.output_dir",
}
_SECTION_FLAGS = {"epochs": "{s}.epochs", "lr": "{s}.learning_rate", "batch_size": "{s}.batch_size",
                  "seed": "{s}.seed", "encoder": "{s}.encoder"}
_FLAGS = {
    "tile_size": "imagery.tile_size",
    "train_fraction": "imagery.train_fraction",
    "split_seed": "imagery.seed",
    "threshold": "cdnet.threshold",
    "corpus": "paths.corpus",
    "table": "paths.table",
    "k": "keywords.k",
    "min_df": "keywords.min_df",
    "dim": "embeddings.dim",
    "min_count": "embeddings.min_count",
    "top_n": "retrieval.top_n",
    "ks": "retrieval.ks",
    "model_name": "retrieval.model_name",
    "warm_start": "vse.warm_start",
}


def _base_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="INI config file")
    p.add_argument("--experiment", help="experiment name (sub-directory of the output dir)")
    p.add_argument("--output-dir", help="root output directory")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override any config key (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _train_flags(p, encoder=True):
    p.add_argument("--epochs", type=str)
    p.add_argument("--lr", type=str)
    p.add_argument("--batch-size", type=str)
    p.add_argument("--seed", type=str)
    if encoder:
        p.add_argument("--encoder")


def build_parser() -> argparse.ArgumentParser:
    base = _base_parser()
    parser = argparse.ArgumentParser(prog="changeannot", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[base], help="generate a synthetic scene pair + corpus and tile it")
    p.add_argument("--size", type=int, default=1024)
    p.add_argument("--scene-seed", type=int, default=0)
    p.add_argument("--n-pre", type=int, default=8)
    p.add_argument("--n-new", type=int, default=12)
    p.add_argument("--radius", type=float, nargs=2, default=(10.0, 30.0))
    p.add_argument("--noise", type=float, default=0.02)
    p.add_argument("--corpus-docs", type=int, default=60)
    p.add_argument("--tile-size", type=str)
    p.add_argument("--train-fraction", type=str)
    p.add_argument("--split-seed", type=str)

    p = sub.add_parser("tile", parents=[base], help="tile scenes and write the manifest")
    p.add_argument("--tile-size", type=str)
    p.add_argument("--train-fraction", type=str)
    p.add_argument("--split-seed", type=str)

    for name, helptext in (("train-cd", "train the change-detection U-Net"),
                           ("eval-cd", "evaluate change-detection checkpoints on the test split")):
        p = sub.add_parser(name, parents=[base], help=helptext)
        p.set_defaults(section="cdnet")
        _train_flags(p)
        p.add_argument("--no-attention", action="store_true")
        p.add_argument("--threshold", type=str)
        p.add_argument("--sweep", action="store_true", help="all six encoder kinds")
        if name == "eval-cd":
            p.add_argument("--checkpoint")

    p = sub.add_parser("train-embed", parents=[base], help="train subword skip-gram embeddings on the corpus")
    p.set_defaults(section="embeddings")
    _train_flags(p, encoder=False)
    p.add_argument("--corpus")
    p.add_argument("--dim", type=str)
    p.add_argument("--min-count", type=str)

    p = sub.add_parser("extract-keywords", parents=[base], help="write the candidate keyword list")
    p.add_argument("--corpus")
    p.add_argument("--table")
    p.add_argument("--k", type=str)
    p.add_argument("--min-df", type=str)

    p = sub.add_parser("train-vse", parents=[base], help="train the visual-semantic regression model")
    p.set_defaults(section="vse")
    _train_flags(p)
    p.add_argument("--table")
    p.add_argument("--model-name")
    p.add_argument("--warm-start", help="change-detection checkpoint to initialise the encoder from")

    for name, helptext in (("annotate", "write top-n annotations per tile"),
                           ("eval-vse", "recall@k report on the test split")):
        p = sub.add_parser(name, parents=[base], help=helptext)
        p.add_argument("--checkpoint")
        p.add_argument("--candidates")
        p.add_argument("--table")
        p.add_argument("--model-name")
        if name == "annotate":
            p.add_argument("--top-n", type=str)
            p.add_argument("--split", default="test", choices=("train", "test", "all"))
        else:
            p.add_argument("--ks", type=str, help="comma-separated, e.g. 1,5,10")

    sub.add_parser("report", parents=[base], help="collect all reports into reports/summary.txt")
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then flags.

    Without ``--config``, an experiment's saved ``config.ini`` (written by
    ``synth`` and ``tile``) is used as the file.
    """
    overrides: dict = {}
    section = getattr(args, "section", None)
    flag_map = dict(_COMMON, **_FLAGS)
    if section:
        flag_map.update({k: v.format(s=section) for k, v in _SECTION_FLAGS.items()})
    for flag, key in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = str(value)
    if getattr(args, "no_attention", False):
        overrides["cdnet.attention"] = "false"
    for item in args.set:
        if "=" not in item:
            raise ArgumentError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value
    cfg = load_config(args.config, overrides)
    saved = experiment_dir(cfg) / "config.ini"
    if args.config is None and args.command != "synth" and saved.is_file():
        cfg = load_config(saved, overrides)
    return cfg


def run(args: argparse.Namespace) -> object:
    cfg = resolve_config(args)
    cmd = args.command
    if cmd == "synth":
        return pipeline.cmd_synth(cfg, args.size, args.scene_seed, args.n_pre, args.n_new,
                                  tuple(args.radius), args.noise, args.corpus_docs)
    if cmd == "tile":
        return pipeline.cmd_tile(cfg)
    if cmd == "train-cd":
        return pipeline.cmd_train_cd(cfg, args.sweep)
    if cmd == "eval-cd":
        return pipeline.cmd_eval_cd(cfg, args.sweep, args.checkpoint)
    if cmd == "train-embed":
        return pipeline.cmd_train_embed(cfg)
    if cmd == "extract-keywords":
        return pipeline.cmd_extract_keywords(cfg)
    if cmd == "train-vse":
        return pipeline.cmd_train_vse(cfg)
    if cmd == "annotate":
        return pipeline.cmd_annotate(cfg, args.checkpoint, args.candidates, args.split)
    if cmd == "eval-vse":
        return pipeline.cmd_eval_vse(cfg, args.checkpoint, args.candidates)
    if cmd == "report":
        return pipeline.cmd_report(cfg)
    raise ArgumentError(f"unknown command {cmd!r}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = run(args)
    except ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ChangeAnnotError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if isinstance(result, list):
        for r in result:
            print(r)
    elif result is not None:
        print(result, end="" if isinstance(result, str) and result.endswith("\n") else "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
