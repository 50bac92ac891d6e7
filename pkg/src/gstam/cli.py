"""``gstam`` command line: gen, train, eval, ablate, sweep.

Exit codes: 0 success, 2 configuration error, 3 I/O or parse error,
4 evaluation error, 5 training error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .branches import load_checkpoint, save_checkpoint
from .config import build_synth, build_train, load_config, merge, parse_overrides
from .errors import ConfigError, EvaluationError, GstamError, ParseError, TrainingError
from .experiments import (SWEEP_LAMBDAS, Splits, ablation_grid, lambda_sweep, results_csv, summarize,
                          summary_csv)
from .metrics import evaluate
from .partition import load_partition
from .synthdata import SynthConfig, config_from_header, generate_dataset, load_dataset, read_header, save_dataset
from .trainer import build_model, fit, format_log_csv

logger = logging.getLogger("gstam")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_EVAL, EXIT_TRAIN = 0, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


# ----------------------------------------------------------------------------
# helpers


def resolve_seed(flag) -> int:
    """``--seed`` if given, else ``$GSTAM_SEED``, else 0."""
    if flag is not None:
        return int(flag)
    env = os.environ.get("GSTAM_SEED")
    if env is None or env == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise CliError(f"GSTAM_SEED must be an integer, got {env!r}", EXIT_CONFIG) from None


def read_conf(args) -> dict:
    try:
        base = load_config(args.config) if getattr(args, "config", None) else {}
    except OSError as exc:
        raise CliError(f"cannot read config {args.config}: {exc}", EXIT_IO) from None
    except (ParseError, ConfigError) as exc:
        raise CliError(f"{args.config}: {exc}", EXIT_CONFIG) from None
    try:
        return merge(base, parse_overrides(getattr(args, "set", None)))
    except ConfigError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None


def train_config(args, conf: dict, seed: int):
    values = dict(conf.get("train", {}))
    for flag, key in (("attention", "variant"), ("regularizer", "regularizer"), ("lam", "lam"),
                      ("epochs", "epochs")):
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = v
    values["seed"] = seed
    try:
        return build_train(values, full_scale=args.full_scale)
    except ConfigError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None


def read_data(path):
    """``(samples, SynthConfig)``; the config comes from the file header when present."""
    try:
        samples = load_dataset(path)
        synth = config_from_header(read_header(path))
    except OSError as exc:
        raise CliError(f"cannot read dataset {path}: {exc}", EXIT_IO) from None
    except (ParseError, ConfigError, TypeError) as exc:
        raise CliError(f"{path}: {exc}", EXIT_IO) from None
    synth = synth or SynthConfig()
    specs, _ = synth.specs()
    for s in samples:
        if s.labels.shape != (len(specs),) or s.frames.shape[0] != synth.d:
            raise CliError(f"{path}: record id={s.id} does not match the attribute layout", EXIT_IO)
    return samples, synth


def write_text(path: Path, text: str):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from None


def write_manifest(path: Path, command: str, config: dict, seed: int, artifacts, started: str):
    """Run manifest: everything needed to rerun, plus the one timestamp of the run."""
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "started": started,
        "artifacts": sorted(str(a) for a in artifacts),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# ----------------------------------------------------------------------------
# commands


def cmd_gen(args) -> int:
    started = now()
    seed = resolve_seed(args.seed)
    conf = read_conf(args)
    values = dict(conf.get("synth", {}))
    if args.n_videos is not None:
        values["n_videos"] = args.n_videos
    if args.partition:
        try:
            specs, part = load_partition(args.partition)
        except OSError as exc:
            raise CliError(f"cannot read partition {args.partition}: {exc}", EXIT_IO) from None
        except (ParseError, ConfigError) as exc:
            raise CliError(f"{args.partition}: {exc}", EXIT_CONFIG) from None
        values["layout"] = [(name, [(specs[i].name, specs[i].classes) for i in members])
                            for name, members in zip(part.names, part.groups)]
    try:
        synth = build_synth(values)
    except ConfigError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None
    out = Path(args.out)
    samples = generate_dataset(synth, seed)
    try:
        save_dataset(out, samples, synth)
    except OSError as exc:
        raise CliError(f"cannot write {out}: {exc}", EXIT_IO) from None
    write_manifest(out.with_name(out.name + ".manifest.json"), "gen", {"synth": synth.to_dict()}, seed,
                   [out], started)
    frac = float(np.mean([s.occ_mask.mean() for s in samples])) if samples else 0.0
    print(f"wrote {len(samples)} videos to {out} (occluded frame fraction {frac:.4f})")
    return EXIT_OK


def cmd_train(args) -> int:
    started = now()
    seed = resolve_seed(args.seed)
    conf = read_conf(args)
    cfg = train_config(args, conf, seed)
    train, synth = read_data(args.data)
    val = read_data(args.val)[0] if args.val else None
    specs, part = synth.specs()
    try:
        model = build_model(specs, part, synth.d, cfg)
        result = fit(model, train, cfg, val=val)
    except TrainingError as exc:
        raise CliError(str(exc), EXIT_TRAIN) from None
    except ConfigError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None
    except EvaluationError as exc:
        raise CliError(str(exc), EXIT_EVAL) from None
    out = Path(args.out)
    log_path, ckpt_path = out / "train_log.csv", out / "model.npz"
    write_text(log_path, format_log_csv(result.log))
    try:
        save_checkpoint(model, ckpt_path, {"train": cfg.to_dict(), "best_epoch": result.best_epoch})
    except OSError as exc:
        raise CliError(f"cannot write {ckpt_path}: {exc}", EXIT_IO) from None
    write_manifest(out / "manifest.json", "train",
                   {"train": cfg.to_dict(), "synth": synth.to_dict(), "data": str(args.data),
                    "val": str(args.val) if args.val else None}, seed, [log_path, ckpt_path], started)
    last = result.log[-1] if result.log else None
    if last:
        print(f"epoch {last['epoch']}: loss_class={last['loss_class']:.5f} loss_reg={last['loss_reg']:.5f}")
    print(f"wrote {ckpt_path} and {log_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        model, extra = load_checkpoint(args.checkpoint)
    except OSError as exc:
        raise CliError(f"cannot read checkpoint {args.checkpoint}: {exc}", EXIT_IO) from None
    except ParseError as exc:
        raise CliError(str(exc), EXIT_IO) from None
    data, _ = read_data(args.data)
    T = args.T or int(extra.get("train", {}).get("T", 6))
    try:
        report = evaluate(model, data, args.subset, T)
    except EvaluationError as exc:
        raise CliError(str(exc), EXIT_EVAL) from None
    text = report.to_csv()
    if args.out:
        write_text(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _grid_inputs(args):
    started = now()
    seed = resolve_seed(args.seed)
    conf = read_conf(args)
    cfg = train_config(args, conf, seed)
    train, synth = read_data(args.data)
    test = read_data(args.test)[0]
    val = read_data(args.val)[0] if args.val else []
    seeds = [seed + i for i in range(args.seeds)]
    return started, cfg, Splits(train, val, test, synth), seeds


def _write_grid(args, name, results, cfg, seeds, started):
    out = Path(args.out)
    runs, summary = out / f"{name}_runs.csv", out / f"{name}_summary.csv"
    write_text(runs, results_csv(results))
    write_text(summary, summary_csv(summarize(results)))
    write_manifest(out / "manifest.json", name, {"train": cfg.to_dict(), "seeds": seeds, "data": str(args.data),
                   "test": str(args.test), "val": str(args.val) if args.val else None}, seeds[0],
                   [runs, summary], started)
    sys.stdout.write(summary_csv(summarize(results)))
    failed = [r for r in results if not r.ok]
    if failed:
        logger.error("%d of %d runs failed", len(failed), len(results))
        return EXIT_TRAIN
    return EXIT_OK


def cmd_ablate(args) -> int:
    started, cfg, splits, seeds = _grid_inputs(args)
    results = ablation_grid(splits, cfg, seeds)
    return _write_grid(args, "ablation", results, cfg, seeds, started)


def cmd_sweep(args) -> int:
    started, cfg, splits, seeds = _grid_inputs(args)
    results = lambda_sweep(splits, cfg, args.lambdas, seeds)
    return _write_grid(args, "sweep", results, cfg, seeds, started)


# ----------------------------------------------------------------------------
# parser


def _lambdas(text):
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad lambda list {text!r}") from None
    if not vals or any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError("lambdas must be non-negative")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gstam", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"gstam {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, train_flags=True):
        sp.add_argument("--config", help="key = value config file (train.*, synth.*)")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        sp.add_argument("--seed", type=int, help="seed (default: $GSTAM_SEED, else 0)")
        if train_flags:
            sp.add_argument("--attention", choices=["stam", "ptam"])
            sp.add_argument("--regularizer", choices=["none", "sparsity", "group"])
            sp.add_argument("--lambda", dest="lam", type=float)
            sp.add_argument("--epochs", type=int)
            sp.add_argument("--full-scale", action="store_true",
                            help="full schedule (batch 64, 200 epochs, decay at 100) instead of the desk one")

    g = sub.add_parser("gen", help="generate a synthetic dataset file")
    common(g, train_flags=False)
    g.add_argument("--out", required=True)
    g.add_argument("--n-videos", type=int)
    g.add_argument("--partition", help="attribute grouping file ('group: attr:classes, ...' per line)")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train one model")
    common(t)
    t.add_argument("--data", required=True)
    t.add_argument("--val", help="validation dataset for best-epoch selection")
    t.add_argument("--out", required=True, help="output directory")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--subset", choices=["all", "occluded", "visible"], default="all")
    e.add_argument("--T", type=int, help="segment length (default: the training value)")
    e.add_argument("--out", help="CSV path (default: stdout)")
    e.set_defaults(func=cmd_eval)

    for name, func, helptext in (("ablate", cmd_ablate, "{ptam, stam} x {none, sparsity, group} grid"),
                                 ("sweep", cmd_sweep, "lambda sweep with the group regularizer")):
        a = sub.add_parser(name, help=helptext)
        common(a)
        a.add_argument("--data", required=True, help="training dataset")
        a.add_argument("--test", required=True, help="test dataset")
        a.add_argument("--val", help="validation dataset for best-epoch selection")
        a.add_argument("--seeds", type=int, default=3, help="number of consecutive seeds")
        a.add_argument("--out", required=True, help="output directory")
        if name == "sweep":
            a.add_argument("--lambdas", type=_lambdas, default=list(SWEEP_LAMBDAS), help="comma separated")
        a.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"gstam {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"gstam {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EvaluationError as exc:
        print(f"gstam {args.command}: {exc}", file=sys.stderr)
        return EXIT_EVAL
    except GstamError as exc:
        print(f"gstam {args.command}: {exc}", file=sys.stderr)
        return EXIT_TRAIN


if __name__ == "__main__":
    sys.exit(main())
