"""Ablation grid, lambda sweep and attention diagnostics over synthetic splits."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import GstamError
from .inference import infer_trajectories
from .losses import group_sparsity_loss
from .metrics import evaluate
from .synthdata import SynthConfig, generate_dataset
from .trainer import TrainConfig, build_model, fit

logger = logging.getLogger(__name__)

VARIANTS = ("ptam", "stam")
REGULARIZERS = ("none", "sparsity", "group")
SWEEP_LAMBDAS = (0.005, 0.02, 0.03)

# data seeds of the three splits; disjoint from any model seed stream
SPLIT_SEEDS = {"train": 101, "val": 202, "test": 303}


@dataclass
class Splits:
    train: list
    val: list
    test: list
    synth: SynthConfig


def make_splits(synth: SynthConfig, n_train=500, n_val=100, n_test=200, seeds=None) -> Splits:
    seeds = {**SPLIT_SEEDS, **(seeds or {})}

    def gen(n, key):
        return generate_dataset(SynthConfig(**{**synth.to_dict(), "n_videos": n}), seeds[key])

    return Splits(gen(n_train, "train"), gen(n_val, "val"), gen(n_test, "test"), synth)


def attention_occlusion_profile(model, videos, T: int) -> np.ndarray:
    """``(K, 2)`` mean attention of each group's branches on (occluded, visible) frames.

    Attention comes from the same windows used for trajectory inference.  A
    group with no occluded (or no visible) frame gets NaN in that column.
    """
    part = model.partition
    _, attn = infer_trajectories(model, videos, T, return_attention=True)
    sums = np.zeros((len(part.groups), 2))
    counts = np.zeros((len(part.groups), 2))
    for video, entry in zip(videos, attn):
        if entry is None:
            continue
        windows, A = entry
        for (s, e), a in zip(windows, A):
            occ = video.occ_mask[:, s:e]
            for k, members in enumerate(part.groups):
                w = a[list(members)]  # (|G_k|, T)
                for col, sel in ((0, occ[k]), (1, ~occ[k])):
                    n = int(sel.sum())
                    if n:
                        sums[k, col] += w[:, sel].sum()
                        counts[k, col] += n * len(members)
    with np.errstate(invalid="ignore", divide="ignore"):
        return sums / counts


def heldout_group_sparsity(model, videos, T: int) -> float:
    """Mean group-sparsity value of the attention over all inference windows."""
    _, attn = infer_trajectories(model, videos, T, return_attention=True)
    A = np.concatenate([entry[1] for entry in attn if entry is not None])
    return group_sparsity_loss(A, model.partition).item()


@dataclass
class ArmResult:
    variant: str
    regularizer: str
    lam: float
    seed: int
    occluded_acc: float = float("nan")
    occluded_f1: float = float("nan")
    all_acc: float = float("nan")
    all_f1: float = float("nan")
    group_sparsity: float = float("nan")
    profile: np.ndarray | None = None
    best_epoch: int | None = None
    seconds: float = 0.0
    error: str | None = None
    log: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.error is None

    def occluded_lower_groups(self) -> int:
        """Number of groups whose occluded-frame attention is below visible-frame attention."""
        if self.profile is None:
            return 0
        return int(np.sum(self.profile[:, 0] < self.profile[:, 1]))


def run_arm(splits: Splits, cfg: TrainConfig, keep_model=False):
    """Train one configuration and measure it on the test split.

    Returns ``ArmResult`` (and the trained model when ``keep_model``).
    Library errors are caught and recorded on the result.
    """
    specs, part = splits.synth.specs()
    res = ArmResult(cfg.variant, cfg.regularizer, cfg.lam if cfg.regularizer != "none" else 0.0, cfg.seed)
    t0 = time.perf_counter()
    model = None
    try:
        model = build_model(specs, part, splits.synth.d, cfg)
        fitted = fit(model, splits.train, cfg, val=splits.val)
        occ = evaluate(model, splits.test, "occluded", cfg.T)
        full = evaluate(model, splits.test, "all", cfg.T)
        res.occluded_acc, res.occluded_f1 = occ.avg_accuracy, occ.avg_f1
        res.all_acc, res.all_f1 = full.avg_accuracy, full.avg_f1
        res.group_sparsity = heldout_group_sparsity(model, splits.test, cfg.T)
        res.profile = attention_occlusion_profile(model, splits.test, cfg.T)
        res.best_epoch, res.log = fitted.best_epoch, fitted.log
    except GstamError as exc:
        logger.error("arm %s/%s seed %d failed: %s", cfg.variant, cfg.regularizer, cfg.seed, exc)
        res.error = f"{type(exc).__name__}: {exc}"
    res.seconds = time.perf_counter() - t0
    logger.info("arm %s/%s lam=%g seed=%d occ_f1=%.4f (%.1fs)", res.variant, res.regularizer, res.lam,
                res.seed, res.occluded_f1, res.seconds)
    return (res, model) if keep_model else res


def ablation_grid(splits: Splits, base: TrainConfig, seeds=(0, 1, 2), variants=VARIANTS,
                  regularizers=REGULARIZERS) -> list:
    """One :class:`ArmResult` per (seed, variant, regularizer); failures do not stop the grid."""
    out = []
    for seed in seeds:
        for variant in variants:
            for reg in regularizers:
                out.append(run_arm(splits, base.with_(variant=variant, regularizer=reg, seed=seed)))
    return out


def lambda_sweep(splits: Splits, base: TrainConfig, lams=SWEEP_LAMBDAS, seeds=(0, 1, 2)) -> list:
    out = []
    for seed in seeds:
        for lam in lams:
            out.append(run_arm(splits, base.with_(regularizer="group", lam=lam, seed=seed)))
    return out


def count_inversions(values) -> int:
    """Adjacent increases in a sequence that should be non-increasing."""
    v = list(values)
    return sum(1 for a, b in zip(v, v[1:]) if b > a)


# ----------------------------------------------------------------------------
# tables

RESULT_COLUMNS = ("variant", "regularizer", "lambda", "seed", "occluded_acc", "occluded_f1",
                  "all_acc", "all_f1", "group_sparsity", "best_epoch", "error")
SUMMARY_COLUMNS = ("variant", "regularizer", "lambda", "n", "occluded_f1_mean", "occluded_f1_std",
                   "all_f1_mean", "all_f1_std", "group_sparsity_mean")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "" if np.isnan(x) else repr(round(x, 10))
    return str(x)


def results_csv(results) -> str:
    lines = [",".join(RESULT_COLUMNS)]
    for r in results:
        row = (r.variant, r.regularizer, r.lam, r.seed, r.occluded_acc, r.occluded_f1, r.all_acc,
               r.all_f1, r.group_sparsity, r.best_epoch, (r.error or "").replace(",", ";"))
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def summarize(results) -> list:
    """Mean and population std per (variant, regularizer, lambda) cell, over successful seeds."""
    cells = {}
    for r in results:
        cells.setdefault((r.variant, r.regularizer, r.lam), []).append(r)
    rows = []
    for (variant, reg, lam), rs in cells.items():
        ok = [r for r in rs if r.ok]
        occ = np.array([r.occluded_f1 for r in ok])
        full = np.array([r.all_f1 for r in ok])
        gs = np.array([r.group_sparsity for r in ok])
        nan = float("nan")
        rows.append({"variant": variant, "regularizer": reg, "lambda": lam, "n": len(ok),
                     "occluded_f1_mean": float(occ.mean()) if ok else nan,
                     "occluded_f1_std": float(occ.std()) if ok else nan,
                     "all_f1_mean": float(full.mean()) if ok else nan,
                     "all_f1_std": float(full.std()) if ok else nan,
                     "group_sparsity_mean": float(gs.mean()) if ok else nan})
    return rows


def summary_csv(rows) -> str:
    lines = [",".join(SUMMARY_COLUMNS)]
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in SUMMARY_COLUMNS))
    return "\n".join(lines) + "\n"
