"""Mini-batch training on fixed-length segments with Adam and a step LR schedule."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from decimal import Decimal

import numpy as np

from .branches import MultiBranchModel, model_forward
from .errors import ConfigError, DimensionError, NonFiniteError, TrainingError
from .inference import infer_trajectories, infer_trajectory, segment_windows  # noqa: F401  (re-export)
from .losses import classification_loss, regularizer, total_loss

logger = logging.getLogger(__name__)

REGULARIZERS = ("none", "sparsity", "group")


@dataclass
class TrainConfig:
    """Training hyperparameters.  Defaults are the full-scale protocol; see :meth:`desk`."""

    lr0: float = 3e-4
    lr_decay: float = 0.3
    decay_epoch: int = 100
    weight_decay: float = 5e-4
    lam: float = 0.02
    batch: int = 64
    epochs: int = 200
    T: int = 6
    regularizer: str = "group"
    variant: str = "stam"
    eval_every: int = 20
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    hidden: int | None = None
    k1: int = 3
    k2: int = 3
    trunk: str = "identity"

    def __post_init__(self):
        self.regularizer = self.regularizer.lower()
        self.variant = self.variant.lower()
        if self.T < 1:
            raise ConfigError(f"T must be >= 1, got {self.T}")
        if self.batch < 1:
            raise ConfigError(f"batch must be >= 1, got {self.batch}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be non-negative, got {self.lam}")
        if self.epochs < 0 or self.eval_every < 1:
            raise ConfigError("epochs must be >= 0 and eval_every >= 1")
        if self.regularizer not in REGULARIZERS:
            raise ConfigError(f"unknown regularizer {self.regularizer!r}")
        if self.variant not in ("stam", "ptam"):
            raise ConfigError(f"unknown attention variant {self.variant!r}")

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        """Reduced schedule for single-core runs: batch 16, 60 epochs, decay at 30.

        The shorter schedule starts from a 10x larger learning rate (3e-3);
        at 3e-4 the 60-epoch runs stop well short of convergence.
        """
        base = dict(batch=16, epochs=60, decay_epoch=30, lr0=3e-3)
        base.update(overrides)
        return cls(**base)

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    def lr_at(self, epoch: int) -> float:
        """Learning rate for 0-based ``epoch``; the product is formed in decimal."""
        if epoch < self.decay_epoch:
            return self.lr0
        return float(Decimal(repr(self.lr0)) * Decimal(repr(self.lr_decay)))


# ----------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, lr: float, weight_decay: float = 0.0,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> dict:
    """One bias-corrected Adam update with L2 weight decay folded into the gradient.

    ``params`` and ``grads`` map names to arrays.  ``state`` is updated in
    place; the new parameter arrays are returned.
    """
    state.step += 1
    t = state.step
    out = {}
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise DimensionError(f"adam: gradient {g.shape} for parameter {name} {theta.shape}")
        if weight_decay:
            g = g + weight_decay * theta
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(theta)
            v = np.zeros_like(theta)
        elif m.shape != theta.shape:
            raise DimensionError(f"adam: moment shape {m.shape} for parameter {name} {theta.shape}")
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        state.m[name], state.v[name] = m, v
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        out[name] = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
    return out


class Adam:
    """Applies :func:`adam_step` to a model's parameter tensors."""

    def __init__(self, params: dict, weight_decay=0.0, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.weight_decay = weight_decay
        self.betas = (beta1, beta2)
        self.eps = eps
        self.state = AdamState()

    def step(self, lr: float):
        values = {k: t.data for k, t in self.params.items()}
        grads = {k: t.grad for k, t in self.params.items()}
        new = adam_step(values, grads, self.state, lr, self.weight_decay, *self.betas, self.eps)
        for k, t in self.params.items():
            t.data = new[k]


# ----------------------------------------------------------------------------
# data


def sample_segment(video, T: int, rng):
    """Random contiguous ``T``-frame window of ``video``.

    Returns ``(F, labels, start)``, or ``None`` when the video is shorter than
    ``T`` and must be excluded.
    """
    L = video.frames.shape[1]
    if L < T:
        return None
    start = int(rng.integers(0, L - T + 1))
    return video.frames[:, start:start + T], video.labels, start


def usable_videos(videos, T: int) -> list:
    kept = [v for v in videos if v.frames.shape[1] >= T]
    if len(kept) < len(videos):
        logger.info("excluded %d trajectories shorter than T=%d", len(videos) - len(kept), T)
    return kept


def build_model(specs, partition, d: int, cfg: TrainConfig) -> MultiBranchModel:
    return MultiBranchModel(specs, partition, d, cfg.variant, cfg.hidden, cfg.k1, cfg.k2, cfg.trunk, seed=cfg.seed)


# ----------------------------------------------------------------------------
# training loop


@dataclass
class FitResult:
    model: MultiBranchModel
    log: list
    best_epoch: int | None = None


LOG_COLUMNS = ("epoch", "lr", "loss_class", "loss_reg", "val_avg_acc", "val_avg_f1")


def batch_losses(model: MultiBranchModel, X, Y, cfg: TrainConfig):
    """Forward one batch; returns ``(total, class_loss, reg_loss_or_None, A)``."""
    preds, A = model_forward(model, X)
    lc = classification_loss(preds, Y, model.specs)
    reg = regularizer(cfg.regularizer, A, model.partition)
    total = lc if reg is None else total_loss(lc, reg, cfg.lam)
    return total, lc, reg, A


def fit(model: MultiBranchModel, dataset, cfg: TrainConfig, val=None, select_best=True) -> FitResult:
    """Train ``model`` in place on random ``cfg.T``-frame segments of ``dataset``.

    One epoch draws one random window from every usable video.  When ``val``
    is given, it is evaluated every ``cfg.eval_every`` epochs and at the last
    epoch; with ``select_best`` the parameters with the highest validation
    average F1 are restored at the end.
    """
    from .metrics import evaluate

    train = usable_videos(dataset, cfg.T)
    if not train:
        raise ConfigError(f"no training videos with at least T={cfg.T} frames")
    val_set = usable_videos(val, cfg.T) if val else None
    rng = np.random.default_rng(cfg.seed)
    params = model.parameters()
    opt = Adam(params, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.adam_eps)
    log, best = [], (-np.inf, None, None)

    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = rng.permutation(len(train))
        sum_c = sum_r = 0.0
        for b, lo in enumerate(range(0, len(order), cfg.batch)):
            idx = order[lo:lo + cfg.batch]
            segs = [sample_segment(train[i], cfg.T, rng) for i in idx]
            X = np.stack([s[0] for s in segs])
            Y = np.stack([s[1] for s in segs])
            model.zero_grad()
            try:
                total, lc, reg, _ = batch_losses(model, X, Y, cfg)
                total.backward()
                opt.step(lr)
            except NonFiniteError as exc:
                ids = [train[i].id for i in idx]
                raise TrainingError(f"non-finite value at epoch {epoch + 1}, batch {b} (videos {ids}): {exc}") from exc
            sum_c += lc.item() * len(idx)
            sum_r += (reg.item() if reg is not None else 0.0) * len(idx)
        row = {"epoch": epoch + 1, "lr": lr, "loss_class": sum_c / len(train), "loss_reg": sum_r / len(train),
               "val_avg_acc": None, "val_avg_f1": None}
        last = epoch + 1 == cfg.epochs
        if val_set and ((epoch + 1) % cfg.eval_every == 0 or last):
            rep = evaluate(model, val_set, "all", cfg.T)
            row["val_avg_acc"], row["val_avg_f1"] = rep.avg_accuracy, rep.avg_f1
            if select_best and rep.avg_f1 > best[0]:
                best = (rep.avg_f1, epoch + 1, {k: t.data.copy() for k, t in params.items()})
        log.append(row)
        logger.debug("epoch %d lr=%g class=%.5f reg=%.5f", epoch + 1, lr, row["loss_class"], row["loss_reg"])

    best_epoch = None
    if select_best and best[2] is not None:
        best_epoch = best[1]
        for k, t in params.items():
            t.data = best[2][k]
    return FitResult(model, log, best_epoch)


def format_log_csv(log) -> str:
    lines = [",".join(LOG_COLUMNS)]
    for row in log:
        lines.append(",".join("" if row[c] is None else repr(row[c]) for c in LOG_COLUMNS))
    return "\n".join(lines) + "\n"
