"""Multi-branch attribute model: one attention module and linear head per attribute."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .attention import AttentionParams, aggregate, attend
from .errors import ConfigError, DimensionError, ParseError
from .partition import BranchSpec, GroupPartition
from .tensor import Tensor, as_tensor, conv1d_temporal, getitem, matvec, relu, softmax

CHECKPOINT_FORMAT = "gstam-checkpoint/1"


def branch_predict(f, W) -> Tensor:
    """Class probabilities ``softmax(W f)`` for aggregated features ``f``."""
    W, f = as_tensor(W), as_tensor(f)
    if W.ndim != 2 or W.shape[1] != f.shape[-1]:
        raise DimensionError(f"head {W.shape} cannot classify features {f.shape}")
    return softmax(matvec(W, f), axis=-1)


class MultiBranchModel:
    """``B`` attribute branches sharing one (optional) trunk.

    Attention modules are stored stacked along a leading branch axis; heads
    are kept per branch because class counts differ.

    Parameters
    ----------
    specs : sequence of BranchSpec
    partition : GroupPartition
    d : int
        Feature dimension of each frame.
    variant : {"stam", "ptam"}
    hidden, k1, k2 : int
        Attention hidden width and kernel sizes; ``hidden=None`` picks
        ``max(4, d // 2)``.
    trunk : {"identity", "conv"}
        ``conv`` adds a shared ``d -> d`` temporal convolution with ReLU.
    seed : int or Generator
    """

    def __init__(self, specs: Sequence[BranchSpec], partition: GroupPartition, d: int, variant="stam",
                 hidden=None, k1=3, k2=3, trunk="identity", trunk_k=3, seed=0, zero_heads=False):
        if len(specs) < 1:
            raise ConfigError("model needs at least one branch")
        if partition.n_branches != len(specs):
            raise ConfigError(f"partition covers {partition.n_branches} branches, model has {len(specs)}")
        for i, s in enumerate(specs):
            if not 0 <= s.group_id < len(partition.groups) or i not in partition.groups[s.group_id]:
                raise ConfigError(f"branch {s.name!r} has group id {s.group_id} inconsistent with partition")
        if trunk not in ("identity", "conv"):
            raise ConfigError(f"unknown trunk {trunk!r}")
        rng = np.random.default_rng(seed)
        self.specs = list(specs)
        self.partition = partition
        self.d = int(d)
        self.trunk = trunk
        self.trunk_params = None
        if trunk == "conv":
            bound = 1.0 / np.sqrt(d * trunk_k)
            self.trunk_params = (
                Tensor(rng.uniform(-bound, bound, (d, d, trunk_k)), requires_grad=True),
                Tensor(np.zeros(d), requires_grad=True),
            )
        self.attention = AttentionParams.init(d, variant, hidden, k1, k2, branches=len(specs), rng=rng)
        bound = 1.0 / np.sqrt(d)
        self.heads = [
            Tensor(np.zeros((s.classes, d)) if zero_heads else rng.uniform(-bound, bound, (s.classes, d)),
                   requires_grad=True)
            for s in self.specs
        ]

    @property
    def n_branches(self) -> int:
        return len(self.specs)

    @property
    def variant(self) -> str:
        return self.attention.variant

    @property
    def branch_names(self) -> list:
        return [s.name for s in self.specs]

    def parameters(self) -> dict:
        """Ordered ``name -> Tensor`` map of every trainable tensor."""
        params = {}
        if self.trunk_params is not None:
            params["trunk.w"], params["trunk.b"] = self.trunk_params
        for k, t in self.attention.tensors().items():
            params[f"attention.{k}"] = t
        for i, W in enumerate(self.heads):
            params[f"head.{i}"] = W
        return params

    def zero_grad(self):
        for t in self.parameters().values():
            t.zero_grad()

    def features(self, F) -> Tensor:
        F = as_tensor(F)
        if F.shape[-2] != self.d:
            raise DimensionError(f"model expects {self.d}-dim frames, got {F.shape}")
        if self.trunk_params is None:
            return F
        return relu(conv1d_temporal(F, *self.trunk_params))

    def config(self) -> dict:
        a = self.attention
        return {
            "d": self.d,
            "variant": a.variant,
            "hidden": a.hidden,
            "k1": a.conv1_w.shape[-1],
            "k2": a.conv2_w.shape[-1],
            "trunk": self.trunk,
            "trunk_k": self.trunk_params[0].shape[-1] if self.trunk_params else 3,
            "branches": [[s.name, s.classes, s.group_id] for s in self.specs],
            "groups": [list(g) for g in self.partition.groups],
            "group_names": list(self.partition.names),
        }


def model_forward(model: MultiBranchModel, F):
    """Run every branch on ``F`` of shape ``(d, T)`` or ``(N, d, T)``.

    Returns ``(preds, A)``: a list of ``B`` probability tensors of shape
    ``(c_i,)`` / ``(N, c_i)`` and attention weights ``(B, T)`` / ``(N, B, T)``.
    """
    X = model.features(F)
    A = attend(X, model.attention)
    agg = aggregate(X, A)  # (..., B, d)
    preds = [branch_predict(getitem(agg, (Ellipsis, i, slice(None))), W) for i, W in enumerate(model.heads)]
    return preds, A


def predict_proba(model: MultiBranchModel, F) -> list:
    """Numpy probabilities per branch, without keeping the graph."""
    preds, _ = model_forward(model, F)
    return [p.data for p in preds]


def save_checkpoint(model: MultiBranchModel, path, extra: dict | None = None):
    """Write all parameters plus metadata to one ``.npz`` file."""
    meta = {"format": CHECKPOINT_FORMAT, "model": model.config(), "extra": extra or {}}
    arrays = {name: t.data for name, t in model.parameters().items()}
    arrays["__meta__"] = np.array(json.dumps(meta, sort_keys=True))
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(model, extra)``."""
    try:
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["__meta__"]))
            arrays = {k: z[k] for k in z.files if k != "__meta__"}
    except (OSError, ValueError, KeyError) as exc:
        raise ParseError(f"unreadable checkpoint {path}: {exc}") from exc
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise ParseError(f"{path}: not a gstam checkpoint")
    cfg = meta["model"]
    specs = [BranchSpec(name, int(c), int(g)) for name, c, g in cfg["branches"]]
    part = GroupPartition(tuple(tuple(g) for g in cfg["groups"]), tuple(cfg["group_names"]))
    model = MultiBranchModel(specs, part, cfg["d"], cfg["variant"], cfg["hidden"], cfg["k1"], cfg["k2"],
                             cfg["trunk"], cfg["trunk_k"], seed=0)
    params = model.parameters()
    if set(params) != set(arrays):
        raise ParseError(f"{path}: parameter names do not match model layout")
    for name, t in params.items():
        t.data = arrays[name]
    return model, meta.get("extra", {})


def forward_with_attention(model, F, A):
    """Forward pass with attention weights ``A`` supplied instead of computed."""
    X = model.features(F)
    agg = aggregate(X, A)
    return [branch_predict(getitem(agg, (Ellipsis, i, slice(None))), W) for i, W in enumerate(model.heads)]
