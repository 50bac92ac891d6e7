"""Classification, sparsity and group-sparsity losses.

All losses accept either a single sample or a batch with a leading sample axis
and return a scalar :class:`~gstam.tensor.Tensor`.  Batched inputs are reduced
by the mean over samples.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ConfigError, DimensionError, LabelError
from .partition import BranchSpec, GroupPartition, builtin_partitions  # noqa: F401  (re-export)
from .tensor import Tensor, add, as_tensor, cross_entropy, getitem, l2norm, mean, mul, tabs, tsum


def classification_loss(preds: Sequence[Tensor], labels, specs: Sequence[BranchSpec]) -> Tensor:
    """Sum over branches of ``beta_i * CE(p_i, y_i)``, averaged over the batch.

    ``preds[i]`` has shape ``(c_i,)`` or ``(N, c_i)``; ``labels`` has shape
    ``(B,)`` or ``(N, B)``.
    """
    labels = np.asarray(labels)
    if len(preds) != len(specs) or labels.shape[-1:] != (len(specs),):
        raise DimensionError(f"classification_loss: {len(preds)} predictions, {len(specs)} specs, labels {labels.shape}")
    total = None
    for i, (p, spec) in enumerate(zip(preds, specs)):
        p = as_tensor(p)
        if p.shape[-1] != spec.classes:
            raise DimensionError(f"branch {spec.name!r}: {p.shape[-1]} outputs for {spec.classes} classes")
        y = labels[..., i]
        if np.any((y < 0) | (y >= spec.classes)):
            raise LabelError(f"branch {spec.name!r}: label outside [0, {spec.classes})")
        term = mul(cross_entropy(p, y), spec.beta)
        total = term if total is None else add(total, term)
    return mean(total) if total.ndim else total


def _batch_mean(per_sample: Tensor, batched: bool) -> Tensor:
    return mean(per_sample) if batched else per_sample


def sparsity_loss(A) -> Tensor:
    """L1 norm of every branch's attention vector, summed over branches.

    ``A`` is ``(B, T)`` or ``(N, B, T)``.
    """
    A = as_tensor(A)
    if A.ndim not in (2, 3):
        raise DimensionError(f"sparsity_loss: expected (B, T) or (N, B, T), got {A.shape}")
    return _batch_mean(tsum(tabs(A), axis=(-2, -1)), A.ndim == 3)


def group_sparsity_loss(A, part: GroupPartition) -> Tensor:
    """Weighted sum over frames and groups of the L2 norm of grouped attention.

    For each frame ``t`` and group ``k`` the weights ``A[G_k, t]`` form one
    vector; its Euclidean norm is scaled by ``1 / |G_k|``.
    """
    A = as_tensor(A)
    if A.ndim not in (2, 3):
        raise DimensionError(f"group_sparsity_loss: expected (B, T) or (N, B, T), got {A.shape}")
    if part.n_branches != A.shape[-2]:
        raise ConfigError(f"partition covers {part.n_branches} branches, attention has {A.shape[-2]}")
    total = None
    for members, gamma in zip(part.groups, part.gammas):
        g = getitem(A, (Ellipsis, list(members), slice(None)))
        term = mul(tsum(l2norm(g, axis=-2), axis=-1), gamma)
        total = term if total is None else add(total, term)
    return _batch_mean(total, A.ndim == 3)


def total_loss(class_loss, reg_loss, lam: float) -> Tensor:
    """``class_loss + lam * reg_loss``; with ``lam == 0`` the class loss itself."""
    if lam < 0:
        raise ConfigError(f"lambda must be non-negative, got {lam}")
    class_loss = as_tensor(class_loss)
    if lam == 0:
        return class_loss
    return add(class_loss, mul(as_tensor(reg_loss), float(lam)))


def regularizer(kind: str, A, part: GroupPartition) -> Tensor | None:
    """Dispatch ``none`` / ``sparsity`` / ``group``; ``none`` gives ``None``."""
    if kind == "none":
        return None
    if kind == "sparsity":
        return sparsity_loss(A)
    if kind == "group":
        return group_sparsity_loss(A, part)
    raise ConfigError(f"unknown regularizer {kind!r}; expected none, sparsity or group")
