"""Temporal attention over the frames of a segment.

Two variants map a feature matrix ``F`` (``d x T``) to one weight per frame:

* ``stam``: conv -> relu -> conv -> sigmoid.  Each weight lies in (0, 1)
  independently of the others.
* ``ptam``: conv -> relu -> conv -> relu -> softmax.  Weights lie on the
  simplex.

Both convolutions run along time with "same" padding.  Parameters may carry a
leading branch axis so that ``B`` independent modules are evaluated in one pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .tensor import Tensor, as_tensor, conv1d_temporal, matvec, relu, reshape, sigmoid, softmax

VARIANTS = ("stam", "ptam")


def default_hidden(d: int) -> int:
    return max(4, d // 2)


@dataclass
class AttentionParams:
    """Weights of one attention module, or of ``B`` stacked modules.

    Single module shapes: ``conv1_w (h, d, k1)``, ``conv1_b (h,)``,
    ``conv2_w (1, h, k2)``, ``conv2_b (1,)``.  Stacked modules prepend a
    branch axis ``B`` to each.
    """

    conv1_w: Tensor
    conv1_b: Tensor
    conv2_w: Tensor
    conv2_b: Tensor
    variant: str = "stam"

    def __post_init__(self):
        self.variant = self.variant.lower()
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown attention variant {self.variant!r}; expected stam or ptam")
        for k in (self.conv1_w.shape[-1], self.conv2_w.shape[-1]):
            if k % 2 == 0:
                raise ConfigError(f"attention kernel sizes must be odd, got {k}")
        if self.conv2_w.shape[-3] != 1 or self.conv2_w.shape[-2] != self.conv1_w.shape[-3]:
            raise ConfigError(f"conv2 weight {self.conv2_w.shape} does not match hidden width {self.conv1_w.shape[-3]}")

    @property
    def stacked(self) -> bool:
        return self.conv1_w.ndim == 4

    @property
    def n_branches(self) -> int:
        return self.conv1_w.shape[0] if self.stacked else 1

    @property
    def in_dim(self) -> int:
        return self.conv1_w.shape[-2]

    @property
    def hidden(self) -> int:
        return self.conv1_w.shape[-3]

    def tensors(self) -> dict:
        return {"conv1_w": self.conv1_w, "conv1_b": self.conv1_b, "conv2_w": self.conv2_w, "conv2_b": self.conv2_b}

    @classmethod
    def init(cls, d, variant="stam", hidden=None, k1=3, k2=3, branches=None, rng=None):
        """Uniform(+-1/sqrt(fan_in)) weights and zero biases."""
        rng = np.random.default_rng(rng)
        h = default_hidden(d) if hidden is None else hidden
        if h < 1:
            raise ConfigError(f"hidden width must be >= 1, got {h}")
        lead = () if branches is None else (branches,)
        b1 = 1.0 / np.sqrt(d * k1)
        b2 = 1.0 / np.sqrt(h * k2)
        return cls(
            Tensor(rng.uniform(-b1, b1, lead + (h, d, k1)), requires_grad=True),
            Tensor(np.zeros(lead + (h,)), requires_grad=True),
            Tensor(rng.uniform(-b2, b2, lead + (1, h, k2)), requires_grad=True),
            Tensor(np.zeros(lead + (1,)), requires_grad=True),
            variant,
        )


def _scores(F: Tensor, p: AttentionParams) -> Tensor:
    """Pre-activation frame scores: ``(..., T)`` or ``(..., B, T)`` when stacked."""
    if F.ndim not in (2, 3):
        raise DimensionError(f"feature matrix must be (d, T) or (N, d, T), got {F.shape}")
    if F.shape[-2] != p.in_dim:
        raise ConfigError(f"feature dim {F.shape[-2]} does not match attention input dim {p.in_dim}")
    single = F.ndim == 2
    X = reshape(F, (1,) + F.shape) if single else F
    N, T = X.shape[0], X.shape[-1]
    B, h = p.n_branches, p.hidden
    # all branches share the input, so conv1 runs as one convolution with B*h outputs
    w1 = reshape(p.conv1_w, (B * h,) + p.conv1_w.shape[-2:])
    b1 = reshape(p.conv1_b, (B * h,))
    hid = relu(reshape(conv1d_temporal(X, w1, b1), (N, B, h, T)))
    w2 = reshape(p.conv2_w, (B, 1) + p.conv2_w.shape[-2:])
    b2 = reshape(p.conv2_b, (B, 1))
    z = conv1d_temporal(hid, w2, b2)  # (N, B, 1, T)
    shape = (N, B, T) if p.stacked else (N, T)
    if single:
        shape = shape[1:]
    return reshape(z, shape)


def stam_forward(F, p: AttentionParams) -> Tensor:
    F = as_tensor(F)
    if p.variant != "stam":
        raise ConfigError("stam_forward called with ptam parameters")
    return sigmoid(_scores(F, p))


def ptam_forward(F, p: AttentionParams) -> Tensor:
    F = as_tensor(F)
    if p.variant != "ptam":
        raise ConfigError("ptam_forward called with stam parameters")
    return softmax(relu(_scores(F, p)), axis=-1)


def attend(F, p: AttentionParams) -> Tensor:
    """Run whichever variant ``p`` is configured for."""
    return stam_forward(F, p) if p.variant == "stam" else ptam_forward(F, p)


def aggregate(F, a) -> Tensor:
    """Attention-weighted sum of frame features, ``F @ a``.

    ``a`` is ``F.shape[:-2] + (T,)`` for one module, giving ``(..., d)``, or
    ``F.shape[:-2] + (B, T)`` for stacked modules, giving ``(..., B, d)``.
    """
    F, a = as_tensor(F), as_tensor(a)
    if F.ndim < 2 or a.ndim < 1 or a.shape[-1] != F.shape[-1]:
        raise DimensionError(f"aggregate: attention {a.shape} does not match features {F.shape}")
    if a.ndim == F.ndim:
        F = reshape(F, F.shape[:-2] + (1,) + F.shape[-2:])
    return matvec(F, a)
