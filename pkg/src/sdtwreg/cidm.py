"""Contrastive-IDM temporal regularizer.

For a sequence ``x`` with self-distances ``D(i, j) = |x_i - x_j|^2`` and
temporal weight ``W(i, j) = (i - j)^2 + 1``::

    f(x) = sum_ij  y_ij * W(i,j) * max(0, margin - D(i,j))
                 + (1 - y_ij) * D(i,j) / W(i,j),      y_ij = [|i - j| >= sigma]

Pairs at least ``sigma`` frames apart are pushed out to the margin, closer
pairs are pulled together.  With ``sigma = 1`` only the push term survives.
The double sum runs over ordered pairs, so ``(i, j)`` and ``(j, i)`` both
count.  At ``D == margin`` the hinge is treated as inactive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import as_frames, self_distance_matrix


@dataclass(frozen=True)
class CidmConfig:
    sigma: int = 1
    margin: float = 1.1
    alpha: float = 0.4

    def __post_init__(self):
        if int(self.sigma) != self.sigma or self.sigma < 1:
            raise ValueError(f"sigma must be an integer >= 1, got {self.sigma}")
        if not (0 < self.margin < math.inf):
            raise ValueError(f"margin must be finite and > 0, got {self.margin}")
        if not (0 <= self.alpha < math.inf):
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha}")


@dataclass(frozen=True)
class CidmResult:
    value: float
    grad: np.ndarray


def temporal_weights(m: int) -> np.ndarray:
    idx = np.arange(m, dtype=np.float64)
    return (idx[:, None] - idx[None, :]) ** 2 + 1.0


def cidm_general(x, cfg: CidmConfig = CidmConfig()) -> CidmResult:
    X = as_frames(x)
    value, grad = kernels.cidm(X, int(cfg.sigma), float(cfg.margin))
    return CidmResult(float(value), grad)


def cidm_sigma1(x, cfg: CidmConfig = CidmConfig()) -> CidmResult:
    """The push-only form: ``sum_{i != j} W(i,j) * max(0, margin - D(i,j))``."""
    if cfg.sigma != 1:
        raise ValueError(f"cidm_sigma1 requires sigma == 1, got {cfg.sigma}")
    X = as_frames(x)
    m = X.shape[0]
    Dx = self_distance_matrix(X)
    W = temporal_weights(m)
    slack = cfg.margin - Dx
    active = slack > 0
    np.fill_diagonal(active, False)
    value = float(np.sum(W[active] * slack[active]))
    # d/dx_k of each active (i, j) term hits both endpoints; W is symmetric
    coef = np.where(active, -W, 0.0)
    sym = coef + coef.T
    grad = 2.0 * (sym.sum(axis=1)[:, None] * X - sym @ X)
    return CidmResult(value, grad)


def cidm_normalized(x, cfg: CidmConfig = CidmConfig()) -> CidmResult:
    """``f(x) / m^2`` and its gradient."""
    res = cidm_general(x, cfg)
    m2 = float(res.grad.shape[0]) ** 2
    return CidmResult(res.value / m2, res.grad / m2)
