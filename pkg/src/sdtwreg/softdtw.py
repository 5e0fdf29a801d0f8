"""Soft-DTW: forward DP, exact backward pass, divergence, hard DTW and a
brute-force path-enumeration oracle.

Indices are 0-based throughout: frame ``i`` of ``x`` is ``x[i]``, DP tables
carry one extra leading row/column of boundary cells, and DTW paths start at
``(0, 0)`` and end at ``(m - 1, n - 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels, wavefront
from .core import as_frames


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class SoftDtwConfig:
    """Soft-DTW settings.

    ``metric`` selects the frame cost: ``"sqeuclidean"`` (default) or
    ``"cosine"``, the latter meaning ``2 - 2 <x, y>``, which equals the
    squared distance on unit-norm rows.  ``cell_normalize`` divides the
    alignment value (and gradients) by ``m * n``.  ``wavefront`` swaps the
    sequential DP for the anti-diagonal numpy version.
    """

    gamma: float = 0.1
    use_divergence: bool = True
    metric: str = "sqeuclidean"
    cell_normalize: bool = False
    wavefront: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError(f"gamma must be finite and > 0, got {self.gamma}")
        if self.metric not in kernels.METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")


@dataclass(frozen=True)
class AlignmentResult:
    value: float
    r: np.ndarray
    e: np.ndarray
    grad_x: np.ndarray
    grad_xp: np.ndarray


@dataclass(frozen=True)
class LossValueWithGrads:
    value: float
    grad_x: np.ndarray
    grad_xp: np.ndarray


def softmin3(a: float, b: float, c: float, gamma: float) -> float:
    """Smoothed minimum ``-gamma * log(sum(exp(-v / gamma)))`` of three values.

    Stabilized by factoring out the hard minimum; ``+inf`` inputs contribute
    exactly nothing.
    """
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    return kernels.softmin3(float(a), float(b), float(c), float(gamma))


def _pair(x, xp):
    a, b = as_frames(x), as_frames(xp)
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    return a, b


def _cost(a, b, cfg: SoftDtwConfig) -> np.ndarray:
    return kernels._fallback.pairwise_cost(a, b, kernels.METRICS[cfg.metric])


def sdtw_forward(x, xp, cfg: SoftDtwConfig = SoftDtwConfig()):
    """Return ``(value, R)``: the soft-DTW value and the full DP table."""
    a, b = _pair(x, xp)
    D = _cost(a, b, cfg)
    R = wavefront.sdtw_forward(D, cfg.gamma) if cfg.wavefront else kernels.sdtw_forward(D, cfg.gamma)
    return float(R[-1, -1]), R


def sdtw_backward(x, xp, r: np.ndarray, cfg: SoftDtwConfig = SoftDtwConfig()):
    """Return ``(E, grad_x, grad_xp)`` from a forward table ``r``.

    ``E[i, j]`` is the Gibbs probability that an alignment path visits cell
    ``(i, j)``; it is also d(value)/d(cost[i, j]).
    """
    a, b = _pair(x, xp)
    D = _cost(a, b, cfg)
    r = np.ascontiguousarray(r, dtype=np.float64)
    if r.shape != (D.shape[0] + 1, D.shape[1] + 1):
        raise ValueError(f"table mismatch: DP table {r.shape} for a {D.shape} cost matrix")
    E = wavefront.sdtw_backward(D, r, cfg.gamma) if cfg.wavefront else kernels.sdtw_backward(D, r, cfg.gamma)
    gx, gy = kernels._fallback.cost_grads(a, b, E, kernels.METRICS[cfg.metric])
    return E, gx, gy


def _value_grad(a, b, cfg: SoftDtwConfig):
    if cfg.wavefront:
        value, R = sdtw_forward(a, b, cfg)
        E, gx, gy = sdtw_backward(a, b, R, cfg)
        return value, R, E, gx, gy
    return kernels.sdtw_value_grad(a, b, cfg.gamma, kernels.METRICS[cfg.metric])


def soft_dtw(x, xp, cfg: SoftDtwConfig = SoftDtwConfig()) -> AlignmentResult:
    """Raw soft-DTW with its DP table, expected alignment and gradients."""
    a, b = _pair(x, xp)
    value, R, E, gx, gy = _value_grad(a, b, cfg)
    return AlignmentResult(value, R, E, gx, gy)


def sdtw_divergence(x, xp, cfg: SoftDtwConfig = SoftDtwConfig()) -> LossValueWithGrads:
    """``sdtw(x, xp) - sdtw(x, x) / 2 - sdtw(xp, xp) / 2`` with gradients.

    The self terms take ``x`` in both argument slots, so their gradient
    w.r.t. ``x`` is the sum of both slot gradients.
    """
    a, b = _pair(x, xp)
    v_ab, _, _, ga, gb = _value_grad(a, b, cfg)
    v_aa, _, _, ga1, ga2 = _value_grad(a, a, cfg)
    v_bb, _, _, gb1, gb2 = _value_grad(b, b, cfg)
    value = v_ab - 0.5 * v_aa - 0.5 * v_bb
    grad_x = ga - 0.5 * (ga1 + ga2)
    grad_xp = gb - 0.5 * (gb1 + gb2)
    return LossValueWithGrads(value, grad_x, grad_xp)


def alignment_term(x, xp, cfg: SoftDtwConfig = SoftDtwConfig()) -> LossValueWithGrads:
    """The loss-side alignment term selected by ``cfg``."""
    if cfg.use_divergence:
        out = sdtw_divergence(x, xp, cfg)
    else:
        res = soft_dtw(x, xp, cfg)
        out = LossValueWithGrads(res.value, res.grad_x, res.grad_xp)
    if cfg.cell_normalize:
        scale = 1.0 / (out.grad_x.shape[0] * out.grad_xp.shape[0])
        out = LossValueWithGrads(out.value * scale, out.grad_x * scale, out.grad_xp * scale)
    return out


def hard_dtw(x, xp, metric: str = "sqeuclidean"):
    """Classical DTW: minimal path cost and one optimal path.

    Ties in the backtrack prefer the diagonal step, then the step that
    advances ``x``.
    """
    a, b = _pair(x, xp)
    D = kernels._fallback.pairwise_cost(a, b, kernels.METRICS[metric])
    C = kernels.dtw_table(D)
    m, n = D.shape
    i, j = m, n
    path = [(m - 1, n - 1)]
    while (i, j) != (1, 1):
        options = ((C[i - 1, j - 1], i - 1, j - 1), (C[i - 1, j], i - 1, j), (C[i, j - 1], i, j - 1))
        _, i, j = min(options, key=lambda o: o[0])
        path.append((i - 1, j - 1))
    path.reverse()
    return float(C[m, n]), path


@lru_cache(maxsize=None)
def delannoy(m: int, n: int) -> int:
    """Number of monotonic alignment paths through an ``m x n`` grid."""
    if m < 1 or n < 1:
        raise ValueError("grid sides must be >= 1")
    if m == 1 or n == 1:
        return 1
    return delannoy(m - 1, n) + delannoy(m, n - 1) + delannoy(m - 1, n - 1)


ORACLE_MAX_LEN = 8


def sdtw_oracle(x, xp, gamma: float) -> float:
    """Soft-DTW by explicit enumeration of every monotonic path.

    Independent of the DP: costs come from a direct per-cell distance and
    the soft minimum is one log-sum-exp over all path costs.
    """
    a, b = _pair(x, xp)
    m, n = a.shape[0], b.shape[0]
    if m > ORACLE_MAX_LEN or n > ORACLE_MAX_LEN:
        raise ValueError(f"size exceeded: oracle supports m, n <= {ORACLE_MAX_LEN}, got {m}x{n}")
    cell = [[float(np.sum((a[i] - b[j]) ** 2)) for j in range(n)] for i in range(m)]
    costs = []

    def walk(i, j, acc):
        acc += cell[i][j]
        if i == m - 1 and j == n - 1:
            costs.append(acc)
            return
        if i + 1 < m:
            walk(i + 1, j, acc)
        if j + 1 < n:
            walk(i, j + 1, acc)
        if i + 1 < m and j + 1 < n:
            walk(i + 1, j + 1, acc)

    walk(0, 0, 0.0)
    z = -np.asarray(costs) / gamma
    zmax = z.max()
    return float(-gamma * (zmax + math.log(np.exp(z - zmax).sum())))


def path_visit_probabilities(x, xp, gamma: float) -> np.ndarray:
    """Gibbs probability that a path visits each cell, by enumeration."""
    a, b = _pair(x, xp)
    m, n = a.shape[0], b.shape[0]
    if m > ORACLE_MAX_LEN or n > ORACLE_MAX_LEN:
        raise ValueError(f"size exceeded: oracle supports m, n <= {ORACLE_MAX_LEN}, got {m}x{n}")
    cell = [[float(np.sum((a[i] - b[j]) ** 2)) for j in range(n)] for i in range(m)]
    paths = []

    def walk(i, j, acc, cells):
        acc += cell[i][j]
        cells = cells + [(i, j)]
        if i == m - 1 and j == n - 1:
            paths.append((acc, cells))
            return
        if i + 1 < m:
            walk(i + 1, j, acc, cells)
        if j + 1 < n:
            walk(i, j + 1, acc, cells)
        if i + 1 < m and j + 1 < n:
            walk(i + 1, j + 1, acc, cells)

    walk(0, 0, 0.0, [])
    costs = np.array([p[0] for p in paths])
    w = np.exp(-(costs - costs.min()) / gamma)
    w /= w.sum()
    P = np.zeros((m, n))
    for wk, (_, cells) in zip(w, paths):
        for i, j in cells:
            P[i, j] += wk
    return P
