"""Central finite differences and the error measure used to compare gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import as_frames, self_distance_matrix


def numeric_grad(f, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x`` (any shape)."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        fp = f(x)
        flat[k] = orig - h
        fm = f(x)
        flat[k] = orig
        gflat[k] = (fp - fm) / (2.0 * h)
    return g


def max_relative_error(analytic, numeric, mask=None) -> tuple[float, int]:
    """``max |a - n| / max |n|`` over unmasked entries, and the worst flat index.

    The denominator is the largest numeric-gradient magnitude, so near-zero
    components are judged on the scale of the whole gradient.
    """
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    keep = np.ones(a.size, bool) if mask is None else np.asarray(mask, bool).reshape(-1)
    if not keep.any():
        return 0.0, -1
    diff = np.where(keep, np.abs(a - n), -1.0)
    scale = max(float(np.max(np.abs(n[keep]))), 1e-300)
    worst = int(np.argmax(diff))
    return float(diff[worst] / scale), worst


def kink_frames(x, margin: float, tol: float) -> np.ndarray:
    """Boolean mask of frames in some pair whose self-distance is within
    ``tol`` of ``margin`` (where the hinge is not differentiable)."""
    D = self_distance_matrix(x)
    near = np.abs(D - margin) < tol
    np.fill_diagonal(near, False)
    return near.any(axis=1)


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst: tuple | None
    n_checked: int
    n_excluded: int
    passed: bool

    def as_dict(self) -> dict:
        return {
            "max_rel_error": self.max_rel_error,
            "worst": list(self.worst) if self.worst else None,
            "n_checked": self.n_checked,
            "n_excluded": self.n_excluded,
            "passed": self.passed,
        }


def check_pair_gradient(loss_fn, a, b, h: float, tol: float, exclude_a=None, exclude_b=None) -> GradCheckReport:
    """Compare ``loss_fn(a, b) -> (value, grad_a, grad_b)`` with central differences.

    ``exclude_a``/``exclude_b`` are per-frame masks of rows left out.
    """
    A, B = as_frames(a).copy(), as_frames(b).copy()
    _, ga, gb = loss_fn(A, B)
    na = numeric_grad(lambda x: loss_fn(x, B)[0], A, h)
    nb = numeric_grad(lambda y: loss_fn(A, y)[0], B, h)
    ma = np.ones_like(A, bool) if exclude_a is None else ~np.repeat(np.asarray(exclude_a)[:, None], A.shape[1], 1)
    mb = np.ones_like(B, bool) if exclude_b is None else ~np.repeat(np.asarray(exclude_b)[:, None], B.shape[1], 1)
    analytic = np.concatenate([ga.reshape(-1), gb.reshape(-1)])
    numeric = np.concatenate([na.reshape(-1), nb.reshape(-1)])
    mask = np.concatenate([ma.reshape(-1), mb.reshape(-1)])
    err, k = max_relative_error(analytic, numeric, mask)
    worst = None
    if k >= 0:
        if k < A.size:
            worst = ("a", *np.unravel_index(k, A.shape))
        else:
            worst = ("b", *np.unravel_index(k - A.size, B.shape))
        worst = tuple(int(v) if not isinstance(v, str) else v for v in worst)
    return GradCheckReport(err, worst, int(mask.sum()), int((~mask).sum()), err <= tol)
