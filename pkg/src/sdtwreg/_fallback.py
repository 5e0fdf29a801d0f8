"""Pure-Python kernels, used when the compiled ``_ext`` module is unavailable.

Every function here has the same signature and semantics as its
counterpart in ``_ext.pyx``.  The DP loops are written cell by cell so they
follow the exact sequential order of the compiled kernels.
"""

import math

import numpy as np

INF = math.inf

METRICS = {"sqeuclidean": 0, "cosine": 1}


def softmin3(a, b, c, gamma):
    m = min(a, b, c)
    if m == INF:
        raise ValueError("softmin3: all three inputs are +inf")
    s = math.exp(-(a - m) / gamma) + math.exp(-(b - m) / gamma) + math.exp(-(c - m) / gamma)
    return m - gamma * math.log(s)


def sdtw_forward(D, gamma):
    m, n = D.shape
    R = np.full((m + 1, n + 1), INF)
    R[0, 0] = 0.0
    Rl = R.tolist()
    Dl = D.tolist()
    for i in range(1, m + 1):
        prev, cur, drow = Rl[i - 1], Rl[i], Dl[i - 1]
        for j in range(1, n + 1):
            cur[j] = drow[j - 1] + softmin3(prev[j - 1], prev[j], cur[j - 1], gamma)
    return np.array(Rl)


def sdtw_backward(D, R, gamma):
    m, n = D.shape
    if R.shape != (m + 1, n + 1):
        raise ValueError(f"DP table shape {R.shape} does not match cost matrix {D.shape}")
    # padded copies: row m+1 / column n+1 hold -inf so their weights vanish
    Rp = [[-INF] * (n + 2) for _ in range(m + 2)]
    Dp = [[0.0] * (n + 2) for _ in range(m + 2)]
    for i in range(1, m + 1):
        Rp[i][1 : n + 1] = R[i, 1:].tolist()
        Dp[i][1 : n + 1] = D[i - 1].tolist()
    Rp[m + 1][n + 1] = float(R[m, n])
    E = [[0.0] * (n + 2) for _ in range(m + 2)]
    E[m + 1][n + 1] = 1.0
    for i in range(m, 0, -1):
        for j in range(n, 0, -1):
            r = Rp[i][j]
            a = math.exp((Rp[i + 1][j] - r - Dp[i + 1][j]) / gamma)
            b = math.exp((Rp[i][j + 1] - r - Dp[i][j + 1]) / gamma)
            c = math.exp((Rp[i + 1][j + 1] - r - Dp[i + 1][j + 1]) / gamma)
            E[i][j] = a * E[i + 1][j] + b * E[i][j + 1] + c * E[i + 1][j + 1]
    return np.array([row[1 : n + 1] for row in E[1 : m + 1]])


def dtw_table(D):
    m, n = D.shape
    C = [[INF] * (n + 1) for _ in range(m + 1)]
    C[0][0] = 0.0
    Dl = D.tolist()
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            C[i][j] = Dl[i - 1][j - 1] + min(C[i - 1][j - 1], C[i - 1][j], C[i][j - 1])
    return np.array(C)


def pairwise_cost(X, Y, metric):
    if metric == 0:
        diff = X[:, None, :] - Y[None, :, :]
        return np.einsum("ijk,ijk->ij", diff, diff)
    return 2.0 - 2.0 * (X @ Y.T)


def cost_grads(X, Y, E, metric):
    """Chain the expected-alignment matrix through the frame cost."""
    if metric == 0:
        gx = 2.0 * (E.sum(axis=1)[:, None] * X - E @ Y)
        gy = 2.0 * (E.sum(axis=0)[:, None] * Y - E.T @ X)
    else:
        gx = -2.0 * (E @ Y)
        gy = -2.0 * (E.T @ X)
    return gx, gy


def sdtw_value_grad(X, Y, gamma, metric=0):
    D = pairwise_cost(X, Y, metric)
    R = sdtw_forward(D, gamma)
    E = sdtw_backward(D, R, gamma)
    gx, gy = cost_grads(X, Y, E, metric)
    return float(R[-1, -1]), R, E, gx, gy


def cidm(X, sigma, margin):
    """Contrastive-IDM value and gradient for window ``sigma``."""
    m = X.shape[0]
    idx = np.arange(m)
    gap = idx[:, None] - idx[None, :]
    W = gap.astype(np.float64) ** 2 + 1.0
    far = np.abs(gap) >= sigma
    diff = X[:, None, :] - X[None, :, :]
    Dx = np.einsum("ijk,ijk->ij", diff, diff)
    slack = margin - Dx
    active = far & (slack > 0)
    value = float(np.sum(np.where(active, W * slack, 0.0)) + np.sum(np.where(far, 0.0, Dx / W)))
    # d value / d D(i,j)
    coef = np.where(active, -W, 0.0) + np.where(far, 0.0, 1.0 / W)
    sym = coef + coef.T
    grad = 2.0 * (sym.sum(axis=1)[:, None] * X - sym @ X)
    return value, grad
