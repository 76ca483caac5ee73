"""Independent reference computations used by the tests.

Nothing here imports the package's numerical routines, so agreement with the
package is a genuine cross-check.
"""
from __future__ import annotations

import itertools

import numpy as np


def lp_vertex_enumeration(c, A_ub, b_ub, A_eq=None, b_eq=None, lo=None, hi=None, tol=1e-9):
    """Minimum of a bounded LP by enumerating basic feasible points.

    Returns ``(objective, x)`` or ``(None, None)`` when no vertex is feasible.
    Bounds must make the feasible region bounded.
    """
    c = np.asarray(c, float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, float)
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, float)
    lo = np.zeros(n) if lo is None else np.asarray(lo, float)
    hi = np.full(n, np.inf) if hi is None else np.asarray(hi, float)
    rows, rhs = [A_ub], [b_ub]
    eye = np.eye(n)
    fin_lo, fin_hi = np.isfinite(lo), np.isfinite(hi)
    rows += [-eye[fin_lo], eye[fin_hi]]
    rhs += [-lo[fin_lo], hi[fin_hi]]
    G, g = np.vstack(rows), np.concatenate(rhs)
    k = n - A_eq.shape[0]
    combos = np.array(list(itertools.combinations(range(G.shape[0]), k)), dtype=int).reshape(-1, k)
    M = np.concatenate([np.broadcast_to(A_eq, (len(combos),) + A_eq.shape), G[combos]], axis=1)
    r = np.concatenate([np.broadcast_to(b_eq, (len(combos), b_eq.size)), g[combos]], axis=1)
    ok = np.abs(np.linalg.det(M)) > 1e-12
    if not np.any(ok):
        return None, None
    X = np.linalg.solve(M[ok], r[ok][..., None])[..., 0]
    feas = np.all(X @ G.T <= g + tol, axis=1)
    if A_eq.shape[0]:
        feas &= np.all(np.abs(X @ A_eq.T - b_eq) <= tol, axis=1)
    if not np.any(feas):
        return None, None
    X = X[feas]
    vals = X @ c
    i = int(np.argmin(vals))
    best, best_x = float(vals[i]), X[i]
    return best, best_x


def random_lp(rng, n_max=6, m_max=10, with_eq=True, feasible=True):
    """Random box-bounded LP; feasible by construction when ``feasible``."""
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    x0 = rng.uniform(-1, 1, n)
    A = rng.normal(size=(m, n))
    slack = rng.uniform(0, 1, m)
    b = A @ x0 + (slack if feasible else -slack - 1.0)
    if not feasible:
        # force a contradiction: row and its negation
        A = np.vstack([A, -A[:1]])
        b = np.concatenate([b, -b[:1] - 1.0])
    A_eq = b_eq = None
    if with_eq and n >= 2 and rng.random() < 0.3:
        A_eq = rng.normal(size=(1, n))
        b_eq = A_eq @ x0
    lo = np.full(n, -3.0)
    hi = np.full(n, 3.0)
    c = rng.normal(size=n)
    return c, A, b, A_eq, b_eq, lo, hi


def rk4(f, y0, t1, n_steps):
    """Classical RK4 from 0 to ``t1`` in ``n_steps`` equal steps.

    Works on batches: ``y0`` may be ``(N, d)`` with ``t1`` of shape ``(N,)``.
    Time is rescaled to ``s in [0, 1]`` so every batch member uses the same
    number of steps regardless of its horizon.
    """
    y = np.asarray(y0, float)
    t1 = np.asarray(t1, float)
    scale = t1[..., None] if y.ndim > 1 else t1
    h = 1.0 / n_steps

    def g(s, y):
        return scale * f(s * t1, y)

    s = 0.0
    for _ in range(n_steps):
        k1 = g(s, y)
        k2 = g(s + h / 2, y + h / 2 * k1)
        k3 = g(s + h / 2, y + h / 2 * k2)
        k4 = g(s + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        s += h
    return y


def lip_rhs(lam2, accel=0.0):
    """``p'' = lam^2 p + a`` for a batch of ``lam^2`` and constant accelerations ``a``."""
    lam2 = np.asarray(lam2, float)
    accel = np.asarray(accel, float)

    def f(t, y):
        return np.stack([y[..., 1], lam2 * y[..., 0] + accel], axis=-1)

    return f


def conv_response(phi_x, phi_u, ws):
    """Closed-loop response as a direct convolution ``e_k = sum_i Phi[i] w_{k-i}``.

    ``phi_x[0]`` is ``Phi_x[1]`` (the identity), acting on ``w_{k-1}``;
    ``ws[0]`` is the initial error ``e_0``.
    """
    nf = len(phi_x)
    T = len(ws)
    e, u = [], []
    for k in range(T):
        ek = np.zeros(phi_x[0].shape[0])
        uk = np.zeros(phi_u[0].shape[0])
        for i in range(1, nf + 1):
            j = k - i + 1
            if 0 <= j < T:
                ek = ek + phi_x[i - 1] @ ws[j]
                uk = uk + phi_u[i - 1] @ ws[j]
        e.append(ek)
        u.append(uk)
    return np.array(e), np.array(u)
