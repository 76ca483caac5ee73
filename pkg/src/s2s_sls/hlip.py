"""Hybrid linear inverted pendulum (H-LIP).

A point mass at constant height ``z0`` over a point foot. During single
support the horizontal state ``x = [p, v]`` (COM position relative to the
stance foot and its velocity) follows ``x' = A_c x + [0, F/m]`` with
``A_c = [[0, 1], [lam^2, 0]]`` and ``lam = sqrt(g / z0)``. At foot strike the
new stance foot sits ``u`` ahead, so ``p+ = p- - u``. Sampling pre-impact
states gives the step-to-step map ``x[k+1] = A x[k] + B u[k]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class HlipParams:
    z0: float
    T: float
    m: float
    g: float = 9.81

    def __post_init__(self):
        for name in ("z0", "T", "g", "m"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive and finite, got {val}")

    @property
    def lam(self) -> float:
        return float(np.sqrt(self.g / self.z0))


@dataclass(frozen=True)
class DiscreteState:
    """Pre-impact horizontal COM state relative to the stance foot."""

    p: float
    v: float

    def __post_init__(self):
        if not (np.isfinite(self.p) and np.isfinite(self.v)):
            raise ValueError(f"non-finite state ({self.p}, {self.v})")

    @classmethod
    def from_array(cls, x) -> "DiscreteState":
        x = np.asarray(x, dtype=float).ravel()
        return cls(float(x[0]), float(x[1]))

    def as_array(self) -> np.ndarray:
        return np.array([self.p, self.v])


def _as_vec(x) -> np.ndarray:
    if isinstance(x, DiscreteState):
        return x.as_array()
    return np.asarray(x, dtype=float).ravel()


def continuous_matrix(params: HlipParams) -> np.ndarray:
    return np.array([[0.0, 1.0], [params.lam**2, 0.0]])


def flow_matrix(t: float, params: HlipParams) -> np.ndarray:
    """``expm(A_c t)`` in closed form."""
    lam = params.lam
    ch, sh = np.cosh(lam * t), np.sinh(lam * t)
    return np.array([[ch, sh / lam], [lam * sh, ch]])


def ssp_flow(x0, t: float, params: HlipParams) -> DiscreteState:
    if t < 0:
        raise ValueError("t must be nonnegative")
    return DiscreteState.from_array(flow_matrix(t, params) @ _as_vec(x0))


def pushed_flow(x0, F_ext: float, t: float, params: HlipParams) -> DiscreteState:
    """Single-support flow under a constant horizontal force."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    # equilibrium of x' = A_c x + [0, F/m]
    x_eq = np.array([-F_ext / (params.m * params.lam**2), 0.0])
    x = flow_matrix(t, params) @ (_as_vec(x0) - x_eq) + x_eq
    return DiscreteState.from_array(x)


def s2s_matrices(params: HlipParams) -> tuple[np.ndarray, np.ndarray]:
    """``(A, B)`` of the pre-impact to pre-impact map with step size ``u``."""
    A = flow_matrix(params.T, params)
    B = -A @ np.array([[1.0], [0.0]])
    return A, B


def orbital_slope_sigma1(params: HlipParams) -> float:
    lam = params.lam
    return float(lam / np.tanh(0.5 * lam * params.T))


def push_to_disturbance(F_ext: float, params: HlipParams) -> np.ndarray:
    """Shift of the next pre-impact state caused by a push held over one whole step."""
    lam = params.lam
    sigma1 = orbital_slope_sigma1(params)
    scale = F_ext * np.sinh(params.T * lam) / (params.m * lam)
    return scale * np.array([1.0 / sigma1, 1.0])


def p1_orbit(params: HlipParams, v_d: float) -> tuple[DiscreteState, float]:
    """Period-1 orbit of the H-LIP itself: ``u* = v_d T``."""
    A, B = s2s_matrices(params)
    u_star = v_d * params.T
    x_star = np.linalg.solve(np.eye(2) - A, B[:, 0] * u_star)
    return DiscreteState.from_array(x_star), u_star


def _controllability(A, B) -> np.ndarray:
    n = A.shape[0]
    cols = [B]
    for _ in range(n - 1):
        cols.append(A @ cols[-1])
    return np.hstack(cols)


def deadbeat_gain(A, B) -> np.ndarray:
    """Gain placing every closed-loop pole of ``A + B K`` at zero (Ackermann).

    Returns a ``1 x n`` row.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    if B.shape[1] != 1:
        raise ValueError("deadbeat_gain supports a single input")
    n = A.shape[0]
    C = _controllability(A, B)
    if np.linalg.matrix_rank(C) < n:
        raise ValueError("(A, B) is not controllable")
    last = np.zeros((1, n))
    last[0, -1] = 1.0
    return -last @ np.linalg.solve(C, np.linalg.matrix_power(A, n))


class RiccatiDivergence(RuntimeError):
    pass


def dlqr_gain(A, B, Q, R, tol: float = 1e-10, max_iter: int = 100_000) -> np.ndarray:
    """Infinite-horizon discrete LQR gain ``K`` (``u = K x``) by Riccati iteration."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if np.any(np.linalg.eigvalsh(R) <= 0):
        raise ValueError("R must be positive definite")
    P = Q.copy()
    for _ in range(max_iter):
        BtP = B.T @ P
        gain = np.linalg.solve(R + BtP @ B, BtP @ A)
        P_next = A.T @ P @ A - A.T @ P @ B @ gain + Q
        P_next = 0.5 * (P_next + P_next.T)
        if not np.all(np.isfinite(P_next)):
            raise RiccatiDivergence("Riccati iteration diverged")
        if np.max(np.abs(P_next - P)) <= tol * max(1.0, np.max(np.abs(P_next))):
            P = P_next
            BtP = B.T @ P
            return -np.linalg.solve(R + BtP @ B, BtP @ A)
        P = P_next
    raise RiccatiDivergence(f"Riccati iteration did not converge in {max_iter} iterations")


def riccati_residual(A, B, Q, R, K) -> float:
    """Residual of the Riccati equation for the ``P`` implied by gain ``K``."""
    A = np.atleast_2d(A)
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    Q = np.atleast_2d(Q)
    R = np.atleast_2d(R)
    Acl = A + B @ K
    # P solves the closed-loop Lyapunov equation P = Acl' P Acl + Q + K' R K
    n = A.shape[0]
    lhs = np.eye(n * n) - np.kron(Acl.T, Acl.T)
    P = np.linalg.solve(lhs, (Q + K.T @ R @ K).reshape(-1, order="F")).reshape(n, n, order="F")
    rhs = A.T @ P @ A - A.T @ P @ B @ np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A) + Q
    return float(np.max(np.abs(P - rhs)))


def hlip_stepping(x, x_ref, u_ref: float, K) -> float:
    """Step size ``u_ref + K (x - x_ref)``."""
    K = np.asarray(K, dtype=float).reshape(-1)
    return float(u_ref + K @ (_as_vec(x) - _as_vec(x_ref)))
