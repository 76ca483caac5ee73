"""Learned linear step-to-step model.

Fits ``x[k+1] = Abar x[k] + Bbar u[k] + Cbar + eps`` to undisturbed walking
data by minimizing the per-coordinate worst-case residual (an LP), then
characterizes period-1 and period-2 orbits of the fitted map.
"""
from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import lp
from .hlip import DiscreteState
from .sets import BoxSet, contains, shift
from .textio import read_kv, write_kv

N_PARAMS = 8


class InsufficientData(ValueError):
    pass


class DegenerateModel(ArithmeticError):
    pass


class OrbitOutsideConstraints(ValueError):
    pass


class OrbitOnBoundary(UserWarning):
    pass


@dataclass
class StepDataset:
    """Rows of ``(p, v, u, p_next, v_next)`` plus the episode each row came from."""

    X: np.ndarray  # (N, 2) current pre-impact states
    U: np.ndarray  # (N,) step sizes
    Xn: np.ndarray  # (N, 2) next pre-impact states
    episode: np.ndarray  # (N,) episode ids
    tag: str = ""

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float).reshape(-1, 2)
        self.U = np.asarray(self.U, dtype=float).ravel()
        self.Xn = np.asarray(self.Xn, dtype=float).reshape(-1, 2)
        self.episode = np.asarray(self.episode, dtype=int).ravel()
        n = self.X.shape[0]
        if not (self.U.size == n and self.Xn.shape[0] == n and self.episode.size == n):
            raise ValueError("dataset columns have inconsistent lengths")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.U)) and np.all(np.isfinite(self.Xn))):
            raise ValueError("dataset contains non-finite entries")

    def __len__(self):
        return self.X.shape[0]

    def subset(self, idx) -> "StepDataset":
        idx = np.asarray(idx)
        return StepDataset(self.X[idx], self.U[idx], self.Xn[idx], self.episode[idx], self.tag)

    def split(self, holdout: float = 0.2, seed: int = 0):
        """Random train / held-out split of the triples."""
        rng = np.random.default_rng(seed)
        perm = rng.permutation(len(self))
        n_hold = int(round(holdout * len(self)))
        hold = np.sort(perm[:n_hold])
        train = np.sort(perm[n_hold:])
        return self.subset(train), self.subset(hold)

    def regressors(self) -> np.ndarray:
        """``[p, v, u, 1]`` per row; the full data matrix is this, block-diagonal."""
        return np.column_stack([self.X, self.U, np.ones(len(self))])


def extract_dataset(logs: Iterable, min_steps: int = 10, tag: str = "") -> StepDataset:
    """Consecutive-step triples from episode logs.

    Each log is a sequence of step records (or an object with ``records`` and
    an optional ``fell`` flag). Triples touching a pushed step are dropped, as
    are pairs straddling two episodes.
    """
    X, U, Xn, ep = [], [], [], []
    total = 0
    for e, log in enumerate(logs):
        records = getattr(log, "records", log)
        if getattr(log, "fell", False):
            raise InsufficientData(f"episode {e} ended in a fall")
        total += len(records)
        for a, b in zip(records, records[1:]):
            if a.F_push != 0.0 or b.F_push != 0.0:
                continue
            X.append((a.x_pre.p, a.x_pre.v))
            U.append(a.u_real)
            Xn.append((b.x_pre.p, b.x_pre.v))
            ep.append(e)
    if total < min_steps + 1 or len(X) < N_PARAMS + 1:
        raise InsufficientData(f"need at least {min_steps + 1} completed steps and {N_PARAMS + 1} triples, "
                               f"got {total} steps and {len(X)} triples")
    return StepDataset(np.array(X), np.array(U), np.array(Xn), np.array(ep), tag)


@dataclass
class S2SModel:
    Abar: np.ndarray
    Bbar: np.ndarray
    Cbar: np.ndarray
    dstar: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.Abar = np.asarray(self.Abar, dtype=float).reshape(2, 2)
        self.Bbar = np.asarray(self.Bbar, dtype=float).reshape(2, 1)
        self.Cbar = np.asarray(self.Cbar, dtype=float).reshape(2)
        self.dstar = np.asarray(self.dstar, dtype=float).reshape(2)
        if np.any(self.dstar < 0):
            raise ValueError("dstar must be nonnegative")

    def step(self, x, u) -> np.ndarray:
        return self.Abar @ np.asarray(x, dtype=float) + self.Bbar[:, 0] * u + self.Cbar

    def residuals(self, data: StepDataset) -> np.ndarray:
        pred = data.X @ self.Abar.T + np.outer(data.U, self.Bbar[:, 0]) + self.Cbar
        return data.Xn - pred

    def residual_box(self) -> BoxSet:
        return BoxSet.symmetric(self.dstar)

    def params(self) -> np.ndarray:
        """Parameter vector ordered as ``[A11, A12, A21, A22, B1, B2, C1, C2]``."""
        return np.concatenate([self.Abar.ravel(), self.Bbar.ravel(), self.Cbar])

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.Abar, self.Bbar, self.Cbar, self.dstar):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()[:16]

    def save(self, path) -> None:
        write_kv(path, {
            "abar": self.Abar.ravel(),
            "bbar": self.Bbar.ravel(),
            "cbar": self.Cbar,
            "dstar": self.dstar,
            **{f"meta.{k}": v for k, v in sorted(self.meta.items())},
        }, header="learned step-to-step model")

    @classmethod
    def load(cls, path) -> "S2SModel":
        kv = read_kv(path)
        meta = {k[5:]: v for k, v in kv.items() if k.startswith("meta.")}
        return cls(kv["abar"], kv["bbar"], kv["cbar"], kv["dstar"], meta)


def data_matrix(data: StepDataset) -> np.ndarray:
    """Stack the 2x8 blocks ``o_k`` of every triple, interleaving coordinates."""
    R = data.regressors()
    n = len(data)
    O = np.zeros((2 * n, N_PARAMS))
    O[0::2, [0, 1, 4, 6]] = R
    O[1::2, [2, 3, 5, 7]] = R
    return O


def fit_linf(data: StepDataset, meta: Optional[dict] = None) -> S2SModel:
    """Chebyshev (L-infinity) regression of the step map, one LP for both coordinates."""
    if len(data) < N_PARAMS + 1:
        raise InsufficientData(f"need at least {N_PARAMS + 1} triples, got {len(data)}")
    O = data_matrix(data)
    if np.linalg.matrix_rank(O) < N_PARAMS:
        raise InsufficientData("regressors are rank deficient; excite the step sizes and states more")
    n = len(data)
    target = data.Xn.ravel()  # interleaved like O
    # variables: q (8, free) then d (2, >= 0)
    sel = np.zeros((2 * n, 2))
    sel[0::2, 0] = 1.0
    sel[1::2, 1] = 1.0
    A_ub = np.block([[O, -sel], [-O, -sel]])
    b_ub = np.concatenate([target, -target])
    c = np.concatenate([np.zeros(N_PARAMS), np.ones(2)])
    bounds = [(None, None)] * N_PARAMS + [(0.0, None)] * 2
    sol = lp.solve(lp.LpProblem(c, A_ub, b_ub, bounds=bounds))
    if not sol.ok:
        raise RuntimeError(f"L-infinity fit LP returned {sol.status.value}")
    q, d = sol.x[:N_PARAMS], np.maximum(sol.x[N_PARAMS:], 0.0)
    model = S2SModel(q[:4], q[4:6], q[6:8], np.zeros(2), dict(meta or {}))
    # report the bound actually attained so every training residual lies inside
    model.dstar = np.maximum(d, np.max(np.abs(model.residuals(data)), axis=0))
    model.meta.setdefault("dataset_size", len(data))
    return model


def fit_least_squares(data: StepDataset) -> S2SModel:
    """Ordinary least squares on the same regressors; used as a comparison."""
    R = data.regressors()
    theta, *_ = np.linalg.lstsq(R, data.Xn, rcond=None)
    A = theta[:2].T
    B = theta[2]
    C = theta[3]
    m = S2SModel(A, B, C, np.zeros(2))
    m.dstar = np.max(np.abs(m.residuals(data)), axis=0)
    return m


@dataclass(frozen=True)
class OrbitSpec:
    period: int
    v_d: float
    u_star: tuple  # (u*,) for period 1, (u_L, u_R) for period 2
    x_star: tuple  # (DiscreteState,) or (x_L, x_R)

    @property
    def u(self) -> float:
        return self.u_star[0]

    @property
    def x(self) -> np.ndarray:
        return self.x_star[0].as_array()


def _solve_or_raise(M, rhs, what):
    if np.linalg.cond(M) > 1e12:
        raise DegenerateModel(f"{what} is singular; the learned model has a unit eigenvalue")
    return np.linalg.solve(M, rhs)


def p1_orbit(model: S2SModel, v_d: float, T: float) -> OrbitSpec:
    u_star = v_d * T
    x = _solve_or_raise(np.eye(2) - model.Abar, model.Bbar[:, 0] * u_star + model.Cbar, "I - Abar")
    return OrbitSpec(1, v_d, (u_star,), (DiscreteState.from_array(x),))


def p2_orbit(model: S2SModel, v_d: float, T: float, u_L: float) -> OrbitSpec:
    """Two-step orbit with left step ``u_L``; the right step makes the pair average ``v_d``."""
    A, B, C = model.Abar, model.Bbar[:, 0], model.Cbar
    u_sum = 2.0 * v_d * T
    u_R = u_sum - u_L
    M = np.eye(2) - A @ A
    base = B * u_sum + (A + np.eye(2)) @ C
    x_L = _solve_or_raise(M, (A @ B - B) * u_L + base, "I - Abar^2")
    x_R = _solve_or_raise(M, (A @ B - B) * u_R + base, "I - Abar^2")
    return OrbitSpec(2, v_d, (u_L, u_R), (DiscreteState.from_array(x_L), DiscreteState.from_array(x_R)))


def reparameterize_to_swing_input(model: S2SModel) -> S2SModel:
    """Model in terms of the swing-foot input ``u_sw = u - p`` (``Abar + Bbar [1 0]``)."""
    A = model.Abar + model.Bbar @ np.array([[1.0, 0.0]])
    return S2SModel(A, model.Bbar, model.Cbar, model.dstar, dict(model.meta, input="swing"))


def reparameterize_to_step_input(model: S2SModel) -> S2SModel:
    """Inverse of :func:`reparameterize_to_swing_input`."""
    A = model.Abar - model.Bbar @ np.array([[1.0, 0.0]])
    meta = dict(model.meta)
    meta.pop("input", None)
    return S2SModel(A, model.Bbar, model.Cbar, model.dstar, meta)


def error_constraint_sets(X: BoxSet, U: BoxSet, orbit: OrbitSpec) -> tuple[BoxSet, BoxSet]:
    """Constraint sets re-centred on the target orbit."""
    if orbit.period != 1:
        raise ValueError("error_constraint_sets takes a period-1 orbit; build per-leg sets for period 2")
    x_star = orbit.x
    u_star = np.array([orbit.u])
    if not contains(X, x_star) or not contains(U, u_star):
        raise OrbitOutsideConstraints(f"target orbit x*={x_star}, u*={orbit.u} lies outside the constraint sets")
    Xe, Ue = shift(X, x_star), shift(U, u_star)
    on_edge = np.any(np.isclose(Xe.lo, 0.0) | np.isclose(Xe.hi, 0.0)) or np.any(
        np.isclose(Ue.lo, 0.0) | np.isclose(Ue.hi, 0.0))
    if on_edge:
        warnings.warn("target orbit sits on the boundary of the constraint sets", OrbitOnBoundary, stacklevel=2)
    return Xe, Ue


def held_out_coverage(model: S2SModel, data: StepDataset, factor: float = 1.0) -> float:
    """Fraction of held-out triples whose residual lies inside ``factor * dstar``."""
    if len(data) == 0:
        return float("nan")
    r = np.abs(model.residuals(data))
    return float(np.mean(np.all(r <= factor * model.dstar + 1e-12, axis=1)))
